//! Speech segmentation from per-frame speech probabilities.
//!
//! Frames whose probability reaches the threshold are grouped into runs,
//! runs separated by short dips are fused, and the resulting segments are
//! then split or merged so that every batch fed downstream spans at most
//! `max_segment_s` seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when comparing segment durations against the limit.
const DURATION_EPS: f64 = 1e-9;

/// Amplitude mapped to speech probability 1 by [`rms_prob`].
const RMS_FULL_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameProbSeries {
    probs: Vec<f64>,
    frame_hop: usize,
    sample_rate: usize,
}

impl FrameProbSeries {
    pub fn new(probs: Vec<f64>, frame_hop: usize, sample_rate: usize) -> Result<Self> {
        if frame_hop == 0 || sample_rate == 0 {
            return Err(Error::InvalidConfig(
                "frame_hop and sample_rate must be positive".into(),
            ));
        }
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data(format!(
                "frame {i}: speech probability {} outside [0, 1]",
                probs[i]
            )));
        }
        Ok(FrameProbSeries {
            probs,
            frame_hop,
            sample_rate,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn frame_hop(&self) -> usize {
        self.frame_hop
    }

    pub fn sample_rate(&self) -> usize {
        self.sample_rate
    }

    pub fn frame_seconds(&self) -> f64 {
        self.frame_hop as f64 / self.sample_rate as f64
    }

    /// Start time of frame `i`; frame `i` covers `[i*hop, (i+1)*hop) / rate`.
    fn frame_time(&self, i: usize) -> f64 {
        (i * self.frame_hop) as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub start_s: f64,
    pub end_s: f64,
}

impl SpeechSegment {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        SpeechSegment { start_s, end_s }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterConfig {
    pub threshold: f64,
    pub max_segment_s: f64,
    pub min_gap_s: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            threshold: 0.5,
            max_segment_s: 30.0,
            min_gap_s: 0.1,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(self.max_segment_s > 0.0) {
            return Err(Error::InvalidConfig("max_segment_s must be positive".into()));
        }
        if !(self.min_gap_s >= 0.0) {
            return Err(Error::InvalidConfig("min_gap_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// Maximal runs of frames at or above the threshold, with short gaps fused.
pub fn threshold_segments(series: &FrameProbSeries, cfg: &SegmenterConfig) -> Result<Vec<SpeechSegment>> {
    cfg.validate()?;
    if series.probs.is_empty() {
        return Err(Error::EmptyInput("speech probability series".into()));
    }

    // Frame-index runs [start, end).
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &p) in series.probs.iter().enumerate() {
        match (p >= cfg.threshold, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, series.probs.len()));
    }

    let mut fused: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        if let Some(last) = fused.last_mut() {
            let gap = (run.0 - last.1) as f64 * series.frame_seconds();
            if gap < cfg.min_gap_s {
                last.1 = run.1;
                continue;
            }
        }
        fused.push(run);
    }

    Ok(fused
        .into_iter()
        .map(|(s, e)| SpeechSegment::new(series.frame_time(s), series.frame_time(e)))
        .collect())
}

/// Divides every segment longer than `max_segment_s` into `ceil(d / max)` equal parts.
pub fn split_long(segments: &[SpeechSegment], max_segment_s: f64) -> Vec<SpeechSegment> {
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let d = seg.duration();
        if d <= max_segment_s + DURATION_EPS {
            out.push(*seg);
            continue;
        }
        let parts = (d / max_segment_s).ceil() as usize;
        for k in 0..parts {
            let start = seg.start_s + d * k as f64 / parts as f64;
            let end = if k + 1 == parts {
                seg.end_s
            } else {
                seg.start_s + d * (k + 1) as f64 / parts as f64
            };
            out.push(SpeechSegment::new(start, end));
        }
    }
    out
}

/// Greedy left-to-right fusion of adjacent segments while the fused span
/// (first start to last end) stays within `max_segment_s`.
pub fn merge_short(segments: &[SpeechSegment], max_segment_s: f64) -> Result<Vec<SpeechSegment>> {
    if let Some(seg) = segments
        .iter()
        .find(|s| s.duration() > max_segment_s + DURATION_EPS)
    {
        return Err(Error::Precondition(format!(
            "segment [{}, {}] exceeds {max_segment_s} s; split before merging",
            seg.start_s, seg.end_s
        )));
    }
    let mut out: Vec<SpeechSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match out.last_mut() {
            Some(cur) if seg.end_s - cur.start_s <= max_segment_s + DURATION_EPS => {
                cur.end_s = seg.end_s;
            }
            _ => out.push(*seg),
        }
    }
    Ok(out)
}

/// Threshold, split, then merge: the full batching policy.
pub fn segment(series: &FrameProbSeries, cfg: &SegmenterConfig) -> Result<Vec<SpeechSegment>> {
    let raw = threshold_segments(series, cfg)?;
    merge_short(&split_long(&raw, cfg.max_segment_s), cfg.max_segment_s)
}

/// Energy-based stand-in for a pretrained VAD: per-window RMS mapped through
/// `min(1, rms / 0.05)`. A trailing partial window forms its own frame.
pub fn rms_prob(waveform: &[f64], window: usize, sample_rate: usize) -> Result<FrameProbSeries> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be positive".into()));
    }
    if waveform.is_empty() {
        return Err(Error::EmptyInput("waveform".into()));
    }
    let probs = waveform
        .chunks(window)
        .map(|w| {
            let rms = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
            (rms / RMS_FULL_SCALE).min(1.0)
        })
        .collect();
    FrameProbSeries::new(probs, window, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn series(probs: Vec<f64>) -> FrameProbSeries {
        FrameProbSeries::new(probs, 512, 16_000).unwrap()
    }

    #[test]
    fn silence_yields_nothing() {
        let segs = threshold_segments(&series(vec![0.0; 100]), &SegmenterConfig::default()).unwrap();
        assert!(segs.is_empty());
    }

    #[test]
    fn full_speech_spans_everything() {
        let segs = threshold_segments(&series(vec![1.0; 100]), &SegmenterConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_abs_diff_eq!(segs[0].start_s, 0.0);
        assert_abs_diff_eq!(segs[0].end_s, 3.2, epsilon = 1e-12);
    }

    #[test]
    fn short_dip_is_fused() {
        let mut probs = vec![0.9; 10];
        probs.extend([0.1; 2]);
        probs.extend([0.9; 10]);
        let segs = threshold_segments(&series(probs), &SegmenterConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_abs_diff_eq!(segs[0].end_s, 22.0 * 0.032, epsilon = 1e-12);
    }

    #[test]
    fn long_dip_separates() {
        let mut probs = vec![0.9; 10];
        probs.extend([0.1; 4]); // 0.128 s
        probs.extend([0.9; 10]);
        let segs = threshold_segments(&series(probs), &SegmenterConfig::default()).unwrap();
        assert_eq!(segs.len(), 2);
        assert_abs_diff_eq!(segs[0].end_s, 0.32, epsilon = 1e-12);
        assert_abs_diff_eq!(segs[1].start_s, 14.0 * 0.032, epsilon = 1e-12);
    }

    #[test]
    fn threshold_is_inclusive() {
        let segs = threshold_segments(&series(vec![0.5, 0.49]), &SegmenterConfig::default()).unwrap();
        assert_eq!(segs, vec![SpeechSegment::new(0.0, 0.032)]);
    }

    #[test]
    fn empty_series_is_rejected() {
        let err = threshold_segments(&series(vec![]), &SegmenterConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn out_of_range_prob_is_rejected() {
        assert!(FrameProbSeries::new(vec![1.5], 512, 16_000).is_err());
        assert!(FrameProbSeries::new(vec![0.5], 0, 16_000).is_err());
    }

    #[test]
    fn split_into_equal_parts() {
        let out = split_long(&[SpeechSegment::new(0.0, 70.0)], 30.0);
        assert_eq!(out.len(), 3);
        for seg in &out {
            assert_abs_diff_eq!(seg.duration(), 70.0 / 3.0, epsilon = 1e-9);
        }
        assert_eq!(out[2].end_s, 70.0);

        let out = split_long(&[SpeechSegment::new(0.0, 30.0)], 30.0);
        assert_eq!(out, vec![SpeechSegment::new(0.0, 30.0)]);

        let out = split_long(&[SpeechSegment::new(5.0, 36.0)], 30.0);
        assert_eq!(out, vec![SpeechSegment::new(5.0, 20.5), SpeechSegment::new(20.5, 36.0)]);
    }

    #[test]
    fn merge_examples() {
        let out = merge_short(&[SpeechSegment::new(0.0, 10.0), SpeechSegment::new(10.0, 15.0)], 30.0).unwrap();
        assert_eq!(out, vec![SpeechSegment::new(0.0, 15.0)]);

        let input = [SpeechSegment::new(0.0, 20.0), SpeechSegment::new(20.0, 35.0)];
        assert_eq!(merge_short(&input, 30.0).unwrap(), input.to_vec());

        let input = [
            SpeechSegment::new(0.0, 12.0),
            SpeechSegment::new(12.0, 24.0),
            SpeechSegment::new(24.0, 36.0),
        ];
        assert_eq!(
            merge_short(&input, 30.0).unwrap(),
            vec![SpeechSegment::new(0.0, 24.0), SpeechSegment::new(24.0, 36.0)]
        );
    }

    #[test]
    fn merge_rejects_oversized_input() {
        let err = merge_short(&[SpeechSegment::new(0.0, 31.0)], 30.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn rms_examples() {
        let s = rms_prob(&[0.0; 1024], 512, 16_000).unwrap();
        assert_eq!(s.probs(), &[0.0, 0.0]);
        let square: Vec<f64> = (0..1024).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(rms_prob(&square, 512, 16_000).unwrap().probs(), &[1.0, 1.0]);
        let s = rms_prob(&[0.025; 1024], 512, 16_000).unwrap();
        for p in s.probs() {
            assert_abs_diff_eq!(*p, 0.5, epsilon = 1e-12);
        }
        assert!(matches!(rms_prob(&[], 512, 16_000), Err(Error::EmptyInput(_))));
        assert!(rms_prob(&[0.1], 0, 16_000).is_err());
    }

    fn well_formed(segs: &[SpeechSegment]) -> bool {
        segs.iter().all(|s| s.end_s > s.start_s) && segs.windows(2).all(|w| w[0].end_s <= w[1].start_s)
    }

    fn arb_segments() -> impl Strategy<Value = Vec<SpeechSegment>> {
        prop::collection::vec((0.0f64..5.0, 0.01f64..100.0), 0..12).prop_map(|pairs| {
            let mut t = 0.0;
            pairs
                .into_iter()
                .map(|(gap, dur)| {
                    let s = SpeechSegment::new(t + gap, t + gap + dur);
                    t = s.end_s;
                    s
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_bounds_and_conserves(segs in arb_segments(), max in 1.0f64..40.0) {
            let out = split_long(&segs, max);
            prop_assert!(well_formed(&out));
            prop_assert!(out.iter().all(|s| s.duration() <= max + 1e-9));
            let total_in: f64 = segs.iter().map(SpeechSegment::duration).sum();
            let total_out: f64 = out.iter().map(SpeechSegment::duration).sum();
            prop_assert!((total_in - total_out).abs() <= 1e-9);
        }

        #[test]
        fn merge_is_idempotent(segs in arb_segments(), max in 1.0f64..40.0) {
            let split = split_long(&segs, max);
            let once = merge_short(&split, max).unwrap();
            let twice = merge_short(&once, max).unwrap();
            prop_assert!(well_formed(&once));
            prop_assert!(once.iter().all(|s| s.duration() <= max + 1e-9));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn thresholding_is_well_formed(probs in prop::collection::vec(0.0f64..=1.0, 1..200), thr in 0.05f64..0.95) {
            let cfg = SegmenterConfig { threshold: thr, ..Default::default() };
            let s = series(probs.clone());
            let segs = threshold_segments(&s, &cfg).unwrap();
            prop_assert!(well_formed(&segs));
            // Every frame at/above threshold is covered; sub-threshold frames only inside fused gaps.
            let hop = s.frame_seconds();
            for (i, p) in probs.iter().enumerate() {
                let mid = (i as f64 + 0.5) * hop;
                let covered = segs.iter().any(|g| g.start_s <= mid && mid < g.end_s);
                if *p >= thr {
                    prop_assert!(covered);
                }
            }
            for g in &segs {
                let first = (g.start_s / hop).round() as usize;
                let last = (g.end_s / hop).round() as usize - 1;
                prop_assert!(probs[first] >= thr && probs[last] >= thr);
            }
        }
    }
}
