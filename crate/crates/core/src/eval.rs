//! Subject-level metrics, multi-seed summaries and attention rankings.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::units::Granularity;

/// Mean PD probability at or above which a subject is called PD.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Default length of an attention ranking.
pub const TOP_UNITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub speaker_id: String,
    pub pd_prob: f64,
    pub true_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub speaker_id: String,
    pub mean_pd_prob: f64,
    pub predicted: Label,
    pub true_label: Label,
}

/// Averages segment probabilities per speaker. Output is sorted by speaker id.
pub fn aggregate_subjects(segments: &[SegmentPrediction]) -> Result<Vec<SubjectPrediction>> {
    let mut acc: BTreeMap<&str, (Vec<f64>, Label)> = BTreeMap::new();
    for s in segments {
        let entry = acc.entry(&s.speaker_id).or_insert_with(|| (Vec::new(), s.true_label));
        if entry.1 != s.true_label {
            return Err(Error::Consistency(format!("speaker {} has conflicting labels", s.speaker_id)));
        }
        entry.0.push(s.pd_prob);
    }
    Ok(acc
        .into_iter()
        .map(|(speaker, (mut probs, true_label))| {
            // Sorted summation keeps the mean independent of segment order.
            probs.sort_by(f64::total_cmp);
            let mean = probs.iter().sum::<f64>() / probs.len() as f64;
            SubjectPrediction {
                speaker_id: speaker.to_string(),
                mean_pd_prob: mean,
                predicted: if mean >= DECISION_THRESHOLD { Label::PD } else { Label::HC },
                true_label,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub auroc: f64,
    pub auprc: f64,
    pub n_subjects: usize,
}

/// Accuracy and F1 (PD positive); always defined for a non-empty set.
pub fn accuracy_f1(subjects: &[SubjectPrediction]) -> Result<(f64, f64)> {
    if subjects.is_empty() {
        return Err(Error::EmptyInput("no subjects to score".into()));
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for s in subjects {
        match (s.predicted, s.true_label) {
            (Label::PD, Label::PD) => tp += 1,
            (Label::PD, Label::HC) => fp += 1,
            (Label::HC, Label::PD) => fneg += 1,
            (Label::HC, Label::HC) => {}
        }
        correct += usize::from(s.predicted == s.true_label);
    }
    let accuracy = correct as f64 / subjects.len() as f64;
    let denom = 2 * tp + fp + fneg;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok((accuracy, f1))
}

/// Probability that a random positive outranks a random negative, ties
/// counted as one half. Computed from average ranks.
pub fn auroc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let n_pos = positives.iter().filter(|p| **p).count();
    let n_neg = positives.len() - n_pos;
    if scores.len() != positives.len() {
        return Err(Error::Consistency("scores and labels differ in length".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if positives[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Non-interpolated average precision: sum over distinct score thresholds
/// (descending) of precision times the recall gained at that threshold.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let n_pos = positives.iter().filter(|p| **p).count();
    if scores.len() != positives.len() {
        return Err(Error::Consistency("scores and labels differ in length".into()));
    }
    if n_pos == 0 || n_pos == positives.len() {
        return Err(Error::Undefined("AUPRC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut gained = 0;
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            seen += 1;
            gained += usize::from(positives[order[i]]);
            i += 1;
        }
        tp += gained;
        if gained > 0 {
            ap += (gained as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Full report. When only one class is present, AUROC/AUPRC are undefined and
/// an error is returned; use [`accuracy_f1`] for the threshold metrics alone.
pub fn compute_metrics(subjects: &[SubjectPrediction]) -> Result<MetricsReport> {
    let (accuracy, f1) = accuracy_f1(subjects)?;
    let scores: Vec<f64> = subjects.iter().map(|s| s.mean_pd_prob).collect();
    let pos: Vec<bool> = subjects.iter().map(|s| s.true_label == Label::PD).collect();
    Ok(MetricsReport {
        accuracy,
        f1,
        auroc: auroc(&scores, &pos)?,
        auprc: average_precision(&scores, &pos)?,
        n_subjects: subjects.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample (n-1) standard deviation.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientSeeds(values.len()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub auroc: MeanStd,
    pub auprc: MeanStd,
    pub seeds: usize,
}

pub fn seed_summary(reports: &[MetricsReport]) -> Result<SeedSummary> {
    if reports.len() < 2 {
        return Err(Error::InsufficientSeeds(reports.len()));
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(SeedSummary {
        accuracy: col(|r| r.accuracy)?,
        f1: col(|r| r.f1)?,
        auroc: col(|r| r.auroc)?,
        auprc: col(|r| r.auprc)?,
        seeds: reports.len(),
    })
}

/// Two plain-text tables: AUROC/AUPRC and F1/ACC per granularity.
pub fn format_tables(rows: &[(Granularity, SeedSummary)]) -> String {
    let mut out = String::new();
    let mut table = |title: &str, head: [&str; 2], cells: &dyn Fn(&SeedSummary) -> [MeanStd; 2]| {
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "{:<12} {:>17} {:>17}", "Granularity", head[0], head[1]);
        for (g, s) in rows {
            let [a, b] = cells(s);
            let name = capitalize(g.as_str());
            let _ = writeln!(out, "{:<12} {:>17} {:>17}", name, a.to_string(), b.to_string());
        }
        out.push('\n');
    };
    table("Model Performance - AUROC and AUPRC", ["AUROC", "AUPRC"], &|s| [s.auroc, s.auprc]);
    table("Model Performance - F1 and ACC", ["F1", "ACC"], &|s| [s.f1, s.accuracy]);
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Attention of one evaluated sequence: per head, weights over its valid steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAttention {
    pub utterance_id: String,
    pub labels: Vec<String>,
    /// `heads x len`; entries past `labels.len()` (padding) are ignored.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSalience {
    pub label: String,
    /// Sequences in which this label holds the most-attended step.
    pub top1_count: usize,
    pub total_mass: f64,
    pub mean_weight: f64,
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub granularity: Granularity,
    pub sequences: usize,
    /// Sum of all masses before truncation.
    pub total_mass: f64,
    pub entries: Vec<UnitSalience>,
}

/// Ranks unit labels by the head-averaged attention mass they receive.
pub fn attention_report(sequences: &[SequenceAttention], granularity: Granularity, top: usize) -> Result<AttentionReport> {
    let mut acc: HashMap<&str, UnitSalience> = HashMap::new();
    let mut grand_total = 0.0;
    for seq in sequences {
        let len = seq.labels.len();
        if len == 0 {
            continue;
        }
        if seq.weights.is_empty() || seq.weights.iter().any(|w| w.len() < len) {
            return Err(Error::Consistency(format!(
                "{}: attention rows shorter than {} labels",
                seq.utterance_id, len
            )));
        }
        let heads = seq.weights.len() as f64;
        let avg: Vec<f64> = (0..len)
            .map(|t| seq.weights.iter().map(|w| w[t]).sum::<f64>() / heads)
            .collect();
        let mut argmax = 0;
        for t in 1..len {
            if avg[t] > avg[argmax] {
                argmax = t;
            }
        }
        for (t, label) in seq.labels.iter().enumerate() {
            let e = acc.entry(label).or_insert_with(|| UnitSalience {
                label: label.clone(),
                top1_count: 0,
                total_mass: 0.0,
                mean_weight: 0.0,
                occurrences: 0,
            });
            e.total_mass += avg[t];
            e.occurrences += 1;
            grand_total += avg[t];
        }
        acc.get_mut(seq.labels[argmax].as_str()).unwrap().top1_count += 1;
    }
    let mut entries: Vec<UnitSalience> = acc
        .into_values()
        .map(|mut e| {
            e.mean_weight = e.total_mass / e.occurrences as f64;
            e
        })
        .collect();
    entries.sort_by(|a, b| b.total_mass.total_cmp(&a.total_mass).then_with(|| a.label.cmp(&b.label)));
    entries.truncate(top);
    Ok(AttentionReport {
        granularity,
        sequences: sequences.iter().filter(|s| !s.labels.is_empty()).count(),
        total_mass: grand_total,
        entries,
    })
}

/// CSV heat-map rows: `granularity,rank,label,total_mass,mean_weight,top1_count`.
pub fn attention_csv(reports: &[AttentionReport]) -> String {
    let mut out = String::from("granularity,rank,label,total_mass,mean_weight,top1_count,occurrences\n");
    for r in reports {
        for (i, e) in r.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{}",
                r.granularity,
                i + 1,
                e.label,
                e.total_mass,
                e.mean_weight,
                e.top1_count,
                e.occurrences
            );
        }
    }
    out
}
