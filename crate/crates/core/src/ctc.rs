//! CTC forced alignment.
//!
//! A target phoneme sequence `s1..sL` is expanded into the state chain
//! `∅ s1 ∅ s2 … sL ∅`. The Viterbi pass finds the best monotone path through
//! that chain, moving per frame by stay / advance-one / advance-two, where the
//! skip is allowed only into a non-blank state whose label differs from the
//! label two states back.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{compose, AlignedUnit, Granularity};

/// Token that marks the blank entry in a symbol table file.
pub const BLANK_TOKEN: &str = "<blank>";

/// Per-row log-sum-exp tolerance for a valid emission matrix.
pub const LOGSUMEXP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct EmissionMatrix {
    logprobs: Vec<f64>,
    frames: usize,
    frame_dur_s: f64,
    symbols: Vec<String>,
    blank_index: usize,
    index: HashMap<String, usize>,
}

impl EmissionMatrix {
    /// `logprobs` is row-major `frames x symbols.len()`.
    pub fn new(logprobs: Vec<f64>, frame_dur_s: f64, symbols: Vec<String>, blank_index: usize) -> Result<Self> {
        let v = symbols.len();
        if v == 0 {
            return Err(Error::Data("empty symbol table".into()));
        }
        if blank_index >= v {
            return Err(Error::Data(format!("blank index {blank_index} outside vocabulary of {v}")));
        }
        if !(frame_dur_s > 0.0) {
            return Err(Error::InvalidConfig("frame duration must be positive".into()));
        }
        if logprobs.is_empty() || !logprobs.len().is_multiple_of(v) {
            return Err(Error::Data(format!(
                "{} log-probabilities do not form whole rows of {v}",
                logprobs.len()
            )));
        }
        let mut index = HashMap::with_capacity(v);
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate symbol `{s}`")));
            }
        }
        let frames = logprobs.len() / v;
        for (t, row) in logprobs.chunks_exact(v).enumerate() {
            let lse = logsumexp(row);
            if !lse.is_finite() || lse.abs() > LOGSUMEXP_TOLERANCE {
                return Err(Error::Data(format!(
                    "frame {t}: log-probabilities sum to {lse} in log space, expected 0"
                )));
            }
        }
        Ok(EmissionMatrix {
            logprobs,
            frames,
            frame_dur_s,
            symbols,
            blank_index,
            index,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn frame_dur_s(&self) -> f64 {
        self.frame_dur_s
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    #[inline]
    pub fn logprob(&self, t: usize, v: usize) -> f64 {
        self.logprobs[t * self.symbols.len() + v]
    }
}

pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Reads a symbol table: one symbol per line, with [`BLANK_TOKEN`] marking the blank.
pub fn load_symbols(path: impl AsRef<Path>) -> Result<(Vec<String>, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_symbols(&text)
}

pub fn parse_symbols(text: &str) -> Result<(Vec<String>, usize)> {
    let symbols: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    let blank = symbols
        .iter()
        .position(|s| s == BLANK_TOKEN)
        .ok_or_else(|| Error::Data(format!("symbol table has no `{BLANK_TOKEN}` entry")))?;
    Ok((symbols, blank))
}

/// One word of a target transcript, as stored in target NDJSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetWord {
    pub word: String,
    pub phonemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetSequence {
    pub phonemes: Vec<String>,
    /// Half-open `[start, end)` phoneme index ranges, one per word.
    pub word_spans: Vec<(usize, usize)>,
    pub word_texts: Vec<String>,
}

impl TargetSequence {
    pub fn from_words(words: &[TargetWord]) -> Result<Self> {
        let mut seq = TargetSequence::default();
        for w in words {
            if w.phonemes.is_empty() {
                return Err(Error::Data(format!("word `{}` has no phonemes", w.word)));
            }
            let start = seq.phonemes.len();
            seq.phonemes.extend(w.phonemes.iter().cloned());
            seq.word_spans.push((start, seq.phonemes.len()));
            seq.word_texts.push(w.word.clone());
        }
        Ok(seq)
    }

    /// A target with the whole phoneme list as a single word.
    pub fn single_word(word: &str, phonemes: &[&str]) -> Self {
        TargetSequence {
            phonemes: phonemes.iter().map(|s| s.to_string()).collect(),
            word_spans: vec![(0, phonemes.len())],
            word_texts: vec![word.to_string()],
        }
    }

    pub fn words(&self) -> Vec<TargetWord> {
        self.word_spans
            .iter()
            .zip(&self.word_texts)
            .map(|(&(s, e), w)| TargetWord {
                word: w.clone(),
                phonemes: self.phonemes[s..e].to_vec(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_spans.len() != self.word_texts.len() {
            return Err(Error::Consistency(format!(
                "{} word spans but {} word texts",
                self.word_spans.len(),
                self.word_texts.len()
            )));
        }
        let mut next = 0;
        for &(s, e) in &self.word_spans {
            if s != next || e <= s {
                return Err(Error::Consistency(format!(
                    "word span [{s}, {e}) does not continue a partition at {next}"
                )));
            }
            next = e;
        }
        if next != self.phonemes.len() {
            return Err(Error::Consistency(format!(
                "word spans cover {next} of {} phonemes",
                self.phonemes.len()
            )));
        }
        Ok(())
    }
}

/// A state of the expanded CTC chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CtcState {
    Blank,
    Symbol(String),
}

/// Canonical blank-interleaved expansion, length `2L + 1`.
pub fn expand_with_blanks(target: &TargetSequence) -> Vec<CtcState> {
    let mut states = Vec::with_capacity(2 * target.phonemes.len() + 1);
    states.push(CtcState::Blank);
    for p in &target.phonemes {
        states.push(CtcState::Symbol(p.clone()));
        states.push(CtcState::Blank);
    }
    states
}

/// Fewest frames a CTC path needs: one per label plus a blank between repeats.
pub fn min_frames<T: PartialEq>(labels: &[T]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub units: Vec<AlignedUnit>,
    pub path_logprob: f64,
    /// Inclusive frame span per phoneme.
    pub frame_spans: Vec<(usize, usize)>,
}

/// Best-scoring CTC forced alignment of `target` against `em`.
///
/// Ties are broken toward advancing (i.e. toward the predecessor with the
/// smaller state index) and, at the final frame, toward the smaller of the
/// two accepting states.
pub fn viterbi_align(em: &EmissionMatrix, target: &TargetSequence) -> Result<Alignment> {
    let ids: Vec<usize> = target
        .phonemes
        .iter()
        .map(|p| em.symbol_index(p).ok_or_else(|| Error::UnknownSymbol(p.clone())))
        .collect::<Result<_>>()?;
    if let Some(&b) = ids.iter().find(|&&i| i == em.blank_index()) {
        return Err(Error::UnknownSymbol(em.symbols()[b].clone()));
    }
    let required = min_frames(&ids).max(1);
    let t_len = em.frames();
    if t_len < required {
        return Err(Error::Infeasible {
            frames: t_len,
            required,
        });
    }

    let s_len = 2 * ids.len() + 1;
    let token = |s: usize| if s.is_multiple_of(2) { em.blank_index() } else { ids[s / 2] };
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && ids[s / 2] != ids[s / 2 - 1];

    let mut prev = vec![f64::NEG_INFINITY; s_len];
    let mut curr = vec![f64::NEG_INFINITY; s_len];
    // Back-pointer: how many states the path advanced into (t, s).
    let mut back = vec![0u8; t_len * s_len];

    prev[0] = em.logprob(0, token(0));
    if s_len > 1 {
        prev[1] = em.logprob(0, token(1));
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut best = f64::NEG_INFINITY;
            let mut step = 0u8;
            // Candidates in order of increasing predecessor index; strict `>`
            // keeps the earliest, i.e. the largest advance, on ties.
            if can_skip(s) && prev[s - 2] > best {
                best = prev[s - 2];
                step = 2;
            }
            if s >= 1 && prev[s - 1] > best {
                best = prev[s - 1];
                step = 1;
            }
            if prev[s] > best {
                best = prev[s];
                step = 0;
            }
            curr[s] = best + em.logprob(t, token(s));
            back[t * s_len + s] = step;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let mut s = s_len - 1;
    if s_len >= 2 && prev[s_len - 2] >= prev[s_len - 1] {
        s = s_len - 2;
    }
    let path_logprob = prev[s];
    if !path_logprob.is_finite() {
        return Err(Error::Numeric {
            location: "ctc viterbi".into(),
            detail: "no finite-scoring path".into(),
        });
    }

    let mut states = vec![0usize; t_len];
    states[t_len - 1] = s;
    for t in (1..t_len).rev() {
        s -= back[t * s_len + s] as usize;
        states[t - 1] = s;
    }

    let mut frame_spans = vec![(usize::MAX, 0usize); ids.len()];
    for (t, &s) in states.iter().enumerate() {
        if s % 2 == 1 {
            let span = &mut frame_spans[s / 2];
            span.0 = span.0.min(t);
            span.1 = t;
        }
    }

    let units = frame_spans
        .iter()
        .zip(&ids)
        .zip(&target.phonemes)
        .map(|((&(first, last), &id), label)| {
            Ok(AlignedUnit {
                label: label.clone(),
                granularity: Granularity::Phoneme,
                start_s: first as f64 * em.frame_dur_s(),
                end_s: (last + 1) as f64 * em.frame_dur_s(),
                confidence: unit_confidence(em, (first, last), id)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(Alignment {
        units,
        path_logprob,
        frame_spans,
    })
}

/// Mean posterior of `symbol_index` over the inclusive frame span.
pub fn unit_confidence(em: &EmissionMatrix, frame_span: (usize, usize), symbol_index: usize) -> Result<f64> {
    let (first, last) = frame_span;
    if first > last || last >= em.frames() {
        return Err(Error::Precondition(format!(
            "frame span [{first}, {last}] is empty or outside [0, {})",
            em.frames()
        )));
    }
    if symbol_index >= em.vocab_size() {
        return Err(Error::Precondition(format!("symbol index {symbol_index} out of range")));
    }
    let sum: f64 = (first..=last).map(|t| em.logprob(t, symbol_index).exp()).sum();
    Ok((sum / (last - first + 1) as f64).clamp(0.0, 1.0))
}

/// One word-granularity unit per word span of the target.
pub fn group_words(phoneme_units: &[AlignedUnit], target: &TargetSequence) -> Result<Vec<AlignedUnit>> {
    if phoneme_units.len() != target.phonemes.len() {
        return Err(Error::Consistency(format!(
            "{} phoneme units for a target of {} phonemes",
            phoneme_units.len(),
            target.phonemes.len()
        )));
    }
    target.validate()?;
    Ok(target
        .word_spans
        .iter()
        .zip(&target.word_texts)
        .map(|(&(s, e), text)| compose(text.clone(), Granularity::Word, &phoneme_units[s..e]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn syms(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn uniform(frames: usize, v: usize) -> Vec<f64> {
        vec![-(v as f64).ln(); frames * v]
    }

    #[test]
    fn expansion() {
        let st = expand_with_blanks(&TargetSequence::single_word("ab", &["a", "b"]));
        assert_eq!(
            st,
            vec![
                CtcState::Blank,
                CtcState::Symbol("a".into()),
                CtcState::Blank,
                CtcState::Symbol("b".into()),
                CtcState::Blank
            ]
        );
        assert_eq!(expand_with_blanks(&TargetSequence::default()), vec![CtcState::Blank]);
        let st = expand_with_blanks(&TargetSequence::single_word("aa", &["a", "a"]));
        assert_eq!(st.len(), 5);
        assert_eq!(st[2], CtcState::Blank);
    }

    #[test]
    fn single_frame_single_symbol() {
        let em = EmissionMatrix::new(vec![f64::NEG_INFINITY, 0.0], 0.02, syms(&["<blank>", "a"]), 0).unwrap();
        let al = viterbi_align(&em, &TargetSequence::single_word("a", &["a"])).unwrap();
        assert_eq!(al.path_logprob, 0.0);
        assert_eq!(al.units.len(), 1);
        let u = &al.units[0];
        assert_eq!((u.start_s, u.end_s, u.confidence), (0.0, 0.02, 1.0));
    }

    #[test]
    fn infeasible_when_too_short() {
        let em = EmissionMatrix::new(uniform(1, 3), 0.02, syms(&["<blank>", "a", "b"]), 0).unwrap();
        let err = viterbi_align(&em, &TargetSequence::single_word("ab", &["a", "b"])).unwrap_err();
        assert!(matches!(err, Error::Infeasible { frames: 1, required: 2 }));
        let em = EmissionMatrix::new(uniform(2, 3), 0.02, syms(&["<blank>", "a", "b"]), 0).unwrap();
        let err = viterbi_align(&em, &TargetSequence::single_word("aa", &["a", "a"])).unwrap_err();
        assert!(matches!(err, Error::Infeasible { frames: 2, required: 3 }));
    }

    #[test]
    fn unknown_symbol() {
        let em = EmissionMatrix::new(uniform(3, 2), 0.02, syms(&["<blank>", "a"]), 0).unwrap();
        let err = viterbi_align(&em, &TargetSequence::single_word("x", &["x"])).unwrap_err();
        assert!(matches!(err, Error::UnknownSymbol(s) if s == "x"));
    }

    #[test]
    fn rejects_unnormalized_rows() {
        assert!(EmissionMatrix::new(vec![0.0, 0.0], 0.02, syms(&["<blank>", "a"]), 0).is_err());
        assert!(EmissionMatrix::new(vec![], 0.02, syms(&["<blank>", "a"]), 0).is_err());
        assert!(EmissionMatrix::new(uniform(1, 2), 0.02, syms(&["a", "a"]), 0).is_err());
    }

    #[test]
    fn empty_target_is_all_blank() {
        let em = EmissionMatrix::new(uniform(3, 2), 0.02, syms(&["<blank>", "a"]), 0).unwrap();
        let al = viterbi_align(&em, &TargetSequence::default()).unwrap();
        assert!(al.units.is_empty());
        assert_abs_diff_eq!(al.path_logprob, 3.0 * -(2f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn confidence_examples() {
        let em = EmissionMatrix::new(uniform(4, 4), 0.02, syms(&["<blank>", "a", "b", "c"]), 0).unwrap();
        assert_abs_diff_eq!(unit_confidence(&em, (0, 3), 2).unwrap(), 0.25, epsilon = 1e-12);

        let rows = [[0.1f64, 0.9], [0.5, 0.5]];
        let lp: Vec<f64> = rows.iter().flatten().map(|p| p.ln()).collect();
        let em = EmissionMatrix::new(lp, 0.02, syms(&["<blank>", "a"]), 0).unwrap();
        assert_abs_diff_eq!(unit_confidence(&em, (0, 1), 1).unwrap(), 0.7, epsilon = 1e-12);
        assert!(matches!(unit_confidence(&em, (1, 0), 1), Err(Error::Precondition(_))));
        assert!(unit_confidence(&em, (0, 2), 1).is_err());

        let em = EmissionMatrix::new(vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0], 0.02, syms(&["<blank>", "a"]), 0)
            .unwrap();
        assert_eq!(unit_confidence(&em, (0, 1), 1).unwrap(), 1.0);
    }

    fn unit(label: &str, s: f64, e: f64, c: f64) -> AlignedUnit {
        AlignedUnit {
            label: label.into(),
            granularity: Granularity::Phoneme,
            start_s: s,
            end_s: e,
            confidence: c,
        }
    }

    #[test]
    fn word_grouping() {
        let target = TargetSequence::single_word("pa", &["p", "a"]);
        let words = group_words(&[unit("p", 0.0, 0.1, 1.0), unit("a", 0.1, 0.25, 0.5)], &target).unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].label, "pa");
        assert_eq!(words[0].granularity, Granularity::Word);
        assert_eq!((words[0].start_s, words[0].end_s), (0.0, 0.25));
        assert_abs_diff_eq!(words[0].confidence, 0.75);

        let pataka = TargetSequence::single_word("pataka", &["p", "a", "t", "a", "k", "a"]);
        let phones: Vec<AlignedUnit> = (0..6)
            .map(|i| unit(&pataka.phonemes[i], i as f64 * 0.1, (i + 1) as f64 * 0.1, 1.0))
            .collect();
        let words = group_words(&phones, &pataka).unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].label, "pataka");
        assert_abs_diff_eq!(words[0].end_s, 0.6, epsilon = 1e-12);

        assert!(matches!(group_words(&phones[..5], &pataka), Err(Error::Consistency(_))));
    }

    #[test]
    fn symbol_table_parsing() {
        let (s, b) = parse_symbols("a\n<blank>\nb\n").unwrap();
        assert_eq!(s, syms(&["a", "<blank>", "b"]));
        assert_eq!(b, 1);
        assert!(parse_symbols("a\nb\n").is_err());
    }

    #[test]
    fn target_round_trips_through_words() {
        let words = vec![
            TargetWord { word: "la".into(), phonemes: syms(&["l", "a"]) },
            TargetWord { word: "casa".into(), phonemes: syms(&["k", "a", "s", "a"]) },
        ];
        let t = TargetSequence::from_words(&words).unwrap();
        assert_eq!(t.word_spans, vec![(0, 2), (2, 6)]);
        t.validate().unwrap();
        assert_eq!(t.words(), words);
    }
}
