//! Corpus construction: confidence filtering, speaker-independent stratified
//! splitting and padded mini-batches.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmat::Matrix;
use crate::units::{AlignedUnit, Granularity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    It,
    Es,
    En,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    PD,
    HC,
}

impl Label {
    /// Class index used by the classifier: HC = 0, PD = 1.
    pub fn class(self) -> usize {
        match self {
            Label::HC => 0,
            Label::PD => 1,
        }
    }

    pub fn from_class(c: usize) -> Self {
        if c == 1 {
            Label::PD
        } else {
            Label::HC
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureRef {
    pub file: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEntry {
    #[serde(flatten)]
    pub unit: AlignedUnit,
    pub feature_ref: FeatureRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: Language,
    pub label: Label,
    pub duration_s: f64,
    pub units: Vec<UnitEntry>,
}

impl UtteranceRecord {
    pub fn validate(&self, store: Option<&FeatureStore>) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Data(format!("{}: duration must be positive", self.utterance_id)));
        }
        if self.units.windows(2).any(|w| w[0].unit.start_s > w[1].unit.start_s) {
            return Err(Error::Data(format!("{}: units not sorted by start time", self.utterance_id)));
        }
        if let Some(store) = store {
            for u in &self.units {
                store.row(&u.feature_ref).map_err(|e| Error::Data(format!("{}: {e}", self.utterance_id)))?;
            }
        }
        Ok(())
    }
}

/// In-memory feature rows, addressed by `(file, row)`.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    files: HashMap<String, Matrix>,
    dim: Option<usize>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Matrix) -> Result<()> {
        let name = name.into();
        if let Some(d) = self.dim {
            if m.rows > 0 && m.cols != d {
                return Err(Error::Data(format!("{name}: rows have dimension {}, store uses {d}", m.cols)));
            }
        } else if m.rows > 0 {
            self.dim = Some(m.cols);
        }
        if let Some(i) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{name}: non-finite value at row {}", i / m.cols.max(1))));
        }
        self.files.insert(name, m);
        Ok(())
    }

    /// Loads FMAT files keyed by their file name.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut store = FeatureStore::new();
        for p in paths {
            let p = p.as_ref();
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Data(format!("{}: not a file path", p.display())))?;
            store.insert(name, Matrix::read(p)?)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn row(&self, r: &FeatureRef) -> Result<&[f32]> {
        let m = self
            .files
            .get(&r.file)
            .ok_or_else(|| Error::Data(format!("feature file `{}` not loaded", r.file)))?;
        if r.row >= m.rows {
            return Err(Error::Data(format!("row {} out of range for `{}` ({} rows)", r.row, r.file, m.rows)));
        }
        Ok(m.row(r.row))
    }
}

/// Drops units below `conf_threshold`; returns the kept records and the ids
/// of records left without any unit.
pub fn filter_units(records: &[UtteranceRecord], conf_threshold: f64) -> Result<(Vec<UtteranceRecord>, Vec<String>)> {
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::InvalidConfig(format!("confidence threshold {conf_threshold} outside [0, 1]")));
    }
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for rec in records {
        let units: Vec<UnitEntry> = rec
            .units
            .iter()
            .filter(|u| u.unit.confidence >= conf_threshold)
            .cloned()
            .collect();
        if units.is_empty() {
            dropped.push(rec.utterance_id.clone());
        } else {
            kept.push(UtteranceRecord { units, ..rec.clone() });
        }
    }
    Ok((kept, dropped))
}

/// Keeps only units of one granularity; also returns ids of records that end up empty.
pub fn select_granularity(records: &[UtteranceRecord], granularity: Granularity) -> (Vec<UtteranceRecord>, Vec<String>) {
    let mut flagged = Vec::new();
    let out = records
        .iter()
        .map(|rec| {
            let units: Vec<UnitEntry> = rec
                .units
                .iter()
                .filter(|u| u.unit.granularity == granularity)
                .cloned()
                .collect();
            if units.is_empty() {
                flagged.push(rec.utterance_id.clone());
            }
            UtteranceRecord { units, ..rec.clone() }
        })
        .collect();
    (out, flagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !(*x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("split ratios `{s}`: {e}")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::InvalidConfig(format!("split ratios `{s}` need three values")));
        };
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub speakers: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn of(&self, speaker: &str) -> Option<Split> {
        self.speakers.get(speaker).copied()
    }

    pub fn records<'a>(&self, records: &'a [UtteranceRecord], split: Split) -> Vec<&'a UtteranceRecord> {
        records.iter().filter(|r| self.of(&r.speaker_id) == Some(split)).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.speakers.values().filter(|s| **s == split).count()
    }
}

/// Per-speaker summary used for stratification.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub label: Label,
    pub language: Language,
    pub total_duration_s: f64,
    pub records: usize,
}

pub fn speaker_profiles(records: &[UtteranceRecord]) -> Result<Vec<SpeakerProfile>> {
    let mut by_speaker: BTreeMap<&str, SpeakerProfile> = BTreeMap::new();
    for r in records {
        let p = by_speaker.entry(&r.speaker_id).or_insert_with(|| SpeakerProfile {
            speaker_id: r.speaker_id.clone(),
            label: r.label,
            language: r.language,
            total_duration_s: 0.0,
            records: 0,
        });
        if p.label != r.label || p.language != r.language {
            return Err(Error::Consistency(format!(
                "speaker {} has conflicting label or language",
                r.speaker_id
            )));
        }
        p.total_duration_s += r.duration_s;
        p.records += 1;
    }
    Ok(by_speaker.into_values().collect())
}

/// Quantile bin per speaker by total duration (rank-based, ties broken by id).
pub fn duration_bins(profiles: &[SpeakerProfile], n_bins: usize) -> Vec<usize> {
    let n = profiles.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        profiles[a]
            .total_duration_s
            .total_cmp(&profiles[b].total_duration_s)
            .then_with(|| profiles[a].speaker_id.cmp(&profiles[b].speaker_id))
    });
    let mut bins = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * n_bins / n.max(1);
    }
    bins
}

/// Stratified speaker-independent split.
///
/// Speakers are grouped by (label, language, duration bin). Within a stratum
/// they are shuffled by `seed`, stably ordered by descending record count and
/// handed one at a time to the split whose speaker count is furthest below its
/// target share of the stratum. Ties go to the split furthest below its global
/// target, then to the earlier split.
pub fn stratified_speaker_split(
    records: &[UtteranceRecord],
    ratios: SplitRatios,
    n_duration_bins: usize,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    if n_duration_bins == 0 {
        return Err(Error::InvalidConfig("need at least one duration bin".into()));
    }
    let profiles = speaker_profiles(records)?;
    if profiles.len() < 3 {
        return Err(Error::SplitInfeasible(format!(
            "{} speaker(s); at least 3 are needed for train/val/test",
            profiles.len()
        )));
    }
    let bins = duration_bins(&profiles, n_duration_bins);
    let mut strata: BTreeMap<(Label, Language, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in profiles.iter().enumerate() {
        strata.entry((p.label, p.language, bins[i])).or_default().push(i);
    }

    let ratio = ratios.as_array();
    let total = profiles.len() as f64;
    let mut global = [0usize; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut speakers = BTreeMap::new();
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        members.sort_by(|&a, &b| profiles[b].records.cmp(&profiles[a].records));
        let size = members.len() as f64;
        let mut local = [0usize; 3];
        for &i in members.iter() {
            let deficit = |k: usize| ratio[k] * size - local[k] as f64;
            let global_deficit = |k: usize| ratio[k] * total - global[k] as f64;
            let mut best = 0;
            for k in 1..3 {
                let d = deficit(k) - deficit(best);
                if d > 1e-12 || (d.abs() <= 1e-12 && global_deficit(k) > global_deficit(best) + 1e-12) {
                    best = k;
                }
            }
            local[best] += 1;
            global[best] += 1;
            speakers.insert(profiles[i].speaker_id.clone(), Split::ALL[best]);
        }
    }
    Ok(SplitAssignment { seed, speakers })
}

/// A padded mini-batch. Features are `batch x max_len x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub labels: Vec<usize>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
    pub dim: usize,
    pub utterance_ids: Vec<String>,
    pub speaker_ids: Vec<String>,
    pub unit_labels: Vec<Vec<String>>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    /// Features of sequence `i`, truncated to its valid length.
    pub fn sequence(&self, i: usize) -> &[f64] {
        let start = i * self.max_len * self.dim;
        &self.features[start..start + self.lengths[i] * self.dim]
    }

    /// Builds a batch from unpadded sequences (each `len x dim`, row-major).
    pub fn from_sequences(sequences: &[Vec<f64>], dim: usize, labels: &[usize]) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(Error::Consistency("one label per sequence required".into()));
        }
        if dim == 0 || sequences.iter().any(|s| s.len() % dim != 0) {
            return Err(Error::Consistency(format!("sequence lengths are not multiples of dim {dim}")));
        }
        let lengths: Vec<usize> = sequences.iter().map(|s| s.len() / dim).collect();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        let b = sequences.len();
        let mut features = vec![0.0; b * max_len * dim];
        let mut mask = vec![false; b * max_len];
        for (i, s) in sequences.iter().enumerate() {
            features[i * max_len * dim..i * max_len * dim + s.len()].copy_from_slice(s);
            for j in 0..lengths[i] {
                mask[i * max_len + j] = true;
            }
        }
        Ok(Batch {
            features,
            mask,
            labels: labels.to_vec(),
            lengths,
            max_len,
            dim,
            utterance_ids: (0..b).map(|i| format!("seq{i}")).collect(),
            speaker_ids: (0..b).map(|i| format!("spk{i}")).collect(),
            unit_labels: vec![Vec::new(); b],
        })
    }

    /// Copy with `extra` zero-filled padded steps appended to every sequence.
    pub fn with_extra_padding(&self, extra: usize) -> Self {
        let new_len = self.max_len + extra;
        let (b, d) = (self.size(), self.dim);
        let mut features = vec![0.0; b * new_len * d];
        let mut mask = vec![false; b * new_len];
        for i in 0..b {
            let src = &self.features[i * self.max_len * d..(i + 1) * self.max_len * d];
            features[i * new_len * d..i * new_len * d + src.len()].copy_from_slice(src);
            mask[i * new_len..i * new_len + self.max_len]
                .copy_from_slice(&self.mask[i * self.max_len..(i + 1) * self.max_len]);
        }
        Batch {
            features,
            mask,
            max_len: new_len,
            ..self.clone()
        }
    }
}

/// Shuffles records deterministically and packs them into padded batches.
/// The final partial batch is kept.
pub fn make_batches(
    records: &[&UtteranceRecord],
    store: &FeatureStore,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    if let Some(r) = records.iter().find(|r| r.units.is_empty()) {
        return Err(Error::Data(format!("record {} has no units; filter it first", r.utterance_id)));
    }
    let dim = store
        .dim()
        .ok_or_else(|| Error::Data("feature store is empty".into()))?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    order
        .chunks(batch_size)
        .map(|chunk| {
            let max_len = chunk.iter().map(|&i| records[i].units.len()).max().unwrap_or(0);
            let b = chunk.len();
            let mut batch = Batch {
                features: vec![0.0; b * max_len * dim],
                mask: vec![false; b * max_len],
                labels: Vec::with_capacity(b),
                lengths: Vec::with_capacity(b),
                max_len,
                dim,
                utterance_ids: Vec::with_capacity(b),
                speaker_ids: Vec::with_capacity(b),
                unit_labels: Vec::with_capacity(b),
            };
            for (slot, &i) in chunk.iter().enumerate() {
                let rec = records[i];
                for (j, u) in rec.units.iter().enumerate() {
                    let row = store.row(&u.feature_ref)?;
                    let at = (slot * max_len + j) * dim;
                    for (dst, &src) in batch.features[at..at + dim].iter_mut().zip(row) {
                        *dst = f64::from(src);
                    }
                    batch.mask[slot * max_len + j] = true;
                }
                batch.labels.push(rec.label.class());
                batch.lengths.push(rec.units.len());
                batch.utterance_ids.push(rec.utterance_id.clone());
                batch.speaker_ids.push(rec.speaker_id.clone());
                batch.unit_labels.push(rec.units.iter().map(|u| u.unit.label.clone()).collect());
            }
            Ok(batch)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(label: &str, g: Granularity, start: f64, conf: f64, row: usize) -> UnitEntry {
        UnitEntry {
            unit: AlignedUnit {
                label: label.into(),
                granularity: g,
                start_s: start,
                end_s: start + 0.1,
                confidence: conf,
            },
            feature_ref: FeatureRef { file: "f.fmat".into(), row },
        }
    }

    fn record(id: &str, speaker: &str, units: Vec<UnitEntry>) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: id.into(),
            speaker_id: speaker.into(),
            language: Language::It,
            label: Label::PD,
            duration_s: 1.0,
            units,
        }
    }

    fn store(rows: usize, dim: usize) -> FeatureStore {
        let mut s = FeatureStore::new();
        let data = (0..rows * dim).map(|v| v as f32).collect();
        s.insert("f.fmat", Matrix::new(rows, dim, data).unwrap()).unwrap();
        s
    }

    #[test]
    fn filtering() {
        let recs = vec![
            record("u1", "s1", vec![unit("a", Granularity::Phoneme, 0.0, 0.9, 0), unit("b", Granularity::Phoneme, 0.1, 0.3, 1)]),
            record("u2", "s1", vec![unit("c", Granularity::Phoneme, 0.0, 0.2, 2)]),
        ];
        let (kept, dropped) = filter_units(&recs, 0.6).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].units.len(), 1);
        assert_eq!(dropped, vec!["u2".to_string()]);

        let (kept, dropped) = filter_units(&recs, 0.0).unwrap();
        assert_eq!(kept, recs);
        assert!(dropped.is_empty());

        assert!(filter_units(&recs, 1.5).is_err());
    }

    #[test]
    fn granularity_selection() {
        let recs = vec![
            record("u1", "s1", vec![unit("a", Granularity::Phoneme, 0.0, 0.9, 0), unit("ab", Granularity::Syllable, 0.0, 0.9, 1)]),
        ];
        let (ph, flagged) = select_granularity(&recs, Granularity::Phoneme);
        assert_eq!(ph[0].units.len(), 1);
        assert_eq!(ph[0].units[0].unit.granularity, Granularity::Phoneme);
        assert!(flagged.is_empty());
        let (again, _) = select_granularity(&ph, Granularity::Phoneme);
        assert_eq!(again, ph);
        let (w, flagged) = select_granularity(&recs, Granularity::Word);
        assert!(w[0].units.is_empty());
        assert_eq!(flagged, vec!["u1".to_string()]);
    }

    #[test]
    fn batch_sizes_and_padding() {
        let st = store(8, 2);
        let recs: Vec<UtteranceRecord> = (0..70)
            .map(|i| record(&format!("u{i}"), &format!("s{i}"), vec![unit("a", Granularity::Phoneme, 0.0, 1.0, i % 8)]))
            .collect();
        let refs: Vec<&UtteranceRecord> = recs.iter().collect();
        let batches = make_batches(&refs, &st, 32, 7).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::size).collect();
        assert_eq!(sizes, vec![32, 32, 6]);

        let again = make_batches(&refs, &st, 32, 7).unwrap();
        assert_eq!(batches, again);

        let mut ids: Vec<String> = batches.iter().flat_map(|b| b.utterance_ids.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = recs.iter().map(|r| r.utterance_id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn mask_rows() {
        let st = store(8, 2);
        let r3 = record("u3", "s", (0..3).map(|j| unit("a", Granularity::Phoneme, j as f64, 1.0, j)).collect());
        let r5 = record("u5", "s", (0..5).map(|j| unit("a", Granularity::Phoneme, j as f64, 1.0, j)).collect());
        let b = &make_batches(&[&r3, &r5], &st, 2, 0).unwrap()[0];
        assert_eq!(b.max_len, 5);
        for i in 0..2 {
            let row: Vec<bool> = b.mask[i * 5..(i + 1) * 5].to_vec();
            let expected: Vec<bool> = (0..5).map(|j| j < b.lengths[i]).collect();
            assert_eq!(row, expected);
            // padded positions are zero-filled
            for j in b.lengths[i]..5 {
                assert!(b.features[(i * 5 + j) * 2..(i * 5 + j + 1) * 2].iter().all(|v| *v == 0.0));
            }
        }
        let mut lens = b.lengths.clone();
        lens.sort();
        assert_eq!(lens, vec![3, 5]);
    }

    #[test]
    fn empty_record_rejected_by_batcher() {
        let st = store(1, 2);
        let r = record("u0", "s", vec![]);
        let err = make_batches(&[&r], &st, 4, 0).unwrap_err();
        assert!(err.to_string().contains("u0"));
        assert!(make_batches(&[&r], &st, 0, 0).is_err());
    }

    #[test]
    fn unresolvable_feature_ref() {
        let st = store(2, 2);
        let r = record("u0", "s", vec![unit("a", Granularity::Phoneme, 0.0, 1.0, 9)]);
        assert!(r.validate(Some(&st)).is_err());
        assert!(make_batches(&[&r], &st, 1, 0).is_err());
    }

    fn speakers(n: usize, label: Label, language: Language, prefix: &str) -> Vec<UtteranceRecord> {
        (0..n)
            .map(|i| UtteranceRecord {
                language,
                label,
                ..record(&format!("{prefix}u{i}"), &format!("{prefix}s{i}"), vec![])
            })
            .collect()
    }

    #[test]
    fn exact_ratios_on_single_stratum() {
        let recs = speakers(10, Label::PD, Language::It, "a");
        let split = stratified_speaker_split(&recs, SplitRatios::default(), 1, 3).unwrap();
        assert_eq!(
            [split.count(Split::Train), split.count(Split::Val), split.count(Split::Test)],
            [6, 2, 2]
        );
        assert_eq!(split.speakers.len(), 10);
    }

    #[test]
    fn too_few_speakers() {
        let recs = speakers(2, Label::PD, Language::It, "a");
        assert!(matches!(
            stratified_speaker_split(&recs, SplitRatios::default(), 3, 0),
            Err(Error::SplitInfeasible(_))
        ));
    }

    #[test]
    fn conflicting_speaker_labels() {
        let mut recs = speakers(4, Label::PD, Language::It, "a");
        recs.push(UtteranceRecord { label: Label::HC, ..recs[0].clone() });
        assert!(matches!(
            stratified_speaker_split(&recs, SplitRatios::default(), 3, 0),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn ratio_parsing() {
        let r: SplitRatios = "0.6,0.2,0.2".parse().unwrap();
        assert_eq!(r, SplitRatios::default());
        assert!("0.5,0.2,0.2".parse::<SplitRatios>().is_err());
        assert!("0.5,0.5".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn duration_terciles() {
        let profiles: Vec<SpeakerProfile> = (0..9)
            .map(|i| SpeakerProfile {
                speaker_id: format!("s{i}"),
                label: Label::PD,
                language: Language::Es,
                total_duration_s: (9 - i) as f64,
                records: 1,
            })
            .collect();
        let bins = duration_bins(&profiles, 3);
        assert_eq!(bins, vec![2, 2, 2, 1, 1, 1, 0, 0, 0]);
    }
}
