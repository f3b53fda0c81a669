//! Stage functions shared by the CLI subcommands and the end-to-end pipeline.
//!
//! On-disk layouts:
//!
//! ```text
//! corpus/                         dataset/                  runs/<granularity>/seed-<k>/
//!   corpus.json                     meta.json                 run.json
//!   utterances.ndjson               features.fmat             history.ndjson
//!   symbols.txt                     train|val|test.ndjson     predictions.ndjson
//!   <utt>.emissions.fmat            split.ndjson              attention.ndjson
//!   <utt>.target.ndjson                                       checkpoint/
//!   <utt>.features.fmat
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::ctc::{self, EmissionMatrix, TargetSequence, TargetWord};
use crate::dataset::{
    filter_units, select_granularity, stratified_speaker_split, FeatureRef, FeatureStore, Label, Language, Split,
    SplitAssignment, SplitRatios, UnitEntry, UtteranceRecord,
};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_subjects, attention_report, compute_metrics, format_tables, seed_summary, AttentionReport,
    MetricsReport, SeedSummary, SegmentPrediction, SequenceAttention,
};
use crate::fmat::Matrix;
use crate::model::{fit, predict, ClassifierConfig, EpochRecord, StopReason, TrainConfig};
use crate::ndjson;
use crate::syllable::{align_syllables, ssp_syllabify, PhonemeInventory};
use crate::units::{AlignedUnit, Granularity};
use crate::vad::{self, FrameProbSeries, SegmenterConfig, SpeechSegment};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads an emission FMAT (`frames x vocab`) against a symbol table.
pub fn load_emissions(path: &Path, symbols: &[String], blank: usize, frame_dur_s: f64) -> Result<EmissionMatrix> {
    let m = Matrix::read(path)?;
    if m.cols != symbols.len() {
        return Err(Error::Data(format!(
            "{}: {} columns but {} symbols",
            path.display(),
            m.cols,
            symbols.len()
        )));
    }
    EmissionMatrix::new(m.to_f64(), frame_dur_s, symbols.to_vec(), blank)
}

pub fn load_target(path: &Path) -> Result<TargetSequence> {
    TargetSequence::from_words(&ndjson::read::<TargetWord>(path)?)
}

/// Speech segments from a `frames x 1` probability FMAT.
pub fn vad_segments(probs: &Matrix, frame_hop: usize, sample_rate: usize, cfg: &SegmenterConfig) -> Result<Vec<SpeechSegment>> {
    if probs.cols != 1 && probs.rows != 1 {
        return Err(Error::Data(format!(
            "speech probabilities must be a single row or column, got [{}, {}]",
            probs.rows, probs.cols
        )));
    }
    let series = FrameProbSeries::new(probs.to_f64(), frame_hop, sample_rate)?;
    vad::segment(&series, cfg)
}

/// Units of one utterance at every granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceAlignment {
    pub phonemes: Vec<AlignedUnit>,
    pub syllables: Vec<AlignedUnit>,
    pub words: Vec<AlignedUnit>,
    pub frame_spans: Vec<(usize, usize)>,
    pub path_logprob: f64,
}

impl UtteranceAlignment {
    pub fn units(&self, g: Granularity) -> &[AlignedUnit] {
        match g {
            Granularity::Phoneme => &self.phonemes,
            Granularity::Syllable => &self.syllables,
            Granularity::Word => &self.words,
        }
    }

    pub fn offset(mut self, by_s: f64) -> Self {
        for u in self.phonemes.iter_mut().chain(&mut self.syllables).chain(&mut self.words) {
            u.start_s += by_s;
            u.end_s += by_s;
        }
        self
    }
}

/// Syllable units for every word of `target`, given its aligned phonemes.
pub fn syllabify_words(phonemes: &[AlignedUnit], target: &TargetSequence, inv: &PhonemeInventory) -> Result<Vec<AlignedUnit>> {
    if phonemes.len() != target.phonemes.len() {
        return Err(Error::Consistency(format!(
            "{} phoneme units for {} target phonemes",
            phonemes.len(),
            target.phonemes.len()
        )));
    }
    let mut out = Vec::new();
    for &(s, e) in &target.word_spans {
        let syl = ssp_syllabify(&target.phonemes[s..e], inv)?;
        out.extend(align_syllables(&syl, &phonemes[s..e])?);
    }
    Ok(out)
}

pub fn align_utterance(em: &EmissionMatrix, target: &TargetSequence, inv: &PhonemeInventory) -> Result<UtteranceAlignment> {
    target.validate()?;
    let al = ctc::viterbi_align(em, target)?;
    let words = ctc::group_words(&al.units, target)?;
    let syllables = syllabify_words(&al.units, target, inv)?;
    Ok(UtteranceAlignment {
        phonemes: al.units,
        syllables,
        words,
        frame_spans: al.frame_spans,
        path_logprob: al.path_logprob,
    })
}

/// Unit feature rows: mean of the frame vectors whose centres fall in
/// `[start_s, end_s)`. Units covering no frame centre get a zero row.
pub fn pool_unit_features(frames: &Matrix, frame_dur_s: f64, units: &[AlignedUnit]) -> Matrix {
    let mut out = Matrix::zeros(units.len(), frames.cols);
    for (r, u) in units.iter().enumerate() {
        let mut count = 0usize;
        let mut acc = vec![0.0f64; frames.cols];
        // Frame t is centred at (t + 0.5) * dur.
        let first = ((u.start_s / frame_dur_s) - 0.5).ceil().max(0.0) as usize;
        for t in first..frames.rows {
            let centre = (t as f64 + 0.5) * frame_dur_s;
            if centre >= u.end_s {
                break;
            }
            if centre >= u.start_s {
                acc.iter_mut().zip(frames.row(t)).for_each(|(a, &v)| *a += f64::from(v));
                count += 1;
            }
        }
        if count == 0 {
            warn!("unit `{}` [{}, {}) covers no feature frame", u.label, u.start_s, u.end_s);
            continue;
        }
        for (dst, a) in out.data[r * frames.cols..(r + 1) * frames.cols].iter_mut().zip(acc) {
            *dst = (a / count as f64) as f32;
        }
    }
    out
}

/// Corpus-level settings stored in `corpus.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub symbols: String,
    #[serde(default)]
    pub inventory: Option<String>,
    #[serde(default)]
    pub classifier: Option<ClassifierConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default = "default_conf")]
    pub conf_threshold: f64,
    #[serde(default = "default_vad_hop")]
    pub vad_frame_hop: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: usize,
}

pub fn default_conf() -> f64 {
    0.6
}

fn default_vad_hop() -> usize {
    512
}

fn default_rate() -> usize {
    16_000
}

/// One line of `utterances.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusUtterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: Language,
    pub label: Label,
    pub emissions: String,
    pub frame_dur_s: f64,
    pub target: String,
    /// Frame-level feature matrix on the emission frame grid.
    pub features: String,
    #[serde(default)]
    pub vad_probs: Option<String>,
    /// Start of this segment within its recording.
    #[serde(default)]
    pub offset_s: f64,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub config: CorpusConfig,
    pub utterances: Vec<CorpusUtterance>,
}

impl Corpus {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let config: CorpusConfig = read_json(&root.join("corpus.json"))?;
        let utterances = ndjson::read(root.join("utterances.ndjson"))?;
        Ok(Corpus { root, config, utterances })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn inventory(&self) -> Result<PhonemeInventory> {
        match &self.config.inventory {
            Some(p) => PhonemeInventory::load(self.path(p)),
            None => Ok(PhonemeInventory::default_ipa()),
        }
    }
}

/// Aligned units, pooled unit features and the manifest records for a corpus.
#[derive(Debug)]
pub struct AlignedCorpus {
    pub alignments: Vec<(String, UtteranceAlignment)>,
    pub records: Vec<UtteranceRecord>,
    pub store: FeatureStore,
    pub segments: BTreeMap<String, Vec<SpeechSegment>>,
    pub written: Vec<PathBuf>,
}

/// Aligns every utterance, pools unit features and writes
/// `aligned/<utt>.{phones,sylls,words}.ndjson`, `units/<utt>.fmat` and `units.ndjson`.
pub fn align_corpus(corpus: &Corpus, out: &Path) -> Result<AlignedCorpus> {
    let (symbols, blank) = ctc::load_symbols(corpus.path(&corpus.config.symbols))?;
    let inv = corpus.inventory()?;
    let aligned_dir = out.join("aligned");
    let units_dir = out.join("units");
    create_dir(&aligned_dir)?;
    create_dir(&units_dir)?;

    let mut result = AlignedCorpus {
        alignments: Vec::new(),
        records: Vec::new(),
        store: FeatureStore::new(),
        segments: BTreeMap::new(),
        written: Vec::new(),
    };
    for u in &corpus.utterances {
        let em = load_emissions(&corpus.path(&u.emissions), &symbols, blank, u.frame_dur_s)?;
        let target = load_target(&corpus.path(&u.target))?;
        let al = align_utterance(&em, &target, &inv)
            .map_err(|e| Error::Data(format!("{}: {e}", u.utterance_id)))?;

        if let Some(p) = &u.vad_probs {
            let probs = Matrix::read(corpus.path(p))?;
            let segs = vad_segments(&probs, corpus.config.vad_frame_hop, corpus.config.sample_rate, &SegmenterConfig::default())?;
            result.segments.insert(u.utterance_id.clone(), segs);
        }

        let frames = Matrix::read(corpus.path(&u.features))?;
        let all_units: Vec<AlignedUnit> = Granularity::ALL
            .iter()
            .flat_map(|g| al.units(*g).iter().cloned())
            .collect();
        let pooled = pool_unit_features(&frames, u.frame_dur_s, &all_units);
        let feat_name = format!("{}.fmat", u.utterance_id);
        pooled.write(units_dir.join(&feat_name))?;
        result.written.push(units_dir.join(&feat_name));

        let al = al.offset(u.offset_s);
        for (g, suffix) in [
            (Granularity::Phoneme, "phones"),
            (Granularity::Syllable, "sylls"),
            (Granularity::Word, "words"),
        ] {
            let path = aligned_dir.join(format!("{}.{suffix}.ndjson", u.utterance_id));
            ndjson::write(&path, al.units(g))?;
            result.written.push(path);
        }

        let mut units: Vec<UnitEntry> = Granularity::ALL
            .iter()
            .flat_map(|g| al.units(*g).iter().cloned())
            .enumerate()
            .map(|(row, unit)| UnitEntry {
                unit,
                feature_ref: FeatureRef {
                    file: feat_name.clone(),
                    row,
                },
            })
            .collect();
        units.sort_by(|a, b| a.unit.start_s.total_cmp(&b.unit.start_s));
        let duration_s = em.frames() as f64 * em.frame_dur_s();
        result.records.push(UtteranceRecord {
            utterance_id: u.utterance_id.clone(),
            speaker_id: u.speaker_id.clone(),
            language: u.language,
            label: u.label,
            duration_s,
            units,
        });
        result.store.insert(feat_name, pooled)?;
        result.alignments.push((u.utterance_id.clone(), al));
    }
    let manifest = out.join("units.ndjson");
    ndjson::write(&manifest, &result.records)?;
    result.written.push(manifest);
    if !result.segments.is_empty() {
        let rows: Vec<serde_json::Value> = result
            .segments
            .iter()
            .flat_map(|(id, segs)| {
                segs.iter()
                    .map(move |s| serde_json::json!({"utterance_id": id, "start_s": s.start_s, "end_s": s.end_s}))
            })
            .collect();
        let path = out.join("segments.ndjson");
        ndjson::write(&path, &rows)?;
        result.written.push(path);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub granularity: Granularity,
    pub conf_threshold: f64,
    pub dim: usize,
    pub split_seed: u64,
    pub ratios: [f64; 3],
    /// Records removed because no unit survived filtering or selection.
    pub dropped: Vec<String>,
    pub speakers: [usize; 3],
    pub records: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRow {
    speaker_id: String,
    split: Split,
}

/// Filters, selects one granularity, splits by speaker and writes a
/// self-contained dataset directory.
pub fn build_dataset(
    records: &[UtteranceRecord],
    store: &FeatureStore,
    granularity: Granularity,
    conf_threshold: f64,
    ratios: SplitRatios,
    seed: u64,
    out: &Path,
) -> Result<(DatasetMeta, Vec<PathBuf>)> {
    let (selected, _) = select_granularity(records, granularity);
    let (kept, dropped) = filter_units(&selected, conf_threshold)?;
    if !dropped.is_empty() {
        warn!("{} record(s) without {granularity} units above {conf_threshold}: {:?}", dropped.len(), dropped);
    }
    for r in &kept {
        r.validate(Some(store))?;
    }
    let split = stratified_speaker_split(&kept, ratios, 3, seed)?;
    let dim = store.dim().ok_or_else(|| Error::Data("no feature rows".into()))?;

    create_dir(out)?;
    let mut rows = Vec::new();
    let mut per_split: BTreeMap<Split, Vec<UtteranceRecord>> = BTreeMap::new();
    for r in &kept {
        let units = r
            .units
            .iter()
            .map(|u| {
                let v = store.row(&u.feature_ref)?;
                rows.push(v.to_vec());
                Ok(UnitEntry {
                    unit: u.unit.clone(),
                    feature_ref: FeatureRef {
                        file: "features.fmat".into(),
                        row: rows.len() - 1,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = split.of(&r.speaker_id).expect("every speaker is assigned");
        per_split.entry(s).or_default().push(UtteranceRecord { units, ..r.clone() });
    }
    let mut written = Vec::new();
    let feats = if rows.is_empty() { Matrix::zeros(0, dim) } else { Matrix::from_rows(&rows)? };
    feats.write(out.join("features.fmat"))?;
    written.push(out.join("features.fmat"));
    for s in Split::ALL {
        let path = out.join(format!("{s}.ndjson"));
        ndjson::write(&path, per_split.get(&s).map_or(&[][..], Vec::as_slice))?;
        written.push(path);
    }
    let split_rows: Vec<SplitRow> = split
        .speakers
        .iter()
        .map(|(k, v)| SplitRow { speaker_id: k.clone(), split: *v })
        .collect();
    ndjson::write(out.join("split.ndjson"), &split_rows)?;
    written.push(out.join("split.ndjson"));

    let meta = DatasetMeta {
        granularity,
        conf_threshold,
        dim,
        split_seed: seed,
        ratios: ratios.as_array(),
        dropped,
        speakers: Split::ALL.map(|s| split.count(s)),
        records: Split::ALL.map(|s| per_split.get(&s).map_or(0, Vec::len)),
    };
    write_json(&out.join("meta.json"), &meta)?;
    written.push(out.join("meta.json"));
    info!(
        "dataset {granularity}: speakers {:?}, records {:?}",
        meta.speakers, meta.records
    );
    Ok((meta, written))
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub meta: DatasetMeta,
    pub store: FeatureStore,
    pub train: Vec<UtteranceRecord>,
    pub val: Vec<UtteranceRecord>,
    pub test: Vec<UtteranceRecord>,
}

impl LoadedDataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = read_json(&dir.join("meta.json"))?;
        let mut store = FeatureStore::new();
        store.insert("features.fmat", Matrix::read(dir.join("features.fmat"))?)?;
        let read = |s: Split| ndjson::read::<UtteranceRecord>(dir.join(format!("{s}.ndjson")));
        Ok(LoadedDataset {
            meta,
            store,
            train: read(Split::Train)?,
            val: read(Split::Val)?,
            test: read(Split::Test)?,
        })
    }

    pub fn split_assignment(&self) -> SplitAssignment {
        let mut speakers = BTreeMap::new();
        for (s, recs) in [(Split::Train, &self.train), (Split::Val, &self.val), (Split::Test, &self.test)] {
            for r in recs {
                speakers.insert(r.speaker_id.clone(), s);
            }
        }
        SplitAssignment {
            seed: self.meta.split_seed,
            speakers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub granularity: Granularity,
    pub seed: u64,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub initial_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub pd_prob: f64,
    pub true_label: Label,
}

pub fn run_dir(runs: &Path, g: Granularity, seed: u64) -> PathBuf {
    runs.join(g.as_str()).join(format!("seed-{seed}"))
}

/// Trains one seed on a dataset and writes its run directory.
pub fn train_run(
    data: &LoadedDataset,
    cfg: &ClassifierConfig,
    tc: &TrainConfig,
    seed: u64,
    out: &Path,
) -> Result<(RunInfo, Vec<EpochRecord>, Vec<PathBuf>)> {
    let train: Vec<&UtteranceRecord> = data.train.iter().collect();
    let val: Vec<&UtteranceRecord> = data.val.iter().collect();
    let test: Vec<&UtteranceRecord> = data.test.iter().collect();
    let outcome = fit(&train, &val, &data.store, cfg, tc, seed)?;
    create_dir(out)?;
    let mut written = Vec::new();
    for f in outcome.best_params.save(out.join("checkpoint"), outcome.best_epoch as u64)? {
        written.push(out.join("checkpoint").join(f));
    }
    ndjson::write(out.join("history.ndjson"), &outcome.history)?;
    written.push(out.join("history.ndjson"));

    let preds = if test.is_empty() {
        Vec::new()
    } else {
        predict(&test, &data.store, &outcome.best_params, cfg, tc.batch_size)?
    };
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|p| PredictionRow {
            utterance_id: p.utterance_id.clone(),
            speaker_id: p.speaker_id.clone(),
            pd_prob: p.pd_prob,
            true_label: p.label,
        })
        .collect();
    ndjson::write(out.join("predictions.ndjson"), &rows)?;
    written.push(out.join("predictions.ndjson"));
    let attn: Vec<SequenceAttention> = preds.into_iter().map(|p| p.attention).collect();
    ndjson::write(out.join("attention.ndjson"), &attn)?;
    written.push(out.join("attention.ndjson"));

    let info = RunInfo {
        granularity: data.meta.granularity,
        seed,
        classifier: *cfg,
        train: *tc,
        best_epoch: outcome.best_epoch,
        stop: outcome.stop,
        initial_train_loss: outcome.initial_train_loss,
    };
    write_json(&out.join("run.json"), &info)?;
    written.push(out.join("run.json"));
    Ok((info, outcome.history, written))
}

/// Run directories below `runs/`, sorted by granularity then seed.
pub fn discover_runs(runs: &Path) -> Result<Vec<(RunInfo, PathBuf)>> {
    let mut out = Vec::new();
    for g in Granularity::ALL {
        let gdir = runs.join(g.as_str());
        if !gdir.is_dir() {
            continue;
        }
        let entries = fs::read_dir(&gdir).map_err(|e| Error::io(&gdir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&gdir, e))?.path();
            if path.join("run.json").is_file() {
                out.push((read_json::<RunInfo>(&path.join("run.json"))?, path));
            }
        }
    }
    out.sort_by_key(|a| (a.0.granularity, a.0.seed));
    if out.is_empty() {
        return Err(Error::Data(format!("no runs found under {}", runs.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub granularity: Granularity,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularitySummary {
    pub granularity: Granularity,
    #[serde(flatten)]
    pub summary: SeedSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub runs: Vec<RunMetrics>,
    pub summaries: Vec<GranularitySummary>,
    pub tables: String,
}

/// Subject-level metrics per run and mean ± std per granularity.
pub fn evaluate_runs(runs: &Path) -> Result<EvalReport> {
    let mut per_run = Vec::new();
    for (info, dir) in discover_runs(runs)? {
        let rows: Vec<PredictionRow> = ndjson::read(dir.join("predictions.ndjson"))?;
        let segments: Vec<SegmentPrediction> = rows
            .into_iter()
            .map(|r| SegmentPrediction {
                speaker_id: r.speaker_id,
                pd_prob: r.pd_prob,
                true_label: r.true_label,
            })
            .collect();
        let metrics = compute_metrics(&aggregate_subjects(&segments)?)?;
        per_run.push(RunMetrics {
            granularity: info.granularity,
            seed: info.seed,
            metrics,
        });
    }
    let mut summaries = Vec::new();
    for g in Granularity::ALL {
        let reports: Vec<MetricsReport> = per_run.iter().filter(|r| r.granularity == g).map(|r| r.metrics).collect();
        match reports.len() {
            0 => {}
            1 => warn!("{g}: a single seed cannot give a standard deviation"),
            _ => summaries.push(GranularitySummary {
                granularity: g,
                summary: seed_summary(&reports)?,
            }),
        }
    }
    let tables = format_tables(&summaries.iter().map(|s| (s.granularity, s.summary)).collect::<Vec<_>>());
    Ok(EvalReport {
        runs: per_run,
        summaries,
        tables,
    })
}

pub fn write_eval_report(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let runs = out.join("runs.ndjson");
    ndjson::write(&runs, &report.runs)?;
    let summary = out.join("metrics.ndjson");
    ndjson::write(&summary, &report.summaries)?;
    let tables = out.join("tables.txt");
    fs::write(&tables, &report.tables).map_err(|e| Error::io(&tables, e))?;
    Ok(vec![runs, summary, tables])
}

/// Attention ranking per granularity, pooled over all seeds' test predictions.
pub fn attention_from_runs(runs: &Path, top: usize) -> Result<Vec<AttentionReport>> {
    let mut by_g: BTreeMap<Granularity, Vec<SequenceAttention>> = BTreeMap::new();
    for (info, dir) in discover_runs(runs)? {
        let seqs: Vec<SequenceAttention> = ndjson::read(dir.join("attention.ndjson"))?;
        by_g.entry(info.granularity).or_default().extend(seqs);
    }
    by_g.into_iter()
        .map(|(g, seqs)| attention_report(&seqs, g, top))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub granularity: Granularity,
    pub rank: usize,
    pub label: String,
    pub top1_count: usize,
    pub total_mass: f64,
    pub mean_weight: f64,
    pub occurrences: usize,
}

pub fn attention_rows(reports: &[AttentionReport]) -> Vec<AttentionRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.entries.iter().enumerate().map(move |(i, e)| AttentionRow {
                granularity: r.granularity,
                rank: i + 1,
                label: e.label.clone(),
                top1_count: e.top1_count,
                total_mass: e.total_mass,
                mean_weight: e.mean_weight,
                occurrences: e.occurrences,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Granularity;

    fn unit(s: f64, e: f64) -> AlignedUnit {
        AlignedUnit {
            label: "a".into(),
            granularity: Granularity::Phoneme,
            start_s: s,
            end_s: e,
            confidence: 1.0,
        }
    }

    #[test]
    fn pooling_means_frames_by_centre() {
        // Frames of 0.02 s: centres 0.01, 0.03, 0.05, 0.07.
        let frames = Matrix::new(4, 2, vec![1.0, 0.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0]).unwrap();
        let pooled = pool_unit_features(&frames, 0.02, &[unit(0.0, 0.02), unit(0.02, 0.06), unit(0.065, 0.069)]);
        assert_eq!(pooled.row(0), &[1.0, 0.0]);
        assert_eq!(pooled.row(1), &[4.0, 3.0]);
        assert_eq!(pooled.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn syllables_per_word() {
        let target = TargetSequence::from_words(&[
            TargetWord { word: "pataka".into(), phonemes: ["p", "a", "t", "a", "k", "a"].map(String::from).to_vec() },
            TargetWord { word: "sol".into(), phonemes: ["s", "o", "l"].map(String::from).to_vec() },
        ])
        .unwrap();
        let phones: Vec<AlignedUnit> = (0..9)
            .map(|i| AlignedUnit { label: target.phonemes[i].clone(), ..unit(i as f64, i as f64 + 1.0) })
            .collect();
        let syl = syllabify_words(&phones, &target, &PhonemeInventory::default_ipa()).unwrap();
        let labels: Vec<&str> = syl.iter().map(|u| u.label.as_str()).collect();
        assert_eq!(labels, ["pa", "ta", "ka", "sol"]);
    }
}
