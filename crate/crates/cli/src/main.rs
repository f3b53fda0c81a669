mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use granalign::ctc::{self, TargetWord};
use granalign::dataset::{FeatureStore, SplitRatios, UtteranceRecord};
use granalign::eval::{attention_csv, TOP_UNITS};
use granalign::fmat::Matrix;
use granalign::model::{ClassifierConfig, TrainConfig};
use granalign::pipeline::{self, Corpus, LoadedDataset};
use granalign::syllable::PhonemeInventory;
use granalign::synth::{self, SynthConfig};
use granalign::units::AlignedUnit;
use granalign::vad::SegmenterConfig;
use granalign::{ndjson, Error, Granularity, Result};
use log::info;
use serde::Serialize;

use manifest::{beside, files_under, Recorder};

const EXIT_VALIDATION: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "granalign", version, about = "Speech unit alignment and Parkinson's speech classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Speech segments from per-frame speech probabilities.
    Vad(VadArgs),
    /// CTC forced alignment of a phoneme target against emissions.
    Align(AlignArgs),
    /// Sonority-based syllables from aligned phonemes.
    Syllabify(SyllabifyArgs),
    /// Filter units, select a granularity and split speakers into a dataset.
    Build(BuildArgs),
    /// Train the classifier, one run per seed.
    Train(TrainArgs),
    /// Subject-level metrics and seed summaries over trained runs.
    Eval(EvalArgs),
    /// Rank units by attention mass over the test predictions of trained runs.
    Attention(AttentionArgs),
    /// Run every stage over a corpus directory.
    Pipeline(PipelineArgs),
    /// Write a synthetic corpus with planted alignments.
    Synth(SynthArgs),
}

/// Seeds as `N`, `A..B` (inclusive) or a comma list.
#[derive(Debug, Clone, Serialize)]
struct SeedSpec(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedSpec, String> {
    let bad = |_| format!("invalid seed specification `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(bad)?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(bad)?;
        if b < a {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok(SeedSpec((a..=b).collect()));
    }
    let seeds = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(bad))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SeedSpec(seeds))
}

fn parse_granularity(s: &str) -> std::result::Result<Granularity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ratios(s: &str) -> std::result::Result<SplitRatios, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GranularityChoice {
    Phoneme,
    Syllable,
    Word,
    All,
}

impl GranularityChoice {
    fn expand(self) -> Vec<Granularity> {
        match self {
            GranularityChoice::Phoneme => vec![Granularity::Phoneme],
            GranularityChoice::Syllable => vec![Granularity::Syllable],
            GranularityChoice::Word => vec![Granularity::Word],
            GranularityChoice::All => Granularity::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct VadArgs {
    /// Per-frame speech probabilities (FMAT, one column).
    #[arg(long)]
    probs: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Maximum segment length in seconds.
    #[arg(long = "max-seg", default_value_t = 30.0)]
    max_seg: f64,
    /// Silences shorter than this (seconds) do not break a segment.
    #[arg(long = "min-gap", default_value_t = 0.1)]
    min_gap: f64,
    #[arg(long = "frame-hop", default_value_t = 512)]
    frame_hop: usize,
    #[arg(long = "sample-rate", default_value_t = 16_000)]
    sample_rate: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AlignArgs {
    /// Log-posterior emissions (FMAT, frames x symbols).
    #[arg(long)]
    emissions: PathBuf,
    #[arg(long)]
    symbols: PathBuf,
    /// Target words with their phonemes (NDJSON).
    #[arg(long)]
    target: PathBuf,
    /// Emission frame duration in seconds.
    #[arg(long = "frame-dur", default_value_t = 0.02)]
    frame_dur: f64,
    /// Added to all timestamps (segment start within the recording).
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// Also write word units here.
    #[arg(long = "words-out")]
    words_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SyllabifyArgs {
    /// Aligned phoneme units (NDJSON).
    #[arg(long)]
    phones: PathBuf,
    /// Target words the phonemes were aligned against (NDJSON).
    #[arg(long)]
    words: PathBuf,
    /// `symbol<TAB>class` inventory; a built-in IPA table when absent.
    #[arg(long)]
    inventory: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BuildArgs {
    /// Utterance manifests (NDJSON of utterance records).
    #[arg(long, num_args = 1.., required = true)]
    units: Vec<PathBuf>,
    /// Feature matrices referenced by the manifests, matched by file name.
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    #[arg(long, value_parser = parse_granularity)]
    granularity: Granularity,
    #[arg(long, default_value_t = 0.6)]
    conf: f64,
    #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_ratios)]
    #[serde(skip)]
    split: SplitRatios,
    #[arg(long, env = "GRANALIGN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ModelFlags {
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long = "weight-decay", default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long = "clip-norm", default_value_t = 1.0)]
    clip_norm: f64,
    #[arg(long = "batch-size", default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long = "plateau-patience", default_value_t = 5)]
    plateau_patience: usize,
    #[arg(long = "early-stop", default_value_t = 5)]
    early_stop: usize,
}

impl ModelFlags {
    fn configs(&self, input_dim: usize, seeds: usize) -> (ClassifierConfig, TrainConfig) {
        let cfg = ClassifierConfig {
            input_dim,
            num_layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            heads: self.heads,
            classes: 2,
        };
        let tc = TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            plateau_patience: self.plateau_patience,
            early_stop_patience: self.early_stop,
            seeds: seeds.max(1),
            ..TrainConfig::default()
        };
        (cfg, tc)
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Dataset directory written by `build`.
    #[arg(long)]
    data: PathBuf,
    /// Must match the dataset's granularity when given.
    #[arg(long, value_parser = parse_granularity)]
    granularity: Option<Granularity>,
    /// `N`, `A..B` (inclusive) or `a,b,c`.
    #[arg(long, env = "GRANALIGN_SEED", default_value = "0..4", value_parser = parse_seeds)]
    seed: SeedSpec,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AttentionArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, default_value_t = TOP_UNITS)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PipelineArgs {
    /// Corpus directory (corpus.json, utterances.ndjson and the files they name).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = GranularityChoice::All)]
    granularity: GranularityChoice,
    /// Split seed and first training seed.
    #[arg(long, env = "GRANALIGN_SEED", default_value_t = 0)]
    seed: u64,
    /// Number of training seeds; the corpus setting when absent.
    #[arg(long)]
    seeds: Option<usize>,
    /// Maximum epochs; the corpus setting when absent.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_ratios)]
    #[serde(skip)]
    split: SplitRatios,
    /// Output directory; `<in>/out` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, env = "GRANALIGN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long = "speakers-per-group", default_value_t = 8)]
    speakers_per_group: usize,
    #[arg(long, default_value_t = 4)]
    utterances: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_units(path: &Path, units: &[AlignedUnit]) -> Result<()> {
    create_parent(path)?;
    ndjson::write(path, units)
}

fn run_vad(a: &VadArgs) -> Result<()> {
    let mut rec = Recorder::new("vad", a);
    rec.input(&a.probs);
    let probs = Matrix::read(&a.probs)?;
    let cfg = SegmenterConfig {
        threshold: a.threshold,
        max_segment_s: a.max_seg,
        min_gap_s: a.min_gap,
    };
    let segs = pipeline::vad_segments(&probs, a.frame_hop, a.sample_rate, &cfg)?;
    create_parent(&a.out)?;
    ndjson::write(&a.out, &segs)?;
    info!("{} segment(s)", segs.len());
    rec.output(&a.out);
    rec.finish(&beside(&a.out))
}

fn run_align(a: &AlignArgs) -> Result<()> {
    let mut rec = Recorder::new("align", a);
    rec.inputs([a.emissions.clone(), a.symbols.clone(), a.target.clone()]);
    let (symbols, blank) = ctc::load_symbols(&a.symbols)?;
    let em = pipeline::load_emissions(&a.emissions, &symbols, blank, a.frame_dur)?;
    let target = pipeline::load_target(&a.target)?;
    target.validate()?;
    let al = ctc::viterbi_align(&em, &target)?;
    let shift = |units: Vec<AlignedUnit>| -> Vec<AlignedUnit> {
        units
            .into_iter()
            .map(|u| AlignedUnit {
                start_s: u.start_s + a.offset,
                end_s: u.end_s + a.offset,
                ..u
            })
            .collect()
    };
    if let Some(w) = &a.words_out {
        write_units(w, &shift(ctc::group_words(&al.units, &target)?))?;
        rec.output(w);
    }
    write_units(&a.out, &shift(al.units))?;
    rec.output(&a.out);
    rec.finish(&beside(&a.out))
}

fn run_syllabify(a: &SyllabifyArgs) -> Result<()> {
    let mut rec = Recorder::new("syllabify", a);
    rec.inputs([a.phones.clone(), a.words.clone()]);
    let inv = match &a.inventory {
        Some(p) => {
            rec.input(p);
            PhonemeInventory::load(p)?
        }
        None => PhonemeInventory::default_ipa(),
    };
    let phones: Vec<AlignedUnit> = ndjson::read(&a.phones)?;
    let target = ctc::TargetSequence::from_words(&ndjson::read::<TargetWord>(&a.words)?)?;
    for (u, p) in phones.iter().zip(&target.phonemes) {
        if &u.label != p {
            return Err(Error::Consistency(format!("phoneme unit `{}` does not match target `{p}`", u.label)));
        }
    }
    let syl = pipeline::syllabify_words(&phones, &target, &inv)?;
    write_units(&a.out, &syl)?;
    rec.output(&a.out);
    rec.finish(&beside(&a.out))
}

fn run_build(a: &BuildArgs) -> Result<()> {
    let mut rec = Recorder::new("build", a);
    rec.seeds([a.seed]);
    rec.inputs(a.units.iter().cloned());
    rec.inputs(a.features.iter().cloned());
    let mut records: Vec<UtteranceRecord> = Vec::new();
    for p in &a.units {
        records.extend(ndjson::read::<UtteranceRecord>(p)?);
    }
    let store = FeatureStore::load(&a.features)?;
    let (_, written) = pipeline::build_dataset(&records, &store, a.granularity, a.conf, a.split, a.seed, &a.out)?;
    rec.outputs(written);
    rec.finish(&a.out.join("manifest.json"))
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let mut rec = Recorder::new("train", a);
    rec.seeds(a.seed.0.iter().copied());
    rec.inputs(files_under(&a.data)?.into_iter().filter(|p| p.file_name() != Some("manifest.json".as_ref())));
    let data = LoadedDataset::load(&a.data)?;
    if let Some(g) = a.granularity {
        if g != data.meta.granularity {
            return Err(Error::InvalidConfig(format!(
                "dataset holds {} units, --granularity asks for {g}",
                data.meta.granularity
            )));
        }
    }
    let (cfg, tc) = a.model.configs(data.meta.dim, a.seed.0.len());
    for &seed in &a.seed.0 {
        let dir = pipeline::run_dir(&a.out, data.meta.granularity, seed);
        let (info, _, written) = pipeline::train_run(&data, &cfg, &tc, seed, &dir)?;
        info!("seed {seed}: best epoch {} ({:?})", info.best_epoch, info.stop);
        rec.outputs(written);
    }
    rec.finish(&a.out.join(format!("manifest-{}.json", data.meta.granularity)))
}

fn run_inputs(runs: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (_, dir) in pipeline::discover_runs(runs)? {
        out.extend(["run.json", "predictions.ndjson", "attention.ndjson"].map(|f| dir.join(f)));
    }
    Ok(out)
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let mut rec = Recorder::new("eval", a);
    rec.inputs(run_inputs(&a.runs)?);
    let report = pipeline::evaluate_runs(&a.runs)?;
    print!("{}", report.tables);
    rec.seeds(report.runs.iter().map(|r| r.seed));
    rec.outputs(pipeline::write_eval_report(&report, &a.out)?);
    rec.finish(&a.out.join("manifest.json"))
}

fn write_attention(reports: &[granalign::eval::AttentionReport], out: &Path) -> Result<Vec<PathBuf>> {
    create_parent(out)?;
    ndjson::write(out, &pipeline::attention_rows(reports))?;
    let csv = out.with_extension("csv");
    fs::write(&csv, attention_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    Ok(vec![out.to_path_buf(), csv])
}

fn run_attention(a: &AttentionArgs) -> Result<()> {
    let mut rec = Recorder::new("attention", a);
    rec.inputs(run_inputs(&a.runs)?);
    let reports = pipeline::attention_from_runs(&a.runs, a.top)?;
    rec.outputs(write_attention(&reports, &a.out)?);
    rec.finish(&beside(&a.out))
}

fn run_pipeline(a: &PipelineArgs) -> Result<()> {
    let mut rec = Recorder::new("pipeline", a);
    let out = a.out.clone().unwrap_or_else(|| a.input.join("out"));
    let corpus = Corpus::load(&a.input)?;
    rec.inputs([a.input.join("corpus.json"), a.input.join("utterances.ndjson")]);
    rec.input(corpus.path(&corpus.config.symbols));
    if let Some(inv) = &corpus.config.inventory {
        rec.input(corpus.path(inv));
    }
    for u in &corpus.utterances {
        rec.inputs([corpus.path(&u.emissions), corpus.path(&u.target), corpus.path(&u.features)]);
        if let Some(v) = &u.vad_probs {
            rec.input(corpus.path(v));
        }
    }

    info!("aligning {} utterance(s)", corpus.utterances.len());
    let aligned = pipeline::align_corpus(&corpus, &out)?;
    rec.outputs(aligned.written.iter().cloned());
    let dim = aligned.store.dim().ok_or_else(|| Error::Data("corpus has no feature rows".into()))?;

    let mut cfg = corpus.config.classifier.unwrap_or_default();
    cfg.input_dim = dim;
    let mut tc = corpus.config.train.unwrap_or_default();
    if let Some(n) = a.seeds {
        tc.seeds = n;
    }
    if let Some(e) = a.epochs {
        tc.max_epochs = e;
    }
    let seeds: Vec<u64> = (a.seed..a.seed + tc.seeds as u64).collect();
    rec.seeds(seeds.iter().copied());

    let runs = out.join("runs");
    for g in a.granularity.expand() {
        let ds = out.join("dataset").join(g.as_str());
        let (meta, written) =
            pipeline::build_dataset(&aligned.records, &aligned.store, g, corpus.config.conf_threshold, a.split, a.seed, &ds)?;
        rec.outputs(written);
        info!("{g}: {:?} speakers, training {} seed(s)", meta.speakers, seeds.len());
        let data = LoadedDataset::load(&ds)?;
        for &seed in &seeds {
            let (_, _, written) = pipeline::train_run(&data, &cfg, &tc, seed, &pipeline::run_dir(&runs, g, seed))?;
            rec.outputs(written);
        }
    }

    let report_dir = out.join("report");
    let report = pipeline::evaluate_runs(&runs)?;
    print!("{}", report.tables);
    rec.outputs(pipeline::write_eval_report(&report, &report_dir)?);
    let attention = pipeline::attention_from_runs(&runs, TOP_UNITS)?;
    rec.outputs(write_attention(&attention, &report_dir.join("attention.ndjson"))?);
    rec.finish(&out.join("manifest.json"))
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut rec = Recorder::new("synth", a);
    rec.seeds([a.seed]);
    let cfg = SynthConfig {
        seed: a.seed,
        speakers_per_group: a.speakers_per_group,
        utterances_per_speaker: a.utterances,
        dim: a.dim,
        ..SynthConfig::default()
    };
    synth::generate(&cfg, &a.out)?;
    rec.outputs(files_under(&a.out)?.into_iter().filter(|p| p.file_name() != Some("manifest.json".as_ref())));
    rec.finish(&a.out.join("manifest.json"))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Vad(a) => run_vad(a),
        Command::Align(a) => run_align(a),
        Command::Syllabify(a) => run_syllabify(a),
        Command::Build(a) => run_build(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Attention(a) => run_attention(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { EXIT_DATA } else { EXIT_VALIDATION })
        }
    }
}
