//! Deterministic synthetic corpora with planted alignments and a planted
//! class signal. Used by the test suites and the `synth` subcommand.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ctc::{TargetWord, BLANK_TOKEN};
use crate::dataset::{Label, Language};
use crate::error::{Error, Result};
use crate::fmat::Matrix;
use crate::model::{ClassifierConfig, TrainConfig};
use crate::ndjson;
use crate::pipeline::{CorpusConfig, CorpusUtterance};
use crate::syllable::{PhonemeInventory, SonorityClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Speakers per (label, language) group.
    pub speakers_per_group: usize,
    pub utterances_per_speaker: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub frame_dur_s: f64,
    pub dim: usize,
    /// Shift added to vowel frames of PD speakers along a fixed direction.
    pub pd_effect: f64,
    pub feature_noise: f64,
    /// Logit margin of the planted symbol over the others.
    pub emission_margin: f64,
    pub emission_noise: f64,
    pub vad: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            speakers_per_group: 8,
            utterances_per_speaker: 4,
            min_words: 2,
            max_words: 5,
            frame_dur_s: 0.02,
            dim: 8,
            pd_effect: 2.5,
            feature_noise: 0.6,
            emission_margin: 4.0,
            emission_noise: 0.5,
            vad: true,
        }
    }
}

/// Ground-truth phoneme frame spans (inclusive) of one synthetic utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUtterance {
    pub utterance_id: String,
    pub phonemes: Vec<String>,
    pub frame_spans: Vec<(usize, usize)>,
    pub frames: usize,
}

pub fn lexicon(lang: Language) -> &'static [(&'static str, &'static [&'static str])] {
    match lang {
        Language::It => &[
            ("pataka", &["p", "a", "t", "a", "k", "a"]),
            ("casa", &["k", "a", "s", "a"]),
            ("sole", &["s", "o", "l", "e"]),
            ("mano", &["m", "a", "n", "o"]),
            ("strada", &["s", "t", "r", "a", "d", "a"]),
            ("fiore", &["f", "j", "o", "r", "e"]),
        ],
        Language::Es => &[
            ("pataka", &["p", "a", "t", "a", "k", "a"]),
            ("perro", &["p", "e", "r", "o"]),
            ("luna", &["l", "u", "n", "a"]),
            ("dedo", &["d", "e", "d", "o"]),
            ("siempre", &["s", "j", "e", "m", "p", "r", "e"]),
            ("tres", &["t", "r", "e", "s"]),
        ],
        Language::En => &[
            ("pataka", &["p", "a", "t", "a", "k", "a"]),
            ("water", &["w", "ɔ", "t", "ə"]),
            ("sun", &["s", "ʌ", "n"]),
            ("table", &["t", "e", "b", "ə", "l"]),
            ("milk", &["m", "ɪ", "l", "k"]),
            ("window", &["w", "ɪ", "n", "d", "o"]),
        ],
    }
}

const LANGUAGES: [Language; 3] = [Language::It, Language::Es, Language::En];
const LABELS: [Label; 2] = [Label::PD, Label::HC];

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a complete corpus directory to `out` and returns the planted
/// alignments (also written to `planted.ndjson`).
pub fn generate(cfg: &SynthConfig, out: &Path) -> Result<Vec<PlantedUtterance>> {
    if cfg.min_words == 0 || cfg.max_words < cfg.min_words || cfg.dim == 0 || cfg.speakers_per_group == 0 {
        return Err(Error::InvalidConfig("synthetic corpus needs words, speakers and a feature dimension".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inv = PhonemeInventory::default_ipa();

    let phones: BTreeSet<&str> = LANGUAGES
        .iter()
        .flat_map(|l| lexicon(*l).iter().flat_map(|(_, p)| p.iter().copied()))
        .collect();
    let mut symbols = vec![BLANK_TOKEN.to_string()];
    symbols.extend(phones.iter().map(|s| s.to_string()));
    write(&out.join("symbols.txt"), &(symbols.join("\n") + "\n"))?;
    write(&out.join("inventory.tsv"), &inv.to_tsv())?;

    let embeddings: Vec<Vec<f64>> = symbols.iter().map(|_| gaussian_vec(&mut rng, cfg.dim, 1.0)).collect();
    let mut pd_dir = gaussian_vec(&mut rng, cfg.dim, 1.0);
    let norm = pd_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    pd_dir.iter_mut().for_each(|v| *v /= norm);
    let is_vowel: Vec<bool> = symbols
        .iter()
        .map(|s| inv.get(s) == Some(SonorityClass::Vowel))
        .collect();
    let emission_noise = Normal::new(0.0, cfg.emission_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let feature_noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut utterances = Vec::new();
    let mut planted = Vec::new();
    for lang in LANGUAGES {
        for label in LABELS {
            for s in 0..cfg.speakers_per_group {
                let speaker_id = format!("{}-{}-{s:02}", label_tag(label), lang_tag(lang));
                let speaker_offset = gaussian_vec(&mut rng, cfg.dim, 0.3);
                for u in 0..cfg.utterances_per_speaker {
                    let utterance_id = format!("{speaker_id}-u{u}");
                    let n_words = rng.gen_range(cfg.min_words..=cfg.max_words);
                    let words: Vec<TargetWord> = (0..n_words)
                        .map(|_| {
                            let (w, p) = lexicon(lang).choose(&mut rng).expect("non-empty lexicon");
                            TargetWord {
                                word: w.to_string(),
                                phonemes: p.iter().map(|s| s.to_string()).collect(),
                            }
                        })
                        .collect();
                    let phonemes: Vec<String> = words.iter().flat_map(|w| w.phonemes.iter().cloned()).collect();

                    // Planted frame labels: leading silence, per-phoneme runs with
                    // optional blank gaps (mandatory between repeats), trailing silence.
                    let mut frame_sym: Vec<usize> = vec![0; rng.gen_range(2..=5)];
                    let mut spans = Vec::with_capacity(phonemes.len());
                    for (i, p) in phonemes.iter().enumerate() {
                        let idx = symbols.iter().position(|s| s == p).expect("symbol table covers the lexicon");
                        let repeat = i > 0 && phonemes[i - 1] == *p;
                        let gap = if repeat { rng.gen_range(1..=2) } else { rng.gen_range(0..=1) };
                        frame_sym.extend(std::iter::repeat_n(0, gap));
                        let len = rng.gen_range(2..=6);
                        spans.push((frame_sym.len(), frame_sym.len() + len - 1));
                        frame_sym.extend(std::iter::repeat_n(idx, len));
                    }
                    frame_sym.extend(std::iter::repeat_n(0, rng.gen_range(2..=5)));
                    let frames = frame_sym.len();

                    let v = symbols.len();
                    let mut logprobs = Vec::with_capacity(frames * v);
                    let mut feats = Vec::with_capacity(frames * cfg.dim);
                    for &k in &frame_sym {
                        let mut row: Vec<f64> = (0..v).map(|_| emission_noise.sample(&mut rng)).collect();
                        row[k] += cfg.emission_margin;
                        let lse = crate::ctc::logsumexp(&row);
                        logprobs.extend(row.iter().map(|x| x - lse));

                        let shift = if label == Label::PD && is_vowel[k] { cfg.pd_effect } else { 0.0 };
                        let base = if k == 0 { None } else { Some(&embeddings[k]) };
                        for d in 0..cfg.dim {
                            let e = base.map_or(0.0, |b| b[d]);
                            feats.push(e + speaker_offset[d] + shift * pd_dir[d] + feature_noise.sample(&mut rng));
                        }
                    }
                    let em_name = format!("{utterance_id}.emissions.fmat");
                    Matrix::from_f64(frames, v, &logprobs)?.write(out.join(&em_name))?;
                    let feat_name = format!("{utterance_id}.features.fmat");
                    Matrix::from_f64(frames, cfg.dim, &feats)?.write(out.join(&feat_name))?;
                    let target_name = format!("{utterance_id}.target.ndjson");
                    ndjson::write(out.join(&target_name), &words)?;

                    let vad_probs = if cfg.vad {
                        let name = format!("{utterance_id}.vad.fmat");
                        let hop_s = 512.0 / 16_000.0;
                        let speech = (spans[0].0 as f64 * cfg.frame_dur_s, (spans.last().unwrap().1 + 1) as f64 * cfg.frame_dur_s);
                        let n = (frames as f64 * cfg.frame_dur_s / hop_s).ceil() as usize;
                        let probs: Vec<f64> = (0..n)
                            .map(|i| {
                                let c = (i as f64 + 0.5) * hop_s;
                                if c >= speech.0 && c < speech.1 { 0.9 } else { 0.05 }
                            })
                            .collect();
                        Matrix::from_f64(n, 1, &probs)?.write(out.join(&name))?;
                        Some(name)
                    } else {
                        None
                    };

                    utterances.push(CorpusUtterance {
                        utterance_id: utterance_id.clone(),
                        speaker_id: speaker_id.clone(),
                        language: lang,
                        label,
                        emissions: em_name,
                        frame_dur_s: cfg.frame_dur_s,
                        target: target_name,
                        features: feat_name,
                        vad_probs,
                        offset_s: 0.0,
                    });
                    planted.push(PlantedUtterance {
                        utterance_id,
                        phonemes,
                        frame_spans: spans,
                        frames,
                    });
                }
            }
        }
    }
    ndjson::write(out.join("utterances.ndjson"), &utterances)?;
    ndjson::write(out.join("planted.ndjson"), &planted)?;

    let corpus = CorpusConfig {
        symbols: "symbols.txt".into(),
        inventory: Some("inventory.tsv".into()),
        classifier: Some(small_classifier(cfg.dim)),
        train: Some(small_training()),
        conf_threshold: crate::pipeline::default_conf(),
        vad_frame_hop: 512,
        sample_rate: 16_000,
    };
    let text = serde_json::to_string_pretty(&corpus).map_err(|e| Error::json("corpus.json", e))?;
    write(&out.join("corpus.json"), &(text + "\n"))?;
    Ok(planted)
}

/// Model size used for synthetic corpora.
pub fn small_classifier(dim: usize) -> ClassifierConfig {
    ClassifierConfig {
        input_dim: dim,
        num_layers: 2,
        hidden: 12,
        dropout: 0.1,
        heads: 2,
        classes: 2,
    }
}

pub fn small_training() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        batch_size: 16,
        max_epochs: 20,
        early_stop_patience: 8,
        seeds: 5,
        ..TrainConfig::default()
    }
}

fn label_tag(l: Label) -> &'static str {
    match l {
        Label::PD => "pd",
        Label::HC => "hc",
    }
}

fn lang_tag(l: Language) -> &'static str {
    match l {
        Language::It => "it",
        Language::Es => "es",
        Language::En => "en",
    }
}
