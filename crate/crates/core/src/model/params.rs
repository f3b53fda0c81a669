use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmat::Matrix;
use crate::ndjson;

/// Architecture of the BiLSTM + multi-head attention pooling classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub num_layers: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    pub dropout: f64,
    pub heads: usize,
    pub classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_dim: 1024,
            num_layers: 6,
            hidden: 512,
            dropout: 0.3,
            heads: 8,
            classes: 2,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_dim == 0 || self.num_layers == 0 || self.hidden == 0 || self.heads == 0 {
            return bad("dimensions, layers and heads must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("{} classes; at least 2 required", self.classes));
        }
        if !(2 * self.hidden).is_multiple_of(self.heads) {
            return bad(format!(
                "bidirectional width {} is not divisible by {} heads",
                2 * self.hidden,
                self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Width of the concatenated forward/backward hidden state.
    pub fn bi_width(&self) -> usize {
        2 * self.hidden
    }

    /// Projection width of each attention head's scoring network.
    pub fn head_dim(&self) -> usize {
        self.bi_width() / self.heads
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.bi_width()
        }
    }
}

/// Weights of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `4H x input`
    pub w_ih: Vec<f64>,
    /// `4H x H`
    pub w_hh: Vec<f64>,
    /// `4H`
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    /// `head_dim x 2H`
    pub w: Vec<f64>,
    /// `head_dim`
    pub query: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[forward, backward]` per layer.
    pub layers: Vec<[LstmDirection; 2]>,
    pub heads: Vec<AttentionHead>,
    /// `classes x (heads * 2H)`
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: [usize; 2],
    pub data: &'a [f64],
}

impl ModelParams {
    pub fn zeros(cfg: &ClassifierConfig) -> Self {
        let h = cfg.hidden;
        let layers = (0..cfg.num_layers)
            .map(|l| {
                let dir = || LstmDirection {
                    w_ih: vec![0.0; 4 * h * cfg.layer_input(l)],
                    w_hh: vec![0.0; 4 * h * h],
                    bias: vec![0.0; 4 * h],
                };
                [dir(), dir()]
            })
            .collect();
        let heads = (0..cfg.heads)
            .map(|_| AttentionHead {
                w: vec![0.0; cfg.head_dim() * cfg.bi_width()],
                query: vec![0.0; cfg.head_dim()],
            })
            .collect();
        ModelParams {
            layers,
            heads,
            w_out: vec![0.0; cfg.classes * cfg.heads * cfg.bi_width()],
            b_out: vec![0.0; cfg.classes],
        }
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, zero output bias.
    pub fn init(cfg: &ClassifierConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let bound = 1.0 / (cfg.hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        for (name, data) in p.tensors_mut() {
            if name == "out.bias" {
                continue;
            }
            for v in data.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        for layer in &mut p.layers {
            for dir in layer.iter_mut() {
                dir.bias[h..2 * h].fill(1.0);
            }
        }
        p
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (d, dir) in layer.iter().enumerate() {
                let g = dir.bias.len();
                let hidden = g / 4;
                let prefix = format!("lstm.l{l}.{}", direction_name(d));
                out.push(TensorView {
                    name: format!("{prefix}.w_ih"),
                    shape: [g, dir.w_ih.len() / g],
                    data: &dir.w_ih,
                });
                out.push(TensorView {
                    name: format!("{prefix}.w_hh"),
                    shape: [g, hidden],
                    data: &dir.w_hh,
                });
                out.push(TensorView {
                    name: format!("{prefix}.bias"),
                    shape: [1, g],
                    data: &dir.bias,
                });
            }
        }
        for (k, head) in self.heads.iter().enumerate() {
            let a = head.query.len();
            out.push(TensorView {
                name: format!("attn.h{k}.w"),
                shape: [a, head.w.len() / a],
                data: &head.w,
            });
            out.push(TensorView {
                name: format!("attn.h{k}.query"),
                shape: [1, a],
                data: &head.query,
            });
        }
        let c = self.b_out.len();
        out.push(TensorView {
            name: "out.weight".into(),
            shape: [c, self.w_out.len() / c],
            data: &self.w_out,
        });
        out.push(TensorView {
            name: "out.bias".into(),
            shape: [1, c],
            data: &self.b_out,
        });
        out
    }

    /// Mutable parameter tensors, in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (d, dir) in layer.iter_mut().enumerate() {
                let prefix = format!("lstm.l{l}.{}", direction_name(d));
                out.push((format!("{prefix}.w_ih"), &mut dir.w_ih));
                out.push((format!("{prefix}.w_hh"), &mut dir.w_hh));
                out.push((format!("{prefix}.bias"), &mut dir.bias));
            }
        }
        for (k, head) in self.heads.iter_mut().enumerate() {
            out.push((format!("attn.h{k}.w"), &mut head.w));
            out.push((format!("attn.h{k}.query"), &mut head.query));
        }
        out.push(("out.weight".into(), &mut self.w_out));
        out.push(("out.bias".into(), &mut self.b_out));
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, data) in self.tensors_mut() {
            data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    /// Writes one FMAT file per tensor plus `manifest.ndjson`.
    pub fn save(&self, dir: impl AsRef<Path>, step: u64) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for t in self.tensors() {
            let file = format!("{}.fmat", t.name);
            Matrix::from_f64(t.shape[0], t.shape[1], t.data)?.write(dir.join(&file))?;
            entries.push(CheckpointEntry {
                name: t.name,
                file,
                shape: t.shape,
                step,
            });
        }
        ndjson::write(dir.join("manifest.ndjson"), &entries)?;
        let mut files: Vec<String> = entries.into_iter().map(|e| e.file).collect();
        files.push("manifest.ndjson".into());
        Ok(files)
    }

    pub fn load(dir: impl AsRef<Path>, cfg: &ClassifierConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let entries: Vec<CheckpointEntry> = ndjson::read(dir.join("manifest.ndjson"))?;
        let mut p = Self::zeros(cfg);
        let expected: Vec<(String, [usize; 2])> = p.tensors().iter().map(|t| (t.name.clone(), t.shape)).collect();
        for ((name, data), (_, shape)) in p.tensors_mut().into_iter().zip(expected) {
            let e = entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {name}")))?;
            let m = Matrix::read(dir.join(&e.file))?;
            if [m.rows, m.cols] != shape || e.shape != shape {
                return Err(Error::Data(format!(
                    "tensor {name}: shape [{}, {}] does not match config {shape:?}",
                    m.rows, m.cols
                )));
            }
            *data = m.to_f64();
        }
        Ok(p)
    }
}

fn direction_name(d: usize) -> &'static str {
    if d == 0 {
        "fwd"
    } else {
        "bwd"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub file: String,
    pub shape: [usize; 2],
    pub step: u64,
}
