//! Forward and reverse-mode passes of the BiLSTM + attention pooling classifier.
//!
//! Each sequence of a batch is run on its valid steps only, so padding never
//! enters the recurrence, the attention softmax or the gradients.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ClassifierConfig, LstmDirection, ModelParams};
use crate::dataset::Batch;
use crate::error::{Error, Result};

/// Probability floor used by the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `batch x classes`
    pub probs: Vec<Vec<f64>>,
    /// `batch x heads x max_len`, zero on padded steps.
    pub attention: Vec<Vec<Vec<f64>>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W` of shape `out.len() x x.len()`.
#[inline]
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ y` for row-major `W` of shape `y.len() x out.len()`.
#[inline]
fn matvec_t_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (&yi, row) in y.iter().zip(w.chunks_exact(n)) {
        if yi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
    }
}

/// `W += y xᵀ`
#[inline]
fn outer_add(w: &mut [f64], y: &[f64], x: &[f64]) {
    let n = x.len();
    for (&yi, row) in y.iter().zip(w.chunks_exact_mut(n)) {
        if yi != 0.0 {
            for (a, b) in row.iter_mut().zip(x) {
                *a += yi * b;
            }
        }
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_finite(values: &[f64], location: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            location: location(),
            detail: "non-finite activation".into(),
        })
    }
}

/// Activations of one direction, indexed by time step.
struct DirectionCache {
    /// Post-activation gates `i, f, g, o`, `len x 4H`.
    gates: Vec<f64>,
    /// `len x H`
    cells: Vec<f64>,
    /// `len x H`
    hidden: Vec<f64>,
}

struct LayerCache {
    /// Input actually fed to the layer (after dropout), `len x in`.
    input: Vec<f64>,
    dirs: [DirectionCache; 2],
}

struct SequenceCache {
    len: usize,
    layers: Vec<LayerCache>,
    /// Dropout multipliers applied to each layer's output before the next layer.
    dropout_masks: Vec<Option<Vec<f64>>>,
    /// Output of the last layer, `len x 2H`.
    top: Vec<f64>,
    /// Per head: `tanh(W y_t)`, `len x head_dim`.
    head_act: Vec<Vec<f64>>,
    /// Per head: attention weights over valid steps.
    alpha: Vec<Vec<f64>>,
    /// Concatenated head contexts.
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

fn time_order(len: usize, dir: usize) -> Box<dyn Iterator<Item = usize>> {
    if dir == 0 {
        Box::new(0..len)
    } else {
        Box::new((0..len).rev())
    }
}

fn run_direction(p: &LstmDirection, input: &[f64], in_dim: usize, len: usize, h: usize, dir: usize) -> DirectionCache {
    let mut cache = DirectionCache {
        gates: vec![0.0; len * 4 * h],
        cells: vec![0.0; len * h],
        hidden: vec![0.0; len * h],
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut a = vec![0.0; 4 * h];
    for t in time_order(len, dir) {
        a.copy_from_slice(&p.bias);
        matvec_add(&p.w_ih, &input[t * in_dim..(t + 1) * in_dim], &mut a);
        matvec_add(&p.w_hh, &h_prev, &mut a);
        let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let i = sigmoid(a[j]);
            let f = sigmoid(a[h + j]);
            let g = a[2 * h + j].tanh();
            let o = sigmoid(a[3 * h + j]);
            gates[j] = i;
            gates[h + j] = f;
            gates[2 * h + j] = g;
            gates[3 * h + j] = o;
            let c = f * c_prev[j] + i * g;
            c_prev[j] = c;
            h_prev[j] = o * c.tanh();
        }
        cache.cells[t * h..(t + 1) * h].copy_from_slice(&c_prev);
        cache.hidden[t * h..(t + 1) * h].copy_from_slice(&h_prev);
    }
    cache
}

fn forward_sequence(
    x: &[f64],
    len: usize,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<SequenceCache> {
    if len == 0 {
        return Err(Error::Precondition("sequence has no valid steps".into()));
    }
    let h = cfg.hidden;
    let bw = cfg.bi_width();
    let mut input = x.to_vec();
    let mut layers = Vec::with_capacity(cfg.num_layers);
    let mut dropout_masks = Vec::with_capacity(cfg.num_layers);
    for (l, lp) in params.layers.iter().enumerate() {
        let in_dim = cfg.layer_input(l);
        let fwd = run_direction(&lp[0], &input, in_dim, len, h, 0);
        let bwd = run_direction(&lp[1], &input, in_dim, len, h, 1);
        let mut out = vec![0.0; len * bw];
        for t in 0..len {
            out[t * bw..t * bw + h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
            out[t * bw + h..(t + 1) * bw].copy_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
        }
        check_finite(&out, || format!("lstm layer {l}"))?;
        let last = l + 1 == cfg.num_layers;
        let mask = match dropout.as_deref_mut() {
            Some(rng) if !last && cfg.dropout > 0.0 => {
                let keep = 1.0 - cfg.dropout;
                let m: Vec<f64> = (0..out.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                out.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                Some(m)
            }
            _ => None,
        };
        dropout_masks.push(mask);
        layers.push(LayerCache {
            input: std::mem::replace(&mut input, out),
            dirs: [fwd, bwd],
        });
    }
    let top = input;

    let a = cfg.head_dim();
    let mut head_act = Vec::with_capacity(cfg.heads);
    let mut alpha = Vec::with_capacity(cfg.heads);
    let mut pooled = vec![0.0; cfg.heads * bw];
    for (k, head) in params.heads.iter().enumerate() {
        let mut act = vec![0.0; len * a];
        let mut scores = vec![0.0; len];
        for t in 0..len {
            let u = &mut act[t * a..(t + 1) * a];
            matvec_add(&head.w, &top[t * bw..(t + 1) * bw], u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            scores[t] = u.iter().zip(&head.query).map(|(x, q)| x * q).sum();
        }
        let w = softmax(&scores);
        check_finite(&w, || format!("attention head {k}"))?;
        let ctx = &mut pooled[k * bw..(k + 1) * bw];
        for t in 0..len {
            for (c, y) in ctx.iter_mut().zip(&top[t * bw..(t + 1) * bw]) {
                *c += w[t] * y;
            }
        }
        head_act.push(act);
        alpha.push(w);
    }

    let mut logits = params.b_out.clone();
    matvec_add(&params.w_out, &pooled, &mut logits);
    check_finite(&logits, || "classifier".into())?;
    let probs = softmax(&logits);

    Ok(SequenceCache {
        len,
        layers,
        dropout_masks,
        top,
        head_act,
        alpha,
        pooled,
        probs,
    })
}

fn check_batch(batch: &Batch, params: &ModelParams, cfg: &ClassifierConfig) -> Result<()> {
    cfg.validate()?;
    if batch.dim != cfg.input_dim {
        return Err(Error::Precondition(format!(
            "batch feature dimension {} does not match model input {}",
            batch.dim, cfg.input_dim
        )));
    }
    if params.layers.len() != cfg.num_layers || params.heads.len() != cfg.heads {
        return Err(Error::Precondition("parameters do not match the configuration".into()));
    }
    if let Some(i) = batch.lengths.iter().position(|&l| l == 0) {
        return Err(Error::Precondition(format!(
            "sequence {} ({}) is fully masked",
            i, batch.utterance_ids.get(i).map_or("?", String::as_str)
        )));
    }
    Ok(())
}

fn forward_caches(
    batch: &Batch,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    dropout_seed: Option<u64>,
) -> Result<Vec<SequenceCache>> {
    check_batch(batch, params, cfg)?;
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    (0..batch.size())
        .map(|i| forward_sequence(batch.sequence(i), batch.lengths[i], params, cfg, rng.as_mut()))
        .collect()
}

/// Class probabilities and per-head attention for every sequence of `batch`.
///
/// Dropout between LSTM layers is active only when `train_mode` is set; its
/// masks are drawn from `dropout_seed`.
pub fn forward(
    batch: &Batch,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    train_mode: bool,
    dropout_seed: u64,
) -> Result<ForwardOutput> {
    let caches = forward_caches(batch, params, cfg, train_mode.then_some(dropout_seed))?;
    let probs = caches.iter().map(|c| c.probs.clone()).collect();
    let attention = caches
        .iter()
        .map(|c| {
            c.alpha
                .iter()
                .map(|w| {
                    let mut row = w.clone();
                    row.resize(batch.max_len, 0.0);
                    row
                })
                .collect()
        })
        .collect();
    Ok(ForwardOutput { probs, attention })
}

/// Mean negative log-likelihood of the true classes.
pub fn cross_entropy_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Consistency(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("probabilities sum to {s}")));
        }
        let p = *row
            .get(y)
            .ok_or_else(|| Error::Consistency(format!("label {y} out of range")))?;
        if p < PROB_FLOOR {
            warn!("true-class probability {p} clamped to {PROB_FLOOR}");
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

fn backward_direction(
    p: &LstmDirection,
    g: &mut LstmDirection,
    cache: &DirectionCache,
    input: &[f64],
    in_dim: usize,
    len: usize,
    h: usize,
    dir: usize,
    dh_out: &[f64],
    dx: &mut [f64],
) {
    let zeros = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    let order: Vec<usize> = time_order(len, dir).collect();
    for (pos, &t) in order.iter().enumerate().rev() {
        let prev = pos.checked_sub(1).map(|q| order[q]);
        let (h_prev, c_prev) = match prev {
            Some(q) => (&cache.hidden[q * h..(q + 1) * h], &cache.cells[q * h..(q + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let cells = &cache.cells[t * h..(t + 1) * h];
        for j in 0..h {
            let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = cells[j].tanh();
            let dh = dh_out[t * h + j] + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            dc_next[j] = dc * f;
            da[j] = dc * gg * i * (1.0 - i);
            da[h + j] = dc * c_prev[j] * f * (1.0 - f);
            da[2 * h + j] = dc * i * (1.0 - gg * gg);
            da[3 * h + j] = dh * tc * o * (1.0 - o);
        }
        let x_t = &input[t * in_dim..(t + 1) * in_dim];
        outer_add(&mut g.w_ih, &da, x_t);
        outer_add(&mut g.w_hh, &da, h_prev);
        g.bias.iter_mut().zip(&da).for_each(|(b, d)| *b += d);
        matvec_t_add(&p.w_ih, &da, &mut dx[t * in_dim..(t + 1) * in_dim]);
        dh_next.fill(0.0);
        matvec_t_add(&p.w_hh, &da, &mut dh_next);
    }
}

/// Accumulates gradients of `weight * (-ln p_y)` for one sequence.
fn backward_sequence(
    cache: &SequenceCache,
    label: usize,
    weight: f64,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    grads: &mut ModelParams,
) {
    let len = cache.len;
    let h = cfg.hidden;
    let bw = cfg.bi_width();
    let a = cfg.head_dim();

    // Softmax + cross-entropy: dL/dz = p - y.
    let dz: Vec<f64> = cache
        .probs
        .iter()
        .enumerate()
        .map(|(c, p)| weight * (p - if c == label { 1.0 } else { 0.0 }))
        .collect();
    outer_add(&mut grads.w_out, &dz, &cache.pooled);
    grads.b_out.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
    let mut dpooled = vec![0.0; cfg.heads * bw];
    matvec_t_add(&params.w_out, &dz, &mut dpooled);

    let mut dtop = vec![0.0; len * bw];
    for (k, head) in params.heads.iter().enumerate() {
        let dctx = &dpooled[k * bw..(k + 1) * bw];
        let alpha = &cache.alpha[k];
        let act = &cache.head_act[k];
        let mut dalpha = vec![0.0; len];
        for t in 0..len {
            let y = &cache.top[t * bw..(t + 1) * bw];
            dalpha[t] = dctx.iter().zip(y).map(|(d, v)| d * v).sum();
            for (dy, d) in dtop[t * bw..(t + 1) * bw].iter_mut().zip(dctx) {
                *dy += alpha[t] * d;
            }
        }
        let mean: f64 = alpha.iter().zip(&dalpha).map(|(w, d)| w * d).sum();
        let gh = &mut grads.heads[k];
        let mut du = vec![0.0; a];
        for t in 0..len {
            let ds = alpha[t] * (dalpha[t] - mean);
            let u = &act[t * a..(t + 1) * a];
            for j in 0..a {
                gh.query[j] += ds * u[j];
                du[j] = ds * head.query[j] * (1.0 - u[j] * u[j]);
            }
            outer_add(&mut gh.w, &du, &cache.top[t * bw..(t + 1) * bw]);
            matvec_t_add(&head.w, &du, &mut dtop[t * bw..(t + 1) * bw]);
        }
    }

    let mut dy = dtop;
    for l in (0..cfg.num_layers).rev() {
        let layer = &cache.layers[l];
        let in_dim = cfg.layer_input(l);
        let mut dh_f = vec![0.0; len * h];
        let mut dh_b = vec![0.0; len * h];
        for t in 0..len {
            dh_f[t * h..(t + 1) * h].copy_from_slice(&dy[t * bw..t * bw + h]);
            dh_b[t * h..(t + 1) * h].copy_from_slice(&dy[t * bw + h..(t + 1) * bw]);
        }
        let mut dx = vec![0.0; len * in_dim];
        let [gf, gb] = &mut grads.layers[l];
        backward_direction(&params.layers[l][0], gf, &layer.dirs[0], &layer.input, in_dim, len, h, 0, &dh_f, &mut dx);
        backward_direction(&params.layers[l][1], gb, &layer.dirs[1], &layer.input, in_dim, len, h, 1, &dh_b, &mut dx);
        if l > 0 {
            if let Some(mask) = &cache.dropout_masks[l - 1] {
                dx.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
        }
        dy = dx;
    }
}

/// Loss and exact gradients for `batch`, optionally with dropout masks drawn
/// from `dropout_seed` (the same masks [`forward`] would draw in train mode).
pub fn loss_and_gradients(
    batch: &Batch,
    params: &ModelParams,
    cfg: &ClassifierConfig,
    dropout_seed: Option<u64>,
) -> Result<(f64, ModelParams)> {
    let caches = forward_caches(batch, params, cfg, dropout_seed)?;
    let probs: Vec<Vec<f64>> = caches.iter().map(|c| c.probs.clone()).collect();
    let loss = cross_entropy_loss(&probs, &batch.labels)?;
    let mut grads = ModelParams::zeros(cfg);
    let weight = 1.0 / batch.size() as f64;
    for (cache, &y) in caches.iter().zip(&batch.labels) {
        backward_sequence(cache, y, weight, params, cfg, &mut grads);
    }
    Ok((loss, grads))
}

/// Exact gradients of the mean cross-entropy with dropout disabled.
pub fn backward(batch: &Batch, params: &ModelParams, cfg: &ClassifierConfig) -> Result<ModelParams> {
    loss_and_gradients(batch, params, cfg, None).map(|(_, g)| g)
}
