//! Autoencoder-family embeddings.
//!
//! A fully connected autoencoder maps each node's adjacency row (or a window
//! of rows) to a `d`-dimensional code and back. Hidden and output layers use
//! the logistic sigmoid; the code layer is linear. The training objective is
//!
//! ```text
//! L = Σ_rows Σ_j b_j (x̂_j − t_j)² + nu1 Σ|W| + nu2 Σ W²,   b_j = beta if t_j > 0 else 1
//! ```
//!
//! minimized by plain minibatch gradient descent with gradients from manual
//! backpropagation. Series methods built on it:
//!
//! * [`aealign_series`]: a fresh model per snapshot, codes chained by
//!   orthogonal Procrustes alignment,
//! * [`dyngem_series`]: one architecture, each snapshot warm-started from the
//!   previous snapshot's weights,
//! * [`d2v_ae_series`]: one model over lookback windows predicting the next
//!   adjacency row.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::RowDVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{dense_adjacency, GraphError, GraphSnapshot, SnapshotSequence};
use crate::numerics::format::fmt_real;
use crate::numerics::rng::SeededRng;
use crate::numerics::{procrustes_rotation, NumericsError};
use crate::series::{EmbeddingSeries, EmbeddingStep, SeriesError};
use crate::Mat;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("invalid autoencoder config: {0}")]
    InvalidConfig(String),
    #[error("input has {got} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inputs have {inputs} rows but targets have {targets}")]
    RowMismatch { inputs: usize, targets: usize },
    #[error("non-finite activation at layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("sequence of length {len} is too short for lookback {lookback}")]
    SequenceTooShort { len: usize, lookback: usize },
    #[error("no window ends at snapshot {0}")]
    TimeOutOfRange(usize),
    #[error("model file line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Autoencoder hyperparameters. Defaults follow the reference usage:
/// `d=128, beta=5, nu1=nu2=1e-6, units [500,300], 250 epochs, xeta=1e-3,
/// batch 100, lookback 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub d: usize,
    pub beta: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Encoder hidden widths, input side first.
    pub enc_units: Vec<usize>,
    /// Decoder hidden widths, listed like `enc_units` (input side first); the
    /// decoder walks them in reverse so the network mirrors the encoder.
    pub dec_units: Vec<usize>,
    pub n_iter: usize,
    /// Epochs for warm-started snapshots; `None` means `n_iter`.
    pub n_iter_warm: Option<usize>,
    pub xeta: f64,
    pub n_batch: usize,
    pub lookback: usize,
    /// Accepted for compatibility and ignored.
    pub rho: Option<f64>,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            d: 128,
            beta: 5.0,
            nu1: 1e-6,
            nu2: 1e-6,
            enc_units: vec![500, 300],
            dec_units: vec![500, 300],
            n_iter: 250,
            n_iter_warm: None,
            xeta: 1e-3,
            n_batch: 100,
            lookback: 2,
            rho: None,
            seed: 0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<(), AeError> {
        let bad = |m: &str| Err(AeError::InvalidConfig(m.to_string()));
        if self.d == 0 {
            return bad("d must be >= 1");
        }
        if !(self.beta >= 1.0) {
            return bad("beta must be >= 1");
        }
        if !(self.nu1 >= 0.0 && self.nu2 >= 0.0) {
            return bad("nu1 and nu2 must be >= 0");
        }
        if self.lookback == 0 {
            return bad("lookback must be >= 1");
        }
        if self.n_batch == 0 {
            return bad("n_batch must be >= 1");
        }
        if !(self.xeta > 0.0 && self.xeta.is_finite()) {
            return bad("xeta must be > 0");
        }
        if self.enc_units.contains(&0) || self.dec_units.contains(&0) {
            return bad("hidden widths must be >= 1");
        }
        if self.rho.is_some() {
            log::warn!("rho is accepted but has no effect");
        }
        Ok(())
    }
}

/// Dense layer `h ↦ h W + b` with `W` shaped `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: RowDVector<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Mat::zeros(inputs, outputs),
            b: RowDVector::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut w = Mat::zeros(inputs, outputs);
        // Row-major fill so the draw order matches the file layout.
        for i in 0..inputs {
            for j in 0..outputs {
                w[(i, j)] = rng.uniform_range(-limit, limit);
            }
        }
        Self {
            w,
            b: RowDVector::zeros(outputs),
        }
    }

    fn apply(&self, h: &Mat) -> Mat {
        let mut z = h * &self.w;
        for mut row in z.row_iter_mut() {
            row += &self.b;
        }
        z
    }
}

/// Encoder and decoder stacks. The last encoder layer produces the code and
/// is linear; every other layer is followed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MlpParams {
    /// Fresh parameters for `input_dim → enc_units → d → rev(dec_units) → output_dim`.
    pub fn init(input_dim: usize, output_dim: usize, cfg: &AeConfig, rng: &mut SeededRng) -> Self {
        let mut enc_dims = vec![input_dim];
        enc_dims.extend(&cfg.enc_units);
        enc_dims.push(cfg.d);
        let mut dec_dims = vec![cfg.d];
        dec_dims.extend(cfg.dec_units.iter().rev());
        dec_dims.push(output_dim);
        let build = |dims: &[usize], rng: &mut SeededRng| {
            dims.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect()
        };
        let encoder = build(&enc_dims, rng);
        let decoder = build(&dec_dims, rng);
        Self { encoder, decoder }
    }

    /// Same shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let z = |ls: &[Layer]| ls.iter().map(|l| Layer::zeros(l.w.nrows(), l.w.ncols())).collect();
        Self {
            encoder: z(&self.encoder),
            decoder: z(&self.decoder),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.last().expect("decoder layer").w.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.last().expect("encoder layer").w.ncols()
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    fn is_linear(&self, layer: usize) -> bool {
        layer + 1 == self.encoder.len()
    }

    /// Every weight and bias entry in layer order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in self.layers_mut() {
            for x in l.w.iter_mut().chain(l.b.iter_mut()) {
                *x = *it.next().expect("enough values");
            }
        }
        assert!(it.next().is_none(), "too many values");
    }

    /// Indices into [`MlpParams::flat`] that belong to weight matrices.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.extend(std::iter::repeat_n(true, l.w.len()));
            out.extend(std::iter::repeat_n(false, l.b.len()));
        }
        out
    }

    /// `p -= rate * g`
    fn descend(&mut self, grad: &MlpParams, rate: f64) {
        for (l, g) in self.layers_mut().zip(grad.layers()) {
            l.w -= &g.w * rate;
            l.b -= &g.b * rate;
        }
    }

    /// Activations of every layer for a batch of row inputs; element 0 is the
    /// input itself.
    fn forward_all(&self, x: &Mat) -> Result<Vec<Mat>, AeError> {
        if x.ncols() != self.input_dim() {
            return Err(AeError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut acts = Vec::with_capacity(self.encoder.len() + self.decoder.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers().enumerate() {
            let mut h = layer.apply(acts.last().expect("input"));
            if h.iter().any(|v| !v.is_finite()) {
                return Err(AeError::NonFinite { layer: i });
            }
            if !self.is_linear(i) {
                h.apply(|v| *v = sigmoid(*v));
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(AeError::NonFinite { layer: i });
            }
            acts.push(h);
        }
        Ok(acts)
    }

    /// Codes and reconstructions for a batch of rows.
    pub fn forward(&self, x: &Mat) -> Result<(Mat, Mat), AeError> {
        let mut acts = self.forward_all(x)?;
        let xhat = acts.pop().expect("output");
        let code = acts.swap_remove(self.encoder.len());
        Ok((code, xhat))
    }

    pub fn encode(&self, x: &Mat) -> Result<Mat, AeError> {
        Ok(self.forward(x)?.0)
    }
}

/// Code and reconstruction of a single input vector.
pub fn ae_forward(p: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AeError> {
    let (y, xhat) = p.forward(&Mat::from_row_slice(1, x.len(), x))?;
    Ok((y.iter().copied().collect(), xhat.iter().copied().collect()))
}

/// `Σ b_j (x̂_j − t_j)²` with `b_j = beta` where `t_j > 0`, else 1.
pub fn weighted_reconstruction_loss(xhat: &Mat, targets: &Mat, beta: f64) -> f64 {
    xhat.iter()
        .zip(targets.iter())
        .map(|(&x, &t)| {
            let b = if t > 0.0 { beta } else { 1.0 };
            b * (x - t) * (x - t)
        })
        .sum()
}

fn regularization(p: &MlpParams, nu1: f64, nu2: f64) -> f64 {
    p.layers()
        .map(|l| nu1 * l.w.iter().map(|w| w.abs()).sum::<f64>() + nu2 * l.w.iter().map(|w| w * w).sum::<f64>())
        .sum()
}

/// Adds `nu1·sign(W) + 2·nu2·W` to every weight gradient (`sign(0) = 0`).
pub fn add_regularization_gradient(grad: &mut MlpParams, p: &MlpParams, nu1: f64, nu2: f64) {
    for (g, l) in grad.layers_mut().zip(p.layers()) {
        g.w.zip_apply(&l.w, |gw, w| {
            let sign = if w > 0.0 {
                1.0
            } else if w < 0.0 {
                -1.0
            } else {
                0.0
            };
            *gw += nu1 * sign + 2.0 * nu2 * w;
        });
    }
}

fn check_rows(x: &Mat, targets: &Mat, p: &MlpParams) -> Result<(), AeError> {
    if x.nrows() != targets.nrows() {
        return Err(AeError::RowMismatch {
            inputs: x.nrows(),
            targets: targets.nrows(),
        });
    }
    if targets.ncols() != p.output_dim() {
        return Err(AeError::DimensionMismatch {
            expected: p.output_dim(),
            got: targets.ncols(),
        });
    }
    Ok(())
}

/// Full objective: weighted reconstruction plus L1/L2 on the weights.
pub fn ae_loss(p: &MlpParams, x: &Mat, targets: &Mat, cfg: &AeConfig) -> Result<f64, AeError> {
    check_rows(x, targets, p)?;
    let (_, xhat) = p.forward(x)?;
    Ok(weighted_reconstruction_loss(&xhat, targets, cfg.beta) + regularization(p, cfg.nu1, cfg.nu2))
}

/// Objective value and its gradient with respect to every weight and bias.
pub fn ae_loss_and_gradient(
    p: &MlpParams,
    x: &Mat,
    targets: &Mat,
    cfg: &AeConfig,
) -> Result<(f64, MlpParams), AeError> {
    check_rows(x, targets, p)?;
    let acts = p.forward_all(x)?;
    let out = acts.last().expect("output");
    let loss = weighted_reconstruction_loss(out, targets, cfg.beta) + regularization(p, cfg.nu1, cfg.nu2);

    // dL/dx̂ = 2 b ⊙ (x̂ − t)
    let mut upstream = out.zip_map(targets, |o, t| {
        let b = if t > 0.0 { cfg.beta } else { 1.0 };
        2.0 * b * (o - t)
    });
    let mut grad = p.zeros_like();
    let layers: Vec<&Layer> = p.layers().collect();
    let mut grad_layers: Vec<&mut Layer> = grad.layers_mut().collect();
    for i in (0..layers.len()).rev() {
        let h = &acts[i + 1];
        let delta = if p.is_linear(i) {
            upstream
        } else {
            upstream.zip_map(h, |g, s| g * s * (1.0 - s))
        };
        grad_layers[i].w = acts[i].transpose() * &delta;
        grad_layers[i].b = delta.row_sum();
        upstream = delta * layers[i].w.transpose();
    }
    add_regularization_gradient(&mut grad, p, cfg.nu1, cfg.nu2);
    Ok((loss, grad))
}

pub fn ae_gradient(p: &MlpParams, x: &Mat, targets: &Mat, cfg: &AeConfig) -> Result<MlpParams, AeError> {
    Ok(ae_loss_and_gradient(p, x, targets, cfg)?.1)
}

/// Trained parameters with the objective before training and after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: MlpParams,
    pub initial_loss: f64,
    pub losses: Vec<f64>,
}

fn select_rows(m: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Minibatch gradient descent over shuffled rows for `epochs` epochs.
pub fn train(
    mut params: MlpParams,
    x: &Mat,
    targets: &Mat,
    cfg: &AeConfig,
    epochs: usize,
    rng: &mut SeededRng,
) -> Result<Trained, AeError> {
    let initial_loss = ae_loss(&params, x, targets, cfg)?;
    let mut losses = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        for (batch, rows) in order.chunks(cfg.n_batch).enumerate() {
            let xb = select_rows(x, rows);
            let tb = select_rows(targets, rows);
            let (loss, grad) = ae_loss_and_gradient(&params, &xb, &tb, cfg).map_err(|e| match e {
                AeError::NonFinite { .. } => AeError::Diverged { epoch, batch },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(AeError::Diverged { epoch, batch });
            }
            params.descend(&grad, cfg.xeta);
        }
        let loss = ae_loss(&params, x, targets, cfg).map_err(|e| match e {
            AeError::NonFinite { .. } => AeError::Diverged { epoch, batch: usize::MAX },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(AeError::Diverged { epoch, batch: usize::MAX });
        }
        losses.push(loss);
    }
    Ok(Trained {
        params,
        initial_loss,
        losses,
    })
}

/// Trains an autoencoder on the adjacency rows of `g`. The shuffle stream
/// (and the initialization, when `init` is `None`) come from `cfg.seed`.
pub fn train_static_ae(g: &GraphSnapshot, cfg: &AeConfig, init: Option<MlpParams>) -> Result<Trained, AeError> {
    train_static_with(g, cfg, init, cfg.n_iter, &mut SeededRng::new(cfg.seed))
}

fn train_static_with(
    g: &GraphSnapshot,
    cfg: &AeConfig,
    init: Option<MlpParams>,
    epochs: usize,
    rng: &mut SeededRng,
) -> Result<Trained, AeError> {
    cfg.validate()?;
    let a = dense_adjacency(g)?;
    let params = match init {
        Some(p) => p,
        None => MlpParams::init(g.n(), g.n(), cfg, rng),
    };
    train(params, &a, &a, cfg, epochs, rng)
}

/// Per-snapshot models and training curves alongside an embedding series.
#[derive(Debug, Clone)]
pub struct AeSeriesOutput {
    pub series: EmbeddingSeries,
    /// `(t, model)` for every embedded snapshot; shared models repeat.
    pub models: Vec<(usize, MlpParams)>,
    pub curves: Vec<Trained>,
}

impl AeSeriesOutput {
    /// Decoded reconstruction of every node's row at `t`, used as link scores.
    pub fn reconstruction(&self, seq: &SnapshotSequence, t: usize) -> Result<Mat, AeError> {
        let (_, model) = self
            .models
            .iter()
            .find(|(mt, _)| *mt == t)
            .ok_or(AeError::TimeOutOfRange(t))?;
        let a = dense_adjacency(seq.get(t).ok_or(AeError::TimeOutOfRange(t))?)?;
        Ok(model.forward(&a)?.1)
    }
}

fn ae_config_json(cfg: &AeConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Independent autoencoder per snapshot (seed `cfg.seed + t`), codes left
/// in each model's own coordinates.
pub fn static_ae_series(seq: &SnapshotSequence, cfg: &AeConfig) -> Result<AeSeriesOutput, AeError> {
    cfg.validate()?;
    let mut steps = Vec::new();
    let mut models = Vec::new();
    let mut curves = Vec::new();
    for (t, g) in seq.snapshots().iter().enumerate() {
        let mut rng = SeededRng::new(cfg.seed.wrapping_add(t as u64));
        let trained = train_static_with(g, cfg, None, cfg.n_iter, &mut rng)?;
        let y = trained.params.encode(&dense_adjacency(g)?)?;
        steps.push(EmbeddingStep { t, src: y.clone(), tgt: y });
        models.push((t, trained.params.clone()));
        curves.push(trained);
    }
    Ok(AeSeriesOutput {
        series: EmbeddingSeries::new("ae_static", ae_config_json(cfg), steps)?,
        models,
        curves,
    })
}

/// Rotates `current` onto `previous`, returning the aligned codes and `R`.
pub fn align_to(previous: &Mat, current: &Mat) -> Result<(Mat, Mat), AeError> {
    let r = procrustes_rotation(current, previous)?;
    Ok((current * &r, r))
}

/// Independent autoencoder per snapshot (seed `cfg.seed + t`), each
/// snapshot's codes rotated onto the previous aligned codes.
pub fn aealign_series(seq: &SnapshotSequence, cfg: &AeConfig) -> Result<AeSeriesOutput, AeError> {
    aealign_with_seeds(seq, cfg, |t| cfg.seed.wrapping_add(t as u64))
}

fn aealign_with_seeds(
    seq: &SnapshotSequence,
    cfg: &AeConfig,
    seed_for: impl Fn(usize) -> u64,
) -> Result<AeSeriesOutput, AeError> {
    cfg.validate()?;
    let mut steps: Vec<EmbeddingStep> = Vec::new();
    let mut models = Vec::new();
    let mut curves = Vec::new();
    for (t, g) in seq.snapshots().iter().enumerate() {
        let trained = train_static_with(g, cfg, None, cfg.n_iter, &mut SeededRng::new(seed_for(t)))?;
        let mut y = trained.params.encode(&dense_adjacency(g)?)?;
        if let Some(prev) = steps.last() {
            y = align_to(&prev.src, &y)?.0;
        }
        steps.push(EmbeddingStep { t, src: y.clone(), tgt: y });
        models.push((t, trained.params.clone()));
        curves.push(trained);
    }
    Ok(AeSeriesOutput {
        series: EmbeddingSeries::new("aealign", ae_config_json(cfg), steps)?,
        models,
        curves,
    })
}

/// Fixed architecture, snapshot `t` initialized from snapshot `t−1`'s trained
/// weights. The first snapshot trains `n_iter` epochs from a fresh
/// initialization, later ones `n_iter_warm` (default `n_iter`).
pub fn dyngem_series(seq: &SnapshotSequence, cfg: &AeConfig) -> Result<AeSeriesOutput, AeError> {
    cfg.validate()?;
    let mut steps = Vec::new();
    let mut models: Vec<(usize, MlpParams)> = Vec::new();
    let mut curves = Vec::new();
    for (t, g) in seq.snapshots().iter().enumerate() {
        let mut rng = SeededRng::new(cfg.seed.wrapping_add(t as u64));
        let (init, epochs) = match models.last() {
            None => (None, cfg.n_iter),
            Some((_, prev)) => (Some(prev.clone()), cfg.n_iter_warm.unwrap_or(cfg.n_iter)),
        };
        let trained = train_static_with(g, cfg, init, epochs, &mut rng)?;
        let y = trained.params.encode(&dense_adjacency(g)?)?;
        steps.push(EmbeddingStep { t, src: y.clone(), tgt: y });
        models.push((t, trained.params.clone()));
        curves.push(trained);
    }
    Ok(AeSeriesOutput {
        series: EmbeddingSeries::new("dyngem", ae_config_json(cfg), steps)?,
        models,
        curves,
    })
}

/// Concatenated rows `a_u(t−L+1) … a_u(t)` for every node.
fn window_inputs(adj: &[Mat], end: usize, lookback: usize) -> Mat {
    let n = adj[0].nrows();
    let mut x = Mat::zeros(n, n * lookback);
    for (slot, a) in adj[end + 1 - lookback..=end].iter().enumerate() {
        x.columns_mut(slot * n, n).copy_from(a);
    }
    x
}

/// Snapshot indices `(window_end, target)` of the training pairs.
pub fn d2v_training_windows(len: usize, lookback: usize) -> Vec<(usize, usize)> {
    (lookback.saturating_sub(1)..len.saturating_sub(1)).map(|t| (t, t + 1)).collect()
}

/// Trained lookback model; decodes a window into the next-step adjacency.
#[derive(Debug, Clone)]
pub struct D2vPredictor {
    pub params: MlpParams,
    pub lookback: usize,
}

impl D2vPredictor {
    /// Predicted adjacency of snapshot `t + 1` from the window ending at `t`.
    pub fn predict_next(&self, seq: &SnapshotSequence, t: usize) -> Result<Mat, AeError> {
        if t + 1 < self.lookback || t >= seq.len() {
            return Err(AeError::TimeOutOfRange(t));
        }
        let adj = seq.snapshots()[t + 1 - self.lookback..=t]
            .iter()
            .map(dense_adjacency)
            .collect::<Result<Vec<_>, _>>()?;
        let x = window_inputs(&adj, self.lookback - 1, self.lookback);
        Ok(self.params.forward(&x)?.1)
    }
}

/// One autoencoder over all lookback windows: input the `lookback` most
/// recent rows of a node, target its next row. Embeddings exist for every
/// snapshot that ends a full window.
pub fn d2v_ae_series(seq: &SnapshotSequence, cfg: &AeConfig) -> Result<(AeSeriesOutput, D2vPredictor), AeError> {
    cfg.validate()?;
    let (len, lookback, n) = (seq.len(), cfg.lookback, seq.n());
    if len < lookback + 1 {
        return Err(AeError::SequenceTooShort { len, lookback });
    }
    let adj = seq
        .snapshots()
        .iter()
        .map(dense_adjacency)
        .collect::<Result<Vec<_>, _>>()?;
    let windows = d2v_training_windows(len, lookback);
    let mut x = Mat::zeros(windows.len() * n, n * lookback);
    let mut targets = Mat::zeros(windows.len() * n, n);
    for (k, &(end, target)) in windows.iter().enumerate() {
        x.rows_mut(k * n, n).copy_from(&window_inputs(&adj, end, lookback));
        targets.rows_mut(k * n, n).copy_from(&adj[target]);
    }

    let mut rng = SeededRng::new(cfg.seed);
    let init = MlpParams::init(n * lookback, n, cfg, &mut rng);
    let trained = train(init, &x, &targets, cfg, cfg.n_iter, &mut rng)?;

    let mut steps = Vec::new();
    let mut models = Vec::new();
    for end in lookback - 1..len {
        let y = trained.params.encode(&window_inputs(&adj, end, lookback))?;
        steps.push(EmbeddingStep { t: end, src: y.clone(), tgt: y });
        models.push((end, trained.params.clone()));
    }
    let predictor = D2vPredictor {
        params: trained.params.clone(),
        lookback,
    };
    let out = AeSeriesOutput {
        series: EmbeddingSeries::new("d2v_ae", ae_config_json(cfg), steps)?,
        models,
        curves: vec![trained],
    };
    Ok((out, predictor))
}

fn layers_to_text(layers: &[Layer]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", layers.len()).unwrap();
    for l in layers {
        writeln!(out, "{} {}", l.w.nrows(), l.w.ncols()).unwrap();
        for row in l.w.row_iter() {
            let vals: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
        let bias: Vec<String> = l.b.iter().map(|&v| fmt_real(v)).collect();
        writeln!(out, "{}", bias.join(" ")).unwrap();
    }
    out
}

fn layers_from_text(text: &str) -> Result<Vec<Layer>, AeError> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| AeError::ModelFormat {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };
    fn reals(line: usize, s: &str, want: usize) -> Result<Vec<f64>, AeError> {
        let vals = s
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| AeError::ModelFormat { line: line + 1, msg: "malformed real".into() })?;
        if vals.len() != want {
            return Err(AeError::ModelFormat {
                line: line + 1,
                msg: format!("expected {want} values, found {}", vals.len()),
            });
        }
        Ok(vals)
    }
    let (ln, header) = next("layer count")?;
    let count: usize = header
        .trim()
        .parse()
        .map_err(|_| AeError::ModelFormat { line: ln + 1, msg: "malformed layer count".into() })?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, dims) = next("layer shape")?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(|x| x.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| AeError::ModelFormat { line: ln + 1, msg: "malformed shape".into() })?;
        let [rows, cols] = dims[..] else {
            return Err(AeError::ModelFormat { line: ln + 1, msg: "shape must be `rows cols`".into() });
        };
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = next("weight row")?;
            w.extend(reals(ln, row, cols)?);
        }
        let (ln, bias) = next("bias row")?;
        layers.push(Layer {
            w: Mat::from_row_slice(rows, cols, &w),
            b: RowDVector::from_vec(reals(ln, bias, cols)?),
        });
    }
    Ok(layers)
}

/// Writes the encoder and decoder stacks to separate files.
pub fn save_model(p: &MlpParams, encoder_path: &Path, decoder_path: &Path) -> Result<(), AeError> {
    std::fs::write(encoder_path, layers_to_text(&p.encoder))?;
    std::fs::write(decoder_path, layers_to_text(&p.decoder))?;
    Ok(())
}

pub fn load_model(encoder_path: &Path, decoder_path: &Path) -> Result<MlpParams, AeError> {
    let encoder = layers_from_text(&std::fs::read_to_string(encoder_path)?)?;
    let decoder = layers_from_text(&std::fs::read_to_string(decoder_path)?)?;
    let chained = |ls: &[Layer]| ls.windows(2).all(|w| w[0].w.ncols() == w[1].w.nrows());
    let joined = match (encoder.last(), decoder.first()) {
        (Some(e), Some(d)) => e.w.ncols() == d.w.nrows(),
        _ => false,
    };
    if !(joined && chained(&encoder) && chained(&decoder)) {
        return Err(AeError::ModelFormat {
            line: 0,
            msg: "layer dimensions do not chain".into(),
        });
    }
    Ok(MlpParams { encoder, decoder })
}
