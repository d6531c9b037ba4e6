//! Variational autoencoder over hold vectors.
//!
//! ```text
//! x (198) -> 256 -> 64 -> { mean (16), log-variance (16) }
//! z = mean + exp(logvar / 2) * noise
//! z (16)  -> 64 -> 256 -> 198 logits -> sigmoid -> hold probabilities
//! ```
//!
//! Hidden layers use ReLU. The per-sample objective is the sum of
//!
//! * binary cross-entropy over all 198 holds,
//! * the squared difference between the input hold count and the expected
//!   output hold count (sum of probabilities),
//! * the KL divergence of the diagonal Gaussian posterior from N(0, I),
//!
//! averaged over the batch. All three terms are differentiated by hand in
//! [`VaeNet::backward`].

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{HoldVector, NUM_HOLDS};
use crate::data::Corpus;
use crate::nn::{sigmoid, AdamConfig, AdamState, Linear, Matrix, NnError, ParamLayout, ParamSlot};

pub const LATENT_DIM: usize = 16;
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VaeError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite {term} loss{}", location(*epoch, *batch))]
    NonFiniteLoss { term: &'static str, epoch: Option<usize>, batch: Option<usize> },
    #[error("latent vector has length {actual}, expected {expected}")]
    LatentLength { expected: usize, actual: usize },
    #[error("latent vector contains a non-finite value at position {0}")]
    NonFiniteLatent(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn location(epoch: Option<usize>, batch: Option<usize>) -> String {
    match (epoch, batch) {
        (Some(e), Some(b)) => format!(" at epoch {e}, batch {b}"),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub latent_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { input_dim: NUM_HOLDS, hidden: [256, 64], latent_dim: LATENT_DIM }
    }
}

impl Architecture {
    pub const LAYER_NAMES: [&'static str; 7] = [
        "encoder.0",
        "encoder.1",
        "encoder.mean",
        "encoder.logvar",
        "decoder.0",
        "decoder.1",
        "decoder.out",
    ];

    pub fn with_latent(latent_dim: usize) -> Self {
        Self { latent_dim, ..Self::default() }
    }

    pub fn layout(&self) -> ParamLayout {
        let [h0, h1] = self.hidden;
        let (x, l) = (self.input_dim, self.latent_dim);
        ParamLayout::new(vec![(x, h0), (h0, h1), (h1, l), (h1, l), (l, h1), (h1, h0), (h0, x)])
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().len()
    }
}

/// A point in latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VaeError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VaeError::NonFiniteLatent(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `(1 - t) a + t b`.
    pub fn lerp(&self, other: &LatentVector, t: f64) -> LatentVector {
        LatentVector(self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - t) * a + t * b).collect())
    }
}

/// `mu + exp(logvar / 2) * noise`, elementwise.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> LatentVector {
    LatentVector(
        mu.iter()
            .zip(logvar)
            .zip(noise)
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub binary: f64,
    pub count: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { binary: 1.0, count: 1.0, kl: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub binary: f64,
    pub count: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn weighted(binary: f64, count: f64, kl: f64, w: &LossWeights) -> Self {
        Self { binary, count, kl, total: w.binary * binary + w.count * count + w.kl * kl }
    }

    fn add(&mut self, other: &LossBreakdown) {
        self.binary += other.binary;
        self.count += other.count;
        self.kl += other.kl;
        self.total += other.total;
    }

    fn scaled(&self, s: f64) -> Self {
        Self { binary: self.binary * s, count: self.count * s, kl: self.kl * s, total: self.total * s }
    }

    fn check_finite(self) -> Result<Self, VaeError> {
        for (term, v) in [("binary", self.binary), ("count", self.count), ("kl", self.kl), ("total", self.total)] {
            if !v.is_finite() {
                return Err(VaeError::NonFiniteLoss { term, epoch: None, batch: None });
            }
        }
        Ok(self)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn sample_loss(x: &[f64], probs: &[f64], mu: &[f64], logvar: &[f64], w: &LossWeights) -> LossBreakdown {
    let mut binary = 0.0;
    let (mut sum_x, mut sum_p) = (0.0, 0.0);
    for (&xi, &p) in x.iter().zip(probs) {
        let p = clamp_prob(p);
        binary -= xi * p.ln() + (1.0 - xi) * (1.0 - p).ln();
        sum_x += xi;
        sum_p += p;
    }
    let count = (sum_x - sum_p).powi(2);
    let kl = mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum();
    LossBreakdown::weighted(binary, count, kl, w)
}

/// The three loss terms for one sample with unit weights.
pub fn loss_terms(
    x: &HoldVector,
    probs: &[f64],
    mu: &[f64],
    logvar: &[f64],
) -> Result<LossBreakdown, VaeError> {
    if probs.len() != NUM_HOLDS {
        return Err(NnError::ShapeMismatch { expected: NUM_HOLDS, actual: probs.len() }.into());
    }
    sample_loss(&x.to_f64(), probs, mu, logvar, &LossWeights::default()).check_finite()
}

/// KL divergence of `N(mu, exp(logvar))` from `N(0, I)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter().zip(logvar).map(|(m, lv)| 0.5 * (m * m + lv.exp() - lv - 1.0)).sum()
}

/// Hold vectors prepared for a forward pass.
#[derive(Debug, Clone)]
pub struct Batch {
    active: Vec<Vec<usize>>,
    dense: Matrix,
}

impl Batch {
    pub fn new<'a>(vectors: impl IntoIterator<Item = &'a HoldVector>) -> Self {
        let vectors: Vec<&HoldVector> = vectors.into_iter().collect();
        let mut dense = Matrix::zeros(vectors.len(), NUM_HOLDS);
        let active = vectors
            .iter()
            .enumerate()
            .map(|(b, v)| {
                let ones: Vec<usize> = v.ones().collect();
                for &i in &ones {
                    dense.row_mut(b)[i] = 1.0;
                }
                ones
            })
            .collect();
        Self { active, dense }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub a1: Matrix,
    pub h1: Matrix,
    pub a2: Matrix,
    pub h2: Matrix,
    pub mu: Matrix,
    pub logvar: Matrix,
    pub noise: Matrix,
    pub z: Matrix,
    pub a3: Matrix,
    pub h3: Matrix,
    pub a4: Matrix,
    pub h4: Matrix,
    pub logits: Matrix,
    /// Clamped sigmoid of the logits.
    pub probs: Matrix,
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.data().iter().map(|&v| f(v)).collect())
        .expect("same shape")
}

fn relu_matrix(m: &Matrix) -> Matrix {
    map(m, crate::nn::relu)
}

/// Zeroes gradient entries whose pre-activation was not positive.
fn relu_backward(grad: &mut Matrix, pre: &Matrix) {
    for (g, &a) in grad.data_mut().iter_mut().zip(pre.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// The network evaluated over a borrowed parameter buffer. Forward passes never
/// copy weights, which keeps finite-difference checks cheap.
#[derive(Debug, Clone)]
pub struct VaeNet<'a> {
    arch: Architecture,
    layers: Vec<Linear<'a>>,
}

impl<'a> VaeNet<'a> {
    pub fn new(arch: Architecture, params: &'a [f64]) -> Result<Self, NnError> {
        let layers = arch.layout().views(params)?;
        Ok(Self { arch, layers })
    }

    fn encode_active(&self, active: &[Vec<usize>]) -> (Matrix, Matrix, Matrix, Matrix, Matrix, Matrix) {
        let [h0, _] = self.arch.hidden;
        let mut a1 = Matrix::zeros(active.len(), h0);
        for (b, idx) in active.iter().enumerate() {
            self.layers[0].forward_active_into(idx, a1.row_mut(b));
        }
        let h1 = relu_matrix(&a1);
        let a2 = self.layers[1].forward_batch(&h1).expect("encoder shapes");
        let h2 = relu_matrix(&a2);
        let mu = self.layers[2].forward_batch(&h2).expect("encoder shapes");
        let logvar = self.layers[3].forward_batch(&h2).expect("encoder shapes");
        (a1, h1, a2, h2, mu, logvar)
    }

    fn decode_matrix(&self, z: &Matrix) -> (Matrix, Matrix, Matrix, Matrix, Matrix, Matrix) {
        let a3 = self.layers[4].forward_batch(z).expect("decoder shapes");
        let h3 = relu_matrix(&a3);
        let a4 = self.layers[5].forward_batch(&h3).expect("decoder shapes");
        let h4 = relu_matrix(&a4);
        let logits = self.layers[6].forward_batch(&h4).expect("decoder shapes");
        let probs = map(&logits, |l| clamp_prob(sigmoid(l)));
        (a3, h3, a4, h4, logits, probs)
    }

    /// Encoder means and log-variances, one row per sample.
    pub fn encode_batch(&self, batch: &Batch) -> (Matrix, Matrix) {
        let (.., mu, logvar) = self.encode_active(&batch.active);
        (mu, logvar)
    }

    /// Clamped hold probabilities, one row per latent row.
    pub fn decode_batch(&self, z: &Matrix) -> Result<Matrix, VaeError> {
        if z.cols() != self.arch.latent_dim {
            return Err(VaeError::LatentLength { expected: self.arch.latent_dim, actual: z.cols() });
        }
        Ok(self.decode_matrix(z).5)
    }

    pub fn forward(&self, batch: &Batch, noise: &Matrix) -> ForwardPass {
        assert_eq!((noise.rows(), noise.cols()), (batch.len(), self.arch.latent_dim), "noise shape");
        let (a1, h1, a2, h2, mu, logvar) = self.encode_active(&batch.active);
        let mut z = Matrix::zeros(batch.len(), self.arch.latent_dim);
        for b in 0..batch.len() {
            let zb = reparameterize(mu.row(b), logvar.row(b), noise.row(b));
            z.row_mut(b).copy_from_slice(zb.as_slice());
        }
        let (a3, h3, a4, h4, logits, probs) = self.decode_matrix(&z);
        ForwardPass {
            a1,
            h1,
            a2,
            h2,
            mu,
            logvar,
            noise: noise.clone(),
            z,
            a3,
            h3,
            a4,
            h4,
            logits,
            probs,
        }
    }

    pub fn sample_losses(&self, pass: &ForwardPass, batch: &Batch, w: &LossWeights) -> Vec<LossBreakdown> {
        (0..batch.len())
            .map(|b| {
                sample_loss(
                    batch.dense.row(b),
                    pass.probs.row(b),
                    pass.mu.row(b),
                    pass.logvar.row(b),
                    w,
                )
            })
            .collect()
    }

    /// Batch-mean loss with the given noise.
    pub fn mean_loss(&self, batch: &Batch, noise: &Matrix, w: &LossWeights) -> LossBreakdown {
        let pass = self.forward(batch, noise);
        let mut sum = LossBreakdown::default();
        for l in self.sample_losses(&pass, batch, w) {
            sum.add(&l);
        }
        sum.scaled(1.0 / batch.len() as f64)
    }

    /// Accumulates `scale * d(sum of per-sample losses)/d(params)` into `grads`.
    /// Training uses `scale = 1 / batch_len`, giving the gradient of the mean.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        batch: &Batch,
        w: &LossWeights,
        scale: f64,
        grads: &mut [f64],
    ) -> Result<(), NnError> {
        let mut g = self.arch.layout().grads(grads)?;
        let n = batch.len();
        let l = &self.layers;

        let mut dlogits = Matrix::zeros(n, self.arch.input_dim);
        for b in 0..n {
            let x = batch.dense.row(b);
            let p = pass.probs.row(b);
            let count_gap = p.iter().sum::<f64>() - x.iter().sum::<f64>();
            for (i, d) in dlogits.row_mut(b).iter_mut().enumerate() {
                let raw = sigmoid(pass.logits.get(b, i));
                if !(PROB_EPS..=1.0 - PROB_EPS).contains(&raw) {
                    continue;
                }
                let pi = p[i];
                *d = scale * (w.binary * (pi - x[i]) + w.count * 2.0 * count_gap * pi * (1.0 - pi));
            }
        }

        let mut dh4 = l[6].backward_batch(&pass.h4, &dlogits, &mut g[6], true).expect("input grad");
        relu_backward(&mut dh4, &pass.a4);
        let mut dh3 = l[5].backward_batch(&pass.h3, &dh4, &mut g[5], true).expect("input grad");
        relu_backward(&mut dh3, &pass.a3);
        let dz = l[4].backward_batch(&pass.z, &dh3, &mut g[4], true).expect("input grad");

        let latent = self.arch.latent_dim;
        let mut dmu = Matrix::zeros(n, latent);
        let mut dlv = Matrix::zeros(n, latent);
        for b in 0..n {
            for j in 0..latent {
                let (mu, lv, eps) = (pass.mu.get(b, j), pass.logvar.get(b, j), pass.noise.get(b, j));
                let dzj = dz.get(b, j);
                dmu.row_mut(b)[j] = dzj + scale * w.kl * mu;
                dlv.row_mut(b)[j] =
                    dzj * eps * 0.5 * (0.5 * lv).exp() + scale * w.kl * 0.5 * (lv.exp() - 1.0);
            }
        }

        let mut dh2 = l[2].backward_batch(&pass.h2, &dmu, &mut g[2], true).expect("input grad");
        let dh2_lv = l[3].backward_batch(&pass.h2, &dlv, &mut g[3], true).expect("input grad");
        for (a, b) in dh2.data_mut().iter_mut().zip(dh2_lv.data()) {
            *a += b;
        }
        relu_backward(&mut dh2, &pass.a2);
        let mut dh1 = l[1].backward_batch(&pass.h1, &dh2, &mut g[1], true).expect("input grad");
        relu_backward(&mut dh1, &pass.a1);
        l[0].backward_active(&batch.active, &dh1, &mut g[0]);
        Ok(())
    }
}

/// Model parameters plus the architecture that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    arch: Architecture,
    params: Vec<f64>,
}

impl VaeModel {
    /// Glorot-initialised model.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let params = arch.layout().init(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { arch, params }
    }

    pub fn zeroed(arch: Architecture) -> Self {
        Self { arch, params: vec![0.0; arch.parameter_count()] }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, NnError> {
        let expected = arch.parameter_count();
        if params.len() != expected {
            return Err(NnError::ShapeMismatch { expected, actual: params.len() });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn net(&self) -> VaeNet<'_> {
        VaeNet::new(self.arch, &self.params).expect("parameter count checked at construction")
    }

    pub fn encode(&self, x: &HoldVector) -> (LatentVector, LatentVector) {
        let (mu, logvar) = self.net().encode_batch(&Batch::new([x]));
        (LatentVector(mu.row(0).to_vec()), LatentVector(logvar.row(0).to_vec()))
    }

    /// Hold probabilities, each strictly inside (0, 1).
    pub fn decode(&self, z: &LatentVector) -> Result<Vec<f64>, VaeError> {
        let z = Matrix::from_vec(1, z.len(), z.0.clone())?;
        Ok(self.net().decode_batch(&z)?.row(0).to_vec())
    }

    /// Mean loss over `vectors` with noise drawn from `seed`.
    pub fn evaluate(&self, vectors: &[HoldVector], w: &LossWeights, seed: u64) -> LossBreakdown {
        if vectors.is_empty() {
            return LossBreakdown::default();
        }
        let batch = Batch::new(vectors);
        let noise = standard_normal_matrix(&mut ChaCha8Rng::seed_from_u64(seed), vectors.len(), self.arch.latent_dim);
        self.net().mean_loss(&batch, &noise, w)
    }
}

pub fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Drives shuffling and reparameterisation noise.
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 512,
            adam: AdamConfig::default(),
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Sample-averaged loss for each epoch.
    pub history: Vec<LossBreakdown>,
    pub batch_size: usize,
    pub warnings: Vec<String>,
}

pub fn train(model: &mut VaeModel, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainReport, VaeError> {
    train_with(model, corpus, cfg, |_, _| {})
}

/// Mini-batch Adam training. `on_epoch` sees the 1-based epoch number and
/// that epoch's averaged loss.
pub fn train_with<F>(
    model: &mut VaeModel,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport, VaeError>
where
    F: FnMut(usize, &LossBreakdown),
{
    if corpus.is_empty() {
        return Err(VaeError::EmptyCorpus);
    }
    if cfg.epochs == 0 {
        return Err(VaeError::InvalidConfig("epochs must be at least 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(VaeError::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let batch_size = if cfg.batch_size > corpus.len() {
        let msg = format!(
            "batch size {} exceeds corpus size {}; clamped to {}",
            cfg.batch_size,
            corpus.len(),
            corpus.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
        corpus.len()
    } else {
        cfg.batch_size
    };

    let vectors: Vec<HoldVector> = corpus.iter().map(|p| p.to_vector()).collect();
    let arch = model.arch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam);
    let mut grads = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = LossBreakdown::default();
        for (batch_no, chunk) in order.chunks(batch_size).enumerate() {
            let batch = Batch::new(chunk.iter().map(|&i| &vectors[i]));
            let noise = standard_normal_matrix(&mut rng, chunk.len(), arch.latent_dim);
            let net = VaeNet::new(arch, &model.params)?;
            let pass = net.forward(&batch, &noise);
            for l in net.sample_losses(&pass, &batch, &cfg.weights) {
                l.check_finite().map_err(|e| match e {
                    VaeError::NonFiniteLoss { term, .. } => VaeError::NonFiniteLoss {
                        term,
                        epoch: Some(epoch),
                        batch: Some(batch_no + 1),
                    },
                    other => other,
                })?;
                epoch_sum.add(&l);
            }
            grads.fill(0.0);
            net.backward(&pass, &batch, &cfg.weights, 1.0 / chunk.len() as f64, &mut grads)?;
            adam.step(&mut [ParamSlot { value: &mut model.params, grad: &grads }])?;
        }
        let mean = epoch_sum.scaled(1.0 / vectors.len() as f64);
        on_epoch(epoch, &mean);
        history.push(mean);
    }
    Ok(TrainReport { history, batch_size, warnings })
}

/// CSV with one row per epoch: `epoch,binary,count,kl,total`.
pub fn write_loss_csv(history: &[LossBreakdown], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,binary,count,kl,total")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", i + 1, l.binary, l.count, l.kl, l.total)?;
    }
    out.flush()
}
