//! A small dense network toolkit: row-major matrices, linear layers with
//! hand-written backward passes, Adam, and a central-difference gradient
//! checker.
//!
//! Layers are thin views over parameter slices, so a model can keep every
//! weight in one flat buffer. The optimizer, the checkpoint writer and the
//! gradient checker all work on that buffer directly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("finite-difference epsilon {0} outside [1e-6, 1e-4]")]
    InvalidEpsilon(f64),
}

fn check_len(expected: usize, actual: usize) -> Result<(), NnError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch { expected, actual })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }
}

/// Dot product with four interleaved accumulators. The summation order is
/// fixed, so results do not depend on how rows are batched.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(relu).collect()
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(sigmoid).collect()
}

/// Borrowed view of a linear layer: `weight` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, Copy)]
pub struct Linear<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub inputs: usize,
    pub outputs: usize,
}

impl<'a> Linear<'a> {
    pub fn new(
        weight: &'a [f64],
        bias: &'a [f64],
        inputs: usize,
        outputs: usize,
    ) -> Result<Self, NnError> {
        check_len(inputs * outputs, weight.len())?;
        check_len(outputs, bias.len())?;
        Ok(Self { weight, bias, inputs, outputs })
    }

    fn weight_row(&self, j: usize) -> &'a [f64] {
        &self.weight[j * self.inputs..(j + 1) * self.inputs]
    }

    /// `out = W x + b` for one sample.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.bias[j] + dot(self.weight_row(j), x);
        }
    }

    /// Forward pass for a binary input given as the indices of its ones.
    pub fn forward_active_into(&self, active: &[usize], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = self.weight_row(j);
            let mut acc = self.bias[j];
            for &k in active {
                acc += row[k];
            }
            *o = acc;
        }
    }

    /// Row-wise forward over a batch. Each row goes through the same kernel as
    /// [`Linear::forward_into`], so batched and per-sample results agree bit
    /// for bit.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        check_len(self.inputs, x.cols())?;
        let mut out = Matrix::zeros(x.rows(), self.outputs);
        for b in 0..x.rows() {
            self.forward_into(x.row(b), out.row_mut(b));
        }
        Ok(out)
    }

    /// Accumulates parameter gradients for a batch and optionally returns the
    /// gradient with respect to the input. Per-element accumulation runs over
    /// samples in order, matching a per-sample loop.
    pub fn backward_batch(
        &self,
        x: &Matrix,
        grad_out: &Matrix,
        grad: &mut LinearGrad<'_>,
        want_input_grad: bool,
    ) -> Option<Matrix> {
        debug_assert_eq!(grad_out.cols(), self.outputs);
        for j in 0..self.outputs {
            let gw = &mut grad.weight[j * self.inputs..(j + 1) * self.inputs];
            for b in 0..x.rows() {
                let g = grad_out.get(b, j);
                if g != 0.0 {
                    axpy(g, x.row(b), gw);
                }
                grad.bias[j] += g;
            }
        }
        want_input_grad.then(|| {
            let mut gin = Matrix::zeros(x.rows(), self.inputs);
            for b in 0..x.rows() {
                let row = gin.row_mut(b);
                for j in 0..self.outputs {
                    let g = grad_out.get(b, j);
                    if g != 0.0 {
                        axpy(g, self.weight_row(j), row);
                    }
                }
            }
            gin
        })
    }

    /// Gradient accumulation for binary inputs given by active indices.
    pub fn backward_active(&self, active: &[Vec<usize>], grad_out: &Matrix, grad: &mut LinearGrad<'_>) {
        for j in 0..self.outputs {
            let gw = &mut grad.weight[j * self.inputs..(j + 1) * self.inputs];
            for (b, idx) in active.iter().enumerate() {
                let g = grad_out.get(b, j);
                for &k in idx {
                    gw[k] += g;
                }
                grad.bias[j] += g;
            }
        }
    }
}

/// Mutable gradient buffers matching a [`Linear`] view.
#[derive(Debug)]
pub struct LinearGrad<'a> {
    pub weight: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Shapes of a stack of linear layers stored back to back in one buffer,
/// each as its weight followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    shapes: Vec<(usize, usize)>,
}

impl ParamLayout {
    /// `shapes` holds `(inputs, outputs)` per layer.
    pub fn new(shapes: Vec<(usize, usize)>) -> Self {
        Self { shapes }
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.iter().map(|&(i, o)| i * o + o).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn views<'a>(&self, params: &'a [f64]) -> Result<Vec<Linear<'a>>, NnError> {
        check_len(self.len(), params.len())?;
        let mut rest = params;
        let mut layers = Vec::with_capacity(self.shapes.len());
        for &(inputs, outputs) in &self.shapes {
            let (w, r) = rest.split_at(inputs * outputs);
            let (b, r) = r.split_at(outputs);
            rest = r;
            layers.push(Linear { weight: w, bias: b, inputs, outputs });
        }
        Ok(layers)
    }

    pub fn grads<'a>(&self, buf: &'a mut [f64]) -> Result<Vec<LinearGrad<'a>>, NnError> {
        check_len(self.len(), buf.len())?;
        let mut rest = buf;
        let mut out = Vec::with_capacity(self.shapes.len());
        for &(inputs, outputs) in &self.shapes {
            let (w, r) = rest.split_at_mut(inputs * outputs);
            let (b, r) = r.split_at_mut(outputs);
            rest = r;
            out.push(LinearGrad { weight: w, bias: b });
        }
        Ok(out)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.len());
        for &(inputs, outputs) in &self.shapes {
            let limit = (6.0 / (inputs + outputs) as f64).sqrt();
            params.extend((0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, outputs));
        }
        params
    }
}

/// An owned linear layer with its gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        check_len(weight.rows(), bias.len())?;
        let grad_weight = Matrix::zeros(weight.rows(), weight.cols());
        let grad_bias = vec![0.0; bias.len()];
        Ok(Self { weight, bias, grad_weight, grad_bias })
    }

    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let params = ParamLayout::new(vec![(inputs, outputs)]).init(rng);
        let (w, b) = params.split_at(inputs * outputs);
        Self::new(Matrix::from_vec(outputs, inputs, w.to_vec()).unwrap(), b.to_vec()).unwrap()
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn view(&self) -> Linear<'_> {
        Linear {
            weight: self.weight.data(),
            bias: &self.bias,
            inputs: self.inputs(),
            outputs: self.outputs(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn backward_batch(&mut self, x: &Matrix, grad_out: &Matrix) -> Matrix {
        let view = Linear {
            weight: self.weight.data(),
            bias: &self.bias,
            inputs: self.weight.cols(),
            outputs: self.weight.rows(),
        };
        let mut grad = LinearGrad { weight: self.grad_weight.data_mut(), bias: &mut self.grad_bias };
        view.backward_batch(x, grad_out, &mut grad, true).expect("input gradient requested")
    }

    pub fn slots(&mut self) -> [ParamSlot<'_>; 2] {
        [
            ParamSlot { value: self.weight.data_mut(), grad: self.grad_weight.data() },
            ParamSlot { value: &mut self.bias, grad: &self.grad_bias },
        ]
    }
}

/// `y = W x + b`.
pub fn linear_forward(layer: &LinearLayer, x: &[f64]) -> Result<Vec<f64>, NnError> {
    check_len(layer.inputs(), x.len())?;
    let mut out = vec![0.0; layer.outputs()];
    layer.view().forward_into(x, &mut out);
    Ok(out)
}

/// A parameter tensor paired with its gradient.
pub struct ParamSlot<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first step
/// and must keep matching the slot shapes afterwards.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step_count: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<(), NnError> {
        let mut offset = 0;
        for slot in slots.iter() {
            check_len(slot.value.len(), slot.grad.len())?;
            if let Some(i) = slot.grad.iter().position(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient { index: offset + i });
            }
            offset += slot.grad.len();
        }
        if self.first.is_empty() {
            self.first = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
            self.second = self.first.clone();
        } else {
            check_len(self.first.len(), slots.len())?;
            for (m, s) in self.first.iter().zip(slots.iter()) {
                check_len(m.len(), s.value.len())?;
            }
        }

        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as f64;
        let correction1 = 1.0 - beta1.powf(t);
        let correction2 = 1.0 - beta2.powf(t);
        for ((slot, m), v) in slots.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..slot.value.len() {
                let g = slot.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                slot.value[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Max over parameters of `|analytic - numeric| / max(1, |numeric|)`.
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Central-difference gradient check. `params` is perturbed in place, one
/// coordinate at a time, and restored exactly before returning.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &mut [f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<GradCheck, NnError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(NnError::InvalidEpsilon(epsilon));
    }
    check_len(params.len(), analytic.len())?;
    let mut report = GradCheck { max_relative_error: 0.0, worst_index: 0, checked: 0 };
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + epsilon;
        let plus = loss(params);
        params[i] = original - epsilon;
        let minus = loss(params);
        params[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        if err.is_nan() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
