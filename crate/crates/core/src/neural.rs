//! Small fully connected networks with hand-written backpropagation.
//!
//! Batches are row-major: a batch of `B` inputs is a `B × in` matrix and each
//! layer computes `act(X W + 1 bᵀ)` with `W` of shape `in × out`. Dropout is
//! inverted: kept units are scaled by `1 / (1 − rate)` during training and
//! evaluation applies no mask and no rescaling.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{AdiError, Result};
use crate::rng::{self, Rng};
use crate::stats;
use crate::svm::header_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(AdiError::Format(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
    /// Dropout rate applied to this layer's output in training mode.
    pub dropout: f64,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer dropout masks with entries in {0, 1}; `None` where a layer has no dropout.
pub type DropoutMasks = Vec<Option<DMatrix<f64>>>;

pub enum Dropout<'a> {
    /// Evaluation mode.
    Off,
    /// Training mode with masks drawn from the generator.
    Sample(&'a mut Rng),
    /// Training mode with the given masks.
    Fixed(&'a DropoutMasks),
}

/// All intermediate values of one batch pass, as needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub input: DMatrix<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<DMatrix<f64>>,
    /// Layer outputs after activation and dropout.
    pub post: Vec<DMatrix<f64>>,
    pub masks: DropoutMasks,
    pub train: bool,
}

impl Forward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    /// Gradient with respect to the batch input.
    pub input: DMatrix<f64>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp, batch: usize) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| DMatrix::zeros(l.input_dim(), l.output_dim())).collect(),
            biases: mlp.layers.iter().map(|l| DVector::zeros(l.output_dim())).collect(),
            input: DMatrix::zeros(batch, mlp.input_dim()),
        }
    }

    /// Parameter gradient in [`Mlp::param`] order.
    pub fn param(&self, index: usize) -> f64 {
        let mut i = index;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if i < w.len() {
                return w.as_slice()[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index {index} out of range")
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.amax())
            .chain(self.biases.iter().map(|b| b.amax()))
            .fold(0.0, f64::max)
    }
}

impl Mlp {
    /// Layers `sizes[i] → sizes[i+1]`, He-uniform weights and zero biases.
    /// Hidden layers use `hidden` activation and `dropout`; the output layer is
    /// linear without dropout.
    pub fn new(sizes: &[usize], hidden: Activation, dropout: f64, seed: u64) -> Result<Self> {
        let acts = vec![hidden; sizes.len().saturating_sub(2)];
        Self::with_activations(sizes, &acts, dropout, seed)
    }

    /// `hidden_activations[i]` applies to the output of layer `i`; the last
    /// layer is always linear without dropout. Linear hidden layers get no dropout.
    pub fn with_activations(
        sizes: &[usize],
        hidden_activations: &[Activation],
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(AdiError::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        if hidden_activations.len() != sizes.len() - 2 {
            return Err(AdiError::invalid("one activation per hidden layer required"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(AdiError::invalid("dropout rate must be in [0, 1)"));
        }
        let mut rng = rng::seeded(seed);
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let weights =
                    DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
                let (activation, rate) = if l + 1 == n_layers {
                    (Activation::Linear, 0.0)
                } else {
                    let a = hidden_activations[l];
                    (a, if a == Activation::Relu { dropout } else { 0.0 })
                };
                Layer {
                    weights,
                    bias: DVector::zeros(fan_out),
                    activation,
                    dropout: rate,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(AdiError::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(AdiError::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(AdiError::invalid("bias length differs from layer width"));
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(AdiError::invalid("dropout rate must be in [0, 1)"));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::output_dim));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut i = index;
        for (l, layer) in self.layers.iter().enumerate() {
            if i < layer.weights.len() {
                return (l, true, i);
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return (l, false, i);
            }
            i -= layer.bias.len();
        }
        panic!("parameter index {index} out of range")
    }

    /// Flat parameter access: per layer, weights (column-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, is_w, i) = self.locate(index);
        if is_w {
            self.layers[l].weights.as_slice()[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, is_w, i) = self.locate(index);
        if is_w {
            self.layers[l].weights.as_mut_slice()[i] = value;
        } else {
            self.layers[l].bias[i] = value;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Draws binary dropout masks for a batch of `batch` rows.
    pub fn sample_masks(&self, batch: usize, rng: &mut Rng) -> DropoutMasks {
        self.layers
            .iter()
            .map(|l| {
                (l.dropout > 0.0).then(|| {
                    DMatrix::from_fn(batch, l.output_dim(), |_, _| {
                        if rng.random::<f64>() < l.dropout {
                            0.0
                        } else {
                            1.0
                        }
                    })
                })
            })
            .collect()
    }

    pub fn forward(&self, x: &DMatrix<f64>, dropout: Dropout<'_>) -> Forward {
        assert_eq!(x.ncols(), self.input_dim(), "input width");
        let (masks, train) = match dropout {
            Dropout::Off => (vec![None; self.layers.len()], false),
            Dropout::Sample(rng) => (self.sample_masks(x.nrows(), rng), true),
            Dropout::Fixed(m) => (m.clone(), true),
        };
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let mut z = input * &layer.weights;
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            let mut a = match layer.activation {
                Activation::Relu => z.map(|v| v.max(0.0)),
                Activation::Linear => z.clone(),
            };
            if train && layer.dropout > 0.0 {
                if let Some(mask) = &masks[l] {
                    let keep = 1.0 / (1.0 - layer.dropout);
                    a.component_mul_assign(mask);
                    a *= keep;
                }
            }
            pre.push(z);
            post.push(a);
        }
        Forward {
            input: x.clone(),
            pre,
            post,
            masks,
            train,
        }
    }

    /// Evaluation-mode output for a single input vector.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        self.forward(&m, Dropout::Off).output().iter().copied().collect()
    }

    /// Reverse-mode gradients of the realized forward pass, given the
    /// gradient of the loss with respect to the output batch.
    pub fn backward(&self, fwd: &Forward, grad_output: &DMatrix<f64>) -> Gradients {
        self.backward_from(fwd, self.layers.len() - 1, grad_output)
    }

    /// Like [`Mlp::backward`] for a loss that reads the output of layer `top`
    /// (`fwd.post[top]`); layers above it receive zero gradients.
    pub fn backward_from(&self, fwd: &Forward, top: usize, grad: &DMatrix<f64>) -> Gradients {
        let n = self.layers.len();
        let mut weights: Vec<DMatrix<f64>> = self
            .layers
            .iter()
            .map(|l| DMatrix::zeros(l.input_dim(), l.output_dim()))
            .collect();
        let mut biases: Vec<DVector<f64>> =
            self.layers.iter().map(|l| DVector::zeros(l.output_dim())).collect();
        assert!(top < n, "layer index");
        let mut g = grad.clone();
        for l in (0..=top).rev() {
            let layer = &self.layers[l];
            if fwd.train && layer.dropout > 0.0 {
                if let Some(mask) = &fwd.masks[l] {
                    g.component_mul_assign(mask);
                    g *= 1.0 / (1.0 - layer.dropout);
                }
            }
            if layer.activation == Activation::Relu {
                g.zip_apply(&fwd.pre[l], |gv, z| {
                    if z <= 0.0 {
                        *gv = 0.0
                    }
                });
            }
            let input = if l == 0 { &fwd.input } else { &fwd.post[l - 1] };
            weights[l] = input.transpose() * &g;
            biases[l] = g.row_sum().transpose();
            g = &g * layer.weights.transpose();
        }
        Gradients {
            weights,
            biases,
            input: g,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-mlp v1").unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for layer in &self.layers {
            writeln!(
                s,
                "in {} out {} activation {} dropout {}",
                layer.input_dim(),
                layer.output_dim(),
                layer.activation.name(),
                layer.dropout
            )
            .unwrap();
            stats::write_rows(&mut s, &layer.weights);
            stats::write_rows(&mut s, &DMatrix::from_row_slice(1, layer.bias.len(), layer.bias.as_slice()));
        }
        s
    }

    /// Parses a network from `lines`, consuming exactly its own lines.
    pub fn parse_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        if lines.next().map(str::trim) != Some("adi-mlp v1") {
            return Err(AdiError::Format("not an adi-mlp v1 network".into()));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("layers "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| AdiError::Format("mlp layer count missing".into()))?;
        let mut layers = Vec::with_capacity(count);
        for l in 0..count {
            let header = lines
                .next()
                .ok_or_else(|| AdiError::Format(format!("mlp layer {l} header missing")))?;
            let kv = header_pairs(header)?;
            let get = |k: &str| {
                kv.iter()
                    .find(|(key, _)| *key == k)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| AdiError::Format(format!("mlp layer {l} lacks `{k}`")))
            };
            let parse_num = |k: &str| -> Result<f64> {
                get(k)?
                    .parse()
                    .map_err(|_| AdiError::Format(format!("mlp layer {l}: bad `{k}`")))
            };
            let (input, output) = (parse_num("in")? as usize, parse_num("out")? as usize);
            let weights = stats::parse_rows(lines, input, output, "mlp weights")?;
            let bias = stats::parse_rows(lines, 1, output, "mlp bias")?;
            layers.push(Layer {
                weights,
                bias: DVector::from_iterator(output, bias.iter().copied()),
                activation: Activation::parse(get("activation")?)?,
                dropout: parse_num("dropout")?,
            });
        }
        Mlp::from_layers(layers)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_lines(&mut text.lines())
    }
}

/// Mean softmax cross-entropy over a batch and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let b = logits.nrows();
    assert_eq!(b, labels.len());
    let mut grad = DMatrix::zeros(b, logits.ncols());
    let mut loss = 0.0;
    for r in 0..b {
        let row: Vec<f64> = logits.row(r).iter().copied().collect();
        let lse = log_sum_exp(&row);
        loss += lse - row[labels[r]];
        for (c, v) in row.iter().enumerate() {
            grad[(r, c)] = (v - lse).exp() / b as f64;
        }
        grad[(r, labels[r])] -= 1.0 / b as f64;
    }
    (loss / b as f64, grad)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Settings for adversarial training.
    pub fn gan() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
}

impl AdamState {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        let zw: Vec<DMatrix<f64>> = mlp
            .layers
            .iter()
            .map(|l| DMatrix::zeros(l.input_dim(), l.output_dim()))
            .collect();
        let zb: Vec<DVector<f64>> = mlp.layers.iter().map(|l| DVector::zeros(l.output_dim())).collect();
        Self {
            config,
            step: 0,
            m_w: zw.clone(),
            v_w: zw,
            m_b: zb.clone(),
            v_b: zb,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        };
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            for (((p, g), m), v) in layer
                .weights
                .iter_mut()
                .zip(grads.weights[l].iter())
                .zip(self.m_w[l].iter_mut())
                .zip(self.v_w[l].iter_mut())
            {
                update(p, *g, m, v);
            }
            for (((p, g), m), v) in layer
                .bias
                .iter_mut()
                .zip(grads.biases[l].iter())
                .zip(self.m_b[l].iter_mut())
                .zip(self.v_b[l].iter_mut())
            {
                update(p, *g, m, v);
            }
        }
    }
}

/// Central-difference check of analytic parameter gradients.
///
/// `loss` evaluates the objective and its analytic gradients for a network;
/// it must be deterministic (dropout masks frozen). Returns the largest
/// relative error `|a − n| / max(|a| + |n|, floor)` over `coords` randomly
/// chosen parameters.
pub fn grad_check<F>(mlp: &Mlp, mut loss: F, eps: f64, coords: usize, seed: u64) -> f64
where
    F: FnMut(&Mlp) -> (f64, Gradients),
{
    const FLOOR: f64 = 1e-8;
    let (_, analytic) = loss(mlp);
    let mut probe = mlp.clone();
    let mut rng = rng::seeded(seed);
    let n = mlp.num_params();
    let chosen = sample(&mut rng, n, coords.min(n));
    let mut worst: f64 = 0.0;
    for i in chosen {
        let orig = probe.param(i);
        probe.set_param(i, orig + eps);
        let (up, _) = loss(&probe);
        probe.set_param(i, orig - eps);
        let (down, _) = loss(&probe);
        probe.set_param(i, orig);
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.param(i);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    worst
}

/// Rows of `data` selected by `idx`, as a batch matrix.
pub fn gather_rows(data: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), data.ncols(), |r, c| data[(idx[r], c)])
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> DMatrix<f64> {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        rows_to_matrix(&v)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = Mlp::new(&[3, 4, 2], Activation::Relu, 0.0, 1).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        assert_eq!(m.eval(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let layer = Layer {
            weights: DMatrix::identity(3, 3),
            bias: DVector::zeros(3),
            activation: Activation::Linear,
            dropout: 0.0,
        };
        let m = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(m.eval(&[1.5, -2.0, 0.25]), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn all_ones_mask_doubles_hidden_activations() {
        let m = Mlp::new(&[3, 5, 2], Activation::Relu, 0.5, 4).unwrap();
        let x = batch(&[&[0.3, -1.0, 2.0], &[1.0, 1.0, 1.0]]);
        let off = m.forward(&x, Dropout::Off);
        let masks: DropoutMasks = vec![Some(DMatrix::from_element(2, 5, 1.0)), None];
        let on = m.forward(&x, Dropout::Fixed(&masks));
        assert_eq!(on.post[0], &off.post[0] * 2.0);
    }

    #[test]
    fn eval_mode_is_pure() {
        let m = Mlp::new(&[4, 8, 8, 3], Activation::Relu, 0.5, 2).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(m.eval(&x), m.eval(&x));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = Mlp::new(&[3, 6, 2], Activation::Relu, 0.0, 5).unwrap();
        let x = batch(&[&[0.3, -1.0, 2.0]]);
        let f = m.forward(&x, Dropout::Off);
        let g = m.backward(&f, &DMatrix::zeros(1, 2));
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(g.input.amax(), 0.0);
    }

    #[test]
    fn linear_squared_loss_matches_closed_form() {
        // single linear layer, loss = ½‖XW + b − T‖²: dW = Xᵀ(XW + b − T), db = colsum
        let m = Mlp::new(&[3, 2], Activation::Relu, 0.0, 11).unwrap();
        let x = batch(&[&[1.0, 2.0, -1.0], &[0.5, -0.5, 3.0]]);
        let t = batch(&[&[0.0, 1.0], &[2.0, -1.0]]);
        let f = m.forward(&x, Dropout::Off);
        let resid = f.output() - &t;
        let g = m.backward(&f, &resid);
        let want_w = x.transpose() * &resid;
        let want_b = resid.row_sum().transpose();
        assert!((&g.weights[0] - want_w).amax() < 1e-12);
        assert!((&g.biases[0] - want_b).amax() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut m = Mlp::new(&[3, 4, 2], Activation::Relu, 0.0, 6).unwrap();
        let before = m.clone();
        let mut state = AdamState::new(&m, AdamConfig::default());
        let zero = Gradients::zeros_like(&m, 1);
        state.step(&mut m, &zero);
        assert_eq!(m, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut m = Mlp::new(&[2, 1], Activation::Relu, 0.0, 6).unwrap();
        let before = m.param(0);
        let mut g = Gradients::zeros_like(&m, 1);
        g.weights[0][(0, 0)] = 3.0;
        let mut state = AdamState::new(&m, AdamConfig::default());
        state.step(&mut m, &g);
        assert!((before - m.param(0) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn softmax_ce_matches_definition() {
        let logits = batch(&[&[1.0, 2.0, 0.5]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]);
        let z: f64 = [1.0f64, 2.0, 0.5].iter().map(|v| v.exp()).sum();
        assert!((loss - (z.ln() - 2.0)).abs() < 1e-14);
        assert!(grad.sum().abs() < 1e-14);
    }

    #[test]
    fn text_roundtrip() {
        let m = Mlp::with_activations(
            &[3, 4, 2, 5],
            &[Activation::Relu, Activation::Linear],
            0.5,
            8,
        )
        .unwrap();
        let back = Mlp::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(Mlp::new(&[3], Activation::Relu, 0.0, 0).is_err());
        assert!(Mlp::new(&[3, 0, 2], Activation::Relu, 0.0, 0).is_err());
        assert!(Mlp::new(&[3, 2], Activation::Relu, 1.0, 0).is_err());
    }
}
