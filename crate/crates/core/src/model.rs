//! Small multilayer perceptrons with softmax output.
//!
//! Parameters live in a single flat vector ([`ParamVector`]) so that server
//! code can average, difference and store them without knowing the layer
//! structure; [`MlpSpec`] describes that structure and how the flat vector
//! is carved into weight matrices and bias vectors.
//!
//! The loss functions operate on *weighted* batches: every sample carries a
//! non-negative weight, and the reported loss is `sum_i w_i * loss_i / divisor`
//! for a caller-chosen positive `divisor`. This one primitive expresses all
//! the empirical risks used by the training algorithms (per-group means,
//! importance-weighted client objectives, plain batch means) by picking the
//! appropriate weights and divisor.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped at this floor before the logarithm in the
/// cross-entropy loss, keeping it finite for confident mispredictions.
pub const CROSS_ENTROPY_CLAMP: f64 = 1e-12;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, z)`; the derivative at exactly zero is taken as zero.
    Relu,
    /// Hyperbolic tangent.
    Tanh,
}

/// Per-sample loss on the softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Squared distance between the probability vector and the one-hot
    /// target: `sum_c (p_c - [c == y])^2`.
    Brier,
    /// Negative log-likelihood `-ln(max(p_y, CROSS_ENTROPY_CLAMP))`.
    CrossEntropy,
}

/// Architecture of a fully connected network with softmax output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    /// Creates a spec from the full list of layer widths, input first and
    /// output (= number of classes) last.
    ///
    /// At least two layers are required, every width must be positive and
    /// the output width must be at least two.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "an MLP needs at least an input and an output layer",
            ));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let classes = *layer_sizes.last().expect("checked non-empty");
        if classes < 2 {
            return Err(Error::invalid(format!(
                "output layer must have at least 2 units, got {classes}"
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            activation,
        })
    }

    /// Number of input features.
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Number of output classes.
    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("spec has layers")
    }

    /// Full list of layer widths, input first.
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Hidden-layer activation.
    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of weight layers (connections between consecutive widths).
    pub fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total number of parameters: `sum_l (in_l + 1) * out_l`.
    pub fn param_len(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|pair| (pair[0] + 1) * pair[1])
            .sum()
    }

    /// `(fan_in, fan_out)` of weight layer `l`.
    fn layer_dims(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l], self.layer_sizes[l + 1])
    }
}

/// Flat, layer-major parameter vector for an [`MlpSpec`].
///
/// Layout: for each weight layer in order, the weight matrix in row-major
/// order (rows = inputs, columns = outputs) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<S: Scalar> {
    values: Array1<S>,
}

impl<S: Scalar> ParamVector<S> {
    /// Wraps a flat value vector.
    pub fn from_vec(values: Vec<S>) -> Self {
        ParamVector {
            values: Array1::from_vec(values),
        }
    }

    /// All-zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        ParamVector {
            values: Array1::zeros(len),
        }
    }

    /// Number of parameters.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the vector has no entries.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Read-only view of the flat values.
    pub fn values(&self) -> &Array1<S> {
        &self.values
    }

    /// Flat values as a slice.
    pub fn as_slice(&self) -> &[S] {
        self.values.as_slice().expect("param vector is contiguous")
    }

    /// In-place `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: S, other: &ParamVector<S>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "parameter length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        self.values.scaled_add(alpha, &other.values);
        Ok(())
    }

    /// In-place `self *= alpha`.
    pub fn scale(&mut self, alpha: S) {
        self.values *= alpha;
    }

    /// Largest absolute coordinate difference between two vectors.
    pub fn max_abs_diff(&self, other: &ParamVector<S>) -> Result<S> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "parameter length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let mut worst = S::zero();
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            let d = (*a - *b).abs();
            if d > worst {
                worst = d;
            }
        }
        Ok(worst)
    }

    /// True when every coordinate is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A batch of samples with per-sample weights.
///
/// The batch borrows its storage; constructing one validates shapes, value
/// finiteness and weight non-negativity so the loss kernels can stay lean.
#[derive(Debug, Clone, Copy)]
pub struct WeightedBatch<'a, S: Scalar> {
    features: ArrayView2<'a, S>,
    targets: &'a [usize],
    weights: &'a [S],
}

impl<'a, S: Scalar> WeightedBatch<'a, S> {
    /// Builds a batch from feature rows, class targets and sample weights.
    pub fn new(
        features: ArrayView2<'a, S>,
        targets: &'a [usize],
        weights: &'a [S],
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::invalid("batch must contain at least one sample"));
        }
        if targets.len() != n || weights.len() != n {
            return Err(Error::invalid(format!(
                "batch size mismatch: {n} feature rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("batch features must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::invalid(
                "batch weights must be finite and non-negative",
            ));
        }
        Ok(WeightedBatch {
            features,
            targets,
            weights,
        })
    }

    /// Number of samples in the batch.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    /// True when the batch has no samples (never holds for a constructed batch).
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Feature matrix view.
    pub fn features(&self) -> ArrayView2<'a, S> {
        self.features
    }

    /// Class targets.
    pub fn targets(&self) -> &'a [usize] {
        self.targets
    }

    /// Sample weights.
    pub fn weights(&self) -> &'a [S] {
        self.weights
    }
}

/// Draws initial parameters for `spec` from the given seed.
///
/// Weights are sampled uniformly from `[-m, m]` with `m = sqrt(6 / (fan_in +
/// fan_out))` per layer; biases start at zero. Draws happen in `f64` before
/// conversion, so every scalar type sees the same stream.
pub fn init_params<S: Scalar>(spec: &MlpSpec, seed: u64) -> ParamVector<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_len());
    for l in 0..spec.num_weight_layers() {
        let (fan_in, fan_out) = spec.layer_dims(l);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(S::c(rng.gen_range(-limit..limit)));
        }
        values.extend(std::iter::repeat(S::zero()).take(fan_out));
    }
    ParamVector::from_vec(values)
}

/// Borrowed weight matrix and bias vector of one layer.
struct LayerView<'a, S: Scalar> {
    weights: ArrayView2<'a, S>,
    biases: ndarray::ArrayView1<'a, S>,
}

/// Splits a flat parameter vector into per-layer views.
fn layer_views<'a, S: Scalar>(
    spec: &MlpSpec,
    params: &'a ParamVector<S>,
) -> Result<Vec<LayerView<'a, S>>> {
    if params.len() != spec.param_len() {
        return Err(Error::invalid(format!(
            "parameter vector has {} entries but the spec needs {}",
            params.len(),
            spec.param_len()
        )));
    }
    let flat = params.as_slice();
    let mut views = Vec::with_capacity(spec.num_weight_layers());
    let mut offset = 0;
    for l in 0..spec.num_weight_layers() {
        let (fan_in, fan_out) = spec.layer_dims(l);
        let w = ArrayView2::from_shape((fan_in, fan_out), &flat[offset..offset + fan_in * fan_out])
            .expect("layout matches spec");
        offset += fan_in * fan_out;
        let b = ndarray::ArrayView1::from(&flat[offset..offset + fan_out]);
        offset += fan_out;
        views.push(LayerView {
            weights: w,
            biases: b,
        });
    }
    Ok(views)
}

/// Applies the hidden activation in place.
fn activate<S: Scalar>(z: &mut Array2<S>, activation: Activation) {
    match activation {
        Activation::Relu => z.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() }),
        Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
    }
}

/// Row-wise softmax with max subtraction for stability.
fn softmax_rows<S: Scalar>(z: &mut Array2<S>) {
    for mut row in z.rows_mut() {
        let mut max = S::neg_infinity();
        for v in row.iter() {
            if *v > max {
                max = *v;
            }
        }
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Intermediate activations of one forward pass.
///
/// `layers[0]` is the input; `layers[l]` for hidden layers holds the
/// post-activation values, and the last entry holds the softmax output.
struct ForwardPass<S: Scalar> {
    layers: Vec<Array2<S>>,
}

fn forward_pass<S: Scalar>(
    spec: &MlpSpec,
    params: &ParamVector<S>,
    features: ArrayView2<'_, S>,
) -> Result<ForwardPass<S>> {
    if features.ncols() != spec.input_dim() {
        return Err(Error::invalid(format!(
            "feature matrix has {} columns but the model expects {}",
            features.ncols(),
            spec.input_dim()
        )));
    }
    let views = layer_views(spec, params)?;
    let mut layers = Vec::with_capacity(spec.num_weight_layers() + 1);
    layers.push(features.to_owned());
    for (l, view) in views.iter().enumerate() {
        let mut z = layers[l].dot(&view.weights);
        z += &view.biases;
        if l + 1 < spec.num_weight_layers() {
            activate(&mut z, spec.activation());
        } else {
            softmax_rows(&mut z);
        }
        layers.push(z);
    }
    Ok(ForwardPass { layers })
}

/// Runs the network on a feature matrix and returns one probability row per
/// sample. Rows are softmax outputs and therefore sum to one.
pub fn forward<S: Scalar>(
    spec: &MlpSpec,
    params: &ParamVector<S>,
    features: ArrayView2<'_, S>,
) -> Result<Array2<S>> {
    let mut pass = forward_pass(spec, params, features)?;
    Ok(pass.layers.pop().expect("forward pass has an output layer"))
}

/// Per-sample loss values for a matrix of probability rows.
///
/// This is a pure function of the probabilities, which lets evaluation code
/// reuse a single forward pass for several metrics.
pub fn per_sample_losses<S: Scalar>(
    probs: &Array2<S>,
    targets: &[usize],
    kind: LossKind,
) -> Result<Vec<S>> {
    if probs.nrows() != targets.len() {
        return Err(Error::invalid(format!(
            "probability matrix has {} rows but {} targets were given",
            probs.nrows(),
            targets.len()
        )));
    }
    let classes = probs.ncols();
    let clamp = S::c(CROSS_ENTROPY_CLAMP);
    let mut losses = Vec::with_capacity(targets.len());
    for (row, &target) in probs.rows().into_iter().zip(targets.iter()) {
        if target >= classes {
            return Err(Error::invalid(format!(
                "target class {target} is out of range for {classes} classes"
            )));
        }
        let loss = match kind {
            LossKind::Brier => {
                let mut acc = S::zero();
                for (c, &p) in row.iter().enumerate() {
                    let y = if c == target { S::one() } else { S::zero() };
                    let d = p - y;
                    acc += d * d;
                }
                acc
            }
            LossKind::CrossEntropy => -row[target].max(clamp).ln(),
        };
        losses.push(loss);
    }
    Ok(losses)
}

/// Index of the most probable class per row; ties resolve to the lowest index.
pub fn argmax_rows<S: Scalar>(probs: &Array2<S>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_p = row[0];
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > best_p {
                    best = c;
                    best_p = p;
                }
            }
            best
        })
        .collect()
}

fn check_divisor<S: Scalar>(divisor: S) -> Result<()> {
    if !divisor.is_finite() || divisor <= S::zero() {
        return Err(Error::invalid(format!(
            "loss divisor must be positive and finite, got {divisor}"
        )));
    }
    Ok(())
}

/// Weighted empirical loss `sum_i w_i * loss_i / divisor`.
///
/// The divisor is caller-chosen: pass the group count to get a per-group
/// mean, the shard size for a client objective, or the batch size for a
/// plain average.
pub fn weighted_loss<S: Scalar>(
    spec: &MlpSpec,
    params: &ParamVector<S>,
    batch: &WeightedBatch<'_, S>,
    kind: LossKind,
    divisor: S,
) -> Result<S> {
    check_divisor(divisor)?;
    let probs = forward(spec, params, batch.features())?;
    let losses = per_sample_losses(&probs, batch.targets(), kind)?;
    let mut acc = S::zero();
    for (loss, &w) in losses.iter().zip(batch.weights()) {
        acc += *loss * w;
    }
    Ok(acc / divisor)
}

/// Loss value, per-sample losses and parameter gradient from one shared
/// forward/backward pass.
#[derive(Debug, Clone)]
pub struct LossGrad<S: Scalar> {
    /// Weighted empirical loss (same value as [`weighted_loss`]).
    pub loss: S,
    /// Unweighted per-sample losses, in batch order.
    pub per_sample: Vec<S>,
    /// Gradient of the weighted loss with respect to the parameters.
    pub gradient: ParamVector<S>,
}

/// Computes the weighted loss together with its exact parameter gradient.
///
/// The gradient differentiates precisely the value reported by
/// [`weighted_loss`], including the cross-entropy clamp (samples resting on
/// the clamp contribute zero gradient).
pub fn weighted_loss_grad<S: Scalar>(
    spec: &MlpSpec,
    params: &ParamVector<S>,
    batch: &WeightedBatch<'_, S>,
    kind: LossKind,
    divisor: S,
) -> Result<LossGrad<S>> {
    check_divisor(divisor)?;
    let pass = forward_pass(spec, params, batch.features())?;
    let probs = pass.layers.last().expect("forward pass has output");
    let per_sample = per_sample_losses(probs, batch.targets(), kind)?;

    let mut loss = S::zero();
    for (l, &w) in per_sample.iter().zip(batch.weights()) {
        loss += *l * w;
    }
    loss /= divisor;

    // Delta at the output layer: d(weighted loss)/d(logits), one row per
    // sample, already scaled by w_i / divisor.
    let n = batch.len();
    let classes = spec.num_classes();
    let clamp = S::c(CROSS_ENTROPY_CLAMP);
    let mut delta = Array2::<S>::zeros((n, classes));
    for i in 0..n {
        let scale = batch.weights()[i] / divisor;
        let target = batch.targets()[i];
        let p_row = probs.row(i);
        let mut d_row = delta.row_mut(i);
        match kind {
            LossKind::Brier => {
                // dL/dp = 2 (p - y); through softmax:
                // dL/dz_j = p_j * (g_j - <p, g>).
                let two = S::c(2.0);
                let mut inner = S::zero();
                for c in 0..classes {
                    let y = if c == target { S::one() } else { S::zero() };
                    inner += p_row[c] * two * (p_row[c] - y);
                }
                for c in 0..classes {
                    let y = if c == target { S::one() } else { S::zero() };
                    let g = two * (p_row[c] - y);
                    d_row[c] = p_row[c] * (g - inner) * scale;
                }
            }
            LossKind::CrossEntropy => {
                // Standard softmax + log-likelihood form p - e_y, unless the
                // clamp is active, in which case the loss is locally constant.
                if p_row[target] > clamp {
                    for c in 0..classes {
                        let y = if c == target { S::one() } else { S::zero() };
                        d_row[c] = (p_row[c] - y) * scale;
                    }
                }
            }
        }
    }

    // Backpropagate through the layers, writing each layer's gradient block.
    let views = layer_views(spec, params)?;
    let mut grad = ParamVector::zeros(spec.param_len());
    let flat = grad
        .values
        .as_slice_mut()
        .expect("gradient vector is contiguous");
    let mut block_ends = Vec::with_capacity(views.len());
    let mut offset = 0;
    for l in 0..spec.num_weight_layers() {
        let (fan_in, fan_out) = spec.layer_dims(l);
        offset += (fan_in + 1) * fan_out;
        block_ends.push(offset);
    }
    for l in (0..spec.num_weight_layers()).rev() {
        let (fan_in, fan_out) = spec.layer_dims(l);
        let input = &pass.layers[l];
        let dw = input.t().dot(&delta);
        let db = delta.sum_axis(Axis(0));
        let start = block_ends[l] - (fan_in + 1) * fan_out;
        let w_block = &mut flat[start..start + fan_in * fan_out];
        for (dst, src) in w_block.iter_mut().zip(dw.iter()) {
            *dst = *src;
        }
        let b_block = &mut flat[start + fan_in * fan_out..block_ends[l]];
        for (dst, src) in b_block.iter_mut().zip(db.iter()) {
            *dst = *src;
        }
        if l > 0 {
            let mut prev = delta.dot(&views[l].weights.t());
            match spec.activation() {
                Activation::Relu => {
                    // Post-activation values identify active units exactly.
                    prev.zip_mut_with(&pass.layers[l], |d, a| {
                        if *a <= S::zero() {
                            *d = S::zero();
                        }
                    });
                }
                Activation::Tanh => {
                    prev.zip_mut_with(&pass.layers[l], |d, a| {
                        *d *= S::one() - *a * *a;
                    });
                }
            }
            delta = prev;
        }
    }

    Ok(LossGrad {
        loss,
        per_sample,
        gradient: grad,
    })
}

/// Gradient of the weighted empirical loss with respect to the parameters.
pub fn loss_gradient<S: Scalar>(
    spec: &MlpSpec,
    params: &ParamVector<S>,
    batch: &WeightedBatch<'_, S>,
    kind: LossKind,
    divisor: S,
) -> Result<ParamVector<S>> {
    Ok(weighted_loss_grad(spec, params, batch, kind, divisor)?.gradient)
}
