//! Dense-layer networks with manual forward/backward passes, softmax
//! cross-entropy loss and plain SGD.
//!
//! The final fully connected layer is the attack's target layer: its weight
//! matrix has one row per class (`class_count × penultimate_width`, row-major)
//! and [`target_layer_flat`] exposes exactly that layout. Everything here is a
//! pure function over value inputs; nothing mutates its arguments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result, Scalar};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation<F> {
    Relu,
    /// Leaky rectifier with the given negative-side slope, in (0, 1).
    LeakyRelu(F),
    /// No activation. Only valid on the final layer, which feeds softmax.
    Identity,
}

impl<F: Scalar> Activation<F> {
    fn apply(&self, x: F) -> F {
        match *self {
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > F::zero() {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative recovered from the activation output. Sign of the output
    /// matches the sign of the pre-activation for all three variants, so the
    /// output value is enough.
    fn derivative_from_output(&self, y: F) -> F {
        match *self {
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if y > F::zero() {
                    F::one()
                } else {
                    slope
                }
            }
            Activation::Identity => F::one(),
        }
    }

    fn validate(&self, is_final: bool) -> Result<()> {
        match *self {
            Activation::LeakyRelu(slope) => {
                if !(slope > F::zero() && slope < F::one()) {
                    return Err(Error::config("leaky_relu slope must lie in (0, 1)"));
                }
            }
            Activation::Identity if !is_final => {
                return Err(Error::config("identity activation is only valid on the final layer"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec<F> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation<F>,
}

impl<F: Scalar> LayerSpec<F> {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation<F>) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// One dense layer: weights are `output_dim × input_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<F> {
    pub(crate) weights: Matrix<F>,
    pub(crate) bias: Vec<F>,
    pub(crate) activation: Activation<F>,
}

impl<F: Scalar> Layer<F> {
    pub fn weights(&self) -> &Matrix<F> {
        &self.weights
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    pub fn activation(&self) -> Activation<F> {
        self.activation
    }
}

/// A feed-forward classifier; the last layer is the classification layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<F> {
    layers: Vec<Layer<F>>,
    class_count: usize,
}

impl<F: Scalar> Model<F> {
    /// Initializes a model from layer specs with uniform weights in
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` and zero biases.
    pub fn new<R: Rng>(specs: &[LayerSpec<F>], class_count: usize, rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        if class_count == 0 {
            return Err(Error::config("class_count must be positive"));
        }
        let last = specs.len() - 1;
        for (i, spec) in specs.iter().enumerate() {
            if spec.input_dim == 0 || spec.output_dim == 0 {
                return Err(Error::config(format!("layer {i}: dimensions must be positive")));
            }
            spec.activation.validate(i == last)?;
            if i > 0 && specs[i - 1].output_dim != spec.input_dim {
                return Err(Error::config(format!(
                    "layer {i}: input_dim {} does not match previous output_dim {}",
                    spec.input_dim,
                    specs[i - 1].output_dim
                )));
            }
        }
        if specs[last].output_dim != class_count {
            return Err(Error::config(format!(
                "final layer output_dim {} must equal class_count {class_count}",
                specs[last].output_dim
            )));
        }

        let layers = specs
            .iter()
            .map(|spec| {
                let bound = 1.0 / (spec.input_dim as f64).sqrt();
                let mut weights = Matrix::zeros(spec.output_dim, spec.input_dim);
                for v in weights.as_mut_slice() {
                    *v = F::from_f64_lossy(rng.gen_range(-bound..=bound));
                }
                Layer {
                    weights,
                    bias: vec![F::zero(); spec.output_dim],
                    activation: spec.activation,
                }
            })
            .collect();
        Ok(Model { layers, class_count })
    }

    /// Convenience constructor: relu hidden layers and an identity final layer.
    pub fn dense<R: Rng>(
        input_dim: usize,
        hidden: &[usize],
        class_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &width in hidden {
            specs.push(LayerSpec::new(prev, width, Activation::Relu));
            prev = width;
        }
        specs.push(LayerSpec::new(prev, class_count, Activation::Identity));
        Model::new(&specs, class_count, rng)
    }

    /// Builds a model from explicit layers, running the same invariant checks
    /// as [`Model::new`].
    pub fn from_layers(layers: Vec<Layer<F>>, class_count: usize) -> Result<Self> {
        let specs: Vec<LayerSpec<F>> = layers
            .iter()
            .map(|l| LayerSpec::new(l.weights.cols(), l.weights.rows(), l.activation))
            .collect();
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.rows() {
                return Err(Error::config(format!("layer {i}: bias length mismatch")));
            }
        }
        // Reuse the spec validation, then keep the provided parameters.
        let mut probe_rng = rand::rngs::mock::StepRng::new(0, 0);
        Model::new(&specs, class_count, &mut probe_rng)?;
        Ok(Model { layers, class_count })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn final_layer(&self) -> &Layer<F> {
        self.layers.last().expect("model has at least one layer")
    }

    /// Width of the input to the final layer (`m`, the per-class neuron count
    /// of the flattened target vector).
    pub fn penultimate_width(&self) -> usize {
        self.final_layer().weights.cols()
    }

    /// All parameters, weights then bias per layer, in layer order.
    pub fn params_flat(&self) -> Vec<F> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(layer.weights.as_slice());
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    /// Rebuilds a model with this model's shapes but the given parameters.
    pub fn with_params_flat(&self, flat: &[F]) -> Result<Self> {
        let expected: usize = self
            .layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum();
        if flat.len() != expected {
            return Err(Error::config(format!(
                "parameter vector length {} does not match model size {expected}",
                flat.len()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            let w_len = layer.weights.as_slice().len();
            let weights = Matrix::from_vec(
                layer.weights.rows(),
                layer.weights.cols(),
                flat[offset..offset + w_len].to_vec(),
            );
            offset += w_len;
            let bias = flat[offset..offset + layer.bias.len()].to_vec();
            offset += layer.bias.len();
            layers.push(Layer {
                weights,
                bias,
                activation: layer.activation,
            });
        }
        Ok(Model {
            layers,
            class_count: self.class_count,
        })
    }

    pub fn shape_congruent(&self, other: &Model<F>) -> bool {
        self.class_count == other.class_count
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols()
            })
    }
}

/// A labeled mini-batch.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub inputs: Matrix<F>,
    pub labels: Vec<usize>,
}

impl<F: Scalar> Batch<F> {
    pub fn new(inputs: Matrix<F>, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::config("batch must be nonempty"));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::config(format!(
                "batch has {} rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-layer gradients, shape-congruent with the model they came from.
#[derive(Debug, Clone)]
pub struct GradientSet<F> {
    pub layers: Vec<LayerGrad<F>>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad<F> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> GradientSet<F> {
    pub fn zeros_like(model: &Model<F>) -> Self {
        GradientSet {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![F::zero(); l.bias.len()],
                })
                .collect(),
        }
    }
}

/// Per-layer activation outputs kept for the backward pass. `acts[0]` is the
/// batch input; `acts[l + 1]` is layer `l`'s output after activation (and
/// dropout, when enabled).
pub struct ForwardCache<F> {
    pub acts: Vec<Matrix<F>>,
    masks: Vec<Option<Matrix<F>>>,
}

/// Training-time dropout on hidden activations, with inverted scaling so
/// evaluation needs no adjustment. The final layer is never masked.
pub struct Dropout<'r, F, R: Rng> {
    pub rate: F,
    pub rng: &'r mut R,
}

fn check_batch<F: Scalar>(model: &Model<F>, batch: &Batch<F>) -> Result<()> {
    if batch.inputs.cols() != model.input_dim() {
        return Err(Error::config(format!(
            "batch feature dim {} does not match model input dim {}",
            batch.inputs.cols(),
            model.input_dim()
        )));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&l| l >= model.class_count()) {
        return Err(Error::config(format!(
            "label {bad} out of range for {} classes",
            model.class_count()
        )));
    }
    Ok(())
}

fn forward_with<F: Scalar, R: Rng>(
    model: &Model<F>,
    batch: &Batch<F>,
    mut dropout: Option<Dropout<'_, F, R>>,
) -> Result<(Matrix<F>, ForwardCache<F>)> {
    check_batch(model, batch)?;
    let last = model.layers.len() - 1;
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    let mut masks = Vec::with_capacity(model.layers.len());
    acts.push(batch.inputs.clone());

    for (l, layer) in model.layers.iter().enumerate() {
        let mut pre = acts[l].mul_nt(&layer.weights);
        for r in 0..pre.rows() {
            for (v, &b) in pre.row_mut(r).iter_mut().zip(layer.bias.iter()) {
                *v = *v + b;
            }
        }
        let mut post = pre.map(|x| layer.activation.apply(x));

        let mask = match dropout {
            Some(ref mut d) if l < last && d.rate > F::zero() => {
                let keep = F::one() - d.rate;
                let scale = F::one() / keep;
                let mut mask = Matrix::zeros(post.rows(), post.cols());
                for v in mask.as_mut_slice() {
                    let dropped = F::from_f64_lossy(d.rng.gen::<f64>()) < d.rate;
                    *v = if dropped { F::zero() } else { scale };
                }
                for (p, &m) in post.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *p = *p * m;
                }
                Some(mask)
            }
            _ => None,
        };
        masks.push(mask);
        acts.push(post);
    }

    let logits = acts.last().expect("forward produced outputs").clone();
    Ok((logits, ForwardCache { acts, masks }))
}

/// Runs the batch through the model and returns pre-softmax logits plus the
/// per-layer activation cache needed for a backward pass.
pub fn forward<F: Scalar>(model: &Model<F>, batch: &Batch<F>) -> Result<(Matrix<F>, ForwardCache<F>)> {
    forward_with::<F, rand::rngs::ThreadRng>(model, batch, None)
}

/// Row-wise softmax with max subtraction; also returns each row's
/// log-normalizer so the loss stays finite for any finite logits.
fn softmax_rows<F: Scalar>(logits: &Matrix<F>) -> (Matrix<F>, Vec<F>, Vec<F>) {
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut row_max = Vec::with_capacity(logits.rows());
    let mut row_logz = Vec::with_capacity(logits.rows());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (p, &z) in probs.row_mut(r).iter_mut().zip(row.iter()) {
            let e = (z - max).exp();
            *p = e;
            sum = sum + e;
        }
        for p in probs.row_mut(r) {
            *p = *p / sum;
        }
        row_max.push(max);
        row_logz.push(sum.ln());
    }
    (probs, row_max, row_logz)
}

/// Mean softmax cross-entropy over the batch plus exact analytic gradients
/// for every weight and bias.
pub fn loss_and_gradients<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<F>,
) -> Result<(F, GradientSet<F>)> {
    loss_and_gradients_impl::<F, rand::rngs::ThreadRng>(model, batch, None)
}

/// Same as [`loss_and_gradients`] but with training-time dropout masks drawn
/// from the given RNG.
pub fn loss_and_gradients_dropout<F: Scalar, R: Rng>(
    model: &Model<F>,
    batch: &Batch<F>,
    dropout: Dropout<'_, F, R>,
) -> Result<(F, GradientSet<F>)> {
    loss_and_gradients_impl(model, batch, Some(dropout))
}

fn loss_and_gradients_impl<F: Scalar, R: Rng>(
    model: &Model<F>,
    batch: &Batch<F>,
    dropout: Option<Dropout<'_, F, R>>,
) -> Result<(F, GradientSet<F>)> {
    let (logits, cache) = forward_with(model, batch, dropout)?;
    let n = batch.len();
    let inv_n = F::one() / F::from_usize_lossy(n);

    let (probs, row_max, row_logz) = softmax_rows(&logits);
    let mut loss = F::zero();
    for (r, &label) in batch.labels.iter().enumerate() {
        // -log p = logZ + max - z_label, finite for all finite logits.
        loss = loss + row_logz[r] + row_max[r] - logits.get(r, label);
    }
    loss = loss * inv_n;

    // d(mean loss)/d(logits) = (softmax - onehot) / n
    let mut d_out = probs;
    for (r, &label) in batch.labels.iter().enumerate() {
        let v = d_out.get(r, label);
        d_out.set(r, label, v - F::one());
    }
    for v in d_out.as_mut_slice() {
        *v = *v * inv_n;
    }

    let mut grads = GradientSet::zeros_like(model);
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        // Through the activation, using the cached output values.
        let mut d_pre = d_out;
        for (v, &y) in d_pre
            .as_mut_slice()
            .iter_mut()
            .zip(cache.acts[l + 1].as_slice())
        {
            *v = *v * layer.activation.derivative_from_output(y);
        }
        grads.layers[l].weights = d_pre.mul_tn(&cache.acts[l]);
        grads.layers[l].bias = d_pre.col_sums();

        if l == 0 {
            break;
        }
        let mut d_prev = d_pre.mul_nn(&layer.weights);
        if let Some(mask) = &cache.masks[l - 1] {
            for (v, &m) in d_prev.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *v = *v * m;
            }
        }
        d_out = d_prev;
    }

    Ok((loss, grads))
}

/// One plain SGD step: every parameter moves by `-alpha * gradient`. The
/// input model is untouched.
pub fn sgd_step<F: Scalar>(model: &Model<F>, grads: &GradientSet<F>, alpha: F) -> Result<Model<F>> {
    if alpha <= F::zero() {
        return Err(Error::config("learning rate must be positive"));
    }
    if grads.layers.len() != model.layers.len() {
        return Err(Error::config("gradient set does not match model layers"));
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    for (layer, grad) in model.layers.iter().zip(&grads.layers) {
        if grad.weights.rows() != layer.weights.rows()
            || grad.weights.cols() != layer.weights.cols()
            || grad.bias.len() != layer.bias.len()
        {
            return Err(Error::config("gradient shapes do not match model"));
        }
        let mut weights = layer.weights.clone();
        for (w, &g) in weights.as_mut_slice().iter_mut().zip(grad.weights.as_slice()) {
            *w = *w - alpha * g;
        }
        let bias = layer
            .bias
            .iter()
            .zip(&grad.bias)
            .map(|(&b, &g)| b - alpha * g)
            .collect();
        layers.push(Layer {
            weights,
            bias,
            activation: layer.activation,
        });
    }
    Ok(Model {
        layers,
        class_count: model.class_count,
    })
}

/// Final-layer weight matrix flattened row-major, so class `i` occupies
/// indices `[i*m, (i+1)*m)`. Biases are excluded.
pub fn target_layer_flat<F: Scalar>(model: &Model<F>) -> Vec<F> {
    model.final_layer().weights.as_slice().to_vec()
}

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy<F: Scalar>(model: &Model<F>, batch: &Batch<F>) -> Result<F> {
    let (logits, _) = forward(model, batch)?;
    let mut correct = 0usize;
    for (r, &label) in batch.labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(F::from_usize_lossy(correct) / F::from_usize_lossy(batch.len()))
}
