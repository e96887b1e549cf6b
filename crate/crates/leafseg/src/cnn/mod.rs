//! A small trainable convolutional network for edge-patch classification.
//!
//! Everything is built from five layer kinds: valid convolution with
//! stride 1, 2x2 max pooling, dense, ReLU, and a final softmax. Networks
//! are either one 4-way classifier or a tree of three binary classifiers
//! (internal-vs-external, then leaf-vs-noise and plant-vs-background).
//!
//! Weights are stored as 32-bit floats; all forward/backward arithmetic
//! runs in 64-bit so gradients check cleanly against finite differences
//! and results are stable across platforms.

mod model_io;
mod train;

pub use model_io::{load_model, save_model, Model};
pub use train::{
    dataset_accuracy, loss_and_gradients, loss_and_gradients_mapped, train, train_filtered,
    train_tree, Gradients, ParamGrads, TrainConfig, TrainLog,
};

use crate::patchgen::{EdgeClass, Patch};

#[derive(Debug, thiserror::Error)]
pub enum CnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for arity {arity}")]
    LabelOutOfRange { label: usize, arity: usize },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major value container for layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Tensor {
        assert!(!shape.is_empty());
        assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Declarative layer description used to assemble networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid convolution, stride 1, square kernel.
    Conv { filters: usize, kernel: usize },
    /// 2x2 max pooling with stride 2; odd trailing rows/columns drop.
    MaxPool,
    Dense { units: usize },
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub in_channels: usize,
    /// `[filters, kernel, kernel, in_channels]`.
    pub weights: Tensor,
    /// `[filters]`.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub units: usize,
    pub inputs: usize,
    /// `[units, inputs]`.
    pub weights: Tensor,
    /// `[units]`.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    MaxPool,
    Dense(DenseLayer),
    Relu,
    Softmax,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                filters: c.filters,
                kernel: c.kernel,
            },
            Layer::MaxPool => LayerSpec::MaxPool,
            Layer::Dense(d) => LayerSpec::Dense { units: d.units },
            Layer::Relu => LayerSpec::Relu,
            Layer::Softmax => LayerSpec::Softmax,
        }
    }
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Height x width x channels, channel-interleaved row-major.
    Spatial(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial(h, w, c) => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How parametric layers are initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// Uniform in `+-gain*sqrt(6/(fan_in+fan_out))`, zero bias.
    Glorot { gain: f64 },
}

impl Default for WeightInit {
    fn default() -> WeightInit {
        WeightInit::Glorot { gain: 1.0 }
    }
}

/// A feed-forward network: an ordered layer stack with fixed input shape
/// and a softmax head whose width is the classification arity.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: (usize, usize, usize),
    layers: Vec<Layer>,
    /// Data shape entering each layer; last entry is the output shape.
    boundaries: Vec<Shape>,
    arity: usize,
}

impl Network {
    /// Assemble and initialize a network. Shapes are checked layer by
    /// layer; the stack must end in `Dense(arity)` followed by `Softmax`.
    pub fn build(
        input_shape: (usize, usize, usize),
        specs: &[LayerSpec],
        init: WeightInit,
        seed: u64,
    ) -> Result<Network, CnnError> {
        let mut rng = crate::rng::Stream::derive(seed, 0x6e65_7477_696e_6974); // "netwinit"
        let mut layers = Vec::with_capacity(specs.len());
        let mut boundaries = Vec::with_capacity(specs.len() + 1);
        let (ih, iw, ic) = input_shape;
        if ih == 0 || iw == 0 || ic == 0 {
            return Err(CnnError::InvalidArchitecture("empty input shape".into()));
        }
        let mut shape = Shape::Spatial(ih, iw, ic);
        boundaries.push(shape);

        for (idx, &spec) in specs.iter().enumerate() {
            let at = |msg: String| CnnError::InvalidArchitecture(format!("layer {idx}: {msg}"));
            match spec {
                LayerSpec::Conv { filters, kernel } => {
                    let Shape::Spatial(h, w, c) = shape else {
                        return Err(at("convolution after flatten".into()));
                    };
                    if filters == 0 || kernel == 0 {
                        return Err(at("degenerate convolution".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(at(format!("kernel {kernel} exceeds input {h}x{w}")));
                    }
                    let weights = init_tensor(
                        vec![filters, kernel, kernel, c],
                        kernel * kernel * c,
                        kernel * kernel * filters,
                        init,
                        &mut rng,
                    );
                    layers.push(Layer::Conv(ConvLayer {
                        filters,
                        kernel,
                        in_channels: c,
                        weights,
                        bias: Tensor::zeros(vec![filters]),
                    }));
                    shape = Shape::Spatial(h - kernel + 1, w - kernel + 1, filters);
                }
                LayerSpec::MaxPool => {
                    let Shape::Spatial(h, w, c) = shape else {
                        return Err(at("pooling after flatten".into()));
                    };
                    if h < 2 || w < 2 {
                        return Err(at(format!("cannot pool {h}x{w}")));
                    }
                    layers.push(Layer::MaxPool);
                    shape = Shape::Spatial(h / 2, w / 2, c);
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(at("dense layer with zero units".into()));
                    }
                    let inputs = shape.len();
                    let weights = init_tensor(vec![units, inputs], inputs, units, init, &mut rng);
                    layers.push(Layer::Dense(DenseLayer {
                        units,
                        inputs,
                        weights,
                        bias: Tensor::zeros(vec![units]),
                    }));
                    shape = Shape::Flat(units);
                }
                LayerSpec::Relu => {
                    layers.push(Layer::Relu);
                }
                LayerSpec::Softmax => {
                    if idx + 1 != specs.len() {
                        return Err(at("softmax must be the final layer".into()));
                    }
                    layers.push(Layer::Softmax);
                }
            }
            boundaries.push(shape);
        }

        let [.., Layer::Dense(head), Layer::Softmax] = layers.as_slice() else {
            return Err(CnnError::InvalidArchitecture(
                "network must end in Dense then Softmax".into(),
            ));
        };
        let arity = head.units;
        if arity < 2 {
            return Err(CnnError::InvalidArchitecture(format!(
                "classification head needs at least 2 units, has {arity}"
            )));
        }
        Ok(Network {
            input_shape,
            layers,
            boundaries,
            arity,
        })
    }

    /// Reassemble a network from deserialized layers, revalidating the
    /// shape chain.
    pub(crate) fn from_parts(
        input_shape: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Network, CnnError> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        // Rebuild with throwaway weights to validate shapes, then move
        // the real parameters in.
        let mut net = Network::build(input_shape, &specs, WeightInit::default(), 0)
            .map_err(|e| CnnError::MalformedModel(e.to_string()))?;
        for (slot, layer) in net.layers.iter_mut().zip(layers) {
            match (slot, layer) {
                (Layer::Conv(slot), Layer::Conv(loaded)) => {
                    if slot.weights.shape() != loaded.weights.shape() {
                        return Err(CnnError::MalformedModel(format!(
                            "conv weight shape {:?} does not match architecture {:?}",
                            loaded.weights.shape(),
                            slot.weights.shape()
                        )));
                    }
                    *slot = loaded;
                }
                (Layer::Dense(slot), Layer::Dense(loaded)) => {
                    if slot.weights.shape() != loaded.weights.shape() {
                        return Err(CnnError::MalformedModel(format!(
                            "dense weight shape {:?} does not match architecture {:?}",
                            loaded.weights.shape(),
                            slot.weights.shape()
                        )));
                    }
                    *slot = loaded;
                }
                _ => {}
            }
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn boundaries(&self) -> &[Shape] {
        &self.boundaries
    }

    /// Weight and bias slices of a parametric layer, for optimizers and
    /// gradient checks.
    pub fn layer_params_mut(&mut self, layer: usize) -> Option<(&mut [f32], &mut [f32])> {
        match self.layers.get_mut(layer)? {
            Layer::Conv(c) => Some((c.weights.values_mut(), c.bias.values_mut())),
            Layer::Dense(d) => Some((d.weights.values_mut(), d.bias.values_mut())),
            _ => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::Dense(d) => d.weights.len() + d.bias.len(),
                _ => 0,
            })
            .sum()
    }

    fn check_patch(&self, patch: &Patch) -> Result<(), CnnError> {
        let (h, w, c) = self.input_shape;
        if patch.rows() != h || patch.cols() != w || Patch::CHANNELS != c {
            return Err(CnnError::ShapeMismatch(format!(
                "patch {}x{}x{} vs network input {h}x{w}x{c}",
                patch.rows(),
                patch.cols(),
                Patch::CHANNELS
            )));
        }
        Ok(())
    }

    /// Class probabilities for one patch. Non-negative, summing to 1.
    pub fn forward(&self, patch: &Patch) -> Result<Vec<f64>, CnnError> {
        self.check_patch(patch)?;
        let input: Vec<f64> = patch.values().iter().map(|&v| v as f64).collect();
        let mut cache = ForwardCache::new(self, input);
        cache.run(self);
        Ok(cache.into_output())
    }

    /// Every intermediate activation of a forward pass: entry 0 is the
    /// input, entry `i + 1` the output of layer `i`. Useful for
    /// inspecting ReLU/pool decisions from the outside.
    pub fn activations(&self, patch: &Patch) -> Result<Vec<Vec<f64>>, CnnError> {
        self.check_patch(patch)?;
        let input: Vec<f64> = patch.values().iter().map(|&v| v as f64).collect();
        let mut cache = ForwardCache::new(self, input);
        cache.run(self);
        Ok(cache.values)
    }

    /// Shapes of the data entering each layer; the final entry is the
    /// output shape.
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.boundaries
    }
}

fn init_tensor(
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    init: WeightInit,
    rng: &mut crate::rng::Stream,
) -> Tensor {
    let WeightInit::Glorot { gain } = init;
    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let values = (0..len)
        .map(|_| (rng.range_f64(-bound, bound)) as f32)
        .collect();
    Tensor::new(shape, values)
}

/// Per-layer activations from one forward pass. `values[0]` is the
/// network input; `values[i + 1]` is the output of layer `i`.
pub(crate) struct ForwardCache {
    pub values: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn new(net: &Network, input: Vec<f64>) -> ForwardCache {
        debug_assert_eq!(input.len(), net.boundaries()[0].len());
        let mut values = Vec::with_capacity(net.layers().len() + 1);
        values.push(input);
        ForwardCache { values }
    }

    pub fn run(&mut self, net: &Network) {
        for (idx, layer) in net.layers().iter().enumerate() {
            let out_shape = net.boundaries()[idx + 1];
            let input = self.values.last().expect("input present");
            let output = match layer {
                Layer::Conv(conv) => {
                    let Shape::Spatial(h, w, _) = net.boundaries()[idx] else {
                        unreachable!("validated at build")
                    };
                    conv_forward(conv, input, h, w)
                }
                Layer::MaxPool => {
                    let Shape::Spatial(h, w, c) = net.boundaries()[idx] else {
                        unreachable!("validated at build")
                    };
                    pool_forward(input, h, w, c)
                }
                Layer::Dense(dense) => dense_forward(dense, input),
                Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                Layer::Softmax => softmax(input),
            };
            debug_assert_eq!(output.len(), out_shape.len());
            self.values.push(output);
        }
    }

    pub fn output(&self) -> &[f64] {
        self.values.last().expect("forward ran")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.values.pop().expect("forward ran")
    }
}

fn conv_forward(conv: &ConvLayer, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (k, c, f) = (conv.kernel, conv.in_channels, conv.filters);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let weights = conv.weights.values();
    let bias = conv.bias.values();
    let mut out = vec![0.0f64; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            let out_base = (oy * ow + ox) * f;
            for fi in 0..f {
                let mut acc = bias[fi] as f64;
                let w_filter = &weights[fi * k * k * c..(fi + 1) * k * k * c];
                for ky in 0..k {
                    let in_base = ((oy + ky) * w + ox) * c;
                    let row_in = &input[in_base..in_base + k * c];
                    let row_w = &w_filter[ky * k * c..(ky + 1) * k * c];
                    for (iv, wv) in row_in.iter().zip(row_w) {
                        acc += iv * *wv as f64;
                    }
                }
                out[out_base + fi] = acc;
            }
        }
    }
    out
}

fn pool_forward(input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f64; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..2 {
                    for kx in 0..2 {
                        let v = input[((oy * 2 + ky) * w + ox * 2 + kx) * c + ch];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    out
}

fn dense_forward(dense: &DenseLayer, input: &[f64]) -> Vec<f64> {
    let weights = dense.weights.values();
    let bias = dense.bias.values();
    (0..dense.units)
        .map(|u| {
            let row = &weights[u * dense.inputs..(u + 1) * dense.inputs];
            let mut acc = bias[u] as f64;
            for (iv, wv) in input.iter().zip(row) {
                acc += iv * *wv as f64;
            }
            acc
        })
        .collect()
}

/// Numerically stable softmax; strictly positive for finite logits.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax_lowest_tie(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Four-way classification: argmax over the class probabilities, ties
/// resolved toward the lower class index.
pub fn classify_fourway(net: &Network, patch: &Patch) -> Result<EdgeClass, CnnError> {
    if net.arity() != EdgeClass::COUNT {
        return Err(CnnError::ShapeMismatch(format!(
            "four-way classification needs arity 4, network has {}",
            net.arity()
        )));
    }
    let probs = net.forward(patch)?;
    Ok(EdgeClass::from_index(argmax_lowest_tie(&probs)).expect("arity checked"))
}

/// A tree of three binary classifiers.
///
/// `split` separates internal edges (leaf edge, internal noise) from
/// external ones (background, plant edge); the matching child then picks
/// the final class. Binary outputs are ordered by ascending `EdgeClass`
/// index: external is `[Background, PlantEdge]`, internal is
/// `[LeafEdge, InternalNoise]`, and for `split` index 0 means external.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierTree {
    pub split: Network,
    pub internal: Network,
    pub external: Network,
}

impl ClassifierTree {
    pub fn new(
        split: Network,
        internal: Network,
        external: Network,
    ) -> Result<ClassifierTree, CnnError> {
        for (name, net) in [
            ("split", &split),
            ("internal", &internal),
            ("external", &external),
        ] {
            if net.arity() != 2 {
                return Err(CnnError::ShapeMismatch(format!(
                    "{name} network must be binary, has arity {}",
                    net.arity()
                )));
            }
            if net.input_shape() != split.input_shape() {
                return Err(CnnError::ShapeMismatch(
                    "tree networks must share one input shape".into(),
                ));
            }
        }
        Ok(ClassifierTree {
            split,
            internal,
            external,
        })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.split.input_shape()
    }
}

/// Route a patch through the classifier tree.
pub fn classify_tree(tree: &ClassifierTree, patch: &Patch) -> Result<EdgeClass, CnnError> {
    let split = tree.split.forward(patch)?;
    if argmax_lowest_tie(&split) == 0 {
        let probs = tree.external.forward(patch)?;
        Ok(if argmax_lowest_tie(&probs) == 0 {
            EdgeClass::Background
        } else {
            EdgeClass::PlantEdge
        })
    } else {
        let probs = tree.internal.forward(patch)?;
        Ok(if argmax_lowest_tie(&probs) == 0 {
            EdgeClass::LeafEdge
        } else {
            EdgeClass::InternalNoise
        })
    }
}

/// Default architecture for a given input shape and arity.
///
/// For 16x16 patches this is Conv(16, 5x5), ReLU, pool, Conv(32, 3x3),
/// ReLU, pool, Dense(arity), Softmax. Smaller inputs shrink the kernels
/// and drop stages that no longer fit.
pub fn default_specs(input_shape: (usize, usize, usize), arity: usize) -> Vec<LayerSpec> {
    let (h, w, _) = input_shape;
    let mut side = h.min(w);
    let mut specs = Vec::new();

    let k1 = if side >= 12 { 5 } else { 3.min(side) };
    specs.push(LayerSpec::Conv {
        filters: 16,
        kernel: k1,
    });
    specs.push(LayerSpec::Relu);
    side = side - k1 + 1;
    if side >= 2 {
        specs.push(LayerSpec::MaxPool);
        side /= 2;
    }
    if side >= 3 {
        specs.push(LayerSpec::Conv {
            filters: 32,
            kernel: 3,
        });
        specs.push(LayerSpec::Relu);
        side -= 2;
        if side >= 2 {
            specs.push(LayerSpec::MaxPool);
        }
    }
    specs.push(LayerSpec::Dense { units: arity });
    specs.push(LayerSpec::Softmax);
    specs
}
