//! Cross-entropy loss, backpropagation, and SGD with momentum.

use rayon::prelude::*;

use crate::patchgen::{EdgeClass, Patch, PatchDataset};

use super::{
    ClassifierTree, CnnError, ConvLayer, DenseLayer, ForwardCache, Layer, Network, Shape,
    WeightInit,
};

/// Samples per work unit when a batch is split across threads. Fixed so
/// the reduction order (and therefore every result bit) is independent
/// of the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            init: WeightInit::default(),
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Gradients for one parametric layer.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients aligned with `Network::layers()`; `None` for layers
/// without parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Option<ParamGrads>>,
}

impl Gradients {
    fn zeros(net: &Network) -> Gradients {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Some(ParamGrads {
                    weights: vec![0.0; c.weights.len()],
                    bias: vec![0.0; c.bias.len()],
                }),
                Layer::Dense(d) => Some(ParamGrads {
                    weights: vec![0.0; d.weights.len()],
                    bias: vec![0.0; d.bias.len()],
                }),
                _ => None,
            })
            .collect();
        Gradients { layers }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                    *x += y;
                }
                for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                    *x += y;
                }
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for grads in self.layers.iter_mut().flatten() {
            for v in &mut grads.weights {
                *v *= s;
            }
            for v in &mut grads.bias {
                *v *= s;
            }
        }
    }
}

/// Mean cross-entropy loss and parameter gradients over a batch of
/// `(patch, label index)` pairs.
pub fn loss_and_gradients_mapped(
    net: &Network,
    batch: &[(&Patch, usize)],
) -> Result<(f64, Gradients), CnnError> {
    if batch.is_empty() {
        return Err(CnnError::EmptyBatch);
    }
    for &(patch, label) in batch {
        net.check_patch(patch)?;
        if label >= net.arity() {
            return Err(CnnError::LabelOutOfRange {
                label,
                arity: net.arity(),
            });
        }
    }

    let chunks: Vec<&[(&Patch, usize)]> = batch.chunks(CHUNK).collect();
    let partials: Vec<(f64, Gradients)> = if chunks.len() > 1 {
        chunks
            .par_iter()
            .map(|chunk| accumulate_chunk(net, chunk))
            .collect()
    } else {
        chunks
            .iter()
            .map(|chunk| accumulate_chunk(net, chunk))
            .collect()
    };

    // Fixed fold order keeps the sums bit-reproducible.
    let mut loss = 0.0;
    let mut grads = Gradients::zeros(net);
    for (l, g) in &partials {
        loss += l;
        grads.add(g);
    }
    let inv_n = 1.0 / batch.len() as f64;
    grads.scale(inv_n);
    Ok((loss * inv_n, grads))
}

/// Batch gradients with labels taken from the patches' edge classes.
pub fn loss_and_gradients(
    net: &Network,
    batch: &[crate::patchgen::LabeledPatch],
) -> Result<(f64, Gradients), CnnError> {
    let mapped: Vec<(&Patch, usize)> = batch
        .iter()
        .map(|item| (&item.patch, item.label.index()))
        .collect();
    loss_and_gradients_mapped(net, &mapped)
}

fn accumulate_chunk(net: &Network, chunk: &[(&Patch, usize)]) -> (f64, Gradients) {
    let mut grads = Gradients::zeros(net);
    let mut loss = 0.0;
    for &(patch, label) in chunk {
        let input: Vec<f64> = patch.values().iter().map(|&v| v as f64).collect();
        let mut cache = ForwardCache::new(net, input);
        cache.run(net);
        loss += backward_sample(net, &cache, label, &mut grads);
    }
    (loss, grads)
}

/// Backpropagate one sample, accumulating raw (unscaled) gradients.
/// Returns the sample's cross-entropy loss.
fn backward_sample(net: &Network, cache: &ForwardCache, label: usize, grads: &mut Gradients) -> f64 {
    let probs = cache.output();
    let loss = -(probs[label].max(1e-300)).ln();

    // Softmax plus cross-entropy collapses to probs - onehot at the
    // logits, so backprop starts below the softmax layer.
    let mut upstream: Vec<f64> = probs.to_vec();
    upstream[label] -= 1.0;

    debug_assert!(matches!(net.layers().last(), Some(Layer::Softmax)));
    for idx in (0..net.layers().len() - 1).rev() {
        let input = &cache.values[idx];
        let layer = &net.layers()[idx];
        upstream = match layer {
            Layer::Conv(conv) => {
                let Shape::Spatial(h, w, _) = net.boundaries()[idx] else {
                    unreachable!()
                };
                let slot = grads.layers[idx].as_mut().expect("conv has grads");
                conv_backward(conv, input, h, w, &upstream, slot)
            }
            Layer::MaxPool => {
                let Shape::Spatial(h, w, c) = net.boundaries()[idx] else {
                    unreachable!()
                };
                pool_backward(input, h, w, c, &upstream)
            }
            Layer::Dense(dense) => {
                let slot = grads.layers[idx].as_mut().expect("dense has grads");
                dense_backward(dense, input, &upstream, slot)
            }
            Layer::Relu => input
                .iter()
                .zip(&upstream)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::Softmax => unreachable!("softmax is the final layer"),
        };
    }
    loss
}

fn conv_backward(
    conv: &ConvLayer,
    input: &[f64],
    h: usize,
    w: usize,
    dout: &[f64],
    grads: &mut ParamGrads,
) -> Vec<f64> {
    let (k, c, f) = (conv.kernel, conv.in_channels, conv.filters);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let weights = conv.weights.values();
    let mut din = vec![0.0f64; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let out_base = (oy * ow + ox) * f;
            for fi in 0..f {
                let g = dout[out_base + fi];
                if g == 0.0 {
                    continue;
                }
                grads.bias[fi] += g;
                let w_base = fi * k * k * c;
                for ky in 0..k {
                    let in_base = ((oy + ky) * w + ox) * c;
                    let wrow = w_base + ky * k * c;
                    for i in 0..k * c {
                        grads.weights[wrow + i] += g * input[in_base + i];
                        din[in_base + i] += g * weights[wrow + i] as f64;
                    }
                }
            }
        }
    }
    din
}

/// Routes each pooled gradient to the first maximal position in its
/// window (same tie rule as the forward pass).
fn pool_backward(input: &[f64], h: usize, w: usize, c: usize, dout: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut din = vec![0.0f64; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..2 {
                    for kx in 0..2 {
                        let idx = ((oy * 2 + ky) * w + ox * 2 + kx) * c + ch;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                din[best_idx] += dout[(oy * ow + ox) * c + ch];
            }
        }
    }
    din
}

fn dense_backward(
    dense: &DenseLayer,
    input: &[f64],
    dout: &[f64],
    grads: &mut ParamGrads,
) -> Vec<f64> {
    let weights = dense.weights.values();
    let mut din = vec![0.0f64; dense.inputs];
    for u in 0..dense.units {
        let g = dout[u];
        grads.bias[u] += g;
        let row = u * dense.inputs;
        if g == 0.0 {
            continue;
        }
        for i in 0..dense.inputs {
            grads.weights[row + i] += g * input[i];
            din[i] += g * weights[row + i] as f64;
        }
    }
    din
}

/// SGD with momentum over shuffled mini-batches. The shuffle stream is
/// seeded from the config, so identical inputs give byte-identical
/// trained weights.
///
/// `map` selects and relabels samples: patches mapped to `None` are
/// excluded, which is how the binary tree networks train on their own
/// branches only.
pub fn train_filtered(
    net: Network,
    data: &PatchDataset,
    cfg: &TrainConfig,
    map: &dyn Fn(EdgeClass) -> Option<usize>,
) -> Result<(Network, TrainLog), CnnError> {
    let mut net = net;
    let samples: Vec<(usize, usize)> = data
        .patches()
        .iter()
        .enumerate()
        .filter_map(|(i, item)| map(item.label).map(|label| (i, label)))
        .collect();
    if samples.is_empty() {
        return Err(CnnError::EmptyDataset);
    }
    for &(_, label) in &samples {
        if label >= net.arity() {
            return Err(CnnError::LabelOutOfRange {
                label,
                arity: net.arity(),
            });
        }
    }
    assert!(cfg.epochs >= 1, "epochs must be at least 1");
    assert!(cfg.batch_size >= 1, "batch size must be at least 1");
    assert!(cfg.learning_rate >= 0.0, "negative learning rate");

    let mut velocity: Vec<Option<ParamGrads>> = Gradients::zeros(&net).layers;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = crate::rng::Stream::derive(cfg.seed, 0x7472_6169_6e73_6866); // "trainshf"
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch_ids in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Patch, usize)> = batch_ids
                .iter()
                .map(|&o| {
                    let (idx, label) = samples[o];
                    (&data.patches()[idx].patch, label)
                })
                .collect();
            let (loss, grads) = loss_and_gradients_mapped(&net, &batch)?;
            epoch_loss += loss * batch.len() as f64;
            apply_update(&mut net, &grads, &mut velocity, cfg);
        }
        let mean = epoch_loss / samples.len() as f64;
        log.epoch_losses.push(mean);
        log::debug!("epoch {epoch}: loss {mean:.6}");
    }
    Ok((net, log))
}

fn apply_update(
    net: &mut Network,
    grads: &Gradients,
    velocity: &mut [Option<ParamGrads>],
    cfg: &TrainConfig,
) {
    for idx in 0..net.layers().len() {
        let Some(g) = &grads.layers[idx] else { continue };
        let v = velocity[idx].as_mut().expect("aligned with grads");
        let (weights, bias) = net.layer_params_mut(idx).expect("parametric layer");
        for i in 0..weights.len() {
            v.weights[i] = cfg.momentum * v.weights[i] - cfg.learning_rate * g.weights[i];
            weights[i] = (weights[i] as f64 + v.weights[i]) as f32;
        }
        for i in 0..bias.len() {
            v.bias[i] = cfg.momentum * v.bias[i] - cfg.learning_rate * g.bias[i];
            bias[i] = (bias[i] as f64 + v.bias[i]) as f32;
        }
    }
}

/// Train on the dataset's own four-way labels.
pub fn train(
    net: Network,
    data: &PatchDataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainLog), CnnError> {
    train_filtered(net, data, cfg, &|class| Some(class.index()))
}

/// Train the three binary networks of a classifier tree on one dataset.
///
/// All three share the architecture given by `specs`; their initial
/// weights come from seeds derived from `cfg.seed`.
pub fn train_tree(
    data: &PatchDataset,
    specs: &[super::LayerSpec],
    cfg: &TrainConfig,
) -> Result<(ClassifierTree, [TrainLog; 3]), CnnError> {
    let (rows, cols) = data.patch_shape();
    let shape = (rows, cols, Patch::CHANNELS);

    let build = |tag: u64| Network::build(shape, specs, cfg.init, cfg.seed.wrapping_add(tag));

    let split_map = |class: EdgeClass| -> Option<usize> {
        Some(match class {
            EdgeClass::Background | EdgeClass::PlantEdge => 0,
            EdgeClass::LeafEdge | EdgeClass::InternalNoise => 1,
        })
    };
    let internal_map = |class: EdgeClass| -> Option<usize> {
        match class {
            EdgeClass::LeafEdge => Some(0),
            EdgeClass::InternalNoise => Some(1),
            _ => None,
        }
    };
    let external_map = |class: EdgeClass| -> Option<usize> {
        match class {
            EdgeClass::Background => Some(0),
            EdgeClass::PlantEdge => Some(1),
            _ => None,
        }
    };

    let (split, split_log) = train_filtered(build(1)?, data, cfg, &split_map)?;
    let (internal, internal_log) = train_filtered(build(2)?, data, cfg, &internal_map)?;
    let (external, external_log) = train_filtered(build(3)?, data, cfg, &external_map)?;
    Ok((
        ClassifierTree::new(split, internal, external)?,
        [split_log, internal_log, external_log],
    ))
}

#[cfg(test)]
pub(crate) fn test_pool_backward(
    input: &[f64],
    h: usize,
    w: usize,
    c: usize,
    dout: &[f64],
) -> Vec<f64> {
    pool_backward(input, h, w, c, dout)
}

/// Fraction of mapped samples whose argmax matches the mapped label.
pub fn dataset_accuracy(
    net: &Network,
    data: &PatchDataset,
    map: &dyn Fn(EdgeClass) -> Option<usize>,
) -> Result<f64, CnnError> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for item in data.patches() {
        let Some(label) = map(item.label) else { continue };
        let probs = net.forward(&item.patch)?;
        if super::argmax_lowest_tie(&probs) == label {
            correct += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(CnnError::EmptyDataset);
    }
    Ok(correct as f64 / total as f64)
}
