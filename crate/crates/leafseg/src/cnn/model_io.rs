//! Model serialization.
//!
//! Single networks: magic `LSNN`, u16 version, u8 arity, u8 layer count,
//! input shape as three u32, then per layer a type tag, its dimensions,
//! and little-endian f32 weights. Classifier trees: magic `LSTR`, u16
//! version, then three embedded network blocks (split, internal,
//! external). Weight round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ClassifierTree, CnnError, ConvLayer, DenseLayer, Layer, Network, Tensor};

const NET_MAGIC: &[u8; 4] = b"LSNN";
const TREE_MAGIC: &[u8; 4] = b"LSTR";
const VERSION: u16 = 1;

const TAG_CONV: u8 = 0;
const TAG_POOL: u8 = 1;
const TAG_DENSE: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_SOFTMAX: u8 = 4;

/// A deserialized model file: either one network or a classifier tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Single(Network),
    Tree(ClassifierTree),
}

impl Model {
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            Model::Single(net) => net.input_shape(),
            Model::Tree(tree) => tree.input_shape(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CnnError> {
        save_model(self, path)
    }
}

impl Network {
    pub fn save(&self, path: &Path) -> Result<(), CnnError> {
        let mut w = BufWriter::new(File::create(path)?);
        write_network(&mut w, self)?;
        w.flush()?;
        Ok(())
    }
}

impl ClassifierTree {
    pub fn save(&self, path: &Path) -> Result<(), CnnError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(TREE_MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        write_network(&mut w, &self.split)?;
        write_network(&mut w, &self.internal)?;
        write_network(&mut w, &self.external)?;
        w.flush()?;
        Ok(())
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), CnnError> {
    match model {
        Model::Single(net) => net.save(path),
        Model::Tree(tree) => tree.save(path),
    }
}

/// Load either file kind, dispatching on the magic bytes.
pub fn load_model(path: &Path) -> Result<Model, CnnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    match &magic {
        NET_MAGIC => Ok(Model::Single(read_network_body(&mut r)?)),
        TREE_MAGIC => {
            let version = r.read_u16::<LittleEndian>()?;
            if version != VERSION {
                return Err(CnnError::VersionMismatch {
                    found: version,
                    expected: VERSION,
                });
            }
            let split = read_embedded_network(&mut r)?;
            let internal = read_embedded_network(&mut r)?;
            let external = read_embedded_network(&mut r)?;
            let tree = ClassifierTree::new(split, internal, external)
                .map_err(|e| CnnError::MalformedModel(e.to_string()))?;
            Ok(Model::Tree(tree))
        }
        other => Err(CnnError::MalformedModel(format!("bad magic {other:?}"))),
    }
}

fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<(), CnnError> {
    w.write_all(NET_MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u8(net.arity() as u8)?;
    w.write_u8(net.layers().len() as u8)?;
    let (h, iw, c) = net.input_shape();
    for dim in [h, iw, c] {
        w.write_u32::<LittleEndian>(dim as u32)?;
    }
    for layer in net.layers() {
        match layer {
            Layer::Conv(conv) => {
                w.write_u8(TAG_CONV)?;
                w.write_u32::<LittleEndian>(conv.filters as u32)?;
                w.write_u32::<LittleEndian>(conv.kernel as u32)?;
                w.write_u32::<LittleEndian>(conv.in_channels as u32)?;
                write_values(w, conv.weights.values())?;
                write_values(w, conv.bias.values())?;
            }
            Layer::MaxPool => w.write_u8(TAG_POOL)?,
            Layer::Dense(dense) => {
                w.write_u8(TAG_DENSE)?;
                w.write_u32::<LittleEndian>(dense.units as u32)?;
                w.write_u32::<LittleEndian>(dense.inputs as u32)?;
                write_values(w, dense.weights.values())?;
                write_values(w, dense.bias.values())?;
            }
            Layer::Relu => w.write_u8(TAG_RELU)?,
            Layer::Softmax => w.write_u8(TAG_SOFTMAX)?,
        }
    }
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f32]) -> Result<(), CnnError> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_embedded_network<R: Read>(r: &mut R) -> Result<Network, CnnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(CnnError::MalformedModel(format!(
            "embedded network has bad magic {magic:?}"
        )));
    }
    read_network_body(r)
}

fn read_network_body<R: Read>(r: &mut R) -> Result<Network, CnnError> {
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(CnnError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let arity = r.read_u8()? as usize;
    let layer_count = r.read_u8()? as usize;
    let h = r.read_u32::<LittleEndian>()? as usize;
    let w = r.read_u32::<LittleEndian>()? as usize;
    let c = r.read_u32::<LittleEndian>()? as usize;

    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let tag = r.read_u8()?;
        match tag {
            TAG_CONV => {
                let filters = r.read_u32::<LittleEndian>()? as usize;
                let kernel = r.read_u32::<LittleEndian>()? as usize;
                let in_channels = r.read_u32::<LittleEndian>()? as usize;
                if filters == 0 || kernel == 0 || in_channels == 0 {
                    return Err(CnnError::MalformedModel(format!(
                        "layer {i}: degenerate conv dims"
                    )));
                }
                let weights = read_values(r, filters * kernel * kernel * in_channels)?;
                let bias = read_values(r, filters)?;
                layers.push(Layer::Conv(ConvLayer {
                    filters,
                    kernel,
                    in_channels,
                    weights: Tensor::new(vec![filters, kernel, kernel, in_channels], weights),
                    bias: Tensor::new(vec![filters], bias),
                }));
            }
            TAG_POOL => layers.push(Layer::MaxPool),
            TAG_DENSE => {
                let units = r.read_u32::<LittleEndian>()? as usize;
                let inputs = r.read_u32::<LittleEndian>()? as usize;
                if units == 0 || inputs == 0 {
                    return Err(CnnError::MalformedModel(format!(
                        "layer {i}: degenerate dense dims"
                    )));
                }
                let weights = read_values(r, units * inputs)?;
                let bias = read_values(r, units)?;
                layers.push(Layer::Dense(DenseLayer {
                    units,
                    inputs,
                    weights: Tensor::new(vec![units, inputs], weights),
                    bias: Tensor::new(vec![units], bias),
                }));
            }
            TAG_RELU => layers.push(Layer::Relu),
            TAG_SOFTMAX => layers.push(Layer::Softmax),
            other => {
                return Err(CnnError::MalformedModel(format!(
                    "layer {i}: unknown tag {other}"
                )))
            }
        }
    }

    let net = Network::from_parts((h, w, c), layers)?;
    if net.arity() != arity {
        return Err(CnnError::MalformedModel(format!(
            "header arity {arity} vs dense head {}",
            net.arity()
        )));
    }
    Ok(net)
}

fn read_values<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, CnnError> {
    let mut values = vec![0.0f32; len];
    r.read_f32_into::<LittleEndian>(&mut values)?;
    Ok(values)
}
