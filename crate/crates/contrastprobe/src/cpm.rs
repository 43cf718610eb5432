//! CPM model container.
//!
//! Layout (little-endian): magic `CPMF`, `u32` version, `u64` header
//! length, UTF-8 JSON header, then the raw `f32` blobs in header order.
//! Blob offsets and lengths in the header are in bytes, relative to the
//! first byte after the header. Conv weights are stored `(ky, kx, cin, cout)`.

use std::path::Path;

use contrastprobe_core::error::Error as CoreError;
use contrastprobe_core::{ConvWeights, CropPolicy, LayerKind, LayerNode, ModelGraph, Preprocess};
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"CPMF";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CpmError {
    #[error("not a CPM file (bad magic)")]
    BadMagic,
    #[error("unsupported CPM version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt CPM header: {0}")]
    CorruptHeader(String),
    #[error("CPM shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("CPM graph contains a cycle")]
    CyclicGraph,
    #[error("invalid CPM graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for CpmError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::CyclicGraph => CpmError::CyclicGraph,
            CoreError::ShapeMismatch { .. } | CoreError::DimensionMismatch(_) => CpmError::ShapeMismatch(e.to_string()),
            other => CpmError::InvalidGraph(other.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    input_shape: [usize; 3],
    class_count: usize,
    probe_ids: Vec<String>,
    preprocess: PreprocessHeader,
    nodes: Vec<NodeHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PreprocessHeader {
    resize_shorter: Option<usize>,
    crop: CropHeader,
    mean: Vec<f32>,
    scale: Vec<f32>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CropHeader {
    Center,
    None,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeHeader {
    id: String,
    inputs: Vec<String>,
    #[serde(flatten)]
    params: Params,
    #[serde(default)]
    blobs: Vec<BlobRef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    Conv { kh: usize, kw: usize, cin: usize, cout: usize, stride: usize, padding: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    AffineChannel { channels: usize },
    Dense { in_features: usize, out_features: usize },
    Softmax,
    Concat,
    Add,
    Flatten,
}

impl Params {
    /// Blob names and element counts this node must carry.
    fn expected_blobs(&self) -> Vec<(&'static str, usize)> {
        match *self {
            Params::Conv { kh, kw, cin, cout, .. } => vec![("weights", kh * kw * cin * cout), ("bias", cout)],
            Params::AffineChannel { channels } => vec![("scale", channels), ("shift", channels)],
            Params::Dense { in_features, out_features } => {
                vec![("weights", in_features * out_features), ("bias", out_features)]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BlobRef {
    name: String,
    offset: u64,
    length: u64,
}

/// Serializes a graph. Identical graphs always produce identical bytes.
pub fn save_model(g: &ModelGraph) -> Vec<u8> {
    let mut blob_bytes: Vec<u8> = Vec::new();
    let mut push_blob = |name: &str, values: &[f32]| {
        let offset = blob_bytes.len() as u64;
        for v in values {
            blob_bytes.extend_from_slice(&v.to_le_bytes());
        }
        BlobRef { name: name.into(), offset, length: (values.len() * 4) as u64 }
    };
    let nodes = g
        .nodes()
        .iter()
        .map(|n| {
            let (params, blobs) = match &n.kind {
                LayerKind::Conv(w) => (
                    Params::Conv { kh: w.kh, kw: w.kw, cin: w.cin, cout: w.cout, stride: w.stride, padding: w.padding },
                    vec![push_blob("weights", &w.weights), push_blob("bias", &w.bias)],
                ),
                LayerKind::Relu => (Params::Relu, Vec::new()),
                LayerKind::MaxPool { window, stride } => (Params::MaxPool { window: *window, stride: *stride }, Vec::new()),
                LayerKind::AffineChannel { scale, shift } => (
                    Params::AffineChannel { channels: scale.len() },
                    vec![push_blob("scale", scale), push_blob("shift", shift)],
                ),
                LayerKind::Dense { weights, bias } => (
                    Params::Dense { in_features: weights.len() / bias.len().max(1), out_features: bias.len() },
                    vec![push_blob("weights", weights), push_blob("bias", bias)],
                ),
                LayerKind::Softmax => (Params::Softmax, Vec::new()),
                LayerKind::Concat => (Params::Concat, Vec::new()),
                LayerKind::Add => (Params::Add, Vec::new()),
                LayerKind::Flatten => (Params::Flatten, Vec::new()),
            };
            NodeHeader { id: n.id.clone(), inputs: n.inputs.clone(), params, blobs }
        })
        .collect();
    let (h, w, c) = g.input_shape();
    let pre = g.preprocess();
    let header = Header {
        input_shape: [h, w, c],
        class_count: g.class_count(),
        probe_ids: g.probe_ids().to_vec(),
        preprocess: PreprocessHeader {
            resize_shorter: pre.resize_shorter,
            crop: match pre.crop {
                CropPolicy::Center => CropHeader::Center,
                CropPolicy::None => CropHeader::None,
            },
            mean: pre.mean.clone(),
            scale: pre.scale.clone(),
        },
        nodes,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + blob_bytes.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob_bytes);
    out
}

/// Parses and fully validates a CPM file.
pub fn load_model(bytes: &[u8]) -> Result<ModelGraph, CpmError> {
    if bytes.len() < MAGIC.len() {
        return Err(CpmError::CorruptHeader(format!("file is only {} bytes", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(CpmError::BadMagic);
    }
    if bytes.len() < PREAMBLE {
        return Err(CpmError::CorruptHeader("truncated preamble".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CpmError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[PREAMBLE..];
    let header_len = usize::try_from(header_len)
        .ok()
        .filter(|&n| n <= body.len())
        .ok_or_else(|| CpmError::CorruptHeader(format!("header length {header_len} exceeds file")))?;
    let header: Header = serde_json::from_slice(&body[..header_len])
        .map_err(|e| CpmError::CorruptHeader(format!("header json: {e}")))?;
    let blobs = &body[header_len..];

    let mut cursor = 0u64;
    for node in &header.nodes {
        for b in &node.blobs {
            if b.offset != cursor {
                return Err(CpmError::CorruptHeader(format!(
                    "blob `{}.{}` at offset {} but expected {cursor}",
                    node.id, b.name, b.offset
                )));
            }
            if b.length % 4 != 0 {
                return Err(CpmError::CorruptHeader(format!("blob `{}.{}` length {} is not f32-aligned", node.id, b.name, b.length)));
            }
            cursor = cursor
                .checked_add(b.length)
                .ok_or_else(|| CpmError::CorruptHeader("blob lengths overflow".into()))?;
        }
    }
    if cursor != blobs.len() as u64 {
        return Err(CpmError::CorruptHeader(format!(
            "header declares {cursor} blob bytes, file holds {}",
            blobs.len()
        )));
    }

    let nodes = header
        .nodes
        .into_iter()
        .map(|n| {
            let expected = n.params.expected_blobs();
            if expected.len() != n.blobs.len() || expected.iter().zip(&n.blobs).any(|((name, _), b)| *name != b.name) {
                let names: Vec<&str> = n.blobs.iter().map(|b| b.name.as_str()).collect();
                return Err(CpmError::CorruptHeader(format!("node `{}` has blobs {names:?}", n.id)));
            }
            let mut values = Vec::with_capacity(expected.len());
            for ((name, count), b) in expected.iter().zip(&n.blobs) {
                if b.length != (*count as u64) * 4 {
                    return Err(CpmError::ShapeMismatch(format!(
                        "node `{}` blob `{name}` holds {} values, dims require {count}",
                        n.id,
                        b.length / 4
                    )));
                }
                let raw = &blobs[b.offset as usize..(b.offset + b.length) as usize];
                values.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f32>>());
            }
            let mut values = values.into_iter();
            let mut next = || values.next().expect("blob count checked");
            let kind = match n.params {
                Params::Conv { kh, kw, cin, cout, stride, padding } => {
                    let (weights, bias) = (next(), next());
                    LayerKind::Conv(ConvWeights { kh, kw, cin, cout, weights, bias, stride, padding })
                }
                Params::Relu => LayerKind::Relu,
                Params::MaxPool { window, stride } => LayerKind::MaxPool { window, stride },
                Params::AffineChannel { .. } => {
                    let (scale, shift) = (next(), next());
                    LayerKind::AffineChannel { scale, shift }
                }
                Params::Dense { .. } => {
                    let (weights, bias) = (next(), next());
                    LayerKind::Dense { weights, bias }
                }
                Params::Softmax => LayerKind::Softmax,
                Params::Concat => LayerKind::Concat,
                Params::Add => LayerKind::Add,
                Params::Flatten => LayerKind::Flatten,
            };
            Ok(LayerNode { id: n.id, kind, inputs: n.inputs })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let [h, w, c] = header.input_shape;
    let pre = header.preprocess;
    let preprocess = Preprocess {
        resize_shorter: pre.resize_shorter,
        crop: match pre.crop {
            CropHeader::Center => CropPolicy::Center,
            CropHeader::None => CropPolicy::None,
        },
        mean: pre.mean,
        scale: pre.scale,
    };
    Ok(ModelGraph::new(nodes, (h, w, c), header.class_count, header.probe_ids, preprocess)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelGraph, CpmError> {
    load_model(&std::fs::read(path)?)
}

pub fn write_model(path: impl AsRef<Path>, g: &ModelGraph) -> Result<(), CpmError> {
    Ok(std::fs::write(path, save_model(g))?)
}
