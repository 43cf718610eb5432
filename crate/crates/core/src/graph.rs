//! DAG models with activation taps.
//!
//! Nodes name their predecessors by id; the reserved id [`GRAPH_INPUT`]
//! refers to the (preprocessed) image. A valid graph is acyclic, has a
//! single sink that is a [`LayerKind::Softmax`] over `class_count` scores,
//! and passes static shape inference from `input_shape`.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};
use crate::ops;
use crate::preprocess::Preprocess;
use crate::tensor::{window_output, ConvWeights, Tensor};

/// Id that designates the graph input in a node's `inputs`.
pub const GRAPH_INPUT: &str = "input";

/// Default number of probed convolution layers.
pub const DEFAULT_PROBE_COUNT: usize = 5;

pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv(ConvWeights),
    Relu,
    MaxPool { window: usize, stride: usize },
    AffineChannel { scale: Vec<f32>, shift: Vec<f32> },
    /// `weights` is `[bias.len() × in]` row-major.
    Dense { weights: Vec<f32>, bias: Vec<f32> },
    Softmax,
    Concat,
    Add,
    Flatten,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv(_) => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::AffineChannel { .. } => "affine_channel",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Softmax => "softmax",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
            LayerKind::Flatten => "flatten",
        }
    }

    fn is_multi_input(&self) -> bool {
        matches!(self, LayerKind::Concat | LayerKind::Add)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
}

impl LayerNode {
    pub fn new(id: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        Self { id: id.into(), kind, inputs: inputs.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Input,
    Node(usize),
}

/// Which activation is captured at a probed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TapPoint {
    /// Convolution output with bias, before any nonlinearity.
    #[default]
    PreRelu,
    /// `relu` of the convolution output.
    PostRelu,
}

/// Top-1 class and its softmax probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class_id: usize,
    pub confidence: f32,
}

impl Prediction {
    /// Argmax with ties resolved to the lowest index.
    ///
    /// # Panics
    /// If `probabilities` is empty.
    pub fn from_probabilities(probabilities: &[f32]) -> Self {
        let (class_id, &confidence) = probabilities
            .iter()
            .enumerate()
            .reduce(|best, cur| if cur.1 > best.1 { cur } else { best })
            .expect("empty score vector");
        Self { class_id, confidence }
    }
}

/// Result of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub prediction: Prediction,
    /// Sink softmax output.
    pub scores: Vec<f32>,
    /// One tensor per probe id, in probe order.
    pub taps: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    nodes: Vec<LayerNode>,
    input_shape: Shape,
    class_count: usize,
    probe_ids: Vec<String>,
    preprocess: Preprocess,
    // Derived from the fields above during validation.
    edges: Vec<Vec<Source>>,
    shapes: Vec<Shape>,
    depth: Vec<usize>,
    probes: Vec<usize>,
    last_use: Vec<usize>,
}

fn shape_err(node: &str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch { node: node.to_string(), detail: detail.into() }
}

impl ModelGraph {
    /// Validates and builds a graph.
    ///
    /// Nodes that are not listed in topological order are reordered by a
    /// stable topological sort (earliest declared ready node first).
    pub fn new(
        nodes: Vec<LayerNode>,
        input_shape: Shape,
        class_count: usize,
        probe_ids: Vec<String>,
        preprocess: Preprocess,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidGraph("class_count must be positive".into()));
        }
        let (h, w, c) = input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidGraph(format!("input shape {h}x{w}x{c} must be positive")));
        }
        let nodes = topo_sort(nodes)?;
        let edges = resolve_edges(&nodes)?;

        let mut consumed = vec![false; nodes.len()];
        let mut last_use = vec![0; nodes.len()];
        for (i, srcs) in edges.iter().enumerate() {
            for s in srcs {
                if let Source::Node(j) = *s {
                    consumed[j] = true;
                    last_use[j] = i;
                }
            }
        }
        let sinks: Vec<usize> = (0..nodes.len()).filter(|&i| !consumed[i]).collect();
        if sinks.len() != 1 {
            let ids: Vec<&str> = sinks.iter().map(|&i| nodes[i].id.as_str()).collect();
            return Err(Error::InvalidGraph(format!("graph must have exactly one sink, found {ids:?}")));
        }
        let sink = sinks[0];
        last_use[sink] = usize::MAX;

        let mut shapes: Vec<Shape> = Vec::with_capacity(nodes.len());
        let mut depth: Vec<usize> = Vec::with_capacity(nodes.len());
        for (node, srcs) in nodes.iter().zip(&edges) {
            let in_shapes: Vec<Shape> = srcs
                .iter()
                .map(|s| match *s {
                    Source::Input => input_shape,
                    Source::Node(j) => shapes[j],
                })
                .collect();
            shapes.push(infer_shape(node, &in_shapes)?);
            let d = srcs
                .iter()
                .map(|s| match *s {
                    Source::Input => 0,
                    Source::Node(j) => depth[j],
                })
                .max()
                .unwrap_or(0);
            depth.push(d + 1);
        }
        let sink_node = &nodes[sink];
        if !matches!(sink_node.kind, LayerKind::Softmax) {
            return Err(Error::InvalidGraph(format!(
                "sink `{}` must be a softmax, found {}",
                sink_node.id,
                sink_node.kind.name()
            )));
        }
        let (sh, sw, sc) = shapes[sink];
        if sh * sw * sc != class_count {
            return Err(shape_err(&sink_node.id, format!("sink emits {} scores, class_count is {class_count}", sh * sw * sc)));
        }
        preprocess.validate(c)?;

        let mut g = Self {
            nodes,
            input_shape,
            class_count,
            probe_ids: Vec::new(),
            preprocess,
            edges,
            shapes,
            depth,
            probes: Vec::new(),
            last_use,
        };
        g.set_probes(probe_ids)?;
        Ok(g)
    }

    /// Replaces the probe list.
    pub fn with_probes(mut self, probe_ids: Vec<String>) -> Result<Self> {
        self.set_probes(probe_ids)?;
        Ok(self)
    }

    fn set_probes(&mut self, probe_ids: Vec<String>) -> Result<()> {
        let mut probes = Vec::with_capacity(probe_ids.len());
        for id in &probe_ids {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::InvalidGraph(format!("probe `{id}` is not a node")))?;
            match &self.nodes[i].kind {
                LayerKind::Conv(w) if w.cout <= usize::from(u16::MAX) + 1 => {}
                LayerKind::Conv(_) => return Err(Error::InvalidGraph(format!("probe `{id}` has too many kernels"))),
                other => {
                    return Err(Error::InvalidGraph(format!("probe `{id}` is a {}, not a conv", other.name())))
                }
            }
            if probes.contains(&i) {
                return Err(Error::InvalidGraph(format!("probe `{id}` listed twice")));
            }
            probes.push(i);
        }
        // A probe may not be listed after one of its descendants.
        for (k, &later) in probes.iter().enumerate() {
            for &earlier in &probes[..k] {
                if self.is_ancestor(later, earlier) {
                    return Err(Error::InvalidGraph(format!(
                        "probe `{}` is listed after its descendant `{}`",
                        self.nodes[later].id, self.nodes[earlier].id
                    )));
                }
            }
        }
        self.probes = probes;
        self.probe_ids = probe_ids;
        Ok(())
    }

    fn is_ancestor(&self, anc: usize, node: usize) -> bool {
        if anc >= node {
            return false;
        }
        let mut seen = vec![false; node + 1];
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for s in &self.edges[n] {
                if let Source::Node(j) = *s {
                    if j == anc {
                        return true;
                    }
                    if j > anc && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        false
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn preprocess(&self) -> &Preprocess {
        &self.preprocess
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Output shape of the node `id`.
    pub fn node_shape(&self, id: &str) -> Option<Shape> {
        self.index_of(id).map(|i| self.shapes[i])
    }

    /// Longest path length from the input (the input itself has depth 0).
    pub fn node_depth(&self, id: &str) -> Option<usize> {
        self.index_of(id).map(|i| self.depth[i])
    }

    /// The first five convolutions ordered by depth from the input, ties
    /// broken by declaration order.
    pub fn default_probe_ids(&self) -> Vec<String> {
        let mut convs: Vec<usize> =
            (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i].kind, LayerKind::Conv(_))).collect();
        convs.sort_by_key(|&i| (self.depth[i], i));
        convs.into_iter().take(DEFAULT_PROBE_COUNT).map(|i| self.nodes[i].id.clone()).collect()
    }

    /// Runs the graph on an already preprocessed image.
    pub fn forward_with_taps(&self, image: &Tensor, tap: TapPoint) -> Result<Forward> {
        if image.shape() != self.input_shape {
            return Err(shape_err(
                GRAPH_INPUT,
                format!("expected {:?}, got {:?}", self.input_shape, image.shape()),
            ));
        }
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut taps: Vec<Option<Tensor>> = vec![None; self.probes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let inputs: Vec<&Tensor> = self.edges[i]
                .iter()
                .map(|s| match *s {
                    Source::Input => image,
                    Source::Node(j) => values[j].as_ref().expect("value freed before last use"),
                })
                .collect();
            let out = eval_node(node, &inputs).map_err(|e| match e {
                Error::DimensionMismatch(d) => shape_err(&node.id, d),
                other => other,
            })?;
            if let Some(k) = self.probes.iter().position(|&p| p == i) {
                taps[k] = Some(match tap {
                    TapPoint::PreRelu => out.clone(),
                    TapPoint::PostRelu => ops::relu(&out),
                });
            }
            for s in &self.edges[i] {
                if let Source::Node(j) = *s {
                    if self.last_use[j] == i {
                        values[j] = None;
                    }
                }
            }
            values[i] = Some(out);
        }
        let sink = self.last_use.iter().position(|&u| u == usize::MAX).expect("validated sink");
        let scores = values[sink].take().expect("sink evaluated").into_data();
        Ok(Forward {
            prediction: Prediction::from_probabilities(&scores),
            scores,
            taps: taps.into_iter().map(|t| t.expect("probe evaluated")).collect(),
        })
    }

    /// Preprocesses a `[0, 1]` image, then runs [`Self::forward_with_taps`].
    pub fn classify(&self, image: &Tensor, tap: TapPoint) -> Result<Forward> {
        let input = self.preprocess.apply(image, self.input_shape)?;
        self.forward_with_taps(&input, tap)
    }
}

fn eval_node(node: &LayerNode, inputs: &[&Tensor]) -> Result<Tensor> {
    let x = inputs[0];
    match &node.kind {
        LayerKind::Conv(w) => ops::conv2d(x, w),
        LayerKind::Relu => Ok(ops::relu(x)),
        LayerKind::MaxPool { window, stride } => ops::maxpool2d(x, *window, *stride),
        LayerKind::AffineChannel { scale, shift } => ops::affine_channel(x, scale, shift),
        LayerKind::Dense { weights, bias } => Tensor::vector(ops::dense(x.data(), weights, bias)?),
        LayerKind::Softmax => {
            let (h, w, c) = x.shape();
            Tensor::new(h, w, c, ops::softmax(x.data()))
        }
        LayerKind::Concat => ops::concat(inputs),
        LayerKind::Add => ops::add(inputs),
        LayerKind::Flatten => Ok(x.clone().flatten()),
    }
}

fn infer_shape(node: &LayerNode, inputs: &[Shape]) -> Result<Shape> {
    let id = node.id.as_str();
    let (h, w, c) = inputs[0];
    match &node.kind {
        LayerKind::Conv(cw) => {
            cw.validate().map_err(|e| shape_err(id, e.to_string()))?;
            if c != cw.cin {
                return Err(shape_err(id, format!("expects {} input channels, got {c}", cw.cin)));
            }
            let (oh, ow) = cw.output_dims(h, w).map_err(|e| shape_err(id, e.to_string()))?;
            Ok((oh, ow, cw.cout))
        }
        LayerKind::Relu | LayerKind::Softmax => Ok((h, w, c)),
        LayerKind::MaxPool { window, stride } => {
            let oh = window_output(h, *window, *stride, 0);
            let ow = window_output(w, *window, *stride, 0);
            match (oh, ow) {
                (Some(oh), Some(ow)) => Ok((oh, ow, c)),
                _ => Err(shape_err(id, format!("window {window} stride {stride} does not tile {h}x{w}"))),
            }
        }
        LayerKind::AffineChannel { scale, shift } => {
            if scale.len() != c || shift.len() != c {
                return Err(shape_err(id, format!("needs {c} scale/shift values, got {}/{}", scale.len(), shift.len())));
            }
            Ok((h, w, c))
        }
        LayerKind::Dense { weights, bias } => {
            let n_in = h * w * c;
            if bias.is_empty() || weights.len() != bias.len() * n_in {
                return Err(shape_err(
                    id,
                    format!("{} outputs over {n_in} inputs needs {} weights, got {}", bias.len(), bias.len() * n_in, weights.len()),
                ));
            }
            Ok((1, 1, bias.len()))
        }
        LayerKind::Flatten => Ok((1, 1, h * w * c)),
        LayerKind::Concat => {
            if let Some(bad) = inputs.iter().find(|s| (s.0, s.1) != (h, w)) {
                return Err(shape_err(id, format!("inputs disagree spatially: {h}x{w} vs {}x{}", bad.0, bad.1)));
            }
            Ok((h, w, inputs.iter().map(|s| s.2).sum()))
        }
        LayerKind::Add => {
            if let Some(bad) = inputs.iter().find(|&&s| s != (h, w, c)) {
                return Err(shape_err(id, format!("inputs disagree: {:?} vs {bad:?}", (h, w, c))));
            }
            Ok((h, w, c))
        }
    }
}

fn check_ids(nodes: &[LayerNode]) -> Result<()> {
    for (i, n) in nodes.iter().enumerate() {
        if n.id.is_empty() || n.id == GRAPH_INPUT {
            return Err(Error::InvalidGraph(format!("invalid node id `{}`", n.id)));
        }
        if nodes[..i].iter().any(|m| m.id == n.id) {
            return Err(Error::InvalidGraph(format!("duplicate node id `{}`", n.id)));
        }
        let arity_ok = if n.kind.is_multi_input() { !n.inputs.is_empty() } else { n.inputs.len() == 1 };
        if !arity_ok {
            return Err(Error::InvalidGraph(format!(
                "{} node `{}` has {} inputs",
                n.kind.name(),
                n.id,
                n.inputs.len()
            )));
        }
    }
    Ok(())
}

fn resolve_edges(nodes: &[LayerNode]) -> Result<Vec<Vec<Source>>> {
    nodes
        .iter()
        .map(|n| {
            n.inputs
                .iter()
                .map(|id| {
                    if id == GRAPH_INPUT {
                        Ok(Source::Input)
                    } else {
                        nodes
                            .iter()
                            .position(|m| &m.id == id)
                            .map(Source::Node)
                            .ok_or_else(|| Error::InvalidGraph(format!("node `{}` reads unknown `{id}`", n.id)))
                    }
                })
                .collect()
        })
        .collect()
}

/// Kahn's algorithm, always taking the earliest declared ready node.
fn topo_sort(nodes: Vec<LayerNode>) -> Result<Vec<LayerNode>> {
    check_ids(&nodes)?;
    let edges = resolve_edges(&nodes)?;
    let n = nodes.len();
    let mut pending = vec![0usize; n];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, srcs) in edges.iter().enumerate() {
        for s in srcs {
            if let Source::Node(j) = *s {
                pending[i] += 1;
                consumers[j].push(i);
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| pending[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &k in &consumers[i] {
            pending[k] -= 1;
            if pending[k] == 0 {
                ready.push(Reverse(k));
            }
        }
    }
    if order.len() != n {
        return Err(Error::CyclicGraph);
    }
    let mut slots: Vec<Option<LayerNode>> = nodes.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("each node once")).collect())
}
