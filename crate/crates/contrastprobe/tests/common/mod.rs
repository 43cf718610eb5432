//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use contrastprobe_core::graph::GRAPH_INPUT;
use contrastprobe_core::{ConvWeights, CropPolicy, LayerKind, LayerNode, ModelGraph, Preprocess};
use rand::Rng;

fn values(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn conv(rng: &mut impl Rng, cin: usize, cout: usize, k: usize, pad: usize) -> ConvWeights {
    let w = values(rng, k * k * cin * cout);
    let b = values(rng, cout);
    ConvWeights::new(k, k, cin, cout, w, b, 1, pad).expect("valid random conv")
}

/// Random small classifier. With `diamond` the graph forks after the stem
/// and rejoins through `add` or `concat`.
pub fn random_graph(rng: &mut impl Rng, diamond: bool) -> ModelGraph {
    let h = 2 * rng.random_range(3..=6usize);
    let w = 2 * rng.random_range(3..=6usize);
    let cin = rng.random_range(1..=3usize);
    let classes = rng.random_range(2..=5usize);
    let c1 = rng.random_range(1..=4usize);
    let mut nodes = vec![
        LayerNode::new("stem", LayerKind::Conv(conv(rng, cin, c1, 3, 1)), &[GRAPH_INPUT]),
        LayerNode::new("stem_relu", LayerKind::Relu, &["stem"]),
    ];
    let mut last = "stem_relu";
    let mut channels = c1;
    if rng.random_bool(0.5) {
        let kind = LayerKind::AffineChannel { scale: values(rng, c1), shift: values(rng, c1) };
        nodes.push(LayerNode::new("bn", kind, &[last]));
        last = "bn";
    }
    if diamond {
        let ca = rng.random_range(1..=4usize);
        let join_add = rng.random_bool(0.5);
        let cb = if join_add { ca } else { rng.random_range(1..=4usize) };
        nodes.push(LayerNode::new("left", LayerKind::Conv(conv(rng, channels, ca, 3, 1)), &[last]));
        nodes.push(LayerNode::new("right", LayerKind::Conv(conv(rng, channels, cb, 1, 0)), &[last]));
        let (kind, out) = if join_add { (LayerKind::Add, ca) } else { (LayerKind::Concat, ca + cb) };
        nodes.push(LayerNode::new("join", kind, &["left", "right"]));
        last = "join";
        channels = out;
    }
    nodes.push(LayerNode::new("pool", LayerKind::MaxPool { window: 2, stride: 2 }, &[last]));
    nodes.push(LayerNode::new("flat", LayerKind::Flatten, &["pool"]));
    let features = (h / 2) * (w / 2) * channels;
    let fc = LayerKind::Dense { weights: values(rng, classes * features), bias: values(rng, classes) };
    nodes.push(LayerNode::new("fc", fc, &["flat"]));
    nodes.push(LayerNode::new("prob", LayerKind::Softmax, &["fc"]));
    let preprocess = Preprocess {
        resize_shorter: rng.random_bool(0.5).then_some(h.min(w)),
        crop: if rng.random_bool(0.5) { CropPolicy::Center } else { CropPolicy::None },
        mean: values(rng, cin),
        scale: (0..cin).map(|_| rng.random_range(0.5f32..4.0)).collect(),
    };
    let g = ModelGraph::new(nodes, (h, w, cin), classes, Vec::new(), preprocess).expect("valid random graph");
    if rng.random_bool(0.7) {
        let probes = g.default_probe_ids();
        g.with_probes(probes).expect("default probes are valid")
    } else {
        g
    }
}

/// Every stored float of a graph as raw bits, in node order.
pub fn weight_bits(g: &ModelGraph) -> Vec<u32> {
    let mut out = Vec::new();
    let mut push = |v: &[f32]| out.extend(v.iter().map(|x| x.to_bits()));
    for n in g.nodes() {
        match &n.kind {
            LayerKind::Conv(w) => {
                push(&w.weights);
                push(&w.bias);
            }
            LayerKind::AffineChannel { scale, shift } => {
                push(scale);
                push(shift);
            }
            LayerKind::Dense { weights, bias } => {
                push(weights);
                push(bias);
            }
            _ => {}
        }
    }
    push(&g.preprocess().mean);
    push(&g.preprocess().scale);
    out
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contrastprobe")).args(args).output().expect("spawn contrastprobe")
}

/// Arguments `--model M --data D --labels L --out O`.
pub fn io_args<'a>(model: &'a Path, data: &'a Path, labels: &'a Path, out: &'a Path) -> Vec<&'a str> {
    let s = |p: &'a Path| p.to_str().expect("utf-8 temp path");
    vec!["--model", s(model), "--data", s(data), "--labels", s(labels), "--out", s(out)]
}
