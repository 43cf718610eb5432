//! Toy models and synthetic stripe corpora for demos and tests.
//!
//! Class 0 is horizontal stripes, class 1 vertical stripes. Images are
//! gray and strictly binary (every byte 0 or 255).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use contrastprobe_core::graph::GRAPH_INPUT;
use contrastprobe_core::{ConvWeights, LayerKind, LayerNode, ModelGraph, Preprocess, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{encode_png, encode_ppm};

pub const IMAGE_SIZE: usize = 16;
pub const CLASS_COUNT: usize = 2;

/// Two-conv stripe-orientation classifier over `16 × 16 × 3` inputs.
///
/// `conv1` holds four zero-sum 3×3 edge detectors (horizontal ±,
/// vertical ±). `vertical_bias` is added to both vertical detectors; with
/// `0.0` the net carries no bias or shift anywhere and is exactly
/// contrast invariant on binary images.
pub fn stripe_net(vertical_bias: f32) -> ModelGraph {
    const CIN: usize = 3;
    const COUT: usize = 4;
    let mut w = vec![0.0f32; 3 * 3 * CIN * COUT];
    for ky in 0..3 {
        for kx in 0..3 {
            let h_edge = 1.0 - ky as f32; // top row +1, bottom row -1
            let v_edge = 1.0 - kx as f32; // left col +1, right col -1
            for ci in 0..CIN {
                let base = ((ky * 3 + kx) * CIN + ci) * COUT;
                w[base] = h_edge;
                w[base + 1] = -h_edge;
                w[base + 2] = v_edge;
                w[base + 3] = -v_edge;
            }
        }
    }
    let conv1 = ConvWeights::new(3, 3, CIN, COUT, w, vec![0.0, 0.0, vertical_bias, vertical_bias], 1, 0)
        .expect("static conv1");
    // Pools each orientation's two polarities into one energy channel.
    let conv2 = ConvWeights::unbiased(1, 1, COUT, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).expect("static conv2");
    let pooled = (IMAGE_SIZE - 2) / 2;
    let n = pooled * pooled;
    let mut fc = vec![0.0f32; CLASS_COUNT * n * 2];
    for i in 0..n {
        fc[i * 2] = 1.0;
        fc[n * 2 + i * 2 + 1] = 1.0;
    }
    let nodes = vec![
        LayerNode::new("conv1", LayerKind::Conv(conv1), &[GRAPH_INPUT]),
        LayerNode::new("relu1", LayerKind::Relu, &["conv1"]),
        LayerNode::new("pool1", LayerKind::MaxPool { window: 2, stride: 2 }, &["relu1"]),
        LayerNode::new("conv2", LayerKind::Conv(conv2), &["pool1"]),
        LayerNode::new("relu2", LayerKind::Relu, &["conv2"]),
        LayerNode::new("flat", LayerKind::Flatten, &["relu2"]),
        LayerNode::new("fc", LayerKind::Dense { weights: fc, bias: vec![0.0; CLASS_COUNT] }, &["flat"]),
        LayerNode::new("prob", LayerKind::Softmax, &["fc"]),
    ];
    ModelGraph::new(
        nodes,
        (IMAGE_SIZE, IMAGE_SIZE, 3),
        CLASS_COUNT,
        vec!["conv1".into(), "conv2".into()],
        Preprocess::identity(3),
    )
    .expect("static stripe net")
}

/// Binary stripes of random width and phase with salt-and-pepper flips.
pub fn stripe_image(rng: &mut impl Rng, class: usize, noise: f64) -> Tensor {
    let width = rng.random_range(2..=4usize);
    let phase = rng.random_range(0..2 * width);
    let mut img = Tensor::zeros(IMAGE_SIZE, IMAGE_SIZE, 3);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let t = if class == 0 { y } else { x };
            let mut on = (t + phase) % (2 * width) < width;
            if rng.random_bool(noise) {
                on = !on;
            }
            for c in 0..3 {
                img.set(y, x, c, if on { 1.0 } else { 0.0 });
            }
        }
    }
    img
}

/// Writes `n` images (alternating PPM and PNG, alternating classes) plus a
/// `labels.csv`, returning the label file path.
pub fn write_stripe_corpus(dir: &Path, n: usize, seed: u64) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("filename,class_id\n");
    for i in 0..n {
        let class = i % CLASS_COUNT;
        let img = stripe_image(&mut rng, class, 0.03);
        let (name, bytes) = if i % 4 < 2 {
            (format!("img_{i:04}.ppm"), encode_ppm(&img))
        } else {
            (format!("img_{i:04}.png"), encode_png(&img))
        };
        fs::write(dir.join(&name), bytes)?;
        csv.push_str(&format!("{name},{class}\n"));
    }
    let labels = dir.join("labels.csv");
    fs::write(&labels, csv)?;
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stripe_net_has_zero_sum_first_layer() {
        let g = stripe_net(0.0);
        let LayerKind::Conv(w) = &g.nodes()[0].kind else { panic!("conv1 first") };
        assert!(w.kernel_sums().iter().all(|&s| s == 0.0));
        assert_eq!(g.default_probe_ids(), ["conv1", "conv2"]);
    }

    #[test]
    fn stripes_are_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = stripe_image(&mut rng, 1, 0.1);
        assert!(img.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
