use contrastprobe_core::contrast::{adjust_contrast, default_schedule};
use contrastprobe_core::graph::GRAPH_INPUT;
use contrastprobe_core::ops::{self, conv2d};
use contrastprobe_core::probe::winner_map;
use contrastprobe_core::{ConvWeights, LayerKind, LayerNode, ModelGraph, Preprocess, TapPoint, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Random kernels with each output channel's weights shifted to sum to zero.
fn zero_sum_conv(rng: &mut ChaCha8Rng, k: usize, cin: usize, cout: usize) -> ConvWeights {
    // Small integers keep the zero sum exact in f32.
    let mut w: Vec<f32> = (0..k * k * cin * cout).map(|_| rng.random_range(-3i32..=3) as f32).collect();
    for co in 0..cout {
        let sum: f32 = (0..k * k * cin).map(|i| w[i * cout + co]).sum();
        w[co] -= sum;
    }
    let cw = ConvWeights::unbiased(k, k, cin, cout, w).unwrap();
    assert!(cw.kernel_sums().iter().all(|&s| s == 0.0));
    cw
}

fn max_rel_err(got: &[f32], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    got.iter().zip(want).fold(0.0f64, |m, (&g, &w)| m.max((f64::from(g) - w).abs())) / scale
}

#[test]
fn three_layer_net_matches_manual_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c1 = ConvWeights::new(3, 3, 3, 4, random_weights(&mut rng, 108), random_weights(&mut rng, 4), 1, 1).unwrap();
    let c2 = ConvWeights::new(3, 3, 4, 6, random_weights(&mut rng, 216), random_weights(&mut rng, 6), 1, 0).unwrap();
    let (scale, shift) = (random_weights(&mut rng, 6), random_weights(&mut rng, 6));
    let fc_w = random_weights(&mut rng, 2 * 2 * 6 * 5);
    let fc_b = random_weights(&mut rng, 5);
    let nodes = vec![
        LayerNode::new("conv1", LayerKind::Conv(c1.clone()), &[GRAPH_INPUT]),
        LayerNode::new("relu1", LayerKind::Relu, &["conv1"]),
        LayerNode::new("pool1", LayerKind::MaxPool { window: 2, stride: 2 }, &["relu1"]),
        LayerNode::new("conv2", LayerKind::Conv(c2.clone()), &["pool1"]),
        LayerNode::new("bn2", LayerKind::AffineChannel { scale: scale.clone(), shift: shift.clone() }, &["conv2"]),
        LayerNode::new("relu2", LayerKind::Relu, &["bn2"]),
        LayerNode::new("flat", LayerKind::Flatten, &["relu2"]),
        LayerNode::new("fc", LayerKind::Dense { weights: fc_w.clone(), bias: fc_b.clone() }, &["flat"]),
        LayerNode::new("prob", LayerKind::Softmax, &["fc"]),
    ];
    let g = ModelGraph::new(nodes, (8, 8, 3), 5, vec!["conv1".into(), "conv2".into()], Preprocess::identity(3)).unwrap();
    let img = Tensor::from_fn(8, 8, 3, |_, _, _| rng.random_range(0.0f32..1.0));

    let a1 = conv2d(&img, &c1).unwrap();
    let p1 = ops::maxpool2d(&ops::relu(&a1), 2, 2).unwrap();
    let a2 = conv2d(&p1, &c2).unwrap();
    let r2 = ops::relu(&ops::affine_channel(&a2, &scale, &shift).unwrap());
    let scores = ops::softmax(&ops::dense(r2.data(), &fc_w, &fc_b).unwrap());

    let out = g.forward_with_taps(&img, TapPoint::PreRelu).unwrap();
    assert_eq!(out.taps, vec![a1.clone(), a2.clone()]);
    assert_eq!(out.scores, scores);
    let post = g.forward_with_taps(&img, TapPoint::PostRelu).unwrap();
    assert_eq!(post.taps, vec![ops::relu(&a1), ops::relu(&a2)]);
    assert_eq!(post.scores, scores);
}

/// input → stem ─┬─ left ─┐
///               └─ right ┴─ add → ... ; declared in three different orders.
#[test]
fn diamond_results_do_not_depend_on_linearization() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let stem = ConvWeights::new(3, 3, 2, 3, random_weights(&mut rng, 54), random_weights(&mut rng, 3), 1, 1).unwrap();
    let left = ConvWeights::new(1, 1, 3, 3, random_weights(&mut rng, 9), random_weights(&mut rng, 3), 1, 0).unwrap();
    let right = ConvWeights::new(3, 3, 3, 3, random_weights(&mut rng, 81), random_weights(&mut rng, 3), 1, 1).unwrap();
    let fc = random_weights(&mut rng, 6 * 6 * 6 * 4);
    let build = |order: &[usize]| {
        let all = [
            LayerNode::new("stem", LayerKind::Conv(stem.clone()), &[GRAPH_INPUT]),
            LayerNode::new("left", LayerKind::Conv(left.clone()), &["stem"]),
            LayerNode::new("right", LayerKind::Conv(right.clone()), &["stem"]),
            LayerNode::new("sum", LayerKind::Add, &["left", "right"]),
            LayerNode::new("cat", LayerKind::Concat, &["sum", "right"]),
            LayerNode::new("flat", LayerKind::Flatten, &["cat"]),
            LayerNode::new("fc", LayerKind::Dense { weights: fc.clone(), bias: vec![0.0; 4] }, &["flat"]),
            LayerNode::new("prob", LayerKind::Softmax, &["fc"]),
        ];
        let nodes = order.iter().map(|&i| all[i].clone()).collect();
        let probes = vec!["stem".into(), "right".into(), "left".into()];
        ModelGraph::new(nodes, (6, 6, 2), 4, probes, Preprocess::identity(2)).unwrap()
    };
    let a = build(&[0, 1, 2, 3, 4, 5, 6, 7]);
    let b = build(&[0, 2, 1, 3, 4, 5, 6, 7]);
    let c = build(&[7, 6, 5, 4, 3, 2, 1, 0]);
    let img = Tensor::from_fn(6, 6, 2, |_, _, _| rng.random_range(0.0f32..1.0));
    let fa = a.forward_with_taps(&img, TapPoint::PreRelu).unwrap();
    assert_eq!(fa, b.forward_with_taps(&img, TapPoint::PreRelu).unwrap());
    assert_eq!(fa, c.forward_with_taps(&img, TapPoint::PreRelu).unwrap());
    let max = fa.scores.iter().copied().fold(f32::MIN, f32::max);
    assert!((fa.prediction.confidence - max).abs() <= 1e-7);
}

#[test]
fn conv_of_affine_input_decomposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let cin = rng.random_range(1..5);
        let cout = rng.random_range(1..5);
        let w = ConvWeights::new(3, 3, cin, cout, random_weights(&mut rng, 9 * cin * cout), random_weights(&mut rng, cout), 1, 0)
            .unwrap();
        let img = Tensor::from_fn(7, 7, cin, |_, _, _| rng.random_range(0.0f32..1.0));
        let (a, b) = (rng.random_range(0.05f32..1.0), rng.random_range(-0.5f32..0.5));
        let lhs = conv2d(&img.map(|v| a * v + b), &w).unwrap();
        let base = conv2d(&img, &w).unwrap();
        let sums = w.kernel_sums();
        let rhs: Vec<f64> = base
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let co = i % cout;
                let bias = f64::from(w.bias[co]);
                f64::from(a) * (f64::from(v) - bias) + f64::from(b) * sums[co] + bias
            })
            .collect();
        assert!(max_rel_err(lhs.data(), &rhs) <= 1e-5);
    }
}

/// Binary images keep the rounded contrast-adjusted input two-valued, so a
/// zero-sum first layer sees an exact common rescaling of its response.
#[test]
fn zero_sum_first_layer_is_contrast_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let c1 = zero_sum_conv(&mut rng, 3, 3, 6);
    let c2 = ConvWeights::unbiased(3, 3, 6, 4, random_weights(&mut rng, 9 * 6 * 4)).unwrap();
    let nodes = vec![
        LayerNode::new("conv1", LayerKind::Conv(c1.clone()), &[GRAPH_INPUT]),
        LayerNode::new("relu1", LayerKind::Relu, &["conv1"]),
        LayerNode::new("pool", LayerKind::MaxPool { window: 2, stride: 2 }, &["relu1"]),
        LayerNode::new("conv2", LayerKind::Conv(c2), &["pool"]),
        LayerNode::new("relu2", LayerKind::Relu, &["conv2"]),
        LayerNode::new("flat", LayerKind::Flatten, &["relu2"]),
        LayerNode::new("fc", LayerKind::Dense { weights: random_weights(&mut rng, 3 * 3 * 4 * 3), bias: vec![0.0; 3] }, &["flat"]),
        LayerNode::new("prob", LayerKind::Softmax, &["fc"]),
    ];
    let g = ModelGraph::new(nodes, (12, 12, 3), 3, vec!["conv1".into()], Preprocess::identity(3)).unwrap();
    for _ in 0..20 {
        let img = Tensor::from_fn(12, 12, 3, |_, _, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let reference = g.classify(&img, TapPoint::PreRelu).unwrap();
        let ref_feat = &reference.taps[0];
        let ref_map = winner_map(ref_feat);
        for &level in default_schedule().levels() {
            let out = g.classify(&adjust_contrast(&img, level).unwrap(), TapPoint::PreRelu).unwrap();
            assert_eq!(out.prediction.class_id, reference.prediction.class_id, "level {level}");
            let map = winner_map(&out.taps[0]);
            for y in 0..map.height() {
                for x in 0..map.width() {
                    if ref_feat.pixel(y, x).iter().any(|&v| v > 0.0) {
                        assert_eq!(map.get(y, x), ref_map.get(y, x));
                    }
                }
            }
        }
    }
}
