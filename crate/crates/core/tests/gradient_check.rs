//! Analytic gradients against central finite differences (h = 1e-5).

use obfusc_core::nn::{loss_and_grads, Layer, ModelArch, ModelWeights, Padding};
use obfusc_core::rng::RngStream;
use obfusc_core::{Dataset, SampleShape};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_batch(shape: SampleShape, classes: usize, n: usize, seed: u64) -> Dataset {
    let mut s = RngStream::derive(seed, "gradcheck-data");
    let features = (0..n * shape.dim())
        .map(|_| s.next_f64() * 2.0 - 1.0)
        .collect();
    let labels = (0..n).map(|i| (i % classes) as u8).collect();
    Dataset::new("batch", shape, classes, features, labels).unwrap()
}

fn random_weights(arch: &ModelArch, seed: u64) -> ModelWeights {
    // Non-zero biases so bias gradients are exercised away from symmetry.
    let mut w = ModelWeights::zeros(arch);
    let mut s = RngStream::derive(seed, "gradcheck-weights");
    for t in w.tensors_mut() {
        for v in &mut t.data {
            *v = (s.next_f64() * 2.0 - 1.0) * 0.5;
        }
    }
    w
}

fn loss_at(arch: &ModelArch, w: &ModelWeights, data: &Dataset) -> f64 {
    let idx: Vec<usize> = (0..data.len()).collect();
    loss_and_grads(arch, w, data, &idx).unwrap().0
}

/// Worst elementwise relative error `|a - n| / max(|a|, |n|, 1e-6)`.
fn check(arch: &ModelArch, data: &Dataset, seed: u64) -> f64 {
    let w = random_weights(arch, seed);
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, grads) = loss_and_grads(arch, &w, data, &idx).unwrap();
    let mut worst: f64 = 0.0;
    for (t, tensor) in w.tensors().iter().enumerate() {
        for k in 0..tensor.data.len() {
            let mut plus = w.clone();
            plus.tensors_mut()[t].data[k] += H;
            let mut minus = w.clone();
            minus.tensors_mut()[t].data[k] -= H;
            let numeric = (loss_at(arch, &plus, data) - loss_at(arch, &minus, data)) / (2.0 * H);
            let analytic = grads.tensors()[t].data[k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            assert!(
                rel < TOL,
                "{}[{k}]: analytic {analytic} numeric {numeric} rel {rel}",
                tensor.name
            );
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn dense_relu_head() {
    let arch = ModelArch::new(
        SampleShape::flat(5),
        vec![
            Layer::Dense {
                in_features: 5,
                out_features: 4,
            },
            Layer::Relu,
            Layer::SoftmaxHead {
                in_features: 4,
                num_classes: 3,
            },
        ],
    )
    .unwrap();
    check(&arch, &random_batch(SampleShape::flat(5), 3, 3, 1), 2);
}

#[test]
fn conv_same_padding() {
    let shape = SampleShape::new(5, 4, 2);
    let arch = ModelArch::new(
        shape,
        vec![
            Layer::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: [3, 3],
                stride: 1,
                padding: Padding::Same,
            },
            Layer::Flatten,
            Layer::SoftmaxHead {
                in_features: 60,
                num_classes: 3,
            },
        ],
    )
    .unwrap();
    check(&arch, &random_batch(shape, 3, 3, 3), 4);
}

#[test]
fn conv_valid_strided_and_rectangular_kernel() {
    let shape = SampleShape::new(7, 6, 1);
    let arch = ModelArch::new(
        shape,
        vec![
            Layer::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: [3, 2],
                stride: 2,
                padding: Padding::Valid,
            },
            Layer::Flatten,
            Layer::SoftmaxHead {
                in_features: 2 * 3 * 3,
                num_classes: 2,
            },
        ],
    )
    .unwrap();
    check(&arch, &random_batch(shape, 2, 3, 5), 6);
}

#[test]
fn every_layer_type_in_one_stack() {
    let shape = SampleShape::new(8, 8, 2);
    let arch = ModelArch::new(
        shape,
        vec![
            Layer::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: [3, 3],
                stride: 1,
                padding: Padding::Same,
            },
            Layer::Relu,
            Layer::MaxPool {
                window: 2,
                stride: 2,
            },
            Layer::Conv2d {
                in_channels: 3,
                out_channels: 2,
                kernel: [3, 3],
                stride: 1,
                padding: Padding::Valid,
            },
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense {
                in_features: 8,
                out_features: 5,
            },
            Layer::Relu,
            Layer::SoftmaxHead {
                in_features: 5,
                num_classes: 4,
            },
        ],
    )
    .unwrap();
    check(&arch, &random_batch(shape, 4, 3, 7), 8);
}

#[test]
fn presets_pass_on_small_inputs() {
    for (name, shape) in [
        ("desk-mlp", SampleShape::new(3, 3, 1)),
        ("desk-cnn", SampleShape::new(4, 4, 2)),
    ] {
        let arch = ModelArch::preset(name, shape, 3).unwrap();
        check(&arch, &random_batch(shape, 3, 3, 9), 10);
    }
}
