use super::*;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::from_slice(shape, data).unwrap()
}

#[test]
fn new_rejects_inconsistent_length() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
}

#[test]
fn non_grad_tensor_never_allocates_grad() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).is_none());
}

#[test]
fn conv_identity_kernel() {
    let mut tape = Tape::new();
    let data: Vec<f32> = (0..9).map(|v| v as f32).collect();
    let x = tape.leaf(t(&[1, 1, 3, 3], &data));
    let k = tape.leaf(t(&[1, 1, 1, 1], &[1.0]));
    let b = tape.leaf(t(&[1], &[0.0]));
    let y = tape.conv2d(x, k, b, 0).unwrap();
    assert_eq!(tape.value(y).data(), data.as_slice());
}

#[test]
fn conv_ones_kernel_on_constant() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[1, 1, 5, 5], 0.5));
    let k = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = tape.leaf(Tensor::zeros(&[1]));
    let y = tape.conv2d(x, k, b, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 3, 3]);
    assert!(tape.value(y).data().iter().all(|&v| v == 4.5));
}

#[test]
fn conv_padding_keeps_extent() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[2, 3, 4, 6], 1.0));
    let k = tape.leaf(Tensor::full(&[5, 3, 3, 3], 1.0));
    let b = tape.leaf(Tensor::full(&[5], 0.25));
    let y = tape.conv2d(x, k, b, 1).unwrap();
    assert_eq!(tape.shape(y), &[2, 5, 4, 6]);
    let v = tape.value(y).data();
    // corner sees 2x2 taps per channel, interior 3x3
    assert_eq!(v[0], 3.0 * 4.0 + 0.25);
    assert_eq!(v[6 + 1], 3.0 * 9.0 + 0.25);
}

#[test]
fn conv_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[1, 2, 4, 4]));
    let k = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]));
    let b = tape.leaf(Tensor::zeros(&[1]));
    let msg = tape.conv2d(x, k, b, 1).unwrap_err().to_string();
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
}

#[test]
fn conv_rejects_even_kernel_and_too_small_input() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[1, 1, 2, 2]));
    let k2 = tape.leaf(Tensor::zeros(&[1, 1, 2, 2]));
    let k3 = tape.leaf(Tensor::zeros(&[1, 1, 3, 3]));
    let b = tape.leaf(Tensor::zeros(&[1]));
    assert!(tape.conv2d(x, k2, b, 0).is_err());
    assert!(tape.conv2d(x, k3, b, 0).is_err());
    assert!(tape.conv2d(x, k3, b, 1).is_ok());
}

#[test]
fn relu_values_and_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]).requiring_grad());
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[-1.0, 3.0]).requiring_grad());
    let y = tape.relu(x);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn relu_all_negative() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[4], &[-1.0, -2.0, -0.5, -9.0]).requiring_grad());
    let y = tape.relu(x);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn maxpool_single_window() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = tape.maxpool2(x).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);
}

#[test]
fn maxpool_tie_goes_to_top_left() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[1, 1, 4, 4], 0.7).requiring_grad());
    let y = tape.maxpool2(x).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 2, 2]);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.7));
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    let g = tape.grad(x).unwrap();
    let expected: Vec<f32> = (0..16)
        .map(|i| if (i / 4) % 2 == 0 && (i % 4) % 2 == 0 { 1.0 } else { 0.0 })
        .collect();
    assert_eq!(g, expected.as_slice());
}

#[test]
fn maxpool_rejects_odd_extent() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[1, 1, 3, 4]));
    assert!(tape.maxpool2(x).is_err());
}

#[test]
fn upsample_replicates_and_sums_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 1], &[5.0]));
    let y = tape.upsample2_nearest(x).unwrap();
    assert_eq!(tape.value(y).data(), &[5.0; 4]);

    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]).requiring_grad());
    let y = tape.upsample2_nearest(x).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0; 8]);
}

#[test]
fn upsample_after_maxpool_on_constant_is_identity() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[2, 3, 6, 4], -1.25));
    let p = tape.maxpool2(x).unwrap();
    let u = tape.upsample2_nearest(p).unwrap();
    assert_eq!(tape.value(u), tape.value(x));
}

#[test]
fn concat_shapes_and_split_round_trip() {
    let a = Tensor::new(vec![1, 2, 4, 4], (0..32).map(|v| v as f32).collect()).unwrap();
    let b = Tensor::new(vec![1, 3, 4, 4], (0..48).map(|v| -(v as f32)).collect()).unwrap();
    let mut tape = Tape::new();
    let va = tape.leaf(a.clone());
    let vb = tape.leaf(b.clone());
    let c = tape.concat_channels(va, vb).unwrap();
    assert_eq!(tape.shape(c), &[1, 5, 4, 4]);
    let (a2, b2) = tape.value(c).split_channels(2).unwrap();
    assert_eq!(a2.data(), a.data());
    assert_eq!(b2.data(), b.data());

    let empty = tape.leaf(Tensor::zeros(&[1, 0, 4, 4]));
    let c2 = tape.concat_channels(va, empty).unwrap();
    assert_eq!(tape.value(c2).data(), a.data());
    assert_eq!(tape.shape(c2), a.shape());
}

#[test]
fn concat_rejects_spatial_mismatch() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[1, 2, 4, 4]));
    let b = tape.leaf(Tensor::zeros(&[1, 2, 4, 2]));
    assert!(tape.concat_channels(a, b).is_err());
}

#[test]
fn concat_splits_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::full(&[2, 1, 2, 2], 1.0).requiring_grad());
    let b = tape.leaf(Tensor::full(&[2, 2, 2, 2], 2.0).requiring_grad());
    let c = tape.concat_channels(a, b).unwrap();
    let sq = tape.mul(c, c).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[2.0; 8]);
    assert_eq!(tape.grad(b).unwrap(), &[4.0; 16]);
}

#[test]
fn backward_sum_and_square() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[0.3, -2.0, 7.0]).requiring_grad());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]).requiring_grad());
    let xx = tape.mul(x, x).unwrap();
    let s = tape.sum(xx);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]).requiring_grad());
    let y = tape.relu(x);
    assert!(tape.backward(y).is_err());
}

#[test]
fn backward_without_grad_leaves_is_noop() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let y = tape.mul(x, x).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).is_none());
}

#[test]
fn leaf_used_twice_sums_contributions() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.5, -0.5]).requiring_grad());
    let a = tape.scale(x, 3.0);
    let b = tape.add(a, x).unwrap();
    let s = tape.sum(b);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0, 4.0]);
}

#[test]
fn mse_value_and_gradient() {
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::full(&[2, 2], 0.6).requiring_grad());
    let loss = tape.mse(p, &[0.5; 4]).unwrap();
    assert!((tape.value(loss).data()[0] - 0.01).abs() < 1e-7);
    tape.backward(loss).unwrap();
    for &g in tape.grad(p).unwrap() {
        assert!((g - 2.0 * 0.1 / 4.0).abs() < 1e-7);
    }
}

struct Doubler;

impl LinearMap for Doubler {
    fn input_shape(&self) -> Vec<usize> {
        vec![3]
    }
    fn output_shape(&self) -> Vec<usize> {
        vec![3]
    }
    fn apply(&self, input: &[f32]) -> Vec<f32> {
        input.iter().map(|v| 2.0 * v).collect()
    }
    fn adjoint(&self, g: &[f32]) -> Vec<f32> {
        g.iter().map(|v| 2.0 * v).collect()
    }
}

#[test]
fn linear_map_uses_adjoint() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]).requiring_grad());
    let y = tape.linear(x, std::sync::Arc::new(Doubler)).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0; 3]);

    let bad = tape.leaf(Tensor::zeros(&[4]));
    assert!(tape.linear(bad, std::sync::Arc::new(Doubler)).is_err());
}
