use lfcs_nn::gradcheck::{check_layer, random_tensor, rel_error};
use lfcs_nn::{
    BatchNorm, Conv2d, ConvGeometry, ConvTranspose2d, Elu, Layer, Mode, ScaledTanh, Sequential,
    Sigmoid, Tensor4,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL64: f64 = 1e-5;

fn assert_layer(name: &str, layer: &mut dyn Layer<f64>, x: &Tensor4<f64>, mode: Mode) {
    let report = check_layer(layer, x, mode, 11).unwrap();
    assert!(report.max_error() < TOL64, "{name}: {report}");
    assert!(!report.entries.is_empty());
}

fn conv(cin: usize, cout: usize, k: usize, stride: usize, dil: usize, seed: u64) -> Conv2d<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Conv2d::new(
        "c",
        cin,
        cout,
        ConvGeometry::new(k, stride, dil).unwrap(),
        &mut rng,
    );
    // Non-zero bias so its gradient path is exercised with realistic values.
    c.bias
        .value
        .iter_mut()
        .enumerate()
        .for_each(|(i, b)| *b = 0.1 * i as f64 - 0.05);
    c
}

#[test]
fn dilated_conv_gradients() {
    for dil in [1, 2, 4] {
        let mut c = conv(3, 4, 3, 1, dil, dil as u64);
        assert_layer(
            "dilated conv",
            &mut c,
            &random_tensor([2, 7, 6, 3], 1),
            Mode::Train,
        );
    }
}

#[test]
fn strided_conv_gradients() {
    let mut c = conv(2, 3, 5, 2, 1, 3);
    assert_layer(
        "strided conv",
        &mut c,
        &random_tensor([2, 8, 7, 2], 2),
        Mode::Train,
    );
}

#[test]
fn pointwise_conv_gradients() {
    let mut c = conv(5, 2, 1, 1, 1, 4);
    assert_layer(
        "1x1 conv",
        &mut c,
        &random_tensor([2, 4, 4, 5], 3),
        Mode::Train,
    );
}

#[test]
fn transposed_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t =
        ConvTranspose2d::<f64>::new("t", 3, 2, ConvGeometry::new(5, 2, 1).unwrap(), &mut rng);
    t.bias.value = vec![0.2, -0.1];
    assert_layer(
        "transposed conv",
        &mut t,
        &random_tensor([2, 3, 4, 3], 4),
        Mode::Train,
    );
}

#[test]
fn batchnorm_gradients_in_both_modes() {
    let mut bn = BatchNorm::<f64>::new("bn", 3);
    bn.gamma.value = vec![1.5, -0.7, 0.3];
    bn.beta.value = vec![0.1, 0.0, -0.4];
    let x = random_tensor([2, 3, 3, 3], 6);
    assert_layer("batchnorm/train", &mut bn, &x, Mode::Train);
    bn.running_mean.value = vec![0.2, -0.1, 0.0];
    bn.running_var.value = vec![0.5, 1.3, 2.0];
    assert_layer("batchnorm/infer", &mut bn, &x, Mode::Infer);
}

#[test]
fn activation_gradients() {
    let x = random_tensor([2, 3, 3, 2], 7).map(|v| 2.5 * v);
    assert_layer("elu", &mut Elu::new(), &x, Mode::Train);
    assert_layer("sigmoid", &mut Sigmoid::new(), &x, Mode::Train);
    assert_layer("scaled tanh", &mut ScaledTanh::new(4.0), &x, Mode::Train);
}

#[test]
fn stacked_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = Sequential::<f64>::new();
    net.push(Conv2d::new(
        "a",
        2,
        4,
        ConvGeometry::new(3, 1, 2).unwrap(),
        &mut rng,
    ))
    .push(BatchNorm::new("bn", 4))
    .push(Elu::new())
    .push(Conv2d::new(
        "b",
        4,
        1,
        ConvGeometry::new(3, 1, 1).unwrap(),
        &mut rng,
    ))
    .push(Sigmoid::new());
    assert_layer(
        "conv-bn-elu-conv-sigmoid",
        &mut net,
        &random_tensor([2, 6, 6, 2], 9),
        Mode::Train,
    );
}

/// The `f32` path runs the same code as the `f64` path; its gradients must
/// agree with the finite-difference-checked `f64` ones to single precision.
#[test]
fn single_precision_gradients_track_double() {
    let g = ConvGeometry::new(3, 1, 2).unwrap();
    let c64 = conv(3, 4, 3, 1, 2, 12);
    let mut c32 = Conv2d::<f32>::from_parts(
        "c",
        3,
        4,
        g,
        c64.kernel.value.iter().map(|&v| v as f32).collect(),
        c64.bias.value.iter().map(|&v| v as f32).collect(),
    );
    let mut c64 = c64;
    let x64 = random_tensor([2, 6, 6, 3], 13);
    let r64 = random_tensor([2, 6, 6, 4], 14);
    c64.forward(&x64, Mode::Train).unwrap();
    let gx64 = c64.backward(&r64).unwrap();
    c32.forward(&x64.cast(), Mode::Train).unwrap();
    let gx32 = c32.backward(&r64.cast()).unwrap().cast::<f64>();
    assert!(rel_error(gx32.as_slice(), gx64.as_slice()) < 1e-3);
    let gk32: Vec<f64> = c32.kernel.grad.iter().map(|&v| v as f64).collect();
    assert!(rel_error(&gk32, &c64.kernel.grad) < 1e-3);
}

#[test]
fn forward_is_deterministic() {
    let mut a = conv(4, 8, 3, 1, 4, 20);
    let mut b = a.clone();
    let x = random_tensor([3, 9, 9, 4], 21);
    assert_eq!(
        a.forward(&x, Mode::Infer).unwrap(),
        b.forward(&x, Mode::Infer).unwrap()
    );
    let g = random_tensor([3, 9, 9, 8], 22);
    assert_eq!(a.backward(&g).unwrap(), b.backward(&g).unwrap());
    assert_eq!(a.kernel.grad, b.kernel.grad);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear_without_bias(seed in 0u64..1000, dil in 1usize..4, h in 1usize..7, w in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Conv2d::<f64>::new("c", 2, 3, ConvGeometry::new(3, 1, dil).unwrap(), &mut rng);
        let x = random_tensor([1, h, w, 2], seed + 1);
        let y = random_tensor([1, h, w, 2], seed + 2);
        let sum = Tensor4::from_vec(x.shape(), x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| 2.0 * a - b).collect()).unwrap();
        let fx = c.forward(&x, Mode::Infer).unwrap();
        let fy = c.forward(&y, Mode::Infer).unwrap();
        let fs = c.forward(&sum, Mode::Infer).unwrap();
        prop_assert_eq!(fs.shape(), [1, h, w, 3]);
        for ((a, b), s) in fx.as_slice().iter().zip(fy.as_slice()).zip(fs.as_slice()) {
            prop_assert!((2.0 * a - b - s).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_adjoint_holds_for_any_size(seed in 0u64..1000, h in 1usize..6, w in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ConvGeometry::new(5, 2, 1).unwrap();
        let mut up = ConvTranspose2d::<f64>::new("u", 2, 3, g, &mut rng);
        let mut down = Conv2d::<f64>::from_parts("d", 3, 2, g, up.kernel.value.clone(), vec![0.0; 2]);
        let small = random_tensor([1, h, w, 2], seed + 1);
        let big = random_tensor([1, 2 * h, 2 * w, 3], seed + 2);
        let lhs = down.forward(&big, Mode::Infer).unwrap().dot(&small);
        let rhs = up.forward(&small, Mode::Infer).unwrap().dot(&big);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }
}
