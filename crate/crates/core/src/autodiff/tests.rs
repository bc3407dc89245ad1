use super::*;
use crate::rng::{gaussian_vec, stream, Purpose};

fn random(shape: Shape, seed: u64) -> Tensor {
    let mut rng = stream(seed, Purpose::Init, 0);
    Tensor::from_vec(shape, gaussian_vec(&mut rng, 1.0, shape.len())).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Compares tape gradients against central differences (step 1e-4) for every
/// element of every input. `build` maps input vars to a scalar loss.
fn check_grads<F>(inputs: &[Tensor], build: F, tol: f64)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let loss_at = |values: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).data()[0]
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();

    let h = 1e-4;
    for (slot, var) in vars.iter().enumerate() {
        let analytic = tape.grad(*var).expect("gradient populated").to_vec();
        for j in 0..inputs[slot].len() {
            let mut plus = inputs.to_vec();
            plus[slot].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[slot].data_mut()[j] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let err = rel_err(analytic[j], numeric);
            assert!(
                err < tol,
                "input {slot} element {j}: analytic {} vs numeric {numeric} (rel {err:e})",
                analytic[j]
            );
        }
    }
}

/// Squared error against a fixed random target turns any output into a scalar.
fn scalarize(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let target = tape.constant(random(tape.value(out).shape(), seed));
    tape.mse(out, target).unwrap()
}

// --- transposed convolution -------------------------------------------------

#[test]
fn conv_transpose_zero_kernel_annihilates() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::filled(Shape::new(1, 1, 1), 3.5));
    let k = tape.constant(Tensor::zeros(Shape::new(1, 8, 8)));
    let y = tape.conv_transpose_depthwise(x, k).unwrap();
    assert_eq!(tape.value(y), &Tensor::zeros(Shape::new(1, 2, 2)));
}

#[test]
fn conv_transpose_delta_scatters_at_stride_two() {
    // Tap (ky, kx) sends input (iy, ix) to output (2iy + ky - 3, 2ix + kx - 3).
    let input = Tensor::from_vec(Shape::new(1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut kernel = Tensor::zeros(Shape::new(1, 8, 8));
    kernel.set(0, 3, 4, 1.0);
    let mut tape = Tape::new();
    let x = tape.constant(input);
    let k = tape.constant(kernel);
    let y = tape.conv_transpose_depthwise(x, k).unwrap();
    #[rustfmt::skip]
    let expected = vec![
        0.0, 1.0, 0.0, 2.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 3.0, 0.0, 4.0,
        0.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(tape.value(y).data(), &expected[..]);
}

#[test]
fn conv_transpose_edge_tap_drops_out_of_range() {
    // Tap (0, 0) shifts by -3: of a 4x4 input only rows/cols 2 and 3 land in range.
    let input = Tensor::filled(Shape::new(1, 4, 4), 1.0);
    let mut kernel = Tensor::zeros(Shape::new(1, 8, 8));
    kernel.set(0, 0, 0, 1.0);
    let mut tape = Tape::new();
    let x = tape.constant(input);
    let k = tape.constant(kernel);
    let y = tape.conv_transpose_depthwise(x, k).unwrap();
    let out = tape.value(y);
    assert_eq!(out.data().iter().sum::<f64>(), 4.0);
    assert_eq!(out.get(0, 1, 1), 1.0);
    assert_eq!(out.get(0, 3, 3), 1.0);
}

#[test]
fn conv_transpose_rejects_bad_kernel_and_empty_input() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(Shape::new(1, 2, 2)));
    let k = tape.constant(Tensor::zeros(Shape::new(1, 4, 4)));
    assert!(matches!(tape.conv_transpose_depthwise(x, k), Err(OpError::Config { .. })));
    let e = tape.constant(Tensor::zeros(Shape::new(1, 0, 2)));
    let k8 = tape.constant(Tensor::zeros(Shape::new(1, 8, 8)));
    assert!(matches!(tape.conv_transpose_depthwise(e, k8), Err(OpError::Empty { .. })));
}

#[test]
fn conv_transpose_kernel_gradient_of_sum_counts_contributions() {
    // d sum(y) / d k[ky,kx] = sum of inputs whose tap lands in range.
    let input = random(Shape::new(1, 4, 4), 1);
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let k = tape.param(random(Shape::new(1, 8, 8), 2));
    let y = tape.conv_transpose_depthwise(x, k).unwrap();
    // Against the frozen target y - 1, d mse / dy = 2/n everywhere, so the
    // kernel gradient is (2/n) * d sum(y) / dk.
    let shifted = tape.value(y).map(|v| v - 1.0);
    let t = tape.constant(shifted);
    let loss = tape.mse(y, t).unwrap();
    tape.backward(loss).unwrap();
    let n = 64.0;
    let g = tape.grad(k).unwrap();
    for ky in 0..8 {
        for kx in 0..8 {
            let mut expected = 0.0;
            for iy in 0..4 {
                for ix in 0..4 {
                    let oy = (2 * iy + ky) as isize - 3;
                    let ox = (2 * ix + kx) as isize - 3;
                    if (0..8).contains(&oy) && (0..8).contains(&ox) {
                        expected += input.get(0, iy, ix);
                    }
                }
            }
            let got = g[ky * 8 + kx] * n / 2.0;
            assert!((got - expected).abs() < 1e-12, "tap ({ky},{kx}): {got} vs {expected}");
        }
    }
}

#[test]
fn conv_transpose_gradients_match_finite_differences() {
    let inputs = [random(Shape::new(1, 4, 4), 3), random(Shape::new(1, 8, 8), 4)];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.conv_transpose_depthwise(v[0], v[1]).unwrap();
            scalarize(t, y, 5)
        },
        1e-4,
    );
    let inputs = [random(Shape::new(3, 3, 2), 6), random(Shape::new(1, 8, 8), 7)];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.conv_transpose_depthwise(v[0], v[1]).unwrap();
            scalarize(t, y, 8)
        },
        1e-4,
    );
}

// --- 1x1 convolution --------------------------------------------------------

#[test]
fn conv1x1_identity_and_forced_arithmetic() {
    let x = random(Shape::new(3, 2, 2), 9);
    let mut eye = Tensor::zeros(Shape::new(1, 3, 3));
    for i in 0..3 {
        eye.set(0, i, i, 1.0);
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w = tape.constant(eye);
    let b = tape.constant(Tensor::zeros(Shape::flat(3)));
    let y = tape.conv1x1(xv, w, b).unwrap();
    assert_eq!(tape.value(y), &x);

    let ones = tape.constant(Tensor::filled(Shape::new(2, 1, 1), 1.0));
    let w = tape.constant(Tensor::filled(Shape::new(1, 2, 1), 1.0));
    let b = tape.constant(Tensor::filled(Shape::flat(1), 0.5));
    let y = tape.conv1x1(ones, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[2.5]);
}

#[test]
fn conv1x1_channel_mismatch_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(Shape::new(2, 2, 2)));
    let w = tape.constant(Tensor::zeros(Shape::new(1, 3, 4)));
    let b = tape.constant(Tensor::zeros(Shape::flat(4)));
    assert!(matches!(tape.conv1x1(x, w, b), Err(OpError::Shape { .. })));
}

#[test]
fn conv1x1_gradients_match_finite_differences() {
    let inputs = [
        random(Shape::new(3, 4, 4), 10),
        random(Shape::new(1, 3, 5), 11),
        random(Shape::flat(5), 12),
    ];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.conv1x1(v[0], v[1], v[2]).unwrap();
            scalarize(t, y, 13)
        },
        1e-4,
    );
}

// --- 3x3 convolution --------------------------------------------------------

#[test]
fn conv3x3_delta_kernel_is_identity() {
    let x = random(Shape::new(1, 4, 5), 14);
    let mut k = Tensor::zeros(Shape::new(1, 1, 9));
    k.data_mut()[4] = 1.0;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.constant(k);
    let b = tape.constant(Tensor::zeros(Shape::flat(1)));
    let y = tape.conv3x3(xv, kv, b).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn conv3x3_all_ones_counts_neighbours() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::filled(Shape::new(1, 3, 3), 1.0));
    let k = tape.constant(Tensor::filled(Shape::new(1, 1, 9), 1.0));
    let b = tape.constant(Tensor::zeros(Shape::flat(1)));
    let y = tape.conv3x3(x, k, b).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
}

#[test]
fn conv3x3_channel_mismatch_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(Shape::new(2, 3, 3)));
    let k = tape.constant(Tensor::zeros(Shape::new(1, 3, 9)));
    let b = tape.constant(Tensor::zeros(Shape::flat(1)));
    assert!(matches!(tape.conv3x3(x, k, b), Err(OpError::Shape { .. })));
}

#[test]
fn conv3x3_gradients_match_finite_differences() {
    let inputs = [
        random(Shape::new(2, 5, 5), 15),
        random(Shape::new(3, 2, 9), 16),
        random(Shape::flat(3), 17),
    ];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.conv3x3(v[0], v[1], v[2]).unwrap();
            scalarize(t, y, 18)
        },
        1e-4,
    );
}

// --- concat / noise / relu / view -------------------------------------------

#[test]
fn concat_orders_channels_and_splits_gradient() {
    let a = random(Shape::new(1, 2, 2), 19);
    let b = random(Shape::new(1, 2, 2), 20);
    let mut tape = Tape::new();
    let av = tape.param(a.clone());
    let bv = tape.param(b.clone());
    let c = tape.concat_channels(av, bv).unwrap();
    assert_eq!(tape.value(c).shape(), Shape::new(2, 2, 2));
    assert_eq!(tape.value(c).channel(0), a.data());
    assert_eq!(tape.value(c).channel(1), b.data());

    // loss over the first half only: d/da = 2(a - t)/n, d/db = 0
    let first = tape.view(c, 0, Shape::new(1, 2, 2)).unwrap();
    let target = tape.constant(a.map(|v| v - 1.0));
    let loss = tape.mse(first, target).unwrap();
    tape.backward(loss).unwrap();
    assert!(tape.grad(av).unwrap().iter().all(|&g| (g - 0.5).abs() < 1e-15));
    assert!(tape.grad(bv).unwrap().iter().all(|&g| g == 0.0));
}

#[test]
fn concat_spatial_mismatch_is_rejected() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(Shape::new(1, 2, 2)));
    let b = tape.constant(Tensor::zeros(Shape::new(1, 2, 3)));
    assert!(tape.concat_channels(a, b).is_err());
}

#[test]
fn additive_noise_is_transparent_to_gradients() {
    let x = random(Shape::new(1, 3, 3), 21);
    let target = random(Shape::new(1, 3, 3), 22);

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = tape.add_noise(xv, &[0.0; 9]).unwrap();
    assert_eq!(tape.value(y), &x);

    // Identity Jacobian: the input gradient equals dL/dy evaluated at x + w.
    let noise = gaussian_vec(&mut stream(1, Purpose::Init, 9), 1.0, 9);
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = tape.add_noise(xv, &noise).unwrap();
    for i in 0..9 {
        assert_eq!(tape.value(y).data()[i], x.data()[i] + noise[i]);
    }
    let t = tape.constant(target.clone());
    let loss = tape.mse(y, t).unwrap();
    tape.backward(loss).unwrap();
    for (i, g) in tape.grad(xv).unwrap().iter().enumerate() {
        let expected = 2.0 * (x.data()[i] + noise[i] - target.data()[i]) / 9.0;
        assert!((g - expected).abs() < 1e-15);
    }
    assert!(tape.add_noise(xv, &[0.0; 2]).is_err());
}

#[test]
fn relu_signature_tracks_sign_pattern() {
    let sig = |v: Vec<f64>| {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::flat(v));
        tape.relu(x);
        tape.relu(x);
        tape.relu_signature()
    };
    let base = sig(vec![-1.0, 0.5, 2.0]);
    assert_eq!(base, sig(vec![-3.0, 0.1, 9.0]));
    assert_ne!(base, sig(vec![1.0, 0.5, 2.0]));
    assert_ne!(base, sig(vec![-1.0, 0.0, 2.0]));
    assert_ne!(Tape::new().relu_signature(), base);
}

#[test]
fn relu_forward_and_mask() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::flat(vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    let t = tape.constant(Tensor::flat(vec![-3.0, -3.0, -3.0]));
    let loss = tape.mse(y, t).unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(x).unwrap();
    assert_eq!(g[0], 0.0);
    assert_eq!(g[1], 0.0);
    assert!(g[2] > 0.0);

    let pos = Tensor::flat(vec![0.5, 1.0, 7.0]);
    let mut tape = Tape::new();
    let p = tape.constant(pos.clone());
    let y = tape.relu(p);
    assert_eq!(tape.value(y), &pos);
}

// --- power normalisation ----------------------------------------------------

#[test]
fn power_normalize_unit_pair() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::flat(vec![1.0, 1.0]));
    let y = tape.power_normalize(x).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!((v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!((kernels::complex_power(v) - 1.0).abs() < 1e-12);
}

#[test]
fn power_normalize_is_scale_invariant() {
    let x = random(Shape::flat(10), 23);
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x.map(|v| 3.7 * v));
    let ya = tape.power_normalize(a).unwrap();
    let yb = tape.power_normalize(b).unwrap();
    for (p, q) in tape.value(ya).data().iter().zip(tape.value(yb).data()) {
        assert!((p - q).abs() < 1e-14);
    }
}

#[test]
fn power_normalize_rejects_zero_and_empty() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(Shape::flat(4)));
    assert!(matches!(tape.power_normalize(z), Err(OpError::Degenerate { .. })));
    let e = tape.constant(Tensor::flat(vec![]));
    assert!(matches!(tape.power_normalize(e), Err(OpError::Empty { .. })));
}

#[test]
fn power_normalize_then_mse_matches_finite_differences() {
    let inputs = [random(Shape::flat(12), 24)];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.power_normalize(v[0]).unwrap();
            scalarize(t, y, 25)
        },
        1e-4,
    );
}

#[test]
fn rms_scaled_noise_matches_finite_differences() {
    let noise = gaussian_vec(&mut stream(3, Purpose::Init, 1), 0.3, 10);
    let inputs = [random(Shape::flat(10), 26)];
    check_grads(
        &inputs,
        |t, v| {
            let y = t.add_rms_scaled_noise(v[0], &noise).unwrap();
            scalarize(t, y, 27)
        },
        1e-4,
    );
}

#[test]
fn rms_scaled_noise_equals_normalize_noise_rescale() {
    let x = random(Shape::flat(8), 28);
    let noise = gaussian_vec(&mut stream(3, Purpose::Init, 2), 0.1, 8);
    let g = kernels::rms_gain(x.data());
    let manual: Vec<f64> = x.data().iter().zip(&noise).map(|(v, n)| (v / g + n) * g).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let y = tape.add_rms_scaled_noise(xv, &noise).unwrap();
    for (a, b) in tape.value(y).data().iter().zip(&manual) {
        assert!((a - b).abs() < 1e-12);
    }
}

// --- mse / backward ---------------------------------------------------------

#[test]
fn mse_values() {
    let mut tape = Tape::new();
    let a = tape.constant(random(Shape::new(2, 3, 3), 29));
    let l = tape.mse(a, a).unwrap();
    assert_eq!(tape.value(l).data(), &[0.0]);
    let p = tape.constant(Tensor::filled(Shape::new(3, 2, 5), 0.6));
    let q = tape.constant(Tensor::filled(Shape::new(3, 2, 5), 0.5));
    let l = tape.mse(p, q).unwrap();
    assert!((tape.value(l).data()[0] - 0.01).abs() < 1e-15);
    let r = tape.constant(Tensor::zeros(Shape::new(1, 2, 5)));
    assert!(tape.mse(p, r).is_err());
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let inputs = [random(Shape::new(2, 3, 3), 30), random(Shape::new(2, 3, 3), 31)];
    check_grads(&inputs, |t, v| t.mse(v[0], v[1]).unwrap(), 1e-6);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(Shape::flat(3)));
    assert!(matches!(tape.backward(x), Err(OpError::NotScalar(_))));
}

#[test]
fn shared_tensor_accumulates_both_paths() {
    // loss = mse(concat(x, x), t): each copy contributes 2(x - t_i)/n.
    let x = random(Shape::new(1, 2, 2), 32);
    let t = random(Shape::new(2, 2, 2), 33);
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let c = tape.concat_channels(xv, xv).unwrap();
    let tv = tape.constant(t.clone());
    let loss = tape.mse(c, tv).unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(xv).unwrap();
    for i in 0..4 {
        let expected =
            2.0 * (x.data()[i] - t.data()[i]) / 8.0 + 2.0 * (x.data()[i] - t.data()[4 + i]) / 8.0;
        assert!((g[i] - expected).abs() < 1e-15);
    }
}

#[test]
fn repeated_backward_doubles_and_zero_grad_resets() {
    let mut tape = Tape::new();
    let x = tape.param(random(Shape::flat(6), 34));
    let t = tape.constant(random(Shape::flat(6), 35));
    let loss = tape.mse(x, t).unwrap();
    tape.backward(loss).unwrap();
    let once = tape.grad(x).unwrap().to_vec();
    tape.backward(loss).unwrap();
    for (a, b) in tape.grad(x).unwrap().iter().zip(&once) {
        assert_eq!(*a, 2.0 * b);
    }
    tape.zero_grad();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 0.0));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn upsample_doubles_spatial_dims(c in 1usize..4, h in 1usize..9, w in 1usize..9, seed in 0u64..1000) {
            let mut tape = Tape::new();
            let x = tape.constant(random(Shape::new(c, h, w), seed));
            let k = tape.constant(random(Shape::new(1, 8, 8), seed + 1));
            let y = tape.conv_transpose_depthwise(x, k).unwrap();
            prop_assert_eq!(tape.value(y).shape(), Shape::new(c, 2 * h, 2 * w));
            prop_assert!(tape.value(y).is_finite());
        }

        #[test]
        fn normalized_power_is_one(values in proptest::collection::vec(-100.0f64..100.0, 1..64)) {
            prop_assume!(values.iter().any(|v| v.abs() > 1e-6));
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::flat(values));
            let y = tape.power_normalize(x).unwrap();
            prop_assert!((kernels::complex_power(tape.value(y).data()) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn small_pipeline_gradients_are_finite(seed in 0u64..500) {
            let mut tape = Tape::new();
            let x = tape.param(random(Shape::new(2, 3, 3), seed));
            let k = tape.param(random(Shape::new(1, 8, 8), seed + 7));
            let w = tape.param(random(Shape::new(1, 2, 3), seed + 8));
            let b = tape.param(random(Shape::flat(3), seed + 9));
            let n = tape.power_normalize(x).unwrap();
            let up = tape.conv_transpose_depthwise(n, k).unwrap();
            let y = tape.conv1x1(up, w, b).unwrap();
            let r = tape.relu(y);
            let t = tape.constant(random(Shape::new(3, 6, 6), seed + 10));
            let loss = tape.mse(r, t).unwrap();
            tape.backward(loss).unwrap();
            for v in [x, k, w, b] {
                prop_assert!(tape.grad(v).unwrap().iter().all(|g| g.is_finite()));
            }
        }
    }
}
