mod common;

use common::{fd_grad, lu_solve, max_rel_err, random_spd};
use poisonlab::numerics::linalg::{cholesky_solve, mat_vec};
use poisonlab::numerics::{Activation, Adam, AdamConfig, Mlp, Rng};
use proptest::prelude::*;

fn near_kink(net: &Mlp, x: &[f64]) -> bool {
    let t = net.trace(x).unwrap();
    (0..net.num_layers())
        .any(|l| net.activation(l) == Activation::Relu && t.pre[l].iter().any(|z| z.abs() < 1e-4))
}

fn scalar_out(net: &Mlp, x: &[f64], up: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(up).map(|(a, b)| a * b).sum()
}

fn check_gradients(net: &Mlp, rng: &mut Rng, probes: usize) {
    let d = net.input_dim();
    let mut done = 0;
    while done < probes {
        let x: Vec<f64> = (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        if near_kink(net, &x) {
            continue;
        }
        let up: Vec<f64> = (0..net.output_dim()).map(|_| rng.normal()).collect();
        let t = net.trace(&x).unwrap();
        let mut pg = vec![0.0; net.num_params()];
        let gx = net.backward(&t, &up, Some(&mut pg)).unwrap();
        let fx = fd_grad(|z| scalar_out(net, z, &up), &x, 1e-5);
        assert!(max_rel_err(&gx, &fx, 1e-6) < 1e-4, "input gradient");
        let mut probe = net.clone();
        for _ in 0..10 {
            let i = rng.below(net.num_params());
            let p0 = probe.params()[i];
            probe.params_mut()[i] = p0 + 1e-5;
            let fp = scalar_out(&probe, &x, &up);
            probe.params_mut()[i] = p0 - 1e-5;
            let fm = scalar_out(&probe, &x, &up);
            probe.params_mut()[i] = p0;
            let fd = (fp - fm) / 2e-5;
            assert!(common::rel_err(pg[i], fd, 1e-6) < 1e-4, "param {i}: {} vs {fd}", pg[i]);
        }
        done += 1;
    }
}

#[test]
fn relu_victim_network_matches_finite_differences() {
    let mut rng = Rng::new(11);
    let net = Mlp::with_hidden(10, &[32, 32], 1, Activation::Relu, Activation::Identity, &mut rng).unwrap();
    check_gradients(&net, &mut rng, 100);
}

#[test]
fn softplus_backbone_matches_finite_differences() {
    let mut rng = Rng::new(12);
    let net = Mlp::new(&[6, 24, 12], &[Activation::Softplus, Activation::Softplus], &mut rng).unwrap();
    check_gradients(&net, &mut rng, 100);
}

#[test]
fn small_relu_net_matches_finite_differences() {
    let mut rng = Rng::new(13);
    let net = Mlp::with_hidden(2, &[8], 1, Activation::Relu, Activation::Identity, &mut rng).unwrap();
    check_gradients(&net, &mut rng, 100);
}

#[test]
fn forward_matches_straight_line_evaluation() {
    let mut rng = Rng::new(14);
    let net = Mlp::with_hidden(2, &[16], 1, Activation::Relu, Activation::Identity, &mut rng).unwrap();
    let x = [0.3, -0.7];
    let (w1, b1, w2, b2) = (net.weights(0), net.bias(0), net.weights(1), net.bias(1));
    let mut y = b2[0];
    for j in 0..16 {
        let h = (w1[j * 2] * x[0] + w1[j * 2 + 1] * x[1] + b1[j]).max(0.0);
        y += w2[j] * h;
    }
    assert!((net.forward(&x).unwrap()[0] - y).abs() < 1e-14);
}

#[test]
fn cholesky_matches_lu_up_to_400() {
    let mut rng = Rng::new(15);
    for n in [1, 2, 10, 50, 150, 400] {
        let a = random_spd(n, 1.0, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b = mat_vec(&a, n, n, &x);
        let got = cholesky_solve(&a, n, &b).unwrap();
        let oracle = lu_solve(&a, n, &b);
        for i in 0..n {
            assert!((got[i] - oracle[i]).abs() < 1e-8, "n={n} i={i}");
            assert!((got[i] - x[i]).abs() < 1e-8, "n={n} recovery");
        }
    }
}

#[test]
fn diagonal_solve_example() {
    let a = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0];
    let x = cholesky_solve(&a, 3, &[2.0, 4.0, 6.0]).unwrap();
    for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
        approx::assert_relative_eq!(*got, want, max_relative = 1e-9);
    }
}

#[test]
fn adam_single_step_by_hand() {
    let mut adam = Adam::new(1, AdamConfig::default());
    let mut p = [0.5];
    adam.step(&mut p, &[1.0]);
    // m_hat = 1, v_hat = 1
    let expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
    assert!((p[0] - expected).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cholesky_residual_is_small(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = Rng::new(seed);
        let a = random_spd(n, 0.5, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x = cholesky_solve(&a, n, &b).unwrap();
        let r = mat_vec(&a, n, n, &x);
        let bmax = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((r[i] - b[i]).abs() <= 1e-8 * (1.0 + bmax));
        }
    }

    #[test]
    fn seeded_streams_repeat(seed in any::<u64>()) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn forward_is_finite(seed in any::<u64>(), scale in 0.0f64..100.0) {
        let mut rng = Rng::new(seed);
        let net = Mlp::with_hidden(5, &[16, 16], 1, Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| scale * rng.normal()).collect();
        prop_assert!(net.forward(&x).unwrap()[0].is_finite());
    }

    #[test]
    fn zero_upstream_zero_gradients(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let net = Mlp::new(&[4, 8, 3], &[Activation::Softplus, Activation::Identity], &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let t = net.trace(&x).unwrap();
        let mut pg = vec![0.0; net.num_params()];
        let gx = net.backward(&t, &[0.0; 3], Some(&mut pg)).unwrap();
        prop_assert!(gx.iter().chain(&pg).all(|v| *v == 0.0));
    }
}
