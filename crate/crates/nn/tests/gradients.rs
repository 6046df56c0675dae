//! Finite-difference checks for every op and layer, plus algebraic
//! properties of the convolution pair, the EMA scan and the softmax gate.

use forge_nn::gradcheck::DEFAULT_EPS;
use forge_nn::layers::{CeConv, CeConvConfig, Conv1d, ConvTranspose1d, Dense, EmaBranchConfig, MultiHeadEma};
use forge_nn::{gradient_check, gradient_check_store, Bound, NnError, ParameterStore, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LINEAR_TOL: f64 = 1e-6;
const COMPOSITE_TOL: f64 = 1e-4;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU inputs stay clear of the kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.05..1.0);
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

/// Reduce an output to a scalar with fixed random weights.
fn reduce(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let c = randn(&mut rng, tape.value(y).shape());
    tape.project(y, &c)
}

fn assert_finite(tape: &Tape, vars: &[Var]) {
    for v in vars {
        assert!(tape.value(*v).all_finite());
    }
}

#[test]
fn dense_matches_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [randn(&mut rng, &[2, 3]), randn(&mut rng, &[3, 4]), randn(&mut rng, &[4])];
        let r = gradient_check(
            |t, v| {
                let y = t.dense(v[0], v[1], v[2])?;
                reduce(t, y, seed)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < LINEAR_TOL, "seed {seed}: {}", r.max_rel_err);
        assert!(r.analytic.iter().all(Tensor::all_finite));
    }
}

#[test]
fn conv1d_matches_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [randn(&mut rng, &[1, 2, 8]), randn(&mut rng, &[3, 2, 3]), randn(&mut rng, &[3])];
        let r = gradient_check(
            |t, v| {
                let y = t.conv1d(v[0], v[1], Some(v[2]))?;
                reduce(t, y, seed)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < LINEAR_TOL, "seed {seed}: {}", r.max_rel_err);
    }
}

#[test]
fn conv1d_transpose_matches_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, ci, co, l, k) = (2, 3, 2, 7, [1, 3, 5][seed as usize % 3]);
        let inputs = [randn(&mut rng, &[b, ci, l]), randn(&mut rng, &[ci, co, k]), randn(&mut rng, &[co])];
        let r = gradient_check(
            |t, v| {
                let y = t.conv1d_transpose(v[0], v[1], Some(v[2]))?;
                reduce(t, y, seed)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < LINEAR_TOL, "seed {seed}: {}", r.max_rel_err);
    }
}

#[test]
fn activations_match_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = away_from_zero(&mut rng, &[3, 5]);
        for which in 0..2 {
            let r = gradient_check(
                |t, v| {
                    let y = if which == 0 { t.relu(v[0]) } else { t.sigmoid(v[0]) };
                    reduce(t, y, seed)
                },
                std::slice::from_ref(&x),
                DEFAULT_EPS,
            )
            .unwrap();
            assert!(r.max_rel_err < LINEAR_TOL, "seed {seed} act {which}: {}", r.max_rel_err);
        }
    }
}

#[test]
fn ema_scan_matches_finite_differences_on_input_and_decay() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [randn(&mut rng, &[1, 6, 2]), randn(&mut rng, &[2])];
        let r = gradient_check(
            |t, v| {
                let alpha = t.sigmoid(v[1]);
                let y = t.ema_scan(v[0], alpha)?;
                reduce(t, y, seed)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-5, "seed {seed}: {}", r.max_rel_err);
    }
}

#[test]
fn small_ops_match_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [
            randn(&mut rng, &[2, 3, 4]),
            randn(&mut rng, &[3]),
            randn(&mut rng, &[2, 4, 3]),
            randn(&mut rng, &[2, 4, 3]),
        ];
        let r = gradient_check(
            |t, v| {
                let s = t.swap_last2(v[0])?;
                let w = t.softmax(v[1])?;
                let r = t.reshape(v[3], &[2, 4, 3])?;
                let f = t.weighted_sum(&[s, v[2], r], w)?;
                let g = t.axpy(f, v[2], -0.7)?;
                let c = t.clamp(g, -10.0, 10.0);
                reduce(t, c, seed)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < COMPOSITE_TOL, "seed {seed}: {}", r.max_rel_err);
    }
}

#[test]
fn losses_match_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [randn(&mut rng, &[3, 4]), randn(&mut rng, &[3, 4]), randn(&mut rng, &[3, 4])];
        let eps_noise = randn(&mut rng, &[3, 4]);
        let r = gradient_check(
            |t, v| {
                let z = t.reparameterize(v[0], v[1], eps_noise.clone())?;
                let mse = t.mse(z, v[2])?;
                let kl = t.kl_divergence(v[0], v[1])?;
                t.axpy(mse, kl, 0.37)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < COMPOSITE_TOL, "seed {seed}: {}", r.max_rel_err);
    }
}

fn store_check(store: &ParameterStore, x: &Tensor, seed: u64, f: impl Fn(&mut Tape, &Bound, Var) -> Result<Var, NnError>) -> f64 {
    let r = gradient_check_store(
        store,
        |t, p| {
            let xv = t.constant(x.clone());
            let y = f(t, p, xv)?;
            assert_finite(t, &[y]);
            reduce(t, y, seed)
        },
        DEFAULT_EPS,
    )
    .unwrap();
    r.max_rel_err
}

#[test]
fn layer_wrappers_match_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let d = Dense::new(&mut s, "d", 3, 2, &mut rng).unwrap();
        let x = randn(&mut rng, &[4, 3]);
        assert!(store_check(&s, &x, seed, |t, p, x| d.forward(t, p, x)) < LINEAR_TOL);

        let mut s = ParameterStore::new();
        let c = Conv1d::new(&mut s, "c", 2, 3, 3, &mut rng).unwrap();
        let x = randn(&mut rng, &[1, 2, 8]);
        assert!(store_check(&s, &x, seed, |t, p, x| c.forward(t, p, x)) < LINEAR_TOL);

        let mut s = ParameterStore::new();
        let c = ConvTranspose1d::new(&mut s, "ct", 3, 2, 3, &mut rng).unwrap();
        let x = randn(&mut rng, &[2, 3, 5]);
        assert!(store_check(&s, &x, seed, |t, p, x| c.forward(t, p, x)) < LINEAR_TOL);
    }
}

#[test]
fn multi_head_ema_matches_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let m = MultiHeadEma::new(&mut s, "m", EmaBranchConfig::log_spaced(4, 4, 2), &mut rng).unwrap();
        let x = randn(&mut rng, &[1, 5, 4]);
        let e = store_check(&s, &x, seed, |t, p, x| m.forward(t, p, x));
        assert!(e < 1e-5, "seed {seed}: {e}");
    }
}

#[test]
fn ceconv_block_matches_finite_differences() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let cfg = CeConvConfig { channels: 4, kernel: 3, branches: vec![(2, 1), (4, 2), (8, 4)] };
        let block = CeConv::new(&mut s, "blk", &cfg, &mut rng).unwrap();
        // gate logits away from zero so the gradient does not vanish by symmetry
        s.set_value("blk.gate", Tensor::new(vec![3], vec![0.3, -0.2, 0.5]).unwrap()).unwrap();
        let x = randn(&mut rng, &[2, 4, 6]);
        let e = store_check(&s, &x, seed, |t, p, x| block.forward(t, p, x));
        assert!(e < COMPOSITE_TOL, "seed {seed}: {e}");
    }
}

fn inner(a: &Tensor, b: &Tensor) -> f64 {
    a.dot(b)
}

#[test]
fn conv_pair_is_adjoint_on_twenty_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let b = rng.random_range(1..4);
        let ca = rng.random_range(1..6);
        let cb = rng.random_range(1..6);
        let l = rng.random_range(1..12);
        let k = [1, 3, 5, 7][rng.random_range(0..4)];
        let x = randn(&mut rng, &[b, ca, l]);
        let y = randn(&mut rng, &[b, cb, l]);
        let w = randn(&mut rng, &[cb, ca, k]);
        let mut t = Tape::new();
        let (xv, yv, wv) = (t.constant(x.clone()), t.constant(y.clone()), t.constant(w));
        let ax = t.conv1d(xv, wv, None).unwrap();
        let aty = t.conv1d_transpose(yv, wv, None).unwrap();
        let lhs = inner(t.value(ax), &y);
        let rhs = inner(&x, t.value(aty));
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
        assert!(rel < 1e-10, "b={b} ca={ca} cb={cb} l={l} k={k}: {lhs} vs {rhs}");
    }
}

#[test]
fn branch_shape_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = ParameterStore::new();
    assert!(MultiHeadEma::new(&mut s, "ok", EmaBranchConfig::log_spaced(64, 32, 4), &mut rng).is_ok());
    assert!(MultiHeadEma::new(&mut s, "bad", EmaBranchConfig::log_spaced(64, 33, 4), &mut rng).is_err());
    let m = MultiHeadEma::new(&mut s, "m", EmaBranchConfig::log_spaced(4, 4, 2), &mut rng).unwrap();
    let mut t = Tape::new();
    let p = s.bind(&mut t);
    let x = t.constant(Tensor::zeros(&[1, 3, 5]));
    assert!(matches!(m.forward(&mut t, &p, x), Err(NnError::ShapeMismatch { .. })));
}

proptest! {
    #[test]
    fn ema_never_exceeds_running_max(
        u in prop::collection::vec(-100.0f64..100.0, 1..40),
        alpha in 0.001f64..0.999,
    ) {
        let len = u.len();
        let mut t = Tape::new();
        let uv = t.constant(Tensor::new(vec![1, len, 1], u.clone()).unwrap());
        let a = t.constant(Tensor::scalar(alpha));
        let y = t.ema_scan(uv, a).unwrap();
        let mut run = 0.0f64;
        for (k, v) in t.value(y).data().iter().enumerate() {
            run = run.max(u[k].abs());
            prop_assert!(v.abs() <= run * (1.0 + 1e-12));
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let n = logits.len();
        let mut t = Tape::new();
        let g = t.constant(Tensor::new(vec![n], logits).unwrap());
        let w = t.softmax(g).unwrap();
        let wv = t.value(w).data();
        prop_assert!(wv.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((wv.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ceconv_forward_backward_stay_finite(seed in 0u64..1000, scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let cfg = CeConvConfig { channels: 4, kernel: 3, branches: vec![(4, 2), (8, 2)] };
        let block = CeConv::new(&mut s, "b", &cfg, &mut rng).unwrap();
        let mut t = Tape::new();
        let p = s.bind(&mut t);
        let x = t.constant(Tensor::from_fn(&[2, 4, 9], |_| scale * rng.random_range(-1.0..1.0)));
        let y = block.forward(&mut t, &p, x).unwrap();
        let z = t.sigmoid(y);
        let target = t.constant(Tensor::full(&[2, 4, 9], 0.5));
        let loss = t.mse(z, target).unwrap();
        prop_assert!(t.value(loss).all_finite());
        let g = t.backward(loss).unwrap();
        for (_, v) in p.iter() {
            prop_assert!(g.get(v).unwrap().all_finite());
        }
    }
}
