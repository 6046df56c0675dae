use forge_core::preprocess::preprocess_route;
use forge_core::synth::{synth_flow, FlowSpec, SynthKind};
use forge_core::RouteDataset;
use forge_nn::{gradient_check_store, Tape, Tensor};
use forge_vae::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(count: usize, window: usize, seed: u64) -> RouteDataset {
    let spec = FlowSpec::preset(SynthKind::Crossing, 1);
    let raw = synth_flow(&spec, "c", count, seed);
    preprocess_route(&raw, &spec.route_spec("flow1", window)).unwrap().0
}

fn small(seq_len: usize) -> ModelConfig {
    ModelConfig {
        seq_len,
        hidden_channels: 8,
        latent_dim: 4,
        ema_branches: vec![(4, 2), (8, 4)],
        batch_size: 4,
        epochs: 3,
        ..Default::default()
    }
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    for ablation in [
        Ablation::default(),
        Ablation { disable_conflux_ema: true, ..Default::default() },
        Ablation { disable_conflux_block: true, ..Default::default() },
    ] {
        let cfg = ModelConfig { ablation, hidden_channels: 4, ema_branches: vec![(4, 2), (8, 2)], ..small(8) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (model, mut store) = ConfluxVae::new(&cfg, &mut rng).unwrap();
        // nonzero gate so every branch weight reaches the loss asymmetrically
        store.set_value("enc.block.gate", Tensor::new(vec![2], vec![0.4, -0.3]).unwrap()).ok();
        let x = Tensor::from_fn(&[2, 8, 2], |_| rng.random_range(0.1..0.9));
        let eps = Tensor::from_fn(&[2, 4], |_| rng.random_range(-1.0..1.0));
        let r = gradient_check_store(
            &store,
            |tape, p| {
                let xv = tape.constant(x.clone());
                model.loss(tape, p, xv, eps.clone()).map(|t| t.total).map_err(|e| match e {
                    VaeError::Nn(e) => e,
                    e => panic!("{e}"),
                })
            },
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{ablation:?}: {} at {:?}", r.max_rel_err, r.worst);
    }
}

#[test]
fn training_is_deterministic() {
    let ds = dataset(12, 16, 1);
    let a = train(&ds, &small(16), 9).unwrap();
    let b = train(&ds, &small(16), 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.len(), 3);
    assert_eq!(a.weights.rng_seed, 9);
    let c = train(&ds, &small(16), 10).unwrap();
    assert_ne!(a.weights.params, c.weights.params);
}

#[test]
fn default_epoch_count() {
    let ds = dataset(2, 4, 2);
    let cfg = ModelConfig { epochs: ModelConfig::default().epochs, ..small(4) };
    let out = train(&ds, &ModelConfig { hidden_channels: 2, ema_branches: vec![(2, 1)], latent_dim: 1, ..cfg }, 0).unwrap();
    assert_eq!(out.history.len(), 500);
    assert!(out.history.last().unwrap().recon <= out.history[0].recon);
}

#[test]
fn rejects_empty_and_mismatched_data() {
    let ds = dataset(3, 16, 1);
    let empty = RouteDataset::new("e", 10.0, ds.bounds, vec![]).unwrap();
    assert!(matches!(train(&empty, &small(16), 0), Err(VaeError::EmptyDataset)));
    assert!(matches!(train(&ds, &small(32), 0), Err(VaeError::SequenceLength { expected: 32, found: 16 })));
}

#[test]
fn single_track_overfits() {
    let mut ds = dataset(1, 32, 4);
    ds.trajectories.truncate(1);
    let cfg = ModelConfig { beta: 0.0, epochs: 50, hidden_channels: 16, latent_dim: 8, ..small(32) };
    let x = to_batch(&ds.trajectories, &ds.bounds).unwrap();
    let curve = |seed| {
        let mut c = Vec::new();
        train_with(&ds, &cfg, seed, |p| {
            c.push(p.reconstruction_mse(&x)?);
            Ok(())
        })
        .unwrap();
        c
    };
    // sampler noise and Adam momentum can bump the curve up for a few
    // epochs on some seeds, so strict monotonicity is pinned to one seed
    let pinned = curve(3);
    for (e, w) in pinned.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-8, "epoch {}: {} -> {}", e + 1, w[0], w[1]);
    }
    for seed in 0..4 {
        let c = curve(seed);
        assert!(c[49] < 0.5 * c[0], "seed {seed}: {} -> {}", c[0], c[49]);
    }
    let cfg = ModelConfig { epochs: 400, ..cfg };
    let out = train(&ds, &cfg, 3).unwrap();
    let y = reconstruct(&out.weights, &x).unwrap();
    let mse = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    assert!(mse < 1e-3, "{mse}");
}

fn trained() -> (RouteDataset, ModelWeights) {
    let ds = dataset(8, 16, 6);
    let w = train(&ds, &small(16), 2).unwrap().weights;
    (ds, w)
}

#[test]
fn generation_contract() {
    let (ds, w) = trained();
    let gen = generate(&w, 1000, 5).unwrap();
    assert_eq!(gen.len(), 1000);
    for t in &gen {
        assert_eq!(t.len(), 16);
        assert!(t.is_uniform(10.0, 0.0));
        assert_eq!(t.states[0].t, 0.0);
        assert!(t.positions().all(|p| ds.bounds.contains(p)));
    }
    assert_eq!(gen[7].id, "gen00007");
    let other = generate(&w, 10, 6).unwrap();
    assert_ne!(other, gen[..10].to_vec());
}

#[test]
fn generation_is_partition_invariant() {
    let (_, w) = trained();
    let all = generate(&w, 100, 42).unwrap();
    let mut split = generate_from(&w, 42, 0, 50).unwrap();
    split.extend(generate_from(&w, 42, 50, 50).unwrap());
    assert_eq!(all, split);
}

#[test]
fn zero_latent_decodes_stably() {
    let (_, w) = trained();
    let (model, store) = w.instantiate().unwrap();
    let run = || {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let z = tape.constant(Tensor::zeros(&[1, 4]));
        let y = model.decode(&mut tape, &p, z).unwrap();
        tape.value(y).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn saved_weights_reproduce_generation() {
    let (_, w) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.fvae");
    save_weights(&w, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, w);
    assert_eq!(generate(&back, 20, 1).unwrap(), generate(&w, 20, 1).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_weights(&path), Err(VaeError::CorruptFile(_))));
    let mut bumped = bytes.clone();
    bumped[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    std::fs::write(&path, &bumped).unwrap();
    assert!(matches!(load_weights(&path), Err(VaeError::FormatVersionMismatch { .. })));
}
