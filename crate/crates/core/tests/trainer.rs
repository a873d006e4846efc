use divide_core::benchgen::{generate, BenchConfig, Benchmark};
use divide_core::dataset::Dataset;
use divide_core::trainer::{
    continuity_probe, probe_cells, standardize_targets, train, Inputs, ModelState, TrainConfig,
};
use divide_core::Error;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(benchmark: Benchmark, seed: u64) -> Dataset {
    generate(&BenchConfig { benchmark, rows: 20, cols: 20, patch_size: 8, seed, ..Default::default() }).unwrap()
}

fn pick(n: usize, k: usize, seed: u64) -> Vec<usize> {
    sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec()
}

fn quick() -> TrainConfig {
    TrainConfig { iterations: 40, ..Default::default() }
}

#[test]
fn target_standardization_examples() {
    let (z, m, s) = standardize_targets(&[0.0, 10.0]).unwrap();
    assert_eq!((m, s), (5.0, 5.0));
    assert_eq!(z, vec![-1.0, 1.0]);
    let y = [3.5, -2.0, 17.25, 0.1, 8.0];
    let (z, m, s) = standardize_targets(&y).unwrap();
    for (a, b) in z.iter().zip(&y) {
        assert!((a * s + m - b).abs() <= 1e-12);
    }
    assert!(matches!(standardize_targets(&[4.0, 4.0, 4.0]), Err(Error::DegenerateTargets(_))));
}

#[test]
fn defaults_match_reference_settings() {
    let c = TrainConfig::default();
    assert_eq!((c.lr, c.iterations, c.batch_size, c.inducing), (0.01, 500, 256, 50));
    assert!(!c.structured_mean);
}

#[test]
fn training_is_deterministic_and_order_free() {
    let ds = small(Benchmark::One, 2);
    let cells = pick(ds.len(), 25, 1);
    let a = train::<f64>(&ds, &cells, &quick()).unwrap();
    let b = train::<f64>(&ds, &cells, &quick()).unwrap();
    assert_eq!(a.losses, b.losses);
    let mut rev = cells.clone();
    rev.reverse();
    let c = train::<f64>(&ds, &rev, &quick()).unwrap();
    assert_eq!(a.losses.last(), c.losses.last());
    let mut sorted = cells.clone();
    sorted.sort_unstable();
    assert_eq!(a.state.labeled, sorted);
}

#[test]
fn minibatches_are_seeded() {
    let ds = small(Benchmark::One, 2);
    let cells = pick(ds.len(), 40, 2);
    let cfg = TrainConfig { iterations: 20, batch_size: 16, ..Default::default() };
    let a = train::<f64>(&ds, &cells, &cfg).unwrap();
    let b = train::<f64>(&ds, &cells, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert!(a.losses.iter().all(|l| l.is_finite()));
    let other = train::<f64>(&ds, &cells, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.losses, other.losses);
}

#[test]
fn inducing_count_is_clamped_to_labeled_set() {
    let ds = small(Benchmark::One, 3);
    let out = train::<f64>(&ds, &[5, 300], &quick()).unwrap();
    assert_eq!(out.state.gp.inducing, 2);
    assert_eq!(out.state.params.get("gp.z").unwrap().shape(), &[2, 18]);
}

#[test]
fn invalid_training_requests() {
    let ds = small(Benchmark::One, 3);
    assert!(matches!(train::<f64>(&ds, &[4, 4], &quick()), Err(Error::Config(_))));
    assert!(matches!(train::<f64>(&ds, &[4, 9999], &quick()), Err(Error::OutOfRange(_))));
    let mut flat = ds.clone();
    flat.targets = vec![7.0; flat.len()];
    assert!(matches!(train::<f64>(&flat, &[1, 2, 3], &quick()), Err(Error::DegenerateTargets(_))));
    let bad = TrainConfig { lr: 0.0, ..quick() };
    assert!(matches!(train::<f64>(&ds, &[1, 2], &bad), Err(Error::Config(_))));
    let sm = TrainConfig { structured_mean: true, ..quick() };
    let mut no_coords = ds.clone();
    no_coords.mechanisms.retain(|m| !m.is_coordinates());
    assert!(matches!(train::<f64>(&no_coords, &[1, 2], &sm), Err(Error::Config(_))));
}

#[test]
fn divergent_training_reports_step() {
    let ds = small(Benchmark::One, 4);
    let cells = pick(ds.len(), 10, 4);
    let cfg = TrainConfig { lr: 1e6, iterations: 50, ..Default::default() };
    match train::<f64>(&ds, &cells, &cfg) {
        Err(Error::NonFiniteTrainingStep { step }) => assert!(step > 0 && step < 50),
        Err(Error::NotPositiveDefinite { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.losses)),
    }
}

#[test]
fn predictions_are_destandardized_exactly() {
    let ds = small(Benchmark::One, 5);
    let cells = pick(ds.len(), 30, 5);
    let out = train::<f64>(&ds, &cells, &quick()).unwrap();
    let s = &out.state;
    let all: Vec<usize> = (0..ds.len()).collect();
    let p = s.predict_cells(&ds, &all).unwrap();
    for i in 0..ds.len() {
        assert_eq!(p.mean[i], p.std_mean[i] * s.target_sd + s.target_mean);
        assert_eq!(p.sd[i], p.std_sd[i] * s.target_sd);
        assert!(p.std_sd[i] >= 0.0);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ds = small(Benchmark::Three, 6);
    let cells = pick(ds.len(), 20, 6);
    let cfg = TrainConfig { iterations: 10, structured_mean: true, ..Default::default() };
    let s = train::<f64>(&ds, &cells, &cfg).unwrap().state;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    s.save(&path).unwrap();
    let r = ModelState::<f64>::load(&path).unwrap();
    let names: Vec<&str> = s.params.names().collect();
    assert_eq!(names, r.params.names().collect::<Vec<_>>());
    for n in names {
        let (a, b) = (s.params.get(n).unwrap(), r.params.get(n).unwrap());
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{n}");
    }
    assert_eq!(s.stats, r.stats);
    assert_eq!(s.target_mean.to_bits(), r.target_mean.to_bits());
    assert_eq!(s.target_sd.to_bits(), r.target_sd.to_bits());
    assert_eq!((s.config.clone(), s.layout.clone(), s.gp, s.labeled.clone()), (r.config.clone(), r.layout.clone(), r.gp, r.labeled.clone()));
    let all: Vec<usize> = (0..ds.len()).collect();
    assert_eq!(s.predict_cells(&ds, &all).unwrap(), r.predict_cells(&ds, &all).unwrap());
    let again = dir.path().join("again.ckpt");
    r.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&again, &bytes).unwrap();
    assert!(matches!(ModelState::<f64>::load(&again), Err(Error::Format(_))));
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&again, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(ModelState::<f64>::load(&again), Err(Error::Format(_))));
}

#[test]
fn single_precision_model_trains() {
    let ds = small(Benchmark::One, 7);
    let cells = pick(ds.len(), 20, 7);
    let out = train::<f32>(&ds, &cells, &TrainConfig { iterations: 20, ..Default::default() }).unwrap();
    assert!(out.losses.iter().all(|l| l.is_finite()));
    let p = out.state.predict_cells(&ds, &[0, 1, 2]).unwrap();
    assert!(p.mean.iter().all(|v| v.is_finite()));
}

#[test]
fn continuity_probe_behaves_linearly() {
    let ds = small(Benchmark::One, 8);
    let cells = pick(ds.len(), 30, 8);
    let s = train::<f64>(&ds, &cells, &TrainConfig { iterations: 60, ..Default::default() }).unwrap().state;
    let probe = Inputs::from_cells(&ds, &probe_cells(&ds, 10));
    assert_eq!(probe.len(), 100);
    assert_eq!(continuity_probe(&s, &probe, 0.0, 1).unwrap(), 0.0);
    let a = continuity_probe(&s, &probe, 1e-3, 1).unwrap();
    let b = continuity_probe(&s, &probe, 1e-4, 1).unwrap();
    assert!(a > 0.0);
    let ratio = a / b;
    assert!((5.0..=20.0).contains(&ratio), "ratio {ratio}");
    assert_eq!(a, continuity_probe(&s, &probe, 1e-3, 1).unwrap());
}

#[test]
fn benchmark_one_fit_reduces_loss_and_error() {
    let ds = generate(&BenchConfig { benchmark: Benchmark::One, seed: 1, ..Default::default() }).unwrap();
    let cells = pick(ds.len(), 100, 11);
    let out = train::<f64>(&ds, &cells, &TrainConfig::default()).unwrap();
    let l = &out.losses;
    assert_eq!(l.len(), 500);
    let head: f64 = l[..50].iter().sum::<f64>() / 50.0;
    let tail: f64 = l[450..].iter().sum::<f64>() / 50.0;
    assert!(tail < head, "{tail} vs {head}");
    assert!(out.elbo_final >= out.elbo_init);
    let all: Vec<usize> = (0..ds.len()).collect();
    let p = out.state.predict_cells(&ds, &all).unwrap();
    let rmse = (p.mean.iter().zip(&ds.clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ds.len() as f64).sqrt();
    assert!(rmse < 15.0, "rmse {rmse}");
}
