use approx::assert_abs_diff_eq;
use divide_core::gp::{
    bump_mean, elbo, expected_log_lik, init_gp, kernel, kernel_value, kl, mean, predict, set_optimal_variational,
    GpSpec, GpVars, KernelKind,
};
use divide_core::numcore::{grad_check, Graph, ParamStore, Tensor};
use divide_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn set(store: &mut ParamStore<f64>, name: &str, t: Tensor<f64>) {
    let id = store.id(name).unwrap();
    *store.value_mut(id) = t;
}

fn setup(n: usize, m: usize, d: usize, kind: KernelKind, structured: bool, seed: u64) -> (GpSpec, ParamStore<f64>, Tensor<f64>, Vec<f64>) {
    let spec = GpSpec { dim: d, inducing: m, kernel: kind, structured: structured.then_some((d - 2, d - 1)) };
    let x = random(&[n, d], seed, 1.0);
    let mut store = ParamStore::new();
    init_gp(&mut store, &spec, Tensor::raw(&[m, d], x.data()[..m * d].to_vec())).unwrap();
    let y: Vec<f64> = (0..n).map(|i| (x.at(i, 0) * 2.0).sin() + 0.3 * x.at(i, d - 1)).collect();
    (spec, store, x, y)
}

fn hyper(store: &ParamStore<f64>) -> (f64, Vec<f64>, f64, f64) {
    let var = store.get("gp.log_var").unwrap().item().exp();
    let ls: Vec<f64> = store.get("gp.log_ls").unwrap().data().iter().map(|v| v.exp()).collect();
    let noise = 1e-6 + store.get("gp.raw_noise").unwrap().item().exp();
    let c = store.get("gp.mean_c").unwrap().item();
    (var, ls, noise, c)
}

/// Independent exact GP: returns (log marginal likelihood, posterior means at `xs`).
fn exact_gp(store: &ParamStore<f64>, kind: KernelKind, x: &Tensor<f64>, y: &[f64], xs: &Tensor<f64>) -> (f64, Vec<f64>) {
    let (var, ls, noise, c) = hyper(store);
    let n = x.rows();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel_value(kind, var, &ls, x.row(i), x.row(j)).unwrap() + if i == j { noise } else { 0.0 }
    });
    let r = DVector::from_iterator(n, y.iter().map(|v| v - c));
    let ch = k.cholesky().unwrap();
    let alpha = ch.solve(&r);
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let lml = -0.5 * r.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let means = (0..xs.rows())
        .map(|i| c + (0..n).map(|j| kernel_value(kind, var, &ls, xs.row(i), x.row(j)).unwrap() * alpha[j]).sum::<f64>())
        .collect();
    (lml, means)
}

fn elbo_value(store: &ParamStore<f64>, spec: &GpSpec, x: &Tensor<f64>, y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, store, spec);
    let xv = g.constant(x.clone());
    let yv = g.constant(Tensor::from_vec(&[y.len()], y.to_vec()).unwrap());
    let e = elbo(&mut g, &v, spec, xv, yv, y.len()).unwrap();
    g.value(e).item()
}

#[test]
fn kernel_closed_form_examples() {
    for kind in [KernelKind::Matern52, KernelKind::Rbf] {
        let z = [0.3, -1.2, 2.0];
        assert_eq!(kernel_value(kind, 2.5, &[1.0, 0.5, 3.0], &z, &z).unwrap(), 2.5);
        let far = [50.0, 0.0, 0.0];
        assert!(kernel_value(kind, 2.5, &[1.0; 3], &far, &[0.0; 3]).unwrap() < 1e-15 * 2.5);
        let a = [0.4, 1.0, -0.2];
        let b = [1.4, -0.5, 0.3];
        let half_a: Vec<f64> = a.iter().map(|v| v / 2.0).collect();
        let half_b: Vec<f64> = b.iter().map(|v| v / 2.0).collect();
        assert_abs_diff_eq!(
            kernel_value(kind, 1.0, &[2.0; 3], &a, &b).unwrap(),
            kernel_value(kind, 1.0, &[1.0; 3], &half_a, &half_b).unwrap(),
            epsilon = 1e-15
        );
    }
    assert!(matches!(
        kernel_value(KernelKind::Rbf, 1.0, &[1.0; 2], &[0.0; 3], &[0.0; 3]),
        Err(Error::DimensionMismatch { expected: 2, got: 3 })
    ));
}

#[test]
fn graph_kernel_matches_closed_form() {
    for kind in [KernelKind::Matern52, KernelKind::Rbf] {
        let (spec, mut store, x, _) = setup(6, 3, 4, kind, false, 2);
        set(&mut store, "gp.log_ls", Tensor::from_vec(&[4], vec![0.1, -0.3, 0.5, 0.0]).unwrap());
        set(&mut store, "gp.log_var", Tensor::scalar(0.4));
        let (var, ls, _, _) = hyper(&store);
        let mut g = Graph::new();
        let v = GpVars::load(&mut g, &store, &spec);
        let xv = g.constant(x.clone());
        let k = kernel(&mut g, &v, kind, xv, xv).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = kernel_value(kind, var, &ls, x.row(i), x.row(j)).unwrap();
                assert_abs_diff_eq!(g.value(k).at(i, j), want, epsilon = 1e-13);
            }
        }
    }
}

#[test]
fn structured_mean_examples() {
    assert_eq!(bump_mean(0.5, 2.0, (0.1, -0.2), 0.3, 0.1, -0.2), 2.5);
    assert_abs_diff_eq!(bump_mean(0.5, 2.0, (0.1, -0.2), 0.3, 0.4, -0.2), 0.5 + 2.0 * (-0.5f64).exp(), epsilon = 1e-15);
    assert_eq!(bump_mean(0.5, 0.0, (0.1, -0.2), 0.3, 0.9, 0.7), 0.5);

    let (spec, mut store, x, _) = setup(5, 2, 4, KernelKind::Matern52, true, 3);
    set(&mut store, "gp.mean_c", Tensor::scalar(0.25));
    set(&mut store, "gp.sm.amp", Tensor::scalar(1.7));
    set(&mut store, "gp.sm.raw_xc", Tensor::scalar(0.2));
    set(&mut store, "gp.sm.raw_yc", Tensor::scalar(-0.4));
    set(&mut store, "gp.sm.log_w", Tensor::scalar(-0.5));
    let center = (1.5 * 0.2f64.tanh(), 1.5 * (-0.4f64).tanh());
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, &store, &spec);
    let xv = g.constant(x.clone());
    let mv = mean(&mut g, &v, &spec, xv);
    for i in 0..5 {
        let want = bump_mean(0.25, 1.7, center, (-0.5f64).exp(), x.at(i, 2), x.at(i, 3));
        assert_abs_diff_eq!(g.value(mv).data()[i], want, epsilon = 1e-14);
    }
}

#[test]
fn kl_is_zero_at_prior() {
    let (spec, store, _, _) = setup(5, 4, 3, KernelKind::Matern52, false, 1);
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, &store, &spec);
    let k = kl(&mut g, &v);
    assert_eq!(g.value(k).item(), 0.0);
}

#[test]
fn expected_log_lik_at_inducing_input_with_tight_posterior() {
    let spec = GpSpec { dim: 2, inducing: 1, kernel: KernelKind::Matern52, structured: None };
    let z = Tensor::from_vec(&[1, 2], vec![0.3, -0.4]).unwrap();
    let mut store = ParamStore::new();
    init_gp(&mut store, &spec, z.clone()).unwrap();
    let y = 1.3;
    let sf2: f64 = 1.7;
    set(&mut store, "gp.log_var", Tensor::scalar(sf2.ln()));
    set(&mut store, "gp.m", Tensor::scalar(y / sf2.sqrt()));
    set(&mut store, "gp.lu", Tensor::from_vec(&[1, 1], vec![1e-6f64.ln()]).unwrap());
    let noise = 1e-4;
    set(&mut store, "gp.raw_noise", Tensor::scalar((noise - 1e-6f64).ln()));
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, &store, &spec);
    let xv = g.constant(z);
    let yv = g.constant(Tensor::scalar(y));
    let e = expected_log_lik(&mut g, &v, &spec, xv, yv).unwrap();
    let want = -0.5 * (2.0 * std::f64::consts::PI * noise).ln();
    assert!((g.value(e).item() - want).abs() < 1e-6, "{} vs {want}", g.value(e).item());
}

fn random_variational(store: &mut ParamStore<f64>, m: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    set(store, "gp.m", Tensor::from_vec(&[m], (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap());
    let lu: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-0.8..0.8)).collect();
    set(store, "gp.lu", Tensor::from_vec(&[m, m], lu).unwrap());
}

#[test]
fn elbo_lower_bounds_exact_marginal_likelihood() {
    let (spec, mut store, x, y) = setup(10, 4, 3, KernelKind::Matern52, false, 5);
    set(&mut store, "gp.mean_c", Tensor::scalar(0.2));
    let (lml, _) = exact_gp(&store, spec.kernel, &x, &y, &x);
    for s in 0..20 {
        random_variational(&mut store, 4, 100 + s);
        let e = elbo_value(&store, &spec, &x, &y);
        assert!(e <= lml + 1e-9, "ELBO {e} exceeds log marginal {lml}");
    }
}

#[test]
fn optimal_q_with_full_inducing_set_matches_exact_gp() {
    for kind in [KernelKind::Matern52, KernelKind::Rbf] {
        let (spec, mut store, x, y) = setup(20, 20, 3, kind, false, 6);
        set(&mut store, "gp.raw_noise", Tensor::scalar(0.01f64.ln()));
        set(&mut store, "gp.mean_c", Tensor::scalar(-0.1));
        set_optimal_variational(&mut store, &spec, &x, &y).unwrap();
        let xs = random(&[15, 3], 77, 1.2);
        let (lml, want) = exact_gp(&store, kind, &x, &y, &xs);
        let (got, var) = predict(&store, &spec, &xs, false).unwrap();
        for i in 0..15 {
            assert!((got[i] - want[i]).abs() < 1e-3, "{kind:?}: {} vs {}", got[i], want[i]);
            assert!(var[i] >= 0.0);
        }
        // At the optimum with Z = X the bound is tight.
        assert!((elbo_value(&store, &spec, &x, &y) - lml).abs() < 1e-6);
    }
}

#[test]
fn predict_at_inducing_inputs_returns_pinned_values() {
    let (spec, mut store, _, _) = setup(8, 5, 3, KernelKind::Matern52, true, 9);
    random_variational(&mut store, 5, 3);
    set(&mut store, "gp.mean_c", Tensor::scalar(0.7));
    let z = store.get("gp.z").unwrap().clone();
    let (var, ls, _, _) = hyper(&store);
    let k = DMatrix::from_fn(5, 5, |i, j| kernel_value(spec.kernel, var, &ls, z.row(i), z.row(j)).unwrap());
    let l = k.cholesky().unwrap().l();
    let mv = DVector::from_row_slice(store.get("gp.m").unwrap().data());
    let u = &l * mv;
    let (got, _) = predict(&store, &spec, &z, false).unwrap();
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, &store, &spec);
    let zv = g.constant(z.clone());
    let prior = mean(&mut g, &v, &spec, zv);
    for i in 0..5 {
        assert_abs_diff_eq!(got[i], u[i] + g.value(prior).data()[i], epsilon = 1e-8);
    }
}

#[test]
fn variances_are_bounded_when_q_is_tighter_than_prior() {
    let (spec, mut store, x, _) = setup(30, 5, 3, KernelKind::Matern52, false, 10);
    let mut lu = Tensor::full(&[5, 5], 0.04);
    for i in 0..5 {
        lu.set(i, i, 0.5f64.ln());
    }
    set(&mut store, "gp.lu", lu);
    let (_, var) = predict(&store, &spec, &x, false).unwrap();
    let (_, obs) = predict(&store, &spec, &x, true).unwrap();
    let (sf2, _, noise, _) = hyper(&store);
    for i in 0..30 {
        assert!(var[i] >= 0.0 && var[i] <= sf2 + 1e-12);
        assert_abs_diff_eq!(obs[i] - var[i], noise, epsilon = 1e-12);
    }
}

#[test]
fn elbo_gradients_match_finite_differences() {
    for (kind, structured) in [(KernelKind::Matern52, true), (KernelKind::Rbf, false), (KernelKind::Matern52, false)] {
        let (spec, mut store, x, y) = setup(5, 2, 4, kind, structured, 11);
        random_variational(&mut store, 2, 12);
        if structured {
            set(&mut store, "gp.sm.raw_xc", Tensor::scalar(0.3));
        }
        let err = grad_check(
            &store,
            |g, p| {
                let v = GpVars::load(g, p, &spec);
                let xv = g.constant(x.clone());
                let yv = g.constant(Tensor::from_vec(&[5], y.clone()).unwrap());
                elbo(g, &v, &spec, xv, yv, 12)
            },
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{kind:?} structured={structured}: {err}");
    }
}

fn gram(store: &ParamStore<f64>, spec: &GpSpec, x: &Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let v = GpVars::load(&mut g, store, spec);
    let xv = g.constant(x.clone());
    let k = kernel(&mut g, &v, spec.kernel, xv, xv).unwrap();
    g.value(k).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kl_is_nonnegative(seed in 0u64..10_000) {
        let (spec, mut store, _, _) = setup(6, 6, 2, KernelKind::Matern52, false, seed);
        random_variational(&mut store, 6, seed);
        let mut g = Graph::new();
        let v = GpVars::load(&mut g, &store, &spec);
        let k = kl(&mut g, &v);
        prop_assert!(g.value(k).item() >= 0.0);
    }

    #[test]
    fn gram_is_translation_invariant(seed in 0u64..10_000, shift in -3.0f64..3.0) {
        let (spec, store, x, _) = setup(12, 2, 3, KernelKind::Matern52, false, seed);
        let moved = x.map(|v| v + shift);
        let (a, b) = (gram(&store, &spec, &x), gram(&store, &spec, &moved));
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_blocks_with_lengthscales_keeps_gram(seed in 0u64..10_000) {
        let (spec, mut store, x, _) = setup(10, 2, 4, KernelKind::Rbf, false, seed);
        set(&mut store, "gp.log_ls", Tensor::from_vec(&[4], vec![0.1, 0.2, -0.3, 0.4]).unwrap());
        let perm = [2usize, 3, 0, 1];
        let xp = Tensor::from_vec(&[10, 4], (0..40).map(|k| x.at(k / 4, perm[k % 4])).collect()).unwrap();
        let mut sp = store.clone();
        let ls = store.get("gp.log_ls").unwrap().clone();
        set(&mut sp, "gp.log_ls", Tensor::from_vec(&[4], perm.iter().map(|&p| ls.data()[p]).collect()).unwrap());
        let (a, b) = (gram(&store, &spec, &x), gram(&sp, &spec, &xp));
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn gram_matrices_factor_with_small_jitter(n in 2usize..200, seed in 0u64..1000) {
        let (spec, store, _, _) = setup(n, 2, 5, KernelKind::Matern52, false, seed);
        let x = random(&[n, 5], seed + 1, 2.0);
        let k = gram(&store, &spec, &x);
        let (_, j) = divide_core::numcore::cholesky(&k, &[0.0, 1e-8, 1e-6]).unwrap();
        prop_assert!(j <= 1e-6);
    }
}
