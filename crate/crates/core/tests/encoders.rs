use divide_core::dataset::normalize_coords;
use divide_core::encoders::{
    assemble, encode, encode_patch, init_encoder, standardize, EncoderSpec, JointLayout, NormalizationStats,
};
use divide_core::numcore::{grad_check, Graph, ParamStore, Tensor};
use divide_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn patches(b: usize, spec: &EncoderSpec, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b * spec.patch_len();
    Tensor::from_vec(&[b, spec.channels, spec.patch, spec.patch], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
        .unwrap()
}

#[test]
fn zero_patch_gives_zero_latent() {
    let spec = EncoderSpec::new(3, 8);
    let mut store = ParamStore::<f64>::new();
    init_encoder(&mut store, "enc", &spec, 4).unwrap();
    let z = encode_patch(&store, "enc", &spec, &vec![0.0; spec.patch_len()]).unwrap();
    assert_eq!(z.shape(), &[16]);
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identical_patches_give_identical_latents() {
    let spec = EncoderSpec::new(1, 8);
    let mut store = ParamStore::<f64>::new();
    init_encoder(&mut store, "enc", &spec, 4).unwrap();
    let p = patches(1, &spec, 9);
    let mut two = p.data().to_vec();
    two.extend_from_slice(p.data());
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(&[2, 1, 8, 8], two).unwrap());
    let z = encode(&mut g, &store, "enc", &spec, x).unwrap();
    let z = g.value(z);
    assert_eq!(z.row(0), z.row(1));
    assert_eq!(z.row(0), encode_patch(&store, "enc", &spec, p.data()).unwrap().data());
}

#[test]
fn shape_mismatch_is_rejected() {
    let spec = EncoderSpec::new(3, 8);
    let mut store = ParamStore::<f64>::new();
    init_encoder(&mut store, "enc", &spec, 4).unwrap();
    assert!(matches!(encode_patch(&store, "enc", &spec, &[0.0; 10]), Err(Error::ShapeMismatch(_))));
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 1, 8, 8]));
    assert!(matches!(encode(&mut g, &store, "enc", &spec, x), Err(Error::ShapeMismatch(_))));
}

#[test]
fn invalid_spec_is_rejected() {
    let mut spec = EncoderSpec::new(1, 8);
    spec.kernel = 4;
    assert!(spec.validate().is_err());
    spec.kernel = 3;
    spec.latent = 0;
    assert!(spec.validate().is_err());
}

#[test]
fn encoder_gradients_match_finite_differences() {
    for (channels, seed) in [(1, 1), (3, 2)] {
        let spec = EncoderSpec::new(channels, 6);
        let mut store = ParamStore::<f64>::new();
        init_encoder(&mut store, "enc", &spec, seed).unwrap();
        // Nonzero biases so every ReLU path is exercised.
        for name in ["enc.conv1.b", "enc.conv2.b", "enc.lin.b"] {
            let id = store.id(name).unwrap();
            let n = store.value(id).len();
            *store.value_mut(id) = Tensor::from_vec(&[n], (0..n).map(|i| 0.05 * ((i % 5) as f64 - 2.0)).collect()).unwrap();
        }
        let x = patches(3, &spec, seed + 10);
        let err = grad_check(
            &store,
            |g, p| {
                let xv = g.constant(x.clone());
                let z = encode(g, p, "enc", &spec, xv)?;
                Ok(g.sum(z))
            },
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "channels={channels}: {err}");
    }
}

#[test]
fn standardization_gradients_match_finite_differences() {
    let spec = EncoderSpec::new(1, 5);
    let mut store = ParamStore::<f64>::new();
    init_encoder(&mut store, "enc", &spec, 3).unwrap();
    let x = patches(6, &spec, 8);
    let w: Vec<f64> = (0..6 * 16).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect();
    let err = grad_check(
        &store,
        |g, p| {
            let xv = g.constant(x.clone());
            let z = encode(g, p, "enc", &spec, xv)?;
            let (s, _, _) = standardize(g, z);
            let wv = g.constant(Tensor::from_vec(&[6, 16], w.clone()).unwrap());
            let m = g.mul(s, wv);
            Ok(g.sum(m))
        },
        1e-6,
    )
    .unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn coordinate_examples() {
    assert_eq!(normalize_coords(0, 0, 100, 100).unwrap(), (-1.0, -1.0));
    assert_eq!(normalize_coords(99, 99, 100, 100).unwrap(), (1.0, 1.0));
    let (a, _) = normalize_coords(0, 49, 100, 100).unwrap();
    let (b, _) = normalize_coords(0, 50, 100, 100).unwrap();
    assert!((a + b).abs() < 1e-15);
    assert!(matches!(normalize_coords(100, 0, 100, 100), Err(Error::OutOfRange(_))));
}

#[test]
fn assemble_standardizes_blocks_and_passes_coordinates() {
    let stats = NormalizationStats {
        mean: Tensor::from_vec(&[2], vec![5.0, 0.0]).unwrap(),
        sd: Tensor::from_vec(&[2], vec![2.0, 1.0]).unwrap(),
    };
    let block = Tensor::from_vec(&[1, 2], vec![9.0, 3.0]).unwrap();
    let coords = Tensor::from_vec(&[1, 2], vec![-0.123456789, 0.987654321]).unwrap();
    let j = assemble(&[block.clone()], Some(&coords), &[Some(stats)]).unwrap();
    assert_eq!(j.data(), &[2.0, 3.0, -0.123456789, 0.987654321]);
    assert!(matches!(assemble(&[block], None, &[None]), Err(Error::MissingStats(_))));
}

#[test]
fn layout_attribution() {
    let layout = JointLayout::new(&[("color".into(), 16), ("suit".into(), 16)], true);
    assert_eq!(layout.dim, 34);
    assert_eq!(layout.attribution(33).as_deref(), Some("coordinate y"));
    assert_eq!(layout.attribution(32).as_deref(), Some("coordinate x"));
    assert_eq!(layout.attribution(0).as_deref(), Some("color"));
    assert_eq!(layout.attribution(16).as_deref(), Some("suit"));
    assert_eq!(layout.attribution(34), None);
    let bare = JointLayout::new(&[("a".into(), 3)], false);
    assert_eq!(bare.dim, 3);
    assert_eq!(bare.attribution(2).as_deref(), Some("a"));
}

#[test]
fn stats_floor_collapsed_components() {
    let raw = Tensor::from_vec(&[3, 2], vec![1.0, 4.0, 2.0, 4.0, 3.0, 4.0]).unwrap();
    let s = NormalizationStats::from_latents(&raw);
    assert_eq!(s.sd.data()[1], 1e-6);
    assert!(s.apply(&raw).is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn assembled_training_latents_are_standardized(seed in 0u64..10_000, n in 3usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Tensor::from_vec(&[n, 4], (0..n * 4).map(|_| rng.gen_range(-50.0..50.0)).collect()).unwrap();
        let stats = NormalizationStats::from_latents(&raw);
        let j = assemble(&[raw], None, &[Some(stats)]).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..n).map(|r| j.at(r, c)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-10);
            prop_assert!((var - 1.0).abs() <= 1e-10);
        }
    }
}
