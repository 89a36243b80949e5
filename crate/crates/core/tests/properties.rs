use nips_core::darcy::{greens_kernel, solve_darcy, Grid2D};
use nips_core::dataset::{augment_systems, build_darcy_corpus, decode, encode, CorpusHeader};
use nips_core::interpret::otsu_threshold;
use nips_core::model::{ModelConfig, NipsModel};
use nips_core::randfield::{binarize_microstructure, sample_grf, GrfSpec};
use nips_core::tensor::{irfft2, rfft2, Tape};
use nips_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn two_phase(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    binarize_microstructure(&sample_grf(&GrfSpec::new(5.0, 4.0, n, 1), &mut rng).unwrap())
}

fn header(n: usize, systems: usize, pool: usize, seed: u64) -> CorpusHeader {
    CorpusHeader {
        format_version: 1,
        grid: n,
        n_systems: systems,
        n_train: systems,
        d_pool: pool,
        seed,
        noise_sigma: 0.0,
        micro: GrfSpec::new(5.0, 4.0, n, 1),
        load: GrfSpec::new(5.0, 1.0, n, 2),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_round_trip(n1 in 2usize..8, n2 in 2usize..8, c in 1usize..4, seed in any::<u64>()) {
        let x = noise(&[n1, n2, c], seed);
        let back = irfft2(&rfft2(&x).unwrap(), n2).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn layer_norm_centres_and_scales(rows in 2usize..7, cols in 2usize..7, seed in any::<u64>()) {
        let x = noise(&[rows, cols], seed);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let y = tape.layer_norm(v, &[0, 1], 1e-12).unwrap();
        let y = tape.value(y);
        let m = y.data().iter().sum::<f64>() / y.len() as f64;
        let var = y.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
        prop_assert!(m.abs() < 1e-12);
        prop_assert!((var - 1.0).abs() < 1e-8);
    }

    #[test]
    fn solver_is_linear_and_kernel_symmetric(seed in 0u64..500, a in -3.0f64..3.0) {
        let n = 7;
        let b = two_phase(n, seed);
        let f1 = noise(&[n, n], seed ^ 1);
        let f2 = noise(&[n, n], seed ^ 2);
        let combo = Tensor::from_fn(&[n, n], |k| a * f1.data()[k] + f2.data()[k]);
        let p = solve_darcy(&b, &combo).unwrap();
        let p1 = solve_darcy(&b, &f1).unwrap();
        let p2 = solve_darcy(&b, &f2).unwrap();
        let lin = Tensor::from_fn(&[n, n], |k| a * p1.data()[k] + p2.data()[k]);
        prop_assert!(p.max_abs_diff(&lin).unwrap() < 1e-10);
        let k = greens_kernel(&b, Grid2D::new(n).unwrap()).unwrap();
        let kt = k.values.transpose2().unwrap();
        prop_assert!(k.values.max_abs_diff(&kt).unwrap() < 1e-12);
    }

    #[test]
    fn augmented_samples_are_valid_subsets(d in 1usize..8, n_rand in 1usize..6, seed in any::<u64>()) {
        let corpus = build_darcy_corpus(header(5, 2, 8, 3)).unwrap();
        let samples = augment_systems(&corpus.systems, d, n_rand, seed).unwrap();
        prop_assert_eq!(samples.len(), 2 * n_rand);
        for s in &samples {
            prop_assert_eq!(s.d(), d);
            let mut idx = s.indices.clone();
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), d);
            prop_assert!(idx.iter().all(|&i| i < 8));
            if s.permutation == 0 {
                prop_assert_eq!(&s.indices, &(0..d).collect::<Vec<_>>());
            }
        }
        prop_assert_eq!(samples.clone(), augment_systems(&corpus.systems, d, n_rand, seed).unwrap());
    }

    #[test]
    fn corpus_container_round_trips(seed in 0u64..100, pool in 1usize..4) {
        let corpus = build_darcy_corpus(header(5, 2, pool, seed)).unwrap();
        let bytes = encode(&corpus).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn kernel_map_is_homogeneous(c in 0.1f64..10.0, seed in 0u64..200) {
        let model = NipsModel::init(ModelConfig::new(5, 3, 2, 2), seed).unwrap();
        let g = noise(&[25, 3], seed ^ 7);
        let v = noise(&[25, 3], seed ^ 8);
        let k = model.extract_kernel(&g, &v).unwrap();
        let kv = model.extract_kernel(&g, &v.scale(c)).unwrap();
        let kg = model.extract_kernel(&g.scale(c), &v).unwrap();
        let tol = 1e-9 * k.values.max_abs().max(1.0);
        prop_assert!(kv.values.max_abs_diff(&k.values.scale(c)).unwrap() < tol * c);
        prop_assert!(kg.values.max_abs_diff(&k.values.scale(1.0 / c)).unwrap() < tol);
    }

    #[test]
    fn otsu_threshold_splits_the_range(vals in prop::collection::vec(-100.0f64..100.0, 2..40)) {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi > lo);
        let t = otsu_threshold(&vals).unwrap();
        prop_assert!(t >= lo && t < hi, "{t} outside [{lo}, {hi})");
    }
}
