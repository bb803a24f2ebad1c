//! Cross-module invariants as property tests.

mod common;

use gapinit_lab::adapter::{
    default_alpha, finite_difference_check, forward, gap_init, noisy_gap_init, random_init, train, AdapterPair,
    BaseWeight, Batch, Optimizer, TrainConfig, TrainingData,
};
use gapinit_lab::calibration::{estimate_layer_gaps, generate_stack, SyntheticStackSpec};
use gapinit_lab::geometry::{gap_spectrum, sample_projected_gaps};
use gapinit_lab::harness::{Cell, Command, CsvTable, ExperimentConfig};
use gapinit_lab::spot_gap::{spot_gap_score, SpotGapParams};
use gapinit_lab::toy_model::{expected_loss, TranslationModelSpec};
use gapinit_lab::{DenseMatrix, DenseVector, Rng};
use proptest::prelude::*;

/// Orthogonal d×d matrix from Gram–Schmidt on Gaussian columns.
fn random_orthogonal(d: usize, rng: &mut Rng) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v = rng.normal_vec(d);
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let values = (0..d).flat_map(|r| cols.iter().map(move |c| c[r]).collect::<Vec<_>>()).collect();
    DenseMatrix::new(d, d, values).unwrap()
}

fn rotate_rows(m: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
    m.map_rows(|row| q.mat_vec(row).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn initializers_preserve_the_frozen_path(seed in any::<u64>(), d in 2usize..12, k in 2usize..12, eps in 0.0f64..2.0) {
        let mut rng = Rng::new(seed);
        let r = 1 + rng.below(d.min(k));
        let gap = DenseVector::new(rng.normal_vec(d)).unwrap();
        let w0 = common::random_matrix(d, k, false, &mut rng);
        for a in [
            random_init(d, k, r, default_alpha(r), &mut rng).unwrap(),
            gap_init(d, k, r, default_alpha(r), &gap, &mut rng).unwrap(),
            noisy_gap_init(d, k, r, default_alpha(r), &gap, eps, &mut rng).unwrap(),
        ] {
            let x = DenseVector::new(rng.normal_vec(k)).unwrap();
            let h = forward(&a, &w0, &x).unwrap();
            let direct = w0.mat_vec(x.as_slice()).unwrap();
            prop_assert_eq!(h.as_slice(), direct.as_slice());
        }
    }

    #[test]
    fn analytic_gradients_match_differences(seed in any::<u64>(), d in 1usize..10, k in 1usize..10, n in 1usize..5) {
        let mut rng = Rng::new(seed);
        let r = 1 + rng.below(d.min(k));
        let adapter = AdapterPair::new(
            common::random_matrix(d, r, false, &mut rng),
            common::random_matrix(r, k, false, &mut rng),
            0.5 + rng.uniform(),
        ).unwrap();
        let base = BaseWeight::Dense(common::random_matrix(d, k, false, &mut rng));
        let batch = Batch::new(common::random_matrix(n, k, false, &mut rng), common::random_matrix(n, d, false, &mut rng)).unwrap();
        prop_assert!(finite_difference_check(&adapter, &base, &batch, 1e-2).unwrap() < 1e-6);
    }

    #[test]
    fn expected_loss_is_rotation_invariant(seed in any::<u64>(), d in 2usize..8) {
        let mut rng = Rng::new(seed);
        let spec = TranslationModelSpec::random(d, 1.0, 1.0, 0.3, &mut rng).unwrap();
        let b = common::random_matrix(d, 1, false, &mut rng);
        let a = common::random_matrix(1, d, false, &mut rng);
        let q = random_orthogonal(d, &mut rng);
        let rotated_spec = TranslationModelSpec::new(
            DenseVector::new(q.mat_vec(spec.mu_v().as_slice()).unwrap()).unwrap(),
            DenseVector::new(q.mat_vec(spec.gap().as_slice()).unwrap()).unwrap(),
            spec.sigma(),
        ).unwrap();
        // ΔW → Q ΔW Qᵀ: B → Q B, A → A Qᵀ.
        let qb = q.matmul(&b).unwrap();
        let aqt = a.matmul(&q.transpose()).unwrap();
        let l0 = expected_loss(&spec, &AdapterPair::new(b, a, 2.0).unwrap()).unwrap();
        let l1 = expected_loss(&rotated_spec, &AdapterPair::new(qb, aqt, 2.0).unwrap()).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-9 * l0.max(1.0));
    }

    #[test]
    fn gradient_descent_training_is_rotation_equivariant(seed in any::<u64>()) {
        let d = 6;
        let mut rng = Rng::new(seed);
        let xv = common::random_matrix(12, d, false, &mut rng);
        let xt = common::random_matrix(12, d, false, &mut rng);
        let q = random_orthogonal(d, &mut rng);
        let init = AdapterPair::new(common::random_matrix(d, 1, false, &mut rng), DenseMatrix::zeros(1, d).unwrap(), 2.0).unwrap();
        let cfg = TrainConfig { learning_rate: 1e-2, steps: 30, batch_size: 5, optimizer: Optimizer::GradientDescent, seed: 3 };
        let (plain, _) = train(&init, &TrainingData::Pairs(Batch::new(xv.clone(), xt.clone()).unwrap()), &cfg, None).unwrap();
        let rinit = AdapterPair::new(q.matmul(init.b()).unwrap(), DenseMatrix::zeros(1, d).unwrap(), 2.0).unwrap();
        let rdata = TrainingData::Pairs(Batch::new(rotate_rows(&xv, &q), rotate_rows(&xt, &q)).unwrap());
        let (rot, _) = train(&rinit, &rdata, &cfg, None).unwrap();
        let expected = q.matmul(&plain.delta_w().unwrap()).unwrap().matmul(&q.transpose()).unwrap();
        let got = rot.delta_w().unwrap();
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn spectrum_is_row_permutation_invariant(seed in any::<u64>(), n in 1usize..10, d in 1usize..6) {
        let mut rng = Rng::new(seed);
        let g = common::random_matrix(n, d, false, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let a = gap_spectrum(&g).unwrap();
        let b = gap_spectrum(&g.select_rows(&order)).unwrap();
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            prop_assert!((x - y).abs() <= 1e-9 * a.singular_values[0].max(1.0));
        }
    }

    #[test]
    fn layer_score_is_invariant_to_shared_translation(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = Rng::new(seed);
        let hv = common::random_matrix(10, 3, false, &mut rng);
        let ht = common::random_matrix(10, 3, false, &mut rng);
        let c = [shift, -shift, 0.5 * shift];
        let move_by = |m: &DenseMatrix| m.map_rows(|r| r.iter().zip(&c).map(|(x, y)| x + y).collect()).unwrap();
        let p = SpotGapParams { k: 3, ..Default::default() };
        let a = spot_gap_score(&hv, &ht, &p).unwrap().layer_score;
        let b = spot_gap_score(&move_by(&hv), &move_by(&ht), &p).unwrap().layer_score;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn gap_estimation_is_pure(seed in any::<u64>(), smoothing in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let spec = SyntheticStackSpec::planted(4, 3, &[1], 2.0, 0.5, 0.2, &mut rng).unwrap();
        let acts = generate_stack(&spec, 12, &rng).unwrap();
        let p = SpotGapParams { k: 3, ..Default::default() };
        prop_assert_eq!(estimate_layer_gaps(&acts, &p, smoothing).unwrap(), estimate_layer_gaps(&acts, &p, smoothing).unwrap());
        let raw = sample_projected_gaps(&acts[0].h_t, &acts[0].h_v).unwrap();
        prop_assert_eq!(raw.rows(), 12);
    }

    #[test]
    fn csv_round_trips_floats(xs in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..20)) {
        let mut t = CsvTable::new(["i", "x"]);
        for (i, &x) in xs.iter().enumerate() {
            t.push(vec![i.into(), x.into()]);
        }
        let back = CsvTable::parse(&t.to_csv_string()).unwrap();
        for (row, &x) in back.rows().iter().zip(&xs) {
            prop_assert_eq!(row[1].as_f64().unwrap().to_bits(), x.to_bits());
        }
        prop_assert_eq!(Cell::Float(xs[0]).as_f64(), Some(xs[0]));
    }

    #[test]
    fn unknown_config_keys_are_rejected(key in "[a-z][a-z_]{0,12}") {
        let known = [
            "experiment", "seed", "output_dir", "dims", "n_samples", "eps_list", "bins", "d", "sigma", "gap_norm",
            "mu_norm", "seeds", "n_steps", "lr", "batch_size", "rank", "alpha", "init", "init_eps",
            "random_convention", "optimizer", "gaps_file", "gap_layer", "calib_size", "num_layers",
            "planted_layers", "high_gap_norm", "base_gap_norm", "k_neighbors", "alpha_sem", "alpha_geom",
            "anchor", "smoothing", "safety_margin", "top_k_layers", "shuffle_fraction", "mode", "calib_sizes",
            "trials", "mix_list", "ood", "ood_sigma",
        ];
        prop_assume!(!known.contains(&key.as_str()));
        let err = ExperimentConfig::parse(&format!("{key} = 1\n"), Command::Spectrum).unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
        let needle = format!("`{}`", key);
        prop_assert!(err.to_string().contains(&needle));
    }
}
