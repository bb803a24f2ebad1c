use super::*;
use crate::geometry::cosine;
use crate::toy_model::{expected_loss, sample_pairs, TranslationModelSpec};

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::new(rows, cols, rng.normal_vec(rows * cols)).unwrap()
}

fn random_instance(d: usize, k: usize, r: usize, n: usize, rng: &mut Rng) -> (AdapterPair, BaseWeight, Batch) {
    let adapter = AdapterPair::new(random_matrix(d, r, rng), random_matrix(r, k, rng), 1.0 + rng.uniform()).unwrap();
    let base = BaseWeight::Dense(random_matrix(d, k, rng));
    let batch = Batch::new(random_matrix(n, k, rng), random_matrix(n, d, rng)).unwrap();
    (adapter, base, batch)
}

#[test]
fn initializers_leave_zero_update() {
    let mut rng = Rng::new(1);
    let gap = DenseVector::new(rng.normal_vec(6)).unwrap();
    let w0 = random_matrix(6, 4, &mut rng);
    let inits = [
        random_init(6, 4, 2, 4.0, &mut rng).unwrap(),
        random_init_with(6, 4, 2, 4.0, RandomInitConvention::GaussianA, &mut rng).unwrap(),
        gap_init(6, 4, 3, 6.0, &gap, &mut rng).unwrap(),
        noisy_gap_init(6, 4, 1, 2.0, &gap, 0.6, &mut rng).unwrap(),
    ];
    for adapter in &inits {
        assert!(adapter.delta_w().unwrap().is_zero());
        for _ in 0..20 {
            let x = DenseVector::new(rng.normal_vec(4)).unwrap();
            let h = forward(adapter, &w0, &x).unwrap();
            let frozen = w0.mat_vec(x.as_slice()).unwrap();
            for (a, b) in h.as_slice().iter().zip(&frozen) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

#[test]
fn random_init_is_deterministic_and_normalized() {
    let a = random_init(10, 8, 4, 8.0, &mut Rng::new(5)).unwrap();
    let b = random_init(10, 8, 4, 8.0, &mut Rng::new(5)).unwrap();
    assert_eq!(a, b);
    for c in 0..4 {
        assert!((a.b().column(c).norm() - 1.0).abs() < 1e-12);
    }
    assert!(a.a().is_zero());
    assert!(matches!(
        random_init(3, 8, 4, 8.0, &mut Rng::new(5)),
        Err(LabError::Rank { rank: 4, max: 3 })
    ));
}

#[test]
fn gap_init_contract() {
    let mut rng = Rng::new(2);
    let gap = DenseVector::new(rng.normal_vec(12)).unwrap();
    let adapter = gap_init(12, 12, 4, 8.0, &gap, &mut rng).unwrap();
    assert!((cosine(&adapter.b().column(0), &gap).unwrap() - 1.0).abs() < 1e-15);
    for c in 1..4 {
        assert!((adapter.b().column(c).norm() - 1.0).abs() < 1e-12);
    }
    assert!(adapter.a().is_zero());
    assert!(adapter.delta_w().unwrap().is_zero());

    let zero = DenseVector::zeros(12).unwrap();
    assert!(matches!(gap_init(12, 12, 1, 2.0, &zero, &mut rng), Err(LabError::DegenerateVector(_))));
    let short = DenseVector::new(vec![1.0; 5]).unwrap();
    assert!(gap_init(12, 12, 1, 2.0, &short, &mut rng).is_err());
}

#[test]
fn gap_init_from_estimated_gap_is_well_aligned() {
    // d = 100, σ = 0.1, 256 calibration pairs: estimator error σ√(2d/N) ≈ 0.088,
    // so cos(ĝ, g) ≈ 1/√(1 + 0.0078) ≈ 0.996 for unit g.
    let mut rng = Rng::new(3);
    let spec = TranslationModelSpec::random(100, 1.0, 1.0, 0.1, &mut rng).unwrap();
    for _ in 0..20 {
        let (xv, xt) = sample_pairs(&spec, 256, &mut rng).unwrap();
        let est = crate::geometry::mean_vector(&xt)
            .unwrap()
            .sub(&crate::geometry::mean_vector(&xv).unwrap())
            .unwrap();
        let adapter = gap_init(100, 100, 1, 2.0, &est, &mut rng).unwrap();
        assert!(cosine(&adapter.b().column(0), spec.gap()).unwrap() >= 0.97);
    }
}

#[test]
fn noisy_gap_init_zero_eps_is_clean() {
    let gap = DenseVector::new(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
    let clean = gap_init(4, 4, 3, 6.0, &gap, &mut Rng::new(9)).unwrap();
    let noisy = noisy_gap_init(4, 4, 3, 6.0, &gap, 0.0, &mut Rng::new(9)).unwrap();
    assert_eq!(clean, noisy);
    assert!(noisy_gap_init(4, 4, 1, 2.0, &gap, -0.1, &mut Rng::new(9)).is_err());
}

#[test]
fn noisy_gap_alignment_matches_closed_form() {
    // E[cos(normalize(g + εη), ĝ)] ≈ ‖g‖/√(‖g‖² + dε²).
    let d = 2560;
    let mut rng = Rng::new(4);
    let gap = crate::geometry::sample_unit_sphere(d, &mut rng).unwrap();
    let trials = 400;
    let cosines: Vec<f64> = (0..trials)
        .map(|_| {
            let a = noisy_gap_init(d, 1, 1, 2.0, &gap, 1.0, &mut rng).unwrap();
            cosine(&a.b().column(0), &gap).unwrap()
        })
        .collect();
    let mean = cosines.iter().sum::<f64>() / trials as f64;
    let expected = 1.0 / (1.0 + d as f64).sqrt();
    assert!((expected - 0.0198).abs() < 1e-4);
    let se = crate::stats::standard_error(&cosines).unwrap();
    assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected} (se {se})");
}

#[test]
fn forward_examples() {
    let e1 = DenseMatrix::new(2, 1, vec![1., 0.]).unwrap();
    let e1t = DenseMatrix::new(1, 2, vec![1., 0.]).unwrap();
    let adapter = AdapterPair::new(e1, e1t, 1.0).unwrap();
    let x = DenseVector::new(vec![1., 0.]).unwrap();
    let h = forward(&adapter, &DenseMatrix::identity(2).unwrap(), &x).unwrap();
    assert_eq!(h.as_slice(), &[2., 0.]);
    assert!(forward(&adapter, &DenseMatrix::identity(3).unwrap(), &x).is_err());
}

#[test]
fn factored_forward_matches_materialized() {
    let mut rng = Rng::new(6);
    for _ in 0..50 {
        let (d, k, r) = (2 + rng.below(10), 2 + rng.below(10), 1 + rng.below(2));
        let (adapter, base, _) = random_instance(d, k, r, 1, &mut rng);
        let BaseWeight::Dense(w0) = base else { unreachable!() };
        let x = DenseVector::new(rng.normal_vec(k)).unwrap();
        let h = forward(&adapter, &w0, &x).unwrap();
        let dw = adapter.delta_w().unwrap();
        for i in 0..d {
            let want: f64 = (0..k).map(|j| (w0.get(i, j) + dw.get(i, j)) * x[j]).sum();
            assert!((h[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = Rng::new(7);
    let (adapter, base, batch) = random_instance(8, 8, 1, 5, &mut rng);
    let err = finite_difference_check(&adapter, &base, &batch, 1e-5).unwrap();
    assert!(err < 1e-6, "max relative error {err}");
    for r in [2, 4] {
        let (adapter, base, batch) = random_instance(9, 6, r, 4, &mut rng);
        let err = finite_difference_check(&adapter, &base, &batch, 1e-4).unwrap();
        assert!(err < 1e-6, "rank {r}: {err}");
    }
}

#[test]
fn finite_difference_negative_control() {
    let mut rng = Rng::new(8);
    let (adapter, base, batch) = random_instance(5, 4, 2, 6, &mut rng);
    let (_, mut grads) = loss_and_grads(&adapter, &base, &batch).unwrap();
    grads.d_a = DenseMatrix::new(
        grads.d_a.rows(),
        grads.d_a.cols(),
        grads.d_a.as_slice().iter().map(|g| 2.0 * g).collect(),
    )
    .unwrap();
    let err = finite_difference_check_against(&adapter, &base, &batch, 1e-5, &grads).unwrap();
    assert!((err - 0.5).abs() < 1e-6, "{err}");
    assert!(finite_difference_check(&adapter, &base, &batch, 0.1).is_err());
}

#[test]
fn zero_residual_has_zero_gradient() {
    let mut rng = Rng::new(9);
    let (adapter, base, batch) = random_instance(4, 3, 1, 5, &mut rng);
    let BaseWeight::Dense(w0) = &base else { unreachable!() };
    let rows: Vec<DenseVector> = batch
        .inputs
        .row_iter()
        .map(|x| forward(&adapter, w0, &DenseVector::new(x.to_vec()).unwrap()).unwrap())
        .collect();
    let targets = DenseMatrix::from_rows(&rows).unwrap();
    let exact = Batch::new(batch.inputs.clone(), targets).unwrap();
    let (loss, grads) = loss_and_grads(&adapter, &base, &exact).unwrap();
    assert!(loss < 1e-28);
    assert!(grads.d_a.frobenius_norm() < 1e-13 && grads.d_b.frobenius_norm() < 1e-13);
    assert!(finite_difference_check(&adapter, &base, &exact, 1e-5).unwrap() < 1e-4);
}

#[test]
fn first_step_projects_onto_direction() {
    // With A = 0, dB = 0 and dA = (2s/N) Σ ⟨b, r_i⟩ x_iᵀ.
    let mut rng = Rng::new(10);
    let d = 16;
    let spec = TranslationModelSpec::random(d, 1.0, 1.0, 0.2, &mut rng).unwrap();
    let adapter = gap_init(d, d, 1, 2.0, spec.gap(), &mut rng).unwrap();
    let (xv, xt) = sample_pairs(&spec, 32, &mut rng).unwrap();
    let batch = Batch::new(xv.clone(), xt.clone()).unwrap();
    let (_, grads) = loss_and_grads(&adapter, &BaseWeight::Identity, &batch).unwrap();
    assert!(grads.d_b.is_zero());
    let b = adapter.b().column(0);
    let mut want = vec![0.0; d];
    for (x, y) in xv.row_iter().zip(xt.row_iter()) {
        let res: Vec<f64> = x.iter().zip(y).map(|(a, c)| a - c).collect();
        let proj = dot(b.as_slice(), &res);
        axpy(proj, x, &mut want);
    }
    let factor = 2.0 * adapter.scale() / 32.0;
    for (g, w) in grads.d_a.as_slice().iter().zip(&want) {
        assert!((g - factor * w).abs() < 1e-12);
    }
}

#[test]
fn exact_cancellation_is_stationary() {
    let spec = TranslationModelSpec::new(
        DenseVector::new(vec![1., 0., 0.]).unwrap(),
        DenseVector::new(vec![0., 2., 0.]).unwrap(),
        0.0,
    )
    .unwrap();
    let b = DenseMatrix::new(3, 1, vec![0., 1., 0.]).unwrap();
    let a = DenseMatrix::new(1, 3, vec![1., 0., 0.]).unwrap();
    let adapter = AdapterPair::new(b, a, 2.0).unwrap();
    let (xv, xt) = sample_pairs(&spec, 4, &mut Rng::new(0)).unwrap();
    let (loss, grads) = loss_and_grads(&adapter, &BaseWeight::Identity, &Batch::new(xv, xt).unwrap()).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.d_a.is_zero() && grads.d_b.is_zero());
    assert_eq!(expected_loss(&spec, &adapter).unwrap(), 0.0);
}

#[test]
fn empty_batch_is_rejected() {
    let adapter = random_init(3, 3, 1, 2.0, &mut Rng::new(0)).unwrap();
    let empty = Batch::new(DenseMatrix::zeros(0, 3).unwrap(), DenseMatrix::zeros(0, 3).unwrap()).unwrap();
    assert!(matches!(
        loss_and_grads(&adapter, &BaseWeight::Identity, &empty),
        Err(LabError::EmptyInput(_))
    ));
}

#[test]
fn leading_direction_of_higher_rank_update() {
    let mut rng = Rng::new(12);
    let b = random_matrix(7, 3, &mut rng);
    let a = random_matrix(3, 5, &mut rng);
    let adapter = AdapterPair::new(b, a, 6.0).unwrap();
    let u = adapter.leading_direction().unwrap();
    let dw = adapter.delta_w().unwrap();
    let svd = nalgebra::DMatrix::from_row_slice(7, 5, dw.as_slice()).svd(true, false);
    let (imax, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let reference: Vec<f64> = svd.u.unwrap().column(imax).iter().copied().collect();
    assert!((dot(&u, &reference).abs() - 1.0).abs() < 1e-9);
}

#[test]
fn training_with_zero_steps_is_identity() {
    let mut rng = Rng::new(13);
    let spec = TranslationModelSpec::random(8, 1.0, 1.0, 0.1, &mut rng).unwrap();
    let adapter = gap_init(8, 8, 1, 2.0, spec.gap(), &mut rng).unwrap();
    let cfg = TrainConfig { steps: 0, ..TrainConfig::default() };
    let (out, trace) = train(&adapter, &TrainingData::Model(spec.clone()), &cfg, Some(spec.gap())).unwrap();
    assert_eq!(out, adapter);
    assert!(trace.losses.is_empty() && trace.alignment.is_empty());
}

#[test]
fn training_is_seed_deterministic() {
    let mut rng = Rng::new(14);
    let spec = TranslationModelSpec::random(16, 1.0, 1.0, 0.1, &mut rng).unwrap();
    let adapter = random_init(16, 16, 1, 2.0, &mut rng).unwrap();
    let cfg = TrainConfig { steps: 50, ..TrainConfig::default() };
    let data = TrainingData::Model(spec.clone());
    let (a1, t1) = train(&adapter, &data, &cfg, Some(spec.gap())).unwrap();
    let (a2, t2) = train(&adapter, &data, &cfg, Some(spec.gap())).unwrap();
    assert_eq!(a1, a2);
    assert_eq!(
        t1.losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        t2.losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(t1.losses.len(), 50);
    assert_eq!(t1.alignment.len(), 50);
}

#[test]
fn divergence_reports_step() {
    let mut rng = Rng::new(15);
    let spec = TranslationModelSpec::random(8, 3.0, 1.0, 0.5, &mut rng).unwrap();
    let adapter = gap_init(8, 8, 1, 2.0, spec.gap(), &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 10.0,
        steps: 500,
        optimizer: Optimizer::GradientDescent,
        ..TrainConfig::default()
    };
    match train(&adapter, &TrainingData::Model(spec), &cfg, None) {
        Err(LabError::Divergence { step, .. }) => assert!(step > 0 && step < 500),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn gap_init_converges_without_noise() {
    let mut rng = Rng::new(16);
    let d = 64;
    let spec = TranslationModelSpec::random(d, 1.0, 1.0, 0.0, &mut rng).unwrap();
    let adapter = gap_init(d, d, 1, 2.0, spec.gap(), &mut rng).unwrap();
    let cfg = TrainConfig { steps: 2000, batch_size: 16, ..TrainConfig::default() };
    let (out, trace) = train(&adapter, &TrainingData::Model(spec.clone()), &cfg, Some(spec.gap())).unwrap();
    let final_loss = expected_loss(&spec, &out).unwrap();
    assert!(final_loss < 1e-6, "final loss {final_loss}");
    assert!(*trace.alignment.last().unwrap() > 0.999);
}

#[test]
fn checkpoint_round_trip_and_validation() {
    let mut rng = Rng::new(17);
    let adapter = AdapterPair::new(random_matrix(5, 2, &mut rng), random_matrix(2, 3, &mut rng), 4.0).unwrap();
    let text = to_json(&adapter);
    let back = from_json(&text, "mem").unwrap();
    assert_eq!(back, adapter);
    for (x, y) in back.b().as_slice().iter().zip(adapter.b().as_slice()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let bad_rank = text.replacen("\"rank\":2", "\"rank\":3", 1);
    match from_json(&bad_rank, "mem") {
        Err(LabError::Parse { context, .. }) => assert!(context.contains("rank") || context.contains("B")),
        other => panic!("expected parse error, got {other:?}"),
    }
    match from_json("{\"schema_version\": 1,\n \"d\": oops}", "mem") {
        Err(LabError::Parse { context, .. }) => assert!(context.contains("line 2")),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(from_json(&text.replacen("\"schema_version\":1", "\"schema_version\":2", 1), "mem").is_err());
}
