use rayon::prelude::*;

use crate::adapter::{
    batch_loss, default_alpha, gap_init, noisy_gap_init, random_init_with, to_json, train as run_training,
    AdapterPair, BaseWeight, Batch, Optimizer, RandomInitConvention, TrainConfig, TrainingData,
};
use crate::calibration::{
    calibration_size_sweep, composition_sweep, estimate_gap, estimate_layer_gaps, gaps_to_json,
    generate_stack_weakly_paired, load_gap_estimates, SyntheticStackSpec, DEFAULT_CALIBRATION_SIZE,
    DEFAULT_CALIBRATION_SIZES, DEFAULT_NUM_LAYERS, DEFAULT_PLANTED_LAYERS,
};
use crate::error::{LabError, Result};
use crate::geometry::{
    cone_concentration, cosine, gap_spectrum, mean_vector, normalize, random_cosines, sample_projected_gaps,
    sample_unit_sphere, Histogram, DEFAULT_BINS,
};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rng::{mix_seed, Rng};
use crate::spot_gap::{gg_safe_select, spot_gap_score, SpotGapParams, DEFAULT_K};
use crate::stats::{beta_cdf, ks_statistic, loglog_slope, mean_std};
use crate::toy_model::{expected_abs_cos, sample_pairs, suppression_sweep, TranslationModelSpec, DEFAULT_SWEEP_DIMS};

use super::config::{AblationMode, ConventionName, ExperimentConfig, InitMode, OodKind, OptimizerName};
use super::svg::{LinePlot, Series};
use super::table::CsvTable;
use super::{Outputs, RunOutcome, DEFAULT_SAFETY_MARGIN, DEFAULT_SEEDS, DEFAULT_TOP_K_LAYERS, DEFAULT_TRAIN_DIM};

pub const DEFAULT_SUPPRESSION_SAMPLES: usize = 20_000;
pub const DEFAULT_CONCENTRATION_DIMS: [usize; 4] = [64, 256, 1024, 4096];
pub const DEFAULT_CONCENTRATION_SAMPLES: usize = 100_000;
pub const DEFAULT_EPS_GRID: [f64; 3] = [0.02, 0.05, 0.1];
pub const DEFAULT_NOISE_EPS: [f64; 4] = [0.0, 0.2, 0.6, 1.0];
pub const DEFAULT_MIX_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_NOISY_INIT_EPS: f64 = 0.2;

fn done(outputs: Outputs) -> Result<RunOutcome> {
    Ok(RunOutcome {
        outputs,
        deferred_error: None,
    })
}

fn points(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    xs.into_iter().zip(ys).collect()
}

pub fn suppression(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let dims = cfg.dims.clone().unwrap_or_else(|| DEFAULT_SWEEP_DIMS.to_vec());
    let n = cfg.n_samples.unwrap_or(DEFAULT_SUPPRESSION_SAMPLES);
    let curve = suppression_sweep(&dims, n, &Rng::new(seed))?;
    let (rs, gs) = (curve.random_slope()?, curve.gapinit_slope()?);

    let mut t = CsvTable::new(["d", "mean_abs_cos_random", "mean_abs_cos_gapinit"]);
    for (i, &d) in dims.iter().enumerate() {
        t.push(vec![
            d.into(),
            curve.mean_abs_cos_random[i].into(),
            curve.mean_abs_cos_gapinit[i].into(),
        ]);
    }
    t.push(vec!["slope".into(), rs.into(), gs.into()]);

    let xs = || dims.iter().map(|&d| d as f64);
    let plot = LinePlot {
        title: "Mean |cos(b, gap)| versus dimension".into(),
        x_label: "d".into(),
        y_label: "mean |cos|".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::new("random b", points(xs(), curve.mean_abs_cos_random.iter().copied())),
            Series::new("gap-aligned b", points(xs(), curve.mean_abs_cos_gapinit.iter().copied())),
            Series::new("E|cos| closed form", points(xs(), dims.iter().map(|&d| expected_abs_cos(d)))),
        ],
        notes: vec![format!("fitted slope (random) = {rs:.4}")],
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.table("suppression.csv", &t);
    out.add("suppression.svg", plot.render());
    done(out)
}

pub fn concentration(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let dims = cfg.dims.clone().unwrap_or_else(|| DEFAULT_CONCENTRATION_DIMS.to_vec());
    let n = cfg.n_samples.unwrap_or(DEFAULT_CONCENTRATION_SAMPLES);
    let eps_list = cfg.eps_list.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    let bins = cfg.bins.unwrap_or(DEFAULT_BINS);
    let root = Rng::new(seed);

    let mut t = CsvTable::new([
        "d",
        "eps",
        "empirical_tail",
        "bound",
        "mean_cos2",
        "one_over_d",
        "ks_stat_vs_beta",
        "tail_se",
    ]);
    let mut series = Vec::new();
    for (i, &d) in dims.iter().enumerate() {
        let cos = random_cosines(d, n, &root.child(i as u64))?;
        let sq: Vec<f64> = cos.iter().map(|c| c * c).collect();
        let mean_cos2 = sq.iter().sum::<f64>() / n as f64;
        let b = (d as f64 - 1.0) / 2.0;
        let ks = ks_statistic(&sq, |x| beta_cdf(x, 0.5, b))?;
        for &eps in &eps_list {
            let hits = cos.iter().filter(|c| c.abs() >= eps).count();
            let p = hits as f64 / n as f64;
            let bound = 2.0 * (-(d as f64 - 1.0) * eps * eps / 2.0).exp();
            t.push(vec![
                d.into(),
                eps.into(),
                p.into(),
                bound.into(),
                mean_cos2.into(),
                (1.0 / d as f64).into(),
                ks.into(),
                (p * (1.0 - p) / n as f64).sqrt().into(),
            ]);
        }
        let mut h = Histogram::new(-1.0, 1.0, bins)?;
        cos.iter().for_each(|&c| h.add(c));
        let scale = 1.0 / (n as f64 * h.bin_width());
        series.push(Series::new(
            format!("d = {d}"),
            (0..bins).map(|j| (h.bin_center(j), h.counts[j] as f64 * scale)).collect(),
        ));
    }
    let plot = LinePlot {
        title: "Cosine between independent random directions".into(),
        x_label: "cos(u, b)".into(),
        y_label: "density".into(),
        series,
        markers: vec![(1.0, "gap-aligned init".into())],
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.table("concentration.csv", &t);
    out.add("histogram.svg", plot.render());
    done(out)
}

struct ToyDefaults {
    d: usize,
    sigma: f64,
    n: usize,
}

fn toy_spec(cfg: &ExperimentConfig, def: ToyDefaults, rng: &mut Rng) -> Result<(TranslationModelSpec, usize)> {
    let d = cfg.d.unwrap_or(def.d);
    let spec = TranslationModelSpec::random(
        d,
        cfg.mu_norm.unwrap_or(1.0),
        cfg.gap_norm.unwrap_or(1.0),
        cfg.sigma.unwrap_or(def.sigma),
        rng,
    )?;
    Ok((spec, cfg.n_samples.unwrap_or(def.n)))
}

pub fn spectrum(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let root = Rng::new(seed);
    let (spec, n) = toy_spec(cfg, ToyDefaults { d: 100, sigma: 0.05, n: 4000 }, &mut root.child(0))?;
    let (xv, xt) = sample_pairs(&spec, n, &mut root.child(1))?;
    let rep = gap_spectrum(&sample_projected_gaps(&xt, &xv)?)?;

    let mut t = CsvTable::new(["component", "singular_value", "explained_fraction", "cumulative_fraction"]);
    let mut cum = 0.0;
    for (i, (s, f)) in rep.singular_values.iter().zip(&rep.explained_fraction).enumerate() {
        cum += f;
        t.push(vec![(i + 1).into(), (*s).into(), (*f).into(), cum.into()]);
    }
    // Top share predicted by E[GᵀG]/N = g gᵀ + 2σ² I.
    let (g2, s2) = (spec.gap().norm().powi(2), 2.0 * spec.sigma().powi(2));
    let oracle = (g2 + s2) / (g2 + s2 * spec.d() as f64);
    t.push(vec!["oracle_top_fraction".into(), "".into(), oracle.into(), "".into()]);

    let shown = rep.explained_fraction.len().min(100);
    let plot = LinePlot {
        title: "Energy spectrum of per-pair gap vectors".into(),
        x_label: "component".into(),
        y_label: "explained fraction".into(),
        log_y: true,
        series: vec![Series::new(
            "explained fraction",
            points((1..=shown).map(|i| i as f64), rep.explained_fraction[..shown].iter().copied()),
        )],
        notes: vec![format!("top fraction = {:.4}", rep.explained_fraction[0])],
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.table("spectrum.csv", &t);
    out.add("spectrum.svg", plot.render());
    done(out)
}

fn shifted(m: &DenseMatrix, by: &DenseVector) -> Result<DenseMatrix> {
    let c = by.as_slice();
    m.map_rows(|row| row.iter().zip(c).map(|(x, y)| x - y).collect())
}

pub fn cone(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let root = Rng::new(seed);
    let (spec, n) = toy_spec(cfg, ToyDefaults { d: 256, sigma: 0.05, n: 2000 }, &mut root.child(0))?;
    let bins = cfg.bins.unwrap_or(DEFAULT_BINS);
    let (xv, xt) = sample_pairs(&spec, n, &mut root.child(1))?;
    let global = mean_vector(&xv.vstack(&xt)?)?;

    let mut summary = CsvTable::new(["modality", "variant", "mean_cos", "std_cos", "n"]);
    let mut hist = CsvTable::new(["modality", "variant", "bin_center", "count"]);
    let mut series = Vec::new();
    for (modality, emb) in [("visual", &xv), ("text", &xt)] {
        let mean = mean_vector(emb)?;
        let variants = [
            ("raw", emb.clone(), mean.clone()),
            ("global-centered", shifted(emb, &global)?, mean.sub(&global)?),
        ];
        for (variant, rows, reference) in variants {
            let c = cone_concentration(&rows, &reference, bins)?;
            summary.push(vec![modality.into(), variant.into(), c.mean_cos.into(), c.std_cos.into(), n.into()]);
            for (j, &count) in c.histogram.counts.iter().enumerate() {
                hist.push(vec![
                    modality.into(),
                    variant.into(),
                    c.histogram.bin_center(j).into(),
                    (count as usize).into(),
                ]);
            }
            series.push(Series::new(
                format!("{modality} {variant}"),
                (0..bins)
                    .map(|j| (c.histogram.bin_center(j), c.histogram.counts[j] as f64 / n as f64))
                    .collect(),
            ));
        }
    }
    let plot = LinePlot {
        title: "Cosine to the modality mean direction".into(),
        x_label: "cos".into(),
        y_label: "fraction of samples".into(),
        series,
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.table("cone.csv", &summary);
    out.table("cone_histogram.csv", &hist);
    out.add("cone.svg", plot.render());
    done(out)
}

pub fn calibrate(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let root = Rng::new(seed);
    let layers = cfg.num_layers.unwrap_or(DEFAULT_NUM_LAYERS);
    let planted = cfg.planted_layers.clone().unwrap_or_else(|| DEFAULT_PLANTED_LAYERS.to_vec());
    let spec = SyntheticStackSpec::planted(
        cfg.d.unwrap_or(64),
        layers,
        &planted,
        cfg.high_gap_norm.unwrap_or(2.0),
        cfg.base_gap_norm.unwrap_or(0.5),
        cfg.sigma.unwrap_or(0.1),
        &mut root.child(0),
    )?;
    let n = cfg.n_samples.unwrap_or(DEFAULT_CALIBRATION_SIZE);
    let acts = generate_stack_weakly_paired(&spec, n, cfg.shuffle_fraction.unwrap_or(0.0), &root.child(1))?;
    let params = SpotGapParams {
        k: cfg.k_neighbors.unwrap_or(DEFAULT_K),
        alpha_sem: cfg.alpha_sem.unwrap_or(1.0),
        alpha_geom: cfg.alpha_geom.unwrap_or(1.0),
        anchor: cfg.anchor.unwrap_or_default(),
    };
    let estimates = estimate_layer_gaps(&acts, &params, cfg.smoothing.unwrap_or(true))?;
    let scoring = params.clipped_to(n);
    if n < 2 {
        return Err(LabError::config("n_samples", "layer scores need at least 2 samples"));
    }
    let scores: Vec<f64> = acts
        .par_iter()
        .map(|a| Ok(spot_gap_score(&a.h_v, &a.h_t, &scoring)?.layer_score))
        .collect::<Result<_>>()?;
    let sel = gg_safe_select(
        &scores,
        cfg.safety_margin.unwrap_or(DEFAULT_SAFETY_MARGIN),
        cfg.top_k_layers.unwrap_or(DEFAULT_TOP_K_LAYERS),
    )?;

    let mut t = CsvTable::new(["layer", "score", "selected", "gap_norm_hat", "planted"]);
    for (l, est) in estimates.iter().enumerate() {
        t.push(vec![
            l.into(),
            scores[l].into(),
            usize::from(sel.selected.contains(&l)).into(),
            est.raw_norm.into(),
            usize::from(planted.contains(&l)).into(),
        ]);
    }
    let plot = LinePlot {
        title: "Layer gap scores".into(),
        x_label: "layer".into(),
        y_label: "score".into(),
        series: vec![Series::new("score", points((0..layers).map(|l| l as f64), scores.iter().copied()))],
        notes: vec![format!("selected layers: {:?}", sel.selected)],
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.add("gaps.json", gaps_to_json(&estimates)?);
    out.table("layer_scores.csv", &t);
    out.add("layer_scores.svg", plot.render());
    done(out)
}

struct TrainSetup {
    spec: TranslationModelSpec,
    data: Batch,
    rank: usize,
    alpha: f64,
    train: TrainConfig,
}

fn train_setup(cfg: &ExperimentConfig, root: &Rng) -> Result<TrainSetup> {
    let (spec, n) = toy_spec(
        cfg,
        ToyDefaults { d: DEFAULT_TRAIN_DIM, sigma: 0.1, n: 1024 },
        &mut root.child(0),
    )?;
    let (xv, xt) = sample_pairs(&spec, n, &mut root.child(1))?;
    let rank = cfg.rank.unwrap_or(1);
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        learning_rate: cfg.lr.unwrap_or(defaults.learning_rate),
        steps: cfg.n_steps.unwrap_or(defaults.steps),
        batch_size: cfg.batch_size.unwrap_or(defaults.batch_size),
        optimizer: match cfg.optimizer.unwrap_or(OptimizerName::Adam) {
            OptimizerName::Adam => Optimizer::adam(),
            OptimizerName::Gd => Optimizer::GradientDescent,
        },
        seed: 0,
    };
    Ok(TrainSetup {
        data: Batch::new(xv, xt)?,
        alpha: cfg.alpha.unwrap_or_else(|| default_alpha(rank)),
        rank,
        spec,
        train,
    })
}

struct RunResult {
    adapter: AdapterPair,
    losses: Vec<f64>,
    alignment: Vec<f64>,
    final_loss: f64,
    init_alignment: f64,
}

fn direction_alignment(adapter: &AdapterPair, gap: &DenseVector) -> f64 {
    // While ΔW = 0 the direction is the first column of B.
    let dir = match adapter.leading_direction() {
        Some(u) => DenseVector::new(u).ok(),
        None => Some(adapter.b().column(0)),
    };
    dir.and_then(|u| cosine(&u, gap).ok()).map_or(0.0, f64::abs)
}

fn train_one(setup: &TrainSetup, init: AdapterPair, train_seed: u64) -> Result<RunResult> {
    let init_alignment = direction_alignment(&init, setup.spec.gap());
    let cfg = TrainConfig {
        seed: train_seed,
        ..setup.train.clone()
    };
    let (adapter, trace) = run_training(&init, &TrainingData::Pairs(setup.data.clone()), &cfg, Some(setup.spec.gap()))?;
    let final_loss = batch_loss(&adapter, &BaseWeight::Identity, &setup.data)?;
    Ok(RunResult {
        adapter,
        losses: trace.losses,
        alignment: trace.alignment,
        final_loss,
        init_alignment,
    })
}

fn gap_direction(cfg: &ExperimentConfig, setup: &TrainSetup, root: &Rng) -> Result<DenseVector> {
    let d = setup.spec.d();
    match &cfg.gaps_file {
        Some(path) => {
            let estimates = load_gap_estimates(path)?;
            let layer = cfg.gap_layer.unwrap_or(0);
            let est = estimates
                .iter()
                .find(|e| e.layer == layer)
                .ok_or_else(|| LabError::config("gap_layer", format!("layer {layer} not in {}", path.display())))?;
            if est.g_hat.dim() != d {
                return Err(LabError::config(
                    "gaps_file",
                    format!("gap has dim {} but d = {d}", est.g_hat.dim()),
                ));
            }
            Ok(est.g_hat.clone())
        }
        None => estimate_gap(
            &setup.spec,
            cfg.calib_size.unwrap_or(DEFAULT_CALIBRATION_SIZE),
            &mut root.child(2),
        ),
    }
}

pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let root = Rng::new(seed);
    let setup = train_setup(cfg, &root)?;
    let init = cfg.init.unwrap_or(InitMode::Gap);
    let gap = match init {
        InitMode::Random => None,
        _ => Some(gap_direction(cfg, &setup, &root)?),
    };
    let convention = match cfg.random_convention.unwrap_or(ConventionName::DirectionB) {
        ConventionName::DirectionB => RandomInitConvention::DirectionB,
        ConventionName::GaussianA => RandomInitConvention::GaussianA,
    };
    let eps = cfg.init_eps.unwrap_or(DEFAULT_NOISY_INIT_EPS);
    let seeds = cfg.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let d = setup.spec.d();

    let results: Vec<Result<RunResult>> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = Rng::new(s);
            let adapter = match (init, &gap) {
                (InitMode::Random, _) => random_init_with(d, d, setup.rank, setup.alpha, convention, &mut rng)?,
                (InitMode::Gap, Some(g)) => gap_init(d, d, setup.rank, setup.alpha, g, &mut rng)?,
                (InitMode::NoisyGap, Some(g)) => noisy_gap_init(d, d, setup.rank, setup.alpha, g, eps, &mut rng)?,
                _ => unreachable!("gap modes always carry a gap"),
            };
            train_one(&setup, adapter, mix_seed(s, 1))
        })
        .collect();

    let mut trace = CsvTable::new(["seed", "init", "step", "loss", "alignment", "status"]);
    let mut finals = CsvTable::new(["seed", "init", "final_loss", "final_alignment", "status"]);
    let mut out = Outputs::default();
    let mut ok_losses = Vec::new();
    let mut ok_align = Vec::new();
    let mut last_err = None;
    for (&s, r) in seeds.iter().zip(results) {
        match r {
            Ok(run) => {
                for (t, (loss, al)) in run.losses.iter().zip(&run.alignment).enumerate() {
                    trace.push(vec![s.into(), init.name().into(), t.into(), (*loss).into(), (*al).into(), "ok".into()]);
                }
                let final_align = run.alignment.last().copied().unwrap_or(run.init_alignment);
                finals.push(vec![s.into(), init.name().into(), run.final_loss.into(), final_align.into(), "ok".into()]);
                ok_losses.push(run.final_loss);
                ok_align.push(final_align);
                out.add(format!("adapter_seed{s}.json"), to_json(&run.adapter));
            }
            Err(LabError::Divergence { step, loss }) => {
                trace.push(vec![s.into(), init.name().into(), step.into(), loss.into(), "".into(), "diverged".into()]);
                finals.push(vec![s.into(), init.name().into(), loss.into(), "".into(), "diverged".into()]);
                last_err = Some(LabError::Divergence { step, loss });
            }
            Err(e) => return Err(e),
        }
    }
    if !ok_losses.is_empty() && setup.train.steps > 0 {
        let (lm, ls) = mean_std(&ok_losses)?;
        let (am, asd) = mean_std(&ok_align)?;
        let steps = setup.train.steps;
        trace.push(vec!["summary".into(), init.name().into(), steps.into(), lm.into(), am.into(), "mean".into()]);
        trace.push(vec!["summary".into(), init.name().into(), steps.into(), ls.into(), asd.into(), "std".into()]);
    }
    out.table("trace.csv", &trace);
    out.table("final.csv", &finals);
    let deferred_error = if ok_losses.is_empty() { last_err } else { None };
    Ok(RunOutcome { outputs: out, deferred_error })
}

/// Unit gap orthogonal to `g` with the same norm.
fn orthogonal_gap(g: &DenseVector, rng: &mut Rng) -> Result<DenseVector> {
    let gu = normalize(g)?;
    loop {
        let v = sample_unit_sphere(g.dim(), rng)?;
        let w = v.sub(&gu.scaled(v.dot(&gu)?)?)?;
        if w.norm() > 1e-6 {
            return normalize(&w)?.scaled(g.norm());
        }
    }
}

pub fn ablate(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let root = Rng::new(seed);
    let mode = cfg.mode.ok_or_else(|| LabError::config("mode", "required"))?;
    let mut out = Outputs::default();
    match mode {
        AblationMode::CalibSize => {
            let (spec, _) = toy_spec(cfg, ToyDefaults { d: DEFAULT_TRAIN_DIM, sigma: 0.1, n: 0 }, &mut root.child(0))?;
            let sizes = cfg.calib_sizes.clone().unwrap_or_else(|| DEFAULT_CALIBRATION_SIZES.to_vec());
            let rows = calibration_size_sweep(&spec, &sizes, cfg.trials.unwrap_or(20), &root.child(1))?;
            let mut t = CsvTable::new(["size", "mean_relative_error", "mean_cosine"]);
            for r in &rows {
                t.push(vec![r.size.into(), r.mean_relative_error.into(), r.mean_cosine.into()]);
            }
            if rows.len() >= 2 {
                let xs: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.mean_relative_error).collect();
                t.push(vec!["slope".into(), loglog_slope(&xs, &ys)?.into(), "".into()]);
            }
            out.table("ablation.csv", &t);
        }
        AblationMode::Composition => {
            let (spec_in, n) = toy_spec(cfg, ToyDefaults { d: DEFAULT_TRAIN_DIM, sigma: 0.1, n: 1024 }, &mut root.child(0))?;
            if n < 2 {
                return Err(LabError::config("n_samples", "composition needs at least 2 samples"));
            }
            let kind = cfg.ood.unwrap_or(OodKind::Orthogonal);
            let spec_out = match kind {
                OodKind::Orthogonal => TranslationModelSpec::new(
                    spec_in.mu_v().clone(),
                    orthogonal_gap(spec_in.gap(), &mut root.child(2))?,
                    spec_in.sigma(),
                )?,
                OodKind::Wider => spec_in.with_sigma(cfg.ood_sigma.unwrap_or(3.0 * spec_in.sigma()))?,
            };
            let mixes = cfg.mix_list.clone().unwrap_or_else(|| DEFAULT_MIX_GRID.to_vec());
            let results = mixes
                .par_iter()
                .enumerate()
                .map(|(i, &mix)| composition_sweep(&spec_in, &spec_out, mix, n, &mut root.child(3).child(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            let mut t = CsvTable::new(["mix", "cos_to_in_gap", "g_hat_norm"]);
            for (mix, r) in mixes.iter().zip(&results) {
                t.push(vec![(*mix).into(), r.cos_to_in_gap.into(), r.g_hat.norm().into()]);
            }
            out.table("ablation.csv", &t);
        }
        AblationMode::Noise => {
            let setup = train_setup(cfg, &root)?;
            let eps_list = cfg.eps_list.clone().unwrap_or_else(|| DEFAULT_NOISE_EPS.to_vec());
            let (d, g) = (setup.spec.d(), setup.spec.gap().clone());
                        let train_seed = mix_seed(seed, 4);
            // Row 0 is clean gap init; then one row per eps, all from the same init stream.
            let jobs: Vec<Option<f64>> = std::iter::once(None).chain(eps_list.iter().map(|&e| Some(e))).collect();
            let runs = jobs
                .par_iter()
                .map(|job| {
                    let mut rng = root.child(3);
                    let adapter = match job {
                        None => gap_init(d, d, setup.rank, setup.alpha, &g, &mut rng)?,
                        Some(eps) => noisy_gap_init(d, d, setup.rank, setup.alpha, &g, *eps, &mut rng)?,
                    };
                    train_one(&setup, adapter, train_seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut t = CsvTable::new([
                "init",
                "eps",
                "init_alignment",
                "mean_init_alignment",
                "expected_alignment",
                "final_loss",
                "final_alignment",
            ]);
            let trials = cfg.trials.unwrap_or(20);
            let mean_alignments = jobs
                .par_iter()
                .map(|job| {
                    let total = (0..trials)
                        .map(|j| {
                            let mut rng = root.child(5).child(j as u64);
                            let a = noisy_gap_init(d, d, setup.rank, setup.alpha, &g, job.unwrap_or(0.0), &mut rng)?;
                            Ok(direction_alignment(&a, &g))
                        })
                        .sum::<Result<f64>>()?;
                    Ok(total / trials as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            let g2 = g.norm().powi(2);
            for ((job, run), mean_align) in jobs.iter().zip(&runs).zip(mean_alignments) {
                let (name, eps) = match job {
                    None => ("gap", 0.0),
                    Some(e) => ("noisy-gap", *e),
                };
                let final_align = run.alignment.last().copied().unwrap_or(run.init_alignment);
                t.push(vec![
                    name.into(),
                    eps.into(),
                    run.init_alignment.into(),
                    mean_align.into(),
                    (g2.sqrt() / (g2 + d as f64 * eps * eps).sqrt()).into(),
                    run.final_loss.into(),
                    final_align.into(),
                ]);
            }
            out.table("ablation.csv", &t);
        }
    }
    done(out)
}
