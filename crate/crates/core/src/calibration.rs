//! Synthetic encoder stacks and layer-wise gap estimation.
//!
//! A [`SyntheticStackSpec`] is a list of per-layer translation models sharing
//! one dimension. [`generate_stack`] plays the role of running a frozen
//! encoder over a calibration set: it yields paired visual/text activations
//! per layer. A real-model exporter can replace it by producing the same
//! `Vec<LayerActivations>` (pooling tokens to one vector per sample is the
//! exporter's job).
//!
//! Calibration never updates parameters; every function here is a pure
//! function of its inputs and seed.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{cosine, mean_vector, sample_projected_gaps, sample_unit_sphere};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rng::Rng;
use crate::spot_gap::{anchor_points, smooth_gap_vectors, SpotGapParams};
use crate::toy_model::{sample_pairs, TranslationModelSpec};

/// Calibration set size used by default.
pub const DEFAULT_CALIBRATION_SIZE: usize = 256;
pub const DEFAULT_NUM_LAYERS: usize = 8;
pub const DEFAULT_PLANTED_LAYERS: [usize; 2] = [3, 6];
pub const DEFAULT_CALIBRATION_SIZES: [usize; 4] = [16, 64, 256, 1024];
pub const GAPS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticStackSpec {
    d: usize,
    layers: Vec<TranslationModelSpec>,
}

impl SyntheticStackSpec {
    pub fn new(layers: Vec<TranslationModelSpec>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| LabError::EmptyInput("stack needs at least one layer".into()))?;
        let d = first.d();
        if let Some((i, l)) = layers.iter().enumerate().find(|(_, l)| l.d() != d) {
            return Err(LabError::DimensionMismatch(format!(
                "layer {i} has dim {} but layer 0 has dim {d}",
                l.d()
            )));
        }
        Ok(Self { d, layers })
    }

    /// Layers with random unit `μ_v` and random gap directions; layers in
    /// `planted` get gap norm `high_gap`, the rest `base_gap`.
    pub fn planted(
        d: usize,
        num_layers: usize,
        planted: &[usize],
        high_gap: f64,
        base_gap: f64,
        sigma: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if let Some(&l) = planted.iter().find(|&&l| l >= num_layers) {
            return Err(LabError::InvalidDimension(format!(
                "planted layer {l} outside a {num_layers}-layer stack"
            )));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let norm = if planted.contains(&l) { high_gap } else { base_gap };
                let mu = sample_unit_sphere(d, rng)?;
                let g = sample_unit_sphere(d, rng)?.scaled(norm)?;
                TranslationModelSpec::new(mu, g, sigma)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn layers(&self) -> &[TranslationModelSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub layer: usize,
    pub h_v: DenseMatrix,
    pub h_t: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub layer: usize,
    pub g_hat: DenseVector,
    pub sample_count: usize,
    /// `‖ĝ‖` (the estimate itself is not normalized).
    pub raw_norm: f64,
}

/// Paired activations for every layer; layer `ℓ` draws from `rng.child(ℓ)`.
pub fn generate_stack(spec: &SyntheticStackSpec, n: usize, rng: &Rng) -> Result<Vec<LayerActivations>> {
    generate_stack_weakly_paired(spec, n, 0.0, rng)
}

/// Like [`generate_stack`], then mispairs `round(shuffle_fraction·n)` text
/// rows per layer by permuting them among themselves. Both marginals are
/// untouched, so mean-difference gap estimates are unaffected.
pub fn generate_stack_weakly_paired(
    spec: &SyntheticStackSpec,
    n: usize,
    shuffle_fraction: f64,
    rng: &Rng,
) -> Result<Vec<LayerActivations>> {
    if n == 0 {
        return Err(LabError::EmptyInput("calibration set needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&shuffle_fraction) {
        return Err(LabError::config("shuffle_fraction", "must lie in [0, 1]"));
    }
    spec.layers
        .par_iter()
        .enumerate()
        .map(|(layer, model)| {
            let mut child = rng.child(layer as u64);
            let (h_v, mut h_t) = sample_pairs(model, n, &mut child)?;
            let count = (shuffle_fraction * n as f64).round() as usize;
            if count >= 2 {
                let mut rows: Vec<usize> = (0..n).collect();
                child.shuffle(&mut rows);
                let chosen = &rows[..count];
                let mut targets = chosen.to_vec();
                child.shuffle(&mut targets);
                let src = h_t.clone();
                let d = h_t.cols();
                let dst = h_t.as_mut_slice();
                for (&to, &from) in chosen.iter().zip(&targets) {
                    dst[to * d..(to + 1) * d].copy_from_slice(src.row(from));
                }
            }
            Ok(LayerActivations { layer, h_v, h_t })
        })
        .collect()
}

/// `ĝ^ℓ = mean_i g̃^(i,ℓ)` from per-pair gaps, optionally smoothed over
/// neighborhoods in the anchor space given by `params.anchor` (k clipped to N−1).
pub fn estimate_layer_gaps(
    acts: &[LayerActivations],
    params: &SpotGapParams,
    smoothing: bool,
) -> Result<Vec<GapEstimate>> {
    params.validate()?;
    acts.par_iter()
        .map(|act| {
            let n = act.h_v.rows();
            let mut gaps = sample_projected_gaps(&act.h_t, &act.h_v)?;
            if smoothing {
                if n < 2 {
                    return Err(LabError::NeighborhoodSize { k: 1, n });
                }
                let p = params.clipped_to(n);
                let anchors = anchor_points(&act.h_v, &act.h_t, p.anchor)?;
                gaps = smooth_gap_vectors(&gaps, &anchors, p.k)?;
            }
            let g_hat = mean_vector(&gaps)?;
            Ok(GapEstimate {
                layer: act.layer,
                raw_norm: g_hat.norm(),
                g_hat,
                sample_count: n,
            })
        })
        .collect()
}

/// Plain mean-difference gap estimate from one model.
pub fn estimate_gap(spec: &TranslationModelSpec, n: usize, rng: &mut Rng) -> Result<DenseVector> {
    let (xv, xt) = sample_pairs(spec, n, rng)?;
    mean_vector(&sample_projected_gaps(&xt, &xv)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSizeRow {
    pub size: usize,
    pub mean_relative_error: f64,
    pub mean_cosine: f64,
}

/// Mean `‖ĝ − g‖/‖g‖` and `cos(ĝ, g)` over `trials` independent calibration
/// sets per size. Trial `t` of size index `s` uses `rng.child(s·trials + t)`.
pub fn calibration_size_sweep(
    spec: &TranslationModelSpec,
    sizes: &[usize],
    trials: usize,
    rng: &Rng,
) -> Result<Vec<CalibrationSizeRow>> {
    if sizes.is_empty() {
        return Err(LabError::InsufficientGrid("no calibration sizes".into()));
    }
    if trials == 0 {
        return Err(LabError::InvalidDimension("trials must be >= 1".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s == 0) {
        return Err(LabError::InvalidDimension(format!("calibration size {s} must be >= 1")));
    }
    let g = spec.gap();
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Err(LabError::DegenerateModel("gap vector is zero".into()));
    }
    sizes
        .iter()
        .enumerate()
        .map(|(si, &size)| {
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut child = rng.child((si * trials + t) as u64);
                    let est = estimate_gap(spec, size, &mut child)?;
                    let err = est.sub(g)?.norm() / g_norm;
                    let cos = cosine(&est, g).unwrap_or(0.0);
                    Ok((err, cos))
                })
                .collect::<Result<Vec<_>>>()?;
            let k = trials as f64;
            Ok(CalibrationSizeRow {
                size,
                mean_relative_error: per_trial.iter().map(|p| p.0).sum::<f64>() / k,
                mean_cosine: per_trial.iter().map(|p| p.1).sum::<f64>() / k,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionResult {
    pub g_hat: DenseVector,
    pub cos_to_in_gap: f64,
}

/// Pool `⌊mix·n⌋` pairs from `spec_out` with the rest from `spec_in` and
/// estimate one gap from the pooled set.
pub fn composition_sweep(
    spec_in: &TranslationModelSpec,
    spec_out: &TranslationModelSpec,
    mix: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<CompositionResult> {
    if spec_in.d() != spec_out.d() {
        return Err(LabError::DimensionMismatch(format!(
            "in-domain d = {} but out-of-domain d = {}",
            spec_in.d(),
            spec_out.d()
        )));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(LabError::config("mix", "must lie in [0, 1]"));
    }
    if n < 2 {
        return Err(LabError::EmptyInput("composition needs n >= 2".into()));
    }
    let n_out = (mix * n as f64).floor() as usize;
    let n_in = n - n_out;
    let mut gaps: Option<DenseMatrix> = None;
    for (model, count) in [(spec_in, n_in), (spec_out, n_out)] {
        if count == 0 {
            continue;
        }
        let (xv, xt) = sample_pairs(model, count, rng)?;
        let g = sample_projected_gaps(&xt, &xv)?;
        gaps = Some(match gaps {
            Some(prev) => prev.vstack(&g)?,
            None => g,
        });
    }
    let g_hat = mean_vector(&gaps.expect("n >= 2 leaves at least one source"))?;
    let cos_to_in_gap = cosine(&g_hat, spec_in.gap()).unwrap_or(0.0);
    Ok(CompositionResult { g_hat, cos_to_in_gap })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapsFile {
    schema_version: u32,
    d: usize,
    layers: Vec<GapEstimate>,
}

pub fn gaps_to_json(estimates: &[GapEstimate]) -> Result<String> {
    let d = estimates
        .first()
        .ok_or_else(|| LabError::EmptyInput("no gap estimates to write".into()))?
        .g_hat
        .dim();
    let file = GapsFile {
        schema_version: GAPS_SCHEMA_VERSION,
        d,
        layers: estimates.to_vec(),
    };
    let mut out = serde_json::to_string(&file).expect("gap estimates serialize");
    out.push('\n');
    Ok(out)
}

pub fn gaps_from_json(text: &str, source: &str) -> Result<Vec<GapEstimate>> {
    let file: GapsFile = serde_json::from_str(text).map_err(|e| {
        LabError::parse(format!("{source} line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if file.schema_version != GAPS_SCHEMA_VERSION {
        return Err(LabError::parse(
            format!("{source} field `schema_version`"),
            format!("unsupported version {}", file.schema_version),
        ));
    }
    for (i, l) in file.layers.iter().enumerate() {
        if l.g_hat.dim() != file.d {
            return Err(LabError::parse(
                format!("{source} field `layers[{i}].g_hat`"),
                format!("expected {} values, found {}", file.d, l.g_hat.dim()),
            ));
        }
        if l.sample_count == 0 {
            return Err(LabError::parse(
                format!("{source} field `layers[{i}].sample_count`"),
                "must be >= 1",
            ));
        }
    }
    Ok(file.layers)
}

pub fn save_gap_estimates(estimates: &[GapEstimate], path: &Path) -> Result<()> {
    write_atomic(path, gaps_to_json(estimates)?.as_bytes())
}

pub fn load_gap_estimates(path: &Path) -> Result<Vec<GapEstimate>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    gaps_from_json(&text, &path.display().to_string())
}
