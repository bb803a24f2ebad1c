//! Layer-wise modality-gap diagnostics.
//!
//! For paired hidden states `H_v`, `H_t` (N×d) at one layer the score combines
//!
//! - a semantic term `s_sem,i = ‖h_t,i − h_v,i‖`,
//! - a geometric term `s_geom,i = |d_t,i − d_v,i|`, where `d_·,i` is the mean
//!   distance from row `i` to its `k` nearest neighbors within its own modality
//!   (self excluded),
//! - neighborhood smoothing `s̄_i = mean_{j ∈ N_k(i) ∪ {i}} (α_sem s_sem,j + α_geom s_geom,j)`,
//!
//! and the layer score is `mean_i s̄_i`. Smoothing neighborhoods include the
//! sample itself and are computed in the anchor space (visual by default).
//!
//! Neighbors are exact: full pairwise distances, ties broken by lower index.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{sq_dist, DenseMatrix};

pub const DEFAULT_K: usize = 10;

/// Space in which smoothing neighborhoods are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SmoothingAnchor {
    #[default]
    Visual,
    Textual,
    /// Concatenated `[h_v, h_t]` features.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotGapParams {
    pub k: usize,
    pub alpha_sem: f64,
    pub alpha_geom: f64,
    pub anchor: SmoothingAnchor,
}

impl Default for SpotGapParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            alpha_sem: 1.0,
            alpha_geom: 1.0,
            anchor: SmoothingAnchor::Visual,
        }
    }
}

impl SpotGapParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(LabError::config("k_neighbors", "neighborhood size must be >= 1"));
        }
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.alpha_sem) || !ok(self.alpha_geom) {
            return Err(LabError::config("alpha_sem", "weights must be finite and >= 0"));
        }
        if self.alpha_sem == 0.0 && self.alpha_geom == 0.0 {
            return Err(LabError::config("alpha_sem", "at least one weight must be positive"));
        }
        Ok(())
    }

    /// Same parameters with `k` reduced to at most `n − 1`.
    pub fn clipped_to(&self, n: usize) -> Self {
        Self {
            k: self.k.min(n.saturating_sub(1)).max(1),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotGapReport {
    pub per_sample_sem: Vec<f64>,
    pub per_sample_geom: Vec<f64>,
    pub per_sample_smoothed: Vec<f64>,
    pub layer_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSelection {
    pub excluded_prefix: usize,
    /// Descending score, ties to the lower index.
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

fn check_neighborhood(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(LabError::InvalidDimension("neighborhood size must be >= 1".into()));
    }
    if n < 2 || k >= n {
        return Err(LabError::NeighborhoodSize { k, n });
    }
    Ok(())
}

/// Sorted `(squared distance, index)` of the `k` nearest other rows of `i`.
fn nearest(points: &DenseMatrix, i: usize, k: usize) -> Vec<(f64, usize)> {
    let p = points.row(i);
    let mut cand: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(p, points.row(j)), j))
        .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
    }
    cand.sort_by(by_dist);
    cand
}

/// Indices of the `k` nearest other rows for every row (N×k).
pub fn knn_indices(points: &DenseMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    check_neighborhood(points.rows(), k)?;
    Ok((0..points.rows())
        .into_par_iter()
        .map(|i| nearest(points, i, k).into_iter().map(|(_, j)| j).collect())
        .collect())
}

/// Mean Euclidean distance from each row to its `k` nearest other rows.
pub fn local_dispersion(points: &DenseMatrix, k: usize) -> Result<Vec<f64>> {
    check_neighborhood(points.rows(), k)?;
    Ok((0..points.rows())
        .into_par_iter()
        .map(|i| nearest(points, i, k).iter().map(|(d2, _)| d2.sqrt()).sum::<f64>() / k as f64)
        .collect())
}

pub(crate) fn anchor_points(h_v: &DenseMatrix, h_t: &DenseMatrix, anchor: SmoothingAnchor) -> Result<DenseMatrix> {
    match anchor {
        SmoothingAnchor::Visual => Ok(h_v.clone()),
        SmoothingAnchor::Textual => Ok(h_t.clone()),
        SmoothingAnchor::Joint => {
            let mut values = Vec::with_capacity(h_v.as_slice().len() * 2);
            for (a, b) in h_v.row_iter().zip(h_t.row_iter()) {
                values.extend_from_slice(a);
                values.extend_from_slice(b);
            }
            DenseMatrix::new(h_v.rows(), h_v.cols() * 2, values)
        }
    }
}

pub fn spot_gap_score(h_v: &DenseMatrix, h_t: &DenseMatrix, params: &SpotGapParams) -> Result<SpotGapReport> {
    params.validate()?;
    if h_v.shape() != h_t.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "visual states {:?} vs text states {:?}",
            h_v.shape(),
            h_t.shape()
        )));
    }
    let k = params.k;
    check_neighborhood(h_v.rows(), k)?;

    let per_sample_sem: Vec<f64> = h_v
        .row_iter()
        .zip(h_t.row_iter())
        .map(|(v, t)| sq_dist(t, v).sqrt())
        .collect();
    let disp_v = local_dispersion(h_v, k)?;
    let disp_t = local_dispersion(h_t, k)?;
    let per_sample_geom: Vec<f64> = disp_t.iter().zip(&disp_v).map(|(t, v)| (t - v).abs()).collect();

    let combined: Vec<f64> = per_sample_sem
        .iter()
        .zip(&per_sample_geom)
        .map(|(s, g)| params.alpha_sem * s + params.alpha_geom * g)
        .collect();
    let neighbors = knn_indices(&anchor_points(h_v, h_t, params.anchor)?, k)?;
    let per_sample_smoothed: Vec<f64> = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| (combined[i] + nb.iter().map(|&j| combined[j]).sum::<f64>()) / (k + 1) as f64)
        .collect();
    let layer_score = per_sample_smoothed.iter().sum::<f64>() / per_sample_smoothed.len() as f64;
    Ok(SpotGapReport {
        per_sample_sem,
        per_sample_geom,
        per_sample_smoothed,
        layer_score,
    })
}

/// `g̃_i = mean_{j ∈ N_k(i) ∪ {i}} g_j`, neighborhoods found among `anchor_points`.
pub fn smooth_gap_vectors(gaps: &DenseMatrix, anchor_points: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if gaps.rows() != anchor_points.rows() {
        return Err(LabError::DimensionMismatch(format!(
            "{} gap rows vs {} anchor rows",
            gaps.rows(),
            anchor_points.rows()
        )));
    }
    let neighbors = knn_indices(anchor_points, k)?;
    let d = gaps.cols();
    let mut out = Vec::with_capacity(gaps.rows() * d);
    for (i, nb) in neighbors.iter().enumerate() {
        // Accumulate offsets from the center row so constant fields map to
        // themselves exactly.
        let center = gaps.row(i);
        let mut acc = vec![0.0; d];
        for &j in nb {
            for ((a, x), c) in acc.iter_mut().zip(gaps.row(j)).zip(center) {
                *a += x - c;
            }
        }
        out.extend(center.iter().zip(acc).map(|(c, a)| c + a / (k + 1) as f64));
    }
    DenseMatrix::new(gaps.rows(), d, out)
}

/// Skip layers `[0, safety_margin)` and keep the `top_k` highest-scoring rest.
pub fn gg_safe_select(scores: &[f64], safety_margin: usize, top_k: usize) -> Result<LayerSelection> {
    if top_k == 0 {
        return Err(LabError::Selection("top_k must be >= 1".into()));
    }
    if safety_margin + top_k > scores.len() {
        return Err(LabError::Selection(format!(
            "need {} layers (margin {safety_margin} + top_k {top_k}), have {}",
            safety_margin + top_k,
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LabError::Selection("scores must be finite".into()));
    }
    let mut eligible: Vec<usize> = (safety_margin..scores.len()).collect();
    eligible.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    eligible.truncate(top_k);
    Ok(LayerSelection {
        excluded_prefix: safety_margin,
        selected: eligible,
        scores: scores.to_vec(),
    })
}
