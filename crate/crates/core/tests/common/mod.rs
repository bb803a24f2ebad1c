//! Brute-force reference implementations shared by integration tests.

#![allow(dead_code)]

use gapinit_lab::{DenseMatrix, Rng};

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k nearest other rows by a full sort on (distance², index).
pub fn knn(points: &DenseMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = points.rows();
    (0..n)
        .map(|i| {
            let mut all: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (sq(points.row(i), points.row(j)), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|p| p.1).collect()
        })
        .collect()
}

pub fn dispersion(points: &DenseMatrix, k: usize) -> Vec<f64> {
    knn(points, k)
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().map(|&j| sq(points.row(i), points.row(j)).sqrt()).sum::<f64>() / k as f64)
        .collect()
}

/// Layer score with visual-space neighborhoods.
pub fn spot_gap(h_v: &DenseMatrix, h_t: &DenseMatrix, k: usize, a_sem: f64, a_geom: f64) -> f64 {
    let n = h_v.rows();
    let dv = dispersion(h_v, k);
    let dt = dispersion(h_t, k);
    let combined: Vec<f64> = (0..n)
        .map(|i| a_sem * sq(h_t.row(i), h_v.row(i)).sqrt() + a_geom * (dt[i] - dv[i]).abs())
        .collect();
    let nb = knn(h_v, k);
    let smoothed: Vec<f64> = (0..n)
        .map(|i| (combined[i] + nb[i].iter().map(|&j| combined[j]).sum::<f64>()) / (k + 1) as f64)
        .collect();
    smoothed.iter().sum::<f64>() / n as f64
}

/// Mean of `gaps` over each row's neighborhood plus itself.
pub fn smooth(gaps: &DenseMatrix, anchors: &DenseMatrix, k: usize) -> Vec<Vec<f64>> {
    knn(anchors, k)
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            (0..gaps.cols())
                .map(|c| (gaps.get(i, c) + nb.iter().map(|&j| gaps.get(j, c)).sum::<f64>()) / (k + 1) as f64)
                .collect()
        })
        .collect()
}

/// Random matrix; with `grid`, entries are small integers so distance ties occur.
pub fn random_matrix(rows: usize, cols: usize, grid: bool, rng: &mut Rng) -> DenseMatrix {
    let values = (0..rows * cols)
        .map(|_| if grid { rng.below(3) as f64 } else { rng.normal() })
        .collect();
    DenseMatrix::new(rows, cols, values).unwrap()
}
