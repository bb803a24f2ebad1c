//! Random-direction geometry and gap statistics.
//!
//! Everything here is a pure function of its inputs except the samplers, which
//! consume an explicit [`Rng`].

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{dot, norm, DenseMatrix, DenseVector};
use crate::rng::Rng;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// Default histogram resolution over [−1, 1].
pub const DEFAULT_BINS: usize = 50;

/// Uniform direction on the unit sphere `S^{d−1}` (normalized Gaussian).
pub fn sample_unit_sphere(d: usize, rng: &mut Rng) -> Result<DenseVector> {
    if d == 0 {
        return Err(LabError::InvalidDimension("sphere dimension must be >= 1".into()));
    }
    loop {
        let v = rng.normal_vec(d);
        let n = norm(&v);
        if n > ZERO_NORM_TOL {
            return Ok(DenseVector::from_raw(v.into_iter().map(|x| x / n).collect()));
        }
    }
}

/// Samples per parallel block in [`random_cosines`].
const COSINE_BLOCK: usize = 4096;

/// `n` draws of `⟨u, b⟩` for independent uniform `u, b` on `S^{d−1}`.
///
/// A single `u` is drawn from `rng.child(0)`; by rotation invariance this has
/// the same joint law as redrawing it per sample. Block `j` of `b` draws uses
/// `rng.child(j + 1)`, so the output does not depend on the thread count.
pub fn random_cosines(d: usize, n: usize, rng: &Rng) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    if n == 0 {
        return Err(LabError::EmptyInput("need at least one cosine sample".into()));
    }
    let u = sample_unit_sphere(d, &mut rng.child(0))?;
    let blocks = n.div_ceil(COSINE_BLOCK);
    let parts = (0..blocks)
        .into_par_iter()
        .map(|j| {
            let mut child = rng.child(j as u64 + 1);
            let len = COSINE_BLOCK.min(n - j * COSINE_BLOCK);
            (0..len)
                .map(|_| Ok(dot(u.as_slice(), sample_unit_sphere(d, &mut child)?.as_slice())))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

pub fn cosine(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LabError::DimensionMismatch(format!(
            "cosine of dims {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na <= ZERO_NORM_TOL || nb <= ZERO_NORM_TOL {
        return Err(LabError::DegenerateVector("cosine with a zero-norm vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn normalize(v: &DenseVector) -> Result<DenseVector> {
    let n = v.norm();
    if n <= ZERO_NORM_TOL {
        return Err(LabError::DegenerateVector(format!(
            "cannot normalize vector with norm {n:e}"
        )));
    }
    Ok(DenseVector::from_raw(v.as_slice().iter().map(|x| x / n).collect()))
}

/// Columnwise arithmetic mean of the rows.
pub fn mean_vector(rows: &DenseMatrix) -> Result<DenseVector> {
    if rows.rows() == 0 {
        return Err(LabError::EmptyInput("mean of a matrix with no rows".into()));
    }
    let mut acc = vec![0.0; rows.cols()];
    for row in rows.row_iter() {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let n = rows.rows() as f64;
    DenseVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Per-pair differences `z_t,i − z_v,i`.
pub fn sample_projected_gaps(z_t: &DenseMatrix, z_v: &DenseMatrix) -> Result<DenseMatrix> {
    if z_t.shape() != z_v.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "text activations {:?} vs visual activations {:?}",
            z_t.shape(),
            z_v.shape()
        )));
    }
    let values = z_t
        .as_slice()
        .iter()
        .zip(z_v.as_slice())
        .map(|(t, v)| t - v)
        .collect();
    DenseMatrix::new(z_t.rows(), z_t.cols(), values)
}

/// Singular values of a gap matrix and their energy shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Nonincreasing, nonnegative; length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// `σ_i² / Σ σ_j²`. All zeros when the input matrix is zero.
    pub explained_fraction: Vec<f64>,
}

/// Spectrum of the uncentered gap matrix, via the eigendecomposition of the
/// smaller of `G Gᵀ` and `Gᵀ G`.
pub fn gap_spectrum(gaps: &DenseMatrix) -> Result<SpectrumReport> {
    let (n, d) = gaps.shape();
    if n == 0 {
        return Err(LabError::EmptyInput("gap spectrum of an empty matrix".into()));
    }
    let g = DMatrix::from_row_slice(n, d, gaps.as_slice());
    let gram = if n <= d { &g * g.transpose() } else { g.transpose() * &g };
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));

    let total: f64 = eigenvalues.iter().sum();
    let explained_fraction = if total > 0.0 {
        eigenvalues.iter().map(|l| l / total).collect()
    } else {
        vec![0.0; eigenvalues.len()]
    };
    Ok(SpectrumReport {
        singular_values: eigenvalues.iter().map(|l| l.sqrt()).collect(),
        explained_fraction,
    })
}

/// Fixed-width histogram over an interval; values outside are clamped into
/// the end bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || hi.is_nan() || lo.is_nan() || hi <= lo {
            return Err(LabError::InvalidDimension(format!(
                "histogram needs bins >= 1 and hi > lo (got {bins} bins on [{lo}, {hi}])"
            )));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    pub fn add(&mut self, x: f64) {
        let bins = self.counts.len();
        let t = (x - self.lo) / (self.hi - self.lo);
        let i = ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        self.counts[i] += 1;
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSummary {
    pub mean_cos: f64,
    pub std_cos: f64,
    pub histogram: Histogram,
}

/// Cosine of every row to `reference`, summarized. Rows with zero norm are
/// an error since their cosine is undefined.
pub fn cone_concentration(
    embeddings: &DenseMatrix,
    reference: &DenseVector,
    bins: usize,
) -> Result<ConeSummary> {
    if reference.norm() <= ZERO_NORM_TOL {
        return Err(LabError::DegenerateVector("cone reference has zero norm".into()));
    }
    if embeddings.rows() == 0 {
        return Err(LabError::EmptyInput("no embeddings".into()));
    }
    let cosines = embeddings
        .row_iter()
        .map(|row| cosine_slices(row, reference.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut histogram = Histogram::new(-1.0, 1.0, bins)?;
    for &c in &cosines {
        histogram.add(c);
    }
    let (mean_cos, std_cos) = crate::stats::mean_std(&cosines)?;
    Ok(ConeSummary {
        mean_cos,
        std_cos,
        histogram,
    })
}
