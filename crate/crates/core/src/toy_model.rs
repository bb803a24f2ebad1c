//! Gaussian translation model.
//!
//! Visual states `x_v ~ N(μ_v, σ²I)` and paired text states
//! `x_t ~ N(μ_v + g, σ²I)` in `R^d`. The only anisotropic structure is the
//! translation `g`, which makes the rank-1 alignment problem solvable in
//! closed form and lets the Monte Carlo routines be checked exactly.
//!
//! The adapter acts on `x_v` directly (square `d×d` update), i.e. the input
//! and output dimensions of the adapter coincide here.

use rayon::prelude::*;
use serde::Serialize;

use crate::adapter::{batch_loss, AdapterPair, BaseWeight, Batch};
use crate::error::{LabError, Result};
use crate::geometry::{sample_unit_sphere, ZERO_NORM_TOL};
use crate::linalg::{dot, norm, DenseMatrix, DenseVector};
use crate::rng::Rng;
use crate::stats::{ln_gamma, loglog_slope};

/// Default dimension grid for the suppression sweep.
pub const DEFAULT_SWEEP_DIMS: [usize; 7] = [64, 128, 256, 512, 1024, 2048, 4096];

const SEARCH_RESTARTS: usize = 8;
const SEARCH_STEP: f64 = 1e-2;
pub const DEFAULT_SEARCH_BUDGET: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationModelSpec {
    d: usize,
    mu_v: DenseVector,
    g: DenseVector,
    sigma: f64,
}

impl TranslationModelSpec {
    pub fn new(mu_v: DenseVector, g: DenseVector, sigma: f64) -> Result<Self> {
        if mu_v.dim() != g.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "mu_v has dim {} but g has dim {}",
                mu_v.dim(),
                g.dim()
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(LabError::InvalidDimension(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            d: g.dim(),
            mu_v,
            g,
            sigma,
        })
    }

    /// Random directions for `μ_v` and `g` with the requested norms.
    pub fn random(d: usize, mu_norm: f64, gap_norm: f64, sigma: f64, rng: &mut Rng) -> Result<Self> {
        let mu = sample_unit_sphere(d, rng)?.scaled(mu_norm)?;
        let g = sample_unit_sphere(d, rng)?.scaled(gap_norm)?;
        Self::new(mu, g, sigma)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu_v(&self) -> &DenseVector {
        &self.mu_v
    }

    pub fn gap(&self) -> &DenseVector {
        &self.g
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu_v.clone(), self.g.clone(), sigma)
    }
}

/// `n` paired rows `(X_v, X_t)`. Row `i` of each draws `d` visual deviates
/// then `d` text deviates from `rng`.
pub fn sample_pairs(
    spec: &TranslationModelSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if n == 0 {
        return Err(LabError::EmptyInput("sample_pairs needs n >= 1".into()));
    }
    let d = spec.d;
    let mut xv = Vec::with_capacity(n * d);
    let mut xt = Vec::with_capacity(n * d);
    let (mu, g, sigma) = (spec.mu_v.as_slice(), spec.g.as_slice(), spec.sigma);
    for _ in 0..n {
        xv.extend(mu.iter().map(|&m| m + sigma * rng.normal()));
        xt.extend(mu.iter().zip(g).map(|(&m, &gi)| m + gi + sigma * rng.normal()));
    }
    Ok((DenseMatrix::new(n, d, xv)?, DenseMatrix::new(n, d, xt)?))
}

fn check_square(spec: &TranslationModelSpec, adapter: &AdapterPair) -> Result<()> {
    if adapter.d() != spec.d || adapter.k() != spec.d {
        return Err(LabError::DimensionMismatch(format!(
            "adapter is {}x{} but the model has d = {}",
            adapter.d(),
            adapter.k(),
            spec.d
        )));
    }
    Ok(())
}

/// Closed-form `E‖x_v + ΔW x_v − x_t‖²`
/// `= ‖ΔW μ_v − g‖² + σ²‖I + ΔW‖_F² + σ² d`, evaluated without forming ΔW.
pub fn expected_loss(spec: &TranslationModelSpec, adapter: &AdapterPair) -> Result<f64> {
    check_square(spec, adapter)?;
    let s = adapter.scale();
    let (b, a) = (adapter.b(), adapter.a());
    let r = adapter.rank();

    let mut bias = adapter.delta_apply(spec.mu_v.as_slice())?;
    for (x, gi) in bias.iter_mut().zip(spec.g.as_slice()) {
        *x -= gi;
    }
    let bias_sq = dot(&bias, &bias);

    // tr(ΔW) = s·tr(A B); ‖ΔW‖_F² = s²·tr(BᵀB · A Aᵀ).
    let ab = a.matmul(b)?;
    let trace: f64 = (0..r).map(|j| ab.get(j, j)).sum::<f64>() * s;
    let btb = b.transpose().matmul(b)?;
    let aat = a.matmul(&a.transpose())?;
    let frob_sq: f64 = btb
        .as_slice()
        .iter()
        .zip(aat.as_slice())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * s
        * s;

    let d = spec.d as f64;
    let var = spec.sigma * spec.sigma;
    Ok(bias_sq + var * (d + 2.0 * trace + frob_sq) + var * d)
}

/// Finite-sample loss `(1/N) Σ ‖x_v,i + ΔW x_v,i − x_t,i‖²`.
pub fn empirical_loss(xv: &DenseMatrix, xt: &DenseMatrix, adapter: &AdapterPair) -> Result<f64> {
    if xv.shape() != xt.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "X_v is {:?} but X_t is {:?}",
            xv.shape(),
            xt.shape()
        )));
    }
    batch_loss(adapter, &BaseWeight::Identity, &Batch::new(xv.clone(), xt.clone())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDirection {
    /// Unit output direction, sign chosen so that `theta_star >= 0`.
    pub b_star: DenseVector,
    pub theta_star: f64,
    pub loss_star: f64,
}

/// The rank-1 update `ΔW = θ·b·μ̂_vᵀ` (α/r = 1) as an adapter.
pub fn rank1_update(spec: &TranslationModelSpec, b: &DenseVector, theta: f64) -> Result<AdapterPair> {
    let mu_hat = input_direction(spec);
    let bm = DenseMatrix::new(spec.d, 1, b.as_slice().to_vec())?;
    let am = DenseMatrix::new(1, spec.d, mu_hat.iter().map(|x| theta * x).collect())?;
    AdapterPair::new(bm, am, 1.0)
}

fn input_direction(spec: &TranslationModelSpec) -> Vec<f64> {
    let m = spec.mu_v.norm();
    if m > ZERO_NORM_TOL {
        spec.mu_v.as_slice().iter().map(|x| x / m).collect()
    } else {
        // μ_v = 0: the input factor's direction is immaterial to the mean term.
        let mut e = vec![0.0; spec.d];
        e[0] = 1.0;
        e
    }
}

/// Multi-start gradient descent for the best rank-1 update `θ·b·μ̂_vᵀ`.
///
/// For fixed unit `b` the loss is quadratic in `θ`:
/// `L = θ²(m² + σ²) − 2θ⟨b, v⟩ + ‖g‖² + 2σ²d` with `m = ‖μ_v‖` and
/// `v = m·g − σ²·μ̂_v`, so `θ` is eliminated exactly and descent runs over
/// `b` on the unit sphere, `budget` steps per restart.
pub fn optimal_direction_search(
    spec: &TranslationModelSpec,
    budget: usize,
    rng: &mut Rng,
) -> Result<OptimalDirection> {
    if spec.g.norm() <= ZERO_NORM_TOL {
        return Err(LabError::DegenerateModel("gap vector is zero".into()));
    }
    if budget == 0 {
        return Err(LabError::InvalidDimension("search budget must be >= 1".into()));
    }
    let d = spec.d;
    let m = spec.mu_v.norm();
    let var = spec.sigma * spec.sigma;
    let curvature = m * m + var;
    let mu_hat = input_direction(spec);
    let v: Vec<f64> = spec
        .g
        .as_slice()
        .iter()
        .zip(&mu_hat)
        .map(|(gi, ui)| m * gi - var * ui)
        .collect();
    let v_sq = dot(&v, &v);
    let theta_of = |b: &[f64]| if curvature > 0.0 { dot(b, &v) / curvature } else { 0.0 };

    let mut best: Option<OptimalDirection> = None;
    for _ in 0..SEARCH_RESTARTS {
        let mut b = sample_unit_sphere(d, rng)?.into_vec();
        if v_sq > 0.0 && curvature > 0.0 {
            for _ in 0..budget {
                // Riemannian step on the sphere, preconditioned by curvature/‖v‖².
                let c = dot(&b, &v);
                let step = SEARCH_STEP * 2.0 * c / v_sq;
                for (bi, vi) in b.iter_mut().zip(&v) {
                    *bi += step * (vi - c * *bi);
                }
                let n = norm(&b);
                b.iter_mut().for_each(|x| *x /= n);
            }
        }
        let mut theta = theta_of(&b);
        if theta < 0.0 {
            theta = -theta;
            b.iter_mut().for_each(|x| *x = -*x);
        }
        let b = DenseVector::new(b)?;
        let loss = expected_loss(spec, &rank1_update(spec, &b, theta)?)?;
        if best.as_ref().is_none_or(|cur| loss < cur.loss_star) {
            best = Some(OptimalDirection {
                b_star: b,
                theta_star: theta,
                loss_star: loss,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean `|⟨b, ĝ⟩|` per dimension for random versus gap-aligned directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuppressionCurve {
    pub dims: Vec<usize>,
    pub mean_abs_cos_random: Vec<f64>,
    pub mean_abs_cos_gapinit: Vec<f64>,
    pub samples_per_dim: usize,
}

impl SuppressionCurve {
    /// Log–log slope of the random branch against `d`.
    pub fn random_slope(&self) -> Result<f64> {
        let xs: Vec<f64> = self.dims.iter().map(|&d| d as f64).collect();
        loglog_slope(&xs, &self.mean_abs_cos_random)
    }

    pub fn gapinit_slope(&self) -> Result<f64> {
        let xs: Vec<f64> = self.dims.iter().map(|&d| d as f64).collect();
        loglog_slope(&xs, &self.mean_abs_cos_gapinit)
    }
}

/// `E|⟨u, b⟩| = Γ(d/2) / (√π Γ((d+1)/2))` for `b` uniform on `S^{d−1}`.
pub fn expected_abs_cos(d: usize) -> f64 {
    let d = d as f64;
    (ln_gamma(d / 2.0) - ln_gamma((d + 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt()
}

/// For each `d`, average `|⟨b, ĝ⟩|` over `samples_per_dim` random unit `b`
/// (random branch) and record `|⟨ĝ, ĝ⟩|` for the gap-aligned branch. The
/// uniform law is rotation invariant, so `ĝ = e_1` without loss of
/// generality. Dimensions run in parallel on child streams of `rng`.
pub fn suppression_sweep(dims: &[usize], samples_per_dim: usize, rng: &Rng) -> Result<SuppressionCurve> {
    if dims.len() < 2 {
        return Err(LabError::InsufficientGrid(format!(
            "suppression sweep needs >= 2 dims, got {}",
            dims.len()
        )));
    }
    if let Some(&d) = dims.iter().find(|&&d| d < 2) {
        return Err(LabError::InvalidDimension(format!("sweep dims must be >= 2, got {d}")));
    }
    if samples_per_dim < 100 {
        return Err(LabError::InvalidDimension(format!(
            "samples_per_dim must be >= 100, got {samples_per_dim}"
        )));
    }
    let random: Vec<f64> = dims
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut child = rng.child(i as u64);
            let mut total = 0.0;
            for _ in 0..samples_per_dim {
                let b = sample_unit_sphere(d, &mut child)?;
                total += b[0].abs();
            }
            Ok(total / samples_per_dim as f64)
        })
        .collect::<Result<_>>()?;
    let gapinit = dims
        .iter()
        .map(|&d| {
            let g_hat = DenseVector::basis(d, 0)?;
            Ok(g_hat.dot(&g_hat)?.abs())
        })
        .collect::<Result<_>>()?;
    Ok(SuppressionCurve {
        dims: dims.to_vec(),
        mean_abs_cos_random: random,
        mean_abs_cos_gapinit: gapinit,
        samples_per_dim,
    })
}
