//! Low-rank adapters `ΔW = (α/r)·B·A`.
//!
//! Convention used throughout the crate: the output factor `B` (d×r) carries
//! the direction and the input factor `A` (r×k) starts at zero, so every
//! initializer leaves `ΔW = 0`. The alternative layout (zero `B`, Gaussian
//! `A`) is available for the random baseline through
//! [`RandomInitConvention::GaussianA`].

mod checkpoint;
mod train;

pub use checkpoint::{from_json, load_adapter, save_adapter, to_json, CHECKPOINT_SCHEMA_VERSION};
pub use train::{train, Optimizer, TrainConfig, TrainTrace, TrainingData};

use crate::error::{LabError, Result};
use crate::geometry::{normalize, ZERO_NORM_TOL};
use crate::linalg::{axpy, dot, norm, DenseMatrix, DenseVector};
use crate::rng::Rng;

/// Scaling α used by default for a given rank (α = 2 at r = 1, α = 16 at r = 8).
pub fn default_alpha(rank: usize) -> f64 {
    2.0 * rank as f64
}

const NOISE_RETRIES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterPair {
    b: DenseMatrix,
    a: DenseMatrix,
    alpha: f64,
}

impl AdapterPair {
    pub fn new(b: DenseMatrix, a: DenseMatrix, alpha: f64) -> Result<Self> {
        if b.cols() != a.rows() {
            return Err(LabError::DimensionMismatch(format!(
                "B is {}x{} but A is {}x{}",
                b.rows(),
                b.cols(),
                a.rows(),
                a.cols()
            )));
        }
        if b.rows() == 0 || b.cols() == 0 {
            return Err(LabError::InvalidDimension("adapter needs d >= 1 and rank >= 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(LabError::InvalidDimension(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { b, a, alpha })
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    /// Output dimension `d`.
    pub fn d(&self) -> usize {
        self.b.rows()
    }

    /// Input dimension `k`.
    pub fn k(&self) -> usize {
        self.a.cols()
    }

    /// `α / r`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.b.as_mut_slice(), self.a.as_mut_slice())
    }

    fn param_mut(&mut self, factor: Factor, i: usize) -> &mut f64 {
        match factor {
            Factor::B => &mut self.b.as_mut_slice()[i],
            Factor::A => &mut self.a.as_mut_slice()[i],
        }
    }

    /// `(α/r)·B·(A·x)` without forming `ΔW`.
    pub fn delta_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mat_vec(x)?;
        let mut out = self.b.mat_vec(&ax)?;
        let s = self.scale();
        out.iter_mut().for_each(|v| *v *= s);
        Ok(out)
    }

    /// The effective update `(α/r)·B·A` as a dense d×k matrix.
    pub fn delta_w(&self) -> Result<DenseMatrix> {
        let mut m = self.b.matmul(&self.a)?;
        let s = self.scale();
        m.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        Ok(m)
    }

    /// Leading left-singular direction of `ΔW`, or `None` when `ΔW = 0`.
    pub fn leading_direction(&self) -> Option<Vec<f64>> {
        if self.a.is_zero() || self.b.is_zero() {
            return None;
        }
        if self.rank() == 1 {
            let col = self.b.column(0).into_vec();
            let n = norm(&col);
            return Some(col.into_iter().map(|x| x / n).collect());
        }
        // Power iteration on ΔW ΔWᵀ = s²·B (A Aᵀ) Bᵀ in factored form.
        let aat = self.a.matmul(&self.a.transpose()).ok()?;
        let mut u: Vec<f64> = (0..self.d()).map(|i| 1.0 + (i % 7) as f64 * 1e-3).collect();
        for _ in 0..500 {
            let w = self.b.mat_t_vec(&u).ok()?;
            let w = aat.mat_vec(&w).ok()?;
            let next = self.b.mat_vec(&w).ok()?;
            let n = norm(&next);
            if n <= ZERO_NORM_TOL {
                return None;
            }
            u = next.into_iter().map(|x| x / n).collect();
        }
        Some(u)
    }
}

#[derive(Clone, Copy)]
enum Factor {
    B,
    A,
}

/// Which factor holds the random direction in [`random_init_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomInitConvention {
    /// `B` columns are normalized Gaussians, `A = 0`.
    #[default]
    DirectionB,
    /// `B = 0`, `A` rows are normalized Gaussians.
    GaussianA,
}

fn check_rank(d: usize, k: usize, r: usize) -> Result<()> {
    if d == 0 || k == 0 || r == 0 {
        return Err(LabError::InvalidDimension(format!(
            "adapter dims must be positive (d={d}, k={k}, r={r})"
        )));
    }
    if r > d.min(k) {
        return Err(LabError::Rank { rank: r, max: d.min(k) });
    }
    Ok(())
}

fn random_unit(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v = rng.normal_vec(n);
        let nv = norm(&v);
        if nv > ZERO_NORM_TOL {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// d×r matrix whose leading columns are copied from `leading`; the rest are
/// random unit vectors.
fn direction_factor(d: usize, r: usize, leading: &[Vec<f64>], rng: &mut Rng) -> DenseMatrix {
    let mut b = vec![0.0; d * r];
    for c in 0..r {
        let col = match leading.get(c) {
            Some(col) => col.clone(),
            None => random_unit(d, rng),
        };
        for (row, value) in col.into_iter().enumerate() {
            b[row * r + c] = value;
        }
    }
    DenseMatrix::from_raw(d, r, b)
}

pub fn random_init(d: usize, k: usize, r: usize, alpha: f64, rng: &mut Rng) -> Result<AdapterPair> {
    random_init_with(d, k, r, alpha, RandomInitConvention::DirectionB, rng)
}

pub fn random_init_with(
    d: usize,
    k: usize,
    r: usize,
    alpha: f64,
    convention: RandomInitConvention,
    rng: &mut Rng,
) -> Result<AdapterPair> {
    check_rank(d, k, r)?;
    match convention {
        RandomInitConvention::DirectionB => {
            let b = direction_factor(d, r, &[], rng);
            AdapterPair::new(b, DenseMatrix::zeros(r, k)?, alpha)
        }
        RandomInitConvention::GaussianA => {
            let a: Vec<f64> = (0..r).flat_map(|_| random_unit(k, rng)).collect();
            AdapterPair::new(DenseMatrix::zeros(d, r)?, DenseMatrix::new(r, k, a)?, alpha)
        }
    }
}

/// First column of `B` is `gap/‖gap‖`, remaining columns random unit, `A = 0`.
pub fn gap_init(
    d: usize,
    k: usize,
    r: usize,
    alpha: f64,
    gap: &DenseVector,
    rng: &mut Rng,
) -> Result<AdapterPair> {
    check_rank(d, k, r)?;
    check_gap(d, gap)?;
    let dir = normalize(gap)?.into_vec();
    let b = direction_factor(d, r, &[dir], rng);
    AdapterPair::new(b, DenseMatrix::zeros(r, k)?, alpha)
}

/// Gap-Init from the perturbed direction `normalize(gap + eps·η)`, `η ~ N(0, I)`.
/// `eps == 0` draws nothing and reproduces [`gap_init`] exactly.
pub fn noisy_gap_init(
    d: usize,
    k: usize,
    r: usize,
    alpha: f64,
    gap: &DenseVector,
    eps: f64,
    rng: &mut Rng,
) -> Result<AdapterPair> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(LabError::InvalidDimension(format!("noise level must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return gap_init(d, k, r, alpha, gap, rng);
    }
    check_rank(d, k, r)?;
    check_gap(d, gap)?;
    let noisy = perturb_direction(gap, eps, rng)?;
    gap_init(d, k, r, alpha, &noisy, rng)
}

/// `gap + eps·η` with η resampled while the sum is numerically zero.
pub fn perturb_direction(gap: &DenseVector, eps: f64, rng: &mut Rng) -> Result<DenseVector> {
    for _ in 0..NOISE_RETRIES {
        let v: Vec<f64> = gap
            .as_slice()
            .iter()
            .map(|&g| g + eps * rng.normal())
            .collect();
        if norm(&v) > ZERO_NORM_TOL {
            return DenseVector::new(v);
        }
    }
    Err(LabError::DegenerateVector(format!(
        "noisy gap vanished in {NOISE_RETRIES} draws"
    )))
}

fn check_gap(d: usize, gap: &DenseVector) -> Result<()> {
    if gap.dim() != d {
        return Err(LabError::DimensionMismatch(format!(
            "gap has dim {} but adapter output dim is {d}",
            gap.dim()
        )));
    }
    if gap.norm() <= ZERO_NORM_TOL {
        return Err(LabError::DegenerateVector("gap vector has zero norm".into()));
    }
    Ok(())
}

/// `h = W0·x + (α/r)·B·(A·x)`.
pub fn forward(adapter: &AdapterPair, w0: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    if w0.shape() != (adapter.d(), adapter.k()) {
        return Err(LabError::DimensionMismatch(format!(
            "W0 is {:?} but adapter is {}x{}",
            w0.shape(),
            adapter.d(),
            adapter.k()
        )));
    }
    let mut h = w0.mat_vec(x.as_slice())?;
    let delta = adapter.delta_apply(x.as_slice())?;
    for (hi, di) in h.iter_mut().zip(delta) {
        *hi += di;
    }
    DenseVector::new(h)
}

/// Frozen weight the adapter sits on.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseWeight {
    /// Residual-stream adaptation: `W0 = I` (requires `d == k`).
    Identity,
    Dense(DenseMatrix),
}

impl BaseWeight {
    fn check(&self, d: usize, k: usize) -> Result<()> {
        match self {
            BaseWeight::Identity if d != k => Err(LabError::DimensionMismatch(format!(
                "identity base weight needs a square adapter, got {d}x{k}"
            ))),
            BaseWeight::Dense(w) if w.shape() != (d, k) => Err(LabError::DimensionMismatch(format!(
                "W0 is {:?} but adapter is {d}x{k}",
                w.shape()
            ))),
            _ => Ok(()),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BaseWeight::Identity => x.to_vec(),
            BaseWeight::Dense(w) => w.row_iter().map(|row| dot(row, x)).collect(),
        }
    }
}

/// Paired regression batch: row `i` maps `inputs[i]` (length k) to
/// `targets[i]` (length d). For the translation model these are `X_v`, `X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub targets: DenseMatrix,
}

impl Batch {
    pub fn new(inputs: DenseMatrix, targets: DenseMatrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(LabError::DimensionMismatch(format!(
                "{} inputs vs {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub d_b: DenseMatrix,
    pub d_a: DenseMatrix,
}

fn check_batch(adapter: &AdapterPair, base: &BaseWeight, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(LabError::EmptyInput("batch has no pairs".into()));
    }
    base.check(adapter.d(), adapter.k())?;
    if batch.inputs.cols() != adapter.k() || batch.targets.cols() != adapter.d() {
        return Err(LabError::DimensionMismatch(format!(
            "batch inputs/targets have {}/{} columns, adapter expects {}/{}",
            batch.inputs.cols(),
            batch.targets.cols(),
            adapter.k(),
            adapter.d()
        )));
    }
    Ok(())
}

/// Mean squared residual `(1/N) Σ ‖W0 x_i + ΔW x_i − y_i‖²`.
pub fn batch_loss(adapter: &AdapterPair, base: &BaseWeight, batch: &Batch) -> Result<f64> {
    check_batch(adapter, base, batch)?;
    let s = adapter.scale();
    let mut total = 0.0;
    for (x, y) in batch.inputs.row_iter().zip(batch.targets.row_iter()) {
        let ax = adapter.a.mat_vec(x)?;
        let bax = adapter.b.mat_vec(&ax)?;
        let h = base.apply(x);
        total += h
            .iter()
            .zip(&bax)
            .zip(y)
            .map(|((hi, di), yi)| {
                let r = hi + s * di - yi;
                r * r
            })
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Loss and exact gradients:
/// `∂L/∂A = (2s/N) Σ Bᵀ r_i x_iᵀ`, `∂L/∂B = (2s/N) Σ r_i (A x_i)ᵀ`, `s = α/r`.
pub fn loss_and_grads(
    adapter: &AdapterPair,
    base: &BaseWeight,
    batch: &Batch,
) -> Result<(f64, GradientPair)> {
    check_batch(adapter, base, batch)?;
    let (d, k, r) = (adapter.d(), adapter.k(), adapter.rank());
    let s = adapter.scale();
    let mut d_b = vec![0.0; d * r];
    let mut d_a = vec![0.0; r * k];
    let mut total = 0.0;
    for (x, y) in batch.inputs.row_iter().zip(batch.targets.row_iter()) {
        let ax = adapter.a.mat_vec(x)?;
        let bax = adapter.b.mat_vec(&ax)?;
        let mut res = base.apply(x);
        for ((ri, di), yi) in res.iter_mut().zip(&bax).zip(y) {
            *ri += s * di - yi;
        }
        total += dot(&res, &res);
        let btr = adapter.b.mat_t_vec(&res)?;
        for (j, &coef) in btr.iter().enumerate() {
            axpy(coef, x, &mut d_a[j * k..(j + 1) * k]);
        }
        for (i, &ri) in res.iter().enumerate() {
            axpy(ri, &ax, &mut d_b[i * r..(i + 1) * r]);
        }
    }
    let n = batch.len() as f64;
    let factor = 2.0 * s / n;
    d_b.iter_mut().for_each(|g| *g *= factor);
    d_a.iter_mut().for_each(|g| *g *= factor);
    let loss = total / n;
    if !loss.is_finite() {
        return Err(LabError::NonFinite(format!("loss evaluated to {loss}")));
    }
    Ok((
        loss,
        GradientPair {
            d_b: DenseMatrix::new(d, r, d_b)?,
            d_a: DenseMatrix::new(r, k, d_a)?,
        },
    ))
}

/// Max relative error of `loss_and_grads` against central differences.
pub fn finite_difference_check(
    adapter: &AdapterPair,
    base: &BaseWeight,
    batch: &Batch,
    h: f64,
) -> Result<f64> {
    let (_, grads) = loss_and_grads(adapter, base, batch)?;
    finite_difference_check_against(adapter, base, batch, h, &grads)
}

/// Compare a supplied gradient against central differences of the loss.
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check_against(
    adapter: &AdapterPair,
    base: &BaseWeight,
    batch: &Batch,
    h: f64,
    grads: &GradientPair,
) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(LabError::InvalidDimension(format!("step h must lie in (0, 1e-2], got {h}")));
    }
    if grads.d_b.shape() != adapter.b.shape() || grads.d_a.shape() != adapter.a.shape() {
        return Err(LabError::DimensionMismatch("gradient shapes do not mirror adapter".into()));
    }
    let mut probe = adapter.clone();
    let mut worst: f64 = 0.0;
    let factors = [(Factor::B, &grads.d_b), (Factor::A, &grads.d_a)];
    for (factor, analytic) in factors {
        for (i, &analytic) in analytic.as_slice().iter().enumerate() {
            let original = *probe.param_mut(factor, i);
            *probe.param_mut(factor, i) = original + h;
            let plus = batch_loss(&probe, base, batch)?;
            *probe.param_mut(factor, i) = original - h;
            let minus = batch_loss(&probe, base, batch)?;
            *probe.param_mut(factor, i) = original;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
