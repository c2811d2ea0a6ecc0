//! Fréchet means and global Fréchet regression for set-valued outcomes.
//!
//! Under `d_kc` the embedding `F ↦ s(·, F)` is isometric onto a closed convex
//! cone, so every weighted Fréchet mean is the cone projection of the
//! weighted average of support vectors. Regression weights come from the
//! linear-projection form `ŵ(x, z) = 1 + (x - X̄)' Σ̂^{-1} (z - X̄)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::cone::{is_support_vector, project_to_cone, reconstruct, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::geometry::{
    is_subset, signed_combination, to_support_vector, ConvexBody, SphereGrid, SupportVector,
    DEFAULT_TOL,
};

/// Covariance matrices with condition number at or above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Tolerance on `n^{-1} Σ w_i = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-8;

/// Paired observations `(F_i, X_i)` with optional missingness indicators
/// `T_i` and instruments `Z_i`.
///
/// Rows with `T_i = 0` still carry a body; estimators that honour the
/// missingness indicators never read it.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    bodies: Vec<ConvexBody>,
    covariates: Vec<Vec<f64>>,
    observed: Option<Vec<bool>>,
    instruments: Option<Vec<Vec<f64>>>,
}

fn check_matrix(rows: &[Vec<f64>], n: usize, p: usize, what: &str) -> Result<()> {
    if rows.len() != n {
        return Err(Error::InvalidDataset(format!(
            "{what} has {} rows, expected {n}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidDataset(format!(
                "{what} row {i} has {} entries, expected {p}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("{what} row {i} is not finite")));
        }
    }
    Ok(())
}

impl RegressionDataset {
    pub fn new(bodies: Vec<ConvexBody>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        let n = bodies.len();
        let p = covariates.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        check_matrix(&covariates, n, p, "covariates")?;
        let dim = bodies[0].dim();
        if let Some(i) = bodies.iter().position(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bodies[i].dim(),
            });
        }
        Ok(RegressionDataset {
            bodies,
            covariates,
            observed: None,
            instruments: None,
        })
    }

    /// Attaches the indicators `T_i` (`true` = outcome observed).
    pub fn with_observed(mut self, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != self.len() {
            return Err(Error::InvalidDataset(format!(
                "missingness indicators have length {}, expected {}",
                observed.len(),
                self.len()
            )));
        }
        self.observed = Some(observed);
        Ok(self)
    }

    pub fn with_instruments(mut self, instruments: Vec<Vec<f64>>) -> Result<Self> {
        check_matrix(&instruments, self.len(), self.n_covariates(), "instruments")?;
        self.instruments = Some(instruments);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.bodies[0].dim()
    }

    pub fn bodies(&self) -> &[ConvexBody] {
        &self.bodies
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn observed(&self) -> Option<&[bool]> {
        self.observed.as_deref()
    }

    pub fn instruments(&self) -> Option<&[Vec<f64>]> {
        self.instruments.as_deref()
    }
}

/// One atom of a discrete joint law of `(F, X)`.
#[derive(Debug, Clone)]
pub struct Atom {
    pub probability: f64,
    pub body: ConvexBody,
    pub covariate: Vec<f64>,
}

/// A finitely supported joint distribution of `(F, X)`.
#[derive(Debug, Clone)]
pub struct DiscreteSetDistribution {
    atoms: Vec<Atom>,
}

impl DiscreteSetDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("distribution atoms"));
        }
        if atoms.iter().any(|a| !a.probability.is_finite() || a.probability < 0.0) {
            return Err(Error::InvalidDataset("probabilities must be nonnegative".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDataset(format!("probabilities sum to {total}, not 1")));
        }
        let p = atoms[0].covariate.len();
        let dim = atoms[0].body.dim();
        for a in &atoms {
            if a.covariate.len() != p || a.covariate.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset("inconsistent covariate vectors".into()));
            }
            if a.body.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.body.dim(),
                });
            }
        }
        Ok(DiscreteSetDistribution { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
}

fn support_vectors(bodies: &[ConvexBody], grid: &SphereGrid) -> Result<Vec<SupportVector>> {
    bodies.iter().map(|b| to_support_vector(b, grid)).collect()
}

/// `Σ_k c_k g_k`, summed left to right.
fn linear_combination(grid: &SphereGrid, coefs: &[f64], vectors: &[SupportVector]) -> SupportVector {
    let mut acc = SupportVector::zeros(grid);
    for (c, v) in coefs.iter().zip(vectors) {
        acc.axpy(*c, v);
    }
    acc
}

/// Sample Fréchet mean under `d_kc`, which is the Minkowski mean.
pub fn sample_frechet_mean(bodies: &[ConvexBody], grid: &SphereGrid) -> Result<ConvexBody> {
    if bodies.is_empty() {
        return Err(Error::Empty("sample of bodies"));
    }
    let vectors = support_vectors(bodies, grid)?;
    let c = 1.0 / bodies.len() as f64;
    reconstruct(&linear_combination(grid, &vec![c; bodies.len()], &vectors))
}

/// Minimizer of `n^{-1} Σ w_i d_kc²(ν, F_i)` over convex bodies.
///
/// Weights may be negative but must average to one. The weighted average of
/// support values is projected onto the support cone before reconstruction.
pub fn weighted_frechet_mean(
    bodies: &[ConvexBody],
    weights: &[f64],
    grid: &SphereGrid,
) -> Result<ConvexBody> {
    Ok(weighted_frechet_parts(bodies, weights, grid)?.1)
}

fn weighted_frechet_parts(
    bodies: &[ConvexBody],
    weights: &[f64],
    grid: &SphereGrid,
) -> Result<(SupportVector, ConvexBody)> {
    if bodies.is_empty() {
        return Err(Error::Empty("sample of bodies"));
    }
    if weights.len() != bodies.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} bodies",
            weights.len(),
            bodies.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidWeights("weights must be finite".into()));
    }
    let n = bodies.len() as f64;
    let mean_weight = weights.iter().sum::<f64>() / n;
    if (mean_weight - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights average to {mean_weight}, expected 1"
        )));
    }
    let vectors = support_vectors(bodies, grid)?;
    let coefs: Vec<f64> = weights.iter().map(|w| w / n).collect();
    let raw = linear_combination(grid, &coefs, &vectors);
    let projected = project_to_cone(&raw)?;
    Ok((projected.clone(), reconstruct(&projected)?))
}

/// Per-group sample size and Fréchet mean.
#[derive(Debug, Clone)]
pub struct GroupMean {
    pub count: usize,
    pub mean: ConvexBody,
}

/// Fréchet mean of the outcomes within each group defined by `key(X_i)`.
pub fn conditional_frechet_mean<K, F>(
    dataset: &RegressionDataset,
    grid: &SphereGrid,
    key: F,
) -> Result<BTreeMap<K, GroupMean>>
where
    K: Ord,
    F: Fn(&[f64]) -> K,
{
    let mut groups: BTreeMap<K, Vec<ConvexBody>> = BTreeMap::new();
    for (body, x) in dataset.bodies().iter().zip(dataset.covariates()) {
        groups.entry(key(x)).or_default().push(body.clone());
    }
    if groups.is_empty() {
        return Err(Error::Empty("groups"));
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let mean = sample_frechet_mean(&members, grid)?;
            Ok((
                k,
                GroupMean {
                    count: members.len(),
                    mean,
                },
            ))
        })
        .collect()
}

/// Which covariance enters the regression weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsMode {
    /// `Σ̂ = n^{-1} Σ (X_i - X̄)(X_i - X̄)'`.
    Standard,
    /// Errors-in-variables: `Σ̂_ZW = n^{-1} Σ (Z_i - Z̄)(W_i - W̄)'` with the
    /// mismeasured covariates `W` in the covariate slot and instruments `Z`.
    ErrorsInVariables,
}

#[derive(Debug, Clone)]
pub struct GfrDiagnostics {
    pub condition_number: f64,
    /// `Σ̂_W - sym(Σ̂_ZW)`, an estimate of the measurement-error covariance.
    pub measurement_error_cov: Option<DMatrix<f64>>,
}

/// A fitted global Fréchet regression.
#[derive(Debug, Clone)]
pub struct FittedGfr {
    grid: SphereGrid,
    mode: WeightsMode,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    covariance_inv: DMatrix<f64>,
    covariates: Vec<Vec<f64>>,
    support: Vec<SupportVector>,
    diagnostics: GfrDiagnostics,
}

/// Output of a regression prediction at one covariate value.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// The regression function value: reconstruction of the projected average.
    pub m_oplus: ConvexBody,
    /// Weighted average of support vectors before projection.
    pub raw: SupportVector,
    /// Projection of `raw` onto the support cone.
    pub projected: SupportVector,
    pub in_cone: bool,
    /// Aumann-type companion `⊕ c_i F_i` using signed set scaling.
    pub aumann_w: ConvexBody,
    pub subset_flag: bool,
    pub weights_min: f64,
}

fn mean_and_covariance(
    rows: &[Vec<f64>],
    other: Option<&[Vec<f64>]>,
    probs: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let p = rows[0].len();
    let mean_of = |m: &[Vec<f64>]| {
        let mut mu = DVector::<f64>::zeros(p);
        for (row, pr) in m.iter().zip(probs) {
            for j in 0..p {
                mu[j] += pr * row[j];
            }
        }
        mu
    };
    let mu = mean_of(rows);
    let (lhs, lhs_mean) = match other {
        Some(z) => (z, mean_of(z)),
        None => (rows, mu.clone()),
    };
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for ((l, r), pr) in lhs.iter().zip(rows).zip(probs) {
        for a in 0..p {
            let da = l[a] - lhs_mean[a];
            for b in 0..p {
                cov[(a, b)] += pr * da * (r[b] - mu[b]);
            }
        }
    }
    (mu, cov)
}

fn checked_inverse(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sv = cov.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition >= MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    let inv = cov
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { condition })?;
    Ok((inv, condition))
}

fn weights_at(mean: &DVector<f64>, cov_inv: &DMatrix<f64>, x: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = mean.len();
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.len(),
        });
    }
    let dx = DVector::from_iterator(p, x.iter().zip(mean.iter()).map(|(a, b)| a - b));
    let row = dx.transpose() * cov_inv;
    Ok(rows
        .iter()
        .map(|z| 1.0 + (0..p).map(|j| row[j] * (z[j] - mean[j])).sum::<f64>())
        .collect())
}

fn predict_from_coefficients(
    grid: &SphereGrid,
    vectors: &[SupportVector],
    coefs: &[f64],
    weights_min: f64,
) -> Result<Prediction> {
    let total: f64 = coefs.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "regression weights average to {total}, expected 1"
        )));
    }
    let raw = linear_combination(grid, coefs, vectors);
    let in_cone = is_support_vector(&raw, DEFAULT_TOL);
    let projected = project_to_cone(&raw)?;
    let m_oplus = reconstruct(&projected)?;
    let pairs: Vec<(f64, &SupportVector)> = coefs.iter().copied().zip(vectors).collect();
    let aumann_w = reconstruct(&signed_combination(&pairs)?)?;
    let subset_flag = is_subset(&m_oplus, &aumann_w, grid, MEMBERSHIP_TOL)?;
    Ok(Prediction {
        m_oplus,
        raw,
        projected,
        in_cone,
        aumann_w,
        subset_flag,
        weights_min,
    })
}

/// Fits the sample global Fréchet regression.
pub fn gfr_fit(dataset: &RegressionDataset, grid: &SphereGrid, mode: WeightsMode) -> Result<FittedGfr> {
    if dataset.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: dataset.dim(),
        });
    }
    let n = dataset.len();
    let p = dataset.n_covariates();
    if p == 0 {
        return Err(Error::InvalidDataset("regression needs at least one covariate".into()));
    }
    if n < p + 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least {} observations for {p} covariates, got {n}",
            p + 2
        )));
    }
    let probs = vec![1.0 / n as f64; n];
    let rows = dataset.covariates();
    let (mean, covariance, measurement_error_cov) = match mode {
        WeightsMode::Standard => {
            let (mu, cov) = mean_and_covariance(rows, None, &probs);
            let asym = (&cov - cov.transpose()).amax();
            debug_assert!(asym <= 1e-10, "covariance asymmetry {asym}");
            (mu, cov, None)
        }
        WeightsMode::ErrorsInVariables => {
            let z = dataset.instruments().ok_or_else(|| {
                Error::InvalidDataset("errors-in-variables mode needs instruments".into())
            })?;
            let (mu, cov_zw) = mean_and_covariance(rows, Some(z), &probs);
            let (_, cov_w) = mean_and_covariance(rows, None, &probs);
            let sym = (&cov_zw + cov_zw.transpose()) * 0.5;
            (mu, cov_zw, Some(cov_w - sym))
        }
    };
    let (covariance_inv, condition_number) = checked_inverse(&covariance)?;
    Ok(FittedGfr {
        grid: grid.clone(),
        mode,
        mean,
        covariance,
        covariance_inv,
        covariates: rows.to_vec(),
        support: support_vectors(dataset.bodies(), grid)?,
        diagnostics: GfrDiagnostics {
            condition_number,
            measurement_error_cov,
        },
    })
}

impl FittedGfr {
    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn mode(&self) -> WeightsMode {
        self.mode
    }

    pub fn mean_covariate(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn diagnostics(&self) -> &GfrDiagnostics {
        &self.diagnostics
    }

    pub fn support_vectors(&self) -> &[SupportVector] {
        &self.support
    }

    /// `ŵ(x, X_i)` for every observation.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        weights_at(&self.mean, &self.covariance_inv, x, &self.covariates)
    }
}

/// Predicts the regression function at `x`.
pub fn gfr_predict(fit: &FittedGfr, x: &[f64]) -> Result<Prediction> {
    let weights = fit.weights(x)?;
    let n = weights.len() as f64;
    let weights_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let coefs: Vec<f64> = weights.iter().map(|w| w / n).collect();
    predict_from_coefficients(&fit.grid, &fit.support, &coefs, weights_min)
}

/// Population regression function of a discrete law, with exact moments.
pub fn population_gfr(dist: &DiscreteSetDistribution, x: &[f64], grid: &SphereGrid) -> Result<Prediction> {
    let probs: Vec<f64> = dist.atoms().iter().map(|a| a.probability).collect();
    let rows: Vec<Vec<f64>> = dist.atoms().iter().map(|a| a.covariate.clone()).collect();
    let (mean, cov) = mean_and_covariance(&rows, None, &probs);
    let (cov_inv, _) = checked_inverse(&cov)?;
    let weights = weights_at(&mean, &cov_inv, x, &rows)?;
    let weights_min = weights
        .iter()
        .zip(&probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(w, _)| *w)
        .fold(f64::INFINITY, f64::min);
    let coefs: Vec<f64> = weights.iter().zip(&probs).map(|(w, p)| w * p).collect();
    let bodies: Vec<ConvexBody> = dist.atoms().iter().map(|a| a.body.clone()).collect();
    predict_from_coefficients(grid, &support_vectors(&bodies, grid)?, &coefs, weights_min)
}

/// Set-valued best linear predictor `(Θ_0, Θ_1)`.
#[derive(Debug, Clone)]
pub struct BlpTheta {
    pub intercept: ConvexBody,
    pub slopes: Vec<ConvexBody>,
    pub mean_covariate: Vec<f64>,
}

/// `Θ_0 = n^{-1} ⊕ F_i`, `Θ_{1,j} = ⊕_k (Σ̂^{-1})_{jk} · n^{-1} ⊕_i (X_{ik} - X̄_k) F_i`.
pub fn blp_theta(fit: &FittedGfr) -> Result<BlpTheta> {
    if fit.mode != WeightsMode::Standard {
        return Err(Error::InvalidDataset(
            "best linear predictor needs a standard-mode fit".into(),
        ));
    }
    let n = fit.support.len();
    let p = fit.mean.len();
    let grid = &fit.grid;
    let intercept = reconstruct(&linear_combination(grid, &vec![1.0 / n as f64; n], &fit.support))?;
    let cross: Vec<SupportVector> = (0..p)
        .map(|k| {
            let pairs: Vec<(f64, &SupportVector)> = fit
                .covariates
                .iter()
                .zip(&fit.support)
                .map(|(x, sv)| ((x[k] - fit.mean[k]) / n as f64, sv))
                .collect();
            signed_combination(&pairs)
        })
        .collect::<Result<_>>()?;
    let slopes = (0..p)
        .map(|j| {
            let pairs: Vec<(f64, &SupportVector)> =
                (0..p).map(|k| (fit.covariance_inv[(j, k)], &cross[k])).collect();
            reconstruct(&signed_combination(&pairs)?)
        })
        .collect::<Result<_>>()?;
    Ok(BlpTheta {
        intercept,
        slopes,
        mean_covariate: fit.mean.iter().copied().collect(),
    })
}

impl BlpTheta {
    /// `Θ_0 ⊕ Σ_j (x_j - X̄_j) Θ_{1,j}` with signed set scaling.
    pub fn evaluate(&self, x: &[f64], grid: &SphereGrid) -> Result<ConvexBody> {
        if x.len() != self.slopes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.slopes.len(),
                found: x.len(),
            });
        }
        let mut terms = vec![(1.0, &self.intercept)];
        for (j, slope) in self.slopes.iter().enumerate() {
            terms.push((x[j] - self.mean_covariate[j], slope));
        }
        crate::geometry::minkowski_combine(&terms, grid)
    }
}

/// Replaces each value by the bin of `[min, max]` split into `k` equal
/// widths. Bins are right-closed; the first bin also contains `min`.
pub fn five_interval_outcome(values: &[f64], k: usize) -> Result<Vec<ConvexBody>> {
    if k < 1 {
        return Err(Error::InvalidDataset("number of bins must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Empty("outcome values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("outcome values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::InvalidDataset("outcome support has zero width".into()));
    }
    let width = (hi - lo) / k as f64;
    let edge = |j: usize| if j == k { hi } else { lo + width * j as f64 };
    values
        .iter()
        .map(|&v| {
            // smallest j with v <= edge(j + 1)
            let mut j = (((v - lo) / width).ceil() as usize).clamp(1, k) - 1;
            while j > 0 && v <= edge(j) {
                j -= 1;
            }
            while j + 1 < k && v > edge(j + 1) {
                j += 1;
            }
            ConvexBody::interval(edge(j), edge(j + 1))
        })
        .collect()
}
