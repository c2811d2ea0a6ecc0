//! Inverse-probability-weighted Fréchet means for outcomes missing at random.

use nalgebra::{DMatrix, DVector};

use crate::cone::reconstruct;
use crate::error::{Error, Result};
use crate::frechet::{weighted_frechet_mean, RegressionDataset};
use crate::geometry::{to_support_vector, ConvexBody, Shape, SphereGrid, SupportVector};

/// Default trimming level `η_0`.
pub const DEFAULT_TRIM: f64 = 0.05;

const MAX_NEWTON_ITERATIONS: usize = 100;
const GRADIENT_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;
// |linear predictor| beyond this at the optimum means the classes separate
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PropensityKind {
    /// User-supplied scores.
    Known,
    /// Logistic regression on `(1, X)`; `coefficients[0]` is the intercept.
    Logistic { coefficients: Vec<f64>, iterations: usize },
}

/// Propensity scores `ê(X_i)` clipped to `[η_0, 1 - η_0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    kind: PropensityKind,
    trim: f64,
    scores: Vec<f64>,
}

fn check_trim(trim: f64) -> Result<()> {
    if trim > 0.0 && trim < 0.5 {
        Ok(())
    } else {
        Err(Error::Propensity(format!("trim must lie in (0, 1/2), got {trim}")))
    }
}

impl PropensityModel {
    /// Wraps known scores; they are only clipped.
    pub fn known(scores: Vec<f64>, trim: f64) -> Result<Self> {
        check_trim(trim)?;
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Propensity("known scores must lie in [0, 1]".into()));
        }
        Ok(PropensityModel {
            kind: PropensityKind::Known,
            trim,
            scores: scores.into_iter().map(|s| s.clamp(trim, 1.0 - trim)).collect(),
        })
    }

    pub fn kind(&self) -> &PropensityKind {
        &self.kind
    }

    pub fn trim(&self) -> f64 {
        self.trim
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Logistic coefficients, if the model was fitted.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.kind {
            PropensityKind::Logistic { coefficients, .. } => Some(coefficients),
            PropensityKind::Known => None,
        }
    }
}

fn log_sigmoid(eta: f64) -> f64 {
    // log(1 / (1 + e^{-eta})) without overflow
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(design: &DMatrix<f64>, t: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter()
        .zip(t)
        .map(|(e, ti)| ti * log_sigmoid(*e) + (1.0 - ti) * log_sigmoid(-*e))
        .sum()
}

/// Logistic maximum likelihood for `P(T = 1 | X)` by damped Newton steps.
pub fn fit_propensity(dataset: &RegressionDataset, trim: f64) -> Result<PropensityModel> {
    check_trim(trim)?;
    let observed = dataset
        .observed()
        .ok_or_else(|| Error::Propensity("dataset has no missingness indicators".into()))?;
    let n = observed.len();
    let n_obs = observed.iter().filter(|t| **t).count();
    if n_obs == 0 || n_obs == n {
        return Err(Error::Propensity(
            "missingness indicators contain a single class".into(),
        ));
    }
    let p = dataset.n_covariates() + 1;
    let design = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            dataset.covariates()[i][j - 1]
        }
    });
    let t: Vec<f64> = observed.iter().map(|b| f64::from(u8::from(*b))).collect();
    let tv = DVector::from_column_slice(&t);

    let mut beta = DVector::<f64>::zeros(p);
    let rate = n_obs as f64 / n as f64;
    beta[0] = (rate / (1.0 - rate)).ln();
    let mut ll = log_likelihood(&design, &t, &beta);
    for iteration in 1..=MAX_NEWTON_ITERATIONS {
        let eta = &design * &beta;
        let prob = eta.map(sigmoid);
        let grad = design.transpose() * (&tv - &prob);
        let grad_norm = grad.norm() / n as f64;
        if grad_norm < GRADIENT_TOL {
            if eta.amax() > SEPARATION_ETA {
                return Err(Error::Propensity(
                    "logistic fit diverges: classes are (quasi-)separated".into(),
                ));
            }
            let scores = prob.iter().map(|s| s.clamp(trim, 1.0 - trim)).collect();
            return Ok(PropensityModel {
                kind: PropensityKind::Logistic {
                    coefficients: beta.iter().copied().collect(),
                    iterations: iteration - 1,
                },
                trim,
                scores,
            });
        }
        let w = prob.map(|s| s * (1.0 - s));
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            for a in 0..p {
                for b in 0..p {
                    info[(a, b)] += w[i] * design[(i, a)] * design[(i, b)];
                }
            }
        }
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Propensity("information matrix is singular".into()))?
            .solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let cand_ll = log_likelihood(&design, &t, &candidate);
            if cand_ll >= ll {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::Propensity("Newton step failed to increase the likelihood".into()));
        }
    }
    Err(Error::Propensity(format!(
        "logistic fit did not converge in {MAX_NEWTON_ITERATIONS} iterations (possible separation)"
    )))
}

/// Both IPW estimators of the Fréchet mean.
#[derive(Debug, Clone)]
pub struct IpwEstimate {
    /// Self-normalized (Hájek) estimator.
    pub hajek: ConvexBody,
    /// `n^{-1} ⊕ (T_i / ê_i) F_i` without normalization.
    pub unnormalized: ConvexBody,
    /// `n^{-1} Σ T_i / ê_i`.
    pub mean_weight: f64,
    pub weights_min: f64,
}

fn ipw_weights(dataset: &RegressionDataset, model: &PropensityModel) -> Result<Vec<f64>> {
    let observed = dataset
        .observed()
        .ok_or_else(|| Error::Propensity("dataset has no missingness indicators".into()))?;
    if model.scores().len() != observed.len() {
        return Err(Error::Propensity(format!(
            "{} scores for {} observations",
            model.scores().len(),
            observed.len()
        )));
    }
    if !observed.iter().any(|t| *t) {
        return Err(Error::Propensity("no observed outcomes".into()));
    }
    observed
        .iter()
        .zip(model.scores())
        .map(|(t, e)| {
            if *e < model.trim() {
                return Err(Error::Propensity(format!("score {e} below the trim level")));
            }
            Ok(if *t { 1.0 / e } else { 0.0 })
        })
        .collect()
}

/// Self-normalized and unnormalized IPW means.
pub fn ipw_estimate(
    dataset: &RegressionDataset,
    model: &PropensityModel,
    grid: &SphereGrid,
) -> Result<IpwEstimate> {
    let raw = ipw_weights(dataset, model)?;
    let n = raw.len() as f64;
    let mean_weight = raw.iter().sum::<f64>() / n;
    let normalized: Vec<f64> = raw.iter().map(|r| r / mean_weight).collect();
    let hajek = weighted_frechet_mean(dataset.bodies(), &normalized, grid)?;

    let mut acc = SupportVector::zeros(grid);
    for (r, body) in raw.iter().zip(dataset.bodies()) {
        if *r > 0.0 {
            acc.axpy(r / n, &to_support_vector(body, grid)?);
        }
    }
    let unnormalized = reconstruct(&acc)?;
    let weights_min = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(IpwEstimate {
        hajek,
        unnormalized,
        mean_weight,
        weights_min,
    })
}

/// Self-normalized IPW Fréchet mean.
pub fn ipw_frechet_mean(
    dataset: &RegressionDataset,
    model: &PropensityModel,
    grid: &SphereGrid,
) -> Result<ConvexBody> {
    Ok(ipw_estimate(dataset, model, grid)?.hajek)
}

/// Point at parameter `rho` on the extended geodesic from `{0}` through
/// `body`, which is the dilation `rho · body`.
pub fn geodesic_scale(body: &ConvexBody, rho: f64, grid: &SphereGrid) -> Result<ConvexBody> {
    if !rho.is_finite() || rho < 0.0 {
        return Err(Error::InvalidWeights(format!(
            "geodesic parameter must be nonnegative, got {rho}"
        )));
    }
    if body.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: body.dim(),
        });
    }
    match body.shape() {
        Shape::Interval { lower, upper } => ConvexBody::interval(rho * lower, rho * upper),
        Shape::Polygon(poly) => {
            let pts = poly.vertices().iter().map(|v| [rho * v[0], rho * v[1]]).collect();
            ConvexBody::polygon(pts)
        }
        Shape::Support(g) => ConvexBody::from_support(g.scaled(rho)),
    }
}
