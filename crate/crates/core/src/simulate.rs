//! Seeded data-generating processes and Monte Carlo rate experiments.
//!
//! Every `(n, replication)` cell draws from its own ChaCha20 stream derived
//! from the config seed, so results do not depend on execution order or on
//! the number of worker threads.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{gfr_fit, gfr_predict, RegressionDataset, WeightsMode};
use crate::geometry::{to_support_vector, ConvexBody, Point, Polygon, SphereGrid, SupportVector};
use crate::missing::{fit_propensity, ipw_frechet_mean, PropensityModel, DEFAULT_TRIM};

/// Half-width of the uniform covariate design `[-2, 2]^p`.
pub const COVARIATE_RANGE: f64 = 2.0;

/// Environment variable capping worker threads (unset or 0 = automatic).
pub const THREADS_ENV: &str = "SETSTAT_THREADS";

/// Random intervals `[c - r, c + r]` with `c = a'X + σ_c ε` and
/// `r = r_0 + Σ_j |b_j X_j| + σ_r |η|`, `ε, η` standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalParams {
    pub slope: Vec<f64>,
    pub radius_base: f64,
    pub radius_slope: Vec<f64>,
    #[serde(default)]
    pub center_noise: f64,
    #[serde(default)]
    pub radius_noise: f64,
}

/// Random polygons `c + r·P_0` with `c = A'X + σ_c ε` (ε standard normal in R²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonParams {
    /// One planar coefficient per covariate.
    pub center_slope: Vec<Point>,
    /// Vertices of the base shape `P_0`.
    pub shape: Vec<Point>,
    pub radius_base: f64,
    pub radius_slope: Vec<f64>,
    #[serde(default)]
    pub center_noise: f64,
    #[serde(default)]
    pub radius_noise: f64,
}

/// True response mechanism `P(T = 1 | X = x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "link", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruePropensity {
    Logistic { intercept: f64, slope: Vec<f64> },
    /// `low` when `x_1 < 0`, `high` otherwise (not logistic in `x`).
    Step { low: f64, high: f64 },
}

impl TruePropensity {
    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            TruePropensity::Logistic { intercept, slope } => {
                let eta = intercept + slope.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
                1.0 / (1.0 + (-eta).exp())
            }
            TruePropensity::Step { low, high } => {
                if x[0] < 0.0 {
                    *low
                } else {
                    *high
                }
            }
        }
    }
}

/// How the IPW experiment obtains `ê`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityEstimator {
    /// Logistic maximum likelihood on the simulated indicators.
    #[default]
    Logistic,
    /// The true scores of the data-generating process.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dgp {
    IntervalLinear(IntervalParams),
    PolygonLinear(PolygonParams),
    MarInterval {
        outcome: IntervalParams,
        propensity: TruePropensity,
        #[serde(default)]
        estimator: PropensityEstimator,
        #[serde(default = "default_trim")]
        trim: f64,
    },
}

fn default_trim() -> f64 {
    DEFAULT_TRIM
}

fn default_grid() -> usize {
    crate::geometry::DEFAULT_CIRCLE_SIZE
}

/// Monte Carlo experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub dgp: Dgp,
    /// Covariate values whose worst error is recorded (regression experiments).
    #[serde(default)]
    pub probe_points: Vec<Vec<f64>>,
    /// Number of circle directions for planar outcomes.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_covariates(&self) -> usize {
        match &self.dgp {
            Dgp::IntervalLinear(p) => p.slope.len(),
            Dgp::PolygonLinear(p) => p.center_slope.len(),
            Dgp::MarInterval { outcome, .. } => outcome.slope.len(),
        }
    }

    pub fn sphere_grid(&self) -> Result<SphereGrid> {
        match self.dgp {
            Dgp::PolygonLinear(_) => SphereGrid::circle(self.grid),
            _ => Ok(SphereGrid::line()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty".into());
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample_sizes must be strictly increasing".into());
        }
        if self.replications < 10 {
            return bad(format!("replications must be at least 10, got {}", self.replications));
        }
        let p = self.n_covariates();
        if p == 0 {
            return bad("the design needs at least one covariate".into());
        }
        if self.sample_sizes[0] < p + 2 {
            return bad(format!("sample sizes must be at least {}", p + 2));
        }
        let check_interval = |o: &IntervalParams| {
            if o.radius_slope.len() != p {
                return bad("radius_slope must have one entry per covariate".into());
            }
            if o.radius_base < 0.0 || o.center_noise < 0.0 || o.radius_noise < 0.0 {
                return bad("radius and noise scales must be nonnegative".into());
            }
            Ok(())
        };
        match &self.dgp {
            Dgp::IntervalLinear(o) => check_interval(o)?,
            Dgp::MarInterval {
                outcome,
                propensity,
                trim,
                ..
            } => {
                check_interval(outcome)?;
                if !(*trim > 0.0 && *trim < 0.5) {
                    return bad(format!("trim must lie in (0, 1/2), got {trim}"));
                }
                match propensity {
                    TruePropensity::Logistic { slope, .. } if slope.len() != p => {
                        return bad("propensity slope must have one entry per covariate".into())
                    }
                    TruePropensity::Step { low, high }
                        if !(*low > 0.0 && *low <= 1.0 && *high > 0.0 && *high <= 1.0) =>
                    {
                        return bad("step propensity levels must lie in (0, 1]".into())
                    }
                    _ => {}
                }
            }
            Dgp::PolygonLinear(o) => {
                if o.radius_slope.len() != p {
                    return bad("radius_slope must have one entry per covariate".into());
                }
                if o.radius_base < 0.0 || o.center_noise < 0.0 || o.radius_noise < 0.0 {
                    return bad("radius and noise scales must be nonnegative".into());
                }
                Polygon::new(o.shape.clone())
                    .map_err(|e| Error::InvalidConfig(format!("shape: {e}")))?;
                SphereGrid::circle(self.grid).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
        }
        if let Some(x) = self.probe_points.iter().find(|x| x.len() != p) {
            return bad(format!("probe point {x:?} does not have {p} coordinates"));
        }
        Ok(())
    }
}

/// Stream for cell `(n, rep)`.
pub fn cell_rng(seed: u64, n: usize, rep: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 24) ^ rep as u64);
    rng
}

fn draw_covariates(rng: &mut ChaCha20Rng, p: usize) -> Vec<f64> {
    (0..p)
        .map(|_| rng.random_range(-COVARIATE_RANGE..COVARIATE_RANGE))
        .collect()
}

fn radius(base: f64, slope: &[f64], x: &[f64], noise: f64, rng: &mut ChaCha20Rng) -> f64 {
    let eta: f64 = rng.sample(StandardNormal);
    base + slope.iter().zip(x).map(|(b, v)| (b * v).abs()).sum::<f64>() + noise * eta.abs()
}

/// `E[r] = r_0 + Σ_j |b_j| E|X_j| + σ_r E|η|`, with `E|X_j| = 1` on `[-2, 2]`.
fn mean_radius(base: f64, slope: &[f64], noise: f64) -> f64 {
    base + slope.iter().map(|b| b.abs() * COVARIATE_RANGE / 2.0).sum::<f64>()
        + noise * (2.0 / PI).sqrt()
}

fn interval_draw(o: &IntervalParams, rng: &mut ChaCha20Rng) -> Result<(Vec<f64>, ConvexBody)> {
    let x = draw_covariates(rng, o.slope.len());
    let eps: f64 = rng.sample(StandardNormal);
    let c = o.slope.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + o.center_noise * eps;
    let r = radius(o.radius_base, &o.radius_slope, &x, o.radius_noise, rng);
    Ok((x, ConvexBody::interval(c - r, c + r)?))
}

fn polygon_draw(o: &PolygonParams, rng: &mut ChaCha20Rng) -> Result<(Vec<f64>, ConvexBody)> {
    let x = draw_covariates(rng, o.center_slope.len());
    let e0: f64 = rng.sample(StandardNormal);
    let e1: f64 = rng.sample(StandardNormal);
    let mut c = [o.center_noise * e0, o.center_noise * e1];
    for (a, v) in o.center_slope.iter().zip(&x) {
        c[0] += a[0] * v;
        c[1] += a[1] * v;
    }
    let r = radius(o.radius_base, &o.radius_slope, &x, o.radius_noise, rng);
    let verts = o.shape.iter().map(|v| [c[0] + r * v[0], c[1] + r * v[1]]).collect();
    Ok((x, ConvexBody::polygon(verts)?))
}

/// Draws the sample of size `n` for replication `rep`.
///
/// For `mar-interval` the indicators `T_i` are attached; rows with `T_i = 0`
/// keep their true body, which the IPW estimator never reads.
pub fn generate_dataset(config: &SimConfig, n: usize, rep: usize) -> Result<RegressionDataset> {
    let mut rng = cell_rng(config.seed, n, rep);
    let mut bodies = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, body) = match &config.dgp {
            Dgp::IntervalLinear(o) => interval_draw(o, &mut rng)?,
            Dgp::MarInterval { outcome, .. } => interval_draw(outcome, &mut rng)?,
            Dgp::PolygonLinear(o) => polygon_draw(o, &mut rng)?,
        };
        if let Dgp::MarInterval { propensity, .. } = &config.dgp {
            let u: f64 = rng.random();
            observed.push(u < propensity.score(&x));
        }
        bodies.push(body);
        xs.push(x);
    }
    let data = RegressionDataset::new(bodies, xs)?;
    match config.dgp {
        Dgp::MarInterval { .. } => data.with_observed(observed),
        _ => Ok(data),
    }
}

/// Interval-outcome sample for `interval-linear` or `mar-interval` configs.
pub fn generate_interval_dgp(config: &SimConfig, n: usize, rep: usize) -> Result<RegressionDataset> {
    match config.dgp {
        Dgp::PolygonLinear(_) => Err(Error::InvalidConfig(
            "generate_interval_dgp needs an interval design".into(),
        )),
        _ => generate_dataset(config, n, rep),
    }
}

/// Support vector of the population regression function at `x`.
///
/// The best linear predictor of `|b_j X_j|` on a symmetric design is its
/// mean, so the target is `a'x ± E[r]` for intervals and `A'x + E[r] P_0`
/// for polygons; both are genuine support functions, so no projection is
/// involved.
pub fn population_regression(config: &SimConfig, x: &[f64], grid: &SphereGrid) -> Result<SupportVector> {
    if x.len() != config.n_covariates() {
        return Err(Error::DimensionMismatch {
            expected: config.n_covariates(),
            found: x.len(),
        });
    }
    match &config.dgp {
        Dgp::IntervalLinear(o) | Dgp::MarInterval { outcome: o, .. } => {
            let c = o.slope.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            let r = mean_radius(o.radius_base, &o.radius_slope, o.radius_noise);
            SupportVector::new(grid.clone(), vec![r - c, c + r])
        }
        Dgp::PolygonLinear(o) => {
            let mut c = [0.0, 0.0];
            for (a, v) in o.center_slope.iter().zip(x) {
                c[0] += a[0] * v;
                c[1] += a[1] * v;
            }
            let r = mean_radius(o.radius_base, &o.radius_slope, o.radius_noise);
            let shape = Polygon::new(o.shape.clone())?;
            let values = grid
                .directions()
                .iter()
                .map(|p| p[0] * c[0] + p[1] * c[1] + r * shape.support(*p))
                .collect();
            SupportVector::new(grid.clone(), values)
        }
    }
}

/// Population Fréchet mean `E[F]` of the MAR design (covariates centred at zero).
pub fn population_mean(config: &SimConfig, grid: &SphereGrid) -> Result<SupportVector> {
    population_regression(config, &vec![0.0; config.n_covariates()], grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub n: usize,
    pub rep: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
}

/// Errors per cell plus the log-log fit of median error against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub errors: Vec<CellError>,
    pub summary: Vec<SizeSummary>,
    pub slope: f64,
    pub intercept: f64,
    /// `None` when fewer than three sample sizes are used.
    pub slope_se: Option<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// OLS of `y` on `x`: `(intercept, slope, se(slope))`.
pub fn loglog_fit(points: &[(f64, f64)]) -> (f64, f64, Option<f64>) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = (points.len() > 2).then(|| {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (k - 2.0) / sxx).sqrt()
    });
    (intercept, slope, se)
}

impl RateResult {
    fn from_errors(sizes: &[usize], errors: Vec<CellError>) -> Result<Self> {
        let summary: Vec<SizeSummary> = sizes
            .iter()
            .map(|&n| {
                let mut e: Vec<f64> = errors.iter().filter(|c| c.n == n).map(|c| c.error).collect();
                let mean = e.iter().sum::<f64>() / e.len() as f64;
                SizeSummary {
                    n,
                    median: median(&mut e),
                    mean,
                }
            })
            .collect();
        let (intercept, slope, slope_se) = if summary.len() >= 2 {
            let pts: Vec<(f64, f64)> = summary
                .iter()
                .map(|s| ((s.n as f64).ln(), s.median.ln()))
                .collect();
            loglog_fit(&pts)
        } else {
            (f64::NAN, f64::NAN, None)
        };
        Ok(RateResult {
            errors,
            summary,
            slope,
            intercept,
            slope_se,
        })
    }

    /// `slope / se(slope)`.
    pub fn t_statistic(&self) -> Option<f64> {
        self.slope_se.map(|se| self.slope / se)
    }

    /// `n,rep,error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,rep,error\n");
        for c in &self.errors {
            let _ = writeln!(out, "{},{},{}", c.n, c.rep, c.error);
        }
        out
    }

    /// `(log n, log median error)` pairs.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("log_n,log_median_error\n");
        for s in &self.summary {
            let _ = writeln!(out, "{},{}", (s.n as f64).ln(), s.median.ln());
        }
        out
    }

    /// Per-n medians and means with the fitted slope.
    pub fn summary_json(&self) -> String {
        let value = serde_json::json!({
            "sizes": self.summary,
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_se": self.slope_se,
        });
        serde_json::to_string_pretty(&value).expect("summary serializes") + "\n"
    }
}

/// Thread count from [`THREADS_ENV`]; `None` means rayon's default.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

fn run_cells<F>(config: &SimConfig, cell: F) -> Result<RateResult>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    config.validate()?;
    let cells: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let compute = || -> Vec<Result<f64>> { cells.par_iter().map(|&(n, r)| cell(n, r)).collect() };
    let results = match configured_threads() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(compute),
        None => compute(),
    };
    let errors = cells
        .iter()
        .zip(results)
        .map(|(&(n, rep), e)| e.map(|error| CellError { n, rep, error }))
        .collect::<Result<Vec<_>>>()?;
    RateResult::from_errors(&config.sample_sizes, errors)
}

/// Worst-probe `d_kc` error of the sample regression, per cell.
pub fn run_gfr_rate_experiment(config: &SimConfig) -> Result<RateResult> {
    if matches!(config.dgp, Dgp::MarInterval { .. }) {
        return Err(Error::InvalidConfig("gfr-rate needs a regression design".into()));
    }
    if config.probe_points.is_empty() {
        return Err(Error::InvalidConfig("gfr-rate needs probe points".into()));
    }
    let grid = config.sphere_grid()?;
    let targets = config
        .probe_points
        .iter()
        .map(|x| population_regression(config, x, &grid))
        .collect::<Result<Vec<_>>>()?;
    run_cells(config, |n, rep| {
        let data = generate_dataset(config, n, rep)?;
        let fit = gfr_fit(&data, &grid, WeightsMode::Standard)?;
        let mut worst = 0.0_f64;
        for (x, target) in config.probe_points.iter().zip(&targets) {
            let pred = gfr_predict(&fit, x)?;
            let est = to_support_vector(&pred.m_oplus, &grid)?;
            worst = worst.max(est.distance(target));
        }
        Ok(worst)
    })
}

/// `d_kc` between the IPW mean and the population mean, per cell.
pub fn run_ipw_rate_experiment(config: &SimConfig) -> Result<RateResult> {
    let Dgp::MarInterval {
        propensity,
        estimator,
        trim,
        ..
    } = &config.dgp
    else {
        return Err(Error::InvalidConfig("ipw-rate needs a mar-interval design".into()));
    };
    let grid = config.sphere_grid()?;
    let target = population_mean(config, &grid)?;
    run_cells(config, |n, rep| {
        let data = generate_dataset(config, n, rep)?;
        let model = match estimator {
            PropensityEstimator::Logistic => fit_propensity(&data, *trim)?,
            PropensityEstimator::Oracle => PropensityModel::known(
                data.covariates().iter().map(|x| propensity.score(x)).collect(),
                *trim,
            )?,
        };
        let est = ipw_frechet_mean(&data, &model, &grid)?;
        Ok(to_support_vector(&est, &grid)?.distance(&target))
    })
}
