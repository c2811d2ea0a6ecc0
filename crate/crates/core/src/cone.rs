//! The discrete support cone on a grid.
//!
//! On S^0 the cone is `{g : g(-1) + g(1) >= 0}`. On the circle grid it is
//! the cyclic family of second-difference inequalities
//! `g_i sin(θ_{i+1} - θ_{i-1}) <= g_{i-1} sin(θ_{i+1} - θ_i) + g_{i+1} sin(θ_i - θ_{i-1})`,
//! i.e. the halfspace with normal `p_i` must cut (or touch) the corner formed
//! by its two neighbours. The rows below are normalized so the coefficient
//! of `g_i` is one, which makes violations read in support units.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, Point, Polygon, SphereGrid, SupportVector};

/// Tolerance used when a body is built from support values.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// Successive Dykstra iterates closer than this (weighted norm) stop the sweep.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Hard cap on Dykstra sweeps.
pub const MAX_SWEEPS: usize = 10_000;

const RELAXATION: f64 = 1.9;
const PRUNE_SLACK: f64 = 1e-10;
const MIN_GAP_SIN: f64 = 1e-12;

/// One normalized constraint `g_i - prev·g_{i-1} - next·g_{i+1} <= 0`.
#[derive(Debug, Clone, Copy)]
struct Row {
    prev: f64,
    next: f64,
}

/// Linear description of the support cone of a grid.
#[derive(Debug, Clone)]
pub struct ConeDescription {
    grid: SphereGrid,
    rows: Vec<Row>,
}

impl ConeDescription {
    pub fn new(grid: &SphereGrid) -> Result<Self> {
        let rows = match grid.dim() {
            1 => Vec::new(),
            _ => {
                let m = grid.len();
                (0..m)
                    .map(|i| {
                        let th_prev = grid.angle((i + m - 1) % m);
                        let th = grid.angle(i);
                        let th_next = grid.angle((i + 1) % m);
                        let gap_prev = (th - th_prev).rem_euclid(std::f64::consts::TAU);
                        let gap_next = (th_next - th).rem_euclid(std::f64::consts::TAU);
                        let span = (gap_prev + gap_next).sin();
                        if !(gap_prev > 0.0 && gap_next > 0.0 && gap_prev + gap_next < std::f64::consts::PI)
                            || span <= 0.0
                        {
                            return Err(Error::InvalidGrid(format!(
                                "angle gaps around direction {i} are not in (0, π)"
                            )));
                        }
                        Ok(Row {
                            prev: gap_next.sin() / span,
                            next: gap_prev.sin() / span,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(ConeDescription {
            grid: grid.clone(),
            rows,
        })
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    /// Number of linear constraints.
    pub fn len(&self) -> usize {
        if self.grid.dim() == 1 {
            1
        } else {
            self.rows.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed violation of each constraint (positive means violated).
    pub fn violations(&self, g: &[f64]) -> Vec<f64> {
        if self.grid.dim() == 1 {
            return vec![-(g[0] + g[1])];
        }
        let m = g.len();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| g[i] - r.prev * g[(i + m - 1) % m] - r.next * g[(i + 1) % m])
            .collect()
    }

    pub fn max_violation(&self, g: &SupportVector) -> f64 {
        self.violations(g.values())
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// True iff every cone constraint holds within `tol`.
pub fn is_support_vector(g: &SupportVector, tol: f64) -> bool {
    match ConeDescription::new(g.grid()) {
        Ok(cone) => cone.max_violation(g) <= tol,
        Err(_) => false,
    }
}

/// Weighted L2 projection onto the support cone.
///
/// On S^0 the closed form is used. On the circle the weights are equal, so
/// the weighted projection is the Euclidean one. Over-relaxed Dykstra sweeps
/// over the halfspaces run until successive iterates differ by less than
/// [`PROJECTION_TOL`] or [`MAX_SWEEPS`] is reached; the multipliers they
/// produce warm-start an exact active-set solve of the dual problem
/// `min_{λ >= 0} ‖A'λ - g‖²`, whose residual is the projection.
pub fn project_to_cone(g: &SupportVector) -> Result<SupportVector> {
    let grid = g.grid();
    if grid.dim() == 1 {
        let v = g.values();
        let s = v[0] + v[1];
        if s >= 0.0 {
            return Ok(g.clone());
        }
        let delta = s / 2.0;
        return SupportVector::new(grid.clone(), vec![v[0] - delta, v[1] - delta]);
    }
    let cone = ConeDescription::new(grid)?;
    if cone.max_violation(g) <= 0.0 {
        return Ok(g.clone());
    }
    let warm = dykstra(&cone, g.values());
    let out = active_set(&cone, g.values(), warm)?;
    let out = SupportVector::new(grid.clone(), out)?;
    let violation = cone.max_violation(&out);
    if violation > MEMBERSHIP_TOL {
        return Err(Error::ProjectionDidNotConverge {
            iterations: MAX_SWEEPS,
            residual: violation,
        });
    }
    Ok(out)
}

fn row_norms(cone: &ConeDescription) -> Vec<f64> {
    cone.rows
        .iter()
        .map(|r| 1.0 + r.prev * r.prev + r.next * r.next)
        .collect()
}

/// Dykstra's method for the halfspaces `a_i·x <= 0`. Each correction term is
/// a nonnegative multiple `λ_i a_i`, so only the multipliers are stored.
fn dykstra(cone: &ConeDescription, g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let w = cone.grid().weights()[0];
    let mut x = g.to_vec();
    let mut lambda = vec![0.0; m];
    let norms = row_norms(cone);
    let mut last = x.clone();
    for _sweep in 0..MAX_SWEEPS {
        for i in 0..m {
            let r = cone.rows[i];
            let ip = (i + m - 1) % m;
            let inx = (i + 1) % m;
            let ax = x[i] - r.prev * x[ip] - r.next * x[inx];
            let new_lambda = (lambda[i] + RELAXATION * ax / norms[i]).max(0.0);
            let step = lambda[i] - new_lambda;
            if step != 0.0 {
                x[i] += step;
                x[ip] -= step * r.prev;
                x[inx] -= step * r.next;
                lambda[i] = new_lambda;
            }
        }
        let residual = (w * x
            .iter()
            .zip(&last)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
        .sqrt();
        if residual < PROJECTION_TOL {
            break;
        }
        last.copy_from_slice(&x);
    }
    lambda
}

/// `x = g - A'λ`.
fn primal(cone: &ConeDescription, g: &[f64], lambda: &[f64]) -> Vec<f64> {
    let m = g.len();
    let mut x = g.to_vec();
    for (i, l) in lambda.iter().enumerate() {
        if *l != 0.0 {
            let r = cone.rows[i];
            x[i] -= l;
            x[(i + m - 1) % m] += l * r.prev;
            x[(i + 1) % m] += l * r.next;
        }
    }
    x
}

/// Least squares `min ‖A_P' z - g‖` over the passive rows `P`.
fn passive_solve(cone: &ConeDescription, g: &[f64], passive: &[usize]) -> Option<Vec<f64>> {
    let m = g.len();
    let mut at = DMatrix::<f64>::zeros(m, passive.len());
    for (col, &i) in passive.iter().enumerate() {
        let r = cone.rows[i];
        at[(i, col)] += 1.0;
        at[((i + m - 1) % m, col)] -= r.prev;
        at[((i + 1) % m, col)] -= r.next;
    }
    let rhs = DVector::from_column_slice(g);
    let normal = at.transpose() * &at;
    let z = match normal.cholesky() {
        Some(ch) if passive.len() + 2 < m => ch.solve(&(at.transpose() * &rhs)),
        _ => at.svd(true, true).solve(&rhs, 1e-12).ok()?,
    };
    let mut full = vec![0.0; m];
    for (col, &i) in passive.iter().enumerate() {
        full[i] = z[col];
    }
    Some(full)
}

/// Lawson-Hanson active-set iterations on the dual, started from `lambda`.
fn active_set(cone: &ConeDescription, g: &[f64], mut lambda: Vec<f64>) -> Result<Vec<f64>> {
    let m = g.len();
    let scale = g.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale;
    let lmax = lambda.iter().copied().fold(0.0, f64::max);
    let mut passive: Vec<bool> = lambda.iter().map(|l| *l > 1e-12 * lmax).collect();
    for (l, p) in lambda.iter_mut().zip(&passive) {
        if !p {
            *l = 0.0;
        }
    }
    let max_outer = 3 * m + 10;
    let mut first = true;
    for _ in 0..max_outer {
        if !first {
            let x = primal(cone, g, &lambda);
            let viol = cone.violations(&x);
            let candidate = (0..m)
                .filter(|&i| !passive[i])
                .max_by(|&a, &b| viol[a].total_cmp(&viol[b]));
            match candidate {
                Some(j) if viol[j] > tol => passive[j] = true,
                _ => return Ok(x),
            }
        }
        first = false;
        // inner loop: move toward the unconstrained passive solution while
        // keeping the multipliers nonnegative
        for _ in 0..=m {
            let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            if idx.is_empty() {
                break;
            }
            let z = passive_solve(cone, g, &idx).ok_or(Error::ProjectionDidNotConverge {
                iterations: 0,
                residual: f64::NAN,
            })?;
            if idx.iter().all(|&i| z[i] > 0.0) {
                lambda = z;
                break;
            }
            let alpha = idx
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| lambda[i] / (lambda[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            for &i in &idx {
                lambda[i] += alpha * (z[i] - lambda[i]);
                if lambda[i] <= 1e-15 * scale {
                    lambda[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    // stalls at rounding level are accepted; the caller re-checks membership
    let x = primal(cone, g, &lambda);
    let residual = cone.violations(&x).into_iter().fold(0.0, f64::max);
    if residual <= 1e-10 * scale {
        return Ok(x);
    }
    Err(Error::ProjectionDidNotConverge {
        iterations: max_outer,
        residual,
    })
}

/// Body whose support vector is `g`. Requires `g` in the cone within
/// [`MEMBERSHIP_TOL`].
///
/// On the circle, halfspaces `⟨p_i, x⟩ <= g_i` whose neighbours' corner has
/// slack above `1e-10` are pruned; the remaining consecutive boundary lines
/// are intersected to give the vertices.
pub fn reconstruct(g: &SupportVector) -> Result<ConvexBody> {
    let grid = g.grid();
    let cone = ConeDescription::new(grid)?;
    let violation = cone.max_violation(g);
    if violation > MEMBERSHIP_TOL {
        return Err(Error::NotInCone { violation });
    }
    if grid.dim() == 1 {
        let v = g.values();
        // `0.0 - x` never returns -0.0
        let (lower, upper) = (0.0 - v[0], v[1]);
        return if lower <= upper {
            ConvexBody::interval(lower, upper)
        } else {
            ConvexBody::point(0.5 * (lower + upper))
        };
    }
    Ok(ConvexBody::from_polygon(planar_vertices(grid, g.values())?))
}

fn line_intersection(grid: &SphereGrid, g: &[f64], a: usize, b: usize) -> Result<Point> {
    let pa = grid.direction(a);
    let pb = grid.direction(b);
    let det = pa[0] * pb[1] - pa[1] * pb[0];
    if det <= MIN_GAP_SIN {
        return Err(Error::DegenerateVertex { gap: det });
    }
    Ok([
        (g[a] * pb[1] - g[b] * pa[1]) / det,
        (pa[0] * g[b] - pb[0] * g[a]) / det,
    ])
}

fn planar_vertices(grid: &SphereGrid, g: &[f64]) -> Result<Polygon> {
    let m = g.len();
    // doubly linked ring of active halfspaces
    let mut prev: Vec<usize> = (0..m).map(|i| (i + m - 1) % m).collect();
    let mut next: Vec<usize> = (0..m).map(|i| (i + 1) % m).collect();
    let mut alive = vec![true; m];
    let mut count = m;
    let mut queue: Vec<usize> = (0..m).collect();
    while let Some(i) = queue.pop() {
        if !alive[i] || count <= 3 {
            continue;
        }
        let (a, b) = (prev[i], next[i]);
        let corner = line_intersection(grid, g, a, b)?;
        let p = grid.direction(i);
        let slack = g[i] - (p[0] * corner[0] + p[1] * corner[1]);
        if slack > PRUNE_SLACK {
            alive[i] = false;
            count -= 1;
            next[a] = b;
            prev[b] = a;
            queue.push(a);
            queue.push(b);
        }
    }
    let start = (0..m).find(|&i| alive[i]).expect("at least three halfspaces stay active");
    let mut corners = Vec::with_capacity(count);
    let mut i = start;
    loop {
        let j = next[i];
        corners.push(line_intersection(grid, g, i, j)?);
        i = j;
        if i == start {
            break;
        }
    }
    Ok(Polygon::hull_of(&corners))
}
