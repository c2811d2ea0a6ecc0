//! Compact convex bodies in R^1 and R^2 and their support functions.
//!
//! A body is stored either as an explicit interval, a counter-clockwise
//! convex polygon, or a vector of support values on a [`SphereGrid`].
//! Every metric in this crate is computed on support values, so the grid
//! fixes the discretization of the sphere once and for all.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::cone;
use crate::error::{Error, Result};

/// A point (or direction) in the plane. One-dimensional directions use `[±1, 0]`.
pub type Point = [f64; 2];

/// Default tolerance for comparisons that do not take an explicit one.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default number of directions of the planar grid.
pub const DEFAULT_CIRCLE_SIZE: usize = 256;

const VERTEX_DEDUP_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug)]
struct GridData {
    dim: usize,
    directions: Vec<Point>,
    weights: Vec<f64>,
    antipode: Vec<usize>,
}

/// Antipodally symmetric quadrature rule on the unit sphere S^{d-1}.
///
/// For `d = 1` the grid is exactly `{-1, +1}` (index 0 is `-1`) with unit
/// weights. For `d = 2` it is `m` equally spaced angles `2πi/m` with
/// weights `2π/m`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    inner: Arc<GridData>,
}

impl PartialEq for SphereGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim && self.len() == other.len())
    }
}

impl SphereGrid {
    /// The two-point sphere S^0 = {-1, +1}.
    pub fn line() -> Self {
        SphereGrid {
            inner: Arc::new(GridData {
                dim: 1,
                directions: vec![[-1.0, 0.0], [1.0, 0.0]],
                weights: vec![1.0, 1.0],
                antipode: vec![1, 0],
            }),
        }
    }

    /// `m` equally spaced directions on the unit circle; `m` must be even and at least 8.
    pub fn circle(m: usize) -> Result<Self> {
        if m < 8 || !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "circle grid needs an even number of directions >= 8, got {m}"
            )));
        }
        let step = 2.0 * PI / m as f64;
        let directions = (0..m)
            .map(|i| {
                let theta = step * i as f64;
                [theta.cos(), theta.sin()]
            })
            .collect();
        Ok(SphereGrid {
            inner: Arc::new(GridData {
                dim: 2,
                directions,
                weights: vec![step; m],
                antipode: (0..m).map(|i| (i + m / 2) % m).collect(),
            }),
        })
    }

    /// Grid for dimension `dim`; `m` is ignored for `dim = 1`.
    pub fn for_dim(dim: usize, m: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::line()),
            2 => Self::circle(m),
            _ => Err(Error::InvalidGrid(format!("unsupported dimension {dim}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn len(&self) -> usize {
        self.inner.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.directions.is_empty()
    }

    pub fn directions(&self) -> &[Point] {
        &self.inner.directions
    }

    pub fn direction(&self, i: usize) -> Point {
        self.inner.directions[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    /// Index `j` with `p_j = -p_i`.
    pub fn antipode(&self, i: usize) -> usize {
        self.inner.antipode[i]
    }

    /// Surface measure of the sphere: 2 for S^0, 2π for S^1.
    pub fn total_weight(&self) -> f64 {
        self.inner.weights.iter().sum()
    }

    /// Angle of grid direction `i` in `[0, 2π)` (d = 2) or `0`/`π` (d = 1).
    pub fn angle(&self, i: usize) -> f64 {
        match self.dim() {
            1 => {
                if i == 0 {
                    PI
                } else {
                    0.0
                }
            }
            _ => 2.0 * PI * i as f64 / self.len() as f64,
        }
    }

    /// Index of the grid direction equal to `p` within `1e-9`.
    pub fn index_of(&self, p: &[f64]) -> Result<usize> {
        check_unit(p, self.dim())?;
        let candidate = match self.dim() {
            1 => usize::from(p[0] > 0.0),
            _ => {
                let m = self.len() as f64;
                let theta = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
                ((theta * m / (2.0 * PI)).round() as usize) % self.len()
            }
        };
        let q = self.direction(candidate);
        let err = match self.dim() {
            1 => (q[0] - p[0]).abs(),
            _ => dist(q, [p[0], p[1]]),
        };
        if err <= DEFAULT_TOL {
            Ok(candidate)
        } else {
            Err(Error::OffGrid)
        }
    }

    pub(crate) fn ensure_same(&self, other: &SphereGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "grid (d={}, m={}) vs grid (d={}, m={})",
                self.dim(),
                self.len(),
                other.dim(),
                other.len()
            )))
        }
    }
}

fn check_unit(p: &[f64], dim: usize) -> Result<()> {
    if p.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > DEFAULT_TOL || !norm.is_finite() {
        return Err(Error::NonUnitDirection { norm });
    }
    Ok(())
}

/// A real-valued function on a [`SphereGrid`].
///
/// Membership in the support cone is not enforced: weighted averages with
/// negative weights are carried in this type before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    grid: SphereGrid,
    values: Vec<f64>,
}

impl SupportVector {
    pub fn new(grid: SphereGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBody("support values must be finite".into()));
        }
        Ok(SupportVector { grid, values })
    }

    pub fn zeros(grid: &SphereGrid) -> Self {
        SupportVector {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(grid: SphereGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        SupportVector { grid, values }
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Quadrature-weighted inner product.
    pub fn inner(&self, other: &SupportVector) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Weighted L2 distance between two vectors on the same grid.
    pub fn distance(&self, other: &SupportVector) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_distance(&self, other: &SupportVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Plain scalar multiple of the values (not set scaling).
    pub fn scaled(&self, t: f64) -> SupportVector {
        SupportVector {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    /// Values re-indexed so that entry `i` holds `g(-p_i)`.
    pub fn antipodal(&self) -> SupportVector {
        let values = (0..self.values.len())
            .map(|i| self.values[self.grid.antipode(i)])
            .collect();
        SupportVector {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Support vector of `t·F` when `self` is the support vector of `F`.
    pub fn set_scaled(&self, t: f64) -> SupportVector {
        if t >= 0.0 {
            self.scaled(t)
        } else {
            let flipped = self.antipodal();
            flipped.scaled(-t)
        }
    }

    pub(crate) fn axpy(&mut self, t: f64, other: &SupportVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += t * b;
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A convex polygon with counter-clockwise vertices. One or two vertices
/// encode a point or a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Validates a vertex list: finite coordinates, duplicates closer than
    /// `1e-12` merged, collinear vertices dropped, clockwise input reversed.
    /// Non-convex input is rejected.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidBody("polygon needs at least one vertex".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBody("polygon vertices must be finite".into()));
        }
        let mut pts: Vec<Point> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if pts.last().is_none_or(|last| dist(*last, v) > VERTEX_DEDUP_TOL) {
                pts.push(v);
            }
        }
        while pts.len() > 1 && dist(pts[0], *pts.last().unwrap()) <= VERTEX_DEDUP_TOL {
            pts.pop();
        }
        if pts.len() <= 2 {
            return Ok(Polygon { vertices: pts });
        }

        let scale = pts
            .iter()
            .flatten()
            .fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let eps = 1e-12 * scale * scale;

        let area2: f64 = (0..pts.len())
            .map(|i| {
                let a = pts[i];
                let b = pts[(i + 1) % pts.len()];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        if area2.abs() <= eps {
            return Self::segment_from_collinear(&pts, eps);
        }
        if area2 < 0.0 {
            pts.reverse();
        }

        // drop collinear vertices, then check every turn is to the left
        let mut changed = true;
        while changed && pts.len() > 2 {
            changed = false;
            let n = pts.len();
            for i in 0..n {
                let prev = pts[(i + n - 1) % n];
                let next = pts[(i + 1) % n];
                let c = cross(prev, pts[i], next);
                if c.abs() <= eps && dot(sub(pts[i], prev), sub(next, pts[i])) >= 0.0 {
                    pts.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        let n = pts.len();
        let mut turning = 0.0;
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            if cross(prev, pts[i], next) < -eps {
                return Err(Error::InvalidBody(format!(
                    "polygon is not convex at vertex {i}"
                )));
            }
            let e1 = sub(pts[i], prev);
            let e2 = sub(next, pts[i]);
            turning += (e1[0] * e2[1] - e1[1] * e2[0]).atan2(dot(e1, e2));
        }
        if (turning - 2.0 * PI).abs() > 1e-6 {
            return Err(Error::InvalidBody(
                "polygon vertex list winds more than once".into(),
            ));
        }
        Ok(Polygon { vertices: pts })
    }

    fn segment_from_collinear(pts: &[Point], eps: f64) -> Result<Self> {
        let a = pts[0];
        let (far_idx, _) = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist(a, *p)))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let b = pts[far_idx];
        if pts.iter().any(|p| cross(a, b, *p).abs() > eps) {
            return Err(Error::InvalidBody("degenerate polygon is not collinear".into()));
        }
        let u = sub(b, a);
        let (lo, hi) = pts.iter().fold((pts[0], pts[0]), |(lo, hi), p| {
            let t = dot(sub(*p, a), u);
            let lo = if t < dot(sub(lo, a), u) { *p } else { lo };
            let hi = if t > dot(sub(hi, a), u) { *p } else { hi };
            (lo, hi)
        });
        Ok(Polygon {
            vertices: vec![lo, hi],
        })
    }

    /// Convex hull of a point cloud (used when reconstructing from support values).
    pub(crate) fn hull_of(points: &[Point]) -> Polygon {
        Polygon {
            vertices: convex_hull(points, 1e-9),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn support(&self, p: Point) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(*v, p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(*v, *v).sqrt())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

/// Andrew's monotone chain, counter-clockwise, merging points within `tol`.
pub(crate) fn convex_hull(points: &[Point], tol: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut uniq: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        if uniq.iter().rev().take(4).all(|q| dist(*q, p) > tol) {
            uniq.push(p);
        }
    }
    if uniq.len() <= 2 {
        return uniq;
    }
    let scale = uniq
        .iter()
        .flatten()
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let eps = 1e-12 * scale * scale;
    let mut hull: Vec<Point> = Vec::with_capacity(uniq.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(uniq.iter())
        } else {
            Box::new(uniq.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let mut out: Vec<Point> = Vec::with_capacity(hull.len());
    for p in hull {
        if out.last().is_none_or(|q| dist(*q, p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

/// Geometric representation of a [`ConvexBody`].
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Interval { lower: f64, upper: f64 },
    Polygon(Polygon),
    Support(SupportVector),
}

/// A nonempty compact convex subset of R^d, d ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBody {
    shape: Shape,
    bound: Option<f64>,
}

impl ConvexBody {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidBody("interval endpoints must be finite".into()));
        }
        if lower > upper {
            return Err(Error::InvalidBody(format!(
                "interval lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(ConvexBody {
            shape: Shape::Interval { lower, upper },
            bound: None,
        })
    }

    /// The singleton `{x}` on the real line.
    pub fn point(x: f64) -> Result<Self> {
        Self::interval(x, x)
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        Ok(ConvexBody {
            shape: Shape::Polygon(Polygon::new(vertices)?),
            bound: None,
        })
    }

    pub(crate) fn from_polygon(polygon: Polygon) -> Self {
        ConvexBody {
            shape: Shape::Polygon(polygon),
            bound: None,
        }
    }

    /// A body given directly by support values; they must lie in the support cone.
    pub fn from_support(values: SupportVector) -> Result<Self> {
        let violation = cone::ConeDescription::new(values.grid())?.max_violation(&values);
        if violation > cone::MEMBERSHIP_TOL {
            return Err(Error::NotInCone { violation });
        }
        Ok(ConvexBody {
            shape: Shape::Support(values),
            bound: None,
        })
    }

    /// Attaches a norm bound `B` and checks `sup_{f∈F} ‖f‖ ≤ B`.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if bound.is_nan() || bound < 0.0 {
            return Err(Error::InvalidBody(format!("norm bound must be nonnegative, got {bound}")));
        }
        let norm = self.max_norm();
        if norm > bound + DEFAULT_TOL {
            return Err(Error::InvalidBody(format!(
                "body has norm {norm} exceeding bound {bound}"
            )));
        }
        self.bound = Some(bound);
        Ok(self)
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Polygon(_) => 2,
            Shape::Support(g) => g.grid().dim(),
        }
    }

    pub fn as_interval(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { lower, upper } => Some((lower, upper)),
            _ => None,
        }
    }

    pub fn as_polygon(&self) -> Option<&Polygon> {
        match &self.shape {
            Shape::Polygon(p) => Some(p),
            _ => None,
        }
    }

    /// `sup_{f∈F} ‖f‖`, which equals the maximum of the support function.
    pub fn max_norm(&self) -> f64 {
        match &self.shape {
            Shape::Interval { lower, upper } => lower.abs().max(upper.abs()),
            Shape::Polygon(p) => p.max_norm(),
            Shape::Support(g) => g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Support function at a unit direction.
    pub fn support(&self, p: &[f64]) -> Result<f64> {
        support_eval(self, p)
    }
}

/// `s(p, F) = sup_{f∈F} ⟨p, f⟩` for a unit direction `p`.
pub fn support_eval(body: &ConvexBody, p: &[f64]) -> Result<f64> {
    check_unit(p, body.dim())?;
    Ok(match &body.shape {
        Shape::Interval { lower, upper } => (p[0] * lower).max(p[0] * upper),
        Shape::Polygon(poly) => poly.support([p[0], p[1]]),
        Shape::Support(g) => g.values()[g.grid().index_of(p)?],
    })
}

/// Discretized embedding `F ↦ s(·, F)` on the grid.
pub fn to_support_vector(body: &ConvexBody, grid: &SphereGrid) -> Result<SupportVector> {
    if body.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: body.dim(),
        });
    }
    let values = match &body.shape {
        Shape::Interval { lower, upper } => vec![-lower, *upper],
        Shape::Polygon(poly) => grid.directions().iter().map(|p| poly.support(*p)).collect(),
        Shape::Support(g) => {
            g.grid().ensure_same(grid)?;
            g.values().to_vec()
        }
    };
    Ok(SupportVector::from_parts_unchecked(grid.clone(), values))
}

/// Support vector of the signed Minkowski combination `⊕_k c_k F_k`, where a
/// negative coefficient uses `s(p, tF) = |t| s(-p, F)`.
pub fn signed_combination(terms: &[(f64, &SupportVector)]) -> Result<SupportVector> {
    let (_, first) = terms.first().ok_or(Error::Empty("minkowski combination terms"))?;
    let grid = first.grid().clone();
    let mut acc = SupportVector::zeros(&grid);
    for (coef, sv) in terms {
        sv.grid().ensure_same(&grid)?;
        if !coef.is_finite() {
            return Err(Error::InvalidWeights(format!("coefficient {coef} is not finite")));
        }
        if *coef >= 0.0 {
            acc.axpy(*coef, sv);
        } else {
            let values = acc.values_mut();
            for (i, v) in values.iter_mut().enumerate() {
                *v -= coef * sv.values()[grid.antipode(i)];
            }
        }
    }
    Ok(acc)
}

/// Signed Minkowski combination of bodies, reconstructed on `grid`.
pub fn minkowski_combine(terms: &[(f64, &ConvexBody)], grid: &SphereGrid) -> Result<ConvexBody> {
    if terms.is_empty() {
        return Err(Error::Empty("minkowski combination terms"));
    }
    let vectors = terms
        .iter()
        .map(|(_, b)| to_support_vector(b, grid))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, &SupportVector)> = terms
        .iter()
        .zip(&vectors)
        .map(|((c, _), v)| (*c, v))
        .collect();
    cone::reconstruct(&signed_combination(&pairs)?)
}

fn paired_vectors(
    a: &ConvexBody,
    b: &ConvexBody,
    grid: &SphereGrid,
) -> Result<(SupportVector, SupportVector)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok((to_support_vector(a, grid)?, to_support_vector(b, grid)?))
}

/// `d_kc(a, b)`: quadrature-weighted L2 distance between support functions.
pub fn dkc_distance(a: &ConvexBody, b: &ConvexBody, grid: &SphereGrid) -> Result<f64> {
    let (sa, sb) = paired_vectors(a, b, grid)?;
    Ok(sa.distance(&sb))
}

/// Hausdorff distance as the sup-norm of the support difference over the grid.
pub fn hausdorff_distance(a: &ConvexBody, b: &ConvexBody, grid: &SphereGrid) -> Result<f64> {
    let (sa, sb) = paired_vectors(a, b, grid)?;
    Ok(sa.sup_distance(&sb))
}

/// `a ⊂ b` tested through support domination at every grid direction.
pub fn is_subset(a: &ConvexBody, b: &ConvexBody, grid: &SphereGrid, tol: f64) -> Result<bool> {
    let (sa, sb) = paired_vectors(a, b, grid)?;
    Ok(sa.values().iter().zip(sb.values()).all(|(x, y)| *x <= *y + tol))
}
