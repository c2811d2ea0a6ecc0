//! Dataset readers and the JSON result format used by the CLI.
//!
//! Interval data is CSV with header `L,U,x1,..,xp` plus optional `t`
//! (response indicator), `e` (known propensity) and `z1,..,zp`
//! (instruments). Planar data is JSON lines, one object per row with
//! `vertices`, `x` and optional `t`, `e`, `z`. Unobserved rows may leave
//! the outcome blank (`NA` or empty in CSV, omitted in JSON).

use serde::{Deserialize, Serialize};

use crate::cone::reconstruct;
use crate::error::{Error, Result};
use crate::frechet::RegressionDataset;
use crate::geometry::{to_support_vector, ConvexBody, Point, Shape, SphereGrid, SupportVector};

/// A parsed dataset with any user-supplied propensity scores.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: RegressionDataset,
    pub scores: Option<Vec<f64>>,
}

fn row_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidDataset(format!("line {line}: {msg}"))
}

/// Geometry failures keep their kind but gain the line number.
fn body_err(line: usize, e: Error) -> Error {
    match e {
        Error::InvalidBody(m) => Error::InvalidBody(format!("line {line}: {m}")),
        other => row_err(line, other),
    }
}

fn indexed_columns(header: &[String], prefix: char) -> Result<Vec<usize>> {
    let mut cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let rest = h.strip_prefix(prefix)?;
            rest.parse::<usize>().ok().map(|k| (k, i))
        })
        .collect();
    cols.sort();
    for (want, (k, _)) in (1..).zip(&cols) {
        if *k != want {
            return Err(Error::InvalidDataset(format!(
                "columns {prefix}1..{prefix}p must be consecutive, found {prefix}{k}"
            )));
        }
    }
    Ok(cols.into_iter().map(|(_, i)| i).collect())
}

fn parse_indicator(s: &str, line: usize) -> Result<bool> {
    match s {
        "1" | "true" | "TRUE" => Ok(true),
        "0" | "false" | "FALSE" => Ok(false),
        _ => Err(row_err(line, format!("response indicator must be 0 or 1, got {s:?}"))),
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

/// Reads interval-valued data from CSV text.
pub fn parse_interval_csv(text: &str) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| row_err(1, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let (Some(lo), Some(hi)) = (find("L"), find("U")) else {
        return Err(row_err(1, "header must contain columns L and U"));
    };
    let xs = indexed_columns(&header, 'x')?;
    let zs = indexed_columns(&header, 'z')?;
    if xs.is_empty() {
        return Err(row_err(1, "header must contain covariate columns x1..xp"));
    }
    if !zs.is_empty() && zs.len() != xs.len() {
        return Err(row_err(1, "instrument columns z1..zp must match x1..xp"));
    }
    let (t_col, e_col) = (find("t"), find("e"));
    let known: usize = 2 + xs.len() + zs.len() + t_col.is_some() as usize + e_col.is_some() as usize;
    if known != header.len() {
        let extra: Vec<&String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                ![Some(lo), Some(hi), t_col, e_col].contains(&Some(*i)) && !xs.contains(i) && !zs.contains(i)
            })
            .map(|(_, h)| h)
            .collect();
        return Err(row_err(1, format!("unrecognised columns {extra:?}")));
    }

    let mut bodies = Vec::new();
    let mut covariates = Vec::new();
    let mut instruments = Vec::new();
    let mut observed = Vec::new();
    let mut scores = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| row_err(line, e))?;
        let num = |i: usize| -> Result<f64> {
            let s = &record[i];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| row_err(line, format!("column {}: expected a number, got {s:?}", header[i])))
        };
        let t = match t_col {
            Some(i) => parse_indicator(&record[i], line)?,
            None => true,
        };
        let body = if !t && is_missing(&record[lo]) && is_missing(&record[hi]) {
            ConvexBody::point(0.0)?
        } else {
            ConvexBody::interval(num(lo)?, num(hi)?).map_err(|e| body_err(line, e))?
        };
        bodies.push(body);
        covariates.push(xs.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
        if !zs.is_empty() {
            instruments.push(zs.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
        }
        observed.push(t);
        if let Some(i) = e_col {
            scores.push(num(i)?);
        }
    }
    assemble(bodies, covariates, t_col.map(|_| observed), (!zs.is_empty()).then_some(instruments), e_col.map(|_| scores))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonRow {
    #[serde(default)]
    vertices: Option<Vec<Point>>,
    x: Vec<f64>,
    #[serde(default)]
    t: Option<Indicator>,
    #[serde(default)]
    e: Option<f64>,
    #[serde(default)]
    z: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Indicator {
    Bool(bool),
    Int(u8),
}

/// Reads polygon-valued data from JSON lines.
pub fn parse_polygon_jsonl(text: &str) -> Result<LoadedData> {
    let mut bodies = Vec::new();
    let mut covariates = Vec::new();
    let mut instruments = Vec::new();
    let mut observed = Vec::new();
    let mut scores = Vec::new();
    let (mut any_t, mut any_e, mut any_z) = (false, false, false);
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: PolygonRow = serde_json::from_str(raw).map_err(|e| row_err(line, e))?;
        let t = match row.t {
            None => true,
            Some(Indicator::Bool(b)) => b,
            Some(Indicator::Int(1)) => true,
            Some(Indicator::Int(0)) => false,
            Some(Indicator::Int(v)) => return Err(row_err(line, format!("t must be 0 or 1, got {v}"))),
        };
        let body = match (row.vertices, t) {
            (Some(v), _) => ConvexBody::polygon(v).map_err(|e| body_err(line, e))?,
            (None, false) => ConvexBody::polygon(vec![[0.0, 0.0]])?,
            (None, true) => return Err(row_err(line, "observed row has no vertices")),
        };
        any_t |= row.t.is_some();
        any_e |= row.e.is_some();
        any_z |= row.z.is_some();
        bodies.push(body);
        covariates.push(row.x);
        observed.push(t);
        if let Some(e) = row.e {
            scores.push(e);
        }
        if let Some(z) = row.z {
            instruments.push(z);
        }
    }
    if (any_e && scores.len() != bodies.len()) || (any_z && instruments.len() != bodies.len()) {
        return Err(Error::InvalidDataset("fields e and z must be present on every row or none".into()));
    }
    assemble(bodies, covariates, any_t.then_some(observed), any_z.then_some(instruments), any_e.then_some(scores))
}

fn assemble(
    bodies: Vec<ConvexBody>,
    covariates: Vec<Vec<f64>>,
    observed: Option<Vec<bool>>,
    instruments: Option<Vec<Vec<f64>>>,
    scores: Option<Vec<f64>>,
) -> Result<LoadedData> {
    if bodies.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    let p = covariates[0].len();
    if let Some(i) = covariates.iter().position(|x| x.len() != p) {
        return Err(Error::InvalidDataset(format!("row {}: expected {p} covariates", i + 1)));
    }
    let mut dataset = RegressionDataset::new(bodies, covariates)?;
    if let Some(t) = observed {
        dataset = dataset.with_observed(t)?;
    }
    if let Some(z) = instruments {
        dataset = dataset.with_instruments(z)?;
    }
    Ok(LoadedData { dataset, scores })
}

/// Dispatches on content: JSON lines if the first non-blank character is `{`.
pub fn parse_dataset(text: &str) -> Result<LoadedData> {
    if text.trim_start().starts_with('{') {
        parse_polygon_jsonl(text)
    } else {
        parse_interval_csv(text)
    }
}

/// Writes interval data in the format read by [`parse_interval_csv`].
pub fn write_interval_csv(dataset: &RegressionDataset) -> Result<String> {
    use std::fmt::Write as _;
    let p = dataset.n_covariates();
    let mut out = String::from("L,U");
    for j in 1..=p {
        let _ = write!(out, ",x{j}");
    }
    let observed = dataset.observed();
    if observed.is_some() {
        out.push_str(",t");
    }
    out.push('\n');
    for (i, (body, x)) in dataset.bodies().iter().zip(dataset.covariates()).enumerate() {
        let (lo, hi) = body
            .as_interval()
            .ok_or_else(|| Error::InvalidDataset("dataset is not interval-valued".into()))?;
        let seen = observed.is_none_or(|t| t[i]);
        if seen {
            let _ = write!(out, "{lo},{hi}");
        } else {
            out.push_str("NA,NA");
        }
        for v in x {
            let _ = write!(out, ",{v}");
        }
        if observed.is_some() {
            let _ = write!(out, ",{}", seen as u8);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes planar data in the format read by [`parse_polygon_jsonl`].
pub fn write_polygon_jsonl(dataset: &RegressionDataset) -> Result<String> {
    let observed = dataset.observed();
    let mut out = String::new();
    for (i, (body, x)) in dataset.bodies().iter().zip(dataset.covariates()).enumerate() {
        let poly = body
            .as_polygon()
            .ok_or_else(|| Error::InvalidDataset("dataset is not polygon-valued".into()))?;
        let mut row = serde_json::Map::new();
        let seen = observed.is_none_or(|t| t[i]);
        if seen {
            row.insert("vertices".into(), serde_json::json!(poly.vertices()));
        }
        row.insert("x".into(), serde_json::json!(x));
        if observed.is_some() {
            row.insert("t".into(), serde_json::json!(seen as u8));
        }
        out.push_str(&serde_json::Value::Object(row).to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Serialized convex body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BodyJson {
    Interval { lower: f64, upper: f64 },
    Polygon { vertices: Vec<Point> },
}

impl BodyJson {
    pub fn from_body(body: &ConvexBody) -> Result<Self> {
        Ok(match body.shape() {
            Shape::Interval { lower, upper } => BodyJson::Interval {
                lower: *lower,
                upper: *upper,
            },
            Shape::Polygon(p) => BodyJson::Polygon {
                vertices: p.vertices().to_vec(),
            },
            Shape::Support(g) => return BodyJson::from_body(&reconstruct(g)?),
        })
    }

    pub fn to_body(&self) -> Result<ConvexBody> {
        match self {
            BodyJson::Interval { lower, upper } => ConvexBody::interval(*lower, *upper),
            BodyJson::Polygon { vertices } => ConvexBody::polygon(vertices.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridJson {
    pub dim: usize,
    pub m: usize,
}

impl GridJson {
    pub fn of(grid: &SphereGrid) -> Self {
        GridJson {
            dim: grid.dim(),
            m: grid.len(),
        }
    }

    pub fn to_grid(self) -> Result<SphereGrid> {
        SphereGrid::for_dim(self.dim, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub in_cone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_weight: Option<f64>,
}

/// Output of `mean`, `gfr` and `ipw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub grid: GridJson,
    pub support_values: Vec<f64>,
    pub body: BodyJson,
    pub diagnostics: Diagnostics,
    /// Average before projection (regression only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_support_values: Option<Vec<f64>>,
    /// Signed-scaling companion of the regression value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aumann_w: Option<BodyJson>,
    /// Unnormalized IPW mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unnormalized: Option<BodyJson>,
    /// Fitted propensity scores after clipping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity: Option<Vec<f64>>,
    /// Logistic coefficients, intercept first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity_coefficients: Option<Vec<f64>>,
}

impl ResultFile {
    /// Result for `body` with its support vector on `grid`.
    pub fn for_body(body: &ConvexBody, grid: &SphereGrid, diagnostics: Diagnostics) -> Result<Self> {
        Ok(ResultFile {
            grid: GridJson::of(grid),
            support_values: to_support_vector(body, grid)?.into_values(),
            body: BodyJson::from_body(body)?,
            diagnostics,
            raw_support_values: None,
            aumann_w: None,
            unnormalized: None,
            propensity: None,
            propensity_coefficients: None,
        })
    }

    pub fn support_vector(&self) -> Result<SupportVector> {
        SupportVector::new(self.grid.to_grid()?, self.support_values.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidDataset(format!("result file: {e}")))
    }
}

/// Reads either a [`ResultFile`] or a bare [`BodyJson`].
pub fn parse_body(text: &str) -> Result<ConvexBody> {
    if let Ok(result) = serde_json::from_str::<ResultFile>(text) {
        return result.body.to_body();
    }
    serde_json::from_str::<BodyJson>(text)
        .map_err(|e| Error::InvalidDataset(format!("expected a body or result file: {e}")))?
        .to_body()
}

/// `%.12g`-style formatting.
pub fn format_g12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..12).contains(&exp) {
        let s = format!("{v:.11e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = trim_zeros(mant);
        let e: i32 = e.parse().unwrap();
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
