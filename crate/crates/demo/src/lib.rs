//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers or JSON text and returns JSON
//! text; the pure-Rust halves are kept separate so they can be tested natively.

use serde_json::{json, Value};
use setstat::frechet::{population_gfr, Atom, DiscreteSetDistribution};
use setstat::geometry::signed_combination;
use setstat::{
    is_support_vector, project_to_cone, reconstruct, to_support_vector, ConvexBody, Point, Result,
    Shape, SphereGrid, SupportVector,
};
use wasm_bindgen::prelude::*;

fn body_json(body: &ConvexBody) -> Value {
    match body.shape() {
        Shape::Interval { lower, upper } => json!({ "kind": "interval", "lower": lower, "upper": upper }),
        Shape::Polygon(p) => json!({ "kind": "polygon", "vertices": p.vertices() }),
        Shape::Support(g) => json!({ "kind": "support", "values": g.values() }),
    }
}

fn iv(lower: f64, upper: f64) -> Result<ConvexBody> {
    ConvexBody::interval(lower, upper)
}

/// Population regression of the three-atom interval law at covariate `x`.
pub fn counterexample_at(x: f64) -> Result<Value> {
    let dist = DiscreteSetDistribution::new(vec![
        Atom {
            probability: 0.25,
            body: iv(-1.0, 2.0)?,
            covariate: vec![-2.0],
        },
        Atom {
            probability: 0.25,
            body: iv(1.0, 6.0)?,
            covariate: vec![2.0],
        },
        Atom {
            probability: 0.5,
            body: iv(0.0, 0.0)?,
            covariate: vec![0.0],
        },
    ])?;
    let pred = population_gfr(&dist, &[x], &SphereGrid::line())?;
    let weights: Vec<f64> = [-2.0, 2.0, 0.0].iter().map(|z| 1.0 + x * z / 2.0).collect();
    Ok(json!({
        "x": x,
        "weights": weights,
        "raw": pred.raw.values(),
        "in_cone": pred.in_cone,
        "m_oplus": body_json(&pred.m_oplus),
        "aumann_w": body_json(&pred.aumann_w),
        "subset": pred.subset_flag,
    }))
}

/// Projection of `(g_-, g_+)` onto the support cone of the line.
pub fn project_line_values(g_minus: f64, g_plus: f64) -> Result<Value> {
    let g = SupportVector::new(SphereGrid::line(), vec![g_minus, g_plus])?;
    let p = project_to_cone(&g)?;
    Ok(json!({
        "input": g.values(),
        "in_cone": is_support_vector(&g, 1e-12),
        "projected": p.values(),
        "distance": g.distance(&p),
        "body": body_json(&reconstruct(&p)?),
    }))
}

fn parse_vertices(text: &str) -> Result<Vec<Point>> {
    serde_json::from_str(text)
        .map_err(|e| setstat::Error::InvalidBody(format!("vertex list: {e}")))
}

/// `s·A ⊕ t·B` with signed set scaling, next to the projection of the plain
/// linear combination `s·h_A + t·h_B`.
pub fn combine_polygons(a: &str, b: &str, s: f64, t: f64, m: usize) -> Result<Value> {
    let grid = SphereGrid::circle(m)?;
    let pa = ConvexBody::polygon(parse_vertices(a)?)?;
    let pb = ConvexBody::polygon(parse_vertices(b)?)?;
    let ga = to_support_vector(&pa, &grid)?;
    let gb = to_support_vector(&pb, &grid)?;
    let signed = reconstruct(&signed_combination(&[(s, &ga), (t, &gb)])?)?;
    let mut raw_values = ga.scaled(s).into_values();
    for (v, w) in raw_values.iter_mut().zip(gb.values()) {
        *v += t * w;
    }
    let raw = SupportVector::new(grid.clone(), raw_values)?;
    let projected = project_to_cone(&raw)?;
    Ok(json!({
        "a": body_json(&pa),
        "b": body_json(&pb),
        "signed": body_json(&signed),
        "linear_in_cone": is_support_vector(&raw, 1e-8),
        "linear_projected": body_json(&reconstruct(&projected)?),
        "projection_distance": raw.distance(&projected),
    }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn counterexample(x: f64) -> std::result::Result<String, JsError> {
    to_js(counterexample_at(x))
}

#[wasm_bindgen]
pub fn project_line(g_minus: f64, g_plus: f64) -> std::result::Result<String, JsError> {
    to_js(project_line_values(g_minus, g_plus))
}

#[wasm_bindgen]
pub fn combine(a: &str, b: &str, s: f64, t: f64, m: usize) -> std::result::Result<String, JsError> {
    to_js(combine_polygons(a, b, s, t, m))
}
