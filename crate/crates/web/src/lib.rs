//! wasm-bindgen entry points for the browser demo. Curves come back as flat
//! `Float64Array`s with a fixed number of columns per row.

use thermo_battery::bounds::{fig2a, Fig2Params};
use thermo_battery::erasure::fig4_rows;
use thermo_battery::feasibility::{thermo_curve, thermo_majorizes};
use thermo_battery::spectra::{DiagonalState, EnergySpectrum};
use wasm_bindgen::prelude::*;

/// Rows of `(eps_tot, <w> weight, Var weight, <w> oscillator, Var oscillator)`
/// on `points` evenly spaced values in `[0, max_eps]`.
pub fn erasure_curves(points: usize, max_eps: f64, beta: f64) -> Result<Vec<f64>, String> {
    if points < 2 || !(0.0..0.5).contains(&max_eps) {
        return Err("need at least 2 points and max_eps in [0, 0.5)".into());
    }
    let grid: Vec<f64> = (0..points).map(|i| max_eps * i as f64 / (points - 1) as f64).collect();
    let rows = fig4_rows(&grid, beta).map_err(|e| e.to_string())?;
    Ok(rows.iter().flat_map(|r| [r.eps_tot, r.avg_w_weight, r.var_weight, r.avg_w_osc, r.var_osc]).collect())
}

/// Rows of `(eps*, ln C)` for a Gaussian battery centred at `mean`.
pub fn correction_curve(mean: f64, delta: f64, eps_min: f64, beta: f64, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) || hi < lo {
        return Err("need step > 0 and hi >= lo".into());
    }
    let params = Fig2Params { mean, delta, eps_min, beta, top: hi.max(mean) + 100.0, ..Fig2Params::default() };
    let n = ((hi - lo) / step).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + step * i as f64).collect();
    let rows = fig2a(&params, &grid).map_err(|e| e.to_string())?;
    Ok(rows.iter().flat_map(|&(x, c)| [x, c.ln()]).collect())
}

/// Curve vertices `(x, y)` for `probs` on `levels`.
pub fn curve_points(levels: &[f64], probs: &[f64], beta: f64) -> Result<Vec<f64>, String> {
    let state = state(levels, probs)?;
    let c = thermo_curve(&state, beta).map_err(|e| e.to_string())?;
    Ok(c.points.iter().flat_map(|&(x, y)| [x, y]).collect())
}

pub fn majorizes(levels: &[f64], p: &[f64], q: &[f64], beta: f64) -> Result<bool, String> {
    thermo_majorizes(&state(levels, p)?, &state(levels, q)?, beta).map_err(|e| e.to_string())
}

fn state(levels: &[f64], probs: &[f64]) -> Result<DiagonalState, String> {
    let spec = EnergySpectrum::new(levels.to_vec()).map_err(|e| e.to_string())?;
    DiagonalState::normalized(probs.to_vec(), spec).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = erasureCurves)]
pub fn erasure_curves_js(points: usize, max_eps: f64, beta: f64) -> Result<Vec<f64>, JsError> {
    erasure_curves(points, max_eps, beta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = correctionCurve)]
pub fn correction_curve_js(mean: f64, delta: f64, eps_min: f64, beta: f64, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, JsError> {
    correction_curve(mean, delta, eps_min, beta, lo, hi, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = curvePoints)]
pub fn curve_points_js(levels: Vec<f64>, probs: Vec<f64>, beta: f64) -> Result<Vec<f64>, JsError> {
    curve_points(&levels, &probs, beta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = majorizes)]
pub fn majorizes_js(levels: Vec<f64>, p: Vec<f64>, q: Vec<f64>, beta: f64) -> Result<bool, JsError> {
    majorizes(&levels, &p, &q, beta).map_err(|e| JsError::new(&e))
}
