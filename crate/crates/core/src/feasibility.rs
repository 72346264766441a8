//! Thermomajorization curves, an LP transport oracle and the minimal wit gap
//! needed to form one state from another.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp;
use crate::spectra::{DiagonalState, EnergySpectrum, EXP_GUARD};

/// Tolerance on curve heights when comparing two curves.
pub const CURVE_TOL: f64 = 1e-12;
/// Width of the final bisection bracket for the formation gap.
pub const GAP_TOL: f64 = 1e-12;
const GAP_CAP: f64 = 1e4;

/// Concave piecewise-linear curve of cumulative (Gibbs weight, probability).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThermoCurve {
    pub points: Vec<(f64, f64)>,
    /// Level indices in the order they appear along the curve.
    pub order: Vec<usize>,
}

impl ThermoCurve {
    /// Height of the curve at `x`; 1 beyond the last vertex.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let i = self.points.partition_point(|p| p.0 < x);
        if i >= self.points.len() {
            return 1.0;
        }
        let (x1, y1) = self.points[i];
        let (x0, y0) = self.points[i - 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn total_weight(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }
}

pub fn thermo_curve(state: &DiagonalState, beta: f64) -> Result<ThermoCurve> {
    let lv = state.spectrum().levels();
    let g = state.spectrum().gibbs_weights(beta)?;
    let key: Vec<f64> = state
        .probs()
        .iter()
        .zip(lv)
        .map(|(&p, &e)| if p > 0.0 { p.ln() + beta * e } else { f64::NEG_INFINITY })
        .collect();
    let mut order: Vec<usize> = (0..lv.len()).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    let mut points = Vec::with_capacity(order.len() + 1);
    points.push((0.0, 0.0));
    let (mut x, mut y) = (0.0, 0.0);
    for &i in &order {
        x += g[i];
        y += state.probs()[i];
        points.push((x, y));
    }
    Ok(ThermoCurve { points, order })
}

/// `p` thermomajorizes `q`: curve of `p` on or above the curve of `q`.
pub fn thermo_majorizes(p: &DiagonalState, q: &DiagonalState, beta: f64) -> Result<bool> {
    if p.spectrum().levels() != q.spectrum().levels() {
        return Err(Error::SpectrumMismatch);
    }
    let cp = thermo_curve(p, beta)?;
    let cq = thermo_curve(q, beta)?;
    Ok(cq.points.iter().all(|&(x, y)| cp.eval(x) >= y - CURVE_TOL))
}

/// A Gibbs-preserving stochastic matrix taking `p` to `q`, if one exists.
pub fn lp_transport_matrix(p: &DiagonalState, q: &DiagonalState, beta: f64) -> Result<Option<DMatrix<f64>>> {
    if p.spectrum().levels() != q.spectrum().levels() {
        return Err(Error::SpectrumMismatch);
    }
    let d = p.len();
    let g = scaled_gibbs(p.spectrum(), beta)?;
    // unknowns r_ij at i * d + j; rows: column sums, R g = g, R p = q
    let mut a = DMatrix::zeros(3 * d, d * d);
    let mut b = vec![0.0; 3 * d];
    for j in 0..d {
        for i in 0..d {
            a[(j, i * d + j)] = 1.0;
        }
        b[j] = 1.0;
    }
    for i in 0..d {
        for j in 0..d {
            a[(d + i, i * d + j)] = g[j];
            a[(2 * d + i, i * d + j)] = p.probs()[j];
        }
        b[d + i] = g[i];
        b[2 * d + i] = q.probs()[i];
    }
    let sol = lp::phase_one(&a, &b)?;
    Ok(sol.feasible.then(|| DMatrix::from_fn(d, d, |i, j| sol.x[i * d + j])))
}

pub fn lp_feasible_transport(p: &DiagonalState, q: &DiagonalState, beta: f64) -> Result<bool> {
    Ok(lp_transport_matrix(p, q, beta)?.is_some())
}

fn scaled_gibbs(spec: &EnergySpectrum, beta: f64) -> Result<Vec<f64>> {
    spec.check_guard(beta)?;
    let e0 = spec.min();
    Ok(spec.levels().iter().map(|e| (-beta * (e - e0)).exp()).collect())
}

/// `rho (x) |1>` and `sigma (x) |0>` on the system-plus-wit spectrum with gap `delta`.
pub fn wit_formation_pair(
    rho: &DiagonalState,
    sigma: &DiagonalState,
    delta: f64,
) -> Result<(DiagonalState, DiagonalState)> {
    if rho.spectrum().levels() != sigma.spectrum().levels() {
        return Err(Error::SpectrumMismatch);
    }
    let wit = EnergySpectrum::new(vec![0.0, delta])?.with_label("wit");
    let up = DiagonalState::pure(1, wit.clone())?;
    let down = DiagonalState::pure(0, wit)?;
    Ok((rho.tensor(&up), sigma.tensor(&down)))
}

/// Smallest wit gap `delta >= 0` with `rho (x) |1>` thermomajorizing
/// `sigma (x) |0>`, by bisection.
pub fn min_formation_gap(rho: &DiagonalState, sigma: &DiagonalState, beta: f64) -> Result<f64> {
    if rho.spectrum().levels() != sigma.spectrum().levels() {
        return Err(Error::SpectrumMismatch);
    }
    rho.spectrum().check_guard(beta)?;
    let feasible = |delta: f64| -> Result<bool> {
        let (a, b) = wit_formation_pair(rho, sigma, delta)?;
        thermo_majorizes(&a, &b, beta)
    };
    let e_max = rho.spectrum().levels().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    // slightly inside the guard so rounding in E + delta cannot trip it
    let mut hi = GAP_CAP.min((EXP_GUARD / beta - e_max).max(0.0) * (1.0 - 1e-9));
    if !feasible(hi)? {
        return Err(Error::Infeasible(format!("no wit gap up to {hi} forms the target")));
    }
    let mut lo = 0.0;
    if feasible(lo)? {
        return Ok(0.0);
    }
    while hi - lo > GAP_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
