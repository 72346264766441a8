//! Extension of a wit-battery operation to a finite oscillator battery.
//!
//! Input level `k` of the oscillator is handled as follows:
//!
//! * `k = 0`: `R00 R01^i` to level `i < N`, `R01^N` to level `N`;
//! * `0 < k < N`: `R10` to `k - 1`, `R00 R01^i R11` to `k + i` for
//!   `k + i < N`, `R01^(N-k) R11` to `N`;
//! * `k = N`: `R10` to `N - 1`, `R11` to `N`.
//!
//! The top row closes the geometric series, so the map is Gibbs preserving
//! at every finite `N`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channels::{EtiConvention, EtiReport, ThermalChannel, Tolerances, ValidationReport, WitSubchannels};
use crate::error::{Error, Result};
use crate::feasibility::{lp_transport_matrix, min_formation_gap, wit_formation_pair};
use crate::spectra::{DiagonalState, EnergySpectrum};

/// Target for `||R01^N||_1` when sizing the battery.
pub const TAIL_TOL: f64 = 1e-12;
pub const MAX_N: usize = 2000;
const POWER_STEPS: usize = 200;
/// Extra wit gap used when building the deterministic-work primitive.
pub const GAP_MARGIN: f64 = 1e-11;

pub fn extend_to_oscillator(sub: &WitSubchannels, n: usize) -> Result<ThermalChannel> {
    if n < 2 {
        return Err(Error::InvalidSubchannels(format!("battery needs N >= 2, got {n}")));
    }
    let d = sub.dim();
    let mut pow = Vec::with_capacity(n + 1);
    pow.push(DMatrix::<f64>::identity(d, d));
    for i in 1..=n {
        pow.push(&sub.r01 * &pow[i - 1]);
    }
    let inner: Vec<DMatrix<f64>> = (0..n).map(|i| &sub.r00 * &pow[i] * &sub.r11).collect();
    let mut r = DMatrix::zeros(d * (n + 1), d * (n + 1));
    let mut put = |k_in: usize, k_out: usize, m: &DMatrix<f64>| {
        r.view_mut((k_out * d, k_in * d), (d, d)).copy_from(m);
    };
    for i in 0..n {
        put(0, i, &(&sub.r00 * &pow[i]));
    }
    put(0, n, &pow[n]);
    for k in 1..n {
        put(k, k - 1, &sub.r10);
        for (i, m) in inner.iter().enumerate().take(n - k) {
            put(k, k + i, m);
        }
        put(k, n, &(&pow[n - k] * &sub.r11));
    }
    put(n, n - 1, &sub.r10);
    put(n, n, &sub.r11);
    let battery = if sub.delta > 0.0 {
        EnergySpectrum::uniform(sub.delta, n)?
    } else {
        EnergySpectrum::new(vec![0.0; n + 1])?.with_label("oscillator")
    };
    ThermalChannel::new(r, sub.system.clone(), sub.system.clone(), battery, sub.beta)
}

/// Operator 1-norm (largest absolute column sum).
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Smallest `N >= 2` with `||R01^N||_1 < 1e-12`, at most [`MAX_N`].
pub fn auto_size_n(sub: &WitSubchannels) -> usize {
    let mut p = sub.r01.clone();
    for n in 1..=MAX_N {
        if n >= 2 && norm1(&p) < TAIL_TOL {
            return n;
        }
        p = &sub.r01 * p;
    }
    MAX_N
}

/// Spectral radius of `|m|` from the growth rate of a power iteration.
pub fn spectral_radius_estimate(m: &DMatrix<f64>) -> f64 {
    let a = m.abs();
    let d = a.nrows();
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut log_norm = Vec::with_capacity(POWER_STEPS);
    let mut acc = 0.0;
    for _ in 0..POWER_STEPS {
        v = &a * v;
        let nrm = v.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        acc += nrm.ln();
        v /= nrm;
        log_norm.push(acc);
    }
    let half = POWER_STEPS / 2;
    ((log_norm[POWER_STEPS - 1] - log_norm[half - 1]) / half as f64).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormWork {
    pub value: f64,
    pub spectral_radius: f64,
}

/// `delta (1^T (I - R01)^-1 R11 x - 1)`, the mean work from any level of an
/// unbounded battery with system input `x`.
pub fn closed_form_average_work(sub: &WitSubchannels, x: &DiagonalState) -> Result<f64> {
    Ok(closed_form_details(sub, x)?.value)
}

pub fn closed_form_details(sub: &WitSubchannels, x: &DiagonalState) -> Result<ClosedFormWork> {
    let y = resolvent_times_r11(sub, x)?;
    let spectral_radius = spectral_radius_estimate(&sub.r01);
    Ok(ClosedFormWork { value: sub.delta * (y.sum() - 1.0), spectral_radius })
}

fn resolvent_times_r11(sub: &WitSubchannels, x: &DiagonalState) -> Result<DVector<f64>> {
    if x.len() != sub.dim() {
        return Err(Error::DimensionMismatch("system state size".into()));
    }
    let rho = spectral_radius_estimate(&sub.r01);
    if rho >= 1.0 - 1e-10 {
        return Err(Error::NonConvergentSeries(rho));
    }
    let d = sub.dim();
    let rhs = &sub.r11 * DVector::from_column_slice(x.probs());
    (DMatrix::identity(d, d) - &sub.r01)
        .lu()
        .solve(&rhs)
        .ok_or(Error::NonConvergentSeries(rho))
}

/// Closed form minus the finite-battery mean work for an input `levels_above`
/// levels below the top: `delta 1^T R01^(m+1) (I - R01)^-1 R11 x`.
pub fn truncation_tail(sub: &WitSubchannels, x: &DiagonalState, levels_above: usize) -> Result<f64> {
    let mut y = resolvent_times_r11(sub, x)?;
    for _ in 0..=levels_above {
        y = &sub.r01 * y;
    }
    Ok(sub.delta * y.sum())
}

/// Same quantity for an input at the vacuum level of a battery with top level
/// `n`: `delta 1^T R01^(n+1) (I - R01)^-1 x`.
pub fn vacuum_tail(sub: &WitSubchannels, x: &DiagonalState, n: usize) -> Result<f64> {
    if x.len() != sub.dim() {
        return Err(Error::DimensionMismatch("system state size".into()));
    }
    let rho = spectral_radius_estimate(&sub.r01);
    if rho >= 1.0 - 1e-10 {
        return Err(Error::NonConvergentSeries(rho));
    }
    let d = sub.dim();
    let mut y = (DMatrix::identity(d, d) - &sub.r01)
        .lu()
        .solve(&DVector::from_column_slice(x.probs()))
        .ok_or(Error::NonConvergentSeries(rho))?;
    for _ in 0..=n {
        y = &sub.r01 * y;
    }
    Ok(sub.delta * y.sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockAudit {
    pub passed: bool,
    /// Input levels `k` whose `(k, k - 1)` block differs from the reference.
    pub mismatched_levels: Vec<usize>,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionReport {
    pub n: usize,
    pub validation: ValidationReport,
    /// Checked on levels `0..=N-1`; the top level is excluded by design.
    pub eti: Option<EtiReport>,
    pub block_audit: BlockAudit,
    pub passed: bool,
}

/// Audits an extension, taking block `(1, 0)` as the reference `R10`.
pub fn verify_extension(ch: &ThermalChannel) -> ExtensionReport {
    let reference = ch.extract_subchannels(1.min(ch.n_battery() - 1), 0).unwrap_or_else(|_| DMatrix::zeros(0, 0));
    audit(ch, &reference)
}

/// Audits an extension against the subchannels it was built from.
pub fn verify_extension_against(ch: &ThermalChannel, sub: &WitSubchannels) -> ExtensionReport {
    audit(ch, &sub.r10)
}

fn audit(ch: &ThermalChannel, r10: &DMatrix<f64>) -> ExtensionReport {
    let n = ch.n_battery().saturating_sub(1);
    let validation = ch.validate(&Tolerances::default());
    let eti = if n >= 1 { ch.check_eti_band(1, n - 1, EtiConvention::Main).ok() } else { None };
    let mut mismatched_levels = Vec::new();
    let mut max_deviation = 0.0f64;
    for k in 1..=n {
        match ch.extract_subchannels(k, k - 1) {
            Ok(b) if b.shape() == r10.shape() => {
                let dev = (&b - r10).abs().max();
                max_deviation = max_deviation.max(dev);
                if b != *r10 {
                    mismatched_levels.push(k);
                }
            }
            _ => mismatched_levels.push(k),
        }
    }
    let block_audit = BlockAudit { passed: mismatched_levels.is_empty(), mismatched_levels, max_deviation };
    let passed = validation.valid && eti.as_ref().is_some_and(|e| e.holds) && block_audit.passed;
    ExtensionReport { n, validation, eti, block_audit, passed }
}

#[derive(Clone, Debug)]
pub struct DeterministicWork {
    pub channel: ThermalChannel,
    pub delta: f64,
    pub subchannels: WitSubchannels,
}

/// Oscillator channel turning `rho` into `sigma` while lowering the battery by
/// exactly one level of size `delta`, the minimal wit gap for the transition.
pub fn theorem3_deterministic_work(
    rho: &DiagonalState,
    sigma: &DiagonalState,
    beta: f64,
    n: usize,
) -> Result<DeterministicWork> {
    let gap = min_formation_gap(rho, sigma, beta)?;
    // The bisection lands within curve tolerance of the threshold, where the
    // LP is feasible only to round-off. A slightly larger gap has slack.
    let delta = if gap > 0.0 { gap + GAP_MARGIN } else { 0.0 };
    let (from, to) = wit_formation_pair(rho, sigma, delta)?;
    let t = lp_transport_matrix(&from, &to, beta)?
        .ok_or_else(|| Error::Infeasible(format!("no wit operation at gap {delta}")))?;
    // drop round-off so impossible transitions are exactly impossible
    let t = t.map(|v| if v < 1e-15 { 0.0 } else { v });
    let wit = EnergySpectrum::new(vec![0.0, delta])?.with_label("wit");
    let ch = ThermalChannel::new(t, rho.spectrum().clone(), rho.spectrum().clone(), wit, beta)?;
    let subchannels = WitSubchannels::from_wit_channel(&ch)?;
    let channel = extend_to_oscillator(&subchannels, n)?;
    Ok(DeterministicWork { channel, delta, subchannels })
}
