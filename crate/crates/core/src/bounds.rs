//! Jarzynski-type averages, fluctuation bounds for ETI channels and the
//! vacuum corrections to the second law.

use serde::Serialize;

use crate::batteries::{average_work, work_distribution};
use crate::channels::{EtiConvention, ThermalChannel};
use crate::error::{Error, Result};
use crate::math::{fmt_f64, log_sum_exp};
use crate::spectra::{free_energy, log_partition_function, DiagonalState, EnergySpectrum, EXP_GUARD};

/// Slack allowed when comparing a computed average with its bound.
pub const BOUND_TOL: f64 = 1e-10;

/// `sum_{s,s',k'} p(s) r(s'k'|sk) exp(beta (w - f_s))` for battery level `k`.
///
/// `p(s) exp(-beta f_s)` is `exp(-beta E_s)`; levels with `p(s) = 0` have no
/// finite `f_s` and are skipped.
pub fn conditional_jarzynski(ch: &ThermalChannel, sys: &DiagonalState, k: usize) -> Result<f64> {
    Ok(log_conditional_jarzynski(ch, sys, k)?.exp())
}

pub fn log_conditional_jarzynski(ch: &ThermalChannel, sys: &DiagonalState, k: usize) -> Result<f64> {
    if sys.spectrum().levels() != ch.sys_in().levels() {
        return Err(Error::DimensionMismatch("system state is not on the input spectrum".into()));
    }
    let n = ch.n_battery();
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    let b = ch.beta();
    let eps = ch.battery().levels();
    let e_s = ch.sys_in().levels();
    let mut terms = Vec::new();
    for s in 0..ch.d_in() {
        if sys.probs()[s] == 0.0 {
            continue;
        }
        for kp in 0..n {
            for sp in 0..ch.d_out() {
                let r = ch.entry(sp, kp, s, k);
                if r > 0.0 {
                    terms.push(r.ln() + b * (eps[kp] - eps[k]) - b * e_s[s]);
                }
            }
        }
    }
    Ok(log_sum_exp(&terms))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Row {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub k_min: usize,
    pub rows: Vec<Theorem1Row>,
    pub worst_slack: f64,
    pub passed: bool,
}

impl Theorem1Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,lhs,rhs,slack\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.k, fmt_f64(r.lhs), fmt_f64(r.rhs), fmt_f64(r.slack)));
        }
        s
    }
}

fn require_eti(ch: &ThermalChannel, k_min: usize) -> Result<f64> {
    let delta = ch.battery().uniform_spacing().ok_or(Error::NonUniformBattery)?;
    let top = ch.n_battery().saturating_sub(2);
    let eti = ch.check_eti_band(k_min, top, EtiConvention::Main)?;
    if !eti.holds {
        return Err(Error::EtiViolated { k_min, max_violation: eti.main.max_violation });
    }
    Ok(delta)
}

/// Checks `<exp(beta (w - f_s))>_k <= Z_S' (1 + exp(-beta delta_k))` for
/// `k_min <= k <= N - band_buffer`, with `delta_k = (k - k_min + 1) delta`.
pub fn theorem1_certify(ch: &ThermalChannel, sys: &DiagonalState, k_min: usize, band_buffer: usize) -> Result<Theorem1Report> {
    let delta = require_eti(ch, k_min)?;
    let n = ch.n_battery() - 1;
    if k_min + band_buffer > n {
        return Err(Error::PreconditionViolated(format!("no levels between k_min = {k_min} and N - {band_buffer}")));
    }
    let b = ch.beta();
    let ln_z_out = log_partition_function(ch.sys_out(), b)?;
    let mut rows = Vec::new();
    for k in k_min..=n - band_buffer {
        let lhs = conditional_jarzynski(ch, sys, k)?;
        let dk = (k - k_min + 1) as f64 * delta;
        let rhs = ln_z_out.exp() * (1.0 + (-b * dk).exp());
        rows.push(Theorem1Row { k, lhs, rhs, slack: rhs - lhs });
    }
    let worst_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(Theorem1Report { k_min, rows, worst_slack, passed: worst_slack >= -BOUND_TOL })
}

/// `ln eta_k` with `eta_k = Z_W exp(beta eps_k)`.
pub fn log_eta(battery: &EnergySpectrum, beta: f64, k: usize) -> Result<f64> {
    let e = *battery.levels().get(k).ok_or(Error::IndexOutOfRange { index: k, len: battery.len() })?;
    Ok(log_partition_function(battery, beta)? + beta * e)
}

/// `d eta_k / d beta = eta_k (eps_k - <E>_beta)`.
pub fn eta_derivative(battery: &EnergySpectrum, beta: f64, k: usize) -> Result<f64> {
    let ln_eta = log_eta(battery, beta, k)?;
    let g = crate::spectra::gibbs_state(battery, beta)?;
    Ok(ln_eta.exp() * (battery.levels()[k] - g.mean_energy()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondLawReport {
    pub avg_work: f64,
    pub delta_f: f64,
    pub a_term: f64,
    pub b_term_main: f64,
    pub b_term_appendix: f64,
    pub eta_s: f64,
    /// `-delta_f + A + B` with the larger B.
    pub bound: f64,
    /// `bound - <w>`.
    pub slack: f64,
    /// Same with the smaller B, reported only.
    pub slack_main: f64,
}

/// Second law with vacuum corrections, for a channel that is ETI above `k_min`.
pub fn theorem2_bound(ch: &ThermalChannel, sys: &DiagonalState, bat: &DiagonalState, k_min: usize) -> Result<SecondLawReport> {
    let delta = require_eti(ch, k_min)?;
    let b = ch.beta();
    let wd = work_distribution(ch, sys, bat)?;
    let avg_work = average_work(&wd);
    let out = ch.apply(sys, bat)?;
    let (sys_out, _) = ch.marginals(&out)?;
    let f_in = free_energy(sys, b);
    let delta_f = free_energy(&sys_out, b) - f_in;

    let ln_eta_s = log_partition_function(ch.sys_out(), b)? + b * ch.sys_in().max();
    let eta_s = ln_eta_s.exp();
    let e_out_max = ch.sys_out().max();
    let pw = bat.probs();
    let mut a_term = 0.0;
    for (k, &p) in pw.iter().enumerate().take(k_min) {
        if p > 0.0 {
            a_term += p * (e_out_max - f_in - eta_s * eta_derivative(ch.battery(), b, k)?);
        }
    }
    let tail: f64 = pw
        .iter()
        .enumerate()
        .skip(k_min)
        .map(|(k, &p)| p * (-b * (k - k_min + 1) as f64 * delta).exp())
        .sum();
    let b_term_main = (1.0 + tail).ln() / b;
    let b_term_appendix = (1.0 + eta_s * tail).ln() / b;
    let bound = -delta_f + a_term + b_term_appendix;
    Ok(SecondLawReport {
        avg_work,
        delta_f,
        a_term,
        b_term_main,
        b_term_appendix,
        eta_s,
        bound,
        slack: bound - avg_work,
        slack_main: -delta_f + a_term + b_term_main - avg_work,
    })
}

/// System data entering the simplified correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    pub dim: usize,
    pub e_max_out: f64,
}

/// `h(beta, delta, eps_min) = e^{-beta delta} [1 + beta delta e^{beta eps_min} (1 - e^{-beta delta})^-2]`.
pub fn correction_h(beta: f64, delta: f64, eps_min: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("gap {delta} must be positive")));
    }
    if (beta * eps_min).abs() > EXP_GUARD {
        return Err(Error::OverflowRisk(beta * eps_min));
    }
    let bd = beta * delta;
    let one_minus = -(-bd).exp_m1();
    Ok((-bd).exp() + (bd.ln() + beta * eps_min - bd - 2.0 * one_minus.ln()).exp())
}

/// Battery weight at or below `eps_star`.
pub fn prob_below(bat: &DiagonalState, eps_star: f64) -> f64 {
    let cut = eps_star + 1e-12 * eps_star.abs().max(1.0);
    bat.probs().iter().zip(bat.spectrum().levels()).filter(|(_, &e)| e <= cut).map(|(p, _)| p).sum()
}

/// Simplified vacuum correction `C(eps*)`.
pub fn corollary1_correction(
    eps_star: f64,
    bat: &DiagonalState,
    sys: SystemParams,
    beta: f64,
    delta: f64,
    eps_min: f64,
) -> Result<f64> {
    if !(eps_star > eps_min) || eps_min < 0.0 {
        return Err(Error::Domain(format!("need eps* > eps_min >= 0, got {eps_star} and {eps_min}")));
    }
    if sys.dim == 0 {
        return Err(Error::Domain("system dimension must be positive".into()));
    }
    let ln_c = (sys.dim as f64).ln() + beta * sys.e_max_out;
    if ln_c.abs() > EXP_GUARD {
        return Err(Error::OverflowRisk(ln_c));
    }
    let h = correction_h(beta, delta, eps_min)?;
    let p = prob_below(bat, eps_star);
    Ok(p * ((ln_c + h.ln()).exp() + ln_c) + (ln_c - beta * (eps_star - eps_min)).exp())
}

/// Battery profile `exp(-beta^2 (eps - mean)^2 / 2)` normalized on the levels.
pub fn gaussian_profile(battery: &EnergySpectrum, mean: f64, beta: f64) -> Result<DiagonalState> {
    let logw: Vec<f64> = battery.levels().iter().map(|e| -0.5 * (beta * (e - mean)).powi(2)).collect();
    let ln_norm = log_sum_exp(&logw);
    DiagonalState::new(logw.iter().map(|l| (l - ln_norm).exp()).collect(), battery.clone())
}

/// Parameters of the correction sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig2Params {
    pub beta: f64,
    pub delta: f64,
    pub eps_min: f64,
    /// Gaussian centre for the eps* sweep.
    pub mean: f64,
    /// Fixed cut-off for the centre sweep.
    pub eps_star: f64,
    pub sys: SystemParams,
    /// Highest battery level energy.
    pub top: f64,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            beta: 1.0,
            delta: 0.1,
            eps_min: 5.0,
            mean: 50.0,
            eps_star: 50.0,
            sys: SystemParams { dim: 2, e_max_out: 0.0 },
            top: 150.0,
        }
    }
}

impl Fig2Params {
    pub fn battery(&self) -> Result<EnergySpectrum> {
        EnergySpectrum::uniform(self.delta, (self.top / self.delta).round() as usize)
    }
}

/// `C` against the cut-off `eps*` for a fixed Gaussian battery.
pub fn fig2a(p: &Fig2Params, eps_star_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let bat = gaussian_profile(&p.battery()?, p.mean, p.beta)?;
    eps_star_grid
        .iter()
        .map(|&x| Ok((x, corollary1_correction(x, &bat, p.sys, p.beta, p.delta, p.eps_min)?)))
        .collect()
}

/// `C` against the Gaussian centre for a fixed cut-off.
pub fn fig2b(p: &Fig2Params, mean_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let spec = p.battery()?;
    mean_grid
        .iter()
        .map(|&m| {
            let bat = gaussian_profile(&spec, m, p.beta)?;
            Ok((m, corollary1_correction(p.eps_star, &bat, p.sys, p.beta, p.delta, p.eps_min)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_gibbs_stochastic, WitSubchannels};
    use crate::construction::extend_to_oscillator;
    use crate::spectra::{fine_grained_free_energy, gibbs_state, partition_function};

    fn direct_jarzynski(ch: &ThermalChannel, sys: &DiagonalState, k: usize) -> f64 {
        let b = ch.beta();
        let eps = ch.battery().levels();
        let mut acc = 0.0;
        for s in 0..ch.d_in() {
            let p = sys.probs()[s];
            if p == 0.0 {
                continue;
            }
            let f = fine_grained_free_energy(sys, b, s).unwrap();
            for kp in 0..ch.n_battery() {
                for sp in 0..ch.d_out() {
                    acc += p * ch.entry(sp, kp, s, k) * (b * (eps[kp] - eps[k] - f)).exp();
                }
            }
        }
        acc
    }

    #[test]
    fn identity_channel_gives_partition_function() {
        let sys = EnergySpectrum::new(vec![0.0, 0.3, 1.2]).unwrap();
        let ch = ThermalChannel::identity(sys.clone(), EnergySpectrum::uniform(0.5, 5).unwrap(), 1.4).unwrap();
        let st = DiagonalState::new(vec![0.2, 0.3, 0.5], sys.clone()).unwrap();
        let z = partition_function(&sys, 1.4).unwrap();
        for k in 0..6 {
            assert!((conditional_jarzynski(&ch, &st, k).unwrap() - z).abs() < 1e-14);
        }
        let rep = theorem1_certify(&ch, &st, 0, 1).unwrap();
        assert!(rep.passed);
        assert!(rep.rows.iter().all(|r| (r.lhs / z - 1.0).abs() < 1e-14));
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let sys = EnergySpectrum::new(vec![0.0, 0.8]).unwrap();
        let sub = WitSubchannels::random(&sys, 0.9, 1.0, 4, 40).unwrap();
        let ch = extend_to_oscillator(&sub, 12).unwrap();
        let st = DiagonalState::new(vec![0.35, 0.65], sys).unwrap();
        for k in 0..=12 {
            let a = conditional_jarzynski(&ch, &st, k).unwrap();
            let b = direct_jarzynski(&ch, &st, k);
            assert!((a - b).abs() < 1e-12 * b.max(1.0), "k = {k}: {a} vs {b}");
        }
    }

    #[test]
    fn theorem1_on_an_extension_with_thermal_input() {
        let sys = EnergySpectrum::new(vec![0.0, 0.8]).unwrap();
        let sub = WitSubchannels::random(&sys, 0.9, 1.0, 6, 40).unwrap();
        let ch = extend_to_oscillator(&sub, 30).unwrap();
        let tau = gibbs_state(&sys, 1.0).unwrap();
        let rep = theorem1_certify(&ch, &tau, 1, 5).unwrap();
        assert!(rep.passed);
        // thermal input: <e^{beta w}>_k <= (Z_S'/Z_S)(1 + e^{-beta delta_k}) with Z_S' = Z_S
        let z = partition_function(&sys, 1.0).unwrap();
        for r in &rep.rows {
            let avg = r.lhs / z;
            assert!(avg <= r.rhs / z + BOUND_TOL);
        }
    }

    #[test]
    fn theorem1_requires_eti() {
        let sys = EnergySpectrum::new(vec![0.0, 0.5]).unwrap();
        let ch = random_gibbs_stochastic(&sys, &EnergySpectrum::uniform(0.5, 6).unwrap(), 1.0, 2, 50).unwrap();
        let st = gibbs_state(&sys, 1.0).unwrap();
        assert!(matches!(theorem1_certify(&ch, &st, 1, 2), Err(Error::EtiViolated { .. })));
    }

    #[test]
    fn eta_derivative_examples() {
        let single = EnergySpectrum::new(vec![0.7]).unwrap();
        assert_eq!(eta_derivative(&single, 1.3, 0).unwrap(), 0.0);
        assert!((log_eta(&single, 1.3, 0).unwrap()).abs() < 1e-15);
        // near infinite temperature the middle level sits at the Gibbs mean
        let sym = EnergySpectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        let g = gibbs_state(&sym, 1e-9).unwrap();
        assert!((g.mean_energy() - 1.0).abs() < 1e-8);
        assert!(eta_derivative(&sym, 1e-9, 1).unwrap().abs() < 1e-7);
        let osc = EnergySpectrum::uniform(std::f64::consts::LN_2, 60).unwrap();
        let z = partition_function(&osc, 1.0).unwrap();
        let mean = gibbs_state(&osc, 1.0).unwrap().mean_energy();
        assert!((eta_derivative(&osc, 1.0, 0).unwrap() + z * mean).abs() < 1e-12);
    }

    #[test]
    fn second_law_identity_channel() {
        let sys = EnergySpectrum::new(vec![0.0, 0.5]).unwrap();
        let bat = EnergySpectrum::uniform(0.5, 8).unwrap();
        let ch = ThermalChannel::identity(sys.clone(), bat.clone(), 1.0).unwrap();
        let st = DiagonalState::new(vec![0.6, 0.4], sys).unwrap();
        let pw = DiagonalState::normalized((0..9).map(|k| 1.0 + k as f64).collect(), bat).unwrap();
        let rep = theorem2_bound(&ch, &st, &pw, 1).unwrap();
        assert_eq!(rep.avg_work, 0.0);
        assert!(rep.delta_f.abs() < 1e-15);
        assert!(rep.slack >= 0.0);
        assert!(rep.b_term_appendix >= rep.b_term_main);
    }

    #[test]
    fn correction_examples() {
        let bat = EnergySpectrum::uniform(0.1, 1500).unwrap();
        let far = DiagonalState::pure(1400, bat.clone()).unwrap();
        let sys = SystemParams { dim: 2, e_max_out: 0.0 };
        let c = corollary1_correction(50.0, &far, sys, 1.0, 0.1, 5.0).unwrap();
        assert!((c - 2.0 * (-45.0f64).exp()).abs() < 1e-30);
        assert!(corollary1_correction(5.0, &far, sys, 1.0, 0.1, 5.0).is_err());
        let h = correction_h(1.0, 0.1, 5.0).unwrap();
        let direct = (-0.1f64).exp() * (1.0 + 0.1 * 5f64.exp() / (1.0 - (-0.1f64).exp()).powi(2));
        assert!((h - direct).abs() < 1e-11 * direct);
    }

    #[test]
    fn gaussian_profile_is_centred() {
        let bat = EnergySpectrum::uniform(0.1, 1500).unwrap();
        let g = gaussian_profile(&bat, 50.0, 1.0).unwrap();
        assert!((g.mean_energy() - 50.0).abs() < 1e-10);
        let var: f64 = g.probs().iter().zip(bat.levels()).map(|(p, e)| p * (e - 50.0).powi(2)).sum();
        assert!((var - 1.0).abs() < 1e-6);
    }
}
