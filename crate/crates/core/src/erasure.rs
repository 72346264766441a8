//! Erasure of a qubit with a fully degenerate Hamiltonian, on an ideal weight
//! and on an oscillator battery.

use serde::Serialize;

use crate::batteries::{average_work, f1_measure, general_cost, variance, CostFunction, WorkDistribution};
use crate::channels::WitSubchannels;
use crate::construction::{auto_size_n, extend_to_oscillator, norm1, truncation_tail, vacuum_tail};
use crate::error::{Error, Result};
use crate::math::{binary_entropy, fmt_f64};
use crate::spectra::{gibbs_state, DiagonalState, EnergySpectrum};
use nalgebra::DMatrix;

const LN2: f64 = std::f64::consts::LN_2;

/// Parameters of one erasure scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErasureSetting {
    /// Failure probability of the channel.
    pub eps: f64,
    /// Ground-level occupation of the battery.
    pub gamma: f64,
    /// Fluctuation budget.
    pub c: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl ErasureSetting {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.eps) {
            return Err(Error::Domain(format!("eps = {} outside [0, 1/2)", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if !(self.c >= 0.0) {
            return Err(Error::Domain(format!("c = {} is negative", self.c)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Domain(format!("lambda = {} outside (0, 1]", self.lambda)));
        }
        check_beta(self.beta)
    }

    /// Total error `eps (1 - gamma) + gamma`.
    pub fn eps_tot(&self) -> f64 {
        eps_tot(self.eps, self.gamma)
    }
}

pub fn eps_tot(eps: f64, gamma: f64) -> f64 {
    eps * (1.0 - gamma) + gamma
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta = {beta} must be positive")))
    }
}

fn qubit() -> EnergySpectrum {
    EnergySpectrum::new(vec![0.0, 0.0]).expect("two levels").with_label("qubit")
}

/// One branch `s -> s'` of an ideal-weight process with a fixed weight shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightTransition {
    pub from: usize,
    pub to: usize,
    pub work: f64,
    pub prob: f64,
}

/// Process on system plus ideal weight, stored branch by branch.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealWeightProcess {
    pub sys_in: EnergySpectrum,
    pub sys_out: EnergySpectrum,
    pub transitions: Vec<WeightTransition>,
}

impl IdealWeightProcess {
    /// Per input level, `|sum of branch probabilities - 1|`.
    pub fn stochasticity_residuals(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.sys_in.len()];
        for t in &self.transitions {
            acc[t.from] += t.prob;
        }
        acc.into_iter().map(|a| (a - 1.0).abs()).collect()
    }

    /// Per output level, `|sum p(s', w|s) exp(beta (E'_s' - E_s + w)) - 1|`.
    pub fn gibbs_residuals(&self, beta: f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.sys_out.len()];
        for t in &self.transitions {
            let de = self.sys_out.levels()[t.to] - self.sys_in.levels()[t.from];
            acc[t.to] += t.prob * (beta * (de + t.work)).exp();
        }
        acc.into_iter().map(|a| (a - 1.0).abs()).collect()
    }

    pub fn work_distribution(&self, input: &DiagonalState) -> Result<WorkDistribution> {
        if input.spectrum().levels() != self.sys_in.levels() {
            return Err(Error::DimensionMismatch("input is not on the process spectrum".into()));
        }
        WorkDistribution::from_pairs(self.transitions.iter().map(|t| (t.work, input.probs()[t.from] * t.prob)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightErasure {
    pub distribution: WorkDistribution,
    pub w0: f64,
    pub w1: f64,
    pub process: IdealWeightProcess,
}

/// Optimal weight erasure with failure probability `eps`.
pub fn weight_process(eps: f64, beta: f64) -> Result<WeightErasure> {
    lambda_family(eps, 1.0, beta, eps > 0.0 && eps < 1.0)
}

/// Erasure where only a fraction `lam` of the failures carries the large shift.
pub fn lambda_process(eps: f64, lam: f64, beta: f64) -> Result<WeightErasure> {
    lambda_family(eps, lam, beta, eps > 0.0 && eps < 0.5)
}

fn lambda_family(eps: f64, lam: f64, beta: f64, eps_ok: bool) -> Result<WeightErasure> {
    check_beta(beta)?;
    if !eps_ok {
        return Err(Error::Domain(format!("eps = {eps} out of range")));
    }
    if !(lam > 0.0 && lam <= 1.0) {
        return Err(Error::Domain(format!("lambda = {lam} outside (0, 1]")));
    }
    let w0 = -(LN2 + (-eps).ln_1p()) / beta;
    // solves (1 - lam) e^{beta w0} + lam e^{beta w1} = 1 / (2 eps)
    let arg = (1.0 / (2.0 * eps) - (1.0 - lam) / (2.0 * (1.0 - eps))) / lam;
    if !(arg > 0.0) {
        return Err(Error::Domain(format!("shift argument {arg} is not positive")));
    }
    let w1 = arg.ln() / beta;
    let mut transitions = Vec::new();
    for s in 0..2 {
        transitions.push(WeightTransition { from: s, to: 0, work: w0, prob: 1.0 - eps });
        if lam < 1.0 {
            transitions.push(WeightTransition { from: s, to: 1, work: w0, prob: eps * (1.0 - lam) });
        }
        transitions.push(WeightTransition { from: s, to: 1, work: w1, prob: eps * lam });
    }
    let process = IdealWeightProcess { sys_in: qubit(), sys_out: qubit(), transitions };
    let distribution = process.work_distribution(&gibbs_state(&qubit(), beta)?)?;
    Ok(WeightErasure { distribution, w0, w1, process })
}

/// Smallest failure probability a weight process with `F1 <= c` can reach.
pub fn weight_error_bound(c: f64, beta: f64) -> f64 {
    0.5 * (-beta * c).exp()
}

/// Mean work of the optimal weight process: `(-ln 2 + h(eps)) / beta`.
pub fn weight_avg_closed(eps: f64, beta: f64) -> f64 {
    (-LN2 + binary_entropy(eps)) / beta
}

/// Variance of the optimal weight process.
pub fn weight_var_closed(eps: f64, beta: f64) -> f64 {
    let h = binary_entropy(eps);
    let term = |p: f64| if p > 0.0 { p * (-p.ln() - h).powi(2) } else { 0.0 };
    (term(eps) + term(1.0 - eps)) / (beta * beta)
}

/// Wit subchannels of the oscillator erasure protocol.
pub fn oscillator_erasure_subchannels(eps: f64, beta: f64) -> Result<WitSubchannels> {
    check_beta(beta)?;
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::Domain(format!("eps = {eps} outside [0, 1/2)")));
    }
    let a = (1.0 - 2.0 * eps) / (2.0 * (1.0 - eps));
    WitSubchannels::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, a, a]),
        DMatrix::from_diagonal_element(2, 2, 1.0 / (2.0 * (1.0 - eps))),
        DMatrix::from_row_slice(2, 2, &[1.0 - eps, 1.0 - eps, eps, eps]),
        DMatrix::zeros(2, 2),
        qubit(),
        (LN2 + (-eps).ln_1p()) / beta,
        beta,
    )
}

fn osc_delta(eps: f64, beta: f64) -> f64 {
    (LN2 + (-eps).ln_1p()) / beta
}

/// Mean work of oscillator erasure with vacuum occupation `gamma`.
pub fn oscillator_avg_closed(eps: f64, gamma: f64, beta: f64) -> f64 {
    let d = osc_delta(eps, beta);
    -d * (1.0 - 2.0 * gamma * (1.0 - eps) / (1.0 - 2.0 * eps))
}

/// Work variance of oscillator erasure with vacuum occupation `gamma`.
pub fn oscillator_var_closed(eps: f64, gamma: f64, beta: f64) -> f64 {
    let d = osc_delta(eps, beta);
    let u = 1.0 - 2.0 * eps;
    gamma * d * d * 2.0 * (1.0 - eps) * (3.0 - 2.0 * gamma * (1.0 - eps) - 2.0 * eps) / (u * u)
}

fn erasure_inputs(eps: f64, gamma: f64, beta: f64, n: Option<usize>) -> Result<(WitSubchannels, usize, DiagonalState, DiagonalState)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma = {gamma} outside [0, 1]")));
    }
    let sub = oscillator_erasure_subchannels(eps, beta)?;
    let n = n.unwrap_or_else(|| auto_size_n(&sub));
    if n < 2 {
        return Err(Error::Domain(format!("N = {n} is below 2")));
    }
    let tau = gibbs_state(&sub.system, beta)?;
    let mut pw = vec![0.0; n + 1];
    pw[0] = gamma;
    pw[1] = 1.0 - gamma;
    let bat = DiagonalState::new(pw, EnergySpectrum::uniform(sub.delta, n)?)?;
    Ok((sub, n, tau, bat))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub eps: f64,
    pub gamma: f64,
    pub beta: f64,
    pub n: usize,
    pub delta: f64,
    pub eps_tot: f64,
    /// Probability of ending in the wrong state on the finite battery.
    pub sim_error: f64,
    pub avg_closed: f64,
    pub var_closed: f64,
    pub avg_sim: f64,
    pub var_sim: f64,
    /// Mean work lost to the finite top level.
    pub tail: f64,
}

/// Closed-form and simulated work statistics of oscillator erasure with the
/// battery in `(1 - gamma)|1> + gamma|0>`.
pub fn oscillator_erasure_stats(eps: f64, gamma: f64, n: Option<usize>, beta: f64) -> Result<StatsReport> {
    let (sub, n, tau, bat) = erasure_inputs(eps, gamma, beta, n)?;
    let ch = extend_to_oscillator(&sub, n)?;
    let wd = crate::batteries::work_distribution(&ch, &tau, &bat)?;
    let out = ch.apply(&tau, &bat)?;
    let (sys_out, _) = ch.marginals(&out)?;
    let tail = (1.0 - gamma) * truncation_tail(&sub, &tau, n - 1)? + gamma * vacuum_tail(&sub, &tau, n)?;
    Ok(StatsReport {
        eps,
        gamma,
        beta,
        n,
        delta: sub.delta,
        eps_tot: eps_tot(eps, gamma),
        sim_error: sys_out.probs()[1],
        avg_closed: oscillator_avg_closed(eps, gamma, beta),
        var_closed: oscillator_var_closed(eps, gamma, beta),
        avg_sim: average_work(&wd),
        var_sim: variance(&wd),
        tail,
    })
}

/// Lower bound on the failure probability for a weight process whose
/// exponential cost is at most `c`.
pub fn exp_cost_weight_bound(c: f64) -> f64 {
    if !(c < 0.5) {
        return 0.0;
    }
    (0.5 - c / (2.0 * (1.0 - c))).max(0.0)
}

/// The closed expression for the exponential cost on the oscillator; it has a
/// pole at `exp(beta delta) = 2`.
pub fn exp_cost_closed_form(eps: f64, gamma: f64, beta: f64) -> Result<f64> {
    let bd = beta * osc_delta(eps, beta);
    let e = bd.exp();
    if e >= 2.0 {
        return Err(Error::Pole(format!("exp(beta delta) = {e} >= 2")));
    }
    Ok((2.0 * bd * gamma).exp_m1() - 0.5 * gamma * (-2.0 * bd * gamma).exp() * (1.0 - e / (2.0 - e)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpCostReport {
    pub n: usize,
    /// `sum p(w) (exp(beta |w - <w>|) - 1)` on the finite battery.
    pub direct: f64,
    /// `None` at the pole.
    pub closed_form: Option<f64>,
    pub discrepancy: Option<f64>,
    /// Vacuum mass left at the top level, `gamma ||R01^N||_1`.
    pub top_mass: f64,
    pub f1: f64,
}

pub fn exp_cost_oscillator(eps: f64, gamma: f64, beta: f64, n: Option<usize>) -> Result<ExpCostReport> {
    let (sub, n, tau, bat) = erasure_inputs(eps, gamma, beta, n)?;
    let ch = extend_to_oscillator(&sub, n)?;
    let wd = crate::batteries::work_distribution(&ch, &tau, &bat)?;
    let direct = general_cost(&wd, &CostFunction::exp_abs(beta));
    let closed_form = match exp_cost_closed_form(eps, gamma, beta) {
        Ok(v) => Some(v),
        Err(Error::Pole(_)) => None,
        Err(e) => return Err(e),
    };
    let p = (0..n).fold(DMatrix::identity(2, 2), |acc, _| &sub.r01 * acc);
    Ok(ExpCostReport {
        n,
        direct,
        discrepancy: closed_form.map(|c| direct - c),
        closed_form,
        top_mass: gamma * norm1(&p),
        f1: f1_measure(&wd),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig4Row {
    pub eps_tot: f64,
    pub avg_w_weight: f64,
    pub var_weight: f64,
    pub avg_w_osc: f64,
    pub var_osc: f64,
}

/// Work statistics of both batteries at equal total error. The oscillator
/// uses a perfect channel and puts all the error into the vacuum occupation.
pub fn fig4_rows(eps_tot_grid: &[f64], beta: f64) -> Result<Vec<Fig4Row>> {
    check_beta(beta)?;
    eps_tot_grid
        .iter()
        .map(|&e| {
            if !(0.0..0.5).contains(&e) {
                return Err(Error::Domain(format!("eps_tot = {e} outside [0, 1/2)")));
            }
            Ok(Fig4Row {
                eps_tot: e,
                avg_w_weight: weight_avg_closed(e, beta),
                var_weight: weight_var_closed(e, beta),
                avg_w_osc: oscillator_avg_closed(0.0, e, beta),
                var_osc: oscillator_var_closed(0.0, e, beta),
            })
        })
        .collect()
}

pub fn fig4_csv(rows: &[Fig4Row]) -> String {
    let mut s = String::from("eps_tot,avg_w_weight,var_weight,avg_w_osc,var_osc\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.eps_tot),
            fmt_f64(r.avg_w_weight),
            fmt_f64(r.var_weight),
            fmt_f64(r.avg_w_osc),
            fmt_f64(r.var_osc)
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterministicWorkCheck {
    /// Work each output level would need, `None` if nothing reaches it.
    pub implied_work: Vec<Option<f64>>,
    pub spread: f64,
    pub consistent: bool,
}

/// Whether a system map `p(s'|s)` (rows `s'`, columns `s`) can run on an
/// ideal weight with a single deterministic work value.
pub fn deterministic_work_consistency(
    map: &DMatrix<f64>,
    sys_in: &EnergySpectrum,
    sys_out: &EnergySpectrum,
    beta: f64,
) -> Result<DeterministicWorkCheck> {
    check_beta(beta)?;
    if map.shape() != (sys_out.len(), sys_in.len()) {
        return Err(Error::DimensionMismatch(format!("map is {:?}", map.shape())));
    }
    let implied_work: Vec<Option<f64>> = (0..sys_out.len())
        .map(|sp| {
            let s: f64 = (0..sys_in.len())
                .map(|s| map[(sp, s)] * (beta * (sys_out.levels()[sp] - sys_in.levels()[s])).exp())
                .sum();
            (s > 0.0).then(|| -s.ln() / beta)
        })
        .collect();
    let vals: Vec<f64> = implied_work.iter().flatten().copied().collect();
    let spread = if vals.is_empty() {
        f64::INFINITY
    } else {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let consistent = vals.len() == implied_work.len() && spread <= 1e-12;
    Ok(DeterministicWorkCheck { implied_work, spread, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batteries::{theorem4_check, work_distribution};
    use crate::channels::Tolerances;

    #[test]
    fn weight_process_numbers() {
        let w = weight_process(0.25, 1.0).unwrap();
        assert!((w.w0 + 1.5f64.ln()).abs() < 1e-15);
        assert!((w.w1 - LN2).abs() < 1e-15);
        assert!((average_work(&w.distribution) - weight_avg_closed(0.25, 1.0)).abs() < 1e-15);
        assert!(w.process.gibbs_residuals(1.0).iter().all(|&r| r < 1e-12));
        assert!(w.process.stochasticity_residuals().iter().all(|&r| r < 1e-15));
        let f1 = f1_measure(&w.distribution);
        assert!((f1 - (binary_entropy(0.25) + 0.25f64.ln()).abs()).abs() < 1e-15);
    }

    #[test]
    fn weight_process_half_is_a_point_mass() {
        let w = weight_process(0.5, 1.0).unwrap();
        assert_eq!(w.distribution.support(), &[0.0]);
        assert!(weight_process(0.0, 1.0).is_err());
        assert!(weight_process(1.0, 1.0).is_err());
    }

    #[test]
    fn weight_process_at_other_temperatures() {
        let w = weight_process(0.1, 2.5).unwrap();
        assert!(w.process.gibbs_residuals(2.5).iter().all(|&r| r < 1e-12));
        assert!((2.5 * w.w0 - (1.0f64 / 1.8).ln()).abs() < 1e-15);
        assert!((variance(&w.distribution) - weight_var_closed(0.1, 2.5)).abs() < 1e-14);
    }

    #[test]
    fn error_bounds() {
        assert_eq!(weight_error_bound(0.0, 1.0), 0.5);
        assert!((weight_error_bound(LN2, 1.0) - 0.25).abs() < 1e-16);
        assert_eq!(weight_error_bound(f64::INFINITY, 1.0), 0.0);
        assert_eq!(exp_cost_weight_bound(0.0), 0.5);
        assert!((exp_cost_weight_bound(1.0 / 3.0) - 0.25).abs() < 1e-16);
        assert_eq!(exp_cost_weight_bound(0.5), 0.0);
        assert_eq!(exp_cost_weight_bound(0.9), 0.0);
    }

    #[test]
    fn lambda_family() {
        let one = lambda_process(0.2, 1.0, 1.0).unwrap();
        let w = weight_process(0.2, 1.0).unwrap();
        assert!((one.w1 - w.w1).abs() < 1e-15);
        assert_eq!(one.distribution, w.distribution);
        for lam in [1e-6, 1e-4, 0.3, 0.9] {
            let p = lambda_process(0.1, lam, 1.0).unwrap();
            assert!(p.process.gibbs_residuals(1.0).iter().all(|&r| r < 1e-12), "lambda {lam}");
            assert!((p.distribution.prob_of(p.w1) - 0.1 * lam).abs() < 1e-15);
        }
        let p = lambda_process(0.1, 1e-4, 1.0).unwrap();
        assert!(variance(&p.distribution) < 1e-2);
        // the mean moves off w0 by exactly lambda eps (w1 - w0)
        let shift = average_work(&p.distribution) - p.w0;
        assert!((shift - 1e-5 * (p.w1 - p.w0)).abs() < 1e-15);
        let p = lambda_process(0.1, 1e-6, 1.0).unwrap();
        assert!((average_work(&p.distribution) - p.w0).abs() < 1e-4);
        assert!(variance(&p.distribution) < 1e-4);
        assert!(lambda_process(0.5, 0.5, 1.0).is_err());
        assert!(lambda_process(0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn oscillator_subchannels() {
        let s = oscillator_erasure_subchannels(0.0, 1.0).unwrap();
        assert_eq!(s.r01, DMatrix::from_diagonal_element(2, 2, 0.5));
        assert_eq!(s.r00, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]));
        assert!((s.delta - LN2).abs() < 1e-16);
        let rep = oscillator_erasure_subchannels(0.3, 1.0).unwrap().report();
        assert!(rep.max_gibbs < 1e-15 && rep.max_stochastic < 1e-15);
        assert!(oscillator_erasure_subchannels(0.5, 1.0).is_err());
    }

    #[test]
    fn oscillator_closed_forms_at_known_points() {
        assert!(oscillator_avg_closed(0.0, 0.5, 1.0).abs() < 1e-16);
        assert!((oscillator_var_closed(0.0, 0.5, 1.0) - 2.0 * LN2 * LN2).abs() < 1e-15);
        let r = oscillator_erasure_stats(0.2, 0.0, None, 1.0).unwrap();
        assert!((r.avg_sim + r.delta).abs() < 1e-15);
        assert_eq!(r.var_sim, 0.0);
    }

    #[test]
    fn oscillator_stats_match_simulation() {
        let r = oscillator_erasure_stats(0.01, 0.05, None, 1.0).unwrap();
        assert!(r.tail < 1e-10);
        assert!((r.avg_sim - r.avg_closed).abs() < 1e-9 * r.avg_closed.abs());
        assert!((r.var_sim - r.var_closed).abs() < 1e-9 * r.var_closed);
        assert!((r.sim_error - r.eps_tot).abs() < 1e-10);
        let wd = work_distribution(
            &extend_to_oscillator(&oscillator_erasure_subchannels(0.01, 1.0).unwrap(), r.n).unwrap(),
            &gibbs_state(&qubit(), 1.0).unwrap(),
            &erasure_inputs(0.01, 0.05, 1.0, Some(r.n)).unwrap().3,
        )
        .unwrap();
        assert!(theorem4_check(&wd, 0.05).unwrap().passed);
    }

    #[test]
    fn vacuum_tail_accounts_for_the_top_level() {
        let sub = oscillator_erasure_subchannels(0.1, 1.0).unwrap();
        let tau = gibbs_state(&qubit(), 1.0).unwrap();
        // infinite battery from the vacuum: delta (1^T (I - R01)^-1 x - 1)
        let q = 1.0 / 1.8;
        let inf = sub.delta * (1.0 / (1.0 - q) - 1.0);
        for n in [5, 12, 30] {
            let ch = extend_to_oscillator(&sub, n).unwrap();
            assert!(ch.validate(&Tolerances::default()).valid);
            let bat = DiagonalState::pure(0, ch.battery().clone()).unwrap();
            let direct = average_work(&work_distribution(&ch, &tau, &bat).unwrap());
            assert!((direct + vacuum_tail(&sub, &tau, n).unwrap() - inf).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn exp_cost_behaviour() {
        let r = exp_cost_oscillator(0.2, 0.0, 1.0, None).unwrap();
        assert_eq!(r.direct, 0.0);
        assert!(exp_cost_oscillator(0.0, 0.1, 1.0, Some(40)).unwrap().closed_form.is_none());
        assert!(matches!(exp_cost_closed_form(0.0, 0.1, 1.0), Err(Error::Pole(_))));
        // geometric weights and exponential cost cancel: linear growth in N
        let a = exp_cost_oscillator(0.1, 0.05, 1.0, Some(100)).unwrap().direct;
        let b = exp_cost_oscillator(0.1, 0.05, 1.0, Some(200)).unwrap().direct;
        let c = exp_cost_oscillator(0.1, 0.05, 1.0, Some(300)).unwrap().direct;
        assert!(b > a && c > b);
        assert!(((c - b) - (b - a)).abs() < 1e-6 * (b - a));
        let lo = exp_cost_oscillator(0.1, 0.02, 1.0, Some(100)).unwrap().direct;
        assert!(lo < a);
    }

    #[test]
    fn fig4_endpoints() {
        let rows = fig4_rows(&[0.0, 1e-3, 0.2], 1.0).unwrap();
        assert_eq!(rows[0].avg_w_weight, -LN2);
        assert_eq!(rows[0].avg_w_osc, -LN2);
        assert_eq!(rows[0].var_weight, 0.0);
        assert_eq!(rows[0].var_osc, 0.0);
        assert!(rows.iter().all(|r| r.avg_w_osc <= r.avg_w_weight));
        assert!(fig4_csv(&rows).starts_with("eps_tot,avg_w_weight,var_weight,avg_w_osc,var_osc\n"));
        assert!(fig4_rows(&[0.5], 1.0).is_err());
    }

    #[test]
    fn point_mass_work_consistency() {
        let q = qubit();
        for (a, ok) in [(0.6, false), (0.5, true), (0.9, false)] {
            let m = DMatrix::from_row_slice(2, 2, &[a, a, 1.0 - a, 1.0 - a]);
            let rep = deterministic_work_consistency(&m, &q, &q, 1.0).unwrap();
            assert_eq!(rep.consistent, ok, "a = {a}");
        }
        let stuck = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let rep = deterministic_work_consistency(&stuck, &q, &q, 1.0).unwrap();
        assert!(!rep.consistent);
        assert_eq!(rep.implied_work[1], None);
    }
}
