//! Named experiments shared by the command line and the tests. Each returns a
//! table plus a list of named checks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batteries::{average_work, theorem4_check, work_distribution};
use crate::bounds::{
    conditional_jarzynski, fig2a, fig2b, theorem1_certify, theorem2_bound, Fig2Params, BOUND_TOL,
};
use crate::channels::{random_gibbs_stochastic, ThermalChannel, WitSubchannels};
use crate::construction::extend_to_oscillator;
use crate::erasure::{
    deterministic_work_consistency, fig4_rows, oscillator_erasure_stats, oscillator_erasure_subchannels,
};
use crate::error::{Error, Result};
use crate::feasibility::{lp_feasible_transport, thermo_majorizes};
use crate::math::fmt_f64;
use crate::spectra::{gibbs_state, DiagonalState, EnergySpectrum};

const LN2: f64 = std::f64::consts::LN_2;

/// Rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub experiment: String,
    pub anchor: String,
    pub table: Table,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig2a,
    Fig2b,
    Fig4,
    CertifyThm1,
    CertifyThm2,
    CertifyThm4,
    OracleFeasibility,
    Example1,
    Example2,
    Example3,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Fig2a,
        Experiment::Fig2b,
        Experiment::Fig4,
        Experiment::CertifyThm1,
        Experiment::CertifyThm2,
        Experiment::CertifyThm4,
        Experiment::OracleFeasibility,
        Experiment::Example1,
        Experiment::Example2,
        Experiment::Example3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2a => "fig2a",
            Experiment::Fig2b => "fig2b",
            Experiment::Fig4 => "fig4",
            Experiment::CertifyThm1 => "certify-thm1",
            Experiment::CertifyThm2 => "certify-thm2",
            Experiment::CertifyThm4 => "certify-thm4",
            Experiment::OracleFeasibility => "oracle-feasibility",
            Experiment::Example1 => "example1",
            Experiment::Example2 => "example2",
            Experiment::Example3 => "example3",
        }
    }

    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Fig2a => "Fig. 2(a)",
            Experiment::Fig2b => "Fig. 2(b)",
            Experiment::Fig4 => "Fig. 4",
            Experiment::CertifyThm1 => "Theorem 1",
            Experiment::CertifyThm2 => "Theorem 2",
            Experiment::CertifyThm4 => "Theorem 4",
            Experiment::OracleFeasibility => "Definition 1",
            Experiment::Example1 => "Example 1",
            Experiment::Example2 => "Example 2",
            Experiment::Example3 => "Example 3",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment '{s}'")))
    }
}

/// Knobs common to all experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunParams {
    pub beta: f64,
    pub seed: u64,
    pub trials: usize,
    /// Battery top level; each experiment has its own default.
    pub n: Option<usize>,
    pub k_min: usize,
    pub band_buffer: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        Self { beta: 1.0, seed: 0, trials: 200, n: None, k_min: 1, band_buffer: 5 }
    }
}

pub fn run(exp: Experiment, p: &RunParams) -> Result<Outcome> {
    if !(p.beta > 0.0 && p.beta.is_finite()) {
        return Err(Error::Domain(format!("beta = {} must be positive", p.beta)));
    }
    let (table, checks) = match exp {
        Experiment::Fig2a => run_fig2a(p)?,
        Experiment::Fig2b => run_fig2b(p)?,
        Experiment::Fig4 => run_fig4(p)?,
        Experiment::CertifyThm1 => run_thm1(p)?,
        Experiment::CertifyThm2 => run_thm2(p)?,
        Experiment::CertifyThm4 => run_thm4(p)?,
        Experiment::OracleFeasibility => run_oracle(p)?,
        Experiment::Example1 => run_example1(p)?,
        Experiment::Example2 => run_example2(p)?,
        Experiment::Example3 => run_example3(p)?,
    };
    Ok(Outcome { experiment: exp.name().into(), anchor: exp.anchor().into(), table, checks })
}

/// Wit subchannels and a full-support system state drawn from one seed.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub sub: WitSubchannels,
    pub sys: DiagonalState,
}

/// `d_S` in {2, 3}, levels in `[0, 2]`, gap in `[0.3, 2]`, 40 partial swaps.
pub fn random_instance(seed: u64, beta: f64) -> Result<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=3usize);
    let spec = EnergySpectrum::new((0..d).map(|_| rng.random_range(0.0..2.0)).collect())?;
    let delta = rng.random_range(0.3..2.0);
    let sub = WitSubchannels::random(&spec, delta, beta, rng.random(), 40)?;
    let sys = random_state(&mut rng, spec, 0.05)?;
    Ok(RandomInstance { sub, sys })
}

fn random_state(rng: &mut ChaCha8Rng, spec: EnergySpectrum, floor: f64) -> Result<DiagonalState> {
    let w: Vec<f64> = (0..spec.len()).map(|_| rng.random_range(floor..1.0)).collect();
    DiagonalState::normalized(w, spec)
}

/// Battery state on `0..=min(25, N)` with occupied vacuum; some levels left empty.
pub fn random_battery_state(seed: u64, battery: &EnergySpectrum) -> Result<DiagonalState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let top = 25.min(battery.len() - 1);
    let mut w = vec![0.0; battery.len()];
    w[0] = rng.random_range(0.05..1.0);
    for wk in w.iter_mut().take(top + 1).skip(1) {
        if rng.random_bool(0.6) {
            *wk = rng.random::<f64>();
        }
    }
    DiagonalState::normalized(w, battery.clone())
}

/// Seed of trial `t` in a sweep started from `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(t as u64)
}

fn run_fig2a(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let params = Fig2Params { beta: p.beta, ..Default::default() };
    let grid: Vec<f64> = (11..=120).map(|i| i as f64 * 0.5).collect();
    let rows = fig2a(&params, &grid)?;
    let mut t = Table::new(&["x", "C"]);
    for &(x, c) in &rows {
        t.push(vec![f(x), f(c)]);
    }
    let (x_min, c_min) = rows.iter().copied().fold((f64::NAN, f64::INFINITY), |a, r| if r.1 < a.1 { r } else { a });
    let c_end = rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    Ok((
        t,
        vec![
            Check::new("finite", rows.iter().all(|r| r.1.is_finite() && r.1 > 0.0), "C finite and positive on the grid"),
            Check::new("blow-up", (35.0..=48.0).contains(&x_min) && c_end > 1e10 * c_min, format!(
                "minimum C = {} at eps* = {x_min}, C = {} at eps* = 60",
                f(c_min),
                f(c_end)
            )),
        ],
    ))
}

/// Least-squares line through `(x, y)`: slope, intercept and `R^2`, with
/// `R^2 = 1` for an exact fit of constant data.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    // shifting by the first value keeps constant data exactly constant
    let y0 = y.first().copied().unwrap_or(0.0);
    let y: Vec<f64> = y.iter().map(|v| v - y0).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, icpt + y0, r2)
}

fn run_fig2b(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let params = Fig2Params { beta: p.beta, ..Default::default() };
    let grid: Vec<f64> = (20..=200).map(|i| i as f64 * 0.5).collect();
    let rows = fig2b(&params, &grid)?;
    let mut t = Table::new(&["x", "C"]);
    for &(x, c) in &rows {
        t.push(vec![f(x), f(c)]);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.0 <= 35.0).map(|r| (params.beta * r.0, r.1.ln())).unzip();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let floor = 2f64.ln() + params.beta * params.sys.e_max_out - params.beta * (params.eps_star - params.eps_min);
    let plateau_dev = rows
        .iter()
        .filter(|r| r.0 >= 80.0)
        .map(|r| (r.1.ln() - floor).abs())
        .fold(0.0, f64::max);
    Ok((
        t,
        vec![
            Check::new("affine", r2 > 0.999, format!("ln C on [10, 35]: slope {}, R^2 {}", f(slope), f(r2))),
            Check::new("plateau", plateau_dev < 1e-9, format!("max |ln C - ln(c_S e^(-beta (eps* - eps_min)))| = {}", f(plateau_dev))),
        ],
    ))
}

fn run_fig4(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let mut grid = vec![0.0, 1e-6];
    grid.extend((1..100).map(|i| i as f64 * 0.005));
    let rows = fig4_rows(&grid, p.beta)?;
    let mut t = Table::new(&["eps_tot", "avg_w_weight", "var_weight", "avg_w_osc", "var_osc"]);
    for r in &rows {
        t.push(vec![f(r.eps_tot), f(r.avg_w_weight), f(r.var_weight), f(r.avg_w_osc), f(r.var_osc)]);
    }
    let l2 = LN2 / p.beta;
    let r0 = rows[0];
    let r1 = rows[1];
    let ordered = rows.iter().filter(|r| r.eps_tot > 0.0).all(|r| r.avg_w_osc <= r.avg_w_weight);
    Ok((
        t,
        vec![
            Check::new(
                "endpoint",
                (r0.avg_w_weight + l2).abs() < 1e-15 && (r0.avg_w_osc + l2).abs() < 1e-15,
                format!("eps_tot = 0: {} and {}", f(r0.avg_w_weight), f(r0.avg_w_osc)),
            ),
            Check::new(
                "small-error means",
                (r1.avg_w_weight + l2).abs() < 1e-5 && (r1.avg_w_osc + l2).abs() < 1e-5,
                format!("eps_tot = 1e-6: |<w> + ln 2| = {} (weight), {} (oscillator)", f((r1.avg_w_weight + l2).abs()), f((r1.avg_w_osc + l2).abs())),
            ),
            Check::new(
                "small-error variances",
                r1.var_weight < 1e-4 && r1.var_osc < 1e-4,
                format!("eps_tot = 1e-6: Var = {} (weight), {} (oscillator)", f(r1.var_weight), f(r1.var_osc)),
            ),
            Check::new("ordering", ordered, "oscillator mean at or below weight mean on (0, 1/2)"),
        ],
    ))
}

fn instance_n(p: &RunParams) -> usize {
    p.n.unwrap_or(40)
}

fn run_thm1(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let n = instance_n(p);
    let mut t = Table::new(&["trial", "d", "delta", "worst_slack"]);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for trial in 0..p.trials {
        let inst = random_instance(trial_seed(p.seed, trial), p.beta)?;
        let ch = extend_to_oscillator(&inst.sub, n)?;
        let rep = theorem1_certify(&ch, &inst.sys, p.k_min, p.band_buffer)?;
        violations += rep.rows.iter().filter(|r| r.slack < -BOUND_TOL).count();
        worst = worst.min(rep.worst_slack);
        t.push(vec![trial.to_string(), inst.sub.dim().to_string(), f(inst.sub.delta), f(rep.worst_slack)]);
    }
    Ok((t, vec![Check::new("bound", violations == 0, format!("{violations} violations, worst slack {}", f(worst)))]))
}

fn run_thm2(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let n = instance_n(p);
    let mut t = Table::new(&["trial", "avg_work", "delta_f", "a_term", "b_main", "b_appendix", "bound", "slack"]);
    let mut worst = f64::INFINITY;
    for trial in 0..p.trials {
        let seed = trial_seed(p.seed, trial);
        let inst = random_instance(seed, p.beta)?;
        let ch = extend_to_oscillator(&inst.sub, n)?;
        let bat = random_battery_state(seed, ch.battery())?;
        let r = theorem2_bound(&ch, &inst.sys, &bat, p.k_min)?;
        worst = worst.min(r.slack);
        t.push(vec![
            trial.to_string(),
            f(r.avg_work),
            f(r.delta_f),
            f(r.a_term),
            f(r.b_term_main),
            f(r.b_term_appendix),
            f(r.bound),
            f(r.slack),
        ]);
    }
    Ok((t, vec![Check::new("slack", worst >= -BOUND_TOL, format!("worst slack {}", f(worst)))]))
}

pub const ERASURE_EPS_GRID: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.3];
pub const ERASURE_GAMMA_GRID: [f64; 5] = [0.0, 0.05, 0.1, 0.25, 0.5];

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale)
}

fn run_thm4(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let mut t = Table::new(&["eps", "gamma", "avg_closed", "avg_sim", "var_closed", "var_sim", "floor", "tail"]);
    let mut worst_rel = 0.0f64;
    let mut worst_floor = f64::INFINITY;
    let mut worst_tail = 0.0f64;
    for &eps in &ERASURE_EPS_GRID {
        for &gamma in &ERASURE_GAMMA_GRID {
            let r = oscillator_erasure_stats(eps, gamma, p.n, p.beta)?;
            worst_rel = worst_rel
                .max(rel_err(r.avg_sim, r.avg_closed, r.delta))
                .max(rel_err(r.var_sim, r.var_closed, r.delta * r.delta));
            let floor = gamma * r.avg_sim * r.avg_sim;
            worst_floor = worst_floor.min(r.var_sim - floor);
            worst_tail = worst_tail.max(r.tail.abs());
            t.push(vec![f(eps), f(gamma), f(r.avg_closed), f(r.avg_sim), f(r.var_closed), f(r.var_sim), f(floor), f(r.tail)]);
        }
    }
    // random protocols with an occupied vacuum
    let mut checked = 0;
    let mut failed = 0;
    for trial in 0..p.trials {
        let seed = trial_seed(p.seed, trial);
        let inst = random_instance(seed, p.beta)?;
        let ch = extend_to_oscillator(&inst.sub, instance_n(p))?;
        let bat = random_battery_state(seed, ch.battery())?;
        let wd = work_distribution(&ch, &inst.sys, &bat)?;
        match theorem4_check(&wd, bat.probs()[0]) {
            Ok(rep) => {
                checked += 1;
                if !rep.passed {
                    failed += 1;
                }
            }
            Err(Error::PreconditionViolated(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((
        t,
        vec![
            Check::new("closed forms", worst_rel < 1e-8, format!("worst relative error {} with tail up to {}", f(worst_rel), f(worst_tail))),
            Check::new("erasure floor", worst_floor >= -1e-12, format!("min Var - gamma <w>^2 = {}", f(worst_floor))),
            Check::new("random floor", failed == 0, format!("{failed} failures among {checked} protocols with <w> <= 0")),
        ],
    ))
}

fn run_oracle(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let trials = if p.trials == RunParams::default().trials { 500 } else { p.trials };
    let mut t = Table::new(&["trial", "d", "curve", "lp"]);
    let mut disagreements = 0;
    let mut yes = 0;
    for trial in 0..trials {
        let (pp, qq) = oracle_instance(trial_seed(p.seed, trial), p.beta)?;
        let a = thermo_majorizes(&pp, &qq, p.beta)?;
        let b = lp_feasible_transport(&pp, &qq, p.beta)?;
        disagreements += usize::from(a != b);
        yes += usize::from(a);
        t.push(vec![trial.to_string(), pp.len().to_string(), a.to_string(), b.to_string()]);
    }
    Ok((
        t,
        vec![Check::new("agreement", disagreements == 0, format!("{disagreements} disagreements over {trials} pairs, {yes} convertible"))],
    ))
}

/// A pair of states on a random spectrum with `d <= 5`. Half the targets are
/// images of the source under a random thermal channel.
pub fn oracle_instance(seed: u64, beta: f64) -> Result<(DiagonalState, DiagonalState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=5usize);
    let spec = EnergySpectrum::new((0..d).map(|_| rng.random_range(0.0..2.0)).collect())?;
    let p = random_state(&mut rng, spec.clone(), 0.0)?;
    let q = if rng.random_bool(0.5) {
        let ch = random_gibbs_stochastic(&spec, &EnergySpectrum::degenerate(1)?, beta, rng.random(), 3 * d)?;
        let out = ch.apply_joint(p.probs())?;
        DiagonalState::normalized(out.probs().to_vec(), spec)?
    } else {
        random_state(&mut rng, spec, 0.0)?
    };
    Ok((p, q))
}

fn run_example1(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let b = p.beta;
    let delta = LN2 / b;
    let sys = EnergySpectrum::degenerate(2)?;
    let wit = EnergySpectrum::new(vec![0.0, delta])?;
    let g = gibbs_state(&EnergySpectrum::joint(&sys, &wit), b)?;
    let r = DMatrix::from_fn(4, 4, |i, _| g.probs()[i]);
    let ch = ThermalChannel::new(r, sys.clone(), sys.clone(), wit.clone(), b)?;
    let tau = gibbs_state(&sys, b)?;
    let wd = work_distribution(&ch, &tau, &DiagonalState::pure(0, wit)?)?;
    let wit_avg = average_work(&wd);
    let expected = delta / (1.0 + (b * delta).exp());

    let n = p.n.unwrap_or(40);
    let osc = extend_to_oscillator(&WitSubchannels::from_wit_channel(&ch)?, n)?;
    let mut t = Table::new(&["battery", "level", "avg_work", "bound", "slack"]);
    t.push(vec!["wit".into(), "0".into(), f(wit_avg), f(0.0), f(-wit_avg)]);
    let mut worst = f64::INFINITY;
    for k in 1..=n.min(10) {
        let bat = DiagonalState::pure(k, osc.battery().clone())?;
        let r = theorem2_bound(&osc, &tau, &bat, 1)?;
        worst = worst.min(r.slack);
        t.push(vec!["oscillator".into(), k.to_string(), f(r.avg_work), f(r.bound), f(r.slack)]);
    }
    Ok((
        t,
        vec![
            Check::new("wit work", (wit_avg - expected).abs() < 1e-12, format!("<w> = {} vs delta/(1 + e^(beta delta)) = {}", f(wit_avg), f(expected))),
            Check::new("wit violates second law", wit_avg > 0.0, "positive mean work from thermalization"),
            Check::new("extension obeys bound", worst >= -BOUND_TOL, format!("worst slack above the vacuum {}", f(worst))),
        ],
    ))
}

pub const EXAMPLE2_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn run_example2(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let q = EnergySpectrum::degenerate(2)?;
    let mut t = Table::new(&["a", "w_star_0", "w_star_1", "spread", "consistent"]);
    let mut consistent_at = Vec::new();
    for &a in &EXAMPLE2_GRID {
        let m = DMatrix::from_row_slice(2, 2, &[a, a, 1.0 - a, 1.0 - a]);
        let rep = deterministic_work_consistency(&m, &q, &q, p.beta)?;
        let w = |i: usize| rep.implied_work[i].map(f).unwrap_or_else(|| "nan".into());
        t.push(vec![f(a), w(0), w(1), f(rep.spread), rep.consistent.to_string()]);
        if rep.consistent {
            consistent_at.push(a);
        }
    }
    Ok((
        t,
        vec![Check::new(
            "obstruction",
            consistent_at == [0.5],
            format!("point-mass work consistent at a in {consistent_at:?}"),
        )],
    ))
}

/// The vacuum-kicking map on a qubit with trivial Hamiltonian and `delta =
/// ln 2 / beta`, built entry by entry.
pub fn example3_channel(n: usize, beta: f64) -> Result<ThermalChannel> {
    let d = 2;
    let mut r = DMatrix::zeros(d * (n + 1), d * (n + 1));
    for s in 0..d {
        for kp in 0..n {
            r[(kp * d + 1, s)] = 0.5f64.powi(kp as i32 + 1);
        }
        r[(n * d + s, s)] = 0.5f64.powi(n as i32);
        for k in 1..=n {
            r[((k - 1) * d, k * d + s)] = 1.0;
        }
    }
    let sys = EnergySpectrum::degenerate(2)?;
    ThermalChannel::new(r, sys.clone(), sys, EnergySpectrum::uniform(LN2 / beta, n)?, beta)
}

/// Term-by-term `sum p(s) r exp(beta (w - f_s))` with no log-space tricks.
pub fn example3_oracle(n: usize, beta: f64, probs: &[f64], k: usize) -> Result<f64> {
    let ch = example3_channel(n, beta)?;
    let delta = LN2 / beta;
    let mut total = 0.0;
    for (s, &ps) in probs.iter().enumerate() {
        let fs = ps.ln() / beta;
        for kp in 0..=n {
            for sp in 0..2 {
                let w = (kp as f64 - k as f64) * delta;
                total += ps * ch.entry(sp, kp, s, k) * (beta * (w - fs)).exp();
            }
        }
    }
    Ok(total)
}

fn run_example3(p: &RunParams) -> Result<(Table, Vec<Check>)> {
    let mut sizes = vec![8, 16, 32];
    let top = p.n.unwrap_or(64);
    if !sizes.contains(&top) {
        sizes.push(top);
    }
    let sys = DiagonalState::new(vec![0.3, 0.7], EnergySpectrum::degenerate(2)?)?;
    let sub = oscillator_erasure_subchannels(0.0, p.beta)?;
    let mut t = Table::new(&["N", "k", "value", "oracle"]);
    let mut map_dev = 0.0f64;
    let mut oracle_dev = 0.0f64;
    let mut upper_dev = 0.0f64;
    let mut vacuum = Vec::new();
    for &n in &sizes {
        let ch = extend_to_oscillator(&sub, n)?;
        map_dev = map_dev.max((ch.matrix() - example3_channel(n, p.beta)?.matrix()).abs().max());
        for k in 0..=n {
            let v = conditional_jarzynski(&ch, &sys, k)?;
            let o = example3_oracle(n, p.beta, sys.probs(), k)?;
            oracle_dev = oracle_dev.max((v - o).abs() / o);
            if k == 0 {
                vacuum.push((n as f64, v));
            } else {
                upper_dev = upper_dev.max((v - 1.0).abs());
            }
            t.push(vec![n.to_string(), k.to_string(), f(v), f(o)]);
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = vacuum.iter().copied().unzip();
    let (slope, icpt, r2) = linear_fit(&xs, &ys);
    Ok((
        t,
        vec![
            Check::new("map", map_dev == 0.0, format!("extension differs from the entrywise map by {}", f(map_dev))),
            Check::new("oracle", oracle_dev < 1e-12, format!("max relative deviation from the direct sum {}", f(oracle_dev))),
            Check::new("k >= 1 constant", upper_dev < 1e-12, format!("max |value - 1| above the vacuum {}", f(upper_dev))),
            Check::new(
                "vacuum affine",
                (slope - 1.0).abs() < 1e-12 && (icpt - 2.0).abs() < 1e-10 && r2 > 1.0 - 1e-12,
                format!("k = 0: value = {} N + {}", f(slope), f(icpt)),
            ),
        ],
    ))
}
