//! Battery models, work distributions and fluctuation measures.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::channels::ThermalChannel;
use crate::error::{Error, Result};
use crate::math::fmt_f64;
use crate::spectra::{DiagonalState, EnergySpectrum};

/// Work values closer than this are the same value.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BatteryKind {
    Wit { delta: f64 },
    Oscillator { n: usize, delta: f64 },
    WeightPointMasses { shifts: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryModel {
    kind: BatteryKind,
    spectrum: EnergySpectrum,
}

impl BatteryModel {
    pub fn wit(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidSpectrum(format!("wit gap {delta} must be positive")));
        }
        Ok(Self {
            kind: BatteryKind::Wit { delta },
            spectrum: EnergySpectrum::new(vec![0.0, delta])?.with_label("wit"),
        })
    }

    /// Levels `0, delta, ..., n * delta`.
    pub fn oscillator(n: usize, delta: f64) -> Result<Self> {
        Ok(Self {
            kind: BatteryKind::Oscillator { n, delta },
            spectrum: EnergySpectrum::uniform(delta, n)?,
        })
    }

    /// Ideal weight restricted to finitely many positions.
    pub fn weight(shifts: &[f64]) -> Result<Self> {
        let mut s: Vec<f64> = shifts.to_vec();
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpectrum("weight shifts must be finite".into()));
        }
        s.sort_by(f64::total_cmp);
        s.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
        Ok(Self {
            spectrum: EnergySpectrum::new(s.clone())?.with_label("weight"),
            kind: BatteryKind::WeightPointMasses { shifts: s },
        })
    }

    pub fn kind(&self) -> &BatteryKind {
        &self.kind
    }

    pub fn spectrum(&self) -> &EnergySpectrum {
        &self.spectrum
    }
}

/// Finite distribution of work values, sorted and merged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl WorkDistribution {
    /// Zero-probability entries are dropped; close work values are merged.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = Vec::new();
        for (w, p) in pairs {
            if !w.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidState(format!("bad work entry ({w}, {p})")));
            }
            if p > 0.0 {
                v.push((w, p));
            }
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (w, p) in v {
            match support.last() {
                Some(&last) if (w - last).abs() <= MERGE_TOL * last.abs().max(1.0) => {
                    *probs.last_mut().unwrap() += p;
                }
                _ => {
                    support.push(w);
                    probs.push(p);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("work probabilities sum to {total}")));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(w: f64) -> Self {
        Self { support: vec![w], probs: vec![1.0] }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of the work value within the merge tolerance of `w`.
    pub fn prob_of(&self, w: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(x, _)| (*x - w).abs() <= MERGE_TOL * w.abs().max(1.0))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,p\n");
        for (w, p) in self.support.iter().zip(&self.probs) {
            s.push_str(&format!("{},{}\n", fmt_f64(*w), fmt_f64(*p)));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("w,p") {
            return Err(Error::Parse("expected header `w,p`".into()));
        }
        let mut pairs = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (w, p) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
            let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{x}: {e}")));
            pairs.push((parse(w)?, parse(p)?));
        }
        Self::from_pairs(pairs)
    }
}

/// Work distribution of a channel run on a product input.
pub fn work_distribution(ch: &ThermalChannel, sys: &DiagonalState, bat: &DiagonalState) -> Result<WorkDistribution> {
    if sys.spectrum().levels() != ch.sys_in().levels() {
        return Err(Error::DimensionMismatch("system state is not on the input spectrum".into()));
    }
    if bat.spectrum().levels() != ch.battery().levels() {
        return Err(Error::DimensionMismatch("battery state does not match the channel battery".into()));
    }
    work_distribution_joint(ch, sys.tensor(bat).probs())
}

/// Work distribution for an arbitrary joint input distribution.
pub fn work_distribution_joint(ch: &ThermalChannel, joint: &[f64]) -> Result<WorkDistribution> {
    let (di, dout, n) = (ch.d_in(), ch.d_out(), ch.n_battery());
    if joint.len() != di * n {
        return Err(Error::DimensionMismatch(format!("joint input has {} entries", joint.len())));
    }
    let r = ch.matrix();
    let eps = ch.battery().levels();
    let mut pairs = Vec::new();
    for k in 0..n {
        let mut to = vec![0.0; n];
        let mut any = false;
        for s in 0..di {
            let x = joint[k * di + s];
            if x == 0.0 {
                continue;
            }
            any = true;
            let col = r.column(k * di + s);
            for (kp, acc) in to.iter_mut().enumerate() {
                let block: f64 = col.rows(kp * dout, dout).sum();
                *acc += x * block;
            }
        }
        if any {
            pairs.extend(to.into_iter().enumerate().map(|(kp, p)| (eps[kp] - eps[k], p)));
        }
    }
    WorkDistribution::from_pairs(pairs)
}

pub fn average_work(wd: &WorkDistribution) -> f64 {
    wd.support.iter().zip(&wd.probs).map(|(w, p)| w * p).sum()
}

pub fn variance(wd: &WorkDistribution) -> f64 {
    let m = average_work(wd);
    wd.support.iter().zip(&wd.probs).map(|(w, p)| p * (w - m) * (w - m)).sum()
}

/// Largest distance of a possible work value from the mean.
pub fn f1_measure(wd: &WorkDistribution) -> f64 {
    let m = average_work(wd);
    wd.support.iter().map(|w| (w - m).abs()).fold(0.0, f64::max)
}

/// `sum_w p(w) f(w - <w>)`.
pub fn general_cost(wd: &WorkDistribution, cost: &CostFunction) -> f64 {
    let m = average_work(wd);
    wd.support.iter().zip(&wd.probs).map(|(w, p)| p * cost.eval(w - m)).sum()
}

/// Fluctuation penalty with `f(0) = 0`.
#[derive(Clone)]
pub struct CostFunction {
    evaluator: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tag: String,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction").field("tag", &self.tag).finish()
    }
}

impl CostFunction {
    pub fn new(tag: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let v = f(0.0);
        if v != 0.0 {
            return Err(Error::Domain(format!("cost function has f(0) = {v}")));
        }
        Ok(Self { evaluator: Arc::new(f), tag: tag.into() })
    }

    pub fn square() -> Self {
        Self { evaluator: Arc::new(|x| x * x), tag: "square".into() }
    }

    /// `exp(beta |x|) - 1`.
    pub fn exp_abs(beta: f64) -> Self {
        Self { evaluator: Arc::new(move |x: f64| (beta * x.abs()).exp_m1()), tag: "exp".into() }
    }

    /// Zero inside `|x| <= c`, `sentinel` outside.
    pub fn window(c: f64, sentinel: f64) -> Self {
        Self {
            evaluator: Arc::new(move |x: f64| if x.abs() <= c { 0.0 } else { sentinel }),
            tag: "absolute-window".into(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.evaluator)(x)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem4Report {
    pub avg_work: f64,
    pub variance: f64,
    pub gamma: f64,
    /// `gamma <w>^2`.
    pub floor: f64,
    /// `Var - gamma <w>^2`.
    pub margin: f64,
    pub passed: bool,
}

/// Variance floor for protocols that extract work on average.
pub fn theorem4_check(wd: &WorkDistribution, gamma: f64) -> Result<Theorem4Report> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("vacuum occupation {gamma} outside [0, 1]")));
    }
    let avg = average_work(wd);
    if avg > 1e-12 {
        return Err(Error::PreconditionViolated(format!("<w> = {avg} > 0")));
    }
    let var = variance(wd);
    let floor = gamma * avg * avg;
    let margin = var - floor;
    Ok(Theorem4Report { avg_work: avg, variance: var, gamma, floor, margin, passed: margin >= -1e-12 })
}
