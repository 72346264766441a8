//! Energy spectra, diagonal states and the thermodynamic potentials built on them.
//!
//! Energies are stored as dimensionless numbers (multiples of `k_B T` at the
//! reference temperature) and `beta` is passed explicitly everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, xlnx};

/// Largest allowed `beta * |E|` before an exponential is considered unsafe.
pub const EXP_GUARD: f64 = 700.0;
/// Normalization tolerance for probability vectors.
pub const NORM_TOL: f64 = 1e-12;

/// Ordered energy levels of a system or battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    levels: Vec<f64>,
    label: String,
}

impl EnergySpectrum {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSpectrum("no levels".into()));
        }
        if let Some(i) = levels.iter().position(|e| !e.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("level {i} is not finite")));
        }
        Ok(Self { levels, label: String::new() })
    }

    /// Oscillator ladder `0, delta, ..., n*delta` (n + 1 levels).
    pub fn uniform(delta: f64, n: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidSpectrum(format!("spacing {delta} must be positive")));
        }
        Ok(Self {
            levels: (0..=n).map(|k| k as f64 * delta).collect(),
            label: "oscillator".into(),
        })
    }

    /// `d` levels all at zero energy.
    pub fn degenerate(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    /// Spectrum of the composite system, indexed `k * a.len() + s`.
    pub fn joint(sys: &EnergySpectrum, battery: &EnergySpectrum) -> Self {
        let mut levels = Vec::with_capacity(sys.len() * battery.len());
        for &eb in &battery.levels {
            for &es in &sys.levels {
                levels.push(es + eb);
            }
        }
        Self { levels, label: format!("{}x{}", sys.label, battery.label) }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.levels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.levels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Spacing `delta` if the levels are exactly `k * delta` up to rounding.
    pub fn uniform_spacing(&self) -> Option<f64> {
        if self.levels.len() < 2 {
            return None;
        }
        let delta = self.levels[1] - self.levels[0];
        if !(delta > 0.0) || self.levels[0].abs() > 1e-12 * delta {
            return None;
        }
        let ok = self
            .levels
            .iter()
            .enumerate()
            .all(|(k, &e)| (e - k as f64 * delta).abs() <= 1e-12 * delta.max(1.0) * (k as f64).max(1.0));
        ok.then_some(delta)
    }

    pub fn check_guard(&self, beta: f64) -> Result<()> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        let worst = self.levels.iter().fold(0.0f64, |m, e| m.max((beta * e).abs()));
        if worst > EXP_GUARD {
            return Err(Error::OverflowRisk(worst));
        }
        Ok(())
    }

    /// Unnormalized Gibbs weights `exp(-beta E_i)`.
    pub fn gibbs_weights(&self, beta: f64) -> Result<Vec<f64>> {
        self.check_guard(beta)?;
        Ok(self.levels.iter().map(|e| (-beta * e).exp()).collect())
    }
}

/// Probability vector over the levels of a spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalState {
    probs: Vec<f64>,
    spectrum: EnergySpectrum,
}

impl DiagonalState {
    pub fn new(probs: Vec<f64>, spectrum: EnergySpectrum) -> Result<Self> {
        if probs.len() != spectrum.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {} levels",
                probs.len(),
                spectrum.len()
            )));
        }
        if let Some(i) = probs.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidState(format!("probability {i} is {}", probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs, spectrum })
    }

    /// Rescales a nonnegative vector to unit sum.
    pub fn normalized(weights: Vec<f64>, spectrum: EnergySpectrum) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidState(format!("weights sum to {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect(), spectrum)
    }

    /// Point mass on one level.
    pub fn pure(index: usize, spectrum: EnergySpectrum) -> Result<Self> {
        if index >= spectrum.len() {
            return Err(Error::IndexOutOfRange { index, len: spectrum.len() });
        }
        let mut probs = vec![0.0; spectrum.len()];
        probs[index] = 1.0;
        Self::new(probs, spectrum)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn spectrum(&self) -> &EnergySpectrum {
        &self.spectrum
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.probs.iter().zip(self.spectrum.levels()).map(|(p, e)| p * e).sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| xlnx(p)).sum::<f64>()
    }

    /// Product state, indexed like [`EnergySpectrum::joint`].
    pub fn tensor(&self, battery: &DiagonalState) -> DiagonalState {
        let mut probs = Vec::with_capacity(self.len() * battery.len());
        for &pb in &battery.probs {
            for &ps in &self.probs {
                probs.push(ps * pb);
            }
        }
        DiagonalState {
            probs,
            spectrum: EnergySpectrum::joint(&self.spectrum, &battery.spectrum),
        }
    }
}

/// `ln Z` via log-sum-exp.
pub fn log_partition_function(spectrum: &EnergySpectrum, beta: f64) -> Result<f64> {
    spectrum.check_guard(beta)?;
    let xs: Vec<f64> = spectrum.levels().iter().map(|e| -beta * e).collect();
    Ok(log_sum_exp(&xs))
}

pub fn partition_function(spectrum: &EnergySpectrum, beta: f64) -> Result<f64> {
    Ok(log_partition_function(spectrum, beta)?.exp())
}

pub fn gibbs_state(spectrum: &EnergySpectrum, beta: f64) -> Result<DiagonalState> {
    let ln_z = log_partition_function(spectrum, beta)?;
    let mut probs: Vec<f64> = spectrum.levels().iter().map(|e| (-beta * e - ln_z).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    DiagonalState::new(probs, spectrum.clone())
}

/// `F = <E> - S / beta`.
pub fn free_energy(state: &DiagonalState, beta: f64) -> f64 {
    state.mean_energy() - state.entropy() / beta
}

/// `f_s = E_s + ln p(s) / beta`.
pub fn fine_grained_free_energy(state: &DiagonalState, beta: f64, index: usize) -> Result<f64> {
    let p = *state
        .probs
        .get(index)
        .ok_or(Error::IndexOutOfRange { index, len: state.len() })?;
    if p == 0.0 {
        return Err(Error::ZeroProbability(index));
    }
    Ok(state.spectrum.levels()[index] + p.ln() / beta)
}

/// `ln max_i p_i / q_i` over the support of `state`.
pub fn d_max(state: &DiagonalState, reference: &DiagonalState) -> Result<f64> {
    if state.spectrum.levels() != reference.spectrum.levels() {
        return Err(Error::SpectrumMismatch);
    }
    let mut best = f64::NEG_INFINITY;
    for (i, (&p, &q)) in state.probs.iter().zip(&reference.probs).enumerate() {
        if p > 0.0 {
            if q == 0.0 {
                return Err(Error::SupportMismatch(i));
            }
            best = best.max(p.ln() - q.ln());
        }
    }
    Ok(best)
}

/// Flat config describing a spectrum and optionally a state on it.
///
/// Either `levels` or (`delta`, `num_levels`) gives the spectrum. Without
/// `probs` the state is the Gibbs state at `beta`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub levels: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub num_levels: Option<usize>,
    pub beta: Option<f64>,
}

impl StateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0)
    }

    pub fn spectrum(&self) -> Result<EnergySpectrum> {
        match (&self.levels, self.delta, self.num_levels) {
            (Some(levels), None, None) => EnergySpectrum::new(levels.clone()),
            (None, Some(delta), Some(n)) if n >= 1 => EnergySpectrum::uniform(delta, n - 1),
            _ => Err(Error::Parse(
                "give either `levels` or both `delta` and `num_levels`".into(),
            )),
        }
    }

    pub fn state(&self) -> Result<DiagonalState> {
        let spectrum = self.spectrum()?;
        match &self.probs {
            Some(p) => DiagonalState::new(p.clone(), spectrum),
            None => gibbs_state(&spectrum, self.beta()),
        }
    }
}
