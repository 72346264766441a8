//! Thermal channels on the joint (system, battery) index space.
//!
//! Joint index of system level `s` and battery level `k` is `k * d + s`, where
//! `d` is the system dimension on that side of the channel. Rows of the
//! transition matrix are outputs, columns are inputs.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::fmt_f64;
use crate::spectra::{DiagonalState, EnergySpectrum};

/// Residual tolerances used when accepting a channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub stochastic: f64,
    pub gibbs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { stochastic: 1e-12, gibbs: 1e-10 }
    }
}

/// Exact equality threshold used by the ETI check.
pub const ETI_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `|sum_i r_ij - 1|` per input column.
    pub column_residuals: Vec<f64>,
    /// Gibbs condition residual per output row.
    pub gibbs_residuals: Vec<f64>,
    pub max_stochastic: f64,
    pub max_gibbs: f64,
    pub entries_in_range: bool,
    pub valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtiConvention {
    /// Inputs restricted to `[k_min, top]`, outputs to `[0, top]`.
    Main,
    /// Inputs in `[0, top]`, outputs restricted to `[k_min, top]`.
    Appendix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EtiViolation {
    pub s_out: usize,
    pub k_out: usize,
    pub s_in: usize,
    pub k_in: usize,
    /// Battery shift relative to the reference block of the same offset class.
    pub shift: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtiVerdict {
    pub holds: bool,
    pub max_violation: f64,
    pub worst: Option<EtiViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtiReport {
    pub k_min: usize,
    /// Highest battery level included on both sides.
    pub top: usize,
    pub convention: EtiConvention,
    pub main: EtiVerdict,
    pub appendix: EtiVerdict,
    /// Verdict under the selected convention.
    pub holds: bool,
}

/// Gibbs-stochastic transition matrix `r(s'k'|sk)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalChannel {
    r: DMatrix<f64>,
    sys_in: EnergySpectrum,
    sys_out: EnergySpectrum,
    battery: EnergySpectrum,
    beta: f64,
}

impl ThermalChannel {
    pub fn new(
        r: DMatrix<f64>,
        sys_in: EnergySpectrum,
        sys_out: EnergySpectrum,
        battery: EnergySpectrum,
        beta: f64,
    ) -> Result<Self> {
        let n = battery.len();
        if r.nrows() != sys_out.len() * n || r.ncols() != sys_in.len() * n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, spectra need {}x{}",
                r.nrows(),
                r.ncols(),
                sys_out.len() * n,
                sys_in.len() * n
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::DimensionMismatch("matrix has non-finite entries".into()));
        }
        Ok(Self { r, sys_in, sys_out, battery, beta })
    }

    pub fn identity(sys: EnergySpectrum, battery: EnergySpectrum, beta: f64) -> Result<Self> {
        let d = sys.len() * battery.len();
        Self::new(DMatrix::identity(d, d), sys.clone(), sys, battery, beta)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn sys_in(&self) -> &EnergySpectrum {
        &self.sys_in
    }

    pub fn sys_out(&self) -> &EnergySpectrum {
        &self.sys_out
    }

    pub fn battery(&self) -> &EnergySpectrum {
        &self.battery
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn d_in(&self) -> usize {
        self.sys_in.len()
    }

    pub fn d_out(&self) -> usize {
        self.sys_out.len()
    }

    pub fn n_battery(&self) -> usize {
        self.battery.len()
    }

    /// `r(s'k'|sk)`.
    pub fn entry(&self, s_out: usize, k_out: usize, s_in: usize, k_in: usize) -> f64 {
        self.r[(k_out * self.d_out() + s_out, k_in * self.d_in() + s_in)]
    }

    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let (rows, cols) = self.r.shape();
        let column_residuals: Vec<f64> =
            (0..cols).map(|j| (self.r.column(j).sum() - 1.0).abs()).collect();
        let e_in = EnergySpectrum::joint(&self.sys_in, &self.battery);
        let e_out = EnergySpectrum::joint(&self.sys_out, &self.battery);
        let b = self.beta;
        // Each term is r * exp(beta (E_out - E_in)); done in log space since the
        // energy gap can be large exactly where r is tiny.
        let gibbs_residuals: Vec<f64> = (0..rows)
            .map(|i| {
                let eo = e_out.levels()[i];
                let s: f64 = (0..cols)
                    .filter_map(|j| {
                        let x = self.r[(i, j)];
                        (x > 0.0).then(|| (x.ln() + b * (eo - e_in.levels()[j])).exp())
                    })
                    .sum();
                (s - 1.0).abs()
            })
            .collect();
        let max_stochastic = column_residuals.iter().copied().fold(0.0, f64::max);
        let max_gibbs = gibbs_residuals.iter().copied().fold(0.0, f64::max);
        let entries_in_range = self.r.iter().all(|&x| (0.0..=1.0 + tol.stochastic).contains(&x));
        let valid = entries_in_range && max_stochastic < tol.stochastic && max_gibbs < tol.gibbs;
        ValidationReport {
            column_residuals,
            gibbs_residuals,
            max_stochastic,
            max_gibbs,
            entries_in_range,
            valid,
        }
    }

    /// Errors unless [`validate`](Self::validate) accepts the channel.
    pub fn ensure_valid(&self, tol: &Tolerances) -> Result<ValidationReport> {
        let rep = self.validate(tol);
        if rep.valid {
            Ok(rep)
        } else {
            Err(Error::PreconditionViolated(format!(
                "channel invalid: stochastic residual {:e}, Gibbs residual {:e}",
                rep.max_stochastic, rep.max_gibbs
            )))
        }
    }

    /// Applies the channel to a product input.
    pub fn apply(&self, sys: &DiagonalState, bat: &DiagonalState) -> Result<DiagonalState> {
        if sys.spectrum().levels() != self.sys_in.levels() {
            return Err(Error::DimensionMismatch("system state is not on the input spectrum".into()));
        }
        if bat.spectrum().levels() != self.battery.levels() {
            return Err(Error::DimensionMismatch("battery state is not on the battery spectrum".into()));
        }
        self.apply_joint(sys.tensor(bat).probs())
    }

    /// Applies the channel to an arbitrary joint input distribution.
    pub fn apply_joint(&self, joint: &[f64]) -> Result<DiagonalState> {
        if joint.len() != self.r.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "joint input has {} entries, channel expects {}",
                joint.len(),
                self.r.ncols()
            )));
        }
        let x = nalgebra::DVector::from_column_slice(joint);
        let y = &self.r * x;
        DiagonalState::new(
            y.iter().copied().collect(),
            EnergySpectrum::joint(&self.sys_out, &self.battery),
        )
    }

    /// System and battery marginals of an output of [`apply`](Self::apply).
    pub fn marginals(&self, out: &DiagonalState) -> Result<(DiagonalState, DiagonalState)> {
        let (d, n) = (self.d_out(), self.n_battery());
        if out.len() != d * n {
            return Err(Error::DimensionMismatch("output length".into()));
        }
        let mut ps = vec![0.0; d];
        let mut pw = vec![0.0; n];
        for k in 0..n {
            for s in 0..d {
                let p = out.probs()[k * d + s];
                ps[s] += p;
                pw[k] += p;
            }
        }
        Ok((
            DiagonalState::new(ps, self.sys_out.clone())?,
            DiagonalState::new(pw, self.battery.clone())?,
        ))
    }

    /// `other` after `self`.
    pub fn then(&self, other: &ThermalChannel) -> Result<ThermalChannel> {
        if self.sys_out.levels() != other.sys_in.levels()
            || self.battery.levels() != other.battery.levels()
            || self.beta != other.beta
        {
            return Err(Error::SpectrumMismatch);
        }
        ThermalChannel::new(
            &other.r * &self.r,
            self.sys_in.clone(),
            other.sys_out.clone(),
            self.battery.clone(),
            self.beta,
        )
    }

    /// Block mapping battery level `k` to level `k_prime`, `d_out x d_in`.
    pub fn extract_subchannels(&self, k: usize, k_prime: usize) -> Result<DMatrix<f64>> {
        let n = self.n_battery();
        for idx in [k, k_prime] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        let (di, dout) = (self.d_in(), self.d_out());
        Ok(self.r.view((k_prime * dout, k * di), (dout, di)).into_owned())
    }

    pub fn check_eti(&self, k_min: usize) -> Result<EtiReport> {
        let top = self.n_battery().saturating_sub(1);
        self.check_eti_band(k_min, top, EtiConvention::Main)
    }

    /// ETI restricted to battery levels `0..=top` on both sides.
    pub fn check_eti_band(&self, k_min: usize, top: usize, convention: EtiConvention) -> Result<EtiReport> {
        self.battery.uniform_spacing().ok_or(Error::NonUniformBattery)?;
        let n = self.n_battery();
        if top >= n {
            return Err(Error::IndexOutOfRange { index: top, len: n });
        }
        let main = self.eti_verdict(k_min, 0, top);
        let appendix = self.eti_verdict(0, k_min, top);
        let holds = match convention {
            EtiConvention::Main => main.holds,
            EtiConvention::Appendix => appendix.holds,
        };
        Ok(EtiReport { k_min, top, convention, main, appendix, holds })
    }

    fn eti_verdict(&self, lo_in: usize, lo_out: usize, top: usize) -> EtiVerdict {
        let (di, dout) = (self.d_in(), self.d_out());
        let top = top as i64;
        let mut max_violation = 0.0f64;
        let mut worst = None;
        for offset in -top..=top {
            // inputs k with k in [lo_in, top] and k + offset in [lo_out, top]
            let k_lo = (lo_in as i64).max(lo_out as i64 - offset);
            let k_hi = top.min(top - offset);
            if k_lo >= k_hi {
                continue;
            }
            let rk = k_lo as usize;
            let rk_out = (k_lo + offset) as usize;
            for k in (k_lo + 1)..=k_hi {
                let (k, k_out) = (k as usize, (k + offset) as usize);
                for s_in in 0..di {
                    for s_out in 0..dout {
                        let a = self.r[(rk_out * dout + s_out, rk * di + s_in)];
                        let b = self.r[(k_out * dout + s_out, k * di + s_in)];
                        let v = (a - b).abs();
                        if v > max_violation {
                            max_violation = v;
                            worst = Some(EtiViolation {
                                s_out,
                                k_out,
                                s_in,
                                k_in: k,
                                shift: k as i64 - k_lo,
                            });
                        }
                    }
                }
            }
        }
        EtiVerdict { holds: max_violation <= ETI_TOL, max_violation, worst }
    }

    /// Text export: header `d_sys_in d_sys_out n_battery beta`, then matrix rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {} {}", self.d_in(), self.d_out(), self.n_battery(), fmt_f64(self.beta));
        for row in self.r.row_iter() {
            let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the text format; spectra are supplied by the caller.
    pub fn from_text(
        text: &str,
        sys_in: EnergySpectrum,
        sys_out: EnergySpectrum,
        battery: EnergySpectrum,
    ) -> Result<Self> {
        let (header, r) = read_matrix_text(text)?;
        if header.d_sys_in != sys_in.len() || header.d_sys_out != sys_out.len() || header.n_battery != battery.len() {
            return Err(Error::DimensionMismatch("header disagrees with supplied spectra".into()));
        }
        Self::new(r, sys_in, sys_out, battery, header.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixHeader {
    pub d_sys_in: usize,
    pub d_sys_out: usize,
    pub n_battery: usize,
    pub beta: f64,
}

/// Reads the header and dense matrix of the channel text format.
pub fn read_matrix_text(text: &str) -> Result<(MatrixHeader, DMatrix<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty channel file".into()))?
        .split_whitespace()
        .collect();
    if head.len() != 4 {
        return Err(Error::Parse("header must be `d_sys_in d_sys_out n_battery beta`".into()));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let header = MatrixHeader {
        d_sys_in: int(head[0])?,
        d_sys_out: int(head[1])?,
        n_battery: int(head[2])?,
        beta: head[3].parse().map_err(|e| Error::Parse(format!("{}: {e}", head[3])))?,
    };
    let (rows, cols) = (header.d_sys_out * header.n_battery, header.d_sys_in * header.n_battery);
    let mut data = Vec::with_capacity(rows * cols);
    let mut nrows = 0;
    for line in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|e| Error::Parse(format!("{tok}: {e}")))?);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!("row {nrows} has {} entries, expected {cols}", data.len() - before)));
        }
        nrows += 1;
    }
    if nrows != rows {
        return Err(Error::Parse(format!("{nrows} rows, expected {rows}")));
    }
    Ok((header, DMatrix::from_row_slice(rows, cols, &data)))
}

/// Random channel built from `num_mixes` partial swaps that each preserve the
/// joint Gibbs weights. Same seed, same channel.
pub fn random_gibbs_stochastic(
    sys: &EnergySpectrum,
    battery: &EnergySpectrum,
    beta: f64,
    seed: u64,
    num_mixes: usize,
) -> Result<ThermalChannel> {
    sys.check_guard(beta)?;
    battery.check_guard(beta)?;
    let joint = EnergySpectrum::joint(sys, battery);
    let e0 = joint.min();
    let g: Vec<f64> = joint.levels().iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let d = g.len();
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if d > 1 {
        for _ in 0..num_mixes {
            let mut a = rng.random_range(0..d);
            let mut b = rng.random_range(0..d - 1);
            if b >= a {
                b += 1;
            }
            if g[a] < g[b] {
                std::mem::swap(&mut a, &mut b);
            }
            let lam: f64 = rng.random();
            let ratio = g[b] / g[a];
            for j in 0..d {
                let (ma, mb) = (m[(a, j)], m[(b, j)]);
                m[(a, j)] = (1.0 - lam * ratio) * ma + lam * mb;
                m[(b, j)] = lam * ratio * ma + (1.0 - lam) * mb;
            }
        }
    }
    ThermalChannel::new(m, sys.clone(), sys.clone(), battery.clone(), beta)
}

/// The four blocks of a wit-battery channel on the system populations.
///
/// `rkl` maps battery level `k` to level `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct WitSubchannels {
    pub r00: DMatrix<f64>,
    pub r01: DMatrix<f64>,
    pub r10: DMatrix<f64>,
    pub r11: DMatrix<f64>,
    pub system: EnergySpectrum,
    pub delta: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubchannelReport {
    pub min_entry: f64,
    pub max_stochastic: f64,
    pub max_gibbs: f64,
}

impl WitSubchannels {
    pub fn new(
        r00: DMatrix<f64>,
        r01: DMatrix<f64>,
        r10: DMatrix<f64>,
        r11: DMatrix<f64>,
        system: EnergySpectrum,
        delta: f64,
        beta: f64,
    ) -> Result<Self> {
        Self::new_with(r00, r01, r10, r11, system, delta, beta, &Tolerances::default())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new_with(
        r00: DMatrix<f64>,
        r01: DMatrix<f64>,
        r10: DMatrix<f64>,
        r11: DMatrix<f64>,
        system: EnergySpectrum,
        delta: f64,
        beta: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        let d = system.len();
        for (name, m) in [("R00", &r00), ("R01", &r01), ("R10", &r10), ("R11", &r11)] {
            if m.shape() != (d, d) {
                return Err(Error::InvalidSubchannels(format!("{name} is {:?}, expected {d}x{d}", m.shape())));
            }
        }
        if !(delta >= 0.0) || !delta.is_finite() || !(beta > 0.0) {
            return Err(Error::InvalidSubchannels(format!("delta = {delta}, beta = {beta}")));
        }
        system.check_guard(beta)?;
        let sub = Self { r00, r01, r10, r11, system, delta, beta };
        let rep = sub.report();
        if rep.min_entry < 0.0 {
            return Err(Error::InvalidSubchannels(format!("negative entry {:e}", rep.min_entry)));
        }
        if rep.max_stochastic >= tol.stochastic {
            return Err(Error::InvalidSubchannels(format!("column sums off by {:e}", rep.max_stochastic)));
        }
        if rep.max_gibbs >= tol.gibbs {
            return Err(Error::InvalidSubchannels(format!("Gibbs pair conditions off by {:e}", rep.max_gibbs)));
        }
        Ok(sub)
    }

    pub fn dim(&self) -> usize {
        self.system.len()
    }

    pub fn report(&self) -> SubchannelReport {
        let min_entry = [&self.r00, &self.r01, &self.r10, &self.r11]
            .iter()
            .flat_map(|m| m.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let lower = &self.r00 + &self.r01;
        let upper = &self.r10 + &self.r11;
        let max_stochastic = (0..self.dim())
            .flat_map(|j| [(lower.column(j).sum() - 1.0).abs(), (upper.column(j).sum() - 1.0).abs()])
            .fold(0.0, f64::max);
        let e0 = self.system.min();
        let g = nalgebra::DVector::from_iterator(
            self.dim(),
            self.system.levels().iter().map(|e| (-self.beta * (e - e0)).exp()),
        );
        let q = (-self.beta * self.delta).exp();
        let a = &self.r00 * &g + (&self.r10 * &g) * q - &g;
        let b = &self.r01 * &g + (&self.r11 * &g) * q - &g * q;
        let max_gibbs = a.iter().chain(b.iter()).zip(g.iter().chain(g.iter())).fold(0.0f64, |m, (x, gi)| m.max(x.abs() / gi));
        SubchannelReport { min_entry, max_stochastic, max_gibbs }
    }

    /// Blocks of a channel whose battery is the wit `{0, delta}`.
    pub fn from_wit_channel(ch: &ThermalChannel) -> Result<Self> {
        let lv = ch.battery().levels();
        if lv.len() != 2 || lv[0] != 0.0 || ch.sys_in().levels() != ch.sys_out().levels() {
            return Err(Error::InvalidSubchannels("channel is not a wit channel on a fixed system".into()));
        }
        Self::new(
            ch.extract_subchannels(0, 0)?,
            ch.extract_subchannels(0, 1)?,
            ch.extract_subchannels(1, 0)?,
            ch.extract_subchannels(1, 1)?,
            ch.sys_in().clone(),
            lv[1],
            ch.beta(),
        )
    }

    /// Reassembles the wit channel.
    pub fn to_wit_channel(&self) -> Result<ThermalChannel> {
        let d = self.dim();
        let mut r = DMatrix::zeros(2 * d, 2 * d);
        r.view_mut((0, 0), (d, d)).copy_from(&self.r00);
        r.view_mut((d, 0), (d, d)).copy_from(&self.r01);
        r.view_mut((0, d), (d, d)).copy_from(&self.r10);
        r.view_mut((d, d), (d, d)).copy_from(&self.r11);
        let wit = EnergySpectrum::new(vec![0.0, self.delta])?.with_label("wit");
        ThermalChannel::new(r, self.system.clone(), self.system.clone(), wit, self.beta)
    }

    /// Subchannels of a random wit channel with the given gap.
    pub fn random(system: &EnergySpectrum, delta: f64, beta: f64, seed: u64, num_mixes: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidSubchannels(format!("gap {delta} must be positive")));
        }
        let wit = EnergySpectrum::new(vec![0.0, delta])?.with_label("wit");
        let ch = random_gibbs_stochastic(system, &wit, beta, seed, num_mixes)?;
        Self::from_wit_channel(&ch)
    }
}

/// Flat config for four subchannel matrices, rows listed top to bottom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubchannelConfig {
    pub levels: Vec<f64>,
    pub delta: f64,
    #[serde(default = "one")]
    pub beta: f64,
    pub r00: Vec<Vec<f64>>,
    pub r01: Vec<Vec<f64>>,
    pub r10: Vec<Vec<f64>>,
    pub r11: Vec<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn rows_to_matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidSubchannels(format!("matrix must be {d}x{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SubchannelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_subchannels(&self) -> Result<WitSubchannels> {
        let sys = EnergySpectrum::new(self.levels.clone())?;
        let d = sys.len();
        WitSubchannels::new(
            rows_to_matrix(&self.r00, d)?,
            rows_to_matrix(&self.r01, d)?,
            rows_to_matrix(&self.r10, d)?,
            rows_to_matrix(&self.r11, d)?,
            sys,
            self.delta,
            self.beta,
        )
    }

    pub fn from_subchannels(sub: &WitSubchannels) -> Self {
        Self {
            levels: sub.system.levels().to_vec(),
            delta: sub.delta,
            beta: sub.beta,
            r00: matrix_to_rows(&sub.r00),
            r01: matrix_to_rows(&sub.r01),
            r10: matrix_to_rows(&sub.r10),
            r11: matrix_to_rows(&sub.r11),
        }
    }
}
