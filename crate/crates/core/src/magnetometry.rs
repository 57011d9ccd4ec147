//! Spin-echo AC magnetometry with imperfect pulses.
//!
//! The sequence is `pulse_a`, free precession for `τ` under `+γB`, `pulse_b`,
//! free precession for `τ` under `−γB`, `pulse_c`, starting from `|0⟩`. The
//! field is a square wave in phase with the echo, so the accumulated phase is
//! `Δφ = 2πγB·2τ` for ideal pulses. The readout signal is
//!
//! ```text
//! S = ½ + C(τ)·(P(|0⟩) − ½),    C(τ) = c0 · exp[−(τ/T2)ⁿ]
//! ```
//!
//! Sensitivity follows from SNR = 1 in the photon shot-noise limit:
//!
//! ```text
//! η = √(2τ + t_prep) / (2 |∂S/∂B| · √(N_cps · t_acq))
//! ```
//!
//! The factor 2 converts `S` into the relative fluorescence modulation, so that
//! ideal pulses give `η = 1 / (2π·2τ·γ·C·√(N_cps t_acq / (2τ + t_prep)))`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builtin;
use crate::ensemble::{DetuningGrid, EnsemblePoint, RobustnessWindow, Weighting};
use crate::error::{Error, Result};
use crate::linalg::{expm_herm, Mat2, PauliVec, I};
use crate::propagation::{propagate, UnitaryOp};
use crate::pulse::{max_rabi, ConstantEnvelope, ControlProgram, DEFAULT_RABI_SAMPLES};

/// One pulse of the echo: a simulated program or an ideal, instantaneous rotation.
#[derive(Clone, Debug)]
pub enum EchoPulse {
    Program(ControlProgram),
    Ideal(UnitaryOp),
}

impl EchoPulse {
    fn unitary(&self, point: &EnsemblePoint) -> Result<Mat2> {
        match self {
            EchoPulse::Program(p) => Ok(*propagate(p, point)?.matrix()),
            EchoPulse::Ideal(u) => Ok(*u.matrix()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EchoSequence {
    pub pulse_a: EchoPulse,
    pub pulse_b: EchoPulse,
    pub pulse_c: EchoPulse,
    pub tau_s: f64,
}

impl EchoSequence {
    pub fn new(pulse_a: EchoPulse, pulse_b: EchoPulse, pulse_c: EchoPulse, tau_s: f64) -> Result<Self> {
        if !(tau_s > 0.0 && tau_s.is_finite()) {
            return Err(Error::domain(format!("τ must be positive, got {tau_s}")));
        }
        Ok(EchoSequence {
            pulse_a,
            pulse_b,
            pulse_c,
            tau_s,
        })
    }

    /// Instantaneous `(π/2)_y − π_y − (π/2)_y`.
    pub fn ideal(tau_s: f64) -> Result<Self> {
        let half = EchoPulse::Ideal(UnitaryOp::rotation([0.0, 1.0, 0.0], PI / 2.0));
        let full = EchoPulse::Ideal(UnitaryOp::rotation([0.0, 1.0, 0.0], PI));
        Self::new(half.clone(), full, half, tau_s)
    }

    /// Rectangular `(π/2)_y − π_y − (π/2)_y` at a fixed Rabi frequency.
    pub fn rectangular(rabi_hz: f64, tau_s: f64) -> Result<Self> {
        let half = ControlProgram::single(ConstantEnvelope::rotation(rabi_hz, PI / 2.0, PI / 2.0)?);
        let full = ControlProgram::single(ConstantEnvelope::rotation(rabi_hz, PI / 2.0, PI)?);
        Self::new(
            EchoPulse::Program(half.clone()),
            EchoPulse::Program(full),
            EchoPulse::Program(half),
            tau_s,
        )
    }

    /// Smooth echo from the reference (π/2)_y pulse; the refocusing pulse plays it twice.
    pub fn smooth(tau_s: f64) -> Result<Self> {
        let half = builtin::pi2_y().program();
        let full = half.clone().then(half.clone());
        Self::new(
            EchoPulse::Program(half.clone()),
            EchoPulse::Program(full),
            EchoPulse::Program(half),
            tau_s,
        )
    }

    /// Rectangular echo at the same peak amplitude as [`EchoSequence::smooth`].
    pub fn rectangular_matched(tau_s: f64) -> Result<Self> {
        Self::rectangular(max_rabi(&builtin::pi2_y().program(), DEFAULT_RABI_SAMPLES), tau_s)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub contrast_c0: f64,
    pub t2_s: f64,
    pub stretch_n: f64,
    pub counts_cps: f64,
    pub t_acq_s: f64,
    pub t_prep_s: f64,
    /// Hz per tesla.
    pub gyromagnetic: f64,
    /// Optional inhomogeneous linewidth (FWHM, Hz) averaged over around each detuning.
    #[serde(default)]
    pub linewidth_fwhm_hz: Option<f64>,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            contrast_c0: 0.3,
            t2_s: 2.2e-6,
            stretch_n: 1.0,
            counts_cps: 1e5,
            t_acq_s: 200e-9,
            t_prep_s: 3e-6,
            gyromagnetic: 28.0e9,
            linewidth_fwhm_hz: None,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.contrast_c0,
            self.t2_s,
            self.stretch_n,
            self.counts_cps,
            self.t_acq_s,
            self.t_prep_s,
            self.gyromagnetic,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.contrast_c0 > 1.0 || !(0.5..=2.0).contains(&self.stretch_n) {
            return Err(Error::domain(format!("invalid sensor model: {self:?}")));
        }
        if let Some(w) = self.linewidth_fwhm_hz {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::domain("linewidth must be positive"));
            }
        }
        Ok(())
    }

    /// `C(τ) = c0 · exp[−(τ/T2)ⁿ]`
    pub fn contrast(&self, tau_s: f64) -> f64 {
        self.contrast_c0 * (-(tau_s / self.t2_s).powf(self.stretch_n)).exp()
    }

    /// Photons collected per second of averaging.
    pub fn photons_per_second(&self, tau_s: f64) -> f64 {
        self.counts_cps * self.t_acq_s / (2.0 * tau_s + self.t_prep_s)
    }

    fn sub_ensemble(&self, point: &EnsemblePoint) -> Result<Vec<EnsemblePoint>> {
        match self.linewidth_fwhm_hz {
            None => Ok(vec![EnsemblePoint { weight: 1.0, ..*point }]),
            Some(fwhm) => {
                let w = RobustnessWindow {
                    detuning: DetuningGrid::Gaussian { fwhm_hz: fwhm, points: 9 },
                    amplitude_scales: vec![point.amplitude_scale],
                    weighting: Weighting::Gaussian,
                };
                Ok(w
                    .points()?
                    .into_iter()
                    .map(|p| EnsemblePoint { detuning_hz: p.detuning_hz + point.detuning_hz, ..p })
                    .collect())
            }
        }
    }
}

/// Pulse unitaries of one ensemble member, reused across field values.
struct Echo {
    a: Mat2,
    b: Mat2,
    c: Mat2,
    tau: f64,
    detuning: f64,
    gamma: f64,
}

impl Echo {
    fn new(seq: &EchoSequence, point: &EnsemblePoint, gamma: f64) -> Result<Self> {
        Ok(Echo {
            a: seq.pulse_a.unitary(point)?,
            b: seq.pulse_b.unitary(point)?,
            c: seq.pulse_c.unitary(point)?,
            tau: seq.tau_s,
            detuning: point.detuning_hz,
            gamma,
        })
    }

    fn delay(&self, shift: f64) -> Mat2 {
        expm_herm(PauliVec::new(0.0, 0.0, 0.0, PI * (self.detuning + shift)), self.tau)
    }

    /// `(P(|0⟩), ∂P/∂B)`
    fn population(&self, b0: f64) -> (f64, f64) {
        let z = self.gamma * b0;
        let d1 = self.delay(z);
        let d2 = self.delay(-z);
        let sz = Mat2::sigma_z();
        let k = PI * self.gamma * self.tau;
        let dd1 = (sz * d1).scale(-I * k);
        let dd2 = (sz * d2).scale(I * k);
        let u = self.c * d2 * self.b * d1 * self.a;
        let du = self.c * dd2 * self.b * d1 * self.a + self.c * d2 * self.b * dd1 * self.a;
        let amp = u.get(0, 0);
        (amp.norm_sqr(), 2.0 * (amp.conj() * du.get(0, 0)).re)
    }
}

fn weighted_signal(echoes: &[(f64, Echo)], b0: f64, contrast: f64) -> (f64, f64) {
    let (mut p, mut dp) = (0.0, 0.0);
    for (w, e) in echoes {
        let (pi, dpi) = e.population(b0);
        p += w * pi;
        dp += w * dpi;
    }
    (0.5 + contrast * (p - 0.5), contrast * dp)
}

fn echoes(seq: &EchoSequence, point: &EnsemblePoint, model: &SensorModel) -> Result<Vec<(f64, Echo)>> {
    model
        .sub_ensemble(point)?
        .iter()
        .map(|p| Ok((p.weight, Echo::new(seq, p, model.gyromagnetic)?)))
        .collect()
}

/// Readout signal `S` at field amplitude `b0` (tesla).
pub fn echo_signal(seq: &EchoSequence, point: &EnsemblePoint, b0: f64, model: &SensorModel) -> Result<f64> {
    model.validate()?;
    let e = echoes(seq, point, model)?;
    Ok(weighted_signal(&e, b0, model.contrast(seq.tau_s)).0)
}

/// `(S, ∂S/∂B)` at `b0`.
pub fn echo_signal_slope(
    seq: &EchoSequence,
    point: &EnsemblePoint,
    b0: f64,
    model: &SensorModel,
) -> Result<(f64, f64)> {
    model.validate()?;
    let e = echoes(seq, point, model)?;
    Ok(weighted_signal(&e, b0, model.contrast(seq.tau_s)))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BStar {
    /// Steepest point of the nominal (δ = 0, s = 1) curve.
    Auto,
    Fixed(f64),
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `|∂S/∂B|` at `b_star`, per tesla.
    pub slope_b_star: f64,
    pub b_star: f64,
    /// Shot noise `√N_tot` for one second of averaging.
    pub noise: f64,
    /// T/√Hz; infinite when the slope vanishes.
    pub eta: f64,
    pub n_tot_per_second: f64,
}

impl SensitivityReport {
    pub fn is_infinite(&self) -> bool {
        self.eta.is_infinite()
    }
}

/// Field of steepest nominal slope within one fringe period `[0, 1/(2γτ)]`.
pub fn find_b_star(seq: &EchoSequence, model: &SensorModel) -> Result<f64> {
    model.validate()?;
    let e = echoes(seq, &EnsemblePoint::nominal(), model)?;
    let c = model.contrast(seq.tau_s);
    let period = 1.0 / (2.0 * model.gyromagnetic * seq.tau_s);
    let slope = |b: f64| weighted_signal(&e, b, c).1.abs();
    let n = 512;
    let h = period / n as f64;
    let (mut best_b, mut best) = (0.0, -1.0);
    for i in 0..n {
        let b = i as f64 * h;
        let s = slope(b);
        // symmetric fringes tie; keep the smallest field
        if s > best * (1.0 + 1e-9) {
            best = s;
            best_b = b;
        }
    }
    // golden-section refinement on the bracketing interval
    let (mut lo, mut hi) = (best_b - h, best_b + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if slope(m1) >= slope(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = 0.5 * (lo + hi);
    Ok(if slope(refined) >= best { refined } else { best_b })
}

pub fn sensitivity(
    seq: &EchoSequence,
    point: &EnsemblePoint,
    model: &SensorModel,
    b_star: BStar,
) -> Result<SensitivityReport> {
    let b = match b_star {
        BStar::Auto => find_b_star(seq, model)?,
        BStar::Fixed(b) => b,
    };
    let (_, slope) = echo_signal_slope(seq, point, b, model)?;
    Ok(report(seq.tau_s, model, b, slope.abs()))
}

fn report(tau: f64, model: &SensorModel, b_star: f64, slope: f64) -> SensitivityReport {
    let n_tot = model.photons_per_second(tau);
    let eta = if slope == 0.0 {
        f64::INFINITY
    } else {
        (2.0 * tau + model.t_prep_s).sqrt() / (2.0 * slope * (model.counts_cps * model.t_acq_s).sqrt())
    };
    SensitivityReport {
        slope_b_star: slope,
        b_star,
        noise: n_tot.sqrt(),
        eta,
        n_tot_per_second: n_tot,
    }
}

/// η over a detuning × scale grid for two pulse sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityLandscape {
    pub detunings: Vec<f64>,
    pub scales: Vec<f64>,
    /// `[i][j]` at `detunings[i]`, `scales[j]`.
    pub rect: Vec<Vec<f64>>,
    pub smooth: Vec<Vec<f64>>,
}

impl SensitivityLandscape {
    /// Rows `(detuning, scale, eta, pulse_set)`, rectangular first, each row-major.
    pub fn rows(&self) -> Vec<(f64, f64, f64, &'static str)> {
        let mut out = Vec::new();
        for (grid, name) in [(&self.rect, "rect"), (&self.smooth, "smooth")] {
            for (i, d) in self.detunings.iter().enumerate() {
                for (j, s) in self.scales.iter().enumerate() {
                    out.push((*d, *s, grid[i][j], name));
                }
            }
        }
        out
    }
}

/// η on a grid, evaluated at one operating field for the whole grid.
pub fn sensitivity_grid(
    seq: &EchoSequence,
    detunings: &[f64],
    scales: &[f64],
    model: &SensorModel,
    b_star: BStar,
) -> Result<Vec<Vec<f64>>> {
    if detunings.is_empty() || scales.is_empty() {
        return Err(Error::domain("sensitivity grids must be non-empty"));
    }
    let b = match b_star {
        BStar::Auto => find_b_star(seq, model)?,
        BStar::Fixed(b) => b,
    };
    let cells: Vec<(f64, f64)> = detunings
        .iter()
        .flat_map(|d| scales.iter().map(move |s| (*d, *s)))
        .collect();
    let flat: Vec<f64> = cells
        .par_iter()
        .map(|&(d, s)| Ok(sensitivity(seq, &EnsemblePoint::new(d, s, 1.0)?, model, BStar::Fixed(b))?.eta))
        .collect::<Result<_>>()?;
    Ok(flat.chunks(scales.len()).map(<[f64]>::to_vec).collect())
}

pub fn sensitivity_landscape(
    seq_rect: &EchoSequence,
    seq_smooth: &EchoSequence,
    detunings: &[f64],
    scales: &[f64],
    model: &SensorModel,
    b_star: BStar,
) -> Result<SensitivityLandscape> {
    Ok(SensitivityLandscape {
        detunings: detunings.to_vec(),
        scales: scales.to_vec(),
        rect: sensitivity_grid(seq_rect, detunings, scales, model, b_star)?,
        smooth: sensitivity_grid(seq_smooth, detunings, scales, model, b_star)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SensorModel {
        SensorModel::default()
    }

    #[test]
    fn ideal_echo_closes_and_inverts() {
        let m = model();
        let seq = EchoSequence::ideal(1.2e-6).unwrap();
        let c = m.contrast(1.2e-6);
        let s0 = echo_signal(&seq, &EnsemblePoint::nominal(), 0.0, &m).unwrap();
        assert!((s0 - (0.5 + c / 2.0)).abs() < 1e-12);
        // 2πγ b (2τ) = π
        let b = 1.0 / (4.0 * m.gyromagnetic * 1.2e-6);
        let s = echo_signal(&seq, &EnsemblePoint::nominal(), b, &m).unwrap();
        assert!((s - (0.5 - c / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn ideal_echo_matches_cosine_over_a_period() {
        let m = model();
        let tau = 1.2e-6;
        let seq = EchoSequence::ideal(tau).unwrap();
        let c = m.contrast(tau);
        let period = 1.0 / (m.gyromagnetic * 2.0 * tau);
        for i in 0..=40 {
            let b = period * i as f64 / 40.0;
            let s = echo_signal(&seq, &EnsemblePoint::nominal(), b, &m).unwrap();
            let oracle = 0.5 + 0.5 * c * (2.0 * PI * m.gyromagnetic * b * 2.0 * tau).cos();
            assert!((s - oracle).abs() < 1e-6);
            let again = echo_signal(&seq, &EnsemblePoint::nominal(), b + period, &m).unwrap();
            assert!((s - again).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_slope_matches_finite_difference() {
        let m = model();
        let seq = EchoSequence::rectangular(15e6, 1.2e-6).unwrap();
        let p = EnsemblePoint::at(2e6, 0.9);
        let b = 1.7e-6;
        let h = 1e-10;
        let (_, slope) = echo_signal_slope(&seq, &p, b, &m).unwrap();
        let fd = (echo_signal(&seq, &p, b + h, &m).unwrap() - echo_signal(&seq, &p, b - h, &m).unwrap()) / (2.0 * h);
        assert!((slope - fd).abs() < 1e-6 * slope.abs());
    }

    #[test]
    fn ideal_sensitivity_closed_form() {
        let m = model();
        let tau = 1.2e-6;
        let seq = EchoSequence::ideal(tau).unwrap();
        let r = sensitivity(&seq, &EnsemblePoint::nominal(), &m, BStar::Auto).unwrap();
        let c = 0.3 * (-(tau / 2.2e-6)).exp();
        let closed = 1.0 / (2.0 * PI * 2.0 * tau * 28e9 * c * (1e5 * 200e-9 / (2.0 * tau + 3e-6)).sqrt());
        assert!((r.eta - closed).abs() < 1e-9 * closed, "{} {}", r.eta, closed);
        assert!((r.b_star - 1.0 / (8.0 * 28e9 * tau)).abs() < 1e-6 * r.b_star);
    }

    #[test]
    fn shot_noise_scaling() {
        let seq = EchoSequence::ideal(1.2e-6).unwrap();
        let m = model();
        let a = sensitivity(&seq, &EnsemblePoint::nominal(), &m, BStar::Auto).unwrap();
        let doubled = SensorModel { counts_cps: 2e5, ..m };
        let b = sensitivity(&seq, &EnsemblePoint::nominal(), &doubled, BStar::Auto).unwrap();
        assert!((a.eta / b.eta - 2f64.sqrt()).abs() < 1e-12);
        let quad = SensorModel { t_acq_s: 800e-9, ..m };
        let q = sensitivity(&seq, &EnsemblePoint::nominal(), &quad, BStar::Auto).unwrap();
        assert!((a.eta / q.eta - 2.0).abs() < 1e-12);
        let half_c = SensorModel { contrast_c0: 0.15, ..m };
        let h = sensitivity(&seq, &EnsemblePoint::nominal(), &half_c, BStar::Auto).unwrap();
        assert!((h.eta / a.eta - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_slope_is_infinite() {
        let seq = EchoSequence::ideal(1.2e-6).unwrap();
        let r = sensitivity(&seq, &EnsemblePoint::nominal(), &model(), BStar::Fixed(0.0)).unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn detuned_rectangular_slope_is_smaller() {
        let m = model();
        let seq = EchoSequence::rectangular(10e6, 1.2e-6).unwrap();
        let b = find_b_star(&seq, &m).unwrap();
        let nominal = sensitivity(&seq, &EnsemblePoint::nominal(), &m, BStar::Fixed(b)).unwrap();
        let detuned = sensitivity(&seq, &EnsemblePoint::at(6e6, 1.0), &m, BStar::Fixed(b)).unwrap();
        assert!(detuned.slope_b_star < nominal.slope_b_star);
    }

    #[test]
    fn linewidth_average_reduces_to_point_when_narrow() {
        let seq = EchoSequence::rectangular(15e6, 1.2e-6).unwrap();
        let m = model();
        let narrow = SensorModel { linewidth_fwhm_hz: Some(1.0), ..m };
        let p = EnsemblePoint::at(1e6, 1.0);
        let a = echo_signal(&seq, &p, 1e-6, &m).unwrap();
        let b = echo_signal(&seq, &p, 1e-6, &narrow).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(SensorModel { linewidth_fwhm_hz: Some(-1.0), ..m }.validate().is_err());
        assert!(SensorModel { stretch_n: 3.0, ..m }.validate().is_err());
    }
}
