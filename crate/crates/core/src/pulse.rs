//! Control programs: smooth Fourier envelopes, rectangular segments and free-precession delays.
//!
//! Frequencies are ordinary frequencies in Hz throughout. The rotating-frame
//! Hamiltonian carries the factor 2π internally,
//!
//! ```text
//! H(t) = π (δ + z) σz + π s (f1(t) σx + f2(t) σy)        [rad/s]
//! ```
//!
//! where `δ` is the detuning of the ensemble point, `z` the Zeeman shift of a
//! delay segment and `s` the relative amplitude scale. With this convention a
//! resonant drive of constant Rabi frequency `ν_R` completes a spin flip in
//! `1/(2 ν_R)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsemblePoint;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, PauliVec};

/// Default number of samples per segment used by [`max_rabi`].
pub const DEFAULT_RABI_SAMPLES: usize = 4096;

/// Relative slack allowed when checking a time against a segment boundary.
const TIME_SLACK: f64 = 1e-12;

/// Quadrature (in-phase / quadrature) channel of the drive.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    X,
    Y,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::X, Channel::Y];

    pub fn index(self) -> usize {
        match self {
            Channel::X => 0,
            Channel::Y => 1,
        }
    }
}

/// Per-channel list of values indexed by harmonic `j = 1..=N` (stored at `j-1`).
///
/// Used both for Fourier coefficients and for gradients with respect to them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(num_harmonics: usize) -> Self {
        Coefficients {
            x: vec![0.0; num_harmonics],
            y: vec![0.0; num_harmonics],
        }
    }

    pub fn num_harmonics(&self) -> usize {
        self.x.len()
    }

    pub fn channel(&self, k: Channel) -> &[f64] {
        match k {
            Channel::X => &self.x,
            Channel::Y => &self.y,
        }
    }

    pub fn channel_mut(&mut self, k: Channel) -> &mut [f64] {
        match k {
            Channel::X => &mut self.x,
            Channel::Y => &mut self.y,
        }
    }

    /// Value for harmonic `j` (1-based).
    pub fn get(&self, j: usize, k: Channel) -> f64 {
        self.channel(k)[j - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.y.iter()).copied()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.iter().map(|a| a * a).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Coefficients {
            x: self.x.iter().map(|a| a * factor).collect(),
            y: self.y.iter().map(|a| a * factor).collect(),
        }
    }

    /// `self + step * dir`
    pub fn offset(&self, step: f64, dir: &Coefficients) -> Self {
        Coefficients {
            x: self.x.iter().zip(&dir.x).map(|(a, d)| a + step * d).collect(),
            y: self.y.iter().zip(&dir.y).map(|(a, d)| a + step * d).collect(),
        }
    }

    pub fn dot(&self, other: &Coefficients) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

/// Band-limited envelope `f_k(t) = Σ_j a_jk sin(2π j ν_fund t)` on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierEnvelope {
    fundamental_hz: f64,
    duration_s: f64,
    coeffs: Coefficients,
}

impl FourierEnvelope {
    pub fn new(duration_s: f64, fundamental_hz: f64, coeffs: Coefficients) -> Result<Self> {
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::domain(format!("duration must be positive, got {duration_s}")));
        }
        if !(fundamental_hz > 0.0 && fundamental_hz.is_finite()) {
            return Err(Error::domain(format!(
                "fundamental frequency must be positive, got {fundamental_hz}"
            )));
        }
        if coeffs.x.is_empty() || coeffs.x.len() != coeffs.y.len() {
            return Err(Error::domain(format!(
                "coefficient lists must be non-empty and equal length (got {} and {})",
                coeffs.x.len(),
                coeffs.y.len()
            )));
        }
        if !coeffs.is_finite() {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(FourierEnvelope {
            fundamental_hz,
            duration_s,
            coeffs,
        })
    }

    /// Envelope whose fundamental is `1/(2T)`, so it vanishes at both ends.
    pub fn half_period(duration_s: f64, coeffs: Coefficients) -> Result<Self> {
        Self::new(duration_s, 0.5 / duration_s, coeffs)
    }

    pub fn zeros(duration_s: f64, num_harmonics: usize) -> Result<Self> {
        Self::half_period(duration_s, Coefficients::zeros(num_harmonics))
    }

    pub fn num_harmonics(&self) -> usize {
        self.coeffs.num_harmonics()
    }

    pub fn fundamental_hz(&self) -> f64 {
        self.fundamental_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn coeffs(&self) -> &Coefficients {
        &self.coeffs
    }

    /// Same timing, different coefficients.
    pub fn with_coeffs(&self, coeffs: Coefficients) -> Result<Self> {
        if coeffs.num_harmonics() != self.num_harmonics() {
            return Err(Error::domain(format!(
                "expected {} harmonics, got {}",
                self.num_harmonics(),
                coeffs.num_harmonics()
            )));
        }
        Self::new(self.duration_s, self.fundamental_hz, coeffs)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FourierEnvelope {
            coeffs: self.coeffs.scaled(factor),
            ..self.clone()
        }
    }

    /// `(f1, f2)` in Hz at time `t`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= -TIME_SLACK * self.duration_s && t <= self.duration_s * (1.0 + TIME_SLACK)) {
            return Err(Error::domain(format!(
                "t = {t:e} s outside [0, {:e}] s",
                self.duration_s
            )));
        }
        Ok(self.eval_unchecked(t))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI * self.fundamental_hz * t;
        // sin(jw) by the Chebyshev recurrence sin((j+1)w) = 2cos(w) sin(jw) − sin((j−1)w)
        let (s1, c1) = w.sin_cos();
        let two_c = 2.0 * c1;
        let (mut prev, mut cur) = (0.0, s1);
        let (mut f1, mut f2) = (0.0, 0.0);
        for (ax, ay) in self.coeffs.x.iter().zip(&self.coeffs.y) {
            f1 += ax * cur;
            f2 += ay * cur;
            let next = two_c * cur - prev;
            prev = cur;
            cur = next;
        }
        (f1, f2)
    }

    /// `sin(2π j ν t)` for `j = 1..=N`.
    pub(crate) fn basis_values(&self, t: f64, out: &mut [f64]) {
        let w = 2.0 * PI * self.fundamental_hz * t;
        for (j, v) in out.iter_mut().enumerate() {
            *v = ((j + 1) as f64 * w).sin();
        }
    }
}

/// Rectangular drive of fixed Rabi frequency and phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEnvelope {
    pub rabi_hz: f64,
    /// Drive axis angle in the xy-plane; 0 is x, π/2 is y.
    pub phase: f64,
    pub duration_s: f64,
}

impl ConstantEnvelope {
    pub fn new(rabi_hz: f64, phase: f64, duration_s: f64) -> Result<Self> {
        if !(rabi_hz >= 0.0) || !rabi_hz.is_finite() {
            return Err(Error::domain(format!("Rabi frequency must be ≥ 0, got {rabi_hz}")));
        }
        if !(duration_s >= 0.0) || !duration_s.is_finite() {
            return Err(Error::domain(format!("duration must be ≥ 0, got {duration_s}")));
        }
        Ok(ConstantEnvelope {
            rabi_hz,
            phase,
            duration_s,
        })
    }

    /// Rotation by `angle` radians about the axis at `phase` when driven on resonance.
    pub fn rotation(rabi_hz: f64, phase: f64, angle: f64) -> Result<Self> {
        if !(rabi_hz > 0.0) {
            return Err(Error::domain(format!("Rabi frequency must be positive, got {rabi_hz}")));
        }
        Self::new(rabi_hz, phase, angle.abs() / (2.0 * PI * rabi_hz))
            .map(|c| if angle < 0.0 { ConstantEnvelope { phase: phase + PI, ..c } } else { c })
    }

    fn quadratures(&self) -> (f64, f64) {
        let (s, c) = self.phase.sin_cos();
        (self.rabi_hz * c, self.rabi_hz * s)
    }
}

/// Free precession with an optional extra σz shift (e.g. a Zeeman shift γB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delay {
    pub duration_s: f64,
    pub zeeman_shift_hz: f64,
}

impl Delay {
    pub fn new(duration_s: f64, zeeman_shift_hz: f64) -> Result<Self> {
        if !(duration_s >= 0.0) || !duration_s.is_finite() {
            return Err(Error::domain(format!("duration must be ≥ 0, got {duration_s}")));
        }
        Ok(Delay {
            duration_s,
            zeeman_shift_hz,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Fourier(FourierEnvelope),
    Constant(ConstantEnvelope),
    Delay(Delay),
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        match self {
            Segment::Fourier(e) => e.duration_s(),
            Segment::Constant(c) => c.duration_s,
            Segment::Delay(d) => d.duration_s,
        }
    }

    /// Drive quadratures at local time `t` (no range check).
    #[inline]
    pub(crate) fn quadratures(&self, t: f64) -> (f64, f64) {
        match self {
            Segment::Fourier(e) => e.eval_unchecked(t),
            Segment::Constant(c) => c.quadratures(),
            Segment::Delay(_) => (0.0, 0.0),
        }
    }

    pub(crate) fn zeeman_shift_hz(&self) -> f64 {
        match self {
            Segment::Delay(d) => d.zeeman_shift_hz,
            _ => 0.0,
        }
    }

    pub(crate) fn is_time_independent(&self) -> bool {
        !matches!(self, Segment::Fourier(_))
    }

    /// Hamiltonian at local time `t` in Pauli coordinates (rad/s).
    #[inline]
    pub(crate) fn hamiltonian(&self, t: f64, point: &EnsemblePoint) -> PauliVec {
        let (f1, f2) = self.quadratures(t);
        let drive = PI * point.amplitude_scale;
        PauliVec {
            i: 0.0,
            x: drive * f1,
            y: drive * f2,
            z: PI * (point.detuning_hz + self.zeeman_shift_hz()),
        }
    }
}

impl From<FourierEnvelope> for Segment {
    fn from(e: FourierEnvelope) -> Self {
        Segment::Fourier(e)
    }
}

impl From<ConstantEnvelope> for Segment {
    fn from(c: ConstantEnvelope) -> Self {
        Segment::Constant(c)
    }
}

impl From<Delay> for Segment {
    fn from(d: Delay) -> Self {
        Segment::Delay(d)
    }
}

/// Ordered, non-empty list of segments played back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlProgram {
    segments: Vec<Segment>,
}

impl ControlProgram {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::domain("control program needs at least one segment"));
        }
        Ok(ControlProgram { segments })
    }

    pub fn single(segment: impl Into<Segment>) -> Self {
        ControlProgram {
            segments: vec![segment.into()],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(Segment::duration_s).sum()
    }

    /// Concatenation: `self` first, then `other`.
    pub fn then(mut self, other: ControlProgram) -> Self {
        self.segments.extend(other.segments);
        self
    }

    /// The envelope when the program is a single Fourier segment.
    pub fn as_fourier(&self) -> Option<&FourierEnvelope> {
        match self.segments.as_slice() {
            [Segment::Fourier(e)] => Some(e),
            _ => None,
        }
    }

    /// Drive quadratures `(f1, f2)` in Hz at program time `t`, clamped to the program.
    pub fn quadratures_at(&self, t: f64) -> (f64, f64) {
        let (seg, local) = self.locate(t);
        seg.quadratures(local)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        let total = self.duration_s();
        if t >= -TIME_SLACK * total && t <= total * (1.0 + TIME_SLACK) {
            Ok(())
        } else {
            Err(Error::domain(format!("t = {t:e} s outside [0, {total:e}] s")))
        }
    }

    /// Segment containing `t` and the local time within it.
    pub(crate) fn locate(&self, t: f64) -> (&Segment, f64) {
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration_s();
            if t < end || i == last {
                return (seg, (t - start).clamp(0.0, seg.duration_s()));
            }
            start = end;
        }
        unreachable!("program has at least one segment")
    }
}

impl From<FourierEnvelope> for ControlProgram {
    fn from(e: FourierEnvelope) -> Self {
        ControlProgram::single(e)
    }
}

/// Rotating-frame Hamiltonian (rad/s) of `program` at time `t` for one ensemble member.
pub fn hamiltonian_at(program: &ControlProgram, t: f64, point: &EnsemblePoint) -> Result<Mat2> {
    program.check_time(t)?;
    let (seg, local) = program.locate(t);
    Ok(Mat2::from_pauli(seg.hamiltonian(local, point)))
}

/// Peak drive amplitude over the program: `max_t max(|f1(t)|, |f2(t)|)` on a uniform grid.
///
/// This is the per-quadrature peak, which is what bounds each I/Q channel of
/// the waveform generator and what the tabulated `A_max` values of the
/// reference pulses measure. See [`peak_drive_magnitude`] for `max √(f1² + f2²)`.
pub fn max_rabi(program: &ControlProgram, samples_per_segment: usize) -> f64 {
    sample_peak(program, samples_per_segment, |f1, f2| f1.abs().max(f2.abs()))
}

/// `max_t √(f1² + f2²)`, the peak nutation rate of the drive.
pub fn peak_drive_magnitude(program: &ControlProgram, samples_per_segment: usize) -> f64 {
    sample_peak(program, samples_per_segment, f64::hypot)
}

fn sample_peak(program: &ControlProgram, samples: usize, metric: impl Fn(f64, f64) -> f64) -> f64 {
    let samples = samples.max(2);
    let mut peak = 0.0f64;
    for seg in program.segments() {
        match seg {
            Segment::Delay(_) => {}
            Segment::Constant(c) => {
                let (f1, f2) = c.quadratures();
                peak = peak.max(metric(f1, f2));
            }
            Segment::Fourier(e) => {
                let dt = e.duration_s() / (samples - 1) as f64;
                for n in 0..samples {
                    let (f1, f2) = e.eval_unchecked(n as f64 * dt);
                    peak = peak.max(metric(f1, f2));
                }
            }
        }
    }
    peak
}

/// Hard `(π/2)_y − π_x − (π/2)_y` sequence at the given Rabi frequency.
pub fn make_composite_pi(rabi_hz: f64) -> Result<ControlProgram> {
    if !(rabi_hz > 0.0) || !rabi_hz.is_finite() {
        return Err(Error::domain(format!("Rabi frequency must be positive, got {rabi_hz}")));
    }
    let half = ConstantEnvelope::rotation(rabi_hz, PI / 2.0, PI / 2.0)?;
    let full = ConstantEnvelope::rotation(rabi_hz, 0.0, PI)?;
    ControlProgram::new(vec![half.clone().into(), full.into(), half.into()])
}

/// Single rectangular π pulse about x.
pub fn make_hard_pi(rabi_hz: f64) -> Result<ControlProgram> {
    Ok(ControlProgram::single(ConstantEnvelope::rotation(rabi_hz, 0.0, PI)?))
}
