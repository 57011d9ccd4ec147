//! Propagators of control programs: midpoint time slicing and a Floquet
//! (extended frequency space) solver for single periodic envelopes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsemblePoint;
use crate::error::{Error, Result};
use crate::linalg::{bloch_vector, check_normalized, expm_herm, Mat2, PauliVec, ONE, ZERO};
use crate::pulse::{Channel, ControlProgram, FourierEnvelope, Segment};

/// Slices per segment unless stated otherwise.
pub const DEFAULT_SLICES: usize = 4096;
/// Floquet modes per side unless stated otherwise.
pub const DEFAULT_MODES: usize = 96;

const UNITARY_TOL: f64 = 1e-8;
const FLOQUET_FAIL_TOL: f64 = 1e-6;

/// A 2×2 unitary, checked on construction.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct UnitaryOp(Mat2);

impl UnitaryOp {
    pub fn new(m: Mat2) -> Result<Self> {
        let r = m.unitarity_residual();
        if r.is_nan() || r > UNITARY_TOL {
            return Err(Error::domain(format!("matrix is not unitary (residual {r:e})")));
        }
        Ok(UnitaryOp(m))
    }

    pub fn identity() -> Self {
        UnitaryOp(Mat2::identity())
    }

    /// `exp(−i θ/2 n·σ)` for a unit axis `n`.
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let h = PauliVec::new(0.0, axis[0] / n, axis[1] / n, axis[2] / n);
        UnitaryOp(expm_herm(h, angle / 2.0))
    }

    pub fn pauli_x() -> Self {
        UnitaryOp(Mat2::sigma_x())
    }

    pub fn pauli_y() -> Self {
        UnitaryOp(Mat2::sigma_y())
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        UnitaryOp(self.0.adjoint())
    }

    pub fn apply(&self, v: &[C64; 2]) -> [C64; 2] {
        self.0.apply(v)
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.0.unitarity_residual()
    }

    /// `|⟨to|U|from⟩|²`
    pub fn transition_probability(&self, from: &[C64; 2], to: &[C64; 2]) -> f64 {
        let out = self.apply(from);
        (to[0].conj() * out[0] + to[1].conj() * out[1]).norm_sqr()
    }

    /// Probability of ending in |1⟩ when starting in |0⟩.
    pub fn flip_probability(&self) -> f64 {
        self.0.get(1, 0).norm_sqr()
    }
}

impl std::ops::Mul for UnitaryOp {
    type Output = UnitaryOp;
    fn mul(self, rhs: UnitaryOp) -> UnitaryOp {
        UnitaryOp(self.0 * rhs.0)
    }
}

/// Propagator from 0 to `t` with `n_slices` midpoint slices per (full) segment.
///
/// Rectangular segments and delays are exponentiated exactly. A segment cut
/// by `t` is integrated with `n_slices` slices over the part that is covered.
pub fn propagate_timeslice(
    program: &ControlProgram,
    point: &EnsemblePoint,
    t: f64,
    n_slices: usize,
) -> Result<UnitaryOp> {
    if n_slices == 0 {
        return Err(Error::domain("n_slices must be ≥ 1"));
    }
    program.check_time(t)?;
    let mut u = Mat2::identity();
    let mut start = 0.0;
    for seg in program.segments() {
        if start >= t {
            break;
        }
        let span = seg.duration_s().min(t - start);
        if span > 0.0 {
            u = segment_propagator(seg, point, span, n_slices) * u;
        }
        start += seg.duration_s();
    }
    Ok(UnitaryOp(u))
}

/// Full-duration propagator at the default slice count.
pub fn propagate(program: &ControlProgram, point: &EnsemblePoint) -> Result<UnitaryOp> {
    propagate_timeslice(program, point, program.duration_s(), DEFAULT_SLICES)
}

/// Propagator of one segment over local times `[0, span]`.
pub(crate) fn segment_propagator(seg: &Segment, point: &EnsemblePoint, span: f64, n_slices: usize) -> Mat2 {
    if seg.is_time_independent() {
        return expm_herm(seg.hamiltonian(0.0, point), span);
    }
    let dt = span / n_slices as f64;
    let mut u = Mat2::identity();
    for m in 0..n_slices {
        let h = seg.hamiltonian((m as f64 + 0.5) * dt, point);
        u = expm_herm(h, dt) * u;
    }
    u
}

/// Propagator of a single periodic envelope via the truncated Floquet matrix.
///
/// Modes `−n_modes..=n_modes` are kept. Truncation error shows up as loss of
/// unitarity, reported as a convergence error above 1e-6.
pub fn propagate_floquet(
    program: &ControlProgram,
    point: &EnsemblePoint,
    t: f64,
    n_modes: usize,
) -> Result<UnitaryOp> {
    let env = program
        .as_fourier()
        .ok_or_else(|| Error::Unsupported("Floquet propagation needs a single Fourier segment".into()))?;
    if n_modes < env.num_harmonics() + 4 {
        return Err(Error::domain(format!(
            "n_modes = {n_modes} is below num_harmonics + 4 = {}",
            env.num_harmonics() + 4
        )));
    }
    program.check_time(t)?;
    let u = floquet_unitary(env, point, t, n_modes);
    let r = u.unitarity_residual();
    if !(r <= FLOQUET_FAIL_TOL) {
        return Err(Error::Convergence(format!(
            "Floquet truncation at {n_modes} modes leaves unitarity residual {r:e}"
        )));
    }
    Ok(UnitaryOp(u))
}

/// Extended-space Floquet matrix in units of rad/s; index `2·(n + n_modes) + a`.
pub fn floquet_matrix(env: &FourierEnvelope, point: &EnsemblePoint, n_modes: usize) -> DMatrix<C64> {
    let dim = 2 * (2 * n_modes + 1);
    let omega = 2.0 * PI * env.fundamental_hz();
    let mut f = DMatrix::<C64>::zeros(dim, dim);
    let modes = 2 * n_modes + 1;
    let h0 = Mat2::sigma_z().scale_re(PI * point.detuning_hz);
    let harmonics = floquet_harmonics(env, point);
    for n in 0..modes {
        for m in 0..modes {
            let diff = n as isize - m as isize;
            let block = match diff {
                0 => h0 + Mat2::identity().scale_re((n as f64 - n_modes as f64) * omega),
                d if d > 0 && (d as usize) <= harmonics.len() => harmonics[d as usize - 1],
                d if d < 0 && ((-d) as usize) <= harmonics.len() => -harmonics[(-d) as usize - 1],
                _ => continue,
            };
            for a in 0..2 {
                for b in 0..2 {
                    f[(2 * n + a, 2 * m + b)] = block.get(a, b);
                }
            }
        }
    }
    f
}

/// `U(t) = Σ_n e^{i(n−M)ωt} ⟨n| e^{−iFt} |0⟩`, with the two columns of `e^{−iFt}`
/// on the zero block found by a Chebyshev expansion that only needs block
/// products with the banded Floquet matrix.
fn floquet_unitary(env: &FourierEnvelope, point: &EnsemblePoint, t: f64, n_modes: usize) -> Mat2 {
    if t == 0.0 {
        return Mat2::identity();
    }
    let op = FloquetOperator::new(env, point, n_modes);
    let z = op.radius * t;
    let bessel = bessel_j_series(z, chebyshev_terms(z));
    let modes = op.modes();
    let mut prev = vec![Mat2::zero(); modes];
    prev[n_modes] = Mat2::identity();
    let mut cur = vec![Mat2::zero(); modes];
    op.apply_scaled(&prev, &mut cur);
    let mut next = vec![Mat2::zero(); modes];
    // Σ_k c_k J_k(z) T_k(F/r), c_0 = 1, c_k = 2(−i)^k
    let mut acc: Vec<Mat2> = prev.iter().map(|m| m.scale_re(bessel[0])).collect();
    let mut coeff = C64::new(0.0, -2.0);
    for (k, jk) in bessel.iter().enumerate().skip(1) {
        let c = coeff * jk;
        for (a, v) in acc.iter_mut().zip(&cur) {
            a.axpy_c(c, v);
        }
        if k + 1 < bessel.len() {
            op.apply_scaled(&cur, &mut next);
            for (n, p) in next.iter_mut().zip(&prev) {
                *n = n.scale_re(2.0) - *p;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        coeff *= C64::new(0.0, -1.0);
    }
    let mut u = Mat2::zero();
    for (n, block) in acc.iter().enumerate() {
        let carrier = C64::from_polar(1.0, (n as f64 - n_modes as f64) * op.omega * t);
        u.axpy_c(carrier, block);
    }
    u
}

/// Block-banded Floquet matrix, applied without forming it.
struct FloquetOperator {
    n_modes: usize,
    omega: f64,
    h0: Mat2,
    harmonics: Vec<Mat2>,
    /// Gershgorin bound on the spectral radius.
    radius: f64,
}

impl FloquetOperator {
    fn new(env: &FourierEnvelope, point: &EnsemblePoint, n_modes: usize) -> Self {
        let omega = 2.0 * PI * env.fundamental_hz();
        let harmonics = floquet_harmonics(env, point);
        let off: f64 = harmonics.iter().map(|h| 2.0 * row_sum(h)).sum();
        let radius = n_modes as f64 * omega + PI * point.detuning_hz.abs() + off;
        FloquetOperator {
            n_modes,
            omega,
            h0: Mat2::sigma_z().scale_re(PI * point.detuning_hz),
            harmonics,
            radius,
        }
    }

    fn modes(&self) -> usize {
        2 * self.n_modes + 1
    }

    /// `out = (F / radius) · v` over blocks.
    fn apply_scaled(&self, v: &[Mat2], out: &mut [Mat2]) {
        let inv = 1.0 / self.radius;
        let modes = self.modes();
        for n in 0..modes {
            let shift = (n as f64 - self.n_modes as f64) * self.omega;
            let mut w = self.h0 * v[n] + v[n].scale_re(shift);
            for (j, h) in self.harmonics.iter().enumerate() {
                let d = j + 1;
                if n >= d {
                    w += *h * v[n - d];
                }
                if n + d < modes {
                    w = w - *h * v[n + d];
                }
            }
            out[n] = w.scale_re(inv);
        }
    }
}

fn row_sum(m: &Mat2) -> f64 {
    (0..2)
        .map(|a| m.get(a, 0).norm() + m.get(a, 1).norm())
        .fold(0.0, f64::max)
}

/// `H^(±j) = ∓(i/2) π s (a_j1 σx + a_j2 σy)`; returns the `+j` blocks.
fn floquet_harmonics(env: &FourierEnvelope, point: &EnsemblePoint) -> Vec<Mat2> {
    (1..=env.num_harmonics())
        .map(|j| {
            let p = PauliVec::new(0.0, env.coeffs().get(j, Channel::X), env.coeffs().get(j, Channel::Y), 0.0);
            Mat2::from_pauli(p).scale(C64::new(0.0, -0.5 * PI * point.amplitude_scale))
        })
        .collect()
}

/// Enough Chebyshev terms that `J_K(z)` is far below double precision.
fn chebyshev_terms(z: f64) -> usize {
    (z + 10.0 * z.cbrt() + 30.0).ceil() as usize
}

/// `J_0(z) … J_{n−1}(z)` by Miller's backward recurrence, normalised with
/// `J_0 + 2 Σ J_{2k} = 1`.
fn bessel_j_series(z: f64, n: usize) -> Vec<f64> {
    // start well beyond both the requested order and the turning point k ≈ z
    let start = n.max(z as usize) + 40 + 2 * (z.sqrt() as usize);
    let mut out = vec![0.0; n];
    let (mut above, mut here) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k < n {
            out[k] = here;
        }
        norm += if k == 0 {
            here
        } else if k % 2 == 0 {
            2.0 * here
        } else {
            0.0
        };
        if k == 0 {
            break;
        }
        let below = 2.0 * k as f64 / z * here - above;
        above = here;
        here = below;
        if here.abs() > 1e250 {
            let f = 1e-250;
            for v in out.iter_mut() {
                *v *= f;
            }
            above *= f;
            here *= f;
            norm *= f;
        }
    }
    out.iter().map(|v| v / norm).collect()
}

/// Bloch vectors sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<[f64; 3]>,
}

/// `n_samples` Bloch vectors of `U(t)·initial` for `t` from 0 to the program duration.
pub fn bloch_trajectory(
    program: &ControlProgram,
    point: &EnsemblePoint,
    initial: &[C64; 2],
    n_samples: usize,
) -> Result<BlochTrajectory> {
    if !check_normalized(initial, 1e-9) {
        return Err(Error::domain("initial state is not normalized"));
    }
    if n_samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let total = program.duration_s();
    let mut times = Vec::with_capacity(n_samples);
    let mut vectors = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = total * i as f64 / (n_samples - 1) as f64;
        let u = propagate_timeslice(program, point, t, DEFAULT_SLICES)?;
        times.push(t);
        vectors.push(bloch_vector(&u.apply(initial)));
    }
    Ok(BlochTrajectory { times, vectors })
}

/// `|0⟩`
pub const KET0: [C64; 2] = [ONE, ZERO];
/// `|1⟩`
pub const KET1: [C64; 2] = [ZERO, ONE];
