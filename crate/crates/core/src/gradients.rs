//! Derivatives of the time-sliced propagator with respect to Fourier coefficients.
//!
//! For `U = U_{n−1} ⋯ U_0` with `U_m = exp(−i H(t_m) dt)` and
//! `∂H/∂a_jk = π s sin(2π j ν t) σ_k`,
//!
//! ```text
//! ∂U/∂a_jk = Σ_m sin(2π j ν t_m) · B_m · D_m^k · F_m
//! ```
//!
//! where `F_m`, `B_m` are the products before and after slice `m` and `D_m^k`
//! is the directional derivative of the slice exponential along `π s σ_k`.
//! This is exact for the discretised propagator, so it can be checked against
//! central differences of [`propagate_timeslice`] to high accuracy.

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;

use crate::ensemble::EnsemblePoint;
use crate::error::{Error, Result};
use crate::linalg::{expm_frechet, expm_herm, Mat2, PauliVec, ZERO};
use crate::propagation::{propagate_timeslice, UnitaryOp, DEFAULT_SLICES};
use crate::pulse::{Channel, Coefficients, ControlProgram, FourierEnvelope, Segment};

/// `∂U/∂a_jk` for every harmonic `j` and channel `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub x: Vec<Mat2>,
    pub y: Vec<Mat2>,
}

impl GradientSet {
    fn zeros(n: usize) -> Self {
        GradientSet {
            x: vec![Mat2::zero(); n],
            y: vec![Mat2::zero(); n],
        }
    }

    pub fn num_harmonics(&self) -> usize {
        self.x.len()
    }

    pub fn channel(&self, k: Channel) -> &[Mat2] {
        match k {
            Channel::X => &self.x,
            Channel::Y => &self.y,
        }
    }

    fn channel_mut(&mut self, k: Channel) -> &mut [Mat2] {
        match k {
            Channel::X => &mut self.x,
            Channel::Y => &mut self.y,
        }
    }

    /// Derivative with respect to `a_jk`, `j` 1-based.
    pub fn get(&self, j: usize, k: Channel) -> &Mat2 {
        &self.channel(k)[j - 1]
    }

    /// `max |a − b| / max |a|` over all entries.
    pub fn relative_deviation(&self, other: &GradientSet) -> f64 {
        let pairs = self.x.iter().zip(&other.x).chain(self.y.iter().zip(&other.y));
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for (a, b) in pairs {
            diff = diff.max((*a - *b).max_abs());
            scale = scale.max(a.max_abs());
        }
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// How each slice derivative `D_m^k` is obtained.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum GradientEngine {
    /// Closed-form Fréchet derivative of the SU(2) exponential.
    #[default]
    Frechet,
    /// Upper-right block of `exp(−i [[H, E], [0, H]] dt)`, by a general 4×4 exponential.
    BlockAugmented,
}

/// Finite-difference step for [`finite_diff_gradient`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum FdStep {
    /// Same step in Hz for every coefficient.
    Absolute(f64),
    /// `1e-3 · max(|a_jk|, 1 kHz)` per coefficient.
    Relative,
}

/// `∂U(t)/∂a_jk` at the default slice count.
pub fn gradient_unitary(env: &FourierEnvelope, point: &EnsemblePoint, t: f64) -> Result<GradientSet> {
    gradient_unitary_with(env, point, t, DEFAULT_SLICES, GradientEngine::Frechet)
}

pub fn gradient_unitary_with(
    env: &FourierEnvelope,
    point: &EnsemblePoint,
    t: f64,
    n_slices: usize,
    engine: GradientEngine,
) -> Result<GradientSet> {
    let slices = Slices::new(env, point, t, n_slices)?;
    let n = env.num_harmonics();
    let mut out = GradientSet::zeros(n);
    let forward = slices.prefixes();
    let mut back = Mat2::identity();
    let mut basis = vec![0.0; n];
    for m in (0..slices.len()).rev() {
        env.basis_values(slices.time(m), &mut basis);
        for k in Channel::BOTH {
            let d = slices.derivative(m, k, engine);
            let p = back * d * forward[m];
            for (g, b) in out.channel_mut(k).iter_mut().zip(&basis) {
                g.axpy(*b, &p);
            }
        }
        back = back * slices.unitary(m);
    }
    Ok(out)
}

/// Central differences of [`propagate_timeslice`].
pub fn finite_diff_gradient(
    env: &FourierEnvelope,
    point: &EnsemblePoint,
    t: f64,
    step: FdStep,
    n_slices: usize,
) -> Result<GradientSet> {
    if let FdStep::Absolute(h) = step {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("finite-difference step must be positive, got {h}")));
        }
    }
    let n = env.num_harmonics();
    let mut out = GradientSet::zeros(n);
    for k in Channel::BOTH {
        for j in 0..n {
            let a = env.coeffs().channel(k)[j];
            let h = match step {
                FdStep::Absolute(h) => h,
                FdStep::Relative => default_step(a),
            };
            let shifted = |delta: f64| -> Result<UnitaryOp> {
                let mut c = env.coeffs().clone();
                c.channel_mut(k)[j] = a + delta;
                let prog = ControlProgram::single(env.with_coeffs(c)?);
                propagate_timeslice(&prog, point, t, n_slices)
            };
            let plus = shifted(h)?;
            let minus = shifted(-h)?;
            out.channel_mut(k)[j] = (*plus.matrix() - *minus.matrix()).scale_re(0.5 / h);
        }
    }
    Ok(out)
}

/// `1e-3 · max(|a|, 1 kHz)`
pub fn default_step(a: f64) -> f64 {
    1e-3 * a.abs().max(1e3)
}

/// Propagator together with the gradient of `tr(U·W)` for a fixed 2×2 `W`.
///
/// This is what objectives need: state amplitudes `⟨ψf|U|ψi⟩ = tr(U |ψi⟩⟨ψf|)`
/// and gate overlaps `tr(U U_f†)` are both of this form, and the trace lets
/// the per-coefficient sum collapse to scalars.
pub(crate) fn trace_gradient(
    env: &FourierEnvelope,
    point: &EnsemblePoint,
    n_slices: usize,
    w: &Mat2,
) -> Result<(Mat2, Vec<C64>, Vec<C64>)> {
    let slices = Slices::new(env, point, env.duration_s(), n_slices)?;
    let n = env.num_harmonics();
    let forward = slices.prefixes();
    let total = slices.unitary(slices.len() - 1) * forward[slices.len() - 1];
    let (mut gx, mut gy) = (vec![ZERO; n], vec![ZERO; n]);
    let mut back = Mat2::identity();
    let mut basis = vec![0.0; n];
    for m in (0..slices.len()).rev() {
        env.basis_values(slices.time(m), &mut basis);
        // tr(B D F W) = tr(D · F W B)
        let inner = forward[m] * *w * back;
        for (k, g) in [(Channel::X, &mut gx), (Channel::Y, &mut gy)] {
            let d = slices.derivative(m, k, GradientEngine::Frechet);
            let c = (d * inner).trace();
            for (gj, b) in g.iter_mut().zip(&basis) {
                *gj += c * *b;
            }
        }
        back = back * slices.unitary(m);
    }
    Ok((total, gx, gy))
}

/// Midpoint slices of one envelope on `[0, t]`.
struct Slices {
    dt: f64,
    drive: f64,
    hams: Vec<PauliVec>,
    unitaries: Vec<Mat2>,
}

impl Slices {
    fn new(env: &FourierEnvelope, point: &EnsemblePoint, t: f64, n_slices: usize) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::domain("n_slices must be ≥ 1"));
        }
        let prog = ControlProgram::single(env.clone());
        prog.check_time(t)?;
        let seg = Segment::Fourier(env.clone());
        let dt = t.max(0.0) / n_slices as f64;
        let hams: Vec<PauliVec> = (0..n_slices)
            .map(|m| seg.hamiltonian((m as f64 + 0.5) * dt, point))
            .collect();
        let unitaries = hams.iter().map(|h| expm_herm(*h, dt)).collect();
        Ok(Slices {
            dt,
            drive: std::f64::consts::PI * point.amplitude_scale,
            hams,
            unitaries,
        })
    }

    fn len(&self) -> usize {
        self.hams.len()
    }

    fn time(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dt
    }

    fn unitary(&self, m: usize) -> Mat2 {
        self.unitaries[m]
    }

    /// `F_m = U_{m−1} ⋯ U_0`
    fn prefixes(&self) -> Vec<Mat2> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = Mat2::identity();
        for u in &self.unitaries {
            out.push(acc);
            acc = *u * acc;
        }
        out
    }

    fn derivative(&self, m: usize, k: Channel, engine: GradientEngine) -> Mat2 {
        let e = match k {
            Channel::X => PauliVec::new(0.0, self.drive, 0.0, 0.0),
            Channel::Y => PauliVec::new(0.0, 0.0, self.drive, 0.0),
        };
        match engine {
            GradientEngine::Frechet => expm_frechet(self.hams[m], e, self.dt),
            GradientEngine::BlockAugmented => block_augmented(self.hams[m], e, self.dt),
        }
    }
}

fn block_augmented(h: PauliVec, e: PauliVec, dt: f64) -> Mat2 {
    let hm = Mat2::from_pauli(h);
    let em = Mat2::from_pauli(e);
    let scale = C64::new(0.0, -dt);
    let mut big = Matrix4::<C64>::zeros();
    for a in 0..2 {
        for b in 0..2 {
            big[(a, b)] = hm.get(a, b) * scale;
            big[(a + 2, b + 2)] = hm.get(a, b) * scale;
            big[(a, b + 2)] = em.get(a, b) * scale;
        }
    }
    let ex = big.exp();
    Mat2::new(ex[(0, 2)], ex[(0, 3)], ex[(1, 2)], ex[(1, 3)])
}

/// Real gradient from the complex per-coefficient values, `Re(c · g_jk)`.
pub(crate) fn real_part_scaled(gx: &[C64], gy: &[C64], c: C64) -> Coefficients {
    Coefficients {
        x: gx.iter().map(|g| (c * g).re).collect(),
        y: gy.iter().map(|g| (c * g).re).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::linalg::I;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_env(rng: &mut ChaCha8Rng, n: usize, duration: f64) -> FourierEnvelope {
        let mut draw = || (0..n).map(|_| rng.random_range(-3e6..3e6)).collect::<Vec<f64>>();
        let c = Coefficients { x: draw(), y: draw() };
        FourierEnvelope::half_period(duration, c).unwrap()
    }

    #[test]
    fn zero_pulse_first_order_integral() {
        let env = FourierEnvelope::zeros(500e-9, 2).unwrap();
        let t = env.duration_s();
        let g = gradient_unitary(&env, &EnsemblePoint::nominal(), t).unwrap();
        // ∫₀ᵀ sin(2πνt) dt = 1/(πν) for ν = 1/(2T)
        let integral = 1.0 / (PI * env.fundamental_hz());
        let expected = Mat2::sigma_x().scale(-I * PI * integral);
        assert!((*g.get(1, Channel::X) - expected).max_abs() < 1e-6 * expected.max_abs());
        let expected_y = Mat2::sigma_y().scale(-I * PI * integral);
        assert!((*g.get(1, Channel::Y) - expected_y).max_abs() < 1e-6 * expected_y.max_abs());
        // second harmonic integrates to zero over [0, T]
        assert!(g.get(2, Channel::X).max_abs() < 1e-9 * expected.max_abs());
    }

    #[test]
    fn zero_time_gives_zero_gradient() {
        let env = FourierEnvelope::zeros(500e-9, 3).unwrap();
        let g = finite_diff_gradient(&env, &EnsemblePoint::nominal(), 0.0, FdStep::Relative, 16).unwrap();
        assert!(g.x.iter().chain(&g.y).all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn analytic_matches_finite_differences_on_pi() {
        let env = builtin::pi().envelope;
        for p in [EnsemblePoint::nominal(), EnsemblePoint::at(3e6, 0.8)] {
            let a = gradient_unitary_with(&env, &p, env.duration_s(), 512, GradientEngine::Frechet).unwrap();
            let f = finite_diff_gradient(&env, &p, env.duration_s(), FdStep::Relative, 512).unwrap();
            let dev = a.relative_deviation(&f);
            assert!(dev < 1e-5, "{dev:e}");
        }
    }

    #[test]
    fn engines_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = random_env(&mut rng, 4, 300e-9);
        let p = EnsemblePoint::at(-2e6, 1.2);
        let a = gradient_unitary_with(&env, &p, 2e-7, 128, GradientEngine::Frechet).unwrap();
        let b = gradient_unitary_with(&env, &p, 2e-7, 128, GradientEngine::BlockAugmented).unwrap();
        assert!(a.relative_deviation(&b) < 1e-12);
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let env = builtin::pi2_y().envelope;
        let p = EnsemblePoint::nominal();
        let t = env.duration_s();
        let a = gradient_unitary_with(&env, &p, t, 256, GradientEngine::Frechet).unwrap();
        let err = |h: f64| {
            let f = finite_diff_gradient(&env, &p, t, FdStep::Absolute(h), 256).unwrap();
            a.relative_deviation(&f)
        };
        let ratio = err(4e4) / err(2e4);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn tangent_to_unitary_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let env = random_env(&mut rng, 6, 400e-9);
        let p = EnsemblePoint::at(1e6, 0.9);
        let u = propagate_timeslice(&ControlProgram::single(env.clone()), &p, 400e-9, 1024).unwrap();
        let g = gradient_unitary_with(&env, &p, 400e-9, 1024, GradientEngine::Frechet).unwrap();
        let ud = u.matrix().adjoint();
        for d in g.x.iter().chain(&g.y) {
            let sym = ud * *d + d.adjoint() * *u.matrix();
            assert!(sym.max_abs() <= 1e-8 * d.max_abs().max(1e-12) + 1e-15);
        }
    }

    #[test]
    fn zero_pulse_channels_related_by_pauli_swap() {
        let env = FourierEnvelope::zeros(250e-9, 3).unwrap();
        let p = EnsemblePoint::at(1.5e6, 1.0);
        let g = gradient_unitary_with(&env, &p, 250e-9, 256, GradientEngine::Frechet).unwrap();
        // Rotating by π/2 about z maps σx to σy and commutes with the drift.
        let r = expm_herm(PauliVec::new(0.0, 0.0, 0.0, 1.0), PI / 4.0);
        for j in 1..=3 {
            let mapped = r * *g.get(j, Channel::X) * r.adjoint();
            assert!((mapped - *g.get(j, Channel::Y)).max_abs() < 1e-12 * g.get(j, Channel::Y).max_abs().max(1.0));
        }
    }

    #[test]
    fn trace_gradient_contracts_full_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env = random_env(&mut rng, 5, 500e-9);
        let p = EnsemblePoint::at(-1e6, 1.1);
        let w = Mat2::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.7, 0.0), C64::new(0.1, -0.4));
        let (u, gx, gy) = trace_gradient(&env, &p, 300, &w).unwrap();
        let full = gradient_unitary_with(&env, &p, 500e-9, 300, GradientEngine::Frechet).unwrap();
        let direct = propagate_timeslice(&ControlProgram::single(env.clone()), &p, 500e-9, 300).unwrap();
        assert!((u - *direct.matrix()).max_abs() < 1e-13);
        for j in 0..5 {
            let ex = (full.x[j] * w).trace();
            let ey = (full.y[j] * w).trace();
            assert!((gx[j] - ex).norm() <= 1e-12 * ex.norm().max(1e-9));
            assert!((gy[j] - ey).norm() <= 1e-12 * ey.norm().max(1e-9));
        }
    }

    #[test]
    fn invalid_step_rejected() {
        let env = FourierEnvelope::zeros(1e-7, 1).unwrap();
        let r = finite_diff_gradient(&env, &EnsemblePoint::nominal(), 1e-7, FdStep::Absolute(0.0), 4);
        assert!(r.is_err());
    }
}
