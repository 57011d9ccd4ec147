//! Target functionals, the power penalty, ensemble averages and fidelity landscapes.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsemblePoint, RobustnessWindow};
use crate::error::{Error, Result};
use crate::gradients::{real_part_scaled, trace_gradient};
use crate::linalg::{check_normalized, Mat2};
use crate::propagation::{propagate_timeslice, UnitaryOp, DEFAULT_SLICES, KET0, KET1};
use crate::pulse::{Coefficients, ControlProgram, FourierEnvelope};

const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec {
    StateTransfer { initial: [C64; 2], target: [C64; 2] },
    Gate { target: UnitaryOp },
}

impl TargetSpec {
    pub fn state_transfer(initial: [C64; 2], target: [C64; 2]) -> Result<Self> {
        if !check_normalized(&initial, NORM_TOL) || !check_normalized(&target, NORM_TOL) {
            return Err(Error::domain("states must be normalized"));
        }
        Ok(TargetSpec::StateTransfer { initial, target })
    }

    /// `|0⟩ → |1⟩`
    pub fn flip() -> Self {
        TargetSpec::StateTransfer {
            initial: KET0,
            target: KET1,
        }
    }

    pub fn gate(target: UnitaryOp) -> Self {
        TargetSpec::Gate { target }
    }

    /// `W` such that the objective is a function of `tr(U W)`.
    fn contraction(&self) -> Mat2 {
        match self {
            TargetSpec::StateTransfer { initial, target } => Mat2::new(
                initial[0] * target[0].conj(),
                initial[0] * target[1].conj(),
                initial[1] * target[0].conj(),
                initial[1] * target[1].conj(),
            ),
            TargetSpec::Gate { target } => target.matrix().adjoint(),
        }
    }

    /// The functional being optimized: `|⟨ψf|U|ψi⟩|²` or `½ Re tr(U U_f†)`.
    pub fn objective(&self, u: &UnitaryOp) -> f64 {
        let a = (*u.matrix() * self.contraction()).trace();
        match self {
            TargetSpec::StateTransfer { .. } => a.norm_sqr(),
            TargetSpec::Gate { .. } => 0.5 * a.re,
        }
    }

    /// Phase-insensitive fidelity in `[0, 1]`: state fidelity, or `|tr(U_f† U)|²/4` for gates.
    pub fn fidelity(&self, u: &UnitaryOp) -> f64 {
        let a = (*u.matrix() * self.contraction()).trace();
        match self {
            TargetSpec::StateTransfer { .. } => a.norm_sqr().min(1.0),
            TargetSpec::Gate { .. } => (0.25 * a.norm_sqr()).min(1.0),
        }
    }
}

/// Objective value with its gradient over the Fourier coefficients (per Hz).
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub gradient: Coefficients,
}

/// `|⟨ψf|U|ψi⟩|²`
pub fn state_fidelity(u: &UnitaryOp, initial: &[C64; 2], target: &[C64; 2]) -> Result<f64> {
    if !check_normalized(initial, NORM_TOL) || !check_normalized(target, NORM_TOL) {
        return Err(Error::domain("states must be normalized"));
    }
    Ok(u.transition_probability(initial, target).min(1.0))
}

/// `½ Re tr(U U_f†)`
pub fn gate_overlap(u: &Mat2, target: &Mat2) -> Result<f64> {
    for m in [u, target] {
        let r = m.unitarity_residual();
        if !(r <= 1e-8) {
            return Err(Error::domain(format!("operator is not unitary (residual {r:e})")));
        }
    }
    Ok((0.5 * (*u * target.adjoint()).trace().re).clamp(-1.0, 1.0))
}

/// `−p Σ a_jk²` and its gradient `−2 p a_jk`; `p` in Hz⁻².
pub fn penalty(env: &FourierEnvelope, p: f64) -> Result<ObjectiveValue> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::domain(format!("penalty weight must be ≥ 0, got {p}")));
    }
    let c = env.coeffs();
    Ok(ObjectiveValue {
        value: -p * c.norm_sqr(),
        gradient: c.scaled(-2.0 * p),
    })
}

/// Objective and gradient at one ensemble point.
pub fn point_objective(
    env: &FourierEnvelope,
    point: &EnsemblePoint,
    target: &TargetSpec,
    n_slices: usize,
) -> Result<ObjectiveValue> {
    let w = target.contraction();
    let (u, gx, gy) = trace_gradient(env, point, n_slices, &w)?;
    let a = (u * w).trace();
    Ok(match target {
        TargetSpec::StateTransfer { .. } => ObjectiveValue {
            value: a.norm_sqr(),
            gradient: real_part_scaled(&gx, &gy, 2.0 * a.conj()),
        },
        TargetSpec::Gate { .. } => ObjectiveValue {
            value: 0.5 * a.re,
            gradient: real_part_scaled(&gx, &gy, C64::new(0.5, 0.0)),
        },
    })
}

/// `Σ w_i 𝓕(point_i) − p Σ a²` over the window, at the default slice count.
pub fn ensemble_objective(
    env: &FourierEnvelope,
    window: &RobustnessWindow,
    target: &TargetSpec,
    p: f64,
) -> Result<ObjectiveValue> {
    let points = window.points()?;
    ensemble_objective_at(env, &points, target, p, DEFAULT_SLICES)
}

/// Weighted objective over explicit points. Points are evaluated in parallel
/// and summed in their given order.
pub fn ensemble_objective_at(
    env: &FourierEnvelope,
    points: &[EnsemblePoint],
    target: &TargetSpec,
    p: f64,
    n_slices: usize,
) -> Result<ObjectiveValue> {
    if points.is_empty() {
        return Err(Error::domain("empty robustness window"));
    }
    let per_point: Vec<ObjectiveValue> = points
        .par_iter()
        .map(|pt| point_objective(env, pt, target, n_slices))
        .collect::<Result<_>>()?;
    let mut total = penalty(env, p)?;
    for (pt, v) in points.iter().zip(&per_point) {
        total.value += pt.weight * v.value;
        total.gradient = total.gradient.offset(pt.weight, &v.gradient);
    }
    if !total.value.is_finite() {
        return Err(Error::Numeric("objective is not finite".into()));
    }
    Ok(total)
}

/// Weighted fidelity of any program over explicit points.
pub fn ensemble_fidelity(
    program: &ControlProgram,
    points: &[EnsemblePoint],
    target: &TargetSpec,
    n_slices: usize,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::domain("empty robustness window"));
    }
    let values: Vec<f64> = points
        .par_iter()
        .map(|pt| {
            let u = propagate_timeslice(program, pt, program.duration_s(), n_slices)?;
            Ok(target.fidelity(&u))
        })
        .collect::<Result<_>>()?;
    Ok(points.iter().zip(&values).map(|(p, v)| p.weight * v).sum())
}

/// Fidelity over a detuning × amplitude grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityLandscape {
    pub detunings: Vec<f64>,
    pub scales: Vec<f64>,
    /// `fidelities[i][j]` at `detunings[i]`, `scales[j]`.
    pub fidelities: Vec<Vec<f64>>,
}

impl FidelityLandscape {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.fidelities[i][j]
    }

    /// Number of cells with infidelity strictly below `threshold`.
    pub fn count_infidelity_below(&self, threshold: f64) -> usize {
        self.fidelities
            .iter()
            .flatten()
            .filter(|f| 1.0 - **f < threshold)
            .count()
    }

    pub fn min(&self) -> f64 {
        self.fidelities.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row-major `(detuning, scale, fidelity)` triples.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.detunings.iter().enumerate().flat_map(move |(i, d)| {
            self.scales
                .iter()
                .enumerate()
                .map(move |(j, s)| (*d, *s, self.fidelities[i][j]))
        })
    }
}

/// Pointwise fidelity on the grid at the default slice count.
pub fn landscape(
    program: &ControlProgram,
    target: &TargetSpec,
    detunings: &[f64],
    scales: &[f64],
) -> Result<FidelityLandscape> {
    landscape_with(program, target, detunings, scales, DEFAULT_SLICES)
}

pub fn landscape_with(
    program: &ControlProgram,
    target: &TargetSpec,
    detunings: &[f64],
    scales: &[f64],
    n_slices: usize,
) -> Result<FidelityLandscape> {
    if detunings.is_empty() || scales.is_empty() {
        return Err(Error::domain("landscape grids must be non-empty"));
    }
    let cells: Vec<(f64, f64)> = detunings
        .iter()
        .flat_map(|d| scales.iter().map(move |s| (*d, *s)))
        .collect();
    let flat: Vec<f64> = cells
        .par_iter()
        .map(|&(d, s)| {
            let pt = EnsemblePoint::new(d, s, 1.0)?;
            let u = propagate_timeslice(program, &pt, program.duration_s(), n_slices)?;
            Ok(target.fidelity(&u))
        })
        .collect::<Result<_>>()?;
    Ok(FidelityLandscape {
        detunings: detunings.to_vec(),
        scales: scales.to_vec(),
        fidelities: flat.chunks(scales.len()).map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::ensemble::linspace;
    use crate::linalg::I;
    use crate::pulse::make_hard_pi;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn state_fidelity_examples() {
        assert_eq!(state_fidelity(&UnitaryOp::pauli_x(), &KET0, &KET1).unwrap(), 1.0);
        assert_eq!(state_fidelity(&UnitaryOp::identity(), &KET0, &KET1).unwrap(), 0.0);
        let half = UnitaryOp::rotation([1.0, 0.0, 0.0], PI / 2.0);
        assert!((state_fidelity(&half, &KET0, &KET1).unwrap() - 0.5).abs() < 1e-15);
        let bad = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(state_fidelity(&half, &bad, &KET1).is_err());
    }

    #[test]
    fn gate_overlap_examples() {
        let u = UnitaryOp::rotation([0.3, 0.2, 0.9], 1.1);
        assert!((gate_overlap(u.matrix(), u.matrix()).unwrap() - 1.0).abs() < 1e-15);
        let iu = u.matrix().scale(I);
        assert!(gate_overlap(&iu, u.matrix()).unwrap().abs() < 1e-15);
        assert_eq!(gate_overlap(&Mat2::sigma_x(), &Mat2::sigma_y()).unwrap(), 0.0);
        assert!(gate_overlap(&Mat2::sigma_x().scale_re(2.0), &Mat2::sigma_y()).is_err());
    }

    #[test]
    fn penalty_examples() {
        let env = FourierEnvelope::zeros(1e-6, 3).unwrap();
        let v = penalty(&env, 1e-12).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.gradient.iter().all(|g| g == 0.0));

        let c = Coefficients { x: vec![2e6], y: vec![0.0] };
        let env = FourierEnvelope::half_period(1e-6, c).unwrap();
        assert!((penalty(&env, 0.5e-12).unwrap().value + 2.0).abs() < 1e-12);
        assert_eq!(penalty(&env, 0.5e-12).unwrap().gradient.x[0], -2.0 * 0.5e-12 * 2e6);
        assert!(penalty(&env, -1.0).is_err());

        let pi = builtin::pi();
        let table: f64 = pi.table_mhz().iter().map(|a| (a * 1e6 * pi.table_scale).powi(2)).sum();
        assert!((penalty(&pi.envelope, 1.0).unwrap().value + table).abs() < 1e-9 * table);
    }

    #[test]
    fn pi_pulse_single_point_and_window() {
        let env = builtin::pi().envelope;
        let v = ensemble_objective(&env, &RobustnessWindow::nominal(), &TargetSpec::flip(), 0.0).unwrap();
        assert!(v.value >= 0.99);
        let v = ensemble_objective(&env, &RobustnessWindow::standard(), &TargetSpec::flip(), 0.0).unwrap();
        assert!(v.value >= 0.98, "{}", v.value);
    }

    #[test]
    fn ensemble_gradient_matches_finite_differences() {
        let env = builtin::pi().envelope.scaled(0.9);
        let pts = RobustnessWindow::standard().points().unwrap();
        let pts: Vec<_> = pts.into_iter().step_by(7).collect();
        let targets = [
            TargetSpec::flip(),
            TargetSpec::gate(UnitaryOp::rotation([1.0, 0.0, 0.0], PI)),
        ];
        for target in targets {
            let p = 1e-15;
            let v = ensemble_objective_at(&env, &pts, &target, p, 256).unwrap();
            let scale = v.gradient.iter().map(f64::abs).fold(0.0, f64::max);
            for (k, j) in [(0usize, 0usize), (1, 3), (0, 9)] {
                let h = 1e3;
                let bump = |d: f64| {
                    let mut c = env.coeffs().clone();
                    if k == 0 { c.x[j] += d } else { c.y[j] += d }
                    let e = env.with_coeffs(c).unwrap();
                    ensemble_objective_at(&e, &pts, &target, p, 256).unwrap().value
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if k == 0 { v.gradient.x[j] } else { v.gradient.y[j] };
                assert!((fd - an).abs() <= 1e-5 * scale, "{fd:e} vs {an:e}");
            }
        }
    }

    #[test]
    fn average_between_extremes() {
        let prog = builtin::pi().program();
        let pts = RobustnessWindow::standard().points().unwrap();
        let avg = ensemble_fidelity(&prog, &pts, &TargetSpec::flip(), 512).unwrap();
        let each: Vec<f64> = pts
            .iter()
            .map(|p| ensemble_fidelity(&prog, &[EnsemblePoint::at(p.detuning_hz, p.amplitude_scale)], &TargetSpec::flip(), 512).unwrap())
            .collect();
        let lo = each.iter().copied().fold(1.0, f64::min);
        let hi = each.iter().copied().fold(0.0, f64::max);
        assert!(lo <= avg && avg <= hi);
        assert!(ensemble_fidelity(&prog, &[], &TargetSpec::flip(), 16).is_err());
    }

    #[test]
    fn hard_pi_landscape() {
        let prog = make_hard_pi(10e6).unwrap();
        let dets = linspace(-10e6, 10e6, 5);
        let l = landscape(&prog, &TargetSpec::flip(), &dets, &[0.8, 1.0]).unwrap();
        assert_eq!(l.fidelities.len(), 5);
        assert_eq!(l.fidelities[0].len(), 2);
        assert!((l.get(4, 1) - 0.3163).abs() < 1e-3);
        for j in 0..2 {
            assert_eq!(l.get(0, j), l.get(4, j));
            assert_eq!(l.get(1, j), l.get(3, j));
        }
        let cells: Vec<_> = l.cells().collect();
        assert_eq!(cells[1], (-10e6, 1.0, l.get(0, 1)));
    }

    #[test]
    fn pi_landscape_examples() {
        let prog = builtin::pi().program();
        let l = landscape_with(&prog, &TargetSpec::flip(), &[0.0], &[1.0], 4096).unwrap();
        assert!(l.get(0, 0) >= 0.99);
        assert!(landscape(&prog, &TargetSpec::flip(), &[], &[1.0]).is_err());
    }

    #[test]
    fn gate_fidelity_is_phase_insensitive() {
        let target = TargetSpec::gate(UnitaryOp::pauli_x());
        let u = UnitaryOp::rotation([1.0, 0.0, 0.0], PI);
        assert!((target.fidelity(&u) - 1.0).abs() < 1e-15);
        assert!(target.objective(&u).abs() < 1e-15);
        let s = FRAC_1_SQRT_2;
        assert!(TargetSpec::state_transfer([C64::new(s, 0.0), C64::new(0.0, s)], KET1).is_ok());
        assert!(TargetSpec::state_transfer([C64::new(1.0, 0.0), C64::new(0.0, 1.0)], KET1).is_err());
    }
}
