//! Simulated single-qubit process tomography.
//!
//! Inputs `|0⟩, |1⟩, |+⟩ = (|0⟩+|1⟩)/√2, |−⟩ = (|0⟩+i|1⟩)/√2` are sent through
//! the process and read out in the three Pauli bases. The χ matrix is
//! expressed in the operator basis `A = {I, σx, −iσy, σz}`:
//!
//! ```text
//! 𝓔(ρ) = Σ_mn χ_mn A_m ρ A_n†
//! ```

use std::f64::consts::PI;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsemblePoint;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, I, ONE, ZERO};
use crate::minimize::{bfgs, BfgsOptions};
use crate::propagation::{propagate, propagate_timeslice, UnitaryOp};
use crate::pulse::{ConstantEnvelope, ControlProgram};

pub const BASIS_LABELS: [&str; 4] = ["I", "X", "-iY", "Z"];

/// The operator basis `{I, σx, −iσy, σz}`.
pub fn basis() -> [Mat2; 4] {
    [
        Mat2::identity(),
        Mat2::sigma_x(),
        Mat2::sigma_y().scale(-I),
        Mat2::sigma_z(),
    ]
}

/// 4×4 process matrix in the basis [`basis`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ChiMatrix(pub Matrix4<C64>);

impl ChiMatrix {
    pub fn from_parts(re: &[[f64; 4]; 4], im: &[[f64; 4]; 4]) -> Self {
        ChiMatrix(Matrix4::from_fn(|r, c| C64::new(re[r][c], im[r][c])))
    }

    /// χ of the unitary channel `ρ ↦ UρU†`.
    pub fn from_unitary(u: &UnitaryOp) -> Self {
        let a = basis();
        // U = Σ c_m A_m with c_m = tr(A_m† U)/2, so χ = c c†.
        let c: Vec<C64> = a.iter().map(|am| 0.5 * (am.adjoint() * *u.matrix()).trace()).collect();
        ChiMatrix(Matrix4::from_fn(|m, n| c[m] * c[n].conj()))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        let a = basis();
        let mut out = Mat2::zero();
        for m in 0..4 {
            for n in 0..4 {
                let c = self.0[(m, n)];
                if c != ZERO {
                    out += (a[m] * *rho * a[n].adjoint()).scale(c);
                }
            }
        }
        out
    }

    /// `‖Σ_mn χ_mn A_n† A_m − I‖_max`
    pub fn trace_preservation_residual(&self) -> f64 {
        trace_map(&self.0).max_abs()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let e = SymmetricEigen::new(hermitian_part(&self.0)).eigenvalues;
        let mut v = [e[0], e[1], e[2], e[3]];
        v.sort_by(f64::total_cmp);
        v
    }
}

/// `Σ_mn χ_mn A_n† A_m − I`
fn trace_map(chi: &Matrix4<C64>) -> Mat2 {
    let a = basis();
    let mut out = Mat2::identity().scale_re(-1.0);
    for m in 0..4 {
        for n in 0..4 {
            out += (a[n].adjoint() * a[m]).scale(chi[(m, n)]);
        }
    }
    out
}

fn hermitian_part(m: &Matrix4<C64>) -> Matrix4<C64> {
    (m + m.adjoint()).scale(0.5)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    Exact,
    Sampled(u64),
}

/// How state preparation and readout rotations are realised.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepReadout {
    Ideal,
    /// Rectangular pulses at this Rabi frequency, subject to the same (δ, s) as the process.
    Rectangular { rabi_hz: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyConfig {
    pub shots: Shots,
    pub seed: u64,
    pub prep_readout: PrepReadout,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            shots: Shots::Exact,
            seed: 0,
            prep_readout: PrepReadout::Ideal,
        }
    }
}

/// Process under test.
#[derive(Clone, Debug)]
pub enum Process {
    Unitary(UnitaryOp),
    Program { program: ControlProgram, point: EnsemblePoint },
}

impl Process {
    fn unitary(&self) -> Result<UnitaryOp> {
        match self {
            Process::Unitary(u) => Ok(*u),
            Process::Program { program, point } => propagate(program, point),
        }
    }

    fn point(&self) -> EnsemblePoint {
        match self {
            Process::Unitary(_) => EnsemblePoint::nominal(),
            Process::Program { point, .. } => *point,
        }
    }
}

/// Pauli expectations and reconstructed output states for the four inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TomographyData {
    /// `[⟨σx⟩, ⟨σy⟩, ⟨σz⟩]` per input, in the order |0⟩, |1⟩, |+⟩, |−⟩.
    pub expectations: [[f64; 3]; 4],
    pub outputs: [Mat2; 4],
}

/// A rotation `exp(−i θ/2 σ_φ)` in the xy-plane, ideal or rectangular.
fn xy_rotation(mode: PrepReadout, point: &EnsemblePoint, phase: f64, angle: f64) -> Result<Mat2> {
    match mode {
        PrepReadout::Ideal => Ok(*UnitaryOp::rotation([phase.cos(), phase.sin(), 0.0], angle).matrix()),
        PrepReadout::Rectangular { rabi_hz } => {
            let seg = ConstantEnvelope::rotation(rabi_hz, phase, angle)?;
            let prog = ControlProgram::single(seg);
            Ok(*propagate_timeslice(&prog, point, prog.duration_s(), 1)?.matrix())
        }
    }
}

pub fn simulate_tomography(process: &Process, config: &TomographyConfig) -> Result<TomographyData> {
    if let Shots::Sampled(0) = config.shots {
        return Err(Error::domain("shots must be ≥ 1"));
    }
    let u = *process.unitary()?.matrix();
    let pt = process.point();
    let mode = config.prep_readout;
    let ket0 = [ONE, ZERO];
    let preps = [
        Mat2::identity(),
        xy_rotation(mode, &pt, 0.0, PI)?,
        xy_rotation(mode, &pt, PI / 2.0, PI / 2.0)?,
        xy_rotation(mode, &pt, 0.0, -PI / 2.0)?,
    ];
    // bring the x and y eigenbases onto z before measuring
    let readout = [
        xy_rotation(mode, &pt, PI / 2.0, -PI / 2.0)?,
        xy_rotation(mode, &pt, 0.0, PI / 2.0)?,
        Mat2::identity(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut expectations = [[0.0; 3]; 4];
    for (i, prep) in preps.iter().enumerate() {
        let psi = (u * *prep).apply(&ket0);
        for (axis, r) in readout.iter().enumerate() {
            let out = r.apply(&psi);
            let p0 = out[0].norm_sqr().clamp(0.0, 1.0);
            expectations[i][axis] = match config.shots {
                Shots::Exact => 2.0 * p0 - 1.0,
                Shots::Sampled(n) => {
                    let k = Binomial::new(n, p0)
                        .map_err(|e| Error::Numeric(format!("binomial sampling: {e}")))?
                        .sample(&mut rng);
                    2.0 * k as f64 / n as f64 - 1.0
                }
            };
        }
    }
    let outputs = expectations.map(|[x, y, z]| {
        Mat2::from_pauli(crate::linalg::PauliVec::new(0.5, 0.5 * x, 0.5 * y, 0.5 * z))
    });
    Ok(TomographyData { expectations, outputs })
}

/// χ from the four output states for inputs |0⟩, |1⟩, |+⟩, |−⟩.
///
/// The off-diagonal images are `𝓔(|0⟩⟨1|) = 𝓔(ρ+) + i𝓔(ρ−) − (1+i)(ρ'₁+ρ'₄)/2` and
/// `𝓔(|1⟩⟨0|) = 𝓔(ρ+) − i𝓔(ρ−) − (1−i)(ρ'₁+ρ'₄)/2`; then `χ = ¼ Λ R Λ`
/// with `R = [[ρ'₁, ρ'₂], [ρ'₃, ρ'₄]]` and `Λ = [[I, σx], [σx, −I]]`.
pub fn reconstruct_chi(outputs: &[Mat2; 4]) -> ChiMatrix {
    let [r1, r4, rp, rm] = *outputs;
    let diag = r1 + r4;
    let r2 = rp + rm.scale(I) - diag.scale(C64::new(0.5, 0.5));
    let r3 = rp - rm.scale(I) - diag.scale(C64::new(0.5, -0.5));
    let mut big = Matrix4::<C64>::zeros();
    for (br, bc, blk) in [(0, 0, r1), (0, 1, r2), (1, 0, r3), (1, 1, r4)] {
        for a in 0..2 {
            for b in 0..2 {
                big[(2 * br + a, 2 * bc + b)] = blk.get(a, b);
            }
        }
    }
    let lambda = Matrix4::from_fn(|r, c| {
        let (br, bc, a, b) = (r / 2, c / 2, r % 2, c % 2);
        let x = if a != b { ONE } else { ZERO };
        let i = if a == b { ONE } else { ZERO };
        match (br, bc) {
            (0, 0) => i,
            (1, 1) => -i,
            _ => x,
        }
    });
    ChiMatrix((lambda * big * lambda).scale(0.25))
}

/// `ρ_𝓔 = ½ Σ_ij 𝓔(|i⟩⟨j|) ⊗ |i⟩⟨j|`
pub fn process_density_matrix(chi: &ChiMatrix) -> Matrix4<C64> {
    let mut out = Matrix4::<C64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let mut eij = Mat2::zero();
            eij.set(i, j, ONE);
            let img = chi.apply(&eij);
            for a in 0..2 {
                for b in 0..2 {
                    out[(2 * a + i, 2 * b + j)] += 0.5 * img.get(a, b);
                }
            }
        }
    }
    out
}

/// `⟨ψ|ρ_𝓔|ψ⟩` without clamping, with `|ψ⟩ = Σ_j U|j⟩ ⊗ |j⟩ / √2`.
pub fn process_fidelity_unclamped(chi: &ChiMatrix, ideal: &UnitaryOp) -> f64 {
    let rho = process_density_matrix(chi);
    let u = ideal.matrix();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi: Vec<C64> = (0..4).map(|idx| u.get(idx / 2, idx % 2) * s).collect();
    let mut acc = ZERO;
    for r in 0..4 {
        for c in 0..4 {
            acc += psi[r].conj() * rho[(r, c)] * psi[c];
        }
    }
    acc.re
}

/// Process fidelity clamped to `[0, 1]`; the flag is set when clamping changed the value.
pub fn process_fidelity(chi: &ChiMatrix, ideal: &UnitaryOp) -> (f64, bool) {
    let f = process_fidelity_unclamped(chi, ideal);
    let c = f.clamp(0.0, 1.0);
    (c, c != f)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalityReport {
    pub chi_physical: ChiMatrix,
    /// `½ Σ |eig(χ − χ̃)|`
    pub trace_distance: f64,
    pub frobenius: f64,
    pub constraint_residual: f64,
    /// Index of the winning start.
    pub start: usize,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub starts: usize,
    pub seed: u64,
    pub lambdas: [f64; 5],
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            starts: 8,
            seed: 0,
            lambdas: [1e2, 1e3, 1e4, 1e5, 1e6],
        }
    }
}

const CONSTRAINT_TOL: f64 = 1e-6;

pub fn project_physical(chi: &ChiMatrix) -> Result<PhysicalityReport> {
    project_physical_with(chi, &ProjectionConfig::default())
}

/// Nearest `χ̃ = T†T` (T lower triangular) to `χ` under trace preservation,
/// by penalised least squares with multi-start BFGS.
pub fn project_physical_with(chi: &ChiMatrix, cfg: &ProjectionConfig) -> Result<PhysicalityReport> {
    let h = chi.hermiticity_residual();
    if h > 1e-6 {
        return Err(Error::domain(format!("χ is not Hermitian (residual {h:e})")));
    }
    if cfg.starts == 0 {
        return Err(Error::domain("need at least one start"));
    }
    let target = hermitian_part(&chi.0);
    let t0 = cholesky_start(&target);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let starts: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|s| {
            if s == 0 {
                t0.clone()
            } else {
                t0.iter().map(|v| v + noise.sample(&mut rng)).collect()
            }
        })
        .collect();
    let results: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|mut x| {
            for &lambda in &cfg.lambdas {
                let obj = |p: &[f64], g: &mut [f64]| objective(p, &target, lambda, g);
                x = bfgs(obj, x, BfgsOptions::default()).x;
            }
            let chi_t = chi_from_params(&x);
            let delta = frobenius_sq(&(chi_t - target));
            (x, delta)
        })
        .collect();
    // lowest Δ among starts meeting the constraint; ties go to the lowest index
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, (x, delta)) in results.iter().enumerate() {
        let residual = trace_map(&chi_from_params(x)).max_abs();
        if residual > CONSTRAINT_TOL {
            continue;
        }
        if best.is_none_or(|(_, d, _)| *delta < d) {
            best = Some((i, *delta, residual));
        }
    }
    let (idx, _, residual) = best.ok_or_else(|| {
        Error::Convergence("no start reached the trace-preservation tolerance".into())
    })?;
    let chi_t = chi_from_params(&results[idx].0);
    let diff = chi.0 - chi_t;
    let eig = SymmetricEigen::new(hermitian_part(&diff)).eigenvalues;
    Ok(PhysicalityReport {
        chi_physical: ChiMatrix(chi_t),
        trace_distance: 0.5 * eig.iter().map(|e| e.abs()).sum::<f64>(),
        frobenius: frobenius_sq(&diff).sqrt(),
        constraint_residual: residual,
        start: idx,
    })
}

fn frobenius_sq(m: &Matrix4<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real/imaginary slots of `T`: diagonal first, then the sub-diagonals.
const DIAG: [usize; 4] = [0, 1, 2, 3];
const OFF: [(usize, usize); 6] = [(1, 0), (2, 1), (3, 2), (2, 0), (3, 1), (3, 0)];

fn t_from_params(p: &[f64]) -> Matrix4<C64> {
    let mut t = Matrix4::<C64>::zeros();
    for (k, &d) in DIAG.iter().enumerate() {
        t[(d, d)] = C64::new(p[k], 0.0);
    }
    for (k, &(r, c)) in OFF.iter().enumerate() {
        t[(r, c)] = C64::new(p[4 + 2 * k], p[5 + 2 * k]);
    }
    t
}

fn chi_from_params(p: &[f64]) -> Matrix4<C64> {
    let t = t_from_params(p);
    t.adjoint() * t
}

/// `Δ + λ‖M‖²_F` and its gradient over the 16 parameters.
fn objective(p: &[f64], target: &Matrix4<C64>, lambda: f64, grad: &mut [f64]) -> f64 {
    let t = t_from_params(p);
    let chi_t = t.adjoint() * t;
    let r = chi_t - target;
    let m = trace_map(&chi_t);
    let a = basis();
    // K_mn = conj(tr(M† A_n† A_m))
    let md = m.adjoint();
    let k = Matrix4::from_fn(|mi, ni| (md * a[ni].adjoint() * a[mi]).trace().conj());
    let h = r.scale(2.0) + (k + k.adjoint()).scale(lambda);
    let ht = h * t.adjoint();
    for (kk, &d) in DIAG.iter().enumerate() {
        grad[kk] = 2.0 * ht[(d, d)].re;
    }
    for (kk, &(row, col)) in OFF.iter().enumerate() {
        let v = ht[(col, row)];
        grad[4 + 2 * kk] = 2.0 * v.re;
        grad[5 + 2 * kk] = -2.0 * v.im;
    }
    let mm: f64 = m.0.iter().map(|z| z.norm_sqr()).sum();
    frobenius_sq(&r) + lambda * mm
}

/// Parameters of `T = J L† J`, where `L L† = J χ₊ J` and `χ₊` is `χ` with negative eigenvalues clipped.
fn cholesky_start(chi: &Matrix4<C64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(*chi);
    let clipped = eig.eigenvalues.map(|e| e.max(0.0) + 1e-10);
    let v = eig.eigenvectors;
    let plus = v * Matrix4::from_diagonal(&clipped.map(|e| C64::new(e, 0.0))) * v.adjoint();
    let j = Matrix4::from_fn(|r, c| if r + c == 3 { ONE } else { ZERO });
    let flipped = hermitian_part(&(j * plus * j));
    let l = nalgebra::Cholesky::new(flipped)
        .map(|c| c.l())
        .unwrap_or_else(Matrix4::identity);
    let t = j * l.adjoint() * j;
    let mut p = vec![0.0; 16];
    for (k, &d) in DIAG.iter().enumerate() {
        p[k] = t[(d, d)].re;
    }
    for (k, &(r, c)) in OFF.iter().enumerate() {
        p[4 + 2 * k] = t[(r, c)].re;
        p[5 + 2 * k] = t[(r, c)].im;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    fn exact(u: UnitaryOp) -> ChiMatrix {
        let data = simulate_tomography(&Process::Unitary(u), &TomographyConfig::default()).unwrap();
        reconstruct_chi(&data.outputs)
    }

    fn single(idx: usize) -> Matrix4<C64> {
        Matrix4::from_fn(|r, c| if r == idx && c == idx { ONE } else { ZERO })
    }

    #[test]
    fn identity_tomography_returns_inputs() {
        let data = simulate_tomography(&Process::Unitary(UnitaryOp::identity()), &TomographyConfig::default()).unwrap();
        let e0 = data.expectations[0];
        assert!(e0[0].abs() < 1e-15 && e0[1].abs() < 1e-15 && (e0[2] - 1.0).abs() < 1e-15);
        assert!((data.expectations[1][2] + 1.0).abs() < 1e-15);
        assert!((data.expectations[2][0] - 1.0).abs() < 1e-15);
        assert!((data.expectations[3][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_x_maps_states() {
        let data = simulate_tomography(&Process::Unitary(UnitaryOp::pauli_x()), &TomographyConfig::default()).unwrap();
        assert!((data.expectations[0][2] + 1.0).abs() < 1e-15);
        assert!((data.expectations[2][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chi_of_identity_and_sigma_x() {
        let chi = exact(UnitaryOp::identity());
        assert!((chi.0 - single(0)).iter().all(|z| z.norm() < 1e-14));
        let chi = exact(UnitaryOp::pauli_x());
        assert!((chi.0 - single(1)).iter().all(|z| z.norm() < 1e-14));
        let chi = exact(UnitaryOp::rotation([1.0, 0.0, 0.0], PI));
        assert!((chi.0 - single(1)).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn round_trip_for_random_unitaries() {
        for (axis, angle) in [([0.3, -0.5, 0.8], 1.3), ([1.0, 1.0, 0.0], 2.9), ([0.0, 0.2, 1.0], -0.4)] {
            let u = UnitaryOp::rotation(axis, angle);
            let chi = exact(u);
            assert!(chi.trace_preservation_residual() < 1e-9);
            assert!(chi.hermiticity_residual() < 1e-9);
            assert!((process_fidelity_unclamped(&chi, &u) - 1.0).abs() < 1e-9);
            let direct = ChiMatrix::from_unitary(&u);
            assert!((chi.0 - direct.0).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn density_matrix_examples() {
        let rho = process_density_matrix(&ChiMatrix::from_unitary(&UnitaryOp::pauli_x()));
        for r in 0..4 {
            for c in 0..4 {
                let expected = if (1..=2).contains(&r) && (1..=2).contains(&c) { 0.5 } else { 0.0 };
                assert!((rho[(r, c)] - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
        let rho = process_density_matrix(&ChiMatrix::from_unitary(&UnitaryOp::identity()));
        assert!((rho[(0, 3)].re - 0.5).abs() < 1e-15 && (rho[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
        let ident = ChiMatrix::from_unitary(&UnitaryOp::identity());
        assert!(process_fidelity(&ident, &UnitaryOp::pauli_x()).0.abs() < 1e-15);
    }

    #[test]
    fn sampled_expectations_concentrate() {
        let p = Process::Program { program: builtin::pi_x().program(), point: EnsemblePoint::nominal() };
        let exact = simulate_tomography(&p, &TomographyConfig::default()).unwrap();
        let shots = 10_000_000u64;
        let cfg = TomographyConfig { shots: Shots::Sampled(shots), seed: 7, ..Default::default() };
        let sampled = simulate_tomography(&p, &cfg).unwrap();
        let bound = 4.0 / (shots as f64).sqrt();
        for (a, b) in exact.expectations.iter().flatten().zip(sampled.expectations.iter().flatten()) {
            assert!((a - b).abs() <= bound, "{a} {b}");
        }
        assert_eq!(sampled, simulate_tomography(&p, &cfg).unwrap());
    }

    #[test]
    fn rectangular_prep_is_ideal_on_resonance() {
        let u = UnitaryOp::rotation([1.0, 0.0, 0.0], PI);
        let cfg = TomographyConfig { prep_readout: PrepReadout::Rectangular { rabi_hz: 20e6 }, ..Default::default() };
        let data = simulate_tomography(&Process::Unitary(u), &cfg).unwrap();
        let chi = reconstruct_chi(&data.outputs);
        assert!((process_fidelity_unclamped(&chi, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_fixed_point() {
        let chi = ChiMatrix::from_unitary(&UnitaryOp::rotation([1.0, 0.0, 0.0], PI));
        let r = project_physical(&chi).unwrap();
        assert!(r.trace_distance <= 1e-6, "{}", r.trace_distance);
        assert!(r.frobenius <= 1e-6);
        assert!(r.constraint_residual <= 1e-6);
    }

    #[test]
    fn projection_output_is_physical() {
        let mut chi = ChiMatrix::from_unitary(&UnitaryOp::rotation([1.0, 0.2, 0.0], 2.5)).0;
        chi[(2, 2)] -= C64::new(0.03, 0.0);
        chi[(0, 0)] += C64::new(0.03, 0.0);
        chi[(1, 3)] += C64::new(0.02, 0.01);
        chi[(3, 1)] += C64::new(0.02, -0.01);
        let r = project_physical(&ChiMatrix(chi)).unwrap();
        assert!(r.chi_physical.eigenvalues()[0] >= -1e-9);
        assert!(r.chi_physical.trace_preservation_residual() <= 1e-6);
        assert!(r.trace_distance > 0.0);
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        let chi = ChiMatrix::from_unitary(&UnitaryOp::rotation([0.4, 0.1, 0.9], 1.0)).0;
        let p: Vec<f64> = (0..16).map(|i| 0.1 + 0.05 * i as f64).collect();
        let mut g = vec![0.0; 16];
        objective(&p, &chi, 10.0, &mut g);
        let mut scratch = vec![0.0; 16];
        for i in 0..16 {
            let h = 1e-6;
            let mut a = p.clone();
            a[i] += h;
            let mut b = p.clone();
            b[i] -= h;
            let fd = (objective(&a, &chi, 10.0, &mut scratch) - objective(&b, &chi, 10.0, &mut scratch)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "{i}: {fd} {}", g[i]);
        }
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let mut chi = single(0);
        chi[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(project_physical(&ChiMatrix(chi)), Err(Error::Domain(_))));
    }
}
