//! Robust pulse synthesis by steepest ascent with an adaptive power penalty.
//!
//! Each iteration takes one Armijo-backtracked ascent step on
//! `𝓕(a) − p Σ a²`, then moves `p` by `Δp`: down when the new pulse is within
//! the amplitude limit (never below zero), up when it is not. The returned
//! envelope is the best iterate that respected the limit.
//!
//! Internally coefficients are measured in MHz so that step lengths are O(1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsemblePoint, RobustnessWindow};
use crate::error::{Error, Result};
use crate::objectives::{ensemble_fidelity, ensemble_objective_at, TargetSpec};
use crate::pulse::{max_rabi, Coefficients, ControlProgram, FourierEnvelope, DEFAULT_RABI_SAMPLES};

const MHZ: f64 = 1e6;
/// Consecutive small changes needed to declare convergence.
pub const STALL_WINDOW: usize = 20;

/// Armijo backtracking parameters, in MHz-normalised coefficient units.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub armijo_c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    /// Each search starts at `growth ×` the last accepted step.
    pub growth: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1e-2,
            growth: 2.0,
            min_step: 1e-12,
            max_step: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Initial penalty weight, Hz⁻².
    pub p_initial: f64,
    /// Penalty increment, Hz⁻².
    pub p_step: f64,
    /// Amplitude limit on `max_rabi`, Hz. May be infinite.
    pub a_max: f64,
    /// Total iteration budget, counted across resumes.
    pub max_iters: usize,
    pub conv_tol: f64,
    pub seed: u64,
    pub line_search: LineSearch,
    /// Slices per propagator while iterating.
    pub n_slices: usize,
    /// Slices used to report the final objective.
    pub verify_slices: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            p_initial: 1e-14,
            p_step: 1e-16,
            a_max: 10e6,
            max_iters: 5000,
            conv_tol: 1e-7,
            seed: 0,
            line_search: LineSearch::default(),
            n_slices: 512,
            verify_slices: 4096,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let ok = self.p_initial >= 0.0
            && self.p_initial.is_finite()
            && self.p_step > 0.0
            && self.p_step.is_finite()
            && self.a_max > 0.0
            && self.max_iters >= 1
            && self.conv_tol > 0.0
            && self.n_slices >= 1
            && self.verify_slices >= 1
            && ls.armijo_c > 0.0
            && ls.armijo_c < 1.0
            && ls.shrink > 0.0
            && ls.shrink < 1.0
            && ls.initial_step > 0.0
            && ls.growth >= 1.0
            && ls.min_step > 0.0
            && ls.max_step >= ls.min_step;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid optimizer configuration: {self:?}")))
        }
    }
}

/// What is being optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub target: TargetSpec,
    pub window: RobustnessWindow,
    pub num_harmonics: usize,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Ensemble-average objective without the penalty term.
    pub objective: f64,
    /// Penalty weight in force during this iteration, Hz⁻².
    pub p: f64,
    pub max_rabi_hz: f64,
    /// Norm of the augmented-objective gradient in MHz-normalised units.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
}

impl OptimizationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Everything needed to continue an interrupted run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    /// Current iterate in MHz.
    pub coeffs: Coefficients,
    pub p: f64,
    pub last_step: f64,
    pub stall: usize,
    pub iterations: usize,
    pub conv_tol: f64,
    /// Pure objective of the current iterate.
    pub objective: f64,
    /// Best iterate within the amplitude limit, MHz, with its pure objective.
    pub best: Option<(Coefficients, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizedPulse {
    pub envelope: FourierEnvelope,
    /// Ensemble-average objective of `envelope` at the verification slice count.
    pub final_objective: f64,
    pub trace: OptimizationTrace,
    pub converged: bool,
    pub problem: Problem,
    pub state: OptimizerState,
}

/// Optimize from seeded random coefficients, uniform in `[−1, 1]` MHz.
pub fn optimize(
    target: &TargetSpec,
    window: &RobustnessWindow,
    num_harmonics: usize,
    duration_s: f64,
    config: &OptimizerConfig,
) -> Result<OptimizedPulse> {
    config.validate()?;
    if num_harmonics == 0 {
        return Err(Error::domain("need at least one harmonic"));
    }
    let problem = Problem {
        target: target.clone(),
        window: window.clone(),
        num_harmonics,
        duration_s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = || -> Vec<f64> { (0..num_harmonics).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let x = draw();
    let y = draw();
    let start = Coefficients { x, y };
    let mut runner = Runner::new(&problem, config)?;
    let objective = runner.evaluate(&start, 0.0)?.0;
    let state = OptimizerState {
        coeffs: start,
        p: config.p_initial,
        last_step: config.line_search.initial_step / config.line_search.growth,
        stall: 0,
        iterations: 0,
        conv_tol: config.conv_tol,
        objective,
        best: None,
    };
    runner.run(problem.clone(), state, OptimizationTrace::default())
}

/// Continue a previous run up to `config.max_iters` total iterations.
pub fn resume(pulse: &OptimizedPulse, config: &OptimizerConfig) -> Result<OptimizedPulse> {
    config.validate()?;
    let n = pulse.problem.num_harmonics;
    if pulse.envelope.num_harmonics() != n || pulse.state.coeffs.num_harmonics() != n {
        return Err(Error::domain(format!(
            "harmonic count mismatch: problem {n}, envelope {}, state {}",
            pulse.envelope.num_harmonics(),
            pulse.state.coeffs.num_harmonics()
        )));
    }
    let mut state = pulse.state.clone();
    if state.conv_tol != config.conv_tol {
        state.stall = 0;
        state.conv_tol = config.conv_tol;
    }
    let mut runner = Runner::new(&pulse.problem, config)?;
    runner.run(pulse.problem.clone(), state, pulse.trace.clone())
}

struct Runner<'a> {
    config: &'a OptimizerConfig,
    points: Vec<EnsemblePoint>,
    target: TargetSpec,
    template: FourierEnvelope,
}

impl<'a> Runner<'a> {
    fn new(problem: &Problem, config: &'a OptimizerConfig) -> Result<Self> {
        Ok(Runner {
            config,
            points: problem.window.points()?,
            target: problem.target.clone(),
            template: FourierEnvelope::zeros(problem.duration_s, problem.num_harmonics)?,
        })
    }

    fn envelope(&self, x: &Coefficients) -> Result<FourierEnvelope> {
        self.template.with_coeffs(x.scaled(MHZ))
    }

    /// `(pure objective, augmented objective, augmented gradient)` in MHz units.
    fn evaluate(&mut self, x: &Coefficients, p: f64) -> Result<(f64, f64, Coefficients)> {
        let env = self.envelope(x)?;
        let v = ensemble_objective_at(&env, &self.points, &self.target, p, self.config.n_slices)?;
        let pure = v.value + p * env.coeffs().norm_sqr();
        let grad = v.gradient.scaled(MHZ);
        if !pure.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric("objective or gradient is not finite".into()));
        }
        Ok((pure, v.value, grad))
    }

    fn augmented_value(&self, x: &Coefficients, p: f64) -> Result<f64> {
        let env = self.envelope(x)?;
        let prog = ControlProgram::single(env.clone());
        let f = ensemble_fidelity_objective(&prog, &self.points, &self.target, self.config.n_slices)?;
        let v = f - p * env.coeffs().norm_sqr();
        if !v.is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        Ok(v)
    }

    fn peak(&self, x: &Coefficients) -> Result<f64> {
        Ok(max_rabi(&ControlProgram::single(self.envelope(x)?), DEFAULT_RABI_SAMPLES))
    }

    fn run(&mut self, problem: Problem, mut st: OptimizerState, mut trace: OptimizationTrace) -> Result<OptimizedPulse> {
        let cfg = self.config;
        let ls = cfg.line_search;
        while st.iterations < cfg.max_iters && st.stall < STALL_WINDOW {
            let p = st.p;
            let (pure, value, grad) = self.evaluate(&st.coeffs, p)?;
            let g2 = grad.norm_sqr();
            let mut step = (st.last_step * ls.growth).min(ls.max_step);
            let mut accepted = None;
            while step >= ls.min_step {
                let trial = st.coeffs.offset(step, &grad);
                let v = self.augmented_value(&trial, p)?;
                if v >= value + ls.armijo_c * step * g2 {
                    accepted = Some(trial);
                    break;
                }
                step *= ls.shrink;
            }
            let new_objective = match accepted {
                Some(trial) => {
                    st.coeffs = trial;
                    st.last_step = step;
                    self.evaluate(&st.coeffs, 0.0)?.0
                }
                None => {
                    st.last_step = ls.initial_step / ls.growth;
                    pure
                }
            };
            let peak = self.peak(&st.coeffs)?;
            if peak <= cfg.a_max && st.best.as_ref().is_none_or(|(_, b)| new_objective > *b) {
                st.best = Some((st.coeffs.clone(), new_objective));
            }
            if (new_objective - st.objective).abs() < st.conv_tol {
                st.stall += 1;
            } else {
                st.stall = 0;
            }
            st.objective = new_objective;
            st.iterations += 1;
            trace.records.push(IterationRecord {
                iter: st.iterations,
                objective: new_objective,
                p,
                max_rabi_hz: peak,
                grad_norm: g2.sqrt(),
            });
            st.p = if peak > cfg.a_max { p + cfg.p_step } else { (p - cfg.p_step).max(0.0) };
        }
        let (coeffs, feasible) = match &st.best {
            Some((c, _)) => (c.clone(), true),
            None => (st.coeffs.clone(), false),
        };
        let envelope = self.envelope(&coeffs)?;
        let final_objective = ensemble_fidelity_objective(
            &ControlProgram::single(envelope.clone()),
            &self.points,
            &self.target,
            cfg.verify_slices,
        )?;
        Ok(OptimizedPulse {
            envelope,
            final_objective,
            trace,
            converged: feasible && st.stall >= STALL_WINDOW,
            problem,
            state: st,
        })
    }
}

/// Ensemble average of the optimized functional itself (phase-sensitive for gates).
fn ensemble_fidelity_objective(
    program: &ControlProgram,
    points: &[EnsemblePoint],
    target: &TargetSpec,
    n_slices: usize,
) -> Result<f64> {
    match target {
        TargetSpec::StateTransfer { .. } => ensemble_fidelity(program, points, target, n_slices),
        TargetSpec::Gate { .. } => {
            let env = program.as_fourier().expect("optimizer programs are single envelopes");
            Ok(ensemble_objective_at(env, points, target, 0.0, n_slices)?.value)
        }
    }
}
