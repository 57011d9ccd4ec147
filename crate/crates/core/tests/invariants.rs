use proptest::prelude::*;

use smoothctl::ensemble::{DetuningGrid, EnsemblePoint, RobustnessWindow, Weighting};
use smoothctl::gradients::{finite_diff_gradient, gradient_unitary_with, FdStep, GradientEngine};
use smoothctl::io::{self, AwgExportConfig, ChiFile, PulseFile};
use smoothctl::linalg::distance_up_to_phase;
use smoothctl::magnetometry::{sensitivity, BStar, EchoSequence, SensorModel};
use smoothctl::objectives::{FidelityLandscape, TargetSpec};
use smoothctl::propagation::{propagate_floquet, propagate_timeslice, UnitaryOp};
use smoothctl::pulse::{max_rabi, Coefficients, ControlProgram, FourierEnvelope};
use smoothctl::qpt::{
    process_fidelity_unclamped, project_physical, reconstruct_chi, simulate_tomography, ChiMatrix, Process,
    TomographyConfig,
};

fn coeffs(max_n: usize, amp_mhz: f64) -> impl Strategy<Value = Coefficients> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(-amp_mhz..amp_mhz, n),
            prop::collection::vec(-amp_mhz..amp_mhz, n),
        )
            .prop_map(|(x, y)| Coefficients {
                x: x.into_iter().map(|v| v * 1e6).collect(),
                y: y.into_iter().map(|v| v * 1e6).collect(),
            })
    })
}

fn envelope(max_n: usize, amp_mhz: f64) -> impl Strategy<Value = FourierEnvelope> {
    (coeffs(max_n, amp_mhz), 100e-9..600e-9f64)
        .prop_map(|(c, t)| FourierEnvelope::half_period(t, c).unwrap())
}

fn point() -> impl Strategy<Value = EnsemblePoint> {
    (-10e6..10e6f64, 0.5..1.5f64).prop_map(|(d, s)| EnsemblePoint::at(d, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagators_stay_unitary(env in envelope(8, 5.0), p in point()) {
        let prog = ControlProgram::from(env);
        let u = propagate_timeslice(&prog, &p, prog.duration_s(), 256).unwrap();
        prop_assert!(u.unitarity_residual() < 1e-10);
    }

    #[test]
    fn envelopes_vanish_at_the_ends(env in envelope(10, 5.0)) {
        let (a, b) = env.eval(0.0).unwrap();
        let (c, d) = env.eval(env.duration_s()).unwrap();
        let scale = env.coeffs().iter().map(f64::abs).sum::<f64>().max(1.0);
        for v in [a, b, c, d] {
            prop_assert!(v.abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn fidelities_are_probabilities(env in envelope(6, 5.0), p in point()) {
        let prog = ControlProgram::from(env);
        let u = propagate_timeslice(&prog, &p, prog.duration_s(), 128).unwrap();
        for target in [TargetSpec::flip(), TargetSpec::gate(UnitaryOp::pauli_y())] {
            let f = target.fidelity(&u);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn amplitude_scaling_scales_max_rabi(env in envelope(6, 5.0), k in 0.1..3.0f64) {
        let a = max_rabi(&ControlProgram::from(env.clone()), 1024);
        let b = max_rabi(&ControlProgram::from(env.scaled(k)), 1024);
        prop_assert!((b - k * a).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn window_weights_sum_to_one(half in 1e5..1e7f64, n in 1usize..12, scales in prop::collection::vec(0.5..1.5f64, 1..6)) {
        let w = RobustnessWindow {
            detuning: DetuningGrid::Uniform { half_width_hz: half, points: n },
            amplitude_scales: scales.clone(),
            weighting: Weighting::Uniform,
        };
        let pts = w.points().unwrap();
        prop_assert_eq!(pts.len(), n * scales.len());
        let total: f64 = pts.iter().map(|p| p.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pulse_json_round_trip(env in envelope(12, 50.0), name in "[a-z_]{1,12}") {
        let text = PulseFile::from_envelope(name, &env).to_json();
        let loaded = PulseFile::from_json(&text).unwrap();
        prop_assert_eq!(loaded.envelope().unwrap(), env.clone());
        let again = PulseFile::from_envelope(&loaded.name, &loaded.envelope().unwrap()).to_json();
        prop_assert_eq!(text, again);
    }

    #[test]
    fn landscape_csv_round_trip(vals in prop::collection::vec(0.0..1.0f64, 12)) {
        let l = FidelityLandscape {
            detunings: vec![-3e6, -1.5e6, 0.0, 2.25e6],
            scales: vec![0.8, 1.0, 1.2],
            fidelities: vals.chunks(3).map(<[f64]>::to_vec).collect(),
        };
        let mut buf = Vec::new();
        io::write_landscape_csv(&mut buf, &l).unwrap();
        prop_assert_eq!(io::read_landscape_csv(&buf[..]).unwrap(), l);
    }

    #[test]
    fn awg_codes_respect_full_scale(env in envelope(6, 5.0), bits in 8u32..=16) {
        let prog = ControlProgram::from(env);
        let fs = max_rabi(&prog, 4096).max(1.0) * 1.01;
        let cfg = AwgExportConfig::new(200e6, bits, fs).unwrap();
        let t = io::export_awg(&prog, &cfg).unwrap();
        let top = cfg.max_code();
        prop_assert!(t.i.iter().chain(&t.q).all(|c| c.abs() <= top));
        prop_assert_eq!(t.len(), (prog.duration_s() * 200e6).round() as usize);
        prop_assert_eq!((t.i[0], t.q[0]), (0, 0));
    }

    #[test]
    fn exact_tomography_of_unitaries_is_ideal(axis in prop::array::uniform3(-1.0..1.0f64), angle in -3.0..3.0f64) {
        prop_assume!(axis.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let u = UnitaryOp::rotation(axis, angle);
        let data = simulate_tomography(&Process::Unitary(u), &TomographyConfig::default()).unwrap();
        let chi = reconstruct_chi(&data.outputs);
        prop_assert!(chi.trace_preservation_residual() < 1e-9);
        prop_assert!(chi.hermiticity_residual() < 1e-9);
        prop_assert!((process_fidelity_unclamped(&chi, &u) - 1.0).abs() < 1e-9);
        let back = ChiFile::from_json(&ChiFile::from_chi(&chi).to_json()).unwrap();
        prop_assert_eq!(back, chi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn analytic_gradient_matches_finite_differences(env in envelope(5, 4.0), p in point()) {
        let t = env.duration_s();
        let a = gradient_unitary_with(&env, &p, t, 512, GradientEngine::Frechet).unwrap();
        let fd = finite_diff_gradient(&env, &p, t, FdStep::Relative, 512).unwrap();
        prop_assert!(a.relative_deviation(&fd) < 1e-5, "{}", a.relative_deviation(&fd));
    }

    #[test]
    fn floquet_agrees_with_timeslice(env in envelope(4, 4.0), p in point()) {
        let prog = ControlProgram::from(env.clone());
        let f = propagate_floquet(&prog, &p, env.duration_s(), 96).unwrap();
        let s = propagate_timeslice(&prog, &p, env.duration_s(), 8192).unwrap();
        prop_assert!(distance_up_to_phase(f.matrix(), s.matrix()) < 1e-6);
    }

    #[test]
    fn projection_keeps_physical_processes(axis in prop::array::uniform3(-1.0..1.0f64), angle in -3.0..3.0f64) {
        prop_assume!(axis.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let chi = ChiMatrix::from_unitary(&UnitaryOp::rotation(axis, angle));
        let r = project_physical(&chi).unwrap();
        prop_assert!(r.trace_distance < 1e-4, "{}", r.trace_distance);
        prop_assert!(r.constraint_residual <= 1e-6);
    }

    #[test]
    fn sensitivity_is_positive_and_scales_with_counts(d in -4e6..4e6f64, s in 0.75..1.25f64, k in 1.5..8.0f64) {
        let seq = EchoSequence::rectangular(15e6, 1.2e-6).unwrap();
        let m = SensorModel::default();
        let p = EnsemblePoint::at(d, s);
        let a = sensitivity(&seq, &p, &m, BStar::Fixed(2e-6)).unwrap();
        let b = sensitivity(&seq, &p, &SensorModel { counts_cps: m.counts_cps * k, ..m }, BStar::Fixed(2e-6)).unwrap();
        prop_assert!(a.eta > 0.0);
        prop_assert!((a.eta / b.eta - k.sqrt()).abs() < 1e-9 * k.sqrt());
    }
}
