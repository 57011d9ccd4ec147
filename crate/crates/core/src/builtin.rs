//! Reference pulses shipped with the library.
//!
//! Tables are stored exactly as tabulated, in MHz, harmonic 1 first. A pulse
//! may be played at a fixed multiple of its table (`table_scale`); only the
//! π pulse uses this.

use crate::pulse::{Coefficients, ControlProgram, FourierEnvelope};

struct Table {
    name: &'static str,
    duration_s: f64,
    x_mhz: [f64; 10],
    y_mhz: [f64; 10],
    table_scale: f64,
}

// The tabulated π row peaks at 4.75 MHz per quadrature, half the tabulated
// A_max of 9.49 MHz; played at twice the table it is a π pulse.
const PI: Table = Table {
    name: "pi",
    duration_s: 500e-9,
    x_mhz: [-1.177, 1.646, -0.549, -1.668, -0.627, 0.151, 1.680, -0.024, 0.858, 1.311],
    y_mhz: [-0.150, -0.355, 0.253, 1.165, 0.069, 0.470, -0.649, -0.814, 0.643, -0.657],
    table_scale: 2.0,
};

const PI2_Y: Table = Table {
    name: "pi2_y",
    duration_s: 250e-9,
    x_mhz: [1.248, -0.573, -4.553, -0.530, -8.790, 0.677, -1.413, 0.736, -4.158, 2.075],
    y_mhz: [6.454, -0.904, -6.097, -0.376, 4.378, -2.946, -7.539, -1.205, -10.375, 1.931],
    table_scale: 1.0,
};

const PI_X: Table = Table {
    name: "pi_x",
    duration_s: 250e-9,
    x_mhz: [6.498, -0.916, -5.901, 0.169, 2.727, 0.929, -6.137, -0.009, -10.532, -3.960],
    y_mhz: [0.572, 0.483, -3.400, -0.147, -9.616, -0.126, -0.361, -1.531, -0.649, 1.035],
    table_scale: 1.0,
};

const TABLES: [&Table; 3] = [&PI, &PI2_Y, &PI_X];

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 3] = ["pi", "pi2_y", "pi_x"];

#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinPulse {
    pub name: &'static str,
    /// Envelope as played, i.e. table × `table_scale`, in Hz.
    pub envelope: FourierEnvelope,
    pub table_scale: f64,
}

impl BuiltinPulse {
    pub fn program(&self) -> ControlProgram {
        ControlProgram::single(self.envelope.clone())
    }

    /// Coefficients exactly as tabulated, in MHz.
    pub fn table_mhz(&self) -> Coefficients {
        let t = TABLES.iter().find(|t| t.name == self.name).expect("known table");
        Coefficients {
            x: t.x_mhz.to_vec(),
            y: t.y_mhz.to_vec(),
        }
    }
}

fn build(t: &Table) -> BuiltinPulse {
    // entries have three decimals, so round through kHz to land on whole hertz
    let hz = |v: &[f64; 10]| v.iter().map(|a| (a * 1e3).round() * 1e3 * t.table_scale).collect();
    let coeffs = Coefficients {
        x: hz(&t.x_mhz),
        y: hz(&t.y_mhz),
    };
    BuiltinPulse {
        name: t.name,
        envelope: FourierEnvelope::half_period(t.duration_s, coeffs).expect("valid table"),
        table_scale: t.table_scale,
    }
}

/// Robust π pulse, 500 ns, 10 harmonics of 1 MHz.
pub fn pi() -> BuiltinPulse {
    build(&PI)
}

/// (π/2) about y, 250 ns, 10 harmonics of 2 MHz.
pub fn pi2_y() -> BuiltinPulse {
    build(&PI2_Y)
}

/// The tabulated "π_x" row, 250 ns, 10 harmonics of 2 MHz.
///
/// Under this crate's Hamiltonian convention the row acts as a (π/2)_x
/// rotation on resonance, not as a spin flip.
pub fn pi_x() -> BuiltinPulse {
    build(&PI_X)
}

pub fn all() -> Vec<BuiltinPulse> {
    TABLES.iter().map(|t| build(t)).collect()
}

pub fn by_name(name: &str) -> Option<BuiltinPulse> {
    TABLES.iter().find(|t| t.name == name).map(|t| build(t))
}
