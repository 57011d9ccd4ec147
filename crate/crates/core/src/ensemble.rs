//! Robustness windows: weighted grids over detuning and relative drive amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FWHM / σ for a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.355;

/// One member of an ensemble: detuning (Hz), amplitude scale and quadrature weight.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub detuning_hz: f64,
    pub amplitude_scale: f64,
    pub weight: f64,
}

impl EnsemblePoint {
    pub fn new(detuning_hz: f64, amplitude_scale: f64, weight: f64) -> Result<Self> {
        if !detuning_hz.is_finite() {
            return Err(Error::domain("detuning must be finite"));
        }
        if !(amplitude_scale > 0.0 && amplitude_scale.is_finite()) {
            return Err(Error::domain(format!(
                "amplitude scale must be positive, got {amplitude_scale}"
            )));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::domain(format!("weight must be ≥ 0, got {weight}")));
        }
        Ok(EnsemblePoint {
            detuning_hz,
            amplitude_scale,
            weight,
        })
    }

    /// On resonance, unit amplitude, unit weight.
    pub const fn nominal() -> Self {
        EnsemblePoint {
            detuning_hz: 0.0,
            amplitude_scale: 1.0,
            weight: 1.0,
        }
    }

    /// Unit-weight point; panics on invalid input, so meant for literals.
    pub fn at(detuning_hz: f64, amplitude_scale: f64) -> Self {
        Self::new(detuning_hz, amplitude_scale, 1.0).expect("valid ensemble point")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetuningGrid {
    /// `points` equally spaced values in `[-half_width, +half_width]`.
    Uniform { half_width_hz: f64, points: usize },
    /// `points` equally spaced values in `±0.75·FWHM`.
    Gaussian { fwhm_hz: f64, points: usize },
}

impl DetuningGrid {
    fn values(&self) -> Result<Vec<f64>> {
        let (half, n) = match *self {
            DetuningGrid::Uniform { half_width_hz, points } => {
                if !(half_width_hz >= 0.0 && half_width_hz.is_finite()) {
                    return Err(Error::domain("half width must be ≥ 0"));
                }
                (half_width_hz, points)
            }
            DetuningGrid::Gaussian { fwhm_hz, points } => {
                if !(fwhm_hz > 0.0 && fwhm_hz.is_finite()) {
                    return Err(Error::domain(format!("FWHM must be positive, got {fwhm_hz}")));
                }
                (0.75 * fwhm_hz, points)
            }
        };
        if n == 0 {
            return Err(Error::domain("detuning grid needs at least one point"));
        }
        Ok(linspace(-half, half, n))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    /// Detuning weights `∝ exp(−δ²/2σ²)` with `σ = FWHM/2.355`; needs a Gaussian grid.
    Gaussian,
}

/// Grid of ensemble points over which objectives and landscapes are averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessWindow {
    pub detuning: DetuningGrid,
    pub amplitude_scales: Vec<f64>,
    pub weighting: Weighting,
}

impl RobustnessWindow {
    /// Single nominal point.
    pub fn nominal() -> Self {
        RobustnessWindow {
            detuning: DetuningGrid::Uniform { half_width_hz: 0.0, points: 1 },
            amplitude_scales: vec![1.0],
            weighting: Weighting::Uniform,
        }
    }

    /// Gaussian detuning distribution of FWHM 8 MHz (9 points) and amplitudes within ±25 % (5 points).
    pub fn standard() -> Self {
        RobustnessWindow {
            detuning: DetuningGrid::Gaussian { fwhm_hz: 8e6, points: 9 },
            amplitude_scales: vec![0.75, 0.875, 1.0, 1.125, 1.25],
            weighting: Weighting::Gaussian,
        }
    }

    /// Weighted points, detuning-major. Weights sum to one.
    pub fn points(&self) -> Result<Vec<EnsemblePoint>> {
        let detunings = self.detuning.values()?;
        if self.amplitude_scales.is_empty() {
            return Err(Error::domain("window needs at least one amplitude scale"));
        }
        let det_weights: Vec<f64> = match (self.weighting, &self.detuning) {
            (Weighting::Uniform, _) => vec![1.0; detunings.len()],
            (Weighting::Gaussian, DetuningGrid::Gaussian { fwhm_hz, .. }) => {
                let sigma = fwhm_hz / FWHM_PER_SIGMA;
                detunings
                    .iter()
                    .map(|d| (-d * d / (2.0 * sigma * sigma)).exp())
                    .collect()
            }
            (Weighting::Gaussian, DetuningGrid::Uniform { .. }) => {
                return Err(Error::domain("Gaussian weighting requires a Gaussian detuning grid"));
            }
        };
        let total: f64 = det_weights.iter().sum::<f64>() * self.amplitude_scales.len() as f64;
        let mut out = Vec::with_capacity(detunings.len() * self.amplitude_scales.len());
        for (d, w) in detunings.iter().zip(&det_weights) {
            for &s in &self.amplitude_scales {
                out.push(EnsemblePoint::new(*d, s, w / total)?);
            }
        }
        Ok(out)
    }
}

/// Physical constants that are not fixed by the unit system.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Zeeman rate γ in Hz per tesla.
    pub gyromagnetic_ratio: f64,
}

impl PhysicalConstants {
    pub fn new(gyromagnetic_ratio: f64) -> Result<Self> {
        if !(gyromagnetic_ratio > 0.0 && gyromagnetic_ratio.is_finite()) {
            return Err(Error::domain("gyromagnetic ratio must be positive"));
        }
        Ok(PhysicalConstants { gyromagnetic_ratio })
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gyromagnetic_ratio: 28.0e9,
        }
    }
}

/// `n` equally spaced values from `a` to `b` inclusive. A single point sits at the midpoint.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_weights_are_normalized_and_symmetric() {
        let pts = RobustnessWindow::standard().points().unwrap();
        assert_eq!(pts.len(), 45);
        let sum: f64 = pts.iter().map(|p| p.weight).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((pts[0].detuning_hz + 6e6).abs() < 1e-6);
        assert!((pts[44].detuning_hz - 6e6).abs() < 1e-6);
        assert_eq!(pts[0].weight, pts[44].weight);
        let centre = pts.iter().find(|p| p.detuning_hz == 0.0).unwrap();
        assert!(centre.weight > pts[0].weight);
    }

    #[test]
    fn single_point_window() {
        let pts = RobustnessWindow::nominal().points().unwrap();
        assert_eq!(pts, vec![EnsemblePoint::nominal()]);
    }

    #[test]
    fn invalid_windows_rejected() {
        let mut w = RobustnessWindow::standard();
        w.amplitude_scales.clear();
        assert!(w.points().is_err());
        let w = RobustnessWindow {
            detuning: DetuningGrid::Gaussian { fwhm_hz: 0.0, points: 3 },
            ..RobustnessWindow::standard()
        };
        assert!(w.points().is_err());
        let w = RobustnessWindow {
            detuning: DetuningGrid::Uniform { half_width_hz: 1e6, points: 3 },
            ..RobustnessWindow::standard()
        };
        assert!(matches!(w.points(), Err(Error::Domain(_))));
        assert!(EnsemblePoint::new(0.0, 0.0, 1.0).is_err());
        assert!(EnsemblePoint::new(0.0, 1.0, -1.0).is_err());
        assert!(PhysicalConstants::new(0.0).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(-1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(linspace(2.0, 2.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
