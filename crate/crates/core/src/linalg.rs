//! Dense 2×2 complex matrices and the closed-form SU(2) exponential.
//!
//! Every Hamiltonian in this crate is a 2×2 Hermitian matrix, so the time-slice
//! propagators never need a general-purpose matrix exponential. A Hermitian
//! `H = h₀·I + h·σ` exponentiates as
//!
//! ```text
//! exp(-i H dt) = e^{-i h₀ dt} [ cos(|h| dt) I - i sin(|h| dt) ĥ·σ ]
//! ```
//!
//! and its Fréchet derivative along another Hermitian direction is also
//! available in closed form (see [`expm_frechet`]).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Row-major 2×2 complex matrix `[[a, b], [c, d]]`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([a, b, c, d])
    }

    pub const fn zero() -> Self {
        Mat2([ZERO; 4])
    }

    pub const fn identity() -> Self {
        Mat2([ONE, ZERO, ZERO, ONE])
    }

    pub const fn sigma_x() -> Self {
        Mat2([ZERO, ONE, ONE, ZERO])
    }

    pub const fn sigma_y() -> Self {
        Mat2([ZERO, C64::new(0.0, -1.0), I, ZERO])
    }

    pub const fn sigma_z() -> Self {
        Mat2([ONE, ZERO, ZERO, C64::new(-1.0, 0.0)])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[2 * row + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.0[2 * row + col] = value;
    }

    pub fn from_pauli(p: PauliVec) -> Self {
        Mat2([
            C64::new(p.i + p.z, 0.0),
            C64::new(p.x, -p.y),
            C64::new(p.x, p.y),
            C64::new(p.i - p.z, 0.0),
        ])
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn scale(&self, s: C64) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a * s, b * s, c * s, d * s])
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a * s, b * s, c * s, d * s])
    }

    /// `self += s * other`
    #[inline]
    pub fn axpy(&mut self, s: f64, other: &Mat2) {
        for (x, y) in self.0.iter_mut().zip(other.0.iter()) {
            *x += y * s;
        }
    }

    /// `self += s * other` for complex `s`
    #[inline]
    pub fn axpy_c(&mut self, s: C64, other: &Mat2) {
        for (x, y) in self.0.iter_mut().zip(other.0.iter()) {
            *x += y * s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖U†U − I‖_max`
    pub fn unitarity_residual(&self) -> f64 {
        (self.adjoint() * *self - Mat2::identity()).max_abs()
    }

    /// `‖H − H†‖_max`
    pub fn hermiticity_residual(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Real Pauli coordinates of a Hermitian matrix (anti-Hermitian parts are dropped).
    pub fn to_pauli(&self) -> PauliVec {
        let [a, b, c, d] = self.0;
        PauliVec {
            i: 0.5 * (a.re + d.re),
            x: 0.5 * (b.re + c.re),
            y: 0.5 * (c.im - b.im),
            z: 0.5 * (a.re - d.re),
        }
    }

    #[inline]
    pub fn apply(&self, v: &[C64; 2]) -> [C64; 2] {
        let [a, b, c, d] = self.0;
        [a * v[0] + b * v[1], c * v[0] + d * v[1]]
    }

    /// Multiply by the phase that makes the largest-magnitude entry real and positive.
    pub fn phase_normalized(&self) -> Self {
        let pivot = self
            .0
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(ZERO);
        if pivot.norm() == 0.0 {
            return *self;
        }
        self.scale(pivot.conj() / pivot.norm())
    }
}

/// Max-norm distance between two operators after removing their global phases.
pub fn distance_up_to_phase(a: &Mat2, b: &Mat2) -> f64 {
    // Pin both phases to the same entry so a near-tie in magnitude cannot pick different pivots.
    let (idx, _) = a
        .0
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .expect("four entries");
    let fix = |m: &Mat2| {
        let p = m.0[idx];
        if p.norm() == 0.0 {
            *m
        } else {
            m.scale(p.conj() / p.norm())
        }
    };
    (fix(a) - fix(b)).max_abs()
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, rhs: Mat2) {
        for (x, y) in self.0.iter_mut().zip(rhs.0) {
            *x += y;
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, rhs: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2([a - e, b - f, c - g, d - h])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

/// Coordinates `(i, x, y, z)` of `i·I + x·σx + y·σy + z·σz`.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct PauliVec {
    pub i: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PauliVec {
    pub const fn new(i: f64, x: f64, y: f64, z: f64) -> Self {
        PauliVec { i, x, y, z }
    }

    #[inline]
    fn vec_norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// `exp(-i H dt)` for Hermitian `H` given in Pauli coordinates.
#[inline]
pub fn expm_herm(h: PauliVec, dt: f64) -> Mat2 {
    let theta = h.vec_norm() * dt;
    let (s, c) = theta.sin_cos();
    // sin(θ)/|h|, well-defined as |h| → 0
    let k = if theta.abs() > 1e-8 {
        s / h.vec_norm()
    } else {
        dt * (1.0 - theta * theta / 6.0)
    };
    let su2 = Mat2([
        C64::new(c, -k * h.z),
        C64::new(-k * h.y, -k * h.x),
        C64::new(k * h.y, -k * h.x),
        C64::new(c, k * h.z),
    ]);
    if h.i == 0.0 {
        su2
    } else {
        su2.scale(C64::from_polar(1.0, -h.i * dt))
    }
}

/// Directional (Fréchet) derivative of `exp(-i H dt)` along the Hermitian direction `E`:
///
/// `d/dε exp(-i (H + ε E) dt) |_{ε=0}`.
pub fn expm_frechet(h: PauliVec, e: PauliVec, dt: f64) -> Mat2 {
    let norm = h.vec_norm();
    let theta = norm * dt;
    let (s, c) = theta.sin_cos();
    // Write exp(-i a·σ) with a = h dt, and ε-direction b = e dt.
    let (bx, by, bz) = (e.x * dt, e.y * dt, e.z * dt);
    let su2 = if theta > 1e-6 {
        let (nx, ny, nz) = (h.x / norm, h.y / norm, h.z / norm);
        let par = nx * bx + ny * by + nz * bz;
        let sinc = s / theta;
        // d/dε [sin|a| â] = cos|a| (â·b) â + sin|a|/|a| (b − (â·b) â)
        let vx = c * par * nx + sinc * (bx - par * nx);
        let vy = c * par * ny + sinc * (by - par * ny);
        let vz = c * par * nz + sinc * (bz - par * nz);
        let di = -s * par;
        Mat2([
            C64::new(di, -vz),
            C64::new(-vy, -vx),
            C64::new(vy, -vx),
            C64::new(di, vz),
        ])
    } else {
        // Series in a: d/dε exp(-i(a + εb)·σ) = -i b·σ - (a·b) I + O(|a|²|b|)
        let (ax, ay, az) = (h.x * dt, h.y * dt, h.z * dt);
        let dot = ax * bx + ay * by + az * bz;
        Mat2([
            C64::new(-dot, -bz),
            C64::new(-by, -bx),
            C64::new(by, -bx),
            C64::new(-dot, bz),
        ])
    };
    if h.i == 0.0 && e.i == 0.0 {
        return su2;
    }
    let phase = C64::from_polar(1.0, -h.i * dt);
    let base = expm_herm(PauliVec { i: 0.0, ..h }, dt);
    (su2 + base.scale(C64::new(0.0, -e.i * dt))).scale(phase)
}

/// Normalize a two-component state, failing if its norm deviates from 1 by more than `tol`.
pub fn check_normalized(v: &[C64; 2], tol: f64) -> bool {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    (n - 1.0).abs() <= tol
}

/// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of a pure state.
pub fn bloch_vector(v: &[C64; 2]) -> [f64; 3] {
    let cross = v[0].conj() * v[1];
    [
        2.0 * cross.re,
        2.0 * cross.im,
        v[0].norm_sqr() - v[1].norm_sqr(),
    ]
}
