//! File formats, AWG sample tables and plot-script emission.
//!
//! Everything is in SI base units. JSON floats use the shortest decimal that
//! round-trips, so load → save of a pulse file is byte-identical.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magnetometry::SensitivityLandscape;
use crate::objectives::FidelityLandscape;
use crate::optimizer::{IterationRecord, OptimizationTrace};
use crate::propagation::BlochTrajectory;
use crate::pulse::{Coefficients, ControlProgram, FourierEnvelope};
use crate::qpt::{ChiMatrix, PhysicalityReport, BASIS_LABELS};

pub const TRAJECTORY_HEADER: [&str; 4] = ["time_s", "sx", "sy", "sz"];
pub const LANDSCAPE_HEADER: [&str; 3] = ["detuning_hz", "amplitude_scale", "fidelity"];
pub const TRACE_HEADER: [&str; 5] = ["iter", "objective", "p", "max_rabi_hz", "grad_norm"];
pub const SENSITIVITY_HEADER: [&str; 4] = ["detuning_hz", "amplitude_scale", "eta_t_per_sqrt_hz", "pulse_set"];
pub const AWG_HEADER: [&str; 3] = ["index", "i_code", "q_code"];

// ---------------------------------------------------------------- pulse JSON

/// On-disk pulse. Field order is the canonical key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    pub name: String,
    pub duration_s: f64,
    pub fundamental_hz: f64,
    pub coeffs_x_hz: Vec<f64>,
    pub coeffs_y_hz: Vec<f64>,
}

impl PulseFile {
    pub fn from_envelope(name: impl Into<String>, env: &FourierEnvelope) -> Self {
        let c = env.coeffs();
        PulseFile {
            name: name.into(),
            duration_s: env.duration_s(),
            fundamental_hz: env.fundamental_hz(),
            coeffs_x_hz: c.x.clone(),
            coeffs_y_hz: c.y.clone(),
        }
    }

    pub fn envelope(&self) -> Result<FourierEnvelope> {
        if self.coeffs_x_hz.len() != self.coeffs_y_hz.len() {
            return Err(Error::Format(format!(
                "coeffs_x_hz has {} entries, coeffs_y_hz has {}",
                self.coeffs_x_hz.len(),
                self.coeffs_y_hz.len()
            )));
        }
        let coeffs = Coefficients {
            x: self.coeffs_x_hz.clone(),
            y: self.coeffs_y_hz.clone(),
        };
        FourierEnvelope::new(self.duration_s, self.fundamental_hz, coeffs)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PulseFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("pulse JSON: {e}")))?;
        f.envelope()?;
        Ok(f)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain struct serializes");
        s.push('\n');
        s
    }
}

// ------------------------------------------------------------------ χ JSON

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiFile {
    pub basis: Vec<String>,
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl ChiFile {
    pub fn from_chi(chi: &ChiMatrix) -> Self {
        let m = chi.matrix();
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = m[(i, j)].re;
                im[i][j] = m[(i, j)].im;
            }
        }
        ChiFile {
            basis: BASIS_LABELS.iter().map(|s| s.to_string()).collect(),
            re,
            im,
        }
    }

    pub fn chi(&self) -> Result<ChiMatrix> {
        if self.basis.iter().map(String::as_str).ne(BASIS_LABELS) {
            return Err(Error::Format(format!(
                "χ basis must be {BASIS_LABELS:?}, got {:?}",
                self.basis
            )));
        }
        if self.re.iter().chain(&self.im).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("χ has non-finite entries".into()));
        }
        Ok(ChiMatrix::from_parts(&self.re, &self.im))
    }

    pub fn from_json(text: &str) -> Result<ChiMatrix> {
        let f: ChiFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("χ JSON: {e}")))?;
        f.chi()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain struct serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityFile {
    pub d_trace: f64,
    pub frobenius: f64,
    pub constraint_residual: f64,
    pub start: usize,
    pub chi_physical: ChiFile,
}

impl From<&PhysicalityReport> for PhysicalityFile {
    fn from(r: &PhysicalityReport) -> Self {
        PhysicalityFile {
            d_trace: r.trace_distance,
            frobenius: r.frobenius,
            constraint_residual: r.constraint_residual,
            start: r.start,
            chi_physical: ChiFile::from_chi(&r.chi_physical),
        }
    }
}

// --------------------------------------------------------------------- CSV

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("CSV: {other:?}")),
    }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    Ok(out)
}

fn reader<R: Read>(r: R, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let got = rd.headers().map_err(csv_err)?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header {}, got {}",
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rd)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("bad value in column {} of record {line}", i + 1)))
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &BlochTrajectory) -> Result<()> {
    let mut out = writer(w, &TRAJECTORY_HEADER)?;
    for (t, v) in traj.times.iter().zip(&traj.vectors) {
        out.write_record([t.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])
            .map_err(csv_err)?;
    }
    finish(out)
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<BlochTrajectory> {
    let mut rd = reader(r, &TRAJECTORY_HEADER)?;
    let mut traj = BlochTrajectory {
        times: Vec::new(),
        vectors: Vec::new(),
    };
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        traj.times.push(field(&rec, 0, n)?);
        traj.vectors.push([field(&rec, 1, n)?, field(&rec, 2, n)?, field(&rec, 3, n)?]);
    }
    Ok(traj)
}

pub fn write_landscape_csv<W: Write>(w: W, l: &FidelityLandscape) -> Result<()> {
    let mut out = writer(w, &LANDSCAPE_HEADER)?;
    for (d, s, f) in l.cells() {
        out.write_record([d.to_string(), s.to_string(), f.to_string()]).map_err(csv_err)?;
    }
    finish(out)
}

/// Distinct values of a row-major grid column, in first-seen order.
fn axis(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn read_landscape_csv<R: Read>(r: R) -> Result<FidelityLandscape> {
    let mut rd = reader(r, &LANDSCAPE_HEADER)?;
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows.push((field::<f64>(&rec, 0, n)?, field::<f64>(&rec, 1, n)?, field::<f64>(&rec, 2, n)?));
    }
    let detunings = axis(rows.iter().map(|r| r.0));
    let scales = axis(rows.iter().map(|r| r.1));
    if rows.len() != detunings.len() * scales.len() || rows.is_empty() {
        return Err(Error::Format("landscape rows do not form a full grid".into()));
    }
    let mut fidelities = vec![vec![0.0; scales.len()]; detunings.len()];
    for (k, (d, s, f)) in rows.iter().enumerate() {
        let (i, j) = (k / scales.len(), k % scales.len());
        if detunings[i] != *d || scales[j] != *s {
            return Err(Error::Format(format!("landscape row {k} is out of row-major order")));
        }
        fidelities[i][j] = *f;
    }
    Ok(FidelityLandscape {
        detunings,
        scales,
        fidelities,
    })
}

pub fn write_trace_csv<W: Write>(w: W, trace: &OptimizationTrace) -> Result<()> {
    let mut out = writer(w, &TRACE_HEADER)?;
    for r in &trace.records {
        out.write_record([
            r.iter.to_string(),
            r.objective.to_string(),
            r.p.to_string(),
            r.max_rabi_hz.to_string(),
            r.grad_norm.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<OptimizationTrace> {
    let mut rd = reader(r, &TRACE_HEADER)?;
    let mut records = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        records.push(IterationRecord {
            iter: field(&rec, 0, n)?,
            objective: field(&rec, 1, n)?,
            p: field(&rec, 2, n)?,
            max_rabi_hz: field(&rec, 3, n)?,
            grad_norm: field(&rec, 4, n)?,
        });
    }
    Ok(OptimizationTrace { records })
}

/// One row of a sensitivity CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub detuning_hz: f64,
    pub amplitude_scale: f64,
    pub eta: f64,
    pub pulse_set: String,
}

pub fn write_sensitivity_csv<W: Write>(w: W, l: &SensitivityLandscape) -> Result<()> {
    let mut out = writer(w, &SENSITIVITY_HEADER)?;
    for (d, s, eta, set) in l.rows() {
        out.write_record([d.to_string(), s.to_string(), eta.to_string(), set.to_string()])
            .map_err(csv_err)?;
    }
    finish(out)
}

pub fn read_sensitivity_csv<R: Read>(r: R) -> Result<Vec<SensitivityRow>> {
    let mut rd = reader(r, &SENSITIVITY_HEADER)?;
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows.push(SensitivityRow {
            detuning_hz: field(&rec, 0, n)?,
            amplitude_scale: field(&rec, 1, n)?,
            eta: field(&rec, 2, n)?,
            pulse_set: field(&rec, 3, n)?,
        });
    }
    Ok(rows)
}

// --------------------------------------------------------------------- AWG

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwgExportConfig {
    pub sample_rate_hz: f64,
    pub bit_depth: u32,
    /// Rabi frequency mapped to the largest code.
    pub full_scale_hz: f64,
    /// Stretch the grid so the last sample sits exactly at the end of the program
    /// (spacing `T/(n−1)` instead of `1/rate`). On by default.
    pub include_endpoint: bool,
}

impl AwgExportConfig {
    pub fn new(sample_rate_hz: f64, bit_depth: u32, full_scale_hz: f64) -> Result<Self> {
        let c = AwgExportConfig {
            sample_rate_hz,
            bit_depth,
            full_scale_hz,
            include_endpoint: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::domain("sample rate must be positive"));
        }
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::domain(format!("bit depth {} outside [8, 16]", self.bit_depth)));
        }
        if !(self.full_scale_hz > 0.0 && self.full_scale_hz.is_finite()) {
            return Err(Error::domain("full scale must be positive"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> i16 {
        ((1i32 << (self.bit_depth - 1)) - 1) as i16
    }
}

/// Two-channel integer sample table, channels ordered (I, Q).
#[derive(Clone, Debug, PartialEq)]
pub struct AwgTable {
    pub times_s: Vec<f64>,
    pub i: Vec<i16>,
    pub q: Vec<i16>,
}

impl AwgTable {
    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = writer(w, &AWG_HEADER)?;
        for (n, (a, b)) in self.i.iter().zip(&self.q).enumerate() {
            out.write_record([n.to_string(), a.to_string(), b.to_string()]).map_err(csv_err)?;
        }
        finish(out)
    }

    /// Little-endian `i16`, interleaved I, Q.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(4 * self.len());
        for (a, b) in self.i.iter().zip(&self.q) {
            buf.extend_from_slice(&a.to_le_bytes());
            buf.extend_from_slice(&b.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }
}

/// Relative slack above full scale tolerated before reporting clipping; covers a
/// full scale taken from sampled `max_rabi`.
const CLIP_SLACK: f64 = 1e-6;

pub fn export_awg(program: &ControlProgram, cfg: &AwgExportConfig) -> Result<AwgTable> {
    cfg.validate()?;
    let total = program.duration_s();
    let n = (total * cfg.sample_rate_hz).round() as usize;
    if n < 2 {
        return Err(Error::domain(format!("program yields {n} samples at {} S/s", cfg.sample_rate_hz)));
    }
    let dt = if cfg.include_endpoint {
        total / (n - 1) as f64
    } else {
        1.0 / cfg.sample_rate_hz
    };
    let max_code = cfg.max_code() as f64;
    let mut table = AwgTable {
        times_s: Vec::with_capacity(n),
        i: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = (k as f64 * dt).min(total);
        let (f1, f2) = program.quadratures_at(t);
        for f in [f1, f2] {
            if f.abs() > cfg.full_scale_hz * (1.0 + CLIP_SLACK) {
                return Err(Error::Clipping {
                    index: k,
                    time_s: t,
                    value_hz: f.abs(),
                    full_scale_hz: cfg.full_scale_hz,
                });
            }
        }
        let code = |f: f64| (f / cfg.full_scale_hz * max_code).round().clamp(-max_code, max_code) as i16;
        table.times_s.push(t);
        table.i.push(code(f1));
        table.q.push(code(f2));
    }
    Ok(table)
}

// ------------------------------------------------------------ plot scripts

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Trajectory,
    Landscape,
    Sensitivity,
}

impl PlotKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            PlotKind::Trajectory => &TRAJECTORY_HEADER,
            PlotKind::Landscape => &LANDSCAPE_HEADER,
            PlotKind::Sensitivity => &SENSITIVITY_HEADER,
        }
    }
}

/// Matplotlib script that reads only `csv_path`. `header_line` is the first line of that file.
pub fn emit_plot_script(csv_path: &str, header_line: &str, kind: PlotKind) -> Result<String> {
    let expected = kind.header().join(",");
    if header_line.trim_end_matches(['\r', '\n']) != expected {
        return Err(Error::Format(format!(
            "expected header {expected}, got {}",
            header_line.trim_end()
        )));
    }
    let path = serde_json::to_string(csv_path)?;
    let body = match kind {
        PlotKind::Trajectory => TRAJECTORY_PLOT,
        PlotKind::Landscape => LANDSCAPE_PLOT,
        PlotKind::Sensitivity => SENSITIVITY_PLOT,
    };
    Ok(format!("{PLOT_PRELUDE}CSV = {path}\n{body}"))
}

const PLOT_PRELUDE: &str = "#!/usr/bin/env python3\nimport numpy as np\nimport matplotlib.pyplot as plt\n\n";

const TRAJECTORY_PLOT: &str = r#"d = np.genfromtxt(CSV, delimiter=",", names=True)
t = d["time_s"] * 1e9
fig, (a, b) = plt.subplots(2, 1, sharex=True)
a.plot(t, (1 + d["sz"]) / 2, label="P(|0>)")
a.plot(t, (1 - d["sz"]) / 2, label="P(|1>)")
a.set_ylabel("population")
a.legend()
for k in ("sx", "sy", "sz"):
    b.plot(t, d[k], label=k)
b.set_xlabel("time (ns)")
b.set_ylabel("Bloch component")
b.legend()
plt.tight_layout()
plt.show()
"#;

const LANDSCAPE_PLOT: &str = r#"d = np.genfromtxt(CSV, delimiter=",", names=True)
det = np.unique(d["detuning_hz"])
sc = np.unique(d["amplitude_scale"])
f = d["fidelity"].reshape(len(det), len(sc))
x, y = np.meshgrid(det / 1e6, sc, indexing="ij")
pc = plt.pcolormesh(x, y, f, shading="auto", vmin=0, vmax=1)
plt.contour(x, y, f, levels=[0.9], colors="w")
plt.colorbar(pc, label="fidelity")
plt.xlabel("detuning (MHz)")
plt.ylabel("amplitude scale")
plt.show()
"#;

const SENSITIVITY_PLOT: &str = r#"from matplotlib.colors import LogNorm
d = np.genfromtxt(CSV, delimiter=",", names=True, dtype=None, encoding="utf-8")
sets = list(dict.fromkeys(d["pulse_set"]))
eta = d["eta_t_per_sqrt_hz"]
norm = LogNorm(vmin=eta[np.isfinite(eta)].min(), vmax=eta[np.isfinite(eta)].max())
fig, axes = plt.subplots(1, len(sets), squeeze=False)
for ax, name in zip(axes[0], sets):
    r = d[d["pulse_set"] == name]
    det = np.unique(r["detuning_hz"])
    sc = np.unique(r["amplitude_scale"])
    e = r["eta_t_per_sqrt_hz"].reshape(len(det), len(sc))
    x, y = np.meshgrid(det / 1e6, sc, indexing="ij")
    pc = ax.pcolormesh(x, y, e, shading="auto", norm=norm)
    ax.set_title(name)
    ax.set_xlabel("detuning (MHz)")
axes[0][0].set_ylabel("amplitude scale")
fig.colorbar(pc, ax=axes[0].tolist(), label="eta (T/sqrt(Hz))")
plt.show()
"#;
