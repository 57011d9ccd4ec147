use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smoothctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothctl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn builtin_writes_pulse_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(dir.path(), &["pulse", "builtin", "--name", "pi", "--out", "pi.json"]);
    assert!(o.status.success(), "{o:?}");
    let text = fs::read_to_string(dir.path().join("pi.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["name"], "pi");
    assert_eq!(v["duration_s"], 5e-7);
    assert_eq!(v["coeffs_x_hz"].as_array().unwrap().len(), 10);

    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pi.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "pulse builtin");
    let digest = m["outputs"][0]["sha256"].as_str().unwrap();
    use sha2::Digest;
    assert_eq!(digest, hex::encode(sha2::Sha256::digest(text.as_bytes())));
}

#[test]
fn landscape_grid_contract() {
    let dir = tempfile::tempdir().unwrap();
    assert!(smoothctl(dir.path(), &["pulse", "builtin", "--name", "pi", "--out", "pi.json"]).status.success());
    let o = smoothctl(
        dir.path(),
        &[
            "pulse", "landscape", "--pulse", "pi.json", "--target", "flip", "--det", "-10e6:10e6:81", "--scale",
            "0.5:1.5:41", "--out", "l.csv", "--slices", "512",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("detuning_hz,amplitude_scale,fidelity"));
    assert_eq!(lines.count(), 81 * 41);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = format!("l{threads}.csv");
        let o = Command::new(env!("CARGO_BIN_EXE_smoothctl"))
            .current_dir(dir.path())
            .env("SMOOTHCTL_THREADS", threads)
            .args([
                "pulse", "landscape", "--pulse", "builtin:pi2_y", "--target", "y90", "--det", "-5MHz:5MHz:7",
                "--scale", "0.8:1.2:5", "--out", &out,
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{o:?}");
        outputs.push(fs::read(dir.path().join(out)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let bad = Command::new(env!("CARGO_BIN_EXE_smoothctl"))
        .current_dir(dir.path())
        .env("SMOOTHCTL_THREADS", "zero")
        .args(["pulse", "builtin", "--name", "pi", "--out", "x.json"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn physicality_of_fixture_a() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(dir.path(), &["qpt", "physicality", "--chi", &fixture("chi_a.json"), "--out", "r.json"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("D 0.0231"), "{}", stdout(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    for key in ["d_trace", "frobenius", "constraint_residual"] {
        assert!(r[key].is_number(), "{key}");
    }
}

#[test]
fn qpt_run_reports_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(
        dir.path(),
        &["qpt", "run", "--hard-pi", "20MHz", "--scale", "0.875", "--ideal", "x", "--out", "chi.json"],
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("process fidelity 0.96"), "{}", stdout(&o));
    let again = smoothctl(dir.path(), &["qpt", "physicality", "--chi", "chi.json"]);
    assert!(again.status.success());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(dir.path(), &["pulse", "frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(smoothctl(dir.path(), &["pulse", "builtin", "--name", "nope", "--out", "a.json"]).status.code(), Some(2));
    assert_eq!(
        smoothctl(dir.path(), &["pulse", "simulate", "--pulse", "missing.json", "--out", "t.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        smoothctl(dir.path(), &["pulse", "export-awg", "--pulse", "builtin:pi", "--rate", "fast", "--out", "a.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn awg_export_and_clipping() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(dir.path(), &["pulse", "export-awg", "--pulse", "builtin:pi", "--out", "a.csv"]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "index,i_code,q_code");
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[1], "0,0,0");
    assert_eq!(rows[100], "99,0,0");

    let raw = smoothctl(dir.path(), &["pulse", "export-awg", "--pulse", "builtin:pi", "--raw", "--out", "a.bin"]);
    assert!(raw.status.success());
    assert_eq!(fs::read(dir.path().join("a.bin")).unwrap().len(), 400);

    let clip = smoothctl(
        dir.path(),
        &["pulse", "export-awg", "--pulse", "builtin:pi", "--full-scale", "1MHz", "--out", "c.csv"],
    );
    assert_eq!(clip.status.code(), Some(3));
    assert!(!dir.path().join("c.csv").exists());
}

#[test]
fn seeded_optimize_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = format!("{run}.json");
        let trace = format!("{run}.csv");
        let o = smoothctl(
            dir.path(),
            &[
                "pulse", "optimize", "--window", "nominal", "--harmonics", "4", "--duration", "300ns", "--a-max",
                "20MHz", "--max-iters", "60", "--seed", "7", "--out", &out, "--trace", &trace,
            ],
        );
        assert!(o.status.success(), "{o:?}");
        files.push((fs::read(dir.path().join(&out)).unwrap(), fs::read(dir.path().join(&trace)).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_and_mag_sweep_with_plot_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothctl(
        dir.path(),
        &["pulse", "simulate", "--pulse", "builtin:pi", "--samples", "11", "--out", "t.csv", "--plot", "t.py"],
    );
    assert!(o.status.success(), "{o:?}");
    let t = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(t.starts_with("time_s,sx,sy,sz\n"));
    assert_eq!(t.lines().count(), 12);
    assert!(fs::read_to_string(dir.path().join("t.py")).unwrap().contains("\"t.csv\""));

    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"contrast_c0":0.3,"t2_s":2.2e-6,"stretch_n":1.0,"counts_cps":1e5,"t_acq_s":2e-7,"t_prep_s":3e-6,"gyromagnetic":28e9}"#,
    )
    .unwrap();
    let o = smoothctl(
        dir.path(),
        &[
            "mag", "sweep", "--model", "model.json", "--tau", "1.2us", "--det", "-4MHz:4MHz:3", "--scale", "1",
            "--out", "s.csv", "--plot", "s.py",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let s = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(s.starts_with("detuning_hz,amplitude_scale,eta_t_per_sqrt_hz,pulse_set\n"));
    assert_eq!(s.lines().count(), 1 + 2 * 3);
    assert!(fs::read_to_string(dir.path().join("s.py")).unwrap().contains("LogNorm"));

    let fixed = smoothctl(
        dir.path(),
        &["mag", "sweep", "--det", "0", "--scale", "1", "--b-star", "0mT", "--out", "z.csv"],
    );
    assert!(fixed.status.success(), "{fixed:?}");
    // zero field sits on a fringe extremum, so the slope vanishes up to rounding
    let z = fs::read_to_string(dir.path().join("z.csv")).unwrap();
    for row in z.lines().skip(1) {
        let eta: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(eta > 1e6, "{row}");
    }
}
