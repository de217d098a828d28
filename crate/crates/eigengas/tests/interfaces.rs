//! External-surface tests: config files, CSV/JSONL/SVG artifacts, and the
//! command-line interface (including exit codes).

use std::path::{Path, PathBuf};
use std::process::Command;

use eigengas::harness::{self, RunConfig, SweepAxis};
use eigengas::hamiltonian::GateOp;
use eigengas::lzs;
use eigengas::noise::NoiseMode;

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eigengas-test-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn quick_cfg() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.operation = GateOp::OneOne;
    cfg.grid_points = 201;
    cfg.ensemble.n = 3;
    cfg.ensemble.seed = 11;
    cfg.sweep.values = vec![1e-4, 1e-3, 1e-2];
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigengas"))
}

#[test]
fn committed_configs_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).expect("configs directory") {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            RunConfig::load(&path)
                .unwrap_or_else(|e| panic!("config {} invalid: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5, "expected the committed experiment configs, found {seen}");
}

#[test]
fn jsonl_round_trip_reproduces_aggregates_exactly() {
    let cfg = quick_cfg();
    let speeds = cfg.sweep.values.clone();
    let result = harness::run_ensemble(&cfg, &speeds, None).unwrap();
    let dir = workdir("jsonl");
    let path = dir.join("records.jsonl");
    harness::write_jsonl(std::slice::from_ref(&result), &path).unwrap();
    let back = harness::read_jsonl(&path).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0], result);
    // Aggregates recomputed from the reloaded records are byte-identical.
    let recomputed = harness::aggregate(&back[0].records, &back[0].speeds);
    assert_eq!(recomputed, result.points);
}

#[test]
fn speed_sweep_reuses_crossings_consistently() {
    // Success recomputed from the stored events matches the value computed
    // from the trace-derived events for every stored speed.
    let cfg = quick_cfg();
    let speeds = cfg.sweep.values.clone();
    let rec = harness::run_realization(&cfg, 0, &speeds);
    assert!(rec.failed.is_none());
    let events: Vec<lzs::CrossingEvent> = rec
        .events
        .iter()
        .map(|e| lzs::CrossingEvent {
            lower: e.lower,
            lambda_star: e.lambda_star,
            delta_min: e.delta_min,
            coupling: e.coupling,
        })
        .collect();
    for sp in &rec.successes {
        let again = lzs::propagate(&events, 1.0 / sp.speed, 16).ground();
        assert!((again - sp.success).abs() <= 1e-12);
    }
}

#[test]
fn curve_csv_row_count_matches_axis() {
    let mut cfg = quick_cfg();
    cfg.sweep.axis = SweepAxis::Amplitude;
    cfg.sweep.values = vec![0.05, 0.1];
    cfg.sweep.at_speed = Some(1e-3);
    let curve = harness::sweep(&cfg, SweepAxis::Amplitude).unwrap();
    let csv = harness::curve_csv(&curve.points);
    assert_eq!(csv.lines().count(), 1 + cfg.sweep.values.len());
}

#[test]
fn cli_spectrum_writes_trace_and_gaps() {
    let dir = workdir("spectrum");
    let out = dir.join("trace.csv");
    let status = bin()
        .args([
            "spectrum",
            "--operation",
            "11->10",
            "--noise-mode",
            "off",
            "--grid-points",
            "101",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(text.starts_with("lambda,x_0"));
    let gaps = std::fs::read_to_string(dir.join("trace.gaps.csv")).unwrap();
    assert!(gaps.starts_with("lambda,gap_0"));
    assert_eq!(gaps.lines().count(), 102);
}

#[test]
fn cli_validate_exit_codes() {
    // A sound configuration validates (exit 0).
    let status = bin()
        .args([
            "validate",
            "--operation",
            "00->00",
            "--noise-mode",
            "off",
            "--grid-points",
            "201",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // An unreachable requirement turns into exit code 2.
    let status = bin()
        .args([
            "validate",
            "--operation",
            "00->00",
            "--noise-mode",
            "off",
            "--grid-points",
            "201",
            "--require",
            "15.9",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // A broken invocation is an error (exit 1).
    let status = bin()
        .args(["validate", "--operation", "definitely-not-a-gate"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_sweep_fit_tradeoff_and_svg_pipeline() {
    let dir = workdir("pipeline");
    let curve = dir.join("curve.csv");
    let jsonl = dir.join("runs.jsonl");

    // Small amplitude sweep through the CLI.
    let status = bin()
        .args([
            "sweep",
            "--axis",
            "amplitude",
            "--operation",
            "01->01",
            "--grid-points",
            "201",
            "--ensemble-n",
            "4",
            "--values",
            "0.04,0.09,0.14",
            "--at-speed",
            "1e-3",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&curve)
        .arg("--jsonl")
        .arg(&jsonl)
        .status()
        .unwrap();
    assert!(status.success());
    let points = harness::read_curve_csv(&curve).unwrap();
    assert_eq!(points.len(), 3);
    assert_eq!(harness::read_jsonl(&jsonl).unwrap().len(), 3);

    // Power-law fit of a synthetic curve file.
    let synthetic = dir.join("synthetic.csv");
    let mut text = String::from("axis,mean_success,stderr,mean_fidelity,fidelity_stderr\n");
    for k in 0..12 {
        let x = 1e-3 * 10f64.powf(k as f64 / 6.0);
        text.push_str(&format!("{x},{},0.0,1.0,0.0\n", 1e-4 * x.powf(-1.5)));
    }
    std::fs::write(&synthetic, text).unwrap();
    let output = bin()
        .args(["fit", "--p-min", "1e-6", "--p-max", "1.0", "--curve"])
        .arg(&synthetic)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("gamma = 1.5000"), "fit output: {stdout}");

    // Trade-off on a constructed curve with a known intersection.
    let tradeoff = dir.join("tradeoff.csv");
    let mut text = String::from("axis,mean_success,stderr,mean_fidelity,fidelity_stderr\n");
    for k in 0..=10 {
        let eps = k as f64 / 10.0;
        text.push_str(&format!("{eps},{},0.0,{},0.0\n", 0.2 + eps, 1.0 - eps));
    }
    std::fs::write(&tradeoff, text).unwrap();
    let output = bin().args(["tradeoff", "--curve"]).arg(&tradeoff).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("0.40000"), "tradeoff output: {stdout}");

    // SVG export of the sweep curve.
    let svg = dir.join("curve.svg");
    let status = bin()
        .args(["export-svg", "--linear-x", "--curve"])
        .arg(&curve)
        .arg("--out")
        .arg(&svg)
        .status()
        .unwrap();
    assert!(status.success());
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("mean fidelity"));
}

#[test]
fn cli_config_file_with_overrides() {
    let dir = workdir("config");
    let path = dir.join("run.json");
    let mut cfg = quick_cfg();
    cfg.noise.mode = NoiseMode::Off;
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = dir.join("trace.csv");
    let status = bin()
        .args(["spectrum", "--config"])
        .arg(&path)
        .args(["--grid-points", "51", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    // The override wins over the file value.
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 52);
}
