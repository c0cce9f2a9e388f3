use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circulon::io::{model_from_json, model_to_json, Provenance};
use circulon::linalg::SparseReal;
use circulon::stark::BasisModel;
use serde_json::Value;

fn circulon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circulon")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> (i32, Option<Value>) {
    let mut args = vec![sub, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = circulon(&args);
    let code = out.status.code().unwrap();
    let summary = serde_json::from_slice(&out.stdout).ok();
    if code != 0 {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    (code, summary)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Two-level model written as a bundle, so optimizer runs are cheap.
fn toy_bundle(dir: &Path) -> PathBuf {
    let mut l = SparseReal::new(2, 2);
    l.push(1, 0, 1000.0);
    let model = BasisModel::toy(&[0.0, 3.5e-8], l, vec![0, 1], 2.0).unwrap();
    let p = dir.join("toy.json");
    std::fs::write(&p, model_to_json(&model, false, &Provenance::new(None)).unwrap()).unwrap();
    p
}

const TOY_PULSE: &str = r#"
model_file = "toy.json"
[states]
initial = 0
target = 1
[pulse]
kind = "flat-top"
amplitude_mv = 8.0
carrier_mhz = 230.0
t_stop_ns = 20.0
edge_ns = 4.0
"#;

#[test]
fn build_model_reports_the_ladder_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "out_dir = \"fresh\"\n");
    let (code, summary) = run("build-model", &cfg, &[]);
    assert_eq!(code, 0);
    let s = summary.unwrap();
    assert_eq!(s["dim"], 101);
    assert!((s["omega_0_mhz"].as_f64().unwrap() - 229.6).abs() < 0.2);
    let fresh_text = std::fs::read_to_string(dir.path().join("fresh/model.json")).unwrap();
    assert!(fresh_text.contains(s["provenance"]["config_sha256"].as_str().unwrap()));

    let cfg2 = write_config(dir.path(), "again.toml", "out_dir = \"again\"\nmodel_file = \"fresh/model.json\"\n");
    assert_eq!(run("build-model", &cfg2, &[]).0, 0);
    let again = model_from_json(&std::fs::read_to_string(dir.path().join("again/model.json")).unwrap()).unwrap();
    let fresh = model_from_json(&fresh_text).unwrap();
    assert_eq!(again.h0(), fresh.h0());
    assert_eq!(again.raising(), fresh.raising());
    assert_eq!(again.levels(), fresh.levels());
    assert_eq!(again.gaps(), fresh.gaps());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_config(dir.path(), "a.toml", "species_file = \"nope.txt\"\n");
    assert_eq!(run("build-model", &missing, &[]).0, 2);
    let unknown = write_config(dir.path(), "b.toml", "[model]\nn = 51\ncolour = 3\n");
    let out = circulon(&["build-model", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    assert_eq!(run("propagate", &dir.path().join("absent.toml"), &[]).0, 2);
    let no_pulse = write_config(dir.path(), "c.toml", "");
    assert_eq!(run("demodulate", &no_pulse, &[]).0, 2);
}

#[test]
fn unwritable_output_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    toy_bundle(dir.path());
    let cfg = write_config(dir.path(), "run.toml", TOY_PULSE);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(run("propagate", &cfg, &["--out", blocker.join("sub").to_str().unwrap()]).0, 3);
}

#[test]
fn propagate_pi_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[pulse]\nkind = \"flat-top\"\namplitude_mv = 18.0\ncarrier_mhz = 230.0\nt_stop_ns = 138.0\nedge_ns = 10.0\n";
    let cfg = write_config(dir.path(), "run.toml", text);
    let (code, s) = run("propagate", &cfg, &[]);
    assert_eq!(code, 0);
    let s = s.unwrap();
    assert!((s["fidelity"].as_f64().unwrap() - 0.81).abs() < 0.02);
    let table = std::fs::read_to_string(dir.path().join("out/trajectory.txt")).unwrap();
    assert!(table.contains("# config-sha256: ") && table.contains("# software: circulon"));
}

#[test]
fn demodulated_flat_top_is_real() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[pulse]\nkind = \"flat-top\"\namplitude_mv = 20.0\ncarrier_mhz = 230.0\nt_stop_ns = 60.0\nedge_ns = 20.0\n[demodulate]\ncarrier_mhz = 230.0\n";
    let cfg = write_config(dir.path(), "run.toml", text);
    assert_eq!(run("demodulate", &cfg, &[]).0, 0);
    let env = circulon::io::parse_envelope(&std::fs::read_to_string(dir.path().join("out/envelope.txt")).unwrap()).unwrap();
    // sin^2 edges leak slightly past the demodulation mask, see the pulse
    // module; on the plateau the envelope is real to 1e-3 of its amplitude
    for s in &env.samples()[1000..2000] {
        assert!((s.re - 20.0).abs() < 0.02 && s.im.abs() < 0.02, "{s}");
    }
}

#[test]
fn optimize_exit_codes_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    toy_bundle(dir.path());
    let capped = format!("{TOY_PULSE}[optimize]\ncheckpoint_every = 1\n[optimize.krotov]\nlambda = 2e-10\nmax_iterations = 2\nj_t_threshold = 1e-8\n");
    let cfg = write_config(dir.path(), "capped.toml", &capped);
    assert_eq!(run("optimize", &cfg, &[]).0, 4);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "iteration-cap");

    let lenient = capped.replace("checkpoint_every = 1", "checkpoint_every = 1\nrequire_convergence = false");
    let cfg = write_config(dir.path(), "lenient.toml", &lenient);
    assert_eq!(run("optimize", &cfg, &[]).0, 0);

    let resumed = format!("{TOY_PULSE}[optimize]\nresume = \"out/checkpoint.json\"\n[optimize.krotov]\nlambda = 2e-10\nmax_iterations = 500\nj_t_threshold = 1e-4\n");
    let cfg = write_config(dir.path(), "resume.toml", &resumed);
    let (code, s) = run("optimize", &cfg, &["--out", dir.path().join("resumed").to_str().unwrap()]);
    assert_eq!(code, 0);
    let s = s.unwrap();
    assert_eq!(s["status"], "converged");
    assert_eq!(s["j_t_monotonic"], true);
    let log = std::fs::read_to_string(dir.path().join("resumed/iterations.txt")).unwrap();
    // the resumed log continues the numbering of the checkpoint
    assert!(log.lines().any(|l| l.starts_with("3 ")));
}

#[test]
fn sweeps_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    toy_bundle(dir.path());
    let text = format!(
        "seed = 5\n{TOY_PULSE}[noise.rf]\nf_noise = [0.0, 0.1, 0.2]\nrealizations = 20\ncarrier_mhz = 230.0\n[noise.coarse]\nperiod_ns = 0.2\ndomain = \"quadrature\"\ncarrier_mhz = 230.0\n"
    );
    let cfg = write_config(dir.path(), "noise.toml", &text);
    let (code, a) = run("noise-sweep", &cfg, &[]);
    assert_eq!(code, 0);
    let (_, b) = run("noise-sweep", &cfg, &[]);
    assert_eq!(a, b);
    let (_, c) = run("noise-sweep", &cfg, &["--seed", "6"]);
    let (a, c) = (a.unwrap(), c.unwrap());
    assert_ne!(a["rf"][1]["mean"], c["rf"][1]["mean"]);
    assert_eq!(a["rf"][0]["std"].as_f64(), Some(0.0));

    let qsl = format!(
        "{TOY_PULSE}[qsl]\nt_stops_ns = [20.0, 10.0]\n[qsl.family]\ncarrier_mhz = 230.0\ndt_ns = 0.02\nedges_ns = [2.0]\nareas_mv_ns = [150.0]\n[qsl.optimize]\nlambda = 2e-10\nmax_iterations = 50\n"
    );
    let cfg = write_config(dir.path(), "qsl.toml", &qsl);
    let (code, s) = run("qsl-sweep", &cfg, &["--threads", "1"]);
    assert_eq!(code, 0);
    assert_eq!(s.unwrap()["points"], 2);
}
