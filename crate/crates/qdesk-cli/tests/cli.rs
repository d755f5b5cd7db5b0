use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn qdesk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdesk")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lists_every_preset() {
    let o = qdesk(&["list-presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["table1", "closure-map-r1", "fig-qrs-five-photon", "fock-pump-17", "fig-bs-estimations", "fig-probs", "fig-whole"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
    assert_eq!(text.matches("[long-running]").count(), 2);
}

#[test]
fn malformed_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "kind = \"bs-rates\"\n[params]\nn_mx = 40\n");
    let o = qdesk(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_mx"), "{}", stderr(&o));

    let cfg = write(dir.path(), "syntax.toml", "kind = \n");
    assert_eq!(qdesk(&["run", &cfg]).status.code(), Some(2));
}

#[test]
fn unknown_kind_and_preset_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", "kind = \"quantum-toaster\"\n");
    let o = qdesk(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quantum-toaster"));
    assert_eq!(qdesk(&["reproduce", "no-such-preset"]).status.code(), Some(2));
}

#[test]
fn long_running_presets_need_the_flag() {
    for preset in ["table1", "fig-whole"] {
        let o = qdesk(&["reproduce", preset]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("--long-running"));
    }
}

#[test]
fn numeric_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"pulsed-gate\"\n[params]\nnoise = \"full\"\nrealizations = 1\nfock = [3, 3]\ninitial_nbar = 1.0\n";
    let cfg = write(dir.path(), "trunc.toml", text);
    let o = qdesk(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn pulse_design_reports_the_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pd.toml", "kind = \"pulse-design\"\n[params]\nl = 13\nratio = 6.0\npoints = 101\n");
    let out = dir.path().join("o");
    assert!(qdesk(&["run", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let s = &manifest(&out)["summary"];
    assert!((s["f_closed"].as_f64().unwrap() - 0.0979).abs() < 5e-5);
    assert!((s["f_numeric"].as_f64().unwrap() - s["f_closed"].as_f64().unwrap()).abs() < 1e-6);
    let csv = std::fs::read_to_string(out.join("waveform.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
    assert!(csv.starts_with("t_s,F,rabi_hz\n"));
}

#[test]
fn rate_race_preset_passes_and_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = qdesk(&["reproduce", "fig-bs-estimations", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["toolkit"], "qdesk");
    assert_eq!(m["kind"], "bs-rates");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let header = std::fs::read_to_string(out.join("rates.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("N,R_atomic,R_photonic,R_classical"));
}

#[test]
fn missed_target_exits_1_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"bs-rates\"\n[[targets]]\npointer = \"/crossover_atomic\"\nmax = 2\n";
    let cfg = write(dir.path(), "t.toml", text);
    let out = dir.path().join("o");
    let o = qdesk(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL /crossover_atomic"));
    assert_eq!(manifest(&out)["checks"][0]["pass"], false);
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", "kind = \"bs-distribution\"\n[params]\nn = 2\nm = 4\ninstances = 5\n");
    let run = |tag: &str, seed: &str, workers: &str| {
        let out = dir.path().join(tag);
        let o = qdesk(&["run", &cfg, "--seed", seed, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(out.join("instances.csv")).unwrap(), std::fs::read(out.join("distribution.csv")).unwrap(), manifest(&out))
    };
    let (a1, a2, ma) = run("a", "11", "1");
    let (b1, b2, mb) = run("b", "11", "3");
    let (c1, _, mc) = run("c", "12", "1");
    assert_eq!(a1, b1);
    assert_eq!(a2, b2);
    assert_ne!(a1, c1);
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_ne!(ma["config_sha256"], mc["config_sha256"]);
    assert!(ma["summary"]["max_tv_distance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn json_configs_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "kind": "bs-loss",
        "seed": 3,
        "params": { "n": 2, "m": 4, "instances": 3 },
        "sweep": { "m_gamma_tau": [0.05, 1.0], "input": ["uniform", "standard"] }
    }"#;
    let cfg = write(dir.path(), "loss.json", text);
    let out = dir.path().join("o");
    let o = qdesk(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let points = manifest(&out)["summary"]["points"].as_array().unwrap().clone();
    assert_eq!(points.len(), 4);
    // axes expand in name order: input outermost
    assert_eq!(points[0]["input"], "uniform");
    assert_eq!(points[1]["m_gamma_tau"], 1.0);
    assert_eq!(points[0]["weak_loss_regime"], true);
    let csv = std::fs::read_to_string(out.join("instances.csv")).unwrap();
    assert!(csv.starts_with("input,m_gamma_tau,instance,seed,survival,fidelity\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
}

#[test]
fn output_precedence_and_default_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("kind = \"bs-rates\"\noutput = \"{}\"\n[params]\nn_max = 5\n", dir.path().join("from-config").display());
    let cfg = write(dir.path(), "o.toml", &text);
    assert!(qdesk(&["run", &cfg]).status.success());
    assert!(dir.path().join("from-config/manifest.json").exists());
    let flag = dir.path().join("from-flag");
    assert!(qdesk(&["run", &cfg, "--out", flag.to_str().unwrap()]).status.success());
    assert!(flag.join("rates.csv").exists());

    let plain = write(dir.path(), "plain.toml", "kind = \"bs-rates\"\n[params]\nn_max = 5\n");
    let o = Command::new(env!("CARGO_BIN_EXE_qdesk")).args(["run", &plain]).current_dir(dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("qdesk-out/plain/manifest.json").exists());
}
