use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn viscofit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscofit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_noise_fit_cluster_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = viscofit(d, &["simulate", "--intervals", "200", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("out/data.meta.json").exists());

    let o = viscofit(
        d,
        &[
            "add-noise",
            "out/data.csv",
            "--level",
            "0.01",
            "--seed",
            "4",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&o), 0);
    let noisy = fs::read_to_string(d.join("out/noisy.csv")).unwrap();
    assert!(noisy.starts_with("t,sigma\n"));
    assert!(!noisy.contains('\r'));

    let o = viscofit(
        d,
        &[
            "fit",
            "out/noisy.csv",
            "--starts",
            "6",
            "--max-elements",
            "4",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = viscofit(
        d,
        &[
            "cluster",
            "out/noisy.csv",
            "--fit",
            "out/fit.json",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/clustered.json")).unwrap()).unwrap();
    assert!(report["element_count"].as_u64().unwrap() >= 1);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.json"),
        r#"{"rate": 10.0, "horizon": 30.0, "intervals": 30}"#,
    )
    .unwrap();
    let o = viscofit(
        d,
        &["simulate", "--config", "sim.json", "--intervals", "60"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("data.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["program"]["rate"], 10.0);
    assert_eq!(meta["program"]["horizon"], 30.0);
    assert_eq!(
        fs::read_to_string(d.join("data.csv"))
            .unwrap()
            .lines()
            .count(),
        62
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // domain error in the loading program
    assert_eq!(code(&viscofit(d, &["simulate", "--rate", "-1"])), 2);
    fs::write(d.join("bad.json"), r#"{"starts": 0}"#).unwrap();
    assert_eq!(code(&viscofit(d, &["simulate", "--intervals", "20"])), 0);
    assert_eq!(
        code(&viscofit(d, &["fit", "data.csv", "--config", "bad.json"])),
        2
    );
    fs::write(d.join("broken.json"), "{").unwrap();
    assert_eq!(
        code(&viscofit(
            d,
            &["fit", "data.csv", "--config", "broken.json"]
        )),
        2
    );
    assert_eq!(code(&viscofit(d, &["fit", "missing.csv"])), 4);
    fs::write(d.join("data.csv"), "t,sigma\n0,abc\n").unwrap();
    assert_eq!(code(&viscofit(d, &["fit", "data.csv"])), 4);
    assert_eq!(code(&viscofit(d, &["no-such-command"])), 2);
}

#[test]
fn sweep_writes_report_and_report_reemits_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{
        "replicas": 2,
        "intervals": 200,
        "variants": [{"name": "none", "fit": {"max_elements": 3, "starts": 4}}]
    }"#;
    fs::write(d.join("sweep.json"), cfg).unwrap();
    let o = viscofit(
        d,
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--seed",
            "11",
            "--out-dir",
            "a",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "noise_sweep.json",
        "noise_sweep_replicas.csv",
        "noise_sweep_summary.csv",
        "noise_sweep_box_tau_1.svg",
    ] {
        assert!(d.join("a").join(f).exists(), "{f}");
    }
    let rows = fs::read_to_string(d.join("a/noise_sweep_replicas.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().starts_with("none,0,11,"));

    let o = viscofit(d, &["report", "a/noise_sweep.json", "--out-dir", "b"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("spearman"));
    assert_eq!(
        fs::read(d.join("a/noise_sweep_box_tau_1.svg")).unwrap(),
        fs::read(d.join("b/noise_sweep_box_tau_1.svg")).unwrap()
    );
}

#[test]
fn decompose_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("m.json"),
        r#"{"base_stiffness": 2.0, "elements": [{"stiffness": 1.0, "relaxation_time": 5.0}]}"#,
    )
    .unwrap();
    let o = viscofit(
        d,
        &[
            "decompose",
            "--model",
            "m.json",
            "--intervals",
            "10",
            "--horizon",
            "40",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("decomposition.csv")).unwrap();
    assert!(csv.starts_with("t,strain,spring,element_1,total\n"));
    assert!(d.join("decomposition.svg").exists());
}
