use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wgent(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wgent"));
    cmd.args(args).env_remove("WGENT_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("wgent runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

const SMALL: &str =
    "experiment = \"intensity-vs-z\"\nn_sites = 21\nz_max = 1.0\nsample_every = 0.25\ng_grid = [1.5, 2.2]\n";

#[test]
fn lists_every_experiment() {
    let o = wgent(&["list-experiments"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "intensity-profile",
        "intensity-vs-z",
        "entangle-map",
        "stationary-sweep",
        "survival-distance",
        "noise-evolution",
        "oracle-check",
        "kernel-check",
        "threshold-scan",
        "purity-check",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
}

#[test]
fn validate_accepts_and_rejects_with_line_numbers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    assert!(wgent(&["validate", "--config", &cfg], &[]).status.success());

    let cfg = write_config(tmp.path(), "experiment = \"intensity-vs-z\"\nn_sites = 21\nbogus = 3\n");
    let o = wgent(&["validate", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:3:1"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "experiment = \"intensity-vs-z\"\nn_sites = 20\n");
    let o = wgent(&["validate", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:2:"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "experiment = \"no-such-thing\"\n");
    assert_eq!(wgent(&["validate", "--config", &cfg], &[]).status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = wgent(&["validate", "--config", "/nonexistent/cfg.toml"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_writes_csv_and_metadata() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}json = true\n"));
    let out = tmp.path().join("out");
    let o = wgent(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet", "--seed", "17"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stderr.is_empty(), "quiet run printed {}", stderr(&o));

    let csv = fs::read_to_string(out.join("intensity-vs-z.csv")).unwrap();
    let mut lines = csv.lines();
    let meta: Vec<&str> = lines.by_ref().take_while(|l| l.starts_with('#')).collect();
    assert!(meta.contains(&"# experiment: intensity-vs-z"));
    assert!(meta.contains(&"# seed: 17"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "case,g,gamma,n_sites,z,intensity");
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 2 * 5);
    assert_eq!(rows[0], "degenerate,1.5,0,21,0,0");
    assert!(rows[9].starts_with("degenerate,2.2,0,21,1,"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("intensity-vs-z.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 10);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("intensity-vs-z.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 17);
    assert_eq!(meta["config"]["seed"], 17);
    assert_eq!(meta["config"]["dz"], 0.01);
    assert_eq!(meta["config"]["n_sites"], 21);
    assert_eq!(meta["config"]["out_dir"], out.to_str().unwrap());
    assert!(meta["version"].is_string());
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"oracle-check\"\nn_sites = 5\ngamma = 1e-3\nz_max = 1.0\npaths = 130\nseed = 9\njson = true\n",
    );
    let dir = tmp.path().join("same");
    let run = |workers: &str| {
        let o = wgent(&["run", "--config", &cfg, "--quiet", "--out", dir.to_str().unwrap(), "--workers", workers], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        files(&dir)
    };
    let first = run("1");
    let second = run("4");
    assert_eq!(first.len(), 5);
    assert_eq!(first, second);
}

#[test]
fn set_overrides_win_and_bad_ones_are_blamed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = wgent(
        &[
            "run",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--quiet",
            "--set",
            "g_grid=[0.5]",
            "--set",
            "z_max=0.5",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("intensity-vs-z.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("degenerate,0.5,")));

    let o = wgent(&["validate", "--config", &cfg, "--set", "dz=-1"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--set dz=-1"), "{}", stderr(&o));
    let o = wgent(&["validate", "--config", &cfg, "--set", "nope=1"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = wgent(&["validate", "--config", &cfg, "--set", "novalue"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_blow_up_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"intensity-vs-z\"\nn_sites = 3\nc_s = 0.0\ng = 400.0\ndz = 0.05\nz_max = 200.0\nsample_every = 1.0\n",
    );
    let out = tmp.path().join("o");
    let o = wgent(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical failure"), "{}", stderr(&o));
}

#[test]
fn worker_env_is_honoured_and_flag_wins() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let args = ["run", "--config", cfg.as_str(), "--out", out.to_str().unwrap(), "--quiet"];
    assert_eq!(wgent(&args, &[("WGENT_WORKERS", "0")]).status.code(), Some(2));
    assert_eq!(wgent(&args, &[("WGENT_WORKERS", "many")]).status.code(), Some(2));
    assert!(wgent(&args, &[("WGENT_WORKERS", "2")]).status.success());
    let mut with_flag = args.to_vec();
    with_flag.extend(["--workers", "2"]);
    assert!(wgent(&with_flag, &[("WGENT_WORKERS", "many")]).status.success());
}

#[test]
fn progress_goes_to_stderr() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = wgent(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("intensity-vs-z done"));
}
