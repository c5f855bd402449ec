use std::path::{Path, PathBuf};
use std::process::Command;

use specbayes_cli::config::ExperimentConfig;
use specbayes_cli::{execute, CliError};

const BIN: &str = env!("CARGO_BIN_EXE_specbayes");

fn repo_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

const NULL_CONFIG: &str = r#"
seed = 3
theta0 = [0.4]

[model]
p = 1
q = 0

[h.one]
kind = "constant"
value = 1.0

[[jobs]]
kind = "dominance-experiment"
name = "null"
h = "one"
grid = { kind = "box", lower = [-0.8], upper = [0.8], per_axis = 5 }
n_grid = [40, 80]
reps = { kind = "fixed", reps = 30 }
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_bin(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPECBAYES_JOBS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn repo_configs_round_trip_and_validate() {
    let configs = repo_configs();
    assert!(configs.len() >= 3);
    for path in configs {
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let canonical = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&canonical).unwrap();
        assert_eq!(back, cfg, "{}", path.display());
        assert_eq!(back.to_toml().unwrap(), canonical);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn hash_tracks_effective_values_only() {
    let a = ExperimentConfig::from_toml(NULL_CONFIG).unwrap();
    let spaced = NULL_CONFIG.replace("seed = 3", "seed    =    3   # same");
    let b = ExperimentConfig::from_toml(&spaced).unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    let explicit = NULL_CONFIG.replace("theta0 = [0.4]", "theta0 = [0.4]\noutput_dir = \"out\"");
    assert_eq!(ExperimentConfig::from_toml(&explicit).unwrap().hash().unwrap(), a.hash().unwrap());
    let mut c = a.clone();
    c.seed = 4;
    assert_ne!(c.hash().unwrap(), a.hash().unwrap());
    assert_eq!(a.hash().unwrap().len(), 64);
}

fn config_error(text: &str) -> (String, String) {
    let err = ExperimentConfig::from_toml(text).and_then(|c| c.validate().map(|_| ()));
    match err {
        Err(CliError::ConfigInvalid { key, message }) => (key, message),
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
}

#[test]
fn invalid_configs_name_the_offending_key() {
    let (key, _) = config_error(&NULL_CONFIG.replace("n_grid = [40, 80]", "n_grid = []"));
    assert_eq!(key, "jobs[0].n_grid");
    let (key, _) = config_error(&NULL_CONFIG.replace("n_grid = [40, 80]", "n_grid = [40, 80]\nn_gird = [1]"));
    assert_eq!(key, "n_gird");
    let (key, _) = config_error(&NULL_CONFIG.replace("theta0 = [0.4]", "theta0 = [1.4]"));
    assert_eq!(key, "theta0");
    let (key, _) = config_error(&NULL_CONFIG.replace("h = \"one\"", "h = \"two\""));
    assert_eq!(key, "jobs[0].h");
    let (key, _) = config_error(&NULL_CONFIG.replace("[model]", "[numerics.fit]\nmax_iters = 3\n\n[model]"));
    assert_eq!(key, "max_iters");
    let (key, _) = config_error(&NULL_CONFIG.replace("reps = 30", "reps = 1"));
    assert_eq!(key, "jobs[0].reps.reps");
    let (key, _) = config_error(&NULL_CONFIG.replace("value = 1.0", "value = -1.0"));
    assert_eq!(key, "h.one.value");
}

#[test]
fn empty_n_grid_exits_with_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &NULL_CONFIG.replace("n_grid = [40, 80]", "n_grid = []"));
    let out = dir.path().join("out");
    let (code, _, stderr) = run_bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code, 1);
    assert!(stderr.contains("n_grid"), "{stderr}");
    assert!(!out.exists());
    let (code, _, _) = run_bin(&["run", dir.path().join("missing.toml").to_str().unwrap()], &[]);
    assert_eq!(code, 1);
    let (code, _, _) = run_bin(&["run", cfg.to_str().unwrap(), "--jobs", "0"], &[]);
    assert_eq!(code, 1);
    let (code, _, _) = run_bin(&["bogus"], &[]);
    assert_eq!(code, 1);
    let (code, stdout, _) = run_bin(&["--help"], &[]);
    assert_eq!(code, 0);
    assert!(stdout.contains("run"));
}

#[test]
fn null_control_reports_zero_difference_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL_CONFIG);
    let out = dir.path().join("out");
    let (code, stdout, stderr) = run_bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("PASS null/null-control"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let job = &summary["jobs"][0];
    assert_eq!(summary["passed"], true);
    for cell in job["result"]["cells"].as_array().unwrap() {
        assert_eq!(cell["diff"]["mean"], 0.0);
    }
    let sh = &job["result"]["superharmonic"];
    assert_eq!(sh["pass"], true);
    assert!(sh["margin"].as_f64().unwrap() >= 0.0);
    assert_eq!(sh["worst_node"].as_array().unwrap().len(), 1);
    let csv = std::fs::read_to_string(out.join("null.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "config_hash,n,reps,risk_jeffreys,risk_h,diff,diff_se,n2_diff,asymptote,floored_count,seed"
    );
    let hash = summary["config_hash"].as_str().unwrap();
    assert!(lines.all(|l| l.starts_with(hash)));
    let svg = std::fs::read_to_string(out.join("null.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="series""#).count(), 3);
    assert!(svg.contains(r#"data-label="Jeffreys""#) && svg.contains(r#"data-label="Jeffreys × one""#));
    assert_eq!(svg.matches(r#"class="reference" data-label="asymptote""#).count(), 1);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert!(meta["started_unix"].as_f64().unwrap() > 0.0);
}

#[test]
fn verdict_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = NULL_CONFIG.replace("[h.one]", "[h.up]\nkind = \"power-affine\"\nintercept = 2.0\nslopes = [1.0]\npower = 3.0\n\n[h.one]");
    let text = text.replace("h = \"one\"", "h = \"up\"");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let (code, stdout, _) = run_bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--formats", "json"], &[]);
    assert_eq!(code, 2, "{stdout}");
    assert!(stdout.contains("FAIL null/superharmonic"));
    let names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    let mut names = names;
    names.sort();
    assert_eq!(names, ["metadata.json", "summary.json"]);
}

#[test]
fn repeated_runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &std::fs::read_to_string(repo_configs().into_iter().find(|p| p.ends_with("smoke.toml")).unwrap()).unwrap());
    let mut payloads = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let (code, stdout, stderr) =
            run_bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"], &[("SPECBAYES_JOBS", workers)]);
        assert!(code == 0 || code == 2, "{stdout}{stderr}");
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "metadata.json")
            .collect();
        files.sort();
        payloads.push(files.iter().map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap())).collect::<Vec<_>>());
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["workers"].as_u64().unwrap().to_string(), *workers);
    }
    assert_eq!(payloads[0].len(), 8);
    assert_eq!(payloads[0], payloads[1]);
}

#[test]
fn library_entry_point_is_deterministic() {
    let cfg = ExperimentConfig::from_toml(NULL_CONFIG).unwrap();
    let a = execute(&cfg, Some(1), |_, _| {}).unwrap();
    let b = execute(&cfg, Some(2), |_, _| {}).unwrap();
    assert_eq!(a.jobs[0].table.to_csv().unwrap(), b.jobs[0].table.to_csv().unwrap());
    assert_eq!(a.summary_json(), b.summary_json());
}
