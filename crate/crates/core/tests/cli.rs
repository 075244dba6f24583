use std::path::Path;
use std::process::{Command, Output};

const SMALL_STRONG: &str = r#"
kind = "strong"
seed = 17
samples = 100

[mesh]
levels = [2, 3, 4]
reference = 6

[time]
dt_level = 6
probe = false

[noise]
kind = "power_decay"
rho = 2.0
k_trunc = 256
"#;

const NO_SIGNAL: &str = r#"
kind = "weak"
samples = 100

[mesh]
levels = [2, 3, 4]
reference = 6

[time]
dt_level = 4

[noise]
kind = "power_decay"
k_trunc = 64

[functional]
kind = "constant"
value = 1.0
"#;

fn sacfem(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sacfem"));
    cmd.args(args).env_remove("SACFEM_OUT");
    if let Some(dir) = out_env {
        cmd.env("SACFEM_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn selftest_exits_zero() {
    let out = sacfem(&["selftest"], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS ")).count() >= 10, "{stdout}");
    assert!(!stdout.contains("FAIL "));
}

#[test]
fn study_reruns_are_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SMALL_STRONG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = sacfem(&["study", &cfg, "--workers", "1", "--out", a.to_str().unwrap()], None);
    assert!(ra.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    let rb = sacfem(&["study", &cfg, "--workers", "3", "--out", b.to_str().unwrap()], None);
    assert!(rb.status.success());
    assert_eq!(read(a.join("strong.csv")), read(b.join("strong.csv")));

    let csv = read(a.join("strong.csv"));
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# sacfem ") && header.contains("seed=17") && header.contains("config_hash="));
    assert_eq!(lines.next(), Some("level,h,error,stderr,usable"));
    assert_eq!(lines.count(), 3);

    let json: serde_json::Value = serde_json::from_str(&read(a.join("strong.json"))).unwrap();
    for k in ["slope", "ci_lo", "ci_hi", "levels", "seed", "config_hash", "runtime_seconds", "version"] {
        assert!(json.get(k).is_some(), "{k} missing");
    }
    assert_eq!(json["seed"], 17);
    assert!(header.contains(json["config_hash"].as_str().unwrap()));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SMALL_STRONG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(sacfem(&["study", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    assert!(sacfem(&["study", &cfg, "--seed", "99", "--out", b.to_str().unwrap()], None).status.success());
    let (ca, cb) = (read(a.join("strong.csv")), read(b.join("strong.csv")));
    assert!(cb.lines().next().unwrap().contains("seed=99"));
    assert_ne!(ca.lines().nth(2), cb.lines().nth(2));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SMALL_STRONG);
    let env_dir = tmp.path().join("from-env");
    let out = sacfem(&["study", &cfg], Some(&env_dir));
    assert!(out.status.success());
    assert!(env_dir.join("strong.csv").exists());
    assert!(env_dir.join("strong.json").exists());

    let flag_dir = tmp.path().join("from-flag");
    assert!(sacfem(&["study", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir)).status.success());
    assert!(flag_dir.join("strong.csv").exists());
}

#[test]
fn trajectory_writes_checkpointed_nodal_values() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_STRONG.replace("probe = false", "probe = false\ncheckpoint_stride = 16");
    let cfg = write_config(tmp.path(), "s.toml", &text);
    let dir = tmp.path().join("t");
    let out = sacfem(&["trajectory", &cfg, "--sample", "3", "--out", dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.join("trajectory.csv"));
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("sample=3"));
    assert_eq!(lines.next(), Some("step,t,node,x,value"));
    // finest tested level 2^-4: 15 interior nodes, 64 steps at stride 16 → 5 states
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 5 * 15);
    assert_eq!(rows.last().unwrap()[0], "64");
    assert!((rows.last().unwrap()[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let json: serde_json::Value = serde_json::from_str(&read(dir.join("trajectory.json"))).unwrap();
    assert_eq!(json["n_steps"], 64);
    assert!(json.get("runtime_seconds").is_some());

    let again = tmp.path().join("t2");
    assert!(sacfem(&["trajectory", &cfg, "--sample", "3", "--out", again.to_str().unwrap()], None).status.success());
    assert_eq!(csv, read(again.join("trajectory.csv")));
}

#[test]
fn invalid_config_exits_one_with_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "kind = \"strong\"\n[drift]\ncoeffs = [0.0, 1.0, 0.0, 1.0]\n");
    let out = sacfem(&["study", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("one-sided Lipschitz violated"));

    let missing = sacfem(&["study", "/nonexistent/config.toml"], Some(tmp.path()));
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn study_without_fit_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "w.toml", NO_SIGNAL);
    let out = sacfem(&["study", &cfg, "--out", tmp.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no fit"));
    assert!(tmp.path().join("o/weak.csv").exists());
}
