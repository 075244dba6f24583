use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sacfem_ffi::*;

const TINY_OPERATORS: &str = r#"
kind = "operators"

[mesh]
levels = [3, 4, 5]

[[operators.cases]]
s = 0.0
r = 2.0
projection = "l2"
"#;

fn last_error() -> String {
    let p = sacfem_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> Result<*mut SacfemConfig, (SacfemStatus, String)> {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    match unsafe { sacfem_config_parse(text.as_ptr(), &mut cfg) } {
        SacfemStatus::Ok => Ok(cfg),
        s => Err((s, last_error())),
    }
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    sacfem_string_free(s);
    out
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sacfem_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn operator_study_round_trip() {
    let cfg = parse(TINY_OPERATORS).unwrap();
    unsafe {
        let mut hash = ptr::null_mut();
        assert_eq!(sacfem_config_hash(cfg, &mut hash), SacfemStatus::Ok);
        let hash = take(hash);
        assert_eq!(hash.len(), 16);

        let mut study = ptr::null_mut();
        assert_eq!(sacfem_study_run(cfg, 1, &mut study), SacfemStatus::Ok);
        let mut n = 0usize;
        assert_eq!(sacfem_study_report_count(study, &mut n), SacfemStatus::Ok);
        assert_eq!(n, 1);
        let mut slope = 0.0;
        assert_eq!(sacfem_study_slope(study, 0, &mut slope), SacfemStatus::Ok);
        assert!((slope - 2.0).abs() < 0.1, "{slope}");

        let mut csv = ptr::null_mut();
        assert_eq!(sacfem_study_csv(study, 0, &mut csv), SacfemStatus::Ok);
        let csv = take(csv);
        assert_eq!(csv.lines().nth(1), Some("level,h,error,stderr,usable"));
        assert!(csv.contains(&hash));

        let mut json = ptr::null_mut();
        assert_eq!(sacfem_study_json(study, 0, 0.5, &mut json), SacfemStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["config_hash"], hash.as_str());
        assert!((v["slope"].as_f64().unwrap() - slope).abs() <= 1e-14);

        assert_eq!(sacfem_study_slope(study, 1, &mut slope), SacfemStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        sacfem_study_free(study);
        sacfem_config_free(cfg);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let (status, msg) = parse("kind = \"strong\"\n[drift]\ncoeffs = [0.0, 1.0, 0.0, 1.0]\n").unwrap_err();
    assert_eq!(status, SacfemStatus::Config);
    assert!(msg.contains("one-sided Lipschitz violated"), "{msg}");

    let (status, _) = parse("kind = \"strong\"\nbogus = 1\n").unwrap_err();
    assert_eq!(status, SacfemStatus::Config);

    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(sacfem_config_parse(ptr::null(), &mut cfg), SacfemStatus::NullArgument);
        assert!(cfg.is_null());
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(sacfem_config_parse(bad.as_ptr().cast(), &mut cfg), SacfemStatus::InvalidUtf8);
        let mut n = 0usize;
        assert_eq!(sacfem_study_report_count(ptr::null(), &mut n), SacfemStatus::NullArgument);
        assert_eq!(sacfem_config_set_seed(ptr::null_mut(), 1), SacfemStatus::NullArgument);
        sacfem_string_free(ptr::null_mut());
        sacfem_config_free(ptr::null_mut());
        sacfem_study_free(ptr::null_mut());
    }
}

#[test]
fn seed_override_changes_hash() {
    let cfg = parse("kind = \"strong\"").unwrap();
    unsafe {
        let mut a = ptr::null_mut();
        sacfem_config_hash(cfg, &mut a);
        assert_eq!(sacfem_config_set_seed(cfg, 99), SacfemStatus::Ok);
        let mut b = ptr::null_mut();
        sacfem_config_hash(cfg, &mut b);
        assert_ne!(take(a), take(b));
        sacfem_config_free(cfg);
    }
}

#[test]
fn selftest_passes() {
    let mut failed = 1u32;
    assert_eq!(unsafe { sacfem_selftest(&mut failed) }, SacfemStatus::Ok);
    assert_eq!(failed, 0);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/sacfem.h")).unwrap();
    for name in [
        "sacfem_last_error",
        "sacfem_version",
        "sacfem_string_free",
        "sacfem_config_parse",
        "sacfem_config_free",
        "sacfem_config_set_seed",
        "sacfem_config_hash",
        "sacfem_study_run",
        "sacfem_study_free",
        "sacfem_study_report_count",
        "sacfem_study_slope",
        "sacfem_study_csv",
        "sacfem_study_json",
        "sacfem_selftest",
        "SACFEM_STATUS_NULL_ARGUMENT",
        "typedef struct SacfemStudy SacfemStudy",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compile and run a C client against the static library and header.
#[test]
fn c_client_links_against_static_library() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // the library is built next to the test executable in target/<profile>/deps
    let lib = std::env::current_exe().unwrap().parent().unwrap().join("libsacfem_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("client");
    let status = Command::new(cc)
        .arg(manifest.join("tests/client.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "client failed: {stdout} {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("slope 2.0"), "{stdout}");
}
