use std::path::PathBuf;

use proptest::prelude::*;
use sacfem::config::{parse_config, NoiseFamily, StudyConfig, StudyKind};
use sacfem::experiments::{fit_rate, run_study, LevelEstimate, RunOptions, StudyOutput, TestFunctional};

fn one() -> RunOptions {
    RunOptions { workers: 1 }
}

fn small(kind: StudyKind) -> StudyConfig {
    let mut cfg = StudyConfig::new(kind);
    cfg.seed = 42;
    cfg.samples = 400;
    cfg.mesh.levels = vec![2, 3, 4];
    cfg.mesh.reference = Some(6);
    cfg.time.dt_level = 6;
    cfg.time.probe = false;
    cfg.noise.kind = NoiseFamily::PowerDecay;
    cfg.noise.k_trunc = 256;
    cfg
}

#[test]
fn shipped_configs_parse_with_distinct_hashes() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut hashes = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&std::fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            hashes.push(cfg.hash());
        }
    }
    assert!(hashes.len() >= 8);
    let n = hashes.len();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), n);
}

#[test]
fn linear_weak_errors_match_gaussian_closed_form() {
    let mut cfg = small(StudyKind::Weak);
    cfg.samples = 1000;
    cfg.time.dt_level = 5;
    cfg.drift.coeffs = vec![0.0];
    cfg.functional = Some(TestFunctional::Cosine { direction: vec![1.0, 0.0, 0.5] });
    let out = run_study(&cfg, &one()).unwrap();
    let r = out.reports()[0];
    let signed = r.diagnostics.signed_errors.as_ref().unwrap();
    let oracle = r.diagnostics.oracle_errors.as_ref().expect("oracle applies to linear cosine studies");
    for ((lv, s), o) in r.levels.iter().zip(signed).zip(oracle) {
        assert!((s - o).abs() <= 4.0 * lv.stderr, "level {}: {s} vs {o} ± {}", lv.level, lv.stderr);
        assert_eq!(lv.error, s.abs());
    }
}

#[test]
fn oracle_is_withheld_for_nonlinear_drift() {
    let mut cfg = small(StudyKind::Weak);
    cfg.samples = 100;
    cfg.functional = Some(TestFunctional::Cosine { direction: vec![1.0] });
    let out = run_study(&cfg, &one()).unwrap();
    assert!(out.reports()[0].diagnostics.oracle_errors.is_none());
}

#[test]
fn strong_errors_decrease_and_probe_is_recorded() {
    let mut cfg = small(StudyKind::Strong);
    cfg.samples = 100;
    cfg.time.probe = true;
    cfg.time.probe_samples = Some(20);
    let out = run_study(&cfg, &one()).unwrap();
    let r = out.reports()[0];
    assert!(r.diagnostics.monotone, "{:?}", r.levels);
    assert_eq!(r.diagnostics.coupling, "exact");
    assert_eq!(r.diagnostics.aborted, 0);
    let p = r.diagnostics.probe.expect("probe ran");
    assert_eq!(p.samples, 20);
    assert!(p.temporal_error > 0.0 && p.ratio.is_finite());
    assert_eq!(r.expected_slope, Some(1.0));
}

#[test]
fn jittered_meshes_fall_back_to_increment_coupling() {
    let mut cfg = small(StudyKind::Strong);
    cfg.samples = 100;
    cfg.mesh.jitter = 0.1;
    cfg.mesh.jitter_seed = 3;
    let out = run_study(&cfg, &one()).unwrap();
    let r = out.reports()[0];
    assert_eq!(r.diagnostics.coupling, "increment");
    assert!(r.levels.iter().all(|l| l.error.is_finite() && l.error > 0.0));
    assert!(r.fit.is_some());
}

#[test]
fn splitting_dt_study_is_first_order() {
    let mut cfg = StudyConfig::new(StudyKind::SplittingDt);
    cfg.seed = 8;
    cfg.samples = 100;
    cfg.time.mesh_level = 4;
    cfg.time.dt_levels = vec![3, 4, 5, 6];
    cfg.time.dt_reference = 10;
    cfg.noise.k_trunc = 256;
    let out = run_study(&cfg, &one()).unwrap();
    let r = out.reports()[0];
    assert_eq!(r.levels.iter().map(|l| l.level).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
    assert!((r.levels[0].h - 0.125).abs() < 1e-15);
    let s = r.slope().unwrap();
    assert!((s - 1.0).abs() < 0.25, "slope {s}");
}

#[test]
fn operator_study_stability_case_is_bounded() {
    let cfg = parse_config(
        "kind = \"operators\"\n[mesh]\nlevels = [3, 4, 5]\n[[operators.cases]]\ns = 0.0\nr = 0.0\nprojection = \"l2\"\n\
         [[operators.cases]]\ns = 1.0\nr = 2.0\nprojection = \"ritz\"\n",
    )
    .unwrap();
    let out = run_study(&cfg, &one()).unwrap();
    let reps = out.reports();
    assert_eq!(reps.len(), 2);
    assert!(reps[0].levels.iter().all(|l| l.error <= 1.0 + 1e-9 && l.stderr == 0.0));
    assert!((reps[1].slope().unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn moment_study_reports_every_quantity() {
    let mut cfg = small(StudyKind::Moments);
    cfg.samples = 100;
    cfg.mesh.reference = None;
    cfg.time.checkpoint_stride = 16;
    cfg.initial.modes = vec![0.0];
    let StudyOutput::Moments(m) = run_study(&cfg, &one()).unwrap() else {
        panic!("moment study returned rate reports");
    };
    let labels: Vec<String> = m.reports().iter().map(|r| r.file_stem()).collect();
    assert_eq!(labels, ["moments_z_sup", "moments_z_l2", "moments_x_sup"]);
    for q in ["z_sup", "z_l2", "x_sup"] {
        let g = m.growth_of(q).unwrap();
        assert!(g.power.is_some() && g.log_power.is_some(), "{q}");
    }
    for r in m.reports() {
        assert!(r.levels.iter().all(|l| l.error > 0.0 && l.error.is_finite()));
    }
}

proptest! {
    #[test]
    fn fit_recovers_power_laws(p in 0.2f64..3.0, c in 0.01f64..100.0, first in 1i32..5, n in 3usize..7) {
        let est: Vec<LevelEstimate> = (first..first + n as i32)
            .map(|l| {
                let h = 2f64.powi(-l);
                LevelEstimate { level: l, h, error: c * h.powf(p), stderr: 0.0, usable: true }
            })
            .collect();
        let f = fit_rate(&est).unwrap();
        prop_assert!((f.slope - p).abs() < 1e-9);
    }

    #[test]
    fn fit_slope_is_scale_invariant(
        errs in prop::collection::vec(1e-4f64..1.0, 4),
        rel in prop::collection::vec(0.01f64..0.2, 4),
        scale in 1e-3f64..1e3,
    ) {
        let est = |s: f64| -> Vec<LevelEstimate> {
            errs.iter().zip(&rel).enumerate().map(|(i, (e, r))| LevelEstimate {
                level: i as i32 + 2,
                h: 2f64.powi(-(i as i32) - 2),
                error: s * e,
                stderr: s * e * r,
                usable: true,
            }).collect()
        };
        let a = fit_rate(&est(1.0)).unwrap();
        let b = fit_rate(&est(scale)).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9 * (1.0 + a.slope.abs()));
        prop_assert!(a.ci_lo <= a.slope && a.slope <= a.ci_hi);
    }
}
