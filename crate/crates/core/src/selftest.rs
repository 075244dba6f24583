//! Fast built-in checks: closed-form examples of every layer and the
//! invariants of the study harness. Each finishes in well under a second.

use std::f64::consts::PI;

use crate::config::{parse_config, StudyConfig, StudyKind};
use crate::dynamics::PolynomialDrift;
use crate::experiments::{fit_rate, run_study, LevelEstimate, RunOptions, TestFunctional};
use crate::fem::{operator_error_norm, ErrorOperator, FemSpace};
use crate::noise::{CovarianceSpec, StreamKey, fill_increments};
use crate::spectral::{SpectralBasis, SpectralCoeffs};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> std::result::Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("spectral_eigenpairs", spectral_eigenpairs),
    ("fem_uniform_eigenvalues", fem_uniform_eigenvalues),
    ("projection_reproduces_vh", projection_reproduces_vh),
    ("operator_norm_orders", operator_norm_orders),
    ("increment_streams_deterministic", increment_streams_deterministic),
    ("allen_cahn_flow_closed_form", allen_cahn_flow_closed_form),
    ("rate_fit_exact_power_laws", rate_fit_exact_power_laws),
    ("config_validation", config_validation),
    ("deterministic_strong_study", deterministic_strong_study),
    ("constant_functional_has_zero_weak_error", constant_functional_weak),
    ("worker_count_does_not_change_reports", worker_count_invariance),
];

pub fn run_selftest() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: crate::Error) -> String {
    e.to_string()
}

fn spectral_eigenpairs() -> std::result::Result<String, String> {
    let b = SpectralBasis::new(1.0, 8).map_err(err)?;
    let l1 = b.eigenvalue(1).map_err(err)?;
    ensure((l1 - PI * PI).abs() < 1e-12, || format!("λ_1 = {l1}"))?;
    let s = b.semigroup_apply(0.1, &SpectralCoeffs::mode(8, 1)).map_err(err)?;
    let want = (-0.1 * PI * PI).exp();
    ensure((s.0[0] - want).abs() < 1e-14, || format!("S(0.1)e_1 = {}", s.0[0]))?;
    Ok(format!("λ_1 = {l1:.12}"))
}

fn fem_uniform_eigenvalues() -> std::result::Result<String, String> {
    let space = FemSpace::uniform(1.0, 32).map_err(err)?;
    let h = space.h();
    let mut worst: f64 = 0.0;
    for (i, l) in space.eigenvalues().iter().enumerate() {
        let c = ((i + 1) as f64 * PI * h).cos();
        let want = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        worst = worst.max((l - want).abs() / want);
    }
    ensure(worst < 1e-10, || format!("relative eigenvalue error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn projection_reproduces_vh() -> std::result::Result<String, String> {
    let space = FemSpace::uniform(1.0, 16).map_err(err)?;
    let v = space.interpolate(|x| x * (1.0 - x));
    let p = space.l2_project_function(|x| space.mesh().evaluate(&v.nodal, x)).map_err(err)?;
    let d = v.nodal.iter().zip(&p.nodal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(d < 1e-10, || format!("P^h v − v = {d:.3e}"))?;
    Ok(format!("max deviation {d:.1e}"))
}

fn operator_norm_orders() -> std::result::Result<String, String> {
    let levels = [3u32, 4, 5];
    let basis = SpectralBasis::new(1.0, 4 * 31).map_err(err)?;
    let mut est = Vec::new();
    for &l in &levels {
        let space = FemSpace::uniform(1.0, 1 << l).map_err(err)?;
        let n0 = operator_error_norm(&space, &basis, 0.0, 0.0, ErrorOperator::L2Projection).map_err(err)?;
        ensure(n0 <= 1.0 + 1e-9, || format!("‖I − P^h‖ = {n0}"))?;
        let e = operator_error_norm(&space, &basis, 0.0, 2.0, ErrorOperator::L2Projection).map_err(err)?;
        est.push(LevelEstimate { level: l as i32, h: space.h(), error: e, stderr: 0.0, usable: true });
    }
    let fit = fit_rate(&est).map_err(err)?;
    ensure((fit.slope - 2.0).abs() < 0.1, || format!("(s, r) = (0, 2) slope {}", fit.slope))?;
    Ok(format!("(0, 2) slope {:.4}", fit.slope))
}

fn increment_streams_deterministic() -> std::result::Result<String, String> {
    let spec = CovarianceSpec::power_decay(2.0, 64).map_err(err)?;
    let key = StreamKey::new(3, 5, 7, crate::noise::tags::WIENER);
    let mut a = vec![0.0; 64];
    let mut b = vec![0.0; 64];
    fill_increments(&spec, 0.01, key, &mut a);
    fill_increments(&spec, 0.01, key, &mut b);
    ensure(a == b, || "same key gave different increments".into())?;
    fill_increments(&spec, 0.01, key.at_step(8), &mut b);
    ensure(a != b, || "different steps gave identical increments".into())?;
    Ok("64 modes".into())
}

fn allen_cahn_flow_closed_form() -> std::result::Result<String, String> {
    let f = PolynomialDrift::allen_cahn();
    for &(t, x) in &[(0.5f64, 0.5f64), (1.0, 2.0), (0.3, -3.0)] {
        let e = (2.0 * t).exp();
        let want = x * t.exp() / (1.0 + x * x * (e - 1.0)).sqrt();
        let got = f.flow(t, x);
        ensure((got - want).abs() < 1e-12, || format!("Φ_{t}({x}) = {got}, want {want}"))?;
        let (_, d) = f.flow_with_derivative(t, x);
        ensure(d >= 0.0 && d <= t.exp() * (1.0 + 1e-6), || format!("Φ′_{t}({x}) = {d}"))?;
    }
    Ok("three points".into())
}

fn rate_fit_exact_power_laws() -> std::result::Result<String, String> {
    for p in [1.0, 2.0] {
        let est: Vec<LevelEstimate> = (3..7)
            .map(|l| {
                let h = 2f64.powi(-l);
                LevelEstimate { level: l, h, error: 3.0 * h.powf(p), stderr: 0.0, usable: true }
            })
            .collect();
        let fit = fit_rate(&est).map_err(err)?;
        ensure((fit.slope - p).abs() < 1e-12, || format!("slope {} for exponent {p}", fit.slope))?;
    }
    Ok("slopes 1 and 2".into())
}

fn config_validation() -> std::result::Result<String, String> {
    let c = parse_config("kind = \"strong\"").map_err(err)?;
    ensure(c.horizon == 1.0 && c.samples == 400 && c.moment == 2.0, || "defaults not filled".into())?;
    let bad = parse_config("kind = \"strong\"\n[drift]\ncoeffs = [0.0, 1.0, 0.0, 1.0]\n");
    ensure(
        matches!(&bad, Err(e) if e.to_string().contains("one-sided Lipschitz violated")),
        || format!("positive cubic accepted: {bad:?}"),
    )?;
    let k5 = parse_config("kind = \"weak\"\n[drift]\ngrowth = 5\n[functional]\nkind = \"gaussian\"\n");
    ensure(matches!(&k5, Err(e) if e.to_string().contains("K < 5")), || format!("K = 5 accepted: {k5:?}"))?;
    Ok("defaults and rejections".into())
}

fn linear_deterministic(kind: StudyKind) -> StudyConfig {
    let mut cfg = StudyConfig::new(kind);
    cfg.samples = 100;
    cfg.mesh.levels = vec![2, 3, 4];
    cfg.mesh.reference = Some(7);
    cfg.noise.kind = crate::config::NoiseFamily::Zero;
    cfg.drift.coeffs = vec![0.0];
    cfg.initial.modes = vec![2f64.sqrt()];
    cfg.time.dt_level = 4;
    cfg.horizon = 0.0625;
    cfg.time.probe = false;
    cfg
}

/// Zero drift and noise with `x0 = e_1`: the study reduces to
/// `‖(S^{h_ref}(T)P^{h_ref} − S^h(T)P^h)e_1‖`.
fn deterministic_strong_study() -> std::result::Result<String, String> {
    let cfg = linear_deterministic(StudyKind::Strong);
    let out = run_study(&cfg, &RunOptions { workers: 1 }).map_err(err)?;
    let report = out.reports()[0].clone();
    let basis = SpectralBasis::new(1.0, 1).map_err(err)?;
    let e1 = SpectralCoeffs::mode(1, 1);
    let fine = FemSpace::uniform(1.0, 1 << 7).map_err(err)?;
    let rf = fine.semigroup_apply(cfg.horizon, &fine.l2_project(&basis, &e1).map_err(err)?).map_err(err)?;
    for lv in &report.levels {
        let space = FemSpace::uniform(1.0, 1 << lv.level).map_err(err)?;
        let v = space.semigroup_apply(cfg.horizon, &space.l2_project(&basis, &e1).map_err(err)?).map_err(err)?;
        let want = crate::fem::l2_distance(fine.mesh(), &rf.nodal, space.mesh(), &v.nodal);
        ensure((lv.error - want).abs() <= 1e-10 * want.max(1e-300) + 1e-14, || {
            format!("level {}: {} vs {}", lv.level, lv.error, want)
        })?;
    }
    let slope = report.slope().ok_or_else(|| "no fit".to_string())?;
    ensure((slope - 2.0).abs() < 0.15, || format!("slope {slope}"))?;
    Ok(format!("slope {slope:.4}"))
}

fn constant_functional_weak() -> std::result::Result<String, String> {
    let mut cfg = linear_deterministic(StudyKind::Weak);
    cfg.noise.kind = crate::config::NoiseFamily::PowerDecay;
    cfg.noise.k_trunc = 127;
    cfg.functional = Some(TestFunctional::Constant { value: 1.5 });
    let out = run_study(&cfg, &RunOptions { workers: 1 }).map_err(err)?;
    let r = out.reports()[0];
    ensure(r.levels.iter().all(|l| l.error == 0.0 && !l.usable), || format!("{:?}", r.levels))?;
    Ok("all levels zero".into())
}

fn worker_count_invariance() -> std::result::Result<String, String> {
    let mut cfg = linear_deterministic(StudyKind::Strong);
    cfg.noise.kind = crate::config::NoiseFamily::PowerDecay;
    cfg.noise.k_trunc = 127;
    cfg.drift.coeffs = vec![0.0, 1.0, 0.0, -1.0];
    let a = run_study(&cfg, &RunOptions { workers: 1 }).map_err(err)?;
    let b = run_study(&cfg, &RunOptions { workers: 3 }).map_err(err)?;
    let (a, b) = (a.reports()[0].to_csv(), b.reports()[0].to_csv());
    ensure(a == b, || "CSV differs between 1 and 3 workers".into())?;
    Ok(format!("{} bytes identical", a.len()))
}
