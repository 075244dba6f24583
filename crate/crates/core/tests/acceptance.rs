//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Studies run from the configs shipped in
//! `configs/` at the workspace root.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sacfem::config::{parse_config, StudyConfig};
use sacfem::dynamics::{integrate_with, tangent_integrate, Checkpoints, ExactNoise, PolynomialDrift, Scheme, Stepper};
use sacfem::experiments::{run_study, RateReport, RunOptions, StudyOutput};
use sacfem::fem::FemSpace;
use sacfem::noise::{tags, ConvolutionSampler, CovarianceSpec, ProjectedNoise, StreamKey};

const STRONG_SMOOTH_BAND: (f64, f64) = (0.85, 1.15);
const STRONG_WHITE_BAND: (f64, f64) = (0.35, 0.65);
const WEAK_BAND: (f64, f64) = (1.6, 2.2);
const ORACLE_SIGMAS: f64 = 3.0;
const SPLITTING_MIN_SLOPE: f64 = 0.85;
const OPERATOR_TOL: f64 = 0.1;
const TANGENT_REL_TOL: f64 = 1e-4;
const TANGENT_EPS: f64 = 1e-5;
const TANGENT_PAIRS: usize = 20;
const FLOW_DERIVATIVE_SLACK: f64 = 1e-6;
const FLOW_RK4_TOL: f64 = 1e-9;
const GROWTH_TOL: f64 = 0.1;
/// Exponent of the `log(1/h)` envelope allowed for the white-noise sup moment.
const LOG_ENVELOPE_MAX: f64 = 1.0;

type Outcome = Result<String, String>;

fn config(name: &str) -> StudyConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str, workers: usize) -> Result<StudyOutput, String> {
    run_study(&config(name), &RunOptions { workers }).map_err(|e| format!("{name}: {e}"))
}

fn single(out: &StudyOutput) -> Result<&RateReport, String> {
    match out.reports().as_slice() {
        [r] => Ok(r),
        rs => Err(format!("expected one report, got {}", rs.len())),
    }
}

fn fitted(r: &RateReport) -> Result<sacfem::experiments::RateFit, String> {
    if r.diagnostics.aborted > 0 {
        return Err(format!("{} aborted samples", r.diagnostics.aborted));
    }
    r.fit.ok_or_else(|| format!("no fit: {}", r.fit_error.as_deref().unwrap_or("unknown")))
}

fn slope_in_band(name: &str, band: (f64, f64)) -> Outcome {
    let out = run(name, 0)?;
    let f = fitted(single(&out)?)?;
    let msg = format!("slope {:.4} [{:.4}, {:.4}], band [{}, {}]", f.slope, f.ci_lo, f.ci_hi, band.0, band.1);
    if (band.0..=band.1).contains(&f.slope) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn strong_smooth() -> Outcome {
    slope_in_band("strong_smooth.toml", STRONG_SMOOTH_BAND)
}

fn strong_white() -> Outcome {
    slope_in_band("strong_white.toml", STRONG_WHITE_BAND)
}

fn weak_rate() -> Outcome {
    let rate = slope_in_band("weak_allen_cahn.toml", WEAK_BAND);
    let oracle = weak_linear_oracle();
    match (rate, oracle) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; linear oracle {b}")),
        (a, b) => Err(format!("{}; linear oracle {}", a.unwrap_or_else(|e| e), b.unwrap_or_else(|e| e))),
    }
}

fn weak_linear_oracle() -> Outcome {
    let out = run("weak_linear.toml", 0)?;
    let r = single(&out)?;
    let signed = r.diagnostics.signed_errors.as_ref().ok_or("no signed errors")?;
    let oracle = r.diagnostics.oracle_errors.as_ref().ok_or("closed-form oracle not applicable")?;
    let mut worst: f64 = 0.0;
    for ((lv, s), o) in r.levels.iter().zip(signed).zip(oracle) {
        if lv.stderr <= 0.0 {
            return Err(format!("level {} has zero standard error", lv.level));
        }
        worst = worst.max((s - o).abs() / lv.stderr);
    }
    let msg = format!("max |MC − oracle| = {worst:.2} stderr over {} levels", r.levels.len());
    if worst <= ORACLE_SIGMAS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn splitting_order() -> Outcome {
    let out = run("splitting_dt.toml", 0)?;
    let f = fitted(single(&out)?)?;
    let msg = format!("slope {:.4} [{:.4}, {:.4}], minimum {SPLITTING_MIN_SLOPE}", f.slope, f.ci_lo, f.ci_hi);
    if f.slope >= SPLITTING_MIN_SLOPE {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn operator_orders() -> Outcome {
    let out = run("operators.toml", 0)?;
    let mut parts = Vec::new();
    let mut ok = true;
    let mut checked = 0;
    for r in out.reports() {
        let f = fitted(r)?;
        let want = r.expected_slope.ok_or("operator report without expected slope")?;
        // (0, 0) is the stability bound, not a rate criterion
        if want == 0.0 {
            continue;
        }
        checked += 1;
        let good = (f.slope - want).abs() <= OPERATOR_TOL;
        ok &= good;
        parts.push(format!("{} {:.4} (want {want})", r.file_stem(), f.slope));
    }
    if checked != 3 {
        ok = false;
        parts.push(format!("{checked} rate cases, expected 3"));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tangent_fd() -> Outcome {
    let space = FemSpace::uniform(1.0, 32).map_err(|e| e.to_string())?;
    let k = 128;
    let spec = CovarianceSpec::power_decay(2.0, k).map_err(|e| e.to_string())?;
    let projected = ProjectedNoise::new(&space, k);
    let dt = 1.0 / 64.0;
    let steps = 32;
    let sampler = ConvolutionSampler::new(&space, &spec, &projected, dt).map_err(|e| e.to_string())?;
    let stepper =
        Stepper::new(&space, &PolynomialDrift::allen_cahn(), Scheme::SplittingExactFlow, dt).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for pair in 0..TANGENT_PAIRS {
        let draw = |rng: &mut ChaCha8Rng, amp: f64| -> Vec<f64> {
            (0..space.dim()).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
        };
        let x0 = space.field(draw(&mut rng, 1.5)).map_err(|e| e.to_string())?;
        let y = space.field(draw(&mut rng, 1.0)).map_err(|e| e.to_string())?;
        let key = StreamKey::new(6, pair as u64, 0, tags::EXACT_CONVOLUTION);
        let path = |x: &sacfem::fem::FemField, cp| {
            integrate_with(&space, &stepper, steps, &mut ExactNoise { sampler: &sampler, key }, x, cp)
                .map_err(|e| e.to_string())
        };
        let base = path(&x0, Checkpoints::Every(1))?;
        let xp = x0.nodal.iter().zip(&y.nodal).map(|(a, b)| a + TANGENT_EPS * b).collect();
        let pert = path(&space.field(xp).map_err(|e| e.to_string())?, Checkpoints::None)?;
        let eta = tangent_integrate(&space, &stepper, &base, 0.0, &y).map_err(|e| e.to_string())?;
        let diff: Vec<f64> = pert
            .final_state
            .nodal
            .iter()
            .zip(&base.final_state.nodal)
            .zip(&eta.nodal)
            .map(|((p, b), e)| (p - b) / TANGENT_EPS - e)
            .collect();
        worst = worst.max(space.l2_norm(&diff) / space.l2_norm(&eta.nodal));
    }
    let msg = format!("max relative deviation {worst:.2e} over {TANGENT_PAIRS} pairs at ε = {TANGENT_EPS:e}");
    if worst <= TANGENT_REL_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rk4(d: &PolynomialDrift, t: f64, x: f64, steps: usize) -> f64 {
    let h = t / steps as f64;
    let mut y = x;
    for _ in 0..steps {
        let k1 = d.eval(y);
        let k2 = d.eval(y + 0.5 * h * k1);
        let k3 = d.eval(y + 0.5 * h * k2);
        let k4 = d.eval(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

fn flow_map() -> Outcome {
    let drifts = [PolynomialDrift::allen_cahn(), PolynomialDrift::new(&[0.3, 0.5, 1.2, -2.0]).map_err(|e| e.to_string())?];
    let (mut worst_rk4, mut worst_lo, mut worst_hi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for d in &drifts {
        let lf = d.one_sided_constant();
        for it in 1..=10 {
            let t = 0.1 * it as f64;
            let bound = (lf * t).exp() * (1.0 + FLOW_DERIVATIVE_SLACK);
            for ix in 0..=40 {
                let x = -4.0 + 0.2 * ix as f64;
                let (phi, dphi) = d.flow_with_derivative(t, x);
                worst_lo = worst_lo.min(dphi);
                worst_hi = worst_hi.max(dphi / bound);
                worst_rk4 = worst_rk4.max((phi - rk4(d, t, x, 20_000)).abs());
            }
        }
    }
    let msg = format!("min Φ′ {worst_lo:.3e}, max Φ′/bound {worst_hi:.6}, max |Φ − RK4| {worst_rk4:.2e}");
    if worst_lo >= 0.0 && worst_hi <= 1.0 && worst_rk4 <= FLOW_RK4_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn moments() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, out: &StudyOutput, quantity: &str, log: bool| -> Result<(), String> {
        let StudyOutput::Moments(m) = out else {
            return Err(format!("{name} is not a moment study"));
        };
        if m.reports().iter().any(|r| r.diagnostics.aborted > 0) {
            return Err(format!("{name}: aborted samples"));
        }
        let g = m.growth_of(quantity).ok_or_else(|| format!("{name}: no {quantity} growth"))?;
        let (fit, good) = if log {
            let f = g.log_power.ok_or_else(|| format!("{name}: no log envelope fit for {quantity}"))?;
            (f, f.slope <= LOG_ENVELOPE_MAX)
        } else {
            let f = g.power.ok_or_else(|| format!("{name}: no power fit for {quantity}"))?;
            (f, f.slope.abs() <= GROWTH_TOL)
        };
        ok &= good;
        let what = if log { "log exponent" } else { "exponent" };
        parts.push(format!("{name} {quantity} {what} {:.3}", fit.slope));
        Ok(())
    };
    let trace = run("moments_trace.toml", 0)?;
    check("trace", &trace, "z_sup", false)?;
    check("trace", &trace, "x_sup", false)?;
    let white = run("moments_white.toml", 0)?;
    check("white", &white, "z_l2", false)?;
    check("white", &white, "z_sup", true)?;
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn csv_bytes(out: &StudyOutput) -> Vec<String> {
    out.reports().iter().map(|r| r.to_csv()).collect()
}

fn determinism() -> Outcome {
    let mut parts = Vec::new();
    for name in ["splitting_dt.toml", "weak_linear.toml", "moments_trace.toml"] {
        let a = csv_bytes(&run(name, 1)?);
        let b = csv_bytes(&run(name, 4)?);
        if a != b {
            return Err(format!("{name}: CSV differs between 1 and 4 workers"));
        }
        parts.push(format!("{name} {} bytes", a.iter().map(String::len).sum::<usize>()));
    }
    Ok(format!("identical CSV for 1 and 4 workers: {}", parts.join(", ")))
}

const CRITERIA: &[(&str, fn() -> Outcome)] = &[
    ("strong_rate_smooth_noise", strong_smooth),
    ("strong_rate_white_noise", strong_white),
    ("weak_rate_twice_strong", weak_rate),
    ("splitting_temporal_order", splitting_order),
    ("projection_operator_orders", operator_orders),
    ("tangent_finite_differences", tangent_fd),
    ("flow_map_properties", flow_map),
    ("moment_boundedness", moments),
    ("worker_count_determinism", determinism),
];

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return ExitCode::SUCCESS;
    }
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in CRITERIA.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} C{} {name}: {detail} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {ran} criteria, {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
