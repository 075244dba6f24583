//! Weak errors `E[φ(X^{h_ref}(T)) − φ(X^h(T))]` on coupled paths.

use super::fit::LevelEstimate;
use super::report::{Diagnostics, RateReport};
use super::{accumulate, check_kind, initial_state, CoupledSetup, RunOptions};
use crate::config::{Coupling, StudyConfig, StudyKind};
use crate::dynamics::{Checkpoints, Scheme};
use crate::error::{Error, Result};
use crate::experiments::TestFunctional;
use crate::fem::FemSpace;
use crate::noise::{convolution_covariance, ProjectedNoise};

/// A level enters the fit only when its mean exceeds this many standard errors.
pub const NOISE_FLOOR_SIGMAS: f64 = 4.0;

pub fn run_weak_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<RateReport> {
    check_kind(cfg, StudyKind::Weak)?;
    let functional = cfg.functional.as_ref().expect("validated");
    let setup = CoupledSetup::build(cfg, true)?;
    let spaces = &setup.hier.spaces;
    let n_tested = spaces.len() - 1;
    let bound: Vec<_> = spaces.iter().map(|s| functional.bind(s)).collect();
    let per_sample = setup.run(cfg, opts, Checkpoints::None, |tr| {
        let r = bound[n_tested].eval(&tr[n_tested].final_state.nodal);
        (0..n_tested).map(|l| r - bound[l].eval(&tr[l].final_state.nodal)).collect::<Vec<f64>>()
    })?;
    let (acc, aborted) = accumulate(&per_sample, n_tested);
    let signed: Vec<f64> = acc.iter().map(|a| a.mean()).collect();
    let estimates: Vec<LevelEstimate> = acc
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let (error, stderr) = (a.mean().abs(), a.stderr());
            LevelEstimate {
                level: setup.hier.levels[l] as i32,
                h: spaces[l].h(),
                error,
                stderr,
                usable: error > NOISE_FLOOR_SIGMAS * stderr,
            }
        })
        .collect();
    let mut diag = Diagnostics::new(cfg.samples, setup.noise.coupling_name());
    diag.aborted = aborted;
    let below = estimates.iter().filter(|e| !e.usable).count();
    if below > 0 {
        diag.noise_floor = true;
        diag.notes.push(format!("{below} levels below the Monte-Carlo noise floor left out of the fit"));
    }
    if aborted > 0 {
        diag.notes.push(format!("{aborted} samples aborted by the overflow guard"));
    }
    diag.signed_errors = Some(signed);
    if oracle_applies(cfg) {
        let exact = spaces
            .iter()
            .enumerate()
            .map(|(l, s)| gaussian_cosine_oracle(cfg, s, setup.grid.dt(l), setup.grid.fine_steps / setup.grid.ratios[l]))
            .collect::<Result<Vec<f64>>>()?;
        diag.oracle_errors = Some((0..n_tested).map(|l| exact[n_tested] - exact[l]).collect());
    }
    let noise_floor = diag.noise_floor;
    let beta = cfg.beta()?;
    let mut report = RateReport::new("weak", None, cfg.seed, cfg.hash(), estimates, diag)
        .with_expected_slope(Some(2.0 * beta));
    report.diagnostics.noise_floor |= noise_floor;
    Ok(report)
}

fn oracle_applies(cfg: &StudyConfig) -> bool {
    matches!(cfg.functional, Some(TestFunctional::Cosine { .. }))
        && cfg.drift.coeffs.iter().skip(2).all(|c| *c == 0.0)
        && cfg.time.scheme != Scheme::SemiImplicit
        && cfg.noise.coupling == Coupling::Exact
        && cfg.mesh.jitter == 0.0
}

/// `E cos(⟨X^h(T), v⟩)` for a linear drift `f(x) = a0 + a1 x` with `a0 = 0`,
/// exact convolution noise and `n_steps` steps of size `dt`.
///
/// In discrete eigen-coordinates every step maps `c ↦ D c + ξ` with
/// `D = diag(g e^{−λ_i dt})`, `g` the nodewise factor of the scheme, and `ξ`
/// centred Gaussian with covariance `C`. After `N` steps `⟨X, v⟩ = aᵀc` is
/// Gaussian with mean `aᵀD^N c_0` and variance
/// `Σ_ij a_i a_j C_ij (1 − (d_i d_j)^N)/(1 − d_i d_j)`.
pub fn gaussian_cosine_oracle(cfg: &StudyConfig, space: &FemSpace, dt: f64, n_steps: usize) -> Result<f64> {
    let Some(TestFunctional::Cosine { direction }) = &cfg.functional else {
        return Err(Error::arg("the Gaussian oracle needs a cosine functional"));
    };
    let c = &cfg.drift.coeffs;
    if c.first().copied().unwrap_or(0.0) != 0.0 || c.iter().skip(2).any(|a| *a != 0.0) {
        return Err(Error::arg("the Gaussian oracle needs a drift f(x) = a1·x"));
    }
    let a1 = c.get(1).copied().unwrap_or(0.0);
    let n = n_steps as i32;
    let g = match cfg.time.scheme {
        Scheme::SplittingExactFlow => (a1 * dt).exp(),
        Scheme::ExponentialEuler => 1.0 + a1 * dt,
        Scheme::SemiImplicit => return Err(Error::arg("the Gaussian oracle covers exact convolution noise only")),
    };
    let spec = cfg.noise.spec()?;
    let projected = ProjectedNoise::new(space, spec.k_trunc());
    let cov = convolution_covariance(space, &spec, &projected, dt);
    let load = TestFunctional::Cosine { direction: direction.clone() }.bind(space);
    let a = space.load_to_eigen(load.pairing_load());
    let c0 = space.to_eigen(&initial_state(cfg, space)?.nodal);
    let d: Vec<f64> = space.eigenvalues().iter().map(|l| g * (-l * dt).exp()).collect();
    let mean: f64 = a.iter().zip(&d).zip(&c0).map(|((a, d), c)| a * d.powi(n) * c).sum();
    let mut var = 0.0;
    for j in 0..d.len() {
        for i in 0..d.len() {
            let cij = cov[(i, j)];
            if cij == 0.0 {
                continue;
            }
            let dd = d[i] * d[j];
            let geom = if (1.0 - dd).abs() < 1e-14 { n as f64 } else { (1.0 - dd.powi(n)) / (1.0 - dd) };
            var += a[i] * a[j] * cij * geom;
        }
    }
    Ok(mean.cos() * (-0.5 * var).exp())
}
