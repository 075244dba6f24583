//! Temporal convergence of one mesh as the step shrinks, on shared paths.

use super::fit::LevelEstimate;
use super::report::{Diagnostics, RateReport};
use super::strong::pth_root;
use super::{accumulate, check_kind, initial_state, par_samples, sample_key, NoiseSetup, RunOptions};
use crate::config::{StudyConfig, StudyKind};
use crate::dynamics::{integrate_coupled, Checkpoints, CoupledLevel, Stepper};
use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::noise::tags;

/// Errors `(E‖X_{dt_ref}(T) − X_{dt}(T)‖^p)^{1/p}` on the mesh `time.mesh_level`;
/// the `h` column of the report holds `dt`.
pub fn run_splitting_dt_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<RateReport> {
    check_kind(cfg, StudyKind::SplittingDt)?;
    let drift = cfg.drift()?;
    let space = FemSpace::assemble(cfg.mesh.build(cfg.length, cfg.time.mesh_level)?)?;
    let mut exps = cfg.time.dt_levels.clone();
    exps.sort_unstable();
    exps.push(cfg.time.dt_reference);
    let fine_dt = 2f64.powi(-(cfg.time.dt_reference as i32));
    let fine_steps = (cfg.horizon / fine_dt).round() as usize;
    let noise = NoiseSetup::build_shared(cfg, &space, exps.len(), fine_dt)?;
    let ratios: Vec<usize> = exps.iter().map(|&e| 1usize << (cfg.time.dt_reference - e)).collect();
    let steppers = ratios
        .iter()
        .map(|&r| Stepper::new(&space, &drift, cfg.time.scheme, fine_dt * r as f64))
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<CoupledLevel> = steppers
        .iter()
        .zip(&ratios)
        .map(|(stepper, &ratio)| CoupledLevel { space: &space, stepper, ratio })
        .collect();
    let x0 = vec![initial_state(cfg, &space)?; exps.len()];
    let n_tested = exps.len() - 1;
    let p = cfg.moment;
    let per_sample: Vec<Option<Vec<f64>>> = par_samples(opts.workers, cfg.samples, |m| {
        let mut driver = noise.driver(sample_key(cfg, m, tags::WIENER), fine_dt);
        match integrate_coupled(&levels, fine_steps, driver.as_mut(), &x0, Checkpoints::None) {
            Ok(tr) => {
                let r = &tr[n_tested].final_state.nodal;
                let errs = (0..n_tested)
                    .map(|l| {
                        let d: Vec<f64> = r.iter().zip(&tr[l].final_state.nodal).map(|(a, b)| a - b).collect();
                        space.l2_norm(&d).powf(p)
                    })
                    .collect();
                Ok(Some(errs))
            }
            Err(Error::Integration { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let (acc, aborted) = accumulate(&per_sample, n_tested);
    let estimates = acc
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let (error, stderr) = pth_root(a, p);
            let dt = fine_dt * ratios[l] as f64;
            LevelEstimate { level: exps[l] as i32, h: dt, error, stderr, usable: error > 0.0 }
        })
        .collect();
    let mut diag = Diagnostics::new(cfg.samples, noise.coupling_name());
    diag.aborted = aborted;
    if aborted > 0 {
        diag.notes.push(format!("{aborted} samples aborted by the overflow guard"));
    }
    Ok(RateReport::new("splitting_dt", None, cfg.seed, cfg.hash(), estimates, diag).with_expected_slope(Some(1.0)))
}
