//! Strong errors `(E‖X^{h_ref}(T) − X^h(T)‖^p)^{1/p}` on coupled paths.

use super::fit::{LevelEstimate, MeanAccumulator};
use super::report::{Diagnostics, DtProbe, RateReport};
use super::{accumulate, check_kind, initial_state, par_samples, sample_key, CoupledSetup, NoiseSetup, RunOptions};
use crate::config::{DtPolicy, StudyConfig, StudyKind};
use crate::dynamics::{integrate_coupled, Checkpoints, CoupledLevel, Stepper};
use crate::error::{Error, Result};
use crate::fem::{l2_distance, FemSpace};
use crate::noise::tags;

pub fn run_strong_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<RateReport> {
    check_kind(cfg, StudyKind::Strong)?;
    let setup = CoupledSetup::build(cfg, true)?;
    let spaces = &setup.hier.spaces;
    let n_tested = spaces.len() - 1;
    let p = cfg.moment;
    let per_sample = setup.run(cfg, opts, Checkpoints::None, |tr| {
        let r = &tr[n_tested].final_state.nodal;
        (0..n_tested)
            .map(|l| l2_distance(spaces[n_tested].mesh(), r, spaces[l].mesh(), &tr[l].final_state.nodal).powf(p))
            .collect::<Vec<f64>>()
    })?;
    let (acc, aborted) = accumulate(&per_sample, n_tested);
    let estimates: Vec<LevelEstimate> = acc
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let (error, stderr) = pth_root(a, p);
            LevelEstimate { level: setup.hier.levels[l] as i32, h: spaces[l].h(), error, stderr, usable: error > 0.0 }
        })
        .collect();
    let mut diag = Diagnostics::new(cfg.samples, setup.noise.coupling_name());
    diag.aborted = aborted;
    if cfg.time.probe && cfg.time.policy == DtPolicy::Fixed {
        let smallest = estimates.iter().map(|e| e.error).fold(f64::INFINITY, f64::min);
        let probe = dt_probe(cfg, opts, &spaces[n_tested], setup.grid.fine_dt, setup.grid.fine_steps, smallest)?;
        if probe.ratio > 0.1 {
            diag.notes.push(format!(
                "temporal error {:.3e} exceeds 10% of the smallest spatial error (ratio {:.3})",
                probe.temporal_error, probe.ratio
            ));
        }
        diag.probe = Some(probe);
    }
    if aborted > 0 {
        diag.notes.push(format!("{aborted} samples aborted by the overflow guard"));
    }
    let beta = cfg.beta()?;
    Ok(RateReport::new("strong", None, cfg.seed, cfg.hash(), estimates, diag).with_expected_slope(Some(beta)))
}

/// `(mean)^{1/p}` and its delta-method standard error.
pub(crate) fn pth_root(a: &MeanAccumulator, p: f64) -> (f64, f64) {
    let m = a.mean();
    if m <= 0.0 {
        return (0.0, 0.0);
    }
    let e = m.powf(1.0 / p);
    (e, e / (p * m) * a.stderr())
}

/// Reference-mesh difference between steps `dt` and `dt/2` on shared paths.
fn dt_probe(cfg: &StudyConfig, opts: &RunOptions, space: &FemSpace, dt: f64, steps: usize, smallest: f64) -> Result<DtProbe> {
    let drift = cfg.drift()?;
    let half = 0.5 * dt;
    let noise = NoiseSetup::build_shared(cfg, space, 2, half)?;
    let fine = Stepper::new(space, &drift, cfg.time.scheme, half)?;
    let coarse = Stepper::new(space, &drift, cfg.time.scheme, dt)?;
    let levels = [
        CoupledLevel { space, stepper: &fine, ratio: 1 },
        CoupledLevel { space, stepper: &coarse, ratio: 2 },
    ];
    let x0 = initial_state(cfg, space)?;
    let x0 = [x0.clone(), x0];
    let m = cfg.time.probe_samples.unwrap_or((cfg.samples / 8).max(16));
    let p = cfg.moment;
    let diffs: Vec<Option<f64>> = par_samples(opts.workers, m, |i| {
        let mut driver = noise.driver(sample_key(cfg, i, tags::AUX), half);
        match integrate_coupled(&levels, 2 * steps, driver.as_mut(), &x0, Checkpoints::None) {
            Ok(tr) => {
                let d: Vec<f64> =
                    tr[0].final_state.nodal.iter().zip(&tr[1].final_state.nodal).map(|(a, b)| a - b).collect();
                Ok(Some(space.l2_norm(&d).powf(p)))
            }
            Err(Error::Integration { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut acc = MeanAccumulator::default();
    diffs.iter().flatten().for_each(|d| acc.push(*d));
    let temporal = acc.mean().max(0.0).powf(1.0 / p);
    Ok(DtProbe { dt, samples: m, temporal_error: temporal, ratio: temporal / smallest })
}
