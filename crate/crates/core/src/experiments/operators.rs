//! Decay of `‖A^{s/2}(I − P^h)A^{−r/2}‖` and related operator norms.

use super::fit::LevelEstimate;
use super::report::{Diagnostics, RateReport};
use super::{check_kind, Hierarchy};
use crate::config::{StudyConfig, StudyKind};
use crate::error::Result;
use crate::fem::operator_error_norm;
use crate::spectral::SpectralBasis;

/// One report per configured `(s, r, operator)` case.
pub fn run_operator_study(cfg: &StudyConfig) -> Result<Vec<RateReport>> {
    check_kind(cfg, StudyKind::Operators)?;
    let ops = cfg.operators.as_ref().expect("validated");
    let hier = Hierarchy::build(cfg, false)?;
    let finest = hier.spaces.iter().map(|s| s.dim()).max().unwrap_or(1);
    let basis = SpectralBasis::new(cfg.length, ops.k_max.unwrap_or(4 * finest))?;
    ops.cases
        .iter()
        .map(|case| {
            let levels = hier
                .spaces
                .iter()
                .zip(&hier.levels)
                .map(|(space, &level)| {
                    let norm = operator_error_norm(space, &basis, case.s, case.r, case.operator())?;
                    Ok(LevelEstimate { level: level as i32, h: space.h(), error: norm, stderr: 0.0, usable: norm > 0.0 })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut diag = Diagnostics::new(0, "none");
            diag.notes.push(format!("spectral span k_max = {}", basis.k_max()));
            Ok(RateReport::new("operators", Some(case.label()), cfg.seed, cfg.hash(), levels, diag)
                .with_expected_slope(case.expected_slope()))
        })
        .collect()
}
