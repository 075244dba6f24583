//! Study reports and their CSV / JSON forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::fit::{fit_rate, LevelEstimate, RateFit};
use super::moments::MomentReport;
use crate::error::Result;

/// Relative standard error above which a level is flagged as noise-dominated.
pub const NOISE_FLOOR_REL: f64 = 0.25;

pub const CSV_HEADER: &str = "level,h,error,stderr,usable";

/// Result of the dt-halving probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtProbe {
    pub dt: f64,
    pub samples: usize,
    /// `(E‖X_{dt} − X_{dt/2}‖^p)^{1/p}` on the reference mesh.
    pub temporal_error: f64,
    /// `temporal_error` divided by the smallest spatial error.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: usize,
    pub aborted: usize,
    /// Some level has relative standard error above 25%.
    pub noise_floor: bool,
    /// Errors decrease strictly from coarse to fine.
    pub monotone: bool,
    pub coupling: String,
    pub probe: Option<DtProbe>,
    /// Signed per-level means, for estimators that report `|mean|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed_errors: Option<Vec<f64>>,
    /// Closed-form per-level errors, when the configuration admits one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_errors: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn new(samples: usize, coupling: &str) -> Self {
        Diagnostics {
            samples,
            aborted: 0,
            noise_floor: false,
            monotone: true,
            coupling: coupling.to_string(),
            probe: None,
            signed_errors: None,
            oracle_errors: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub study: String,
    /// Distinguishes several reports of one study.
    pub label: Option<String>,
    pub seed: u64,
    pub config_hash: String,
    /// Levels ordered coarse to fine.
    pub levels: Vec<LevelEstimate>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub expected_slope: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl RateReport {
    /// Assemble a report, flag noise floor and monotonicity, and fit.
    pub fn new(
        study: &str,
        label: Option<String>,
        seed: u64,
        config_hash: String,
        levels: Vec<LevelEstimate>,
        mut diagnostics: Diagnostics,
    ) -> Self {
        diagnostics.noise_floor = levels
            .iter()
            .any(|l| l.stderr > 0.0 && !(l.stderr <= NOISE_FLOOR_REL * l.error.abs()));
        diagnostics.monotone = levels.windows(2).all(|w| w[1].error < w[0].error);
        let (fit, fit_error) = match fit_rate(&levels) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        RateReport { study: study.to_string(), label, seed, config_hash, levels, fit, fit_error, expected_slope: None, diagnostics }
    }

    pub fn with_expected_slope(mut self, s: Option<f64>) -> Self {
        self.expected_slope = s;
        self
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// A usable fit exists and no sample was aborted.
    pub fn is_ok(&self) -> bool {
        self.fit.is_some() && self.diagnostics.aborted == 0
    }

    pub fn file_stem(&self) -> String {
        match &self.label {
            Some(l) => format!("{}_{}", self.study, l),
            None => self.study.clone(),
        }
    }

    /// CSV with a provenance comment line; full 17-digit floats. Contains no
    /// timing, so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# sacfem {} study={} config_hash={} seed={}\n{CSV_HEADER}\n",
            env!("CARGO_PKG_VERSION"),
            self.file_stem(),
            self.config_hash,
            self.seed
        );
        for l in &self.levels {
            let _ = writeln!(s, "{},{:.16e},{:.16e},{:.16e},{}", l.level, l.h, l.error, l.stderr, l.usable);
        }
        s
    }

    pub fn summary_json(&self, runtime_seconds: f64) -> serde_json::Value {
        json!({
            "slope": self.fit.map(|f| f.slope),
            "ci_lo": self.fit.map(|f| f.ci_lo),
            "ci_hi": self.fit.map(|f| f.ci_hi),
            "levels": self.levels,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "study": self.file_stem(),
            "expected_slope": self.expected_slope,
            "fit_error": self.fit_error,
            "diagnostics": self.diagnostics,
            "version": env!("CARGO_PKG_VERSION"),
            "provenance": format!("sacfem {} config {}", env!("CARGO_PKG_VERSION"), self.config_hash),
            "runtime_seconds": runtime_seconds,
        })
    }
}

/// Everything a study produces.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyOutput {
    Rates(Vec<RateReport>),
    Moments(MomentReport),
}

impl StudyOutput {
    pub fn reports(&self) -> Vec<&RateReport> {
        match self {
            StudyOutput::Rates(r) => r.iter().collect(),
            StudyOutput::Moments(m) => m.reports(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.reports().iter().all(|r| r.is_ok())
    }

    /// Write `<stem>.csv` and `<stem>.json` per report into `dir`.
    pub fn write(&self, dir: &Path, runtime_seconds: f64) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for r in self.reports() {
            let csv = dir.join(format!("{}.csv", r.file_stem()));
            std::fs::write(&csv, r.to_csv())?;
            let mut summary = r.summary_json(runtime_seconds);
            if let StudyOutput::Moments(m) = self {
                summary["growth"] = serde_json::to_value(&m.growth).expect("serialisable");
            }
            let js = dir.join(format!("{}.json", r.file_stem()));
            std::fs::write(&js, serde_json::to_string_pretty(&summary).expect("serialisable") + "\n")?;
            written.push(csv);
            written.push(js);
        }
        Ok(written)
    }
}
