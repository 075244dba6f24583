//! Second moments of the discrete stochastic convolution `Z^h(T)` and of the
//! solution `X^h`, and their growth as `h → 0`.

use serde::{Deserialize, Serialize};

use super::fit::{fit_rate, LevelEstimate, MeanAccumulator, RateFit};
use super::report::{Diagnostics, RateReport};
use super::{accumulate, check_kind, par_samples, sample_key, CoupledSetup, Hierarchy, RunOptions};
use crate::config::{StudyConfig, StudyKind};
use crate::dynamics::Checkpoints;
use crate::error::Result;
use crate::noise::{tags, ConvolutionSampler, CoupledConvolution, ProjectedNoise};

/// Growth of one moment sequence against `log(1/h)` and against `1 + log(1/h)`
/// on log scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub quantity: String,
    /// `γ` in `moment ≈ C h^{−γ}`.
    pub power: Option<RateFit>,
    /// `κ` in `moment ≈ C (1 + log(1/h))^κ`.
    pub log_power: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// `E‖Z^h(T)‖_∞²` per level.
    pub z_sup: RateReport,
    /// `E‖Z^h(T)‖²` per level.
    pub z_l2: RateReport,
    /// `max_n E‖X^h(t_n)‖_∞²` over the checkpoints.
    pub x_sup: RateReport,
    pub growth: Vec<GrowthFit>,
}

impl MomentReport {
    pub fn reports(&self) -> Vec<&RateReport> {
        vec![&self.z_sup, &self.z_l2, &self.x_sup]
    }

    pub fn growth_of(&self, quantity: &str) -> Option<&GrowthFit> {
        self.growth.iter().find(|g| g.quantity == quantity)
    }
}

pub fn run_moment_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<MomentReport> {
    check_kind(cfg, StudyKind::Moments)?;
    let hier = Hierarchy::build(cfg, false)?;
    let (z_sup, z_l2) = convolution_moments(cfg, opts, &hier)?;
    let x_sup = solution_moments(cfg, opts)?;
    let growth = [&z_sup, &z_l2, &x_sup].iter().map(|r| growth_fit(r)).collect();
    Ok(MomentReport { z_sup, z_l2, x_sup, growth })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn estimates(hier: &Hierarchy, acc: &[MeanAccumulator]) -> Vec<LevelEstimate> {
    acc.iter()
        .enumerate()
        .map(|(l, a)| {
            let error = a.mean();
            LevelEstimate { level: hier.levels[l] as i32, h: hier.spaces[l].h(), error, stderr: a.stderr(), usable: error > 0.0 }
        })
        .collect()
}

/// `Z^h(T)` from zero in one exact step of length `T`, jointly across levels
/// on uniform meshes.
fn convolution_moments(cfg: &StudyConfig, opts: &RunOptions, hier: &Hierarchy) -> Result<(RateReport, RateReport)> {
    let spec = cfg.noise.spec()?;
    let spaces = hier.refs();
    let projected: Vec<ProjectedNoise> = spaces.iter().map(|s| ProjectedNoise::new(s, spec.k_trunc())).collect();
    let t = cfg.horizon;
    enum Sampler {
        Joint(CoupledConvolution),
        Separate(Vec<ConvolutionSampler>),
    }
    let (sampler, coupling) = if hier.all_uniform() {
        let refs: Vec<&ProjectedNoise> = projected.iter().collect();
        (Sampler::Joint(CoupledConvolution::new(&spaces, &refs, &spec, t)?), "exact")
    } else {
        let s = spaces
            .iter()
            .zip(&projected)
            .map(|(s, p)| ConvolutionSampler::new(s, &spec, p, t))
            .collect::<Result<Vec<_>>>()?;
        (Sampler::Separate(s), "independent")
    };
    let n = spaces.len();
    let per_sample: Vec<Option<Vec<f64>>> = par_samples(opts.workers, cfg.samples, |m| {
        let mut rng = sample_key(cfg, m, tags::EXACT_CONVOLUTION).rng();
        let mut coeffs: Vec<Vec<f64>> = spaces.iter().map(|s| vec![0.0; s.dim()]).collect();
        match &sampler {
            Sampler::Joint(j) => j.sample_into(&mut rng, &mut coeffs),
            Sampler::Separate(v) => v.iter().zip(coeffs.iter_mut()).for_each(|(s, c)| s.sample_into(&mut rng, c)),
        }
        let mut out = Vec::with_capacity(2 * n);
        for (s, c) in spaces.iter().zip(&coeffs) {
            let z = s.from_eigen(c);
            out.push(sup_norm(&z).powi(2));
            out.push(s.l2_norm(&z).powi(2));
        }
        Ok(Some(out))
    })?;
    let (acc, _) = accumulate(&per_sample, 2 * n);
    let sup: Vec<MeanAccumulator> = acc.iter().step_by(2).copied().collect();
    let l2: Vec<MeanAccumulator> = acc.iter().skip(1).step_by(2).copied().collect();
    let report = |label: &str, acc: &[MeanAccumulator]| {
        RateReport::new(
            "moments",
            Some(label.to_string()),
            cfg.seed,
            cfg.hash(),
            estimates(hier, acc),
            Diagnostics::new(cfg.samples, coupling),
        )
    };
    Ok((report("z_sup", &sup), report("z_l2", &l2)))
}

/// `max_n E‖X^h(t_n)‖_∞²` on coupled paths, over checkpoints every
/// `time.checkpoint_stride` steps.
fn solution_moments(cfg: &StudyConfig, opts: &RunOptions) -> Result<RateReport> {
    let setup = CoupledSetup::build(cfg, false)?;
    let stride = cfg.time.checkpoint_stride;
    let per_sample = setup.run(cfg, opts, Checkpoints::Every(stride), |tr| {
        tr.iter()
            .flat_map(|t| t.states.iter().map(|s| sup_norm(s).powi(2)))
            .collect::<Vec<f64>>()
    })?;
    let counts: Vec<usize> = setup.grid.ratios.iter().map(|r| setup.grid.fine_steps / r / stride + 1).collect();
    let total: usize = counts.iter().sum();
    let (acc, aborted) = accumulate(&per_sample, total);
    let mut best = Vec::with_capacity(counts.len());
    let mut offset = 0;
    for c in &counts {
        let slice = &acc[offset..offset + c];
        let top = slice
            .iter()
            .copied()
            .max_by(|a, b| a.mean().total_cmp(&b.mean()))
            .unwrap_or_default();
        best.push(top);
        offset += c;
    }
    let mut diag = Diagnostics::new(cfg.samples, setup.noise.coupling_name());
    diag.aborted = aborted;
    if aborted > 0 {
        diag.notes.push(format!("{aborted} samples aborted by the overflow guard"));
    }
    Ok(RateReport::new("moments", Some("x_sup".into()), cfg.seed, cfg.hash(), estimates(&setup.hier, &best), diag))
}

fn growth_fit(r: &RateReport) -> GrowthFit {
    let negate = |f: RateFit| RateFit { slope: -f.slope, intercept: f.intercept, ci_lo: -f.ci_hi, ci_hi: -f.ci_lo, levels_used: f.levels_used };
    let power = r.fit.map(negate);
    // h′ = 1/(1 + log(1/h)) turns the log-envelope into a power law in h′.
    let shifted: Vec<LevelEstimate> = r
        .levels
        .iter()
        .map(|l| LevelEstimate { h: 1.0 / (1.0 + (1.0 / l.h).ln()), ..l.clone() })
        .collect();
    let log_power = fit_rate(&shifted).ok().map(negate);
    GrowthFit { quantity: r.label.clone().unwrap_or_default(), power, log_power }
}

