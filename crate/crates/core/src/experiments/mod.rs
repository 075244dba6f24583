//! Convergence studies: coupled Monte-Carlo strong and weak errors across mesh
//! hierarchies, moment growth, operator-norm decay and time-step refinement.
//!
//! Samples run on a rayon pool and are reduced in sample order, so reports are
//! bit-identical for any worker count.

mod fit;
mod functional;
mod moments;
mod operators;
mod report;
mod splitting_dt;
mod strong;
mod weak;

pub use fit::{fit_rate, LevelEstimate, MeanAccumulator, NeumaierSum, RateFit, CONFIDENCE, MIN_FIT_LEVELS};
pub use functional::{BoundFunctional, TestFunctional};
pub use moments::{run_moment_study, GrowthFit, MomentReport};
pub use operators::run_operator_study;
pub use report::{Diagnostics, DtProbe, RateReport, StudyOutput};
pub use splitting_dt::run_splitting_dt_study;
pub use strong::run_strong_study;
pub use weak::{gaussian_cosine_oracle, run_weak_study, NOISE_FLOOR_SIGMAS};

use rayon::prelude::*;

use crate::config::{Coupling, DtPolicy, StudyConfig, StudyKind};
use crate::dynamics::{
    integrate_coupled, Checkpoints, CoupledDriver, CoupledLevel, JointExactNoise, JointIncrementNoise, NoNoise,
    SharedExactNoise, Stepper, Trajectory,
};
use crate::error::{Error, Result};
use crate::fem::{FemField, FemSpace};
use crate::noise::{tags, ConvolutionSampler, CoupledConvolution, CovarianceSpec, ProjectedNoise, StreamKey};
use crate::spectral::{SpectralBasis, SpectralCoeffs};

/// Execution options that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

/// Run any study kind.
pub fn run_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<StudyOutput> {
    Ok(match cfg.kind {
        StudyKind::Strong => StudyOutput::Rates(vec![run_strong_study(cfg, opts)?]),
        StudyKind::Weak => StudyOutput::Rates(vec![run_weak_study(cfg, opts)?]),
        StudyKind::Operators => StudyOutput::Rates(run_operator_study(cfg)?),
        StudyKind::SplittingDt => StudyOutput::Rates(vec![run_splitting_dt_study(cfg, opts)?]),
        StudyKind::Moments => StudyOutput::Moments(run_moment_study(cfg, opts)?),
    })
}

/// Map `f` over samples `0..m` on a pool of `workers` threads, keeping order.
pub(crate) fn par_samples<T: Send>(
    workers: usize,
    m: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..m as u64).into_par_iter().map(&f).collect::<Vec<Result<T>>>())
        .into_iter()
        .collect()
}

/// `x0 = P^h Σ_k c_k sin(kπξ/L)`.
pub(crate) fn initial_state(cfg: &StudyConfig, space: &FemSpace) -> Result<FemField> {
    let k = cfg.initial.modes.len().max(1);
    let basis = SpectralBasis::new(cfg.length, k)?;
    let scale = (0.5 * cfg.length).sqrt();
    let mut c = SpectralCoeffs::zeros(k);
    for (ci, m) in c.0.iter_mut().zip(&cfg.initial.modes) {
        *ci = scale * m;
    }
    space.l2_project(&basis, &c)
}

/// Tested levels (coarse to fine) followed by the reference level.
pub(crate) struct Hierarchy {
    pub levels: Vec<u32>,
    pub spaces: Vec<FemSpace>,
}

impl Hierarchy {
    pub fn build(cfg: &StudyConfig, with_reference: bool) -> Result<Self> {
        let mut levels = cfg.mesh.levels.clone();
        levels.sort_unstable();
        if with_reference {
            levels.push(cfg.mesh.reference_level());
        }
        let spaces = levels
            .iter()
            .map(|&l| FemSpace::assemble(cfg.mesh.build(cfg.length, l)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Hierarchy { levels, spaces })
    }

    pub fn refs(&self) -> Vec<&FemSpace> {
        self.spaces.iter().collect()
    }

    pub fn all_uniform(&self) -> bool {
        self.spaces.iter().all(|s| s.mesh().is_uniform())
    }
}

/// Step size of every level and the common fine step.
pub(crate) struct TimeGrid {
    pub fine_dt: f64,
    pub fine_steps: usize,
    pub ratios: Vec<usize>,
}

impl TimeGrid {
    pub fn build(cfg: &StudyConfig, h: &Hierarchy) -> Result<Self> {
        let exps: Vec<i32> = match cfg.time.policy {
            DtPolicy::Fixed => vec![cfg.time.dt_level as i32; h.levels.len()],
            DtPolicy::HSquared => {
                let beta = cfg.beta()?;
                h.spaces
                    .iter()
                    .map(|s| (-(2.0 * beta * s.h().log2())).ceil() as i32)
                    .collect()
            }
        };
        let finest = *exps.iter().max().expect("at least one level");
        let fine_dt = 2f64.powi(-finest);
        let n = cfg.horizon / fine_dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config("time", format!("step 2^-{finest} does not divide the horizon")));
        }
        Ok(TimeGrid {
            fine_dt,
            fine_steps: n.round() as usize,
            ratios: exps.iter().map(|&e| 1usize << (finest - e)).collect(),
        })
    }

    pub fn dt(&self, level: usize) -> f64 {
        self.fine_dt * self.ratios[level] as f64
    }
}

/// Shared noise machinery for one hierarchy.
pub(crate) enum NoiseSetup {
    None,
    Exact(CoupledConvolution),
    /// One space stepped at several step sizes.
    Shared(ConvolutionSampler),
    Increment { spec: CovarianceSpec, projected: Vec<ProjectedNoise> },
}

impl NoiseSetup {
    pub fn build(cfg: &StudyConfig, spaces: &[&FemSpace], dt: f64) -> Result<Self> {
        let spec = cfg.noise.spec()?;
        if spec.is_zero() {
            return Ok(NoiseSetup::None);
        }
        let projected: Vec<ProjectedNoise> = spaces.iter().map(|s| ProjectedNoise::new(s, spec.k_trunc())).collect();
        let uniform = spaces.iter().all(|s| s.mesh().is_uniform());
        if cfg.noise.coupling == Coupling::Exact && uniform {
            let refs: Vec<&ProjectedNoise> = projected.iter().collect();
            return Ok(NoiseSetup::Exact(CoupledConvolution::new(spaces, &refs, &spec, dt)?));
        }
        Ok(NoiseSetup::Increment { spec, projected })
    }

    /// Noise for `copies` levels that all live on `space`.
    pub fn build_shared(cfg: &StudyConfig, space: &FemSpace, copies: usize, dt: f64) -> Result<Self> {
        let spec = cfg.noise.spec()?;
        if spec.is_zero() {
            return Ok(NoiseSetup::None);
        }
        let projected = ProjectedNoise::new(space, spec.k_trunc());
        if cfg.noise.coupling == Coupling::Exact {
            return Ok(NoiseSetup::Shared(ConvolutionSampler::new(space, &spec, &projected, dt)?));
        }
        Ok(NoiseSetup::Increment { spec, projected: vec![projected; copies] })
    }

    pub fn driver(&self, key: StreamKey, dt: f64) -> Box<dyn CoupledDriver + '_> {
        match self {
            NoiseSetup::None => Box::new(NoNoise),
            NoiseSetup::Exact(s) => Box::new(JointExactNoise { sampler: s, key }),
            NoiseSetup::Shared(s) => Box::new(SharedExactNoise { sampler: s, key }),
            NoiseSetup::Increment { spec, projected } => {
                Box::new(JointIncrementNoise::new(spec, projected.iter().collect(), dt, key))
            }
        }
    }

    pub fn coupling_name(&self) -> &'static str {
        match self {
            NoiseSetup::None => "none",
            NoiseSetup::Exact(_) | NoiseSetup::Shared(_) => "exact",
            NoiseSetup::Increment { .. } => "increment",
        }
    }
}

pub(crate) fn sample_key(cfg: &StudyConfig, sample: u64, tag: u64) -> StreamKey {
    StreamKey::new(cfg.seed, sample, 0, tag)
}

pub(crate) fn check_kind(cfg: &StudyConfig, kind: StudyKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::arg(format!("expected a {} study, got {}", kind.name(), cfg.kind.name())));
    }
    Ok(())
}

/// Everything needed to integrate one hierarchy on coupled paths.
pub(crate) struct CoupledSetup {
    pub hier: Hierarchy,
    pub grid: TimeGrid,
    pub noise: NoiseSetup,
    steppers: Vec<Stepper>,
    x0: Vec<FemField>,
}

impl CoupledSetup {
    pub fn build(cfg: &StudyConfig, with_reference: bool) -> Result<Self> {
        let drift = cfg.drift()?;
        let hier = Hierarchy::build(cfg, with_reference)?;
        let grid = TimeGrid::build(cfg, &hier)?;
        let noise = NoiseSetup::build(cfg, &hier.refs(), grid.fine_dt)?;
        let steppers = hier
            .spaces
            .iter()
            .enumerate()
            .map(|(l, s)| Stepper::new(s, &drift, cfg.time.scheme, grid.dt(l)))
            .collect::<Result<Vec<_>>>()?;
        let x0 = hier.spaces.iter().map(|s| initial_state(cfg, s)).collect::<Result<Vec<_>>>()?;
        Ok(CoupledSetup { hier, grid, noise, steppers, x0 })
    }

    /// Integrate every sample and map its trajectories through `f`; samples
    /// stopped by the overflow guard yield `None`.
    pub fn run<T: Send>(
        &self,
        cfg: &StudyConfig,
        opts: &RunOptions,
        checkpoints: Checkpoints,
        f: impl Fn(&[Trajectory]) -> T + Sync + Send,
    ) -> Result<Vec<Option<T>>> {
        let levels: Vec<CoupledLevel> = self
            .hier
            .spaces
            .iter()
            .zip(&self.steppers)
            .zip(&self.grid.ratios)
            .map(|((space, stepper), &ratio)| CoupledLevel { space, stepper, ratio })
            .collect();
        par_samples(opts.workers, cfg.samples, |m| {
            let mut driver = self.noise.driver(sample_key(cfg, m, tags::WIENER), self.grid.fine_dt);
            match integrate_coupled(&levels, self.grid.fine_steps, driver.as_mut(), &self.x0, checkpoints) {
                Ok(tr) => Ok(Some(f(&tr))),
                Err(Error::Integration { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
    }
}

/// Per-level accumulators over the completed samples, and the aborted count.
pub(crate) fn accumulate(per_sample: &[Option<Vec<f64>>], levels: usize) -> (Vec<MeanAccumulator>, usize) {
    let mut acc = vec![MeanAccumulator::default(); levels];
    let mut aborted = 0;
    for s in per_sample {
        match s {
            Some(v) => acc.iter_mut().zip(v).for_each(|(a, x)| a.push(*x)),
            None => aborted += 1,
        }
    }
    (acc, aborted)
}

/// One sample path on the finest tested mesh (the study mesh for dt studies)
/// at step `2^{−time.dt_level}`, recorded every `time.checkpoint_stride` steps.
pub fn sample_trajectory(cfg: &StudyConfig, sample: u64) -> Result<(FemSpace, Trajectory)> {
    cfg.validate()?;
    let level = match cfg.kind {
        StudyKind::SplittingDt => cfg.time.mesh_level,
        _ => cfg.mesh.levels.iter().copied().max().expect("validated"),
    };
    let space = FemSpace::assemble(cfg.mesh.build(cfg.length, level)?)?;
    let dt = 2f64.powi(-(cfg.time.dt_level as i32));
    let steps = (cfg.horizon / dt).round() as usize;
    let stepper = Stepper::new(&space, &cfg.drift()?, cfg.time.scheme, dt)?;
    let noise = NoiseSetup::build(cfg, &[&space], dt)?;
    let x0 = [initial_state(cfg, &space)?];
    let mut driver = noise.driver(sample_key(cfg, sample, tags::WIENER), dt);
    let level = [CoupledLevel { space: &space, stepper: &stepper, ratio: 1 }];
    let mut tr = integrate_coupled(&level, steps, driver.as_mut(), &x0, Checkpoints::Every(cfg.time.checkpoint_stride))?;
    let tr = tr.pop().expect("one level");
    Ok((space, tr))
}
