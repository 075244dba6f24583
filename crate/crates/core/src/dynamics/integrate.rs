//! Trajectories of the spatially discrete equation.

use super::scheme::{SchemeConfig, StepNoise, StepScratch, Stepper};
use super::drift::PolynomialDrift;
use crate::error::{Error, Result};
use crate::fem::{sup_norm, FemField, FemSpace};
use crate::noise::{
    fill_increments, ConvolutionSampler, CoupledConvolution, CovarianceSpec, ProjectedNoise, StreamKey,
};

/// Samples whose sup-norm exceeds this are aborted.
pub const OVERFLOW_THRESHOLD: f64 = 1e6;

/// What kind of noise a driver produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Convolution,
    Increment,
}

/// Per-step noise in discrete-eigenbasis coordinates.
pub trait NoiseDriver {
    fn kind(&self) -> NoiseKind;
    /// Write the noise of step `step` (zero-based) into `out`.
    fn fill(&mut self, step: usize, out: &mut [f64]);
}

pub struct NoNoise;

impl NoiseDriver for NoNoise {
    fn kind(&self) -> NoiseKind {
        NoiseKind::None
    }

    fn fill(&mut self, _step: usize, _out: &mut [f64]) {}
}

/// Exact stochastic convolution samples, one substream per step.
pub struct ExactNoise<'a> {
    pub sampler: &'a ConvolutionSampler,
    pub key: StreamKey,
}

impl NoiseDriver for ExactNoise<'_> {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Convolution
    }

    fn fill(&mut self, step: usize, out: &mut [f64]) {
        self.sampler.sample_into(&mut self.key.at_step(step as u64).rng(), out);
    }
}

/// Convolution over `ratio` consecutive fine steps, composed exactly:
/// `acc ← e^{−λδ}acc + ξ_j`. Coarse and fine runs sharing the key see the same
/// Wiener path.
pub struct ComposedNoise<'a> {
    pub sampler: &'a ConvolutionSampler,
    pub key: StreamKey,
    pub ratio: usize,
    buf: Vec<f64>,
}

impl<'a> ComposedNoise<'a> {
    pub fn new(sampler: &'a ConvolutionSampler, key: StreamKey, ratio: usize) -> Self {
        ComposedNoise { sampler, key, ratio: ratio.max(1), buf: vec![0.0; sampler.decay().len()] }
    }
}

impl NoiseDriver for ComposedNoise<'_> {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Convolution
    }

    fn fill(&mut self, step: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.ratio {
            let fine = (step * self.ratio + j) as u64;
            self.sampler.sample_into(&mut self.key.at_step(fine).rng(), &mut self.buf);
            for ((o, d), x) in out.iter_mut().zip(self.sampler.decay()).zip(&self.buf) {
                *o = d * *o + x;
            }
        }
    }
}

/// Projected Wiener increments `P^hΔW` from amplitudes shared by every mesh:
/// runs on different spaces with the same key are driven by the same path.
pub struct CoupledNoise<'a> {
    pub spec: &'a CovarianceSpec,
    pub projected: &'a ProjectedNoise,
    pub dt: f64,
    pub key: StreamKey,
    amplitudes: Vec<f64>,
}

impl<'a> CoupledNoise<'a> {
    pub fn new(spec: &'a CovarianceSpec, projected: &'a ProjectedNoise, dt: f64, key: StreamKey) -> Self {
        CoupledNoise { spec, projected, dt, key, amplitudes: vec![0.0; spec.k_trunc()] }
    }
}

impl NoiseDriver for CoupledNoise<'_> {
    fn kind(&self) -> NoiseKind {
        if self.spec.is_zero() {
            NoiseKind::None
        } else {
            NoiseKind::Increment
        }
    }

    fn fill(&mut self, step: usize, out: &mut [f64]) {
        fill_increments(self.spec, self.dt, self.key.at_step(step as u64), &mut self.amplitudes);
        self.projected.apply(&self.amplitudes, out);
    }
}

/// Which intermediate states to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Checkpoints {
    None,
    /// States at steps `0, stride, 2·stride, …`.
    Every(usize),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub n_steps: usize,
    pub stride: Option<usize>,
    /// Nodal values at the recorded steps, starting with the initial state.
    pub states: Vec<Vec<f64>>,
    pub final_state: FemField,
    /// `max_n ‖X_n‖_∞` over every step, including the initial state.
    pub max_sup_norm: f64,
}

impl Trajectory {
    /// State at step `n`, when recorded.
    pub fn state_at(&self, n: usize) -> Option<&[f64]> {
        let s = self.stride?;
        (n % s == 0).then(|| self.states.get(n / s).map(|v| v.as_slice())).flatten()
    }
}

/// `n_steps` steps of `stepper` from `x0`.
pub fn integrate_with(
    space: &FemSpace,
    stepper: &Stepper,
    n_steps: usize,
    noise: &mut dyn NoiseDriver,
    x0: &FemField,
    checkpoints: Checkpoints,
) -> Result<Trajectory> {
    space.check_field(x0)?;
    stepper.check(space, x0.len())?;
    let stride = match checkpoints {
        Checkpoints::None => None,
        Checkpoints::Every(0) => return Err(Error::arg("checkpoint stride must be positive")),
        Checkpoints::Every(s) => Some(s),
    };
    let mut state = x0.nodal.clone();
    let mut states = Vec::new();
    if stride.is_some() {
        states.push(state.clone());
    }
    let mut max_sup = sup_norm(&state);
    let mut scratch = stepper.scratch();
    let kind = noise.kind();
    let mut buf = vec![0.0; space.dim()];
    for n in 0..n_steps {
        let step_noise = match kind {
            NoiseKind::None => StepNoise::None,
            NoiseKind::Convolution => {
                noise.fill(n, &mut buf);
                StepNoise::Convolution(&buf)
            }
            NoiseKind::Increment => {
                noise.fill(n, &mut buf);
                StepNoise::Increment(&buf)
            }
        };
        stepper.step(space, &mut state, step_noise, &mut scratch)?;
        let sup = sup_norm(&state);
        if !(sup <= OVERFLOW_THRESHOLD) {
            return Err(Error::Integration {
                step: n + 1,
                reason: format!("sup-norm {sup:e} exceeds {OVERFLOW_THRESHOLD:e}"),
            });
        }
        max_sup = max_sup.max(sup);
        if let Some(s) = stride {
            if (n + 1) % s == 0 {
                states.push(state.clone());
            }
        }
    }
    Ok(Trajectory {
        dt: stepper.dt(),
        n_steps,
        stride,
        states,
        final_state: space.field(state)?,
        max_sup_norm: max_sup,
    })
}

/// Build the stepper for `config` and integrate.
pub fn integrate(
    space: &FemSpace,
    drift: &PolynomialDrift,
    config: &SchemeConfig,
    noise: &mut dyn NoiseDriver,
    x0: &FemField,
    checkpoints: Checkpoints,
) -> Result<Trajectory> {
    let stepper = Stepper::new(space, drift, config.scheme, config.dt)?;
    integrate_with(space, &stepper, config.n_steps, noise, x0, checkpoints)
}

/// First variation `η(T) = D_s^y X^h(T)` along a trajectory recorded at every
/// step, started from `η(s) = y`.
pub fn tangent_integrate(
    space: &FemSpace,
    stepper: &Stepper,
    base: &Trajectory,
    s: f64,
    direction: &FemField,
) -> Result<FemField> {
    space.check_field(direction)?;
    if base.stride != Some(1) || base.states.len() != base.n_steps + 1 {
        return Err(Error::State("tangent needs the base trajectory checkpointed at every step".into()));
    }
    if (base.dt - stepper.dt()).abs() > 1e-15 * base.dt {
        return Err(Error::arg("base trajectory and stepper use different time steps"));
    }
    let start = (s / base.dt).round();
    if !(s >= 0.0) || (start * base.dt - s).abs() > 1e-9 * base.dt.max(s) || start as usize > base.n_steps {
        return Err(Error::State(format!("start time {s} is not a recorded step of the base trajectory")));
    }
    let mut eta = direction.nodal.clone();
    let mut scratch = stepper.scratch();
    for n in start as usize..base.n_steps {
        stepper.linearized_step(space, &base.states[n], &mut eta, &mut scratch)?;
    }
    space.field(eta)
}

/// Noise for several levels driven by one draw per fine step.
pub trait CoupledDriver {
    fn kind(&self) -> NoiseKind;
    /// Per-fine-step decay `e^{−λ_i^h δ}` of level `level`, used to compose
    /// convolution samples over coarser steps.
    fn decay(&self, level: usize) -> &[f64];
    fn fill(&mut self, step: usize, outs: &mut [Vec<f64>]);
}

impl CoupledDriver for NoNoise {
    fn kind(&self) -> NoiseKind {
        NoiseKind::None
    }

    fn decay(&self, _level: usize) -> &[f64] {
        &[]
    }

    fn fill(&mut self, _step: usize, _outs: &mut [Vec<f64>]) {}
}

/// Joint exact convolutions on distinct uniform meshes.
pub struct JointExactNoise<'a> {
    pub sampler: &'a CoupledConvolution,
    pub key: StreamKey,
}

impl CoupledDriver for JointExactNoise<'_> {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Convolution
    }

    fn decay(&self, level: usize) -> &[f64] {
        self.sampler.decay(level)
    }

    fn fill(&mut self, step: usize, outs: &mut [Vec<f64>]) {
        self.sampler.sample_into(&mut self.key.at_step(step as u64).rng(), outs);
    }
}

/// One exact convolution sample copied to every level; all levels must share
/// the sampler's space (time-step studies).
pub struct SharedExactNoise<'a> {
    pub sampler: &'a ConvolutionSampler,
    pub key: StreamKey,
}

impl CoupledDriver for SharedExactNoise<'_> {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Convolution
    }

    fn decay(&self, _level: usize) -> &[f64] {
        self.sampler.decay()
    }

    fn fill(&mut self, step: usize, outs: &mut [Vec<f64>]) {
        if let Some((first, rest)) = outs.split_first_mut() {
            self.sampler.sample_into(&mut self.key.at_step(step as u64).rng(), first);
            for o in rest {
                o.copy_from_slice(first);
            }
        }
    }
}

/// Shared Wiener increments projected onto every level.
pub struct JointIncrementNoise<'a> {
    pub spec: &'a CovarianceSpec,
    pub projected: Vec<&'a ProjectedNoise>,
    pub dt: f64,
    pub key: StreamKey,
    amplitudes: Vec<f64>,
}

impl<'a> JointIncrementNoise<'a> {
    pub fn new(spec: &'a CovarianceSpec, projected: Vec<&'a ProjectedNoise>, dt: f64, key: StreamKey) -> Self {
        JointIncrementNoise { spec, projected, dt, key, amplitudes: vec![0.0; spec.k_trunc()] }
    }
}

impl CoupledDriver for JointIncrementNoise<'_> {
    fn kind(&self) -> NoiseKind {
        if self.spec.is_zero() {
            NoiseKind::None
        } else {
            NoiseKind::Increment
        }
    }

    fn decay(&self, _level: usize) -> &[f64] {
        &[]
    }

    fn fill(&mut self, step: usize, outs: &mut [Vec<f64>]) {
        fill_increments(self.spec, self.dt, self.key.at_step(step as u64), &mut self.amplitudes);
        for (p, o) in self.projected.iter().zip(outs.iter_mut()) {
            p.apply(&self.amplitudes, o);
        }
    }
}

/// One level of a coupled run: it takes one step of `stepper` every `ratio`
/// fine steps.
#[derive(Clone, Copy)]
pub struct CoupledLevel<'a> {
    pub space: &'a FemSpace,
    pub stepper: &'a Stepper,
    pub ratio: usize,
}

/// Advance every level over `fine_steps` fine steps, all fed by the same noise
/// draw per fine step. Convolution samples are composed over a coarse step as
/// `acc ← e^{−λδ}acc + ξ`, increments are summed. Any level overflowing aborts
/// the whole sample.
pub fn integrate_coupled(
    levels: &[CoupledLevel],
    fine_steps: usize,
    noise: &mut dyn CoupledDriver,
    x0: &[FemField],
    checkpoints: Checkpoints,
) -> Result<Vec<Trajectory>> {
    if levels.len() != x0.len() {
        return Err(Error::arg("need one initial state per level"));
    }
    let stride = match checkpoints {
        Checkpoints::None => None,
        Checkpoints::Every(0) => return Err(Error::arg("checkpoint stride must be positive")),
        Checkpoints::Every(s) => Some(s),
    };
    let mut states = Vec::with_capacity(levels.len());
    for (lv, x) in levels.iter().zip(x0) {
        lv.space.check_field(x)?;
        lv.stepper.check(lv.space, x.len())?;
        if lv.ratio == 0 || fine_steps % lv.ratio != 0 {
            return Err(Error::arg(format!("step ratio {} does not divide {fine_steps} fine steps", lv.ratio)));
        }
        states.push(x.nodal.clone());
    }
    let kind = noise.kind();
    let mut records: Vec<Vec<Vec<f64>>> =
        states.iter().map(|s| if stride.is_some() { vec![s.clone()] } else { vec![] }).collect();
    let mut max_sup: Vec<f64> = states.iter().map(|s| sup_norm(s)).collect();
    let mut scratch: Vec<StepScratch> = levels.iter().map(|lv| lv.stepper.scratch()).collect();
    let mut draws: Vec<Vec<f64>> = levels.iter().map(|lv| vec![0.0; lv.space.dim()]).collect();
    let mut acc = draws.clone();
    for n in 0..fine_steps {
        if kind != NoiseKind::None {
            noise.fill(n, &mut draws);
        }
        for (l, lv) in levels.iter().enumerate() {
            if lv.ratio == 1 {
                std::mem::swap(&mut acc[l], &mut draws[l]);
            } else if kind == NoiseKind::Convolution {
                let d = noise.decay(l);
                for ((a, d), x) in acc[l].iter_mut().zip(d).zip(&draws[l]) {
                    *a = d * *a + x;
                }
            } else if kind == NoiseKind::Increment {
                acc[l].iter_mut().zip(&draws[l]).for_each(|(a, x)| *a += x);
            }
            if (n + 1) % lv.ratio != 0 {
                continue;
            }
            let step_noise = match kind {
                NoiseKind::None => StepNoise::None,
                NoiseKind::Convolution => StepNoise::Convolution(&acc[l]),
                NoiseKind::Increment => StepNoise::Increment(&acc[l]),
            };
            lv.stepper.step(lv.space, &mut states[l], step_noise, &mut scratch[l])?;
            if lv.ratio == 1 {
                std::mem::swap(&mut acc[l], &mut draws[l]);
            } else {
                acc[l].iter_mut().for_each(|a| *a = 0.0);
            }
            let coarse = (n + 1) / lv.ratio;
            let sup = sup_norm(&states[l]);
            if !(sup <= OVERFLOW_THRESHOLD) {
                return Err(Error::Integration {
                    step: coarse,
                    reason: format!("level {l}: sup-norm {sup:e} exceeds {OVERFLOW_THRESHOLD:e}"),
                });
            }
            max_sup[l] = max_sup[l].max(sup);
            if let Some(s) = stride {
                if coarse % s == 0 {
                    records[l].push(states[l].clone());
                }
            }
        }
    }
    levels
        .iter()
        .zip(states)
        .zip(records)
        .zip(max_sup)
        .map(|(((lv, state), rec), m)| {
            Ok(Trajectory {
                dt: lv.stepper.dt(),
                n_steps: fine_steps / lv.ratio,
                stride,
                states: rec,
                final_state: lv.space.field(state)?,
                max_sup_norm: m,
            })
        })
        .collect()
}
