//! One-step maps of the three time integrators.

use serde::{Deserialize, Serialize};

use super::drift::{FlowMap, PolynomialDrift};
use crate::error::{Error, Result};
use crate::fem::{FemSpace, SymTridiag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `X ← S^h(dt)Φ_dt(X) + noise`.
    SplittingExactFlow,
    /// `X ← S^h(dt)(X + dt·f(X)) + noise`.
    ExponentialEuler,
    /// `(I + dt·A_h)X ← X + dt·f(X) + P^hΔW`.
    SemiImplicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::SplittingExactFlow => "splitting_exact_flow",
            Scheme::ExponentialEuler => "exponential_euler",
            Scheme::SemiImplicit => "semi_implicit",
        }
    }
}

/// Time grid of `n_steps` steps of size `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg(format!("time step must be positive, got {dt}")));
        }
        Ok(SchemeConfig { scheme, dt, n_steps })
    }

    /// Steps of size `dt` covering `[0, horizon]`; `dt` must divide the horizon.
    pub fn for_horizon(scheme: Scheme, horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::arg(format!("horizon must be non-negative, got {horizon}")));
        }
        let cfg = Self::new(scheme, dt, 0)?;
        let n = (horizon / dt).round();
        if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::arg(format!("time step {dt} does not divide the horizon {horizon}")));
        }
        Ok(SchemeConfig { n_steps: n as usize, ..cfg })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Noise added during one step, in discrete-eigenbasis coordinates.
#[derive(Debug, Clone, Copy)]
pub enum StepNoise<'a> {
    None,
    /// The stochastic convolution over the step, `∫ S^h(t_{n+1}−s)P^h dW(s)`.
    Convolution(&'a [f64]),
    /// The projected increment `P^hΔW_n`. Exponential schemes replace it by
    /// `√((1 − e^{−2λdt})/(2λdt))·(P^hΔW_n)_i`, which has the variance of the
    /// convolution when the noise is diagonal in the discrete eigenbasis.
    Increment(&'a [f64]),
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct StepScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl StepScratch {
    pub fn new(n: usize) -> Self {
        StepScratch { a: vec![0.0; n], b: vec![0.0; n] }
    }
}

/// A scheme bound to a space, a drift and a step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    space_id: u64,
    n: usize,
    scheme: Scheme,
    dt: f64,
    drift: PolynomialDrift,
    flow: FlowMap,
    decay: Vec<f64>,
    increment_scale: Vec<f64>,
    implicit: Option<SymTridiag>,
    diffusion: bool,
}

impl Stepper {
    pub fn new(space: &FemSpace, drift: &PolynomialDrift, scheme: Scheme, dt: f64) -> Result<Self> {
        Self::build(space, drift, scheme, dt, true)
    }

    /// Same scheme with `A_h` replaced by zero. Test hook: without diffusion
    /// the splitting step is the nodewise flow.
    pub fn without_diffusion(space: &FemSpace, drift: &PolynomialDrift, scheme: Scheme, dt: f64) -> Result<Self> {
        Self::build(space, drift, scheme, dt, false)
    }

    fn build(space: &FemSpace, drift: &PolynomialDrift, scheme: Scheme, dt: f64, diffusion: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg(format!("time step must be positive, got {dt}")));
        }
        let lam: Vec<f64> = if diffusion { space.eigenvalues().to_vec() } else { vec![0.0; space.dim()] };
        let decay = lam.iter().map(|l| (-l * dt).exp()).collect();
        let increment_scale = lam
            .iter()
            .map(|&l| {
                let x = 2.0 * l * dt;
                if x < 1e-12 {
                    1.0
                } else {
                    (-(-x).exp_m1() / x).sqrt()
                }
            })
            .collect();
        let implicit = (scheme == Scheme::SemiImplicit && diffusion)
            .then(|| space.mass().add_scaled(dt, space.stiffness()));
        Ok(Stepper {
            space_id: space.id(),
            n: space.dim(),
            scheme,
            dt,
            drift: drift.clone(),
            flow: drift.flow_map(dt),
            decay,
            increment_scale,
            implicit,
            diffusion,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn drift(&self) -> &PolynomialDrift {
        &self.drift
    }

    pub fn has_diffusion(&self) -> bool {
        self.diffusion
    }

    pub fn scratch(&self) -> StepScratch {
        StepScratch::new(self.n)
    }

    pub(crate) fn check(&self, space: &FemSpace, len: usize) -> Result<()> {
        if space.id() != self.space_id {
            return Err(Error::arg("stepper was built for a different space"));
        }
        if len != self.n {
            return Err(Error::Dimension { expected: self.n, got: len });
        }
        Ok(())
    }

    /// Advance nodal values `state` by one step in place.
    pub fn step(&self, space: &FemSpace, state: &mut [f64], noise: StepNoise, scratch: &mut StepScratch) -> Result<()> {
        self.check(space, state.len())?;
        match self.scheme {
            Scheme::SplittingExactFlow => {
                state.iter_mut().for_each(|u| *u = self.flow.apply(*u));
                self.linear_step(space, state, noise, scratch);
            }
            Scheme::ExponentialEuler => {
                let dt = self.dt;
                state.iter_mut().for_each(|u| *u += dt * self.drift.eval(*u));
                self.linear_step(space, state, noise, scratch);
            }
            Scheme::SemiImplicit => {
                let dt = self.dt;
                state.iter_mut().for_each(|u| *u += dt * self.drift.eval(*u));
                match noise {
                    StepNoise::None => {}
                    StepNoise::Increment(inc) => {
                        space.from_eigen_into(inc, &mut scratch.a);
                        state.iter_mut().zip(&scratch.a).for_each(|(u, w)| *u += w);
                    }
                    StepNoise::Convolution(_) => {
                        return Err(Error::State(
                            "the semi-implicit scheme takes projected increments, not convolution samples".into(),
                        ))
                    }
                }
                if let Some(m) = &self.implicit {
                    space.mass().matvec_into(state, &mut scratch.a);
                    state.copy_from_slice(&m.solve(&scratch.a));
                }
            }
        }
        Ok(())
    }

    /// `state ← S^h(dt)·state + noise` through eigen-coordinates.
    fn linear_step(&self, space: &FemSpace, state: &mut [f64], noise: StepNoise, scratch: &mut StepScratch) {
        if !self.diffusion {
            if let StepNoise::Convolution(z) | StepNoise::Increment(z) = noise {
                space.from_eigen_into(z, &mut scratch.a);
                state.iter_mut().zip(&scratch.a).for_each(|(u, w)| *u += w);
            }
            return;
        }
        let StepScratch { a, b } = scratch;
        space.to_eigen_into(state, a, b);
        match noise {
            StepNoise::None => b.iter_mut().zip(&self.decay).for_each(|(c, d)| *c *= d),
            StepNoise::Convolution(z) => {
                for ((c, d), z) in b.iter_mut().zip(&self.decay).zip(z) {
                    *c = d * *c + z;
                }
            }
            StepNoise::Increment(w) => {
                for (((c, d), s), w) in b.iter_mut().zip(&self.decay).zip(&self.increment_scale).zip(w) {
                    *c = d * *c + s * w;
                }
            }
        }
        space.from_eigen_into(b, state);
    }

    /// The derivative of [`Stepper::step`] with respect to the state at `base`,
    /// applied to `eta` in place. Noise is additive and drops out.
    pub fn linearized_step(&self, space: &FemSpace, base: &[f64], eta: &mut [f64], scratch: &mut StepScratch) -> Result<()> {
        self.check(space, base.len())?;
        self.check(space, eta.len())?;
        let dt = self.dt;
        match self.scheme {
            Scheme::SplittingExactFlow => {
                for (e, &x) in eta.iter_mut().zip(base) {
                    *e *= self.flow.apply_with_derivative(x).1;
                }
                self.linear_step(space, eta, StepNoise::None, scratch);
            }
            Scheme::ExponentialEuler => {
                for (e, &x) in eta.iter_mut().zip(base) {
                    *e *= 1.0 + dt * self.drift.derivative(x);
                }
                self.linear_step(space, eta, StepNoise::None, scratch);
            }
            Scheme::SemiImplicit => {
                for (e, &x) in eta.iter_mut().zip(base) {
                    *e *= 1.0 + dt * self.drift.derivative(x);
                }
                if let Some(m) = &self.implicit {
                    space.mass().matvec_into(eta, &mut scratch.a);
                    eta.copy_from_slice(&m.solve(&scratch.a));
                }
            }
        }
        Ok(())
    }
}
