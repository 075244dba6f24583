//! Drift, exact phase flow, time integrators and the tangent process.

mod drift;
mod integrate;
mod scheme;

pub use drift::{FlowMap, PolynomialDrift};
pub use integrate::{
    integrate, integrate_coupled, integrate_with, tangent_integrate, Checkpoints, ComposedNoise, CoupledDriver,
    CoupledLevel, CoupledNoise, ExactNoise, JointExactNoise, JointIncrementNoise, NoNoise, NoiseDriver, NoiseKind,
    SharedExactNoise, Trajectory, OVERFLOW_THRESHOLD,
};
pub use scheme::{Scheme, SchemeConfig, StepNoise, StepScratch, Stepper};
