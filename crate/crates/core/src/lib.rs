//! Finite element discretisation and splitting integrators for semilinear
//! stochastic heat equations with one-sided Lipschitz polynomial drift
//! (stochastic Allen–Cahn) and additive Q-Wiener noise, together with
//! coupled Monte-Carlo estimators of strong and weak convergence rates.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod noise;
pub mod quadrature;
pub mod selftest;
pub mod spectral;

pub use error::{Error, Result};
