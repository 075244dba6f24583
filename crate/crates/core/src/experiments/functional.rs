//! Bounded test functionals `φ ∈ C_b²` for weak-error studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemSpace;

/// Norms and pairings are the exact `L²` ones of the piecewise-linear field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctional {
    /// `exp(−‖x‖²)`.
    Gaussian,
    /// `cos(⟨x, v⟩)` with `v = Σ_k v_k e_k`.
    Cosine {
        #[serde(default = "first_mode")]
        direction: Vec<f64>,
    },
    /// `1/(1 + ‖x‖²)`.
    Rational,
    /// `x ↦ c`.
    Constant {
        #[serde(default)]
        value: f64,
    },
}

fn first_mode() -> Vec<f64> {
    vec![1.0]
}

impl TestFunctional {
    pub fn id(&self) -> &'static str {
        match self {
            TestFunctional::Gaussian => "gaussian",
            TestFunctional::Cosine { .. } => "cosine",
            TestFunctional::Rational => "rational",
            TestFunctional::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunctional::Cosine { direction } if direction.is_empty() || direction.iter().any(|v| !v.is_finite()) => {
                Err(Error::arg("cosine direction must be a non-empty list of finite coefficients"))
            }
            TestFunctional::Constant { value } if !value.is_finite() => Err(Error::arg("constant must be finite")),
            _ => Ok(()),
        }
    }

    /// Precompute what evaluation on `space` needs.
    pub fn bind(&self, space: &FemSpace) -> BoundFunctional {
        let pairing = match self {
            TestFunctional::Cosine { direction } => {
                let mut load = vec![0.0; space.dim()];
                for (k, &v) in direction.iter().enumerate() {
                    if v != 0.0 {
                        for (l, b) in load.iter_mut().zip(space.mode_load(k + 1)) {
                            *l += v * b;
                        }
                    }
                }
                load
            }
            _ => Vec::new(),
        };
        BoundFunctional { kind: self.clone(), mass: space.mass().clone(), pairing }
    }
}

/// A functional ready to evaluate nodal vectors of one space.
#[derive(Debug, Clone)]
pub struct BoundFunctional {
    kind: TestFunctional,
    mass: crate::fem::SymTridiag,
    /// `⟨v, φ_j⟩` for the cosine functional.
    pairing: Vec<f64>,
}

impl BoundFunctional {
    pub fn eval(&self, nodal: &[f64]) -> f64 {
        match &self.kind {
            TestFunctional::Gaussian => (-self.mass.inner(nodal, nodal)).exp(),
            TestFunctional::Cosine { .. } => self.pairing(nodal).cos(),
            TestFunctional::Rational => 1.0 / (1.0 + self.mass.inner(nodal, nodal)),
            TestFunctional::Constant { value } => *value,
        }
    }

    /// `⟨x, v⟩`; zero for functionals without a direction.
    pub fn pairing(&self, nodal: &[f64]) -> f64 {
        self.pairing.iter().zip(nodal).map(|(a, b)| a * b).sum()
    }

    /// The load vector `⟨v, φ_j⟩` (cosine only).
    pub fn pairing_load(&self) -> &[f64] {
        &self.pairing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{SpectralBasis, SpectralCoeffs};

    #[test]
    fn values() {
        let space = FemSpace::uniform(1.0, 16).unwrap();
        let zero = vec![0.0; space.dim()];
        assert_eq!(TestFunctional::Gaussian.bind(&space).eval(&zero), 1.0);
        assert_eq!(TestFunctional::Rational.bind(&space).eval(&zero), 1.0);
        assert_eq!(TestFunctional::Constant { value: 2.5 }.bind(&space).eval(&zero), 2.5);
        let one = vec![1.0; space.dim()];
        let n2 = space.l2_norm(&one).powi(2);
        assert!((TestFunctional::Gaussian.bind(&space).eval(&one) - (-n2).exp()).abs() < 1e-15);
    }

    #[test]
    fn cosine_pairing_is_exact_l2_inner_product() {
        let space = FemSpace::uniform(1.0, 8).unwrap();
        let basis = SpectralBasis::new(1.0, 64).unwrap();
        let f = TestFunctional::Cosine { direction: vec![1.0] }.bind(&space);
        // x = P^h e_1 has ⟨x, e_1⟩ = ‖P^h e_1‖²
        let x = space.l2_project(&basis, &SpectralCoeffs::mode(64, 1)).unwrap();
        let want = space.l2_norm(&x.nodal).powi(2);
        assert!((f.pairing(&x.nodal) - want).abs() < 1e-14);
        assert!(TestFunctional::Cosine { direction: vec![] }.validate().is_err());
    }
}
