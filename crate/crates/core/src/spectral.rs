//! Eigensystem of the Dirichlet Laplacian on `[0, L]`.
//!
//! `A = -d²/dx²` with homogeneous Dirichlet conditions has eigenpairs
//! `λ_k = (kπ/L)²`, `e_k(ξ) = √(2/L) sin(kπξ/L)`. Elements of `H = L²(0, L)`
//! are represented by their first `k_max` coefficients in this basis, so the
//! semigroup `S(t) = e^{-tA}` and the fractional powers `A^{r/2}` act
//! diagonally.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::CompositeRule;

/// Default number of retained modes.
pub const DEFAULT_K_MAX: usize = 1 << 12;

/// Gauss points per quadrature panel used by [`SpectralBasis::project_function`].
const PROJECTION_ORDER: usize = 6;
/// Panels per half-wavelength of the highest retained mode.
const PANELS_PER_HALF_WAVE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    length: f64,
    k_max: usize,
}

/// Mode amplitudes `x_k = ⟨x, e_k⟩`, `k = 1..=k_max` (stored zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs(pub Vec<f64>);

impl SpectralCoeffs {
    pub fn zeros(k_max: usize) -> Self {
        SpectralCoeffs(vec![0.0; k_max])
    }

    /// Unit vector along mode `k` (one-based).
    pub fn mode(k_max: usize, k: usize) -> Self {
        let mut c = vec![0.0; k_max];
        c[k - 1] = 1.0;
        SpectralCoeffs(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `L²` norm (Parseval).
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl SpectralBasis {
    pub fn new(length: f64, k_max: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::arg(format!("interval length must be positive, got {length}")));
        }
        if k_max == 0 {
            return Err(Error::arg("k_max must be at least 1"));
        }
        Ok(SpectralBasis { length, k_max })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max {
            return Err(Error::Index { index: k, max: self.k_max });
        }
        Ok(())
    }

    fn check_len(&self, x: &SpectralCoeffs) -> Result<()> {
        if x.len() != self.k_max {
            return Err(Error::Dimension { expected: self.k_max, got: x.len() });
        }
        Ok(())
    }

    /// `λ_k = (kπ/L)²`.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        self.check_mode(k)?;
        Ok(mode_eigenvalue(self.length, k))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.k_max).map(|k| mode_eigenvalue(self.length, k)).collect()
    }

    /// `e_k(ξ)`.
    pub fn eval_mode(&self, k: usize, xi: f64) -> Result<f64> {
        self.check_mode(k)?;
        Ok(mode_value(self.length, k, xi))
    }

    /// Point value of the truncated expansion.
    pub fn evaluate(&self, x: &SpectralCoeffs, xi: f64) -> Result<f64> {
        self.check_len(x)?;
        Ok(x.0
            .iter()
            .enumerate()
            .map(|(i, c)| c * mode_value(self.length, i + 1, xi))
            .sum())
    }

    /// `S(t)x`: mode `k` damped by `exp(-λ_k t)`.
    pub fn semigroup_apply(&self, t: f64, x: &SpectralCoeffs) -> Result<SpectralCoeffs> {
        if !(t >= 0.0) {
            return Err(Error::arg(format!("semigroup time must be non-negative, got {t}")));
        }
        self.check_len(x)?;
        Ok(SpectralCoeffs(
            x.0.iter()
                .enumerate()
                .map(|(i, c)| c * (-mode_eigenvalue(self.length, i + 1) * t).exp())
                .collect(),
        ))
    }

    /// `A^{r/2}x` for any real `r`; negative exponents give the inverse power.
    pub fn fractional_power_apply(&self, r: f64, x: &SpectralCoeffs) -> Result<SpectralCoeffs> {
        self.check_len(x)?;
        Ok(SpectralCoeffs(
            x.0.iter()
                .enumerate()
                .map(|(i, c)| c * mode_eigenvalue(self.length, i + 1).powf(0.5 * r))
                .collect(),
        ))
    }

    /// `‖A^{r/2}x‖`.
    pub fn h_norm(&self, r: f64, x: &SpectralCoeffs) -> Result<f64> {
        Ok(self.fractional_power_apply(r, x)?.norm())
    }

    /// Coefficients `⟨f, e_k⟩` by composite Gauss–Legendre quadrature, with
    /// the panel count resolving the highest retained mode.
    pub fn project_function(&self, f: impl Fn(f64) -> f64) -> Result<SpectralCoeffs> {
        let panels = PANELS_PER_HALF_WAVE * self.k_max;
        let rule = CompositeRule::new(0.0, self.length, panels, PROJECTION_ORDER);
        let scale = (2.0 / self.length).sqrt();
        let mut coeffs = vec![0.0; self.k_max];
        for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(xi);
            if !fx.is_finite() {
                return Err(Error::Evaluation(xi));
            }
            if fx == 0.0 {
                continue;
            }
            let wf = w * fx * scale;
            // sin(kθ) by the three-term recurrence.
            let theta = PI * xi / self.length;
            let two_cos = 2.0 * theta.cos();
            let mut prev = 0.0;
            let mut cur = theta.sin();
            for c in coeffs.iter_mut() {
                *c += wf * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        Ok(SpectralCoeffs(coeffs))
    }

    /// `‖f‖²` with the same quadrature as [`Self::project_function`].
    pub fn function_norm_sq(&self, f: impl Fn(f64) -> f64) -> f64 {
        let rule = CompositeRule::new(
            0.0,
            self.length,
            PANELS_PER_HALF_WAVE * self.k_max,
            PROJECTION_ORDER,
        );
        rule.integrate(|x| f(x).powi(2))
    }
}

#[inline]
pub(crate) fn mode_eigenvalue(length: f64, k: usize) -> f64 {
    let w = k as f64 * PI / length;
    w * w
}

#[inline]
pub(crate) fn mode_value(length: f64, k: usize, xi: f64) -> f64 {
    (2.0 / length).sqrt() * (k as f64 * PI * xi / length).sin()
}
