//! Polynomial drift `f(ξ) = Σ a_k ξ^k` and the phase flow of `dx = f(x)dt`.

use crate::error::{Error, Result};

/// Local error bound per adaptive RK4 step.
const RK4_LOCAL_TOL: f64 = 1e-12;

/// Drift with a global one-sided Lipschitz bound `f′ ≤ L_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialDrift {
    coeffs: [f64; 5],
    degree: usize,
    growth: u32,
    sup_derivative: f64,
    flow: FlowForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FlowForm {
    /// `f = a₁x + a₀`.
    Affine { a1: f64, a0: f64 },
    /// `f = a₁x + a₃x³`, `a₃ < 0`.
    Bernoulli { a1: f64, a3: f64 },
    /// Anything else: adaptive RK4.
    Numeric,
}

impl PolynomialDrift {
    /// Coefficients `a_0, a_1, …` (at most five). Rejects drifts that are not
    /// one-sided Lipschitz.
    pub fn new(coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > 5 {
            return Err(Error::arg(format!("drift degree must be at most 4, got {}", coeffs.len() - 1)));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("drift coefficients must be finite"));
        }
        let mut a = [0.0; 5];
        a[..coeffs.len()].copy_from_slice(coeffs);
        let degree = (0..5).rev().find(|&k| a[k] != 0.0).unwrap_or(0);
        let sup_derivative = match degree {
            0 => 0.0,
            1 => a[1],
            3 if a[3] < 0.0 => a[1] - a[2] * a[2] / (3.0 * a[3]),
            3 => {
                return Err(Error::arg(format!(
                    "one-sided Lipschitz violated: cubic coefficient a3 = {} must be negative",
                    a[3]
                )))
            }
            d => {
                return Err(Error::arg(format!(
                    "one-sided Lipschitz violated: f′ of a degree-{d} polynomial is unbounded above"
                )))
            }
        };
        let flow = match degree {
            0 | 1 => FlowForm::Affine { a1: a[1], a0: a[0] },
            _ if a[0] == 0.0 && a[2] == 0.0 => FlowForm::Bernoulli { a1: a[1], a3: a[3] },
            _ => FlowForm::Numeric,
        };
        Ok(PolynomialDrift {
            coeffs: a,
            degree,
            growth: degree.max(1) as u32,
            sup_derivative,
            flow,
        })
    }

    /// `f(x) = x − x³`.
    pub fn allen_cahn() -> Self {
        Self::new(&[0.0, 1.0, 0.0, -1.0]).expect("valid drift")
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Self::new(&[]).expect("valid drift")
    }

    pub fn linear(a1: f64) -> Self {
        Self::new(&[0.0, a1]).expect("valid drift")
    }

    /// Declare the growth exponent `K` in `|f(ξ)| ≤ L(1 + |ξ|^K)`.
    pub fn with_growth_exponent(mut self, k: u32) -> Result<Self> {
        if (k as usize) < self.degree.max(1) {
            return Err(Error::arg(format!(
                "growth exponent K = {k} is below the polynomial degree {}",
                self.degree
            )));
        }
        if k >= 5 {
            return Err(Error::arg(format!("growth exponent must satisfy K < 5, got {k}")));
        }
        self.growth = k;
        Ok(self)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..=self.degree]
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn growth_exponent(&self) -> u32 {
        self.growth
    }

    /// `sup_ξ f′(ξ)`.
    pub fn one_sided_constant(&self) -> f64 {
        self.sup_derivative
    }

    pub fn is_zero(&self) -> bool {
        self.degree == 0 && self.coeffs[0] == 0.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs[..=self.degree].iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (1..=self.degree).rev().fold(0.0, |acc, k| acc * x + k as f64 * self.coeffs[k])
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        (2..=self.degree)
            .rev()
            .fold(0.0, |acc, k| acc * x + (k * (k - 1)) as f64 * self.coeffs[k])
    }

    /// `Φ_t(x)`, the solution of `dx = f(x)dt` at time `t`.
    pub fn flow(&self, t: f64, x: f64) -> f64 {
        self.flow_map(t).apply(x)
    }

    /// `(Φ_t(x), ∂_x Φ_t(x))`.
    pub fn flow_with_derivative(&self, t: f64, x: f64) -> (f64, f64) {
        self.flow_map(t).apply_with_derivative(x)
    }

    /// `Φ_t` for a fixed `t ≥ 0`, with the time-dependent factors precomputed.
    pub fn flow_map(&self, t: f64) -> FlowMap {
        let consts = if t == 0.0 || self.is_zero() {
            FlowConsts::Identity
        } else {
            match self.flow {
                FlowForm::Affine { a1, a0 } if a1 == 0.0 => FlowConsts::Affine { e: 1.0, shift: a0 * t },
                FlowForm::Affine { a1, a0 } => FlowConsts::Affine {
                    e: (a1 * t).exp(),
                    shift: a0 * (a1 * t).exp_m1() / a1,
                },
                FlowForm::Bernoulli { a1, a3 } if a1 == 0.0 => FlowConsts::Bernoulli { e: 1.0, c: 2.0 * a3 * t },
                FlowForm::Bernoulli { a1, a3 } => FlowConsts::Bernoulli {
                    e: (a1 * t).exp(),
                    c: a3 / a1 * (2.0 * a1 * t).exp_m1(),
                },
                FlowForm::Numeric => FlowConsts::Numeric,
            }
        };
        FlowMap { t, consts, drift: self.clone() }
    }

    /// `Ψ_t(x) = (Φ_t(x) − x)/t`, with `Ψ_0 = f`.
    pub fn psi(&self, t: f64, x: f64) -> f64 {
        if t == 0.0 {
            self.eval(x)
        } else {
            (self.flow(t, x) - x) / t
        }
    }

    /// Adaptive RK4 (step doubling) on the state and its variational equation.
    fn rk4_flow(&self, t: f64, x: f64) -> (f64, f64) {
        let rhs = |y: f64, xi: f64| (self.eval(y), self.derivative(y) * xi);
        let rk4 = |y: f64, xi: f64, h: f64| {
            let (k1, l1) = rhs(y, xi);
            let (k2, l2) = rhs(y + 0.5 * h * k1, xi + 0.5 * h * l1);
            let (k3, l3) = rhs(y + 0.5 * h * k2, xi + 0.5 * h * l2);
            let (k4, l4) = rhs(y + h * k3, xi + h * l3);
            (
                y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
                xi + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4),
            )
        };
        let (mut y, mut xi, mut s) = (x, 1.0, 0.0);
        let mut h = t.min(0.1 / (1.0 + self.derivative(x).abs()));
        while s < t {
            h = h.min(t - s);
            let (y1, xi1) = rk4(y, xi, h);
            let (ym, xim) = rk4(y, xi, 0.5 * h);
            let (y2, xi2) = rk4(ym, xim, 0.5 * h);
            let err = ((y2 - y1).abs() / 15.0).max((xi2 - xi1).abs() / 15.0 / (1.0 + xi2.abs()));
            let tol = RK4_LOCAL_TOL * (1.0 + y2.abs());
            if err <= tol || h < 1e-14 * t {
                y = y2 + (y2 - y1) / 15.0;
                xi = xi2 + (xi2 - xi1) / 15.0;
                s += h;
            }
            let factor = if err == 0.0 { 4.0 } else { 0.9 * (tol / err).powf(0.2) };
            h *= factor.clamp(0.2, 4.0);
        }
        (y, xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FlowConsts {
    Identity,
    /// `Φ = e·x + shift`.
    Affine { e: f64, shift: f64 },
    /// `Φ = e·x/√(1 − c x²)`.
    Bernoulli { e: f64, c: f64 },
    Numeric,
}

/// Phase flow at a fixed time.
#[derive(Debug, Clone)]
pub struct FlowMap {
    t: f64,
    consts: FlowConsts,
    drift: PolynomialDrift,
}

impl FlowMap {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.consts {
            FlowConsts::Identity => x,
            FlowConsts::Affine { e, shift } => e * x + shift,
            FlowConsts::Bernoulli { e, c } => e * x / (1.0 - c * x * x).sqrt(),
            FlowConsts::Numeric => self.drift.rk4_flow(self.t, x).0,
        }
    }

    pub fn apply_with_derivative(&self, x: f64) -> (f64, f64) {
        match self.consts {
            FlowConsts::Identity => (x, 1.0),
            FlowConsts::Affine { e, shift } => (e * x + shift, e),
            FlowConsts::Bernoulli { e, c } => {
                let r = 1.0 / (1.0 - c * x * x).sqrt();
                (e * x * r, e * r * r * r)
            }
            FlowConsts::Numeric => self.drift.rk4_flow(self.t, x),
        }
    }
}
