//! `P^h`, `R^h` and related transfer operators between `H` and `V_h`.
//!
//! For a smooth `g` vanishing at both ends, two integrations by parts give
//! `⟨g′, φ_j′⟩ = (g_j − g_{j−1})/h_j − (g_{j+1} − g_j)/h_{j+1}`, which equals
//! `(S ĝ)_j` with `ĝ` the nodal values of `g`. With `g = A⁻¹x` this yields the
//! exact load `⟨x, φ_j⟩`, so neither projection needs quadrature when `x`
//! is given by mode amplitudes.

use nalgebra::DMatrix;

use super::mesh::Mesh1D;
use super::space::{FemField, FemSpace};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::spectral::{mode_eigenvalue, mode_value, SpectralBasis, SpectralCoeffs};

impl FemSpace {
    fn check_basis(&self, basis: &SpectralBasis, x: &SpectralCoeffs) -> Result<()> {
        if (basis.length() - self.length()).abs() > 1e-12 * self.length() {
            return Err(Error::arg("spectral basis and mesh cover different intervals"));
        }
        if x.len() != basis.k_max() {
            return Err(Error::Dimension { expected: basis.k_max(), got: x.len() });
        }
        Ok(())
    }

    /// Nodal values at interior nodes of `Σ_k w_k x_k e_k`.
    fn nodal_series(&self, x: &SpectralCoeffs, weight: impl Fn(usize) -> f64) -> Vec<f64> {
        let length = self.length();
        self.mesh()
            .interior_nodes()
            .iter()
            .map(|&xi| {
                x.0.iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(i, c)| c * weight(i + 1) * mode_value(length, i + 1, xi))
                    .sum()
            })
            .collect()
    }

    /// Load vector `b_j = ⟨x, φ_j⟩`.
    pub fn load_vector(&self, basis: &SpectralBasis, x: &SpectralCoeffs) -> Result<Vec<f64>> {
        self.check_basis(basis, x)?;
        let l = self.length();
        let inv = self.nodal_series(x, |k| 1.0 / mode_eigenvalue(l, k));
        Ok(self.stiffness().matvec(&inv))
    }

    /// Load vector `b_j = ⟨e_k, φ_j⟩` of a single mode.
    pub fn mode_load(&self, k: usize) -> Vec<f64> {
        let l = self.length();
        let lam = mode_eigenvalue(l, k);
        let g: Vec<f64> = self
            .mesh()
            .interior_nodes()
            .iter()
            .map(|&xi| mode_value(l, k, xi) / lam)
            .collect();
        self.stiffness().matvec(&g)
    }

    /// `P^h x`: solve `M v = b` with `b_j = ⟨x, φ_j⟩`.
    pub fn l2_project(&self, basis: &SpectralBasis, x: &SpectralCoeffs) -> Result<FemField> {
        let b = self.load_vector(basis, x)?;
        self.field(self.mass().solve(&b))
    }

    /// `R^h x`: solve `S v = d` with `d_j = ⟨x′, φ_j′⟩`.
    pub fn ritz_project(&self, basis: &SpectralBasis, x: &SpectralCoeffs) -> Result<FemField> {
        self.check_basis(basis, x)?;
        let d = self.stiffness().matvec(&self.nodal_series(x, |_| 1.0));
        self.field(self.stiffness().solve(&d))
    }

    /// `P^h f` for a function given pointwise; element loads by 6-point
    /// Gauss–Legendre quadrature.
    pub fn l2_project_function(&self, f: impl Fn(f64) -> f64) -> Result<FemField> {
        let b = load_by_quadrature(self.mesh(), &f)?;
        self.field(self.mass().solve(&b))
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> FemField {
        FemField {
            space_id: self.id(),
            nodal: self.mesh().interior_nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    /// The field as mode amplitudes `⟨v, e_k⟩`, `k ≤ k_max`.
    pub fn to_spectral(&self, basis: &SpectralBasis, v: &FemField) -> Result<SpectralCoeffs> {
        self.check_field(v)?;
        Ok(SpectralCoeffs(
            (1..=basis.k_max())
                .map(|k| self.mode_load(k).iter().zip(&v.nodal).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    /// Matrix `G_{ik} = ⟨e_k, e_i^h⟩`, `i ≤ N_h`, `k ≤ k_count`; column `k`
    /// holds the discrete-eigenbasis coordinates of `P^h e_k`.
    pub fn eigen_coupling(&self, k_count: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, k_count);
        let mut col = vec![0.0; n];
        for k in 1..=k_count {
            self.load_to_eigen_into(&self.mode_load(k), &mut col);
            g.column_mut(k - 1).copy_from_slice(&col);
        }
        g
    }
}

fn load_by_quadrature(mesh: &Mesh1D, f: &impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let (xs, ws) = gauss_legendre(6);
    let nodes = mesh.nodes();
    let n = mesh.interior_count();
    let mut b = vec![0.0; n];
    for e in 0..mesh.elements() {
        let (xl, xr) = (nodes[e], nodes[e + 1]);
        let half = 0.5 * (xr - xl);
        for (t, w) in xs.iter().zip(&ws) {
            let x = xl + half * (t + 1.0);
            let fx = f(x);
            if !fx.is_finite() {
                return Err(Error::Evaluation(x));
            }
            let phi_r = 0.5 * (t + 1.0);
            let phi_l = 1.0 - phi_r;
            if e >= 1 {
                b[e - 1] += w * half * fx * phi_l;
            }
            if e < n {
                b[e] += w * half * fx * phi_r;
            }
        }
    }
    Ok(b)
}

/// Exact `L²` distance between piecewise-linear fields on two meshes of the
/// same interval, integrated on the union of their nodes.
pub fn l2_distance(mesh_a: &Mesh1D, a: &[f64], mesh_b: &Mesh1D, b: &[f64]) -> f64 {
    let mut union: Vec<f64> = mesh_a.nodes().iter().chain(mesh_b.nodes()).copied().collect();
    union.sort_by(|x, y| x.partial_cmp(y).unwrap());
    union.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * mesh_a.length());
    let diff: Vec<f64> = union
        .iter()
        .map(|&x| mesh_a.evaluate(a, x) - mesh_b.evaluate(b, x))
        .collect();
    let mut acc = 0.0;
    for (w, d) in union.windows(2).zip(diff.windows(2)) {
        // Simpson is exact for the quadratic integrand.
        let mid = 0.5 * (d[0] + d[1]);
        acc += (w[1] - w[0]) / 6.0 * (d[0] * d[0] + 4.0 * mid * mid + d[1] * d[1]);
    }
    acc.max(0.0).sqrt()
}
