//! Piecewise-linear finite element space `V_h ⊂ H¹₀(0, L)`.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::mesh::Mesh1D;
use super::tridiag::SymTridiag;
use crate::error::{Error, Result};

/// Element of `V_h` stored by its interior nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct FemField {
    pub space_id: u64,
    pub nodal: Vec<f64>,
}

impl FemField {
    pub fn len(&self) -> usize {
        self.nodal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodal.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.nodal)
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Mesh, Galerkin matrices and the discrete eigensystem `(λ_i^h, e_i^h)` of
/// `A_h = M⁻¹S`, with `e_i^h` orthonormal in `L²`.
#[derive(Clone)]
pub struct FemSpace {
    id: u64,
    mesh: Mesh1D,
    mass: SymTridiag,
    stiffness: SymTridiag,
    eig_vals: Vec<f64>,
    eig_vecs: DMatrix<f64>,
    transform: Transform,
}

impl fmt::Debug for FemSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FemSpace")
            .field("id", &self.id)
            .field("dim", &self.dim())
            .field("h", &self.mesh.h())
            .field("fast_transform", &matches!(self.transform, Transform::Sine(_)))
            .finish()
    }
}

#[derive(Clone)]
enum Transform {
    Dense,
    Sine(Arc<SineTransform>),
}

/// Discrete sine transform standing in for the dense eigenvector matrix on
/// uniform meshes, where `e_i^h(x_j) ∝ sin(iπx_j/L)`.
struct SineTransform {
    fft: Arc<dyn Fft<f64>>,
    /// Signed normalisation of column `i`, matched to the dense eigenvectors.
    scale: Vec<f64>,
}

impl SineTransform {
    /// `y_k = Σ_j x_j sin(πjk/(n+1))`, `j, k = 1..n`.
    fn dst(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let big = 2 * (n + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); big];
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1].re = v;
            buf[big - 1 - j].re = -v;
        }
        self.fft.process(&mut buf);
        for (k, out) in y.iter_mut().enumerate() {
            *out = -0.5 * buf[k + 1].im;
        }
    }
}

impl FemSpace {
    /// Assemble mass and stiffness matrices from hat functions (Dirichlet
    /// rows removed) and solve `S v = λ M v`.
    pub fn assemble(mesh: Mesh1D) -> Result<Self> {
        let n = mesh.interior_count();
        let nodes = mesh.nodes();
        let mut mass = SymTridiag { diag: vec![0.0; n], off: vec![0.0; n.saturating_sub(1)] };
        let mut stiffness = mass.clone();
        for j in 0..n {
            let hl = nodes[j + 1] - nodes[j];
            let hr = nodes[j + 2] - nodes[j + 1];
            if !(hl > 0.0 && hr > 0.0) {
                return Err(Error::Mesh(format!("degenerate element next to node {}", j + 1)));
            }
            mass.diag[j] = (hl + hr) / 3.0;
            stiffness.diag[j] = 1.0 / hl + 1.0 / hr;
            if j + 1 < n {
                mass.off[j] = hr / 6.0;
                stiffness.off[j] = -1.0 / hr;
            }
        }

        let (eig_vals, eig_vecs) = generalized_eigen(&mass, &stiffness)?;

        let transform = if mesh.is_uniform() {
            Transform::Sine(Arc::new(sine_transform(&mesh, &mass, &eig_vecs)?))
        } else {
            Transform::Dense
        };

        let mut hasher = DefaultHasher::new();
        for x in nodes {
            x.to_bits().hash(&mut hasher);
        }
        Ok(FemSpace {
            id: hasher.finish(),
            mesh,
            mass,
            stiffness,
            eig_vals,
            eig_vecs,
            transform,
        })
    }

    pub fn uniform(length: f64, elements: usize) -> Result<Self> {
        Self::assemble(Mesh1D::uniform(length, elements)?)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn length(&self) -> f64 {
        self.mesh.length()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    /// `N_h`, the number of interior nodes.
    pub fn dim(&self) -> usize {
        self.eig_vals.len()
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.stiffness
    }

    /// `λ_1^h ≤ … ≤ λ_{N_h}^h`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig_vals
    }

    /// Column `i` holds the nodal values of `e_{i+1}^h`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eig_vecs
    }

    pub fn has_fast_transform(&self) -> bool {
        matches!(self.transform, Transform::Sine(_))
    }

    pub fn field(&self, nodal: Vec<f64>) -> Result<FemField> {
        if nodal.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: nodal.len() });
        }
        Ok(FemField { space_id: self.id, nodal })
    }

    pub fn zero_field(&self) -> FemField {
        FemField { space_id: self.id, nodal: vec![0.0; self.dim()] }
    }

    pub(crate) fn check_field(&self, v: &FemField) -> Result<()> {
        if v.nodal.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: v.nodal.len() });
        }
        if v.space_id != self.id {
            return Err(Error::arg("field belongs to a different finite element space"));
        }
        Ok(())
    }

    /// `c_i = ⟨b, e_i^h⟩_{ℓ²}`, i.e. `Eᵀb` for a load vector `b`.
    pub fn load_to_eigen(&self, load: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.load_to_eigen_into(load, &mut out);
        out
    }

    pub fn load_to_eigen_into(&self, load: &[f64], out: &mut [f64]) {
        match &self.transform {
            Transform::Dense => {
                let c = self.eig_vecs.tr_mul(&DVector::from_column_slice(load));
                out.copy_from_slice(c.as_slice());
            }
            Transform::Sine(t) => {
                t.dst(load, out);
                for (o, s) in out.iter_mut().zip(&t.scale) {
                    *o *= s;
                }
            }
        }
    }

    /// Discrete-eigenbasis coordinates `⟨v, e_i^h⟩` of nodal values `v`.
    pub fn to_eigen(&self, nodal: &[f64]) -> Vec<f64> {
        self.load_to_eigen(&self.mass.matvec(nodal))
    }

    pub fn to_eigen_into(&self, nodal: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.mass.matvec_into(nodal, scratch);
        self.load_to_eigen_into(scratch, out);
    }

    /// Nodal values of `Σ_i c_i e_i^h`.
    pub fn from_eigen(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.from_eigen_into(coeffs, &mut out);
        out
    }

    pub fn from_eigen_into(&self, coeffs: &[f64], out: &mut [f64]) {
        match &self.transform {
            Transform::Dense => {
                let v = &self.eig_vecs * DVector::from_column_slice(coeffs);
                out.copy_from_slice(v.as_slice());
            }
            Transform::Sine(t) => {
                let scaled: Vec<f64> = coeffs.iter().zip(&t.scale).map(|(c, s)| c * s).collect();
                t.dst(&scaled, out);
            }
        }
    }

    /// `S^h(t)v = Σ e^{-λ_i^h t}⟨v, e_i^h⟩e_i^h`.
    pub fn semigroup_apply(&self, t: f64, v: &FemField) -> Result<FemField> {
        if !(t >= 0.0) {
            return Err(Error::arg(format!("semigroup time must be non-negative, got {t}")));
        }
        self.check_field(v)?;
        let mut c = self.to_eigen(&v.nodal);
        for (ci, l) in c.iter_mut().zip(&self.eig_vals) {
            *ci *= (-l * t).exp();
        }
        Ok(FemField { space_id: self.id, nodal: self.from_eigen(&c) })
    }

    /// `A_h^{r/2} v` for `|r| ≤ 2`.
    pub fn fractional_apply(&self, r: f64, v: &FemField) -> Result<FemField> {
        if !(r.abs() <= 2.0) {
            return Err(Error::arg(format!("fractional exponent must satisfy |r| ≤ 2, got {r}")));
        }
        self.check_field(v)?;
        let mut c = self.to_eigen(&v.nodal);
        for (ci, l) in c.iter_mut().zip(&self.eig_vals) {
            *ci *= l.powf(0.5 * r);
        }
        Ok(FemField { space_id: self.id, nodal: self.from_eigen(&c) })
    }

    /// `L²` inner product of two fields.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.inner(u, v)
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.mass.inner(u, u).max(0.0).sqrt()
    }

    /// `‖v′‖`.
    pub fn h1_seminorm(&self, u: &[f64]) -> f64 {
        self.stiffness.inner(u, u).max(0.0).sqrt()
    }
}

/// Solve `S v = λ M v` through the Cholesky factor `M = LLᵀ` and the
/// symmetric standard problem for `L⁻¹SL⁻ᵀ`. Eigenvalues ascending,
/// eigenvectors `M`-orthonormal.
pub fn generalized_eigen(mass: &SymTridiag, stiffness: &SymTridiag) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = mass.dim();
    let m = mass.to_dense();
    let s = stiffness.to_dense();
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&s)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let lt = l.transpose();
    let vecs = lt
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    if vals.first().is_some_and(|&v| !(v > 0.0)) {
        return Err(Error::Numerical("non-positive discrete eigenvalue".into()));
    }
    Ok((vals, vecs))
}

fn sine_transform(mesh: &Mesh1D, mass: &SymTridiag, eig_vecs: &DMatrix<f64>) -> Result<SineTransform> {
    let n = mesh.interior_count();
    let big = 2 * (n + 1);
    let fft = FftPlanner::new().plan_fft_forward(big);
    let mut scale = Vec::with_capacity(n);
    for i in 1..=n {
        let v: Vec<f64> = (1..=n)
            .map(|j| (PI * (i * j) as f64 / (n + 1) as f64).sin())
            .collect();
        let mv = mass.matvec(&v);
        let norm = v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>().sqrt();
        let overlap: f64 = eig_vecs.column(i - 1).iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() / norm;
        if (overlap.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "dense eigenvector {i} does not match the sine mode (overlap {overlap})"
            )));
        }
        scale.push(overlap.signum() / norm);
    }
    Ok(SineTransform { fft, scale })
}
