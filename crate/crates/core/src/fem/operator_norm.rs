//! Spectral norms of `A^{s/2}(I − P^h)A^{−r/2}`, `A^{s/2}(I − R^h)A^{−r/2}`
//! and `A^{s/2}(S^h(t)P^h − S(t))A^{−r/2}` restricted to `span{e_k}_{k≤k_max}`.
//!
//! The norm is `√λ_max` of the Gram matrix of the images of `e_k`. For
//! `s ∈ {0, 1}` the Gram entries are exact, built from
//! `G_{ik} = ⟨e_k, e_i^h⟩`, the discrete eigenvalues and the identities
//! `⟨e_k′, v′⟩ = λ_k⟨e_k, v⟩` (`v ∈ V_h`) and Galerkin orthogonality of `R^h`.
//! Other `s` expand the images in continuous modes up to a cut-off.

use nalgebra::{DMatrix, DVector};

use super::space::FemSpace;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorOperator {
    /// `I − P^h`.
    L2Projection,
    /// `I − R^h`.
    Ritz,
    /// `G^h(t) = S^h(t)P^h − S(t)`.
    Semigroup(f64),
}

fn validate(space: &FemSpace, basis: &SpectralBasis, s: f64, r: f64, which: ErrorOperator) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::arg(format!("smoothness exponent s must lie in [0, 1], got {s}")));
    }
    match which {
        ErrorOperator::L2Projection | ErrorOperator::Ritz => {
            if !(s <= r && r <= 2.0) {
                return Err(Error::arg(format!("projection errors need s ≤ r ≤ 2, got s={s}, r={r}")));
            }
        }
        ErrorOperator::Semigroup(t) => {
            if !(t > 0.0) {
                return Err(Error::arg(format!("semigroup error needs t > 0, got {t}")));
            }
            if !(-2.0..=2.0).contains(&r) {
                return Err(Error::arg(format!("r must lie in [-2, 2], got {r}")));
            }
        }
    }
    if basis.k_max() < 4 * space.dim() {
        return Err(Error::arg(format!(
            "spectral span too small: k_max = {} < 4·N_h = {}",
            basis.k_max(),
            4 * space.dim()
        )));
    }
    if (basis.length() - space.length()).abs() > 1e-12 * space.length() {
        return Err(Error::arg("spectral basis and mesh cover different intervals"));
    }
    Ok(())
}

/// Spectral norm of the selected error operator, from the largest eigenvalue
/// of the explicit Gram matrix.
pub fn operator_error_norm(
    space: &FemSpace,
    basis: &SpectralBasis,
    s: f64,
    r: f64,
    which: ErrorOperator,
) -> Result<f64> {
    validate(space, basis, s, r, which)?;
    if s != 0.0 && s != 1.0 {
        return operator_error_norm_truncated(space, basis, s, r, which, 8 * basis.k_max());
    }
    let k_max = basis.k_max();
    let lam = DVector::from_vec(basis.eigenvalues());
    let lam_h = DVector::from_column_slice(space.eigenvalues());
    let g = space.eigen_coupling(k_max);
    let s1 = s == 1.0;

    // Gram matrix before the A^{-r/2} weights.
    let mut gram = match which {
        ErrorOperator::L2Projection => {
            let gtg = g.tr_mul(&g);
            if s1 {
                // λ_k δ − (λ_k + λ_l) g_k·g_l + g_kᵀΛ_h g_l
                let lg = scale_rows(&g, lam_h.as_slice());
                let mut m = g.tr_mul(&lg);
                for l in 0..k_max {
                    for k in 0..k_max {
                        m[(k, l)] -= (lam[k] + lam[l]) * gtg[(k, l)];
                    }
                }
                add_diag(&mut m, lam.as_slice());
                m
            } else {
                let mut m = -gtg;
                add_diag(&mut m, &vec![1.0; k_max]);
                m
            }
        }
        ErrorOperator::Ritz => {
            // eigen-coordinates of R^h e_k: ρ_k = λ_k Λ_h⁻¹ g_k
            let inv: Vec<f64> = lam_h.iter().map(|l| 1.0 / l).collect();
            let mut rho = scale_rows(&g, &inv);
            for k in 0..k_max {
                rho.column_mut(k).scale_mut(lam[k]);
            }
            if s1 {
                // λ_k δ − ρ_kᵀ Λ_h ρ_l
                let lr = scale_rows(&rho, lam_h.as_slice());
                let mut m = -rho.tr_mul(&lr);
                add_diag(&mut m, lam.as_slice());
                m
            } else {
                // δ − g_k·ρ_l − ρ_k·g_l + ρ_k·ρ_l
                let gr = g.tr_mul(&rho);
                let mut m = rho.tr_mul(&rho) - &gr - gr.transpose();
                add_diag(&mut m, &vec![1.0; k_max]);
                m
            }
        }
        ErrorOperator::Semigroup(t) => {
            let d: Vec<f64> = lam_h.iter().map(|l| (-l * t).exp()).collect();
            let dk: Vec<f64> = lam.iter().map(|l| (-l * t).exp()).collect();
            let dg = scale_rows(&g, &d);
            let gdg = g.tr_mul(&dg);
            let mut m = if s1 {
                let dl: Vec<f64> = d.iter().zip(lam_h.iter()).map(|(a, l)| a * l).collect();
                let mut m = dg.tr_mul(&scale_rows(&g, &dl));
                for l in 0..k_max {
                    for k in 0..k_max {
                        m[(k, l)] -= (dk[l] * lam[l] + dk[k] * lam[k]) * gdg[(k, l)];
                    }
                }
                m
            } else {
                let mut m = dg.tr_mul(&dg);
                for l in 0..k_max {
                    for k in 0..k_max {
                        m[(k, l)] -= (dk[l] + dk[k]) * gdg[(k, l)];
                    }
                }
                m
            };
            let diag: Vec<f64> = (0..k_max)
                .map(|k| if s1 { lam[k] } else { 1.0 } * dk[k] * dk[k])
                .collect();
            add_diag(&mut m, &diag);
            m
        }
    };
    apply_weights(&mut gram, lam.as_slice(), r);
    Ok(largest_eigenvalue(gram).max(0.0).sqrt())
}

/// Same norm computed from the images' expansions in the first `k_ext`
/// continuous modes. Converges to the exact value from below as `k_ext` grows.
pub fn operator_error_norm_truncated(
    space: &FemSpace,
    basis: &SpectralBasis,
    s: f64,
    r: f64,
    which: ErrorOperator,
    k_ext: usize,
) -> Result<f64> {
    validate(space, basis, s, r, which)?;
    let k_max = basis.k_max();
    if k_ext < k_max {
        return Err(Error::arg("expansion cut-off must be at least k_max"));
    }
    let ext = SpectralBasis::new(basis.length(), k_ext)?;
    let lam_ext = ext.eigenvalues();
    let g_ext = space.eigen_coupling(k_ext);
    let g = g_ext.columns(0, k_max).into_owned();
    let lam_h = space.eigenvalues();

    // image coefficients: rows m (continuous mode), columns k
    let mut c = match which {
        ErrorOperator::L2Projection => -(g_ext.tr_mul(&g)),
        ErrorOperator::Ritz => {
            let inv: Vec<f64> = lam_h.iter().map(|l| 1.0 / l).collect();
            let mut rho = scale_rows(&g, &inv);
            for k in 0..k_max {
                rho.column_mut(k).scale_mut(lam_ext[k]);
            }
            -(g_ext.tr_mul(&rho))
        }
        ErrorOperator::Semigroup(t) => {
            let d: Vec<f64> = lam_h.iter().map(|l| (-l * t).exp()).collect();
            g_ext.tr_mul(&scale_rows(&g, &d))
        }
    };
    for k in 0..k_max {
        c[(k, k)] += match which {
            ErrorOperator::Semigroup(t) => -(-lam_ext[k] * t).exp(),
            _ => 1.0,
        };
    }
    let weights: Vec<f64> = lam_ext.iter().map(|l| l.powf(0.5 * s)).collect();
    let wc = scale_rows(&c, &weights);
    let mut gram = wc.tr_mul(&wc);
    apply_weights(&mut gram, &lam_ext[..k_max], r);
    Ok(largest_eigenvalue(gram).max(0.0).sqrt())
}

fn scale_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row.scale_mut(w[i]);
    }
    out
}

fn add_diag(m: &mut DMatrix<f64>, d: &[f64]) {
    for (i, v) in d.iter().enumerate() {
        m[(i, i)] += v;
    }
}

fn apply_weights(gram: &mut DMatrix<f64>, lam: &[f64], r: f64) {
    let w: Vec<f64> = lam.iter().map(|l| l.powf(-0.5 * r)).collect();
    let n = gram.nrows();
    for l in 0..n {
        for k in 0..n {
            gram[(k, l)] *= w[k] * w[l];
        }
    }
}

/// Dense solves up to this size; power iteration beyond.
const DENSE_EIGEN_MAX: usize = 2048;

fn largest_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() <= DENSE_EIGEN_MAX {
        m.symmetric_eigenvalues().max()
    } else {
        power_iteration(&m)
    }
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
pub(crate) fn power_iteration(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    // Start from the dominant diagonal direction plus a dense component.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * ((i * 2654435761) % 1000) as f64);
    let imax = (0..n).max_by(|&a, &b| m[(a, a)].partial_cmp(&m[(b, b)]).unwrap()).unwrap_or(0);
    x[imax] += n as f64;
    x.normalize_mut();
    let mut rayleigh = 0.0;
    for _ in 0..50_000 {
        let y = m * &x;
        let next = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
        if (next - rayleigh).abs() <= 1e-14 * next.abs() {
            return next;
        }
        rayleigh = next;
    }
    rayleigh
}
