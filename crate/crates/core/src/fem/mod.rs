//! Piecewise-linear finite elements on quasi-uniform meshes of `[0, L]`.

mod mesh;
mod operator_norm;
mod projection;
mod space;
mod tridiag;

pub use mesh::{Mesh1D, MAX_JITTER, QUASI_UNIFORMITY};
pub use operator_norm::{operator_error_norm, operator_error_norm_truncated, ErrorOperator};
pub use projection::l2_distance;
pub use space::{generalized_eigen, FemField, FemSpace};
pub use tridiag::SymTridiag;

pub(crate) use space::sup_norm;
