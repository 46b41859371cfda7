//! Self-contained numerical kernels shared by the rest of the crate.

mod eigen;
mod linalg;
mod matrix;
mod quad;
mod special;

pub use eigen::{psd_sqrt, sym_eigen, SymEigen};
pub use linalg::{Cholesky, HouseholderQr};
pub use matrix::{dot, norm2, Matrix, SymMatrix};
pub use quad::{quad, quad_interval};
pub use special::{inc_beta, ln_beta, ln_gamma, t_sf, t_two_sided, TParams};
