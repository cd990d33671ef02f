//! Numerical solver cores shared by the geometry and optimization modules.

pub mod lcp;
pub mod nnls;
pub mod qp;
pub mod simplex;

pub use lcp::solve_lcp;
pub use nnls::solve_nnls;
pub use qp::QuadraticProgram;
pub use simplex::{LinearProgram, LpOptions, LpSolution, RowKind};
