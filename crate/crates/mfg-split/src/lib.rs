//! Numerical solvers for mean field game master equations on the 1-D torus:
//! the coupled forward-backward MFG system, its linearizations, first-order
//! and linear second-order master equations, their composition by operator
//! splitting, the major-player system, and audits of the a-priori bounds the
//! construction relies on.

mod cache;
pub mod dual_norm;
pub mod error;
pub mod fp;
pub mod functional;
pub mod grid;
pub mod hamiltonian;
pub mod heat_kernel;
pub mod linearized;
pub mod master_first;
pub mod master_linear;
pub mod mesh;
pub mod mfg;
pub mod scenario;
pub mod parabolic;
pub mod spectral;
pub mod splitting;
pub mod transport;
pub mod trig;
pub(crate) mod tridiag;

pub use error::{MfgError, Result};
