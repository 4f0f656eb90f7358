//! Magnetic geodesic flows on compact planar charts, non-Abelian attenuated
//! ray transforms along them and along their null lifts, and numerical checks
//! of the associated transport identities.

pub mod error;
pub mod beams;
pub mod conformal;
pub mod connection;
pub mod flow;
pub mod interp;
pub mod inversion;
pub mod linalg;
pub mod manifold;
pub mod ode;
pub mod par;
pub mod quadrature;
pub mod rayf;
pub mod scene;
pub mod selftest;
pub mod transform;

pub use error::{Error, Result};
pub use par::Exec;
