//! Fermi surfaces of the discrete Laplacian on `Z^3`: symbol geometry,
//! degenerate points, oscillatory decay of surface measures and resolvent
//! norm scans.

pub mod error;
pub mod fermi;
pub mod jet;
pub mod newton;
pub mod oscillatory;
pub mod quadrature;
pub mod resolvent;
pub mod taylor;
pub mod torus;

pub use error::{Error, Result};

/// Library version, embedded in emitted reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
