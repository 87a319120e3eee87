//! Two-species Nernst-Planck-Poisson-Stokes laboratory on a rectangle.

pub mod banded;
pub mod cli;
pub mod diagnostics;
pub mod eigen;
pub mod elliptic;
pub mod error;
pub mod fluid;
pub mod krylov;
pub mod mesh;
pub mod sim;
pub mod spectral;
pub mod steady;
pub mod tangent;
pub mod transport;

pub use error::{Error, Result};
