//! Matrix-free Hessian spectrum analysis for small neural networks.
//!
//! The crate trains classifiers with RMSProp, extracts extreme Hessian
//! eigenpairs with Lanczos over exact Hessian-vector products, and measures
//! how the loss behaves along those directions.

pub mod analysis;
pub mod data;
pub mod eigen;
pub mod error;
pub mod io;
pub mod model;
pub mod ndcore;
pub mod negcurve;
pub mod par;
pub mod svg;
pub mod train;

pub use error::{Error, Result};
