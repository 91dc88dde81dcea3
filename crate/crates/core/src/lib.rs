pub mod chains;
pub mod covering;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod extension;
pub mod fields;
pub mod geometry;
pub mod norms;
pub mod polynomials;
pub mod quadrature;

pub use error::{Error, Result};
