//! Bessel Poisson operator `P_t^{[λ]}` on finite measure pairs: kernel
//! evaluation, the two-weight norm and its testing constants, and numerical
//! checks of the dyadic machinery behind the norm/testing equivalence.

pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod operators;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{CarlesonBox, DiscreteMeasure1D, DiscreteMeasure2D, Interval};
pub use kernel::{eval_kernel, BesselParam, KernelQuery};
pub use operators::{PreparedInstance, TestingResult, TwoWeightInstance};
