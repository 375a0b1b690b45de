//! odeforge: reconstruct ordinary differential equations from a single
//! scalar time series.
//!
//! The pipeline: embed the scalar in delay coordinates, estimate time
//! derivatives with a high-order finite-difference stencil, expand the
//! states in a Gaussian radial-basis-function (or polynomial) feature
//! dictionary, and fit one ridge regression per component. The result is a
//! closed-form vector field that can be integrated, differentiated and
//! interrogated like any hand-written ODE model.

pub mod basis;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod regress;
pub mod timeseries;

pub use error::{Error, ErrorCategory, Result};
