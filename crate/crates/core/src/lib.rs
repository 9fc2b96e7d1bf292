//! Monte Carlo and deterministic tools for kernel energies and capacities of
//! random fractal sets: Brownian traces, Brownian zero sets and stable ranges.

// `!(x > 0.0)` is used throughout so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod dyadic;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod measure;
pub mod numeric;
pub mod path;
pub mod quadrature;

pub use dyadic::{CubeIndex, DyadicHistogram, PointIndex};
pub use error::{Error, Result};
pub use kernel::{parse_kernel_spec, Kernel};
pub use measure::WeightedMeasure;
pub use path::PathSample;
