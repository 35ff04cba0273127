pub mod error;
pub mod inner_products;
pub mod kernels;
pub mod polynomials;
pub mod scalar_core;
pub mod skew_systems;
pub mod weights;

pub use error::{Error, Result};
pub use inner_products::{Measure, MeasureKind, Window};
pub use polynomials::{Lattice, LatticeOp, Poly};
pub use scalar_core::{Scalar, TolerancePolicy};
pub use skew_systems::{OPSystem, SkewMatrix, SkewOPSystem};
pub use weights::{Branch, Family, Site, WeightFamily};
