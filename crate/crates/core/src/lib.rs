//! Construction and certification of drawstring warped-product metrics.
//!
//! The two constructions live in [`cutoff`] and [`gluing`]; both produce a
//! [`RadialProfile`] that [`certifier::certify`] checks against the seven
//! drawstring conditions. [`sequence`] assembles the torus and sphere-circle
//! sequences and [`flat_torus`] holds the lattice Green's function estimates.

pub mod certifier;
pub mod cutoff;
pub mod drawstring;
pub mod error;
pub mod ext;
pub mod gluing;
pub mod quadrature;
pub mod radial_metric;
pub mod sequence;
pub mod flat_torus;
pub mod smoothing;
pub mod space_forms;

pub use drawstring::{build, DrawstringSpec, Method, SolvedParams};
pub use error::{Error, Result};
pub use ext::{Ext, Radius, Scale};
pub use radial_metric::{Chart, FlatReference, Jet, RadialProfile, Segment};
