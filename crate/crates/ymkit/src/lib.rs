//! Numerical toolkit for Yang-Mills fields on fixed curved backgrounds.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: metrics, connections, curvature, orthonormal frames.
//! * [`liegauge`]: Lie algebras, gauge potentials, curvature and residuals.
//! * [`sphere`]: Gauss-Legendre direction grids and spectral calculus on S².
//! * [`nullcone`]: past null cones as ray fans with optical scalars.
//! * [`parametrix`]: transport of the parametrix weight and the representation formula.
//! * [`energy`]: stress tensor, slice energies, cone fluxes.
//! * [`evolution`]: temporal-gauge Yang-Mills evolution on periodic grids.
//! * [`bounds`]: Grönwall and Pachpatte envelopes.
//! * [`runner`]: JSON scenarios and reports.
//!
//! Units are geometric (c = 1), signature (−,+,+,+), coordinate 0 is time.

pub mod bounds;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod fields;
pub mod geometry;
pub mod liegauge;
pub mod nullcone;
pub mod parametrix;
pub mod runner;
pub mod sphere;

pub use error::{Error, Result};
pub use exec::Exec;
