//! Modal room transfer functions on a microphone grid, masked observation
//! datasets, a Helmholtz kernel ridge regression baseline and the NMSE metrics
//! used to compare sound field reconstructions.
//!
//! The heavy loops (grid points, frequencies, rooms) run through [`Exec`],
//! which dispatches to rayon when the `parallel` feature is enabled and falls
//! back to plain iterators otherwise.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod field;
pub mod kernel;
pub mod modal;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Exec;
pub use field::FieldGrid;
pub use modal::{Damping, Mode, RoomSpec, SimOptions};
