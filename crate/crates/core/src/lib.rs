//! Growing sandpiles in a convex container with an open boundary.

pub mod analysis;
pub mod config;
pub mod eikonal;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod projection;
pub mod quad;
pub mod radial;
pub mod source;
pub mod transport;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use geometry::{BoundaryData, DomainSpec, Point, Shape};
pub use grid::{build_grid, Grid};
