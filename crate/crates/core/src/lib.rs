//! Tracking of tubular structures in 2D images as globally optimal
//! geodesics in the space of positions and orientations.

pub mod diffgeo;
pub mod eikonal;
pub mod error;
pub mod geodesic;
pub mod grid;
pub mod lifting;
pub mod metric;
pub mod pipeline;
pub mod stencil;
pub mod vesselness;

pub use error::{Error, Result};
