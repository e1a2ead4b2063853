//! Raster toolkit for RUSLE-based soil erosion mapping.
//!
//! The crate estimates long-term soil loss on a grid as the product of the
//! classic RUSLE factors extended with a stoniness correction:
//!
//! ```text
//! Er = R * K * L * S * C * St * P
//! ```
//!
//! Two independent paths produce the rainfall erosivity factor `R`:
//!
//! * exact storm-level EI30 computation from high-frequency rain gauge
//!   records ([`ei30`]), and
//! * an ensemble of regional empirical erosivity equations driven by
//!   climatic indicator grids, merged by climate similarity ([`ensemble`]).
//!
//! Modules:
//!
//! * [`raster`]: grid model, alignment, cellwise combinators
//! * [`ei30`]: storm splitting, kinetic energy, I30, exact R
//! * [`climate`]: daily precipitation stacks and the indicator registry
//! * [`equations`]: empirical erosivity equation forms and validity guards
//! * [`ensemble`]: relative-distance similarity, weighted median, merging
//! * [`factors`]: K, L, S, C, St, P factor rasters
//! * [`erosion`]: factor composition, classification, run metadata
//! * [`io`]: ASCII grids, gauge CSV, configuration, PNG rendering
//! * [`error`]: shared error type with CLI-facing categories
pub mod climate;
pub mod ei30;
pub mod ensemble;
pub mod equations;
pub mod erosion;
pub mod error;
pub mod factors;
pub mod io;
pub mod raster;

pub use error::{Error, ErrorCategory, Result};
