//! Compiles and runs every code snippet in the book as a doc-test, so
//! `cargo test -p rusle-book` fails the moment a chapter drifts from
//! the library API or from the numbers it claims.
//!
//! Each module below mirrors one chapter under `book/src/`. The crate
//! ships nothing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/rasters.md")]
pub mod rasters {}

#[doc = include_str!("../../../book/src/erosivity-exact.md")]
pub mod erosivity_exact {}

#[doc = include_str!("../../../book/src/climate-indicators.md")]
pub mod climate_indicators {}

#[doc = include_str!("../../../book/src/erosivity-ensemble.md")]
pub mod erosivity_ensemble {}

#[doc = include_str!("../../../book/src/factors.md")]
pub mod factors {}

#[doc = include_str!("../../../book/src/composing.md")]
pub mod composing {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/rendering.md")]
pub mod rendering {}
