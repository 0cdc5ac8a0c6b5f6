//! Income-mixing measurement from travel surveys.
//!
//! The crate covers the tabular side of the pipeline: survey ingest and
//! income grouping ([`survey`]), hexagonal binning ([`grid`]) and census
//! zones ([`zones`]), exposure-based mixing indices ([`mixing`]), transit
//! accessibility and hubs ([`transit`]), POI place exposure ([`places`]),
//! grouped regression with LMG importance ([`regress`]) and the synthetic
//! city generator with brute-force oracles ([`synth`]).

pub mod fmt;
pub mod geo;
pub mod grid;
pub mod mixing;
pub mod places;
pub mod regress;
pub mod transit;
pub mod survey;
pub mod synth;
pub mod zones;

pub use geo::GeoPoint;
pub use grid::{CellId, HexGrid};
