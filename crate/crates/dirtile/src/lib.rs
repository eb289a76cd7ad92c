//! Discrete wave-packet model of the single-annulus Hilbert transform along
//! one-variable vector fields, with the tile/tree decomposition and a harness
//! that measures the implicit constants of its estimates.

pub mod config;
pub mod decompose;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod instance;
pub mod modelop;
pub mod pipeline;
pub mod plot;
pub mod verify;
pub mod wavepackets;

pub use error::{Error, Result};
