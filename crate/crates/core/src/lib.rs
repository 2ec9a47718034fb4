//! Numerical kit for heat-semigroup and Schrödinger-group evolution on the
//! Heisenberg group `H^d`.
//!
//! The evolution is driven by one-step Chernoff operators iterated `n` times,
//! and validated against three independent oracles:
//!
//! * dense per-slice spectral multipliers (`heat`, `schrodinger`),
//! * exact magnetic Mehler kernels for `d = 1` (`magnetic`),
//! * Monte-Carlo Feynman–Kac / random-walk simulation with Lévy area
//!   (`stochastic`).
//!
//! Coordinate layout is fixed as `(x¹..x^d, y¹..y^d, s)` everywhere.

pub mod error;
pub mod field;
pub mod heat;
pub mod hgroup;
pub mod magnetic;
pub mod quadrature;
pub mod schrodinger;
pub mod stochastic;

pub use error::CoreError;
pub use field::{Field, GaussianPacketSpec, GridSpec, Repr};
pub use hgroup::{GaugeValue, HPoint, HVelocity};

/// `Result` alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
