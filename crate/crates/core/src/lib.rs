//! Spectral laboratory for the two-species Euler-Poisson system on a periodic
//! interval and its two small-mass-ratio limits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod expansion;
pub mod gaslaw;
pub mod grid;
pub mod harness;
pub mod profiles;
pub mod scalar;
pub mod series;

pub use error::{Error, Result};
pub use gaslaw::{enthalpy_taylor_terms, GasLaw, MassLimit, Regime, ScalingParams, SpeciesLaws};
pub use grid::{Field, Grid};
pub use scalar::Real;
pub use series::Series;

pub type Field64 = Field<f64>;
pub type Grid64 = Grid<f64>;
pub type GasLaw64 = GasLaw<f64>;
