//! Killed time-periodic diffusions in bounded domains: single-path
//! simulation with hard and soft killing, Fleming–Viot particle
//! approximations of the conditioned law, histogram-based distances and
//! coupled pairs.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix `f64`.

// `!(a > b)` is used on purpose: it also rejects NaN. Index loops mirror
// the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coupling_lab;
pub mod error;
pub mod fleming_viot;
pub mod geometry;
pub mod killed_path;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Domain = geometry::Domain<f64>;
pub type Shape = geometry::Shape<f64>;
pub type Model = model::TimePeriodicModel<f64>;
pub type Registry = model::ModelRegistry<f64>;
pub type SimParams = killed_path::SimParams<f64>;
pub type InitialLaw = killed_path::InitialLaw<f64>;
pub type ParticleSystem = fleming_viot::ParticleSystem<f64>;
pub type EmpiricalMeasure = measures::EmpiricalMeasure<f64>;
pub type Binning = measures::Binning<f64>;
pub type Histogram = measures::Histogram<f64>;
pub type CouplingParams = coupling_lab::CouplingParams<f64>;
