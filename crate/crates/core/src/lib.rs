//! Design of laser intensity and detuning profiles for fluorescence detection
//! of slow atoms.
//!
//! The numerical modules are generic over the real scalar type ([`Real`],
//! implemented for `f32` and `f64`); the aliases at the crate root fix it to
//! `f64`, which is what the tolerances throughout the crate are written for.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
mod linalg;
pub mod objective;
pub mod oracle;
pub mod potential;
pub mod scalar;
pub mod scatter;
mod sqp;
pub mod twochannel;
pub mod units;
pub mod wavepacket;

pub use error::{Error, Result};
pub use objective::{KGrid, OptimizationProblem, OptimizationResult};
pub use scalar::{Cplx, Real};
pub use wavepacket::{DetectionRecord, WavepacketSpec};

pub type AtomSpecies = units::AtomSpecies<f64>;
pub type Segment = potential::Segment<f64>;
pub type LaserProfile = potential::LaserProfile<f64>;
pub type ComplexPotentialProfile = potential::ComplexPotentialProfile<f64>;
pub type ScatteringAmplitudes = scatter::ScatteringAmplitudes<f64>;
pub type GradientRecord = scatter::GradientRecord<f64>;
pub type TwoChannelAmplitudes = twochannel::TwoChannelAmplitudes<f64>;
