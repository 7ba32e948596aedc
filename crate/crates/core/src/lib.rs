//! Simulation and estimation toolkit for measuring the position of a single
//! trapped ion through its magnetic-field-sensitive hyperfine resonance.
//!
//! The crate is organised bottom-up:
//!
//! * [`atomphys`]: Breit-Rabi field/frequency map, position encoding through
//!   the field gradient, ion-string equilibria and gradient calibration.
//! * [`lineshape`]: Rabi lineshapes for Fock and thermal motional states.
//! * [`estimator`]: the two-point frequency estimator and its projection-noise
//!   uncertainty.
//! * [`simulator`]: shot-by-shot measurement and closed-loop tracking under
//!   drift and applied voltages.
//! * [`analysis`]: Allan deviation, lineshape fitting, position and force
//!   statistics.
//!
//! Frequencies are angular (rad/s) throughout.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atomphys;
pub mod constants;
pub mod error;
pub mod estimator;
pub mod lineshape;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use atomphys::{BreitRabiVariant, IonSpecies, TrapEnvironment};
pub use constants::{angular_to_hz, hz_to_angular, PhysicalConstants, CODATA};
pub use estimator::{EstimateResult, TwoPointConfig};
pub use simulator::{
    DriftModel, ExperimentTimeline, ShotOrdering, TrackingRecord, VoltageSchedule,
};

/// Double-precision pulse.
pub type Pulse = lineshape::PulseSpec<f64>;
/// Single-precision pulse.
pub type Pulse32 = lineshape::PulseSpec<f32>;
/// Double-precision motional model.
pub type Motion = lineshape::MotionalModel<f64>;
/// Single-precision motional model.
pub type Motion32 = lineshape::MotionalModel<f32>;
/// Double-precision thermal lineshape.
pub type Profile = lineshape::ThermalProfile<f64>;
/// Single-precision thermal lineshape.
pub type Profile32 = lineshape::ThermalProfile<f32>;
/// Double-precision frequency series.
pub type Series = analysis::FrequencySeries<f64>;
/// Single-precision frequency series.
pub type Series32 = analysis::FrequencySeries<f32>;
