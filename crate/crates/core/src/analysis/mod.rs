//! Post-processing of simulated or measured frequency data.

mod allan;
mod fit;
mod force;

pub use allan::{
    allan_deviation, octave_taus, AllanResult, AllanVariant, FrequencySample, FrequencySeries,
};
pub use fit::{fit_spectrum, FitMethod, SpectrumFitResult, SpectrumParams, SpectrumPoint};
pub use force::{
    charge_detection_distance, force_report, position_statistics, ForceReport, PositionStats,
};
