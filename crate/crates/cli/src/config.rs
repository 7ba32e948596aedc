//! Declarative run configuration.
//!
//! Frequencies in the file are ordinary frequencies in Hz; they are converted
//! to angular frequencies when the library types are built.

use std::path::Path;

use iontrack::lineshape::{compute_eta, MotionalModel, PulseSpec, FWHM_CALIBRATED_ETA};
use iontrack::simulator::VoltageStep;
use iontrack::{
    hz_to_angular, BreitRabiVariant, DriftModel, ExperimentTimeline, IonSpecies, ShotOrdering,
    TrapEnvironment, TwoPointConfig, VoltageSchedule, CODATA,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub species: SpeciesConfig,
    pub trap: TrapConfig,
    pub pulse: PulseConfig,
    pub motion: MotionConfig,
    pub two_point: TwoPointSection,
    pub timeline: TimelineConfig,
    pub drift: DriftConfig,
    pub tracking: TrackingConfig,
    pub voltage: VoltageConfig,
    pub lineshape: LineshapeConfig,
    pub spectrum: SpectrumConfig,
    pub sensitivity: SensitivityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeciesConfig {
    pub label: String,
    pub hyperfine_constant_hz: f64,
    pub g_electron: f64,
    pub g_nucleus: f64,
    pub mass_u: f64,
    pub breit_rabi: BreitRabiVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    pub omega_z_hz: f64,
    pub omega_r_hz: f64,
    pub offset_field_t: f64,
    pub gradient_t_per_m: f64,
    pub voltage_to_field_v_per_m_per_v: f64,
}

/// Rabi frequency of the tracking measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub rabi_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub nbar: f64,
    /// Ignored when `eta_from_trap` is set.
    pub eta: f64,
    /// Derive eta from the trap and gradient instead.
    pub eta_from_trap: bool,
    pub cutoff_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointSection {
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelineConfig {
    pub rep_period_s: f64,
    pub shots_per_side: u32,
    pub detection_error_bright: f64,
    pub detection_error_dark: f64,
    pub ordering: ShotOrdering,
    pub loss_of_lock_cycles: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub linear_rate_hz_per_s: f64,
    pub random_walk_hz_per_sqrt_s: f64,
    pub line_amplitude_hz: f64,
    pub line_phase_rad: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub cycles: usize,
    /// True resonance at t = 0; defaults to the transition at the offset field.
    pub initial_frequency_hz: Option<f64>,
}

/// Applied-voltage schedule; an empty list runs plain tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoltageConfig {
    pub schedule_v: Vec<f64>,
    pub interleave_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineshapeConfig {
    pub detuning_min_rabi: f64,
    pub detuning_max_rabi: f64,
    pub points: usize,
    pub nbar_values: Vec<f64>,
}

/// Synthetic resonance scan and the fit of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub rabi_hz: f64,
    pub step_hz: f64,
    pub points: usize,
    pub shots: u32,
    /// Line centre relative to the scan midpoint.
    pub center_offset_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub total_times_s: Vec<f64>,
    /// True offsets as fractions of the capture half-width (1 - kappa) Omega.
    pub window_fractions: Vec<f64>,
    pub seeds: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            species: SpeciesConfig::default(),
            trap: TrapConfig::default(),
            pulse: PulseConfig::default(),
            motion: MotionConfig::default(),
            two_point: TwoPointSection::default(),
            timeline: TimelineConfig::default(),
            drift: DriftConfig::default(),
            tracking: TrackingConfig::default(),
            voltage: VoltageConfig::default(),
            lineshape: LineshapeConfig::default(),
            spectrum: SpectrumConfig::default(),
            sensitivity: SensitivityConfig::default(),
        }
    }
}

impl Default for SpeciesConfig {
    fn default() -> Self {
        let sp = IonSpecies::default();
        Self {
            label: sp.label,
            hyperfine_constant_hz: 12_642_812_118.471,
            g_electron: sp.g_electron,
            g_nucleus: sp.g_nucleus,
            mass_u: 170.936_325_8,
            breit_rabi: sp.breit_rabi,
        }
    }
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            omega_z_hz: 108.104e3,
            omega_r_hz: 534.4e3,
            offset_field_t: 442.09e-6,
            gradient_t_per_m: 19.07,
            voltage_to_field_v_per_m_per_v: 0.05,
        }
    }
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { rabi_hz: 640.0 }
    }
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            nbar: 80.0,
            eta: FWHM_CALIBRATED_ETA,
            eta_from_trap: false,
            cutoff_factor: 10.0,
        }
    }
}

impl Default for TwoPointSection {
    fn default() -> Self {
        Self { kappa: 0.8 }
    }
}

impl Default for TimelineConfig {
    fn default() -> Self {
        let t = ExperimentTimeline::default();
        Self {
            rep_period_s: t.rep_period,
            shots_per_side: t.shots_per_side,
            detection_error_bright: t.detection_error_bright,
            detection_error_dark: t.detection_error_dark,
            ordering: t.ordering,
            loss_of_lock_cycles: t.loss_of_lock_cycles,
        }
    }
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            linear_rate_hz_per_s: 8.2,
            random_walk_hz_per_sqrt_s: 0.0,
            line_amplitude_hz: 0.0,
            line_phase_rad: 0.0,
            seed: 0,
        }
    }
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            cycles: 216,
            initial_frequency_hz: None,
        }
    }
}

impl Default for VoltageConfig {
    fn default() -> Self {
        Self {
            schedule_v: Vec::new(),
            interleave_zero: true,
        }
    }
}

impl Default for LineshapeConfig {
    fn default() -> Self {
        Self {
            detuning_min_rabi: -5.0,
            detuning_max_rabi: 5.0,
            points: 1001,
            nbar_values: vec![0.0, 100.0],
        }
    }
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            rabi_hz: 25e3,
            step_hz: 1.5e3,
            points: 80,
            shots: 100,
            center_offset_hz: 0.0,
        }
    }
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            total_times_s: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            window_fractions: vec![0.0, 0.3, 0.7],
            seeds: 10_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fill derived values and check every embedded invariant.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.motion.eta_from_trap {
            self.motion.eta = compute_eta(&self.trap_environment()?, &self.ion_species()?)?;
        }
        self.motion_model()?;
        self.two_point_config()?;
        self.experiment_timeline()?;
        self.drift_model()?;
        if !self.voltage.schedule_v.is_empty() {
            self.voltage_schedule().validate()?;
        }
        if self.tracking.cycles == 0 {
            return Err(CliError::Config(
                "tracking.cycles must be at least 1".into(),
            ));
        }
        Ok(self)
    }

    pub fn ion_species(&self) -> Result<IonSpecies, CliError> {
        let s = &self.species;
        let sp = IonSpecies::new(
            hz_to_angular(s.hyperfine_constant_hz),
            s.g_electron,
            s.g_nucleus,
            s.mass_u * CODATA.atomic_mass_unit,
            s.label.clone(),
        )?;
        Ok(sp.with_variant(s.breit_rabi))
    }

    pub fn trap_environment(&self) -> Result<TrapEnvironment, CliError> {
        let t = &self.trap;
        Ok(TrapEnvironment::new(
            hz_to_angular(t.omega_z_hz),
            hz_to_angular(t.omega_r_hz),
            t.offset_field_t,
            t.gradient_t_per_m,
            t.voltage_to_field_v_per_m_per_v,
        )?)
    }

    pub fn motion_model(&self) -> Result<MotionalModel, CliError> {
        self.motion_with_nbar(self.motion.nbar)
    }

    pub fn motion_with_nbar(&self, nbar: f64) -> Result<MotionalModel, CliError> {
        let mut m = MotionalModel::new(nbar, self.motion.eta)?;
        m.cutoff_factor = self.motion.cutoff_factor;
        m.validate()?;
        Ok(m)
    }

    pub fn two_point_config(&self) -> Result<TwoPointConfig, CliError> {
        self.two_point_with(
            hz_to_angular(self.pulse.rabi_hz),
            self.timeline.shots_per_side,
        )
    }

    pub fn two_point_with(
        &self,
        rabi: f64,
        shots_per_side: u32,
    ) -> Result<TwoPointConfig, CliError> {
        Ok(TwoPointConfig::new(
            self.two_point.kappa,
            shots_per_side,
            PulseSpec::pi_pulse(rabi, 0.0)?,
            self.motion_model()?,
        )?)
    }

    pub fn experiment_timeline(&self) -> Result<ExperimentTimeline, CliError> {
        let t = &self.timeline;
        let tl = ExperimentTimeline {
            rep_period: t.rep_period_s,
            shots_per_side: t.shots_per_side,
            detection_error_bright: t.detection_error_bright,
            detection_error_dark: t.detection_error_dark,
            ordering: t.ordering,
            loss_of_lock_cycles: t.loss_of_lock_cycles,
        };
        tl.validate()?;
        Ok(tl)
    }

    pub fn drift_model(&self) -> Result<DriftModel, CliError> {
        let d = &self.drift;
        let dm = DriftModel {
            linear_rate: hz_to_angular(d.linear_rate_hz_per_s),
            random_walk: hz_to_angular(d.random_walk_hz_per_sqrt_s),
            line_amplitude: hz_to_angular(d.line_amplitude_hz),
            line_phase: d.line_phase_rad,
            seed: d.seed,
        };
        dm.validate()?;
        Ok(dm)
    }

    pub fn voltage_schedule(&self) -> VoltageSchedule {
        VoltageSchedule {
            steps: self
                .voltage
                .schedule_v
                .iter()
                .map(|&voltage| VoltageStep {
                    voltage,
                    interleave_zero: self.voltage.interleave_zero,
                })
                .collect(),
        }
    }

    /// Initial true resonance (rad/s).
    pub fn initial_frequency(&self) -> Result<f64, CliError> {
        match self.tracking.initial_frequency_hz {
            Some(hz) => Ok(hz_to_angular(hz)),
            None => Ok(iontrack::atomphys::transition_frequency(
                &self.ion_species()?,
                self.trap.offset_field_t,
            )?),
        }
    }
}
