//! Atomic and trap physics for a single hyperfine "clock-like" transition
//! probed in a static magnetic field gradient.
//!
//! All frequencies are angular (rad/s). Fields are in tesla, positions in
//! metres.

mod breit_rabi;
mod crystal;

pub use breit_rabi::{
    field_from_frequency, frequency_position_slope, frequency_shift_to_position,
    transition_frequency, transition_slope,
};
pub use crystal::{calibrate_gradient, equilibrium_positions, length_scale, GradientCalibration};

use crate::constants::{hz_to_angular, CODATA};
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Which radical the Breit-Rabi stretched-state term uses.
///
/// The |F=1, m_F=+1> energy of a J=1/2, I=1/2 ion is
/// `A/2 * sqrt(1 + 2 X B + X^2 B^2) = A/2 (1 + X B)`, i.e. a linear Zeeman
/// shift of roughly one Bohr magneton per tesla. The form with a single `X B`
/// term halves the linear shift; it is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreitRabiVariant {
    /// `sqrt(1 + 2XB + X^2 B^2)`.
    #[default]
    Stretched,
    /// `sqrt(1 + XB + X^2 B^2)`.
    SingleLinear,
}

impl BreitRabiVariant {
    pub(crate) fn linear_coefficient(self) -> f64 {
        match self {
            BreitRabiVariant::Stretched => 2.0,
            BreitRabiVariant::SingleLinear => 1.0,
        }
    }
}

/// Atomic constants of the probed ion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    /// Hyperfine constant A as an angular frequency (rad/s).
    pub hyperfine_constant: f64,
    pub g_electron: f64,
    pub g_nucleus: f64,
    /// kg
    pub mass: f64,
    pub label: String,
    pub breit_rabi: BreitRabiVariant,
}

impl IonSpecies {
    pub fn new(
        hyperfine_constant: f64,
        g_electron: f64,
        g_nucleus: f64,
        mass: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let species = Self {
            hyperfine_constant,
            g_electron,
            g_nucleus,
            mass,
            label: label.into(),
            breit_rabi: BreitRabiVariant::default(),
        };
        species.validate()?;
        Ok(species)
    }

    /// 171Yb+ ground-state hyperfine qubit.
    pub fn ytterbium_171() -> Self {
        Self {
            hyperfine_constant: hz_to_angular(12_642_812_118.471),
            g_electron: 2.0025,
            g_nucleus: 0.9837,
            mass: 170.936_325_8 * CODATA.atomic_mass_unit,
            label: "171Yb+".to_string(),
            breit_rabi: BreitRabiVariant::Stretched,
        }
    }

    pub fn with_variant(mut self, variant: BreitRabiVariant) -> Self {
        self.breit_rabi = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hyperfine_constant > 0.0 && self.hyperfine_constant.is_finite()) {
            return Err(invalid("hyperfine_constant", "must be positive"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("mass", "must be positive"));
        }
        if !self.g_electron.is_finite() || !self.g_nucleus.is_finite() {
            return Err(invalid("g_factor", "must be finite"));
        }
        Ok(())
    }
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::ytterbium_171()
    }
}

/// Classical setting of the ion: harmonic confinement and static fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapEnvironment {
    /// Axial secular frequency (rad/s).
    pub omega_z: f64,
    /// Radial secular frequency (rad/s). Stored only.
    pub omega_r: f64,
    /// Offset field magnitude at the trap centre (T).
    pub offset_field: f64,
    /// Axial field gradient dB/dz (T/m).
    pub gradient: f64,
    /// Axial electric field per volt of electrode imbalance (V/m per V).
    pub voltage_to_field: f64,
}

impl TrapEnvironment {
    pub fn new(
        omega_z: f64,
        omega_r: f64,
        offset_field: f64,
        gradient: f64,
        voltage_to_field: f64,
    ) -> Result<Self> {
        let env = Self {
            omega_z,
            omega_r,
            offset_field,
            gradient,
            voltage_to_field,
        };
        env.validate()?;
        Ok(env)
    }

    /// Trap and field parameters of the reference single-ion setup.
    ///
    /// The voltage-to-field coefficient depends on electrode geometry that
    /// is not part of the published parameter set; 0.05 V/m per V is a
    /// placeholder that gives nanometre displacements for 10 mV imbalances.
    pub fn reference() -> Self {
        Self {
            omega_z: hz_to_angular(108_104.0),
            omega_r: hz_to_angular(534_400.0),
            offset_field: 442.09e-6,
            gradient: 19.07,
            voltage_to_field: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_z > 0.0 && self.omega_z.is_finite()) {
            return Err(invalid("omega_z", "must be positive"));
        }
        if !(self.omega_r > 0.0 && self.omega_r.is_finite()) {
            return Err(invalid("omega_r", "must be positive"));
        }
        if !(self.offset_field >= 0.0 && self.offset_field.is_finite()) {
            return Err(invalid("offset_field", "must be non-negative"));
        }
        if !self.gradient.is_finite() || !self.voltage_to_field.is_finite() {
            return Err(invalid("gradient", "must be finite"));
        }
        Ok(())
    }

    /// Axial spring constant k_z = m omega_z^2 (N/m).
    pub fn stiffness(&self, species: &IonSpecies) -> f64 {
        species.mass * self.omega_z * self.omega_z
    }

    /// Equilibrium displacement produced by an electrode voltage imbalance (m).
    pub fn displacement_for_voltage(&self, species: &IonSpecies, voltage: f64) -> f64 {
        CODATA.elementary_charge * self.voltage_to_field * voltage / self.stiffness(species)
    }
}

impl Default for TrapEnvironment {
    fn default() -> Self {
        Self::reference()
    }
}
