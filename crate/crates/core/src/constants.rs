//! CODATA 2018 physical constants.

use serde::{Deserialize, Serialize};

/// Fundamental constants used by the atomic and trap models, SI units.
///
/// Values are exact (SI 2019 definitions) or CODATA 2018 recommended values.
/// Construct with [`PhysicalConstants::codata2018`]; the struct is `Copy` and
/// never mutated by library code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// J/T
    pub bohr_magneton: f64,
    /// J/T
    pub nuclear_magneton: f64,
    /// J s
    pub planck_h: f64,
    /// F/m
    pub vacuum_permittivity: f64,
    /// C
    pub elementary_charge: f64,
    /// kg
    pub atomic_mass_unit: f64,
    /// m/s
    pub speed_of_light: f64,
}

impl PhysicalConstants {
    pub const fn codata2018() -> Self {
        Self {
            bohr_magneton: 9.274_010_078_3e-24,
            nuclear_magneton: 5.050_783_746_1e-27,
            planck_h: 6.626_070_15e-34,
            vacuum_permittivity: 8.854_187_812_8e-12,
            elementary_charge: 1.602_176_634e-19,
            atomic_mass_unit: 1.660_539_066_60e-27,
            speed_of_light: 299_792_458.0,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.planck_h / (2.0 * std::f64::consts::PI)
    }

    /// e^2 / (4 pi eps0), the Coulomb coupling between two elementary charges in J m.
    pub fn coulomb_coupling(&self) -> f64 {
        self.elementary_charge * self.elementary_charge
            / (4.0 * std::f64::consts::PI * self.vacuum_permittivity)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

/// Shared instance used by the free functions of this crate.
pub const CODATA: PhysicalConstants = PhysicalConstants::codata2018();

/// Convert an ordinary frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * hz
}

/// Convert an angular frequency in rad/s to Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * std::f64::consts::PI)
}
