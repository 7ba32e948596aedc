use crate::atomphys::{frequency_position_slope, IonSpecies, TrapEnvironment};
use crate::constants::CODATA;
use crate::error::{invalid, Result};
use serde::Serialize;

/// Positions derived from frequency shifts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionStats {
    /// m
    pub z: Vec<f64>,
    /// m
    pub sigma_z: Vec<f64>,
    /// Arithmetic mean of `sigma_z` (m).
    pub mean_sigma_z: f64,
}

/// Convert `(delta_nu, sigma_nu)` pairs (rad/s) into positions and standard
/// errors through the gradient.
pub fn position_statistics<I>(
    shifts: I,
    env: &TrapEnvironment,
    species: &IonSpecies,
) -> Result<PositionStats>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    if env.gradient == 0.0 {
        return Err(invalid(
            "gradient",
            "position encoding needs a nonzero gradient",
        ));
    }
    let slope = frequency_position_slope(env, species)?;
    let (z, sigma_z): (Vec<f64>, Vec<f64>) = shifts
        .into_iter()
        .map(|(d, s)| (d / slope, (s / slope).abs()))
        .unzip();
    if z.is_empty() {
        return Err(invalid("shifts", "record is empty"));
    }
    let mean_sigma_z = sigma_z.iter().sum::<f64>() / sigma_z.len() as f64;
    Ok(PositionStats {
        z,
        sigma_z,
        mean_sigma_z,
    })
}

/// Static force resolution from a position resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceReport {
    /// N/m
    pub k_z: f64,
    /// m
    pub sigma_z: f64,
    /// N
    pub sigma_f: f64,
    /// N/sqrt(Hz)
    pub sensitivity: f64,
    /// s
    pub measurement_time: f64,
}

impl ForceReport {
    /// Report for an explicit spring constant.
    pub fn from_stiffness(k_z: f64, sigma_z: f64, measurement_time: f64) -> Result<Self> {
        if !(k_z > 0.0) {
            return Err(invalid("k_z", "must be positive"));
        }
        if !(sigma_z >= 0.0) {
            return Err(invalid("sigma_z", "must be non-negative"));
        }
        if !(measurement_time > 0.0) {
            return Err(invalid("measurement_time", "must be positive"));
        }
        let sigma_f = k_z * sigma_z;
        Ok(Self {
            k_z,
            sigma_z,
            sigma_f,
            sensitivity: sigma_f * measurement_time.sqrt(),
            measurement_time,
        })
    }
}

/// Force resolution k_z sigma_z and sensitivity sigma_F sqrt(T) for the trap's axial stiffness.
pub fn force_report(
    sigma_z: f64,
    env: &TrapEnvironment,
    species: &IonSpecies,
    measurement_time: f64,
) -> Result<ForceReport> {
    ForceReport::from_stiffness(env.stiffness(species), sigma_z, measurement_time)
}

/// Distance (m) at which one elementary charge exerts the force `sigma_f` (N)
/// on the singly charged ion.
pub fn charge_detection_distance(sigma_f: f64) -> Result<f64> {
    if !(sigma_f > 0.0) {
        return Err(invalid("sigma_f", "must be positive"));
    }
    Ok((CODATA.coulomb_coupling() / sigma_f).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::hz_to_angular;

    #[test]
    fn one_nanometre_per_266_hz() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let s = hz_to_angular(266.0);
        let stats = position_statistics(vec![(0.0, s), (s, s)], &env, &sp).unwrap();
        for sz in &stats.sigma_z {
            assert!((sz / 1e-9 - 1.0).abs() < 0.01);
        }
        assert!((stats.mean_sigma_z / 1e-9 - 1.0).abs() < 0.01);
        assert!(position_statistics(Vec::new(), &env, &sp).is_err());
    }

    #[test]
    fn report_consistency() {
        let r = ForceReport::from_stiffness(1.3e-13, 0.12e-9, 2.0).unwrap();
        assert_eq!(r.sigma_f, r.k_z * r.sigma_z);
        assert_eq!(r.sensitivity, r.sigma_f * 2f64.sqrt());
        let zero = ForceReport::from_stiffness(1.3e-13, 0.0, 2.0).unwrap();
        assert_eq!(zero.sigma_f, 0.0);
        assert!(ForceReport::from_stiffness(1.3e-13, 1e-9, 0.0).is_err());
    }

    #[test]
    fn coulomb_distance() {
        let f1 = CODATA.coulomb_coupling();
        assert!((charge_detection_distance(f1).unwrap() - 1.0).abs() < 1e-12);
        let r = charge_detection_distance(1.5e-23).unwrap();
        let r4 = charge_detection_distance(6.0e-23).unwrap();
        assert!((r4 / r - 0.5).abs() < 1e-12);
        assert!((r - 3.9e-3).abs() < 0.05e-3, "{r}");
        assert!(charge_detection_distance(0.0).is_err());
    }
}
