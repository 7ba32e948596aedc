use super::{run_measurement, DriftModel, ExperimentTimeline, Measurement, SimState};
use crate::atomphys::{
    frequency_position_slope, frequency_shift_to_position, IonSpecies, TrapEnvironment,
};
use crate::error::{invalid, Error, Result};
use crate::estimator::TwoPointConfig;
use serde::{Deserialize, Serialize};

/// One tracking cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingSample {
    /// Mean shot time of the measurement (s).
    pub timestamp: f64,
    /// Reference frequency nu_0 used for the probes (rad/s).
    pub nu0_used: f64,
    pub delta_hat: f64,
    /// nu0_used + delta_hat (rad/s).
    pub nu_estimated: f64,
    pub sigma_nu: f64,
    /// Simulation truth averaged over the measurement (rad/s).
    pub true_nu: f64,
    pub in_window: bool,
    /// Electrode imbalance during the measurement (V).
    pub applied_voltage: f64,
}

/// Time-ordered output of a tracking run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingRecord {
    pub samples: Vec<TrackingSample>,
    /// Set when the run stopped after repeated out-of-window estimates.
    pub lost_lock: bool,
    pub seed: u64,
}

impl TrackingRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Root-mean-square of estimate minus truth (rad/s).
    pub fn rms_error(&self) -> f64 {
        let n = self.samples.len().max(1) as f64;
        (self
            .samples
            .iter()
            .map(|s| (s.nu_estimated - s.true_nu).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

fn sample_from(m: &Measurement, nu0: f64, voltage: f64) -> TrackingSample {
    TrackingSample {
        timestamp: m.timestamp,
        nu0_used: nu0,
        delta_hat: m.estimate.delta_hat,
        nu_estimated: nu0 + m.estimate.delta_hat,
        sigma_nu: m.estimate.sigma_delta,
        true_nu: m.mean_true_nu,
        in_window: m.estimate.in_window,
        applied_voltage: voltage,
    }
}

// Shared loop: `offset_for` gives (voltage, frequency offset) per cycle.
fn track<F>(
    n_cycles: usize,
    initial_nu0: f64,
    drift: &DriftModel,
    cfg: &TwoPointConfig,
    timeline: &ExperimentTimeline,
    seed: u64,
    offset_for: F,
) -> Result<TrackingRecord>
where
    F: Fn(usize) -> (f64, f64),
{
    timeline.validate()?;
    drift.validate()?;
    let mut state = SimState::new(initial_nu0, seed, drift);
    let mut nu0 = initial_nu0;
    let mut samples = Vec::with_capacity(n_cycles);
    let mut misses = 0;
    let mut lost_lock = false;
    for cycle in 0..n_cycles {
        let (voltage, offset) = offset_for(cycle);
        state.set_offset(offset);
        let m = run_measurement(nu0, &mut state, cfg, timeline, drift)?;
        let sample = sample_from(&m, nu0, voltage);
        nu0 = sample.nu_estimated;
        misses = if sample.in_window { 0 } else { misses + 1 };
        samples.push(sample);
        if misses >= timeline.loss_of_lock_cycles {
            lost_lock = true;
            break;
        }
    }
    Ok(TrackingRecord {
        samples,
        lost_lock,
        seed,
    })
}

/// Closed-loop tracking: each measurement is referenced to the previous estimate.
///
/// The true resonance starts at `initial_nu0`. Stops early, with
/// `lost_lock` set, after `timeline.loss_of_lock_cycles` consecutive
/// out-of-window estimates.
pub fn run_tracking(
    n_cycles: usize,
    initial_nu0: f64,
    drift: &DriftModel,
    cfg: &TwoPointConfig,
    timeline: &ExperimentTimeline,
    seed: u64,
) -> Result<TrackingRecord> {
    if n_cycles == 0 {
        return Err(invalid("n_cycles", "must be at least 1"));
    }
    track(n_cycles, initial_nu0, drift, cfg, timeline, seed, |_| {
        (0.0, 0.0)
    })
}

/// One entry of a voltage schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageStep {
    /// Electrode imbalance (V).
    pub voltage: f64,
    /// Follow this measurement with a zero-voltage anchor measurement.
    pub interleave_zero: bool,
}

/// Sequence of applied voltages, one per tracking cycle after expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSchedule {
    pub steps: Vec<VoltageStep>,
}

impl VoltageSchedule {
    /// Every voltage followed by a zero anchor, with a leading anchor.
    pub fn interleaved(voltages: &[f64]) -> Self {
        Self {
            steps: voltages
                .iter()
                .map(|&voltage| VoltageStep {
                    voltage,
                    interleave_zero: true,
                })
                .collect(),
        }
    }

    /// Voltage of each measurement cycle.
    ///
    /// A leading zero anchor is inserted when the first step interleaves.
    pub fn cycle_voltages(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.steps.len() + 1);
        if self
            .steps
            .first()
            .is_some_and(|s| s.interleave_zero && s.voltage != 0.0)
        {
            out.push(0.0);
        }
        for s in &self.steps {
            out.push(s.voltage);
            if s.interleave_zero {
                out.push(0.0);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(invalid("schedule", "must contain at least one step"));
        }
        if self.steps.iter().any(|s| !s.voltage.is_finite()) {
            return Err(invalid("schedule", "voltages must be finite"));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.interleave_zero && s.voltage == 0.0 {
                return Err(invalid(
                    "schedule",
                    format!("step {i}: interleaved steps need a nonzero voltage"),
                ));
            }
        }
        Ok(())
    }
}

/// Tracking through an applied-voltage schedule.
///
/// During a cycle with imbalance U the ion sits displaced by
/// e (voltage_to_field U) / (m omega_z^2), which shifts the true resonance
/// through the gradient.
#[allow(clippy::too_many_arguments)]
pub fn run_voltage_scan(
    schedule: &VoltageSchedule,
    env: &TrapEnvironment,
    species: &IonSpecies,
    drift: &DriftModel,
    cfg: &TwoPointConfig,
    timeline: &ExperimentTimeline,
    initial_nu0: f64,
    seed: u64,
) -> Result<TrackingRecord> {
    schedule.validate()?;
    let slope = frequency_position_slope(env, species)?;
    let voltages = schedule.cycle_voltages();
    track(
        voltages.len(),
        initial_nu0,
        drift,
        cfg,
        timeline,
        seed,
        |cycle| {
            let u = voltages[cycle];
            (u, slope * env.displacement_for_voltage(species, u))
        },
    )
}

/// Voltage-induced shift of one measurement after drift subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectedPoint {
    /// Index of the sample in the tracking record.
    pub index: usize,
    pub timestamp: f64,
    pub voltage: f64,
    /// Estimated frequency minus the interpolated zero-voltage baseline (rad/s).
    pub delta_nu: f64,
    /// Standard error of the measurement itself (rad/s).
    pub sigma_nu: f64,
    /// Standard error including the two anchors' interpolation error (rad/s).
    pub sigma_nu_total: f64,
    /// m
    pub dz: f64,
    pub sigma_z: f64,
    pub sigma_z_total: f64,
}

/// Remove drift from voltage-on measurements by linear interpolation between
/// the neighbouring zero-voltage measurements.
pub fn drift_correct(
    record: &TrackingRecord,
    env: &TrapEnvironment,
    species: &IonSpecies,
) -> Result<Vec<CorrectedPoint>> {
    let samples = &record.samples;
    let is_anchor = |s: &TrackingSample| s.applied_voltage == 0.0;
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if is_anchor(s) {
            continue;
        }
        let before = samples[..i].iter().rposition(is_anchor);
        let after = samples[i + 1..]
            .iter()
            .position(is_anchor)
            .map(|k| k + i + 1);
        let (Some(a), Some(b)) = (before, after) else {
            return Err(Error::Unbracketed {
                index: i,
                voltage: s.applied_voltage,
            });
        };
        let (sa, sb) = (&samples[a], &samples[b]);
        let w = (s.timestamp - sa.timestamp) / (sb.timestamp - sa.timestamp);
        let baseline = sa.nu_estimated + w * (sb.nu_estimated - sa.nu_estimated);
        let delta_nu = s.nu_estimated - baseline;
        let sigma_total =
            (s.sigma_nu.powi(2) + ((1.0 - w) * sa.sigma_nu).powi(2) + (w * sb.sigma_nu).powi(2))
                .sqrt();
        out.push(CorrectedPoint {
            index: i,
            timestamp: s.timestamp,
            voltage: s.applied_voltage,
            delta_nu,
            sigma_nu: s.sigma_nu,
            sigma_nu_total: sigma_total,
            dz: frequency_shift_to_position(delta_nu, env, species)?,
            sigma_z: frequency_shift_to_position(s.sigma_nu, env, species)?.abs(),
            sigma_z_total: frequency_shift_to_position(sigma_total, env, species)?.abs(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::MotionalModel;

    fn sample(t: f64, nu: f64, u: f64) -> TrackingSample {
        TrackingSample {
            timestamp: t,
            nu0_used: nu,
            delta_hat: 0.0,
            nu_estimated: nu,
            sigma_nu: 1.0,
            true_nu: nu,
            in_window: true,
            applied_voltage: u,
        }
    }

    fn record(samples: Vec<TrackingSample>) -> TrackingRecord {
        TrackingRecord {
            samples,
            lost_lock: false,
            seed: 0,
        }
    }

    #[test]
    fn schedule_expansion_alternates() {
        let s = VoltageSchedule::interleaved(&[0.001, 0.002, -0.001]);
        assert_eq!(
            s.cycle_voltages(),
            vec![0.0, 0.001, 0.0, 0.002, 0.0, -0.001, 0.0]
        );
        assert!(s.validate().is_ok());
        assert!(VoltageSchedule { steps: vec![] }.validate().is_err());
    }

    #[test]
    fn constant_anchors_subtract_constant() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let r = record(vec![
            sample(0.0, 100.0, 0.0),
            sample(1.0, 130.0, 0.01),
            sample(2.0, 100.0, 0.0),
            sample(3.0, 90.0, 0.02),
            sample(4.0, 100.0, 0.0),
        ]);
        let c = drift_correct(&r, &env, &sp).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].delta_nu, 30.0);
        assert_eq!(c[1].delta_nu, -10.0);
        assert_eq!(c[0].index, 1);
    }

    #[test]
    fn linear_drift_is_nulled() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let drift = |t: f64| 1000.0 + 51.5 * t;
        let r = record(vec![
            sample(0.0, drift(0.0), 0.0),
            sample(2.0, drift(2.0) + 77.0, 0.01),
            sample(4.0, drift(4.0), 0.0),
        ]);
        let c = drift_correct(&r, &env, &sp).unwrap();
        assert!((c[0].delta_nu - 77.0).abs() < 1e-9);
    }

    #[test]
    fn unbracketed_segment_is_named() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let r = record(vec![sample(0.0, 1.0, 0.0), sample(1.0, 1.0, 0.5)]);
        assert_eq!(
            drift_correct(&r, &env, &sp),
            Err(Error::Unbracketed {
                index: 1,
                voltage: 0.5
            })
        );
    }

    #[test]
    fn tracking_invariants_hold() {
        let cfg =
            TwoPointConfig::standard(2.0 * std::f64::consts::PI * 640.0, MotionalModel::ground())
                .unwrap();
        let drift = DriftModel::linear(2.0 * std::f64::consts::PI * 8.2);
        let rec = run_tracking(20, 1e6, &drift, &cfg, &ExperimentTimeline::default(), 5).unwrap();
        assert_eq!(rec.len(), 20);
        assert!(rec
            .samples
            .windows(2)
            .all(|w| w[1].timestamp > w[0].timestamp));
        for s in &rec.samples {
            assert_eq!(s.nu_estimated, s.nu0_used + s.delta_hat);
        }
        assert!(run_tracking(0, 1e6, &drift, &cfg, &ExperimentTimeline::default(), 5).is_err());
    }
}
