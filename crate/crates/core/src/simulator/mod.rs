//! Shot-by-shot simulation of the two-point measurement and of closed-loop
//! frequency tracking.
//!
//! A run is a sequential state machine over simulated time. Every shot
//! occupies one repetition period; drift is applied as a piecewise-constant
//! frequency over each period.

mod tracking;

pub use tracking::{
    drift_correct, run_tracking, run_voltage_scan, CorrectedPoint, TrackingRecord, TrackingSample,
    VoltageSchedule, VoltageStep,
};

use crate::analysis::SpectrumPoint;
use crate::error::{invalid, Result};
use crate::estimator::{estimate_from_counts, EstimateResult, TwoPointConfig};
use crate::lineshape::{thermal_excitation, MotionalModel, PulseSpec, ThermalProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Mains frequency the measurement cycle is phase-locked to (Hz).
pub const LINE_FREQUENCY_HZ: f64 = 50.0;

/// Slow variation of the true resonance frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// rad/s per s
    pub linear_rate: f64,
    /// Random-walk strength in rad/s per sqrt(s).
    pub random_walk: f64,
    /// Amplitude of the residual 50 Hz modulation (rad/s).
    pub line_amplitude: f64,
    /// Phase of the 50 Hz modulation at t = 0 (rad).
    pub line_phase: f64,
    /// Seed of the random-walk stream.
    pub seed: u64,
}

impl DriftModel {
    pub fn none() -> Self {
        Self {
            linear_rate: 0.0,
            random_walk: 0.0,
            line_amplitude: 0.0,
            line_phase: 0.0,
            seed: 0,
        }
    }

    pub fn linear(rate: f64) -> Self {
        Self {
            linear_rate: rate,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.random_walk >= 0.0 && self.line_amplitude >= 0.0) {
            return Err(invalid("drift", "strengths must be non-negative"));
        }
        if !self.linear_rate.is_finite() || !self.line_phase.is_finite() {
            return Err(invalid("drift", "must be finite"));
        }
        Ok(())
    }
}

impl Default for DriftModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Order of the probe sides within one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotOrdering {
    /// + - + - ...
    #[default]
    Interleaved,
    /// All + shots, then all - shots.
    Blocked,
}

/// Timing and readout of the repeated projective measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTimeline {
    /// Time per shot including cooling and idle time (s).
    pub rep_period: f64,
    pub shots_per_side: u32,
    /// Probability that an excited (bright) ion is recorded dark.
    pub detection_error_bright: f64,
    /// Probability that a dark ion is recorded bright.
    pub detection_error_dark: f64,
    pub ordering: ShotOrdering,
    /// Consecutive out-of-window cycles after which tracking stops.
    pub loss_of_lock_cycles: u32,
}

impl ExperimentTimeline {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_period > 0.0 && self.rep_period.is_finite()) {
            return Err(invalid("rep_period", "must be positive"));
        }
        if self.shots_per_side == 0 {
            return Err(invalid("shots_per_side", "must be at least 1"));
        }
        for p in [self.detection_error_bright, self.detection_error_dark] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("detection_error", "must be a probability"));
            }
        }
        if self.loss_of_lock_cycles == 0 {
            return Err(invalid("loss_of_lock_cycles", "must be at least 1"));
        }
        Ok(())
    }

    /// Duration of one two-point frequency measurement (s).
    pub fn measurement_duration(&self) -> f64 {
        2.0 * f64::from(self.shots_per_side) * self.rep_period
    }

    /// Probability of recording "bright" given excitation probability `p`.
    pub fn bright_probability(&self, p: f64) -> f64 {
        p * (1.0 - self.detection_error_bright) + (1.0 - p) * self.detection_error_dark
    }
}

impl Default for ExperimentTimeline {
    /// 50 Hz line-synchronized shots, 50 per side, ideal readout.
    fn default() -> Self {
        Self {
            rep_period: 1.0 / LINE_FREQUENCY_HZ,
            shots_per_side: 50,
            detection_error_bright: 0.0,
            detection_error_dark: 0.0,
            ordering: ShotOrdering::Interleaved,
            loss_of_lock_cycles: 3,
        }
    }
}

/// Evolving simulation state: clock, true resonance and random streams.
#[derive(Debug, Clone)]
pub struct SimState {
    time: f64,
    base_nu: f64,
    walk: f64,
    offset: f64,
    shot_rng: ChaCha8Rng,
    drift_rng: ChaCha8Rng,
}

impl SimState {
    /// Start at t = 0 with true resonance `true_nu`. `seed` drives the shot
    /// outcomes; the random walk uses `drift.seed`.
    pub fn new(true_nu: f64, seed: u64, drift: &DriftModel) -> Self {
        Self {
            time: 0.0,
            base_nu: true_nu,
            walk: 0.0,
            offset: 0.0,
            shot_rng: ChaCha8Rng::seed_from_u64(seed),
            drift_rng: ChaCha8Rng::seed_from_u64(drift.seed),
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Additional deterministic frequency offset (rad/s), e.g. from an applied voltage.
    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    /// True resonance at the current time.
    pub fn true_nu(&self, drift: &DriftModel) -> f64 {
        let line = drift.line_amplitude
            * (2.0 * std::f64::consts::PI * LINE_FREQUENCY_HZ * self.time + drift.line_phase).sin();
        self.base_nu + drift.linear_rate * self.time + self.walk + line + self.offset
    }

    fn tick(&mut self, dt: f64, drift: &DriftModel) {
        self.time += dt;
        if drift.random_walk > 0.0 {
            let sd = drift.random_walk * dt.sqrt();
            let n = Normal::new(0.0, sd).expect("finite random-walk step");
            self.walk += n.sample(&mut self.drift_rng);
        }
    }
}

fn draw_bright<R: Rng>(p: f64, timeline: &ExperimentTimeline, rng: &mut R) -> bool {
    let q = timeline.bright_probability(p).clamp(0.0, 1.0);
    // gen::<f64>() is in [0, 1): q = 1 always bright, q = 0 never.
    rng.random::<f64>() < q
}

/// One projective measurement after an RF pulse at `probe_nu`; `true` = bright.
pub fn sample_shot<R: Rng>(
    true_nu: f64,
    probe_nu: f64,
    pulse: &PulseSpec,
    motion: &MotionalModel,
    timeline: &ExperimentTimeline,
    rng: &mut R,
) -> bool {
    let p = thermal_excitation(&pulse.with_detuning(true_nu - probe_nu), motion);
    draw_bright(p, timeline, rng)
}

/// Bright counts of `shots` repetitions at excitation probability `p`,
/// drawn in one binomial sample.
pub fn sample_counts<R: Rng>(
    p: f64,
    shots: u32,
    timeline: &ExperimentTimeline,
    rng: &mut R,
) -> u32 {
    let q = timeline.bright_probability(p).clamp(0.0, 1.0);
    Binomial::new(u64::from(shots), q)
        .expect("valid binomial parameters")
        .sample(rng) as u32
}

/// A completed two-point measurement together with simulation truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measurement {
    pub estimate: EstimateResult,
    /// Mean shot time (s).
    pub timestamp: f64,
    /// True resonance averaged over the shots (rad/s).
    pub mean_true_nu: f64,
}

/// Run one two-point measurement referenced to `nu0`, advancing `state` by
/// one measurement duration.
pub fn run_measurement(
    nu0: f64,
    state: &mut SimState,
    cfg: &TwoPointConfig,
    timeline: &ExperimentTimeline,
    drift: &DriftModel,
) -> Result<Measurement> {
    timeline.validate()?;
    drift.validate()?;
    let cfg_shots;
    let cfg = if cfg.shots_per_side() == timeline.shots_per_side {
        cfg
    } else {
        cfg_shots = cfg.with_shots(timeline.shots_per_side)?;
        &cfg_shots
    };
    let profile: &ThermalProfile = cfg.profile();
    let n = timeline.shots_per_side;
    let probe_plus = nu0 + cfg.probe_offset();
    let probe_minus = nu0 - cfg.probe_offset();

    let (mut plus, mut minus) = (0u32, 0u32);
    let (mut t_sum, mut nu_sum) = (0.0, 0.0);
    for k in 0..2 * n {
        let plus_side = match timeline.ordering {
            ShotOrdering::Interleaved => k % 2 == 0,
            ShotOrdering::Blocked => k < n,
        };
        let nu = state.true_nu(drift);
        t_sum += state.time;
        nu_sum += nu;
        let probe = if plus_side { probe_plus } else { probe_minus };
        let bright = draw_bright(
            profile.excitation(nu - probe),
            timeline,
            &mut state.shot_rng,
        );
        if bright {
            if plus_side {
                plus += 1;
            } else {
                minus += 1;
            }
        }
        state.tick(timeline.rep_period, drift);
    }
    let shots = f64::from(2 * n);
    Ok(Measurement {
        estimate: estimate_from_counts(plus, minus, cfg)?,
        timestamp: t_sum / shots,
        mean_true_nu: nu_sum / shots,
    })
}

/// Simulated resonance scan: `shots` binomial repetitions of a pi pulse at
/// each probe offset in `probes` (rad/s), for a line centred at `center`.
pub fn simulate_spectrum(
    center: f64,
    pulse: &PulseSpec,
    motion: &MotionalModel,
    probes: &[f64],
    shots: u32,
    timeline: &ExperimentTimeline,
    seed: u64,
) -> Result<Vec<SpectrumPoint>> {
    if shots == 0 {
        return Err(invalid("shots", "must be positive"));
    }
    motion.validate()?;
    timeline.validate()?;
    let profile = ThermalProfile::new(pulse, motion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(probes
        .iter()
        .map(|&x| {
            let counts = sample_counts(profile.excitation(center - x), shots, timeline, &mut rng);
            SpectrumPoint {
                detuning: x,
                excitation: f64::from(counts) / f64::from(shots),
                shots,
            }
        })
        .collect())
}

/// Monte-Carlo spread of the two-point estimate at a fixed true offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSpread {
    /// rad/s
    pub mean: f64,
    /// Sample standard deviation (rad/s).
    pub std_dev: f64,
    /// Fraction of trials that landed inside the capture window.
    pub in_window_fraction: f64,
    pub trials: usize,
}

/// Estimates from `cfg.shots_per_side()` binomial counts per side at true
/// offset `delta`, one trial per seed.
///
/// Counts are integers, so each distinct count pair is inverted once.
pub fn estimate_spread(
    cfg: &TwoPointConfig,
    delta: f64,
    seeds: std::ops::Range<u64>,
    timeline: &ExperimentTimeline,
) -> Result<EstimateSpread> {
    timeline.validate()?;
    if seeds.end <= seeds.start + 1 {
        return Err(invalid("seeds", "need at least two trials"));
    }
    let (pp, pm) = cfg.probabilities(delta);
    let shots = cfg.shots_per_side();
    let counts: Vec<(u32, u32)> = seeds
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cp = sample_counts(pp, shots, timeline, &mut rng);
            let cm = sample_counts(pm, shots, timeline, &mut rng);
            (cp, cm)
        })
        .collect();
    let mut distinct = counts.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let estimates: Vec<Result<EstimateResult>> = distinct
        .par_iter()
        .map(|&(cp, cm)| estimate_from_counts(cp, cm, cfg))
        .collect();
    let mut lookup = std::collections::HashMap::with_capacity(distinct.len());
    for (key, est) in distinct.into_iter().zip(estimates) {
        lookup.insert(key, est?);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|c| lookup[c].delta_hat).sum::<f64>() / n;
    let var = counts
        .iter()
        .map(|c| (lookup[c].delta_hat - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let inside = counts.iter().filter(|c| lookup[*c].in_window).count();
    Ok(EstimateSpread {
        mean,
        std_dev: var.sqrt(),
        in_window_fraction: inside as f64 / n,
        trials: counts.len(),
    })
}

/// Evaluate `run` for every seed in parallel; results are returned in seed order.
pub fn ensemble<R, F>(seeds: std::ops::Range<u64>, run: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    seeds.into_par_iter().map(run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> ExperimentTimeline {
        ExperimentTimeline::default()
    }

    #[test]
    fn certain_outcomes() {
        let pulse = PulseSpec::pi_pulse(1.0, 0.0).unwrap();
        let m = MotionalModel::ground();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_shot(5.0, 5.0, &pulse, &m, &ideal(), &mut rng)));
        // Zero of the sinc^2 lineshape: sqrt(1 + d^2) = 2 -> d = sqrt(3).
        let d = 3f64.sqrt();
        assert!((0..1000).all(|_| !sample_shot(d, 0.0, &pulse, &m, &ideal(), &mut rng)));
    }

    #[test]
    fn half_probability_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bright = (0..100_000)
            .filter(|_| draw_bright(0.5, &ideal(), &mut rng))
            .count();
        let rate = bright as f64 / 1e5;
        assert!((rate - 0.5).abs() < 0.005, "{rate}");
    }

    #[test]
    fn detection_errors_flip_outcomes() {
        let t = ExperimentTimeline {
            detection_error_bright: 1.0,
            detection_error_dark: 1.0,
            ..ideal()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| !draw_bright(1.0, &t, &mut rng)));
        assert!((0..100).all(|_| draw_bright(0.0, &t, &mut rng)));
        assert_eq!(t.bright_probability(0.3), 0.7);
    }

    #[test]
    fn measurement_consumes_two_seconds() {
        let cfg = TwoPointConfig::standard(100.0, MotionalModel::ground()).unwrap();
        let drift = DriftModel::none();
        let mut state = SimState::new(1000.0, 1, &drift);
        run_measurement(1000.0, &mut state, &cfg, &ideal(), &drift).unwrap();
        assert!((state.time() - 2.0).abs() < 1e-12);
        assert!((ideal().measurement_duration() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_shots_rejected() {
        let cfg = TwoPointConfig::standard(100.0, MotionalModel::ground()).unwrap();
        let drift = DriftModel::none();
        let mut state = SimState::new(0.0, 1, &drift);
        let t = ExperimentTimeline {
            shots_per_side: 0,
            ..ideal()
        };
        assert!(run_measurement(0.0, &mut state, &cfg, &t, &drift).is_err());
    }

    #[test]
    fn line_synchronous_modulation_is_constant() {
        let drift = DriftModel {
            line_amplitude: 10.0,
            line_phase: 0.3,
            ..DriftModel::none()
        };
        let mut s = SimState::new(0.0, 1, &drift);
        let first = s.true_nu(&drift);
        for _ in 0..500 {
            s.tick(0.02, &drift);
            assert!((s.true_nu(&drift) - first).abs() < 1e-6);
        }
    }

    #[test]
    fn ensemble_preserves_seed_order() {
        let out = ensemble(0..64, |s| s * 2);
        assert_eq!(out, (0..64).map(|s| s * 2).collect::<Vec<_>>());
    }
}
