//! Two-point frequency estimator.
//!
//! The resonance is probed at nu_0 + kappa Omega and nu_0 - kappa Omega. The
//! normalized asymmetry g = (P+ - P-) / (P+ + P-) is a monotone function of
//! the offset Delta = nu - nu_0 on the capture window |Delta| <= (1 - kappa) Omega
//! and is inverted numerically.

use crate::error::{invalid, Error, Result};
use crate::lineshape::{MotionalModel, PulseSpec, ThermalProfile};
use serde::Serialize;

/// Relative step (in units of Omega_0) of the central difference for dg/dDelta.
pub const SLOPE_STEP: f64 = 1e-3;
/// Inversion tolerance in units of Omega_0.
pub const INVERSION_TOL: f64 = 1e-9;

/// Configuration of one two-point frequency measurement.
///
/// The thermal lineshape is precomputed at construction, so the fields are
/// read-only.
#[derive(Debug, Clone)]
pub struct TwoPointConfig {
    kappa: f64,
    shots_per_side: u32,
    pulse: PulseSpec,
    motion: MotionalModel,
    profile: ThermalProfile,
}

impl TwoPointConfig {
    pub fn new(
        kappa: f64,
        shots_per_side: u32,
        pulse: PulseSpec,
        motion: MotionalModel,
    ) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(invalid("kappa", "must lie in (0, 1)"));
        }
        if shots_per_side == 0 {
            return Err(invalid("shots_per_side", "must be at least 1"));
        }
        motion.validate()?;
        let pulse = PulseSpec::new(pulse.rabi, pulse.duration, 0.0)?;
        let profile = ThermalProfile::new(&pulse, &motion);
        Ok(Self {
            kappa,
            shots_per_side,
            pulse,
            motion,
            profile,
        })
    }

    /// kappa = 0.8, 50 shots per side, pi pulse at Rabi frequency `rabi`.
    pub fn standard(rabi: f64, motion: MotionalModel) -> Result<Self> {
        Self::new(0.8, 50, PulseSpec::pi_pulse(rabi, 0.0)?, motion)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn shots_per_side(&self) -> u32 {
        self.shots_per_side
    }

    pub fn pulse(&self) -> &PulseSpec {
        &self.pulse
    }

    pub fn motion(&self) -> &MotionalModel {
        &self.motion
    }

    pub fn rabi(&self) -> f64 {
        self.pulse.rabi
    }

    pub fn profile(&self) -> &ThermalProfile {
        &self.profile
    }

    /// Half width (1 - kappa) Omega_0 of the capture window (rad/s).
    pub fn window_half_width(&self) -> f64 {
        (1.0 - self.kappa) * self.pulse.rabi
    }

    /// Probe offset kappa Omega_0 from the reference frequency (rad/s).
    pub fn probe_offset(&self) -> f64 {
        self.kappa * self.pulse.rabi
    }

    /// Same lineshape and kappa with a different shot count.
    pub fn with_shots(&self, shots_per_side: u32) -> Result<Self> {
        if shots_per_side == 0 {
            return Err(invalid("shots_per_side", "must be at least 1"));
        }
        Ok(Self {
            shots_per_side,
            ..self.clone()
        })
    }

    /// Excitation probabilities (P+, P-) for a true offset `delta`.
    pub fn probabilities(&self, delta: f64) -> (f64, f64) {
        let k = self.probe_offset();
        (
            self.profile.excitation(delta - k),
            self.profile.excitation(delta + k),
        )
    }
}

/// Outcome of one two-point measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateResult {
    /// Estimated offset Delta (rad/s).
    pub delta_hat: f64,
    /// Propagated projection-noise standard deviation of `delta_hat` (rad/s).
    pub sigma_delta: f64,
    pub g_measured: f64,
    /// False when `g_measured` fell outside the window image and `delta_hat` was clamped.
    pub in_window: bool,
    pub counts_plus: u32,
    pub counts_minus: u32,
}

/// Result of inverting g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inversion {
    pub delta: f64,
    pub in_window: bool,
}

fn asymmetry(p_plus: f64, p_minus: f64) -> Result<f64> {
    let sum = p_plus + p_minus;
    if sum <= 0.0 {
        return Err(Error::NoSignal);
    }
    Ok((p_plus - p_minus) / sum)
}

/// Model asymmetry g(Delta).
pub fn g_forward(delta: f64, cfg: &TwoPointConfig) -> Result<f64> {
    let (p, m) = cfg.probabilities(delta);
    asymmetry(p, m)
}

/// Offset whose model asymmetry matches `g_measured`, restricted to the
/// capture window. Values beyond the window image are clamped to the nearest
/// edge and flagged.
pub fn g_invert(g_measured: f64, cfg: &TwoPointConfig) -> Result<Inversion> {
    if g_measured.is_nan() {
        return Err(Error::Domain {
            what: "g_invert",
            value: g_measured,
        });
    }
    let edge = cfg.window_half_width();
    let g_hi = g_forward(edge, cfg)?;
    let g_lo = g_forward(-edge, cfg)?;
    if g_measured > g_hi {
        return Ok(Inversion {
            delta: edge,
            in_window: false,
        });
    }
    if g_measured < g_lo {
        return Ok(Inversion {
            delta: -edge,
            in_window: false,
        });
    }
    let (mut lo, mut hi) = (-edge, edge);
    let tol = INVERSION_TOL * cfg.rabi();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g_forward(mid, cfg)? < g_measured {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Inversion {
        delta: 0.5 * (lo + hi),
        in_window: true,
    })
}

/// Central-difference slope dg/dDelta (per rad/s).
pub fn g_slope(delta: f64, cfg: &TwoPointConfig) -> Result<f64> {
    let h = SLOPE_STEP * cfg.rabi();
    Ok((g_forward(delta + h, cfg)? - g_forward(delta - h, cfg)?) / (2.0 * h))
}

/// Binomial variance of an estimated probability, with the saturated cases
/// P = 0 or 1 replaced by p = 1/(shots + 2).
pub fn binomial_variance(p: f64, shots: u32) -> f64 {
    let n = f64::from(shots);
    let q = if p <= 0.0 || p >= 1.0 {
        1.0 / (n + 2.0)
    } else {
        p
    };
    q * (1.0 - q) / n
}

fn propagate(p_plus: f64, p_minus: f64, shots: u32, slope: f64) -> f64 {
    let s = p_plus + p_minus;
    let dg_dp = 2.0 * p_minus / (s * s);
    let dg_dm = -2.0 * p_plus / (s * s);
    let var_g = dg_dp * dg_dp * binomial_variance(p_plus, shots)
        + dg_dm * dg_dm * binomial_variance(p_minus, shots);
    var_g.sqrt() / slope.abs()
}

/// Estimate the offset from bright counts on the two probe sides.
pub fn estimate_from_counts(
    counts_plus: u32,
    counts_minus: u32,
    cfg: &TwoPointConfig,
) -> Result<EstimateResult> {
    let shots = cfg.shots_per_side();
    if counts_plus > shots || counts_minus > shots {
        return Err(invalid(
            "counts",
            format!("counts exceed {shots} shots per side"),
        ));
    }
    if counts_plus == 0 && counts_minus == 0 {
        return Err(Error::NoSignal);
    }
    let n = f64::from(shots);
    let p_plus = f64::from(counts_plus) / n;
    let p_minus = f64::from(counts_minus) / n;
    let g = asymmetry(p_plus, p_minus)?;
    let inv = g_invert(g, cfg)?;
    let slope = g_slope(inv.delta, cfg)?;
    Ok(EstimateResult {
        delta_hat: inv.delta,
        sigma_delta: propagate(p_plus, p_minus, shots, slope),
        g_measured: g,
        in_window: inv.in_window,
        counts_plus,
        counts_minus,
    })
}

/// Projection-noise standard deviation of the estimate at true offset
/// `delta`, using model probabilities and `shots_per_side` shots per side.
pub fn analytic_sigma(delta: f64, cfg: &TwoPointConfig, shots_per_side: u32) -> Result<f64> {
    if shots_per_side == 0 {
        return Err(invalid("shots_per_side", "must be at least 1"));
    }
    let (p, m) = cfg.probabilities(delta);
    let slope = g_slope(delta, cfg)?;
    Ok(propagate(p, m, shots_per_side, slope))
}

/// Expected standard deviation for a measurement lasting `total_time` with
/// one shot every `rep_period`, shots split evenly between the two sides.
pub fn predicted_sigma(
    total_time: f64,
    rep_period: f64,
    cfg: &TwoPointConfig,
    delta: f64,
) -> Result<f64> {
    if !(rep_period > 0.0) || !(total_time >= 0.0) {
        return Err(invalid("rep_period", "times must be positive"));
    }
    // Guard against 2.0 / 0.02 landing just below 100.
    let shots = (total_time / rep_period * (1.0 + 1e-12)).floor() as u64;
    let per_side = shots / 2;
    if per_side < 1 {
        return Err(invalid("total_time", "fewer than one shot per probe side"));
    }
    let per_side = u32::try_from(per_side).map_err(|_| invalid("total_time", "too many shots"))?;
    analytic_sigma(delta, cfg, per_side)
}
