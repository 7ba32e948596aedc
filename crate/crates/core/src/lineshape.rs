//! Excitation probability after a fixed-duration square pulse, for a single
//! motional Fock state and for a thermal phonon distribution.
//!
//! The kernels here are generic over [`Scalar`]; the default type parameter
//! is `f64`.

use crate::atomphys::{frequency_position_slope, IonSpecies, TrapEnvironment};
use crate::constants::CODATA;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Smallest thermal-sum cutoff; keeps the truncated weight above 1 - 1e-4 for small nbar.
pub const MIN_PHONON_CUTOFF: usize = 50;

/// Lamb-Dicke parameter that reproduces the published resonance widths
/// (1.602 Omega at nbar = 20, 1.62 Omega at nbar = 100), see [`eta_from_fwhm`].
pub const FWHM_CALIBRATED_ETA: f64 = 0.02599;

/// A single square RF pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec<T = f64> {
    /// Rabi frequency Omega_0 for the motional ground state (rad/s).
    pub rabi: T,
    /// Pulse duration tau (s).
    pub duration: T,
    /// Detuning delta = nu - nu_RF (rad/s).
    pub detuning: T,
}

impl<T: Scalar> PulseSpec<T> {
    pub fn new(rabi: T, duration: T, detuning: T) -> Result<Self> {
        if !(rabi > T::zero() && rabi.is_finite()) {
            return Err(invalid("rabi", "must be positive"));
        }
        if !(duration > T::zero() && duration.is_finite()) {
            return Err(invalid("duration", "must be positive"));
        }
        if !detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        Ok(Self {
            rabi,
            duration,
            detuning,
        })
    }

    /// Pulse of duration pi / Omega_0.
    pub fn pi_pulse(rabi: T, detuning: T) -> Result<Self> {
        Self::new(rabi, T::PI() / rabi, detuning)
    }

    pub fn with_detuning(self, detuning: T) -> Self {
        Self { detuning, ..self }
    }
}

/// Thermal state of the axial mode and its coupling to the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionalModel<T = f64> {
    /// Mean phonon number.
    pub nbar: T,
    /// Effective Lamb-Dicke parameter.
    pub eta: T,
    /// Thermal sums run over n <= max(50, ceil(cutoff_factor * nbar)).
    pub cutoff_factor: T,
}

impl<T: Scalar> MotionalModel<T> {
    pub fn new(nbar: T, eta: T) -> Result<Self> {
        let m = Self {
            nbar,
            eta,
            cutoff_factor: T::lit(10.0),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nbar >= T::zero() && self.nbar.is_finite()) {
            return Err(invalid("nbar", "must be non-negative"));
        }
        if !(self.eta >= T::zero() && self.eta < T::one()) {
            return Err(invalid("eta", "must lie in [0, 1)"));
        }
        if !(self.cutoff_factor > T::zero() && self.cutoff_factor.is_finite()) {
            return Err(invalid("cutoff_factor", "must be positive"));
        }
        Ok(())
    }

    /// Ground-state cooled ion without motional coupling.
    pub fn ground() -> Self {
        Self {
            nbar: T::zero(),
            eta: T::zero(),
            cutoff_factor: T::lit(10.0),
        }
    }

    /// Highest phonon number included in thermal sums.
    pub fn cutoff(&self) -> usize {
        let scaled = (self.cutoff_factor * self.nbar)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX);
        scaled.max(MIN_PHONON_CUTOFF)
    }

    /// Thermal occupation probabilities w_n for n = 0..=cutoff.
    pub fn thermal_weights(&self) -> Vec<T> {
        let one = T::one();
        let norm = one / (self.nbar + one);
        let ratio = self.nbar / (self.nbar + one);
        let mut w = Vec::with_capacity(self.cutoff() + 1);
        let mut term = norm;
        for _ in 0..=self.cutoff() {
            w.push(term);
            term = term * ratio;
        }
        w
    }
}

/// Laguerre polynomials L_0(x) ..= L_nmax(x) by the three-term recurrence.
pub fn laguerre_sequence<T: Scalar>(nmax: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(T::one());
    if nmax == 0 {
        return out;
    }
    out.push(T::one() - x);
    for k in 1..nmax {
        let kf = T::from_count(k);
        let next = ((T::lit(2.0) * kf + T::one() - x) * out[k] - kf * out[k - 1]) / (kf + T::one());
        out.push(next);
    }
    out
}

/// Carrier Rabi frequency for Fock state `n`: Omega_0 L_n(eta^2), so that
/// n = 0 returns exactly `pulse.rabi`.
pub fn effective_rabi<T: Scalar>(n: usize, pulse: &PulseSpec<T>, motion: &MotionalModel<T>) -> T {
    pulse.rabi * laguerre_sequence(n, motion.eta * motion.eta)[n]
}

#[inline]
fn fock_probability<T: Scalar>(rabi_n: T, detuning: T, duration: T) -> T {
    let r2 = rabi_n * rabi_n;
    let total = r2 + detuning * detuning;
    if total == T::zero() {
        return T::zero();
    }
    let s = (total.sqrt() * duration * T::lit(0.5)).sin();
    r2 / total * s * s
}

/// Excitation probability for an ion in Fock state `n`.
pub fn rabi_excitation<T: Scalar>(n: usize, pulse: &PulseSpec<T>, motion: &MotionalModel<T>) -> T {
    fock_probability(
        effective_rabi(n, pulse, motion),
        pulse.detuning,
        pulse.duration,
    )
}

/// Precomputed thermal weights and per-state Rabi frequencies for repeated
/// evaluation of the thermal lineshape at one pulse duration.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalProfile<T = f64> {
    weights: Vec<T>,
    rabi_n: Vec<T>,
    rabi: T,
    duration: T,
}

impl<T: Scalar> ThermalProfile<T> {
    pub fn new(pulse: &PulseSpec<T>, motion: &MotionalModel<T>) -> Self {
        let weights = motion.thermal_weights();
        let rabi_n = laguerre_sequence(weights.len() - 1, motion.eta * motion.eta)
            .into_iter()
            .map(|l| pulse.rabi * l)
            .collect();
        Self {
            weights,
            rabi_n,
            rabi: pulse.rabi,
            duration: pulse.duration,
        }
    }

    pub fn rabi(&self) -> T {
        self.rabi
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    /// Thermal excitation probability at `detuning` (rad/s).
    ///
    /// Summed in fixed ascending-n order.
    pub fn excitation(&self, detuning: T) -> T {
        self.weights
            .iter()
            .zip(&self.rabi_n)
            .fold(T::zero(), |acc, (&w, &r)| {
                acc + w * fock_probability(r, detuning, self.duration)
            })
    }

    /// Sum of the truncated thermal weights.
    pub fn weight_sum(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

/// Thermally averaged excitation probability at `pulse.detuning`.
pub fn thermal_excitation<T: Scalar>(pulse: &PulseSpec<T>, motion: &MotionalModel<T>) -> T {
    ThermalProfile::new(pulse, motion).excitation(pulse.detuning)
}

/// Full width at half maximum of the thermal lineshape (rad/s).
///
/// The pulse detuning is ignored. Fails with [`Error::PeakNotCentered`] when
/// the lineshape has its maximum away from zero detuning, e.g. for an
/// over-rotated pulse.
pub fn fwhm<T: Scalar>(motion: &MotionalModel<T>, pulse: &PulseSpec<T>) -> Result<T> {
    let profile = ThermalProfile::new(pulse, motion);
    let peak = profile.excitation(T::zero());
    let half = peak * T::lit(0.5);
    let step = pulse.rabi * T::lit(0.01);
    let slack = T::epsilon() * T::lit(64.0);

    let edge = |sign: T| -> Result<T> {
        let mut inner = T::zero();
        let mut k = 1;
        loop {
            let d = step * T::from_count(k);
            let p = profile.excitation(sign * d);
            if p > peak + slack {
                return Err(Error::PeakNotCentered);
            }
            if p < half {
                break bisect_half(&profile, sign, inner, d, half, pulse.rabi);
            }
            inner = d;
            k += 1;
            if k > 2000 {
                return Err(Error::PeakNotCentered);
            }
        }
    };
    // Keep scanning the right wing for side lobes above the peak.
    let right = edge(T::one())?;
    let left = edge(-T::one())?;
    let mut k = 1;
    while T::from_count(k) * step < pulse.rabi * T::lit(5.0) {
        if profile.excitation(T::from_count(k) * step) > peak + slack {
            return Err(Error::PeakNotCentered);
        }
        k += 1;
    }
    Ok(right + left)
}

fn bisect_half<T: Scalar>(
    profile: &ThermalProfile<T>,
    sign: T,
    mut lo: T,
    mut hi: T,
    half: T,
    rabi: T,
) -> Result<T> {
    let tol = rabi * T::lit(1e-10).max(T::epsilon() * T::lit(8.0));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        if profile.excitation(sign * mid) >= half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

/// Effective Lamb-Dicke parameter from the gradient-induced coupling:
/// eta = (d nu / dz) z0 / omega_z with z0 = sqrt(hbar / (2 m omega_z)).
pub fn compute_eta(env: &TrapEnvironment, species: &IonSpecies) -> Result<f64> {
    let z0 = (CODATA.hbar() / (2.0 * species.mass * env.omega_z)).sqrt();
    Ok((frequency_position_slope(env, species)? * z0 / env.omega_z).abs())
}

/// Lamb-Dicke parameter minimising the squared mismatch to measured widths.
///
/// `targets` holds `(nbar, fwhm / Omega_0)` pairs; widths are evaluated for a
/// pi pulse. Golden-section search over eta in [0, 0.2].
pub fn eta_from_fwhm(targets: &[(f64, f64)]) -> Result<f64> {
    if targets.is_empty() {
        return Err(invalid("targets", "need at least one (nbar, fwhm) pair"));
    }
    let pulse = PulseSpec::pi_pulse(1.0, 0.0)?;
    let cost = |eta: f64| -> Result<f64> {
        let mut c = 0.0;
        for &(nbar, target) in targets {
            let w = fwhm(&MotionalModel::new(nbar, eta)?, &pulse)?;
            c += (w - target).powi(2);
        }
        Ok(c)
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 0.2);
    let mut x1 = b - golden * (b - a);
    let mut x2 = a + golden * (b - a);
    let (mut f1, mut f2) = (cost(x1)?, cost(x2)?);
    while b - a > 1e-9 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - golden * (b - a);
            f1 = cost(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + golden * (b - a);
            f2 = cost(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}
