use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::simulator::TrackingRecord;
use serde::Serialize;

/// Relative tolerance on sampling-interval uniformity and tau matching.
const UNIFORMITY_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencySample<T = f64> {
    /// s
    pub timestamp: T,
    /// rad/s
    pub nu: T,
    /// rad/s
    pub sigma: T,
}

/// Time-ordered frequency measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencySeries<T = f64> {
    samples: Vec<FrequencySample<T>>,
}

impl<T: Scalar> FrequencySeries<T> {
    pub fn new(samples: Vec<FrequencySample<T>>) -> Result<Self> {
        if samples
            .windows(2)
            .any(|w| !(w[1].timestamp > w[0].timestamp))
        {
            return Err(invalid("timestamps", "must be strictly increasing"));
        }
        if samples.iter().any(|s| !(s.sigma > T::zero())) {
            return Err(invalid("sigma", "must be positive"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[FrequencySample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean sampling interval (s).
    pub fn interval(&self) -> Option<T> {
        let n = self.samples.len();
        (n >= 2).then(|| {
            (self.samples[n - 1].timestamp - self.samples[0].timestamp) / T::from_count(n - 1)
        })
    }
}

impl FrequencySeries<f64> {
    /// Estimated frequencies of a tracking run.
    pub fn from_record(record: &TrackingRecord) -> Result<Self> {
        Self::new(
            record
                .samples
                .iter()
                .map(|s| FrequencySample {
                    timestamp: s.timestamp,
                    nu: s.nu_estimated,
                    sigma: s.sigma_nu,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum AllanVariant {
    #[default]
    Overlapping,
    NonOverlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllanResult<T = f64> {
    /// s
    pub taus: Vec<T>,
    /// Allan deviation of the frequency (rad/s).
    pub adev: Vec<T>,
    /// Drift rate d from the fit adev^2 = a / tau + d^2 tau^2 / 2 (rad/s per s).
    pub fitted_drift_rate: T,
    /// Fitted d^2, unconstrained in sign (rad^2/s^4).
    pub drift_sq: T,
    pub drift_sq_stderr: T,
    /// White-frequency-noise coefficient a (rad^2/s).
    pub white_coefficient: T,
    /// Weighted RMS of the relative residual of adev^2.
    pub fit_residual: T,
}

/// Averaging factors 1, 2, 4, ... up to a quarter of the series, as taus.
pub fn octave_taus<T: Scalar>(series: &FrequencySeries<T>) -> Vec<T> {
    let Some(tau0) = series.interval() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut m = 1usize;
    while 4 * m <= series.len() {
        out.push(tau0 * T::from_count(m));
        m *= 2;
    }
    out
}

/// Allan deviation at the requested averaging times and a white-plus-drift fit.
pub fn allan_deviation<T: Scalar>(
    series: &FrequencySeries<T>,
    taus: &[T],
    variant: AllanVariant,
) -> Result<AllanResult<T>> {
    let n = series.len();
    if n < 3 {
        return Err(invalid("series", "need at least 3 samples"));
    }
    if taus.is_empty() {
        return Err(invalid("taus", "need at least one averaging time"));
    }
    let s = series.samples();
    let tau0 = series.interval().expect("n >= 3");
    let tol = T::lit(UNIFORMITY_TOL);
    for w in s.windows(2) {
        let dt = w[1].timestamp - w[0].timestamp;
        if ((dt - tau0) / tau0).abs() > tol {
            return Err(Error::NonUniformSampling {
                expected: tau0.to_f64().unwrap_or(f64::NAN),
                found: dt.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    // Offset removal keeps the prefix sums small.
    let y0 = s[0].nu;
    let y: Vec<T> = s.iter().map(|p| p.nu - y0).collect();

    let mut factors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let m = (tau / tau0).round();
        let m_usize = m.to_usize().unwrap_or(0);
        if m_usize == 0 || ((m * tau0 - tau) / tau).abs() > tol || 2 * m_usize > n - 1 {
            return Err(invalid(
                "taus",
                format!("tau {tau} is not a usable multiple of the {tau0} s interval"),
            ));
        }
        factors.push(m_usize);
    }
    if factors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("taus", "must be strictly increasing"));
    }

    let variances: Vec<T> = factors
        .iter()
        .map(|&m| match variant {
            AllanVariant::Overlapping => overlapping_variance(&y, m),
            AllanVariant::NonOverlapping => blocked_variance(&y, m),
        })
        .collect();
    let taus_used: Vec<T> = factors.iter().map(|&m| tau0 * T::from_count(m)).collect();
    let edf: Vec<T> = factors
        .iter()
        .map(|&m| (T::from_count(n) / T::from_count(m) - T::one()).max(T::one()))
        .collect();
    let fit = fit_white_and_drift(&taus_used, &variances, &edf);

    Ok(AllanResult {
        adev: variances.iter().map(|v| v.sqrt()).collect(),
        taus: taus_used,
        fitted_drift_rate: fit.b.max(T::zero()).sqrt(),
        drift_sq: fit.b,
        drift_sq_stderr: fit.b_err,
        white_coefficient: fit.a,
        fit_residual: fit.residual,
    })
}

fn overlapping_variance<T: Scalar>(y: &[T], m: usize) -> T {
    let n = y.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    for &v in y {
        let last = *prefix.last().expect("non-empty");
        prefix.push(last + v);
    }
    let terms = n - 2 * m + 1;
    let mut acc = T::zero();
    for j in 0..terms {
        let d = prefix[j + 2 * m] - prefix[j + m] - (prefix[j + m] - prefix[j]);
        acc = acc + d * d;
    }
    let mf = T::from_count(m);
    acc / (T::lit(2.0) * mf * mf * T::from_count(terms))
}

fn blocked_variance<T: Scalar>(y: &[T], m: usize) -> T {
    let blocks: Vec<T> = y
        .chunks_exact(m)
        .map(|c| c.iter().copied().sum::<T>() / T::from_count(m))
        .collect();
    let k = blocks.len();
    let acc: T = blocks
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    acc / (T::lit(2.0) * T::from_count(k - 1))
}

struct DriftFit<T> {
    a: T,
    b: T,
    b_err: T,
    residual: T,
}

// Weighted least squares of var(tau) = a / tau + b tau^2 / 2 with weights
// edf / var^2; a is constrained non-negative.
fn fit_white_and_drift<T: Scalar>(taus: &[T], var: &[T], edf: &[T]) -> DriftFit<T> {
    let half = T::lit(0.5);
    let tiny = T::min_positive_value();
    let w: Vec<T> = var
        .iter()
        .zip(edf)
        .map(|(&v, &e)| e / (v * v).max(tiny))
        .collect();
    let basis = |tau: T| (T::one() / tau, half * tau * tau);

    let (mut saa, mut sab, mut sbb, mut sya, mut syb) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for ((&tau, &v), &wi) in taus.iter().zip(var).zip(&w) {
        let (fa, fb) = basis(tau);
        saa = saa + wi * fa * fa;
        sab = sab + wi * fa * fb;
        sbb = sbb + wi * fb * fb;
        sya = sya + wi * v * fa;
        syb = syb + wi * v * fb;
    }
    let det = saa * sbb - sab * sab;
    let (mut a, mut b, mut var_b) = if taus.len() >= 2 && det > T::zero() {
        (
            (sya * sbb - syb * sab) / det,
            (syb * saa - sya * sab) / det,
            saa / det,
        )
    } else {
        (T::zero(), syb / sbb, T::one() / sbb)
    };
    if a < T::zero() {
        a = T::zero();
        b = syb / sbb;
        var_b = T::one() / sbb;
    }

    let mut chi2 = T::zero();
    let mut rel = T::zero();
    let mut wsum = T::zero();
    for ((&tau, &v), &wi) in taus.iter().zip(var).zip(&w) {
        let (fa, fb) = basis(tau);
        let model = a * fa + b * fb;
        chi2 = chi2 + wi * (v - model) * (v - model);
        if model > T::zero() {
            rel = rel + wi * ((v - model) / model).powi(2);
            wsum = wsum + wi;
        }
    }
    let dof = taus.len().saturating_sub(2);
    let scale = if dof > 0 {
        (chi2 / T::from_count(dof)).max(T::one())
    } else {
        T::one()
    };
    DriftFit {
        a,
        b,
        b_err: (var_b * scale).sqrt(),
        residual: if wsum > T::zero() {
            (rel / wsum).sqrt()
        } else {
            T::zero()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64], dt: f64) -> FrequencySeries {
        FrequencySeries::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &nu)| FrequencySample {
                    timestamp: i as f64 * dt,
                    nu,
                    sigma: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_drift_closed_form() {
        let d = 51.52;
        let s = series(
            &(0..200)
                .map(|i| 7.9e10 + d * 2.0 * i as f64)
                .collect::<Vec<_>>(),
            2.0,
        );
        let taus = octave_taus(&s);
        for variant in [AllanVariant::Overlapping, AllanVariant::NonOverlapping] {
            let r = allan_deviation(&s, &taus, variant).unwrap();
            for (tau, adev) in r.taus.iter().zip(&r.adev) {
                let exact = d * tau / 2f64.sqrt();
                assert!(
                    (adev / exact - 1.0).abs() < 1e-9,
                    "{tau}: {adev} vs {exact}"
                );
            }
            assert!((r.fitted_drift_rate / d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_series_has_zero_deviation() {
        let s = series(&[7.9e10; 50], 2.0);
        let r = allan_deviation(&s, &octave_taus(&s), AllanVariant::Overlapping).unwrap();
        assert!(r.adev.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_precision_series() {
        let s = FrequencySeries::<f32>::new(
            (0..64)
                .map(|i| FrequencySample {
                    timestamp: i as f32,
                    nu: 3.0 * i as f32,
                    sigma: 1.0,
                })
                .collect(),
        )
        .unwrap();
        let r = allan_deviation(&s, &[1.0, 4.0], AllanVariant::Overlapping).unwrap();
        assert!((r.adev[1] - 3.0 * 4.0 / 2f32.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn rejects_irregular_sampling_and_bad_taus() {
        let mut samples: Vec<_> = (0..10)
            .map(|i| FrequencySample {
                timestamp: i as f64,
                nu: 0.0,
                sigma: 1.0,
            })
            .collect();
        samples[5].timestamp = 5.2;
        let s = FrequencySeries::new(samples).unwrap();
        assert!(matches!(
            allan_deviation(&s, &[1.0], AllanVariant::Overlapping),
            Err(Error::NonUniformSampling { .. })
        ));
        let s = series(&[0.0; 10], 1.0);
        assert!(allan_deviation(&s, &[1.5], AllanVariant::Overlapping).is_err());
        assert!(allan_deviation(&s, &[5.0], AllanVariant::Overlapping).is_err());
        assert!(
            allan_deviation(&series(&[0.0; 2], 1.0), &[1.0], AllanVariant::Overlapping).is_err()
        );
    }

    #[test]
    fn series_validation() {
        let bad = vec![
            FrequencySample {
                timestamp: 1.0,
                nu: 0.0,
                sigma: 1.0,
            },
            FrequencySample {
                timestamp: 1.0,
                nu: 0.0,
                sigma: 1.0,
            },
        ];
        assert!(FrequencySeries::new(bad).is_err());
        let bad = vec![FrequencySample {
            timestamp: 1.0,
            nu: 0.0,
            sigma: 0.0,
        }];
        assert!(FrequencySeries::new(bad).is_err());
    }
}
