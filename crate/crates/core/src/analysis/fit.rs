//! Weighted nonlinear least-squares fit of a full resonance scan.
//!
//! Model: `amplitude * P(nbar, (x - center) / rabi) + baseline`, where `P` is
//! the thermal pi-pulse lineshape in units of the Rabi frequency and `nbar`
//! and `eta` are held fixed. Levenberg-Marquardt with a Nelder-Mead fallback.

use crate::error::{invalid, Error, Result};
use crate::estimator::binomial_variance;
use crate::lineshape::{MotionalModel, PulseSpec, ThermalProfile};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

const MAX_LM_ITERATIONS: usize = 200;
const MAX_SIMPLEX_ITERATIONS: usize = 20_000;
const PARAM_TOL: f64 = 1e-8;

/// One scan point: probe offset x = nu_RF - nu_ref (rad/s), excitation
/// estimate, and the number of shots behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub detuning: f64,
    pub excitation: f64,
    pub shots: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// rad/s, same frame as [`SpectrumPoint::detuning`]
    pub center: f64,
    /// rad/s
    pub rabi: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

impl SpectrumParams {
    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.center, self.rabi, self.amplitude, self.baseline)
    }

    fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            center: v[0],
            rabi: v[1],
            amplitude: v[2],
            baseline: v[3],
        }
    }

    /// Starting point from the data: extremes for amplitude and baseline,
    /// half-maximum centroid for the centre, and width / 1.6 for the Rabi
    /// frequency.
    pub fn guess(points: &[SpectrumPoint]) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("points", "need at least two points"));
        }
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.excitation), hi.max(p.excitation))
            });
        let half = 0.5 * (lo + hi);
        let above: Vec<&SpectrumPoint> = points.iter().filter(|p| p.excitation >= half).collect();
        let wsum: f64 = above.iter().map(|p| p.excitation - lo).sum();
        let center = if wsum > 0.0 {
            above
                .iter()
                .map(|p| p.detuning * (p.excitation - lo))
                .sum::<f64>()
                / wsum
        } else {
            points[points.len() / 2].detuning
        };
        let (xmin, xmax) = above
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p.detuning), b.max(p.detuning))
            });
        let step = (points[points.len() - 1].detuning - points[0].detuning).abs()
            / (points.len() - 1) as f64;
        let width = (xmax - xmin).max(step);
        Ok(Self {
            center,
            rabi: width / 1.6,
            amplitude: hi - lo,
            baseline: lo,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumFitResult {
    pub params: SpectrumParams,
    /// Order: center, rabi, amplitude, baseline.
    pub covariance: [[f64; 4]; 4],
    pub stderr: SpectrumParams,
    pub chi_square: f64,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub method: FitMethod,
}

struct Problem<'a> {
    points: &'a [SpectrumPoint],
    sigma: Vec<f64>,
    profile: ThermalProfile,
}

impl Problem<'_> {
    fn model(&self, p: &Vector4<f64>, x: f64) -> f64 {
        p[2] * self.profile.excitation((x - p[0]) / p[1]) + p[3]
    }

    fn residuals(&self, p: &Vector4<f64>) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.sigma)
            .map(|(pt, s)| (pt.excitation - self.model(p, pt.detuning)) / s)
            .collect()
    }

    fn chi2(&self, p: &Vector4<f64>) -> f64 {
        if !(p[1] > 0.0) {
            return f64::INFINITY;
        }
        self.residuals(p).iter().map(|r| r * r).sum()
    }

    fn steps(&self, p: &Vector4<f64>) -> Vector4<f64> {
        let width = p[1].abs();
        Vector4::new(1e-6 * width, 1e-6 * width, 1e-6, 1e-6)
    }

    // Jacobian of the model divided by sigma: J_ij = d m_i / d p_j / sigma_i.
    fn jacobian(&self, p: &Vector4<f64>) -> Vec<[f64; 4]> {
        let h = self.steps(p);
        let mut cols = [vec![], vec![], vec![], vec![]];
        for (j, col) in cols.iter_mut().enumerate() {
            let mut up = *p;
            let mut dn = *p;
            up[j] += h[j];
            dn[j] -= h[j];
            *col = self
                .points
                .iter()
                .zip(&self.sigma)
                .map(|(pt, s)| {
                    (self.model(&up, pt.detuning) - self.model(&dn, pt.detuning)) / (2.0 * h[j] * s)
                })
                .collect();
        }
        (0..self.points.len())
            .map(|i| [cols[0][i], cols[1][i], cols[2][i], cols[3][i]])
            .collect()
    }

    fn normal_equations(&self, p: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
        let jac = self.jacobian(p);
        let r = self.residuals(p);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..4 {
                jtr[a] += row[a] * ri;
                for b in 0..4 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        (jtj, jtr)
    }

    fn scale(&self, p: &Vector4<f64>) -> Vector4<f64> {
        let width = p[1].abs();
        Vector4::new(width, width, 1.0, 1.0)
    }
}

enum LmOutcome {
    Converged(Vector4<f64>, usize),
    Stalled(Vector4<f64>, usize),
}

fn levenberg_marquardt(problem: &Problem, start: Vector4<f64>) -> LmOutcome {
    let mut p = start;
    let mut chi2 = problem.chi2(&p);
    let mut lambda = 1e-3;
    for it in 1..=MAX_LM_ITERATIONS {
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_chi2 = problem.chi2(&trial);
            if trial_chi2 <= chi2 {
                let scale = problem.scale(&p);
                let rel = (0..4)
                    .map(|k| step[k].abs() / p[k].abs().max(scale[k]))
                    .fold(0.0, f64::max);
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if rel < PARAM_TOL {
                    return LmOutcome::Converged(p, it);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a (numerically) stationary point.
            return if chi2.is_finite() {
                LmOutcome::Converged(p, it)
            } else {
                LmOutcome::Stalled(p, it)
            };
        }
    }
    LmOutcome::Stalled(p, MAX_LM_ITERATIONS)
}

fn nelder_mead(problem: &Problem, start: Vector4<f64>) -> (Vector4<f64>, bool, usize) {
    let scale = problem.scale(&start);
    let mut simplex: Vec<(Vector4<f64>, f64)> = (0..5)
        .map(|k| {
            let mut v = start;
            if k > 0 {
                v[k - 1] += 0.05 * scale[k - 1];
            }
            (v, problem.chi2(&v))
        })
        .collect();
    for it in 1..=MAX_SIMPLEX_ITERATIONS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[4].1);
        if (worst - best).abs() <= 1e-14 * (best.abs() + 1e-300) {
            return (simplex[0].0, true, it);
        }
        let centroid = simplex[..4].iter().map(|s| s.0).sum::<Vector4<f64>>() / 4.0;
        let reflect = centroid + (centroid - simplex[4].0);
        let fr = problem.chi2(&reflect);
        if fr < simplex[0].1 {
            let expand = centroid + 2.0 * (centroid - simplex[4].0);
            let fe = problem.chi2(&expand);
            simplex[4] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (reflect, fr);
        } else {
            let contract = centroid + 0.5 * (simplex[4].0 - centroid);
            let fc = problem.chi2(&contract);
            if fc < simplex[4].1 {
                simplex[4] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = best + 0.5 * (s.0 - best);
                    s.1 = problem.chi2(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, false, MAX_SIMPLEX_ITERATIONS)
}

/// Fit centre, Rabi frequency, amplitude and baseline to a resonance scan.
///
/// Points are weighted by their binomial standard errors. `motion` fixes the
/// thermal distribution; the pulse is assumed to be a pi pulse for the fitted
/// Rabi frequency.
pub fn fit_spectrum(
    points: &[SpectrumPoint],
    motion: &MotionalModel,
    initial: SpectrumParams,
) -> Result<SpectrumFitResult> {
    if points.len() < 8 {
        return Err(invalid("points", "need at least 8 scan points"));
    }
    if points
        .iter()
        .any(|p| p.shots == 0 || !p.excitation.is_finite() || !p.detuning.is_finite())
    {
        return Err(invalid(
            "points",
            "every point needs shots > 0 and finite values",
        ));
    }
    motion.validate()?;
    if !(initial.rabi > 0.0) {
        return Err(invalid("initial.rabi", "must be positive"));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.excitation), hi.max(p.excitation))
        });
    if hi - lo <= 1e-12 {
        return Err(Error::DegenerateData(
            "excitation is flat across the scan".into(),
        ));
    }

    let problem = Problem {
        points,
        sigma: points
            .iter()
            .map(|p| binomial_variance(p.excitation, p.shots).sqrt())
            .collect(),
        profile: ThermalProfile::new(&PulseSpec::pi_pulse(1.0, 0.0)?, motion),
    };

    let start = initial.to_vector();
    let (p, iterations, method) = match levenberg_marquardt(&problem, start) {
        LmOutcome::Converged(p, it) => (p, it, FitMethod::LevenbergMarquardt),
        LmOutcome::Stalled(best, it) => {
            let (q, ok, nm_it) = nelder_mead(&problem, best);
            match (ok, levenberg_marquardt(&problem, q)) {
                (_, LmOutcome::Converged(p, it2)) => (p, it + nm_it + it2, FitMethod::NelderMead),
                (true, LmOutcome::Stalled(..)) => (q, it + nm_it, FitMethod::NelderMead),
                (false, LmOutcome::Stalled(last, _)) => {
                    return Err(Error::NonConvergence {
                        what: "fit_spectrum",
                        iterations: it + nm_it,
                        last: last.iter().copied().collect(),
                    })
                }
            }
        }
    };

    let (xmin, xmax) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), pt| {
            (a.min(pt.detuning), b.max(pt.detuning))
        });
    if !(p[0] >= xmin && p[0] <= xmax) {
        return Err(Error::DegenerateData(format!(
            "fitted centre {} lies outside the scan [{xmin}, {xmax}]",
            p[0]
        )));
    }
    if !(p[1] > 0.0) {
        return Err(Error::DegenerateData(
            "fitted Rabi frequency is not positive".into(),
        ));
    }

    let chi_square = problem.chi2(&p);
    let (jtj, _) = problem.normal_equations(&p);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::DegenerateData("parameters are not identifiable".into()))?;
    let mut covariance = [[0.0; 4]; 4];
    for (a, row) in covariance.iter_mut().enumerate() {
        for (b, c) in row.iter_mut().enumerate() {
            *c = cov[(a, b)];
        }
    }
    let stderr = Vector4::from_fn(|k, _| cov[(k, k)].max(0.0).sqrt());
    Ok(SpectrumFitResult {
        params: SpectrumParams::from_vector(&p),
        covariance,
        stderr: SpectrumParams::from_vector(&stderr),
        chi_square,
        reduced_chi_square: chi_square / (points.len() - 4) as f64,
        iterations,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::thermal_excitation;

    fn synthetic(
        truth: SpectrumParams,
        motion: &MotionalModel,
        n: usize,
        step: f64,
    ) -> Vec<SpectrumPoint> {
        (0..n)
            .map(|i| {
                let x = (i as f64 - (n as f64 - 1.0) / 2.0) * step;
                let pulse = PulseSpec::pi_pulse(truth.rabi, x - truth.center).unwrap();
                SpectrumPoint {
                    detuning: x,
                    excitation: truth.amplitude * thermal_excitation(&pulse, motion)
                        + truth.baseline,
                    shots: 100,
                }
            })
            .collect()
    }

    #[test]
    fn flat_data_is_degenerate() {
        let pts: Vec<_> = (0..20)
            .map(|i| SpectrumPoint {
                detuning: i as f64,
                excitation: 0.0,
                shots: 100,
            })
            .collect();
        let init = SpectrumParams {
            center: 10.0,
            rabi: 3.0,
            amplitude: 1.0,
            baseline: 0.0,
        };
        assert!(matches!(
            fit_spectrum(&pts, &MotionalModel::ground(), init),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let init = SpectrumParams {
            center: 0.0,
            rabi: 1.0,
            amplitude: 1.0,
            baseline: 0.0,
        };
        assert!(fit_spectrum(&[], &MotionalModel::ground(), init).is_err());
    }

    #[test]
    fn noise_free_recovery_from_guess() {
        let motion = MotionalModel::new(0.0, 0.0).unwrap();
        let truth = SpectrumParams {
            center: 1234.0,
            rabi: 2.0 * std::f64::consts::PI * 1000.0,
            amplitude: 0.9,
            baseline: 0.03,
        };
        let pts = synthetic(truth, &motion, 60, 2.0 * std::f64::consts::PI * 100.0);
        let guess = SpectrumParams::guess(&pts).unwrap();
        let fit = fit_spectrum(&pts, &motion, guess).unwrap();
        assert!((fit.params.center - truth.center).abs() < 1e-6 * truth.rabi);
        assert!((fit.params.rabi / truth.rabi - 1.0).abs() < 1e-6);
        assert!((fit.params.amplitude / truth.amplitude - 1.0).abs() < 1e-6);
        assert!((fit.params.baseline - truth.baseline).abs() < 1e-6);
    }
}
