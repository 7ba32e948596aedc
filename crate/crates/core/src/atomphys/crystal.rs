//! Linear ion strings: equilibrium positions and gradient calibration.

use super::{field_from_frequency, IonSpecies, TrapEnvironment};
use crate::constants::CODATA;
use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const MAX_IONS: usize = 32;
const MAX_NEWTON_STEPS: usize = 200;
const GRADIENT_TOL: f64 = 1e-12;

/// Natural length of an ion string, l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3), in metres.
pub fn length_scale(env: &TrapEnvironment, species: &IonSpecies) -> f64 {
    (CODATA.coulomb_coupling() / env.stiffness(species)).cbrt()
}

// Dimensionless energy sum u_i^2/2 + sum_{i<j} 1/|u_i - u_j|.
fn energy(u: &[f64]) -> f64 {
    let mut e = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        e += 0.5 * ui * ui;
        for &uj in &u[i + 1..] {
            e += 1.0 / (ui - uj).abs();
        }
    }
    e
}

fn gradient(u: &[f64]) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| {
        let mut g = u[i];
        for (j, &uj) in u.iter().enumerate() {
            if j != i {
                let d = u[i] - uj;
                g -= d.signum() / (d * d);
            }
        }
        g
    })
}

fn hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[(i, i)] += c;
                h[(i, j)] -= c;
            }
        }
    }
    h
}

fn strictly_sorted(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[0] < w[1])
}

/// Equilibrium positions (m, ascending) of `n` ions in a harmonic axial well.
///
/// Damped Newton iteration on the scaled force balance starting from a
/// uniform string; the scaled energy gradient norm is driven below 1e-12.
pub fn equilibrium_positions(
    n: usize,
    env: &TrapEnvironment,
    species: &IonSpecies,
) -> Result<Vec<f64>> {
    if n == 0 || n > MAX_IONS {
        return Err(invalid("n", format!("ion count must be in 1..={MAX_IONS}")));
    }
    env.validate()?;
    let l = length_scale(env, species);
    let scaled = scaled_equilibrium(n)?;
    Ok(scaled.into_iter().map(|u| u * l).collect())
}

/// Equilibrium positions in units of [`length_scale`].
pub(crate) fn scaled_equilibrium(n: usize) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let spacing = 2.018 * (n as f64).powf(-0.559);
    let centre = 0.5 * (n as f64 + 1.0);
    let mut u: Vec<f64> = (1..=n).map(|i| (i as f64 - centre) * spacing).collect();

    for _ in 0..MAX_NEWTON_STEPS {
        let g = gradient(&u);
        if g.norm() < GRADIENT_TOL {
            return Ok(u);
        }
        // I + weighted Laplacian: positive definite for any ordered string.
        let step = hessian(&u)
            .cholesky()
            .ok_or_else(|| Error::NonConvergence {
                what: "equilibrium_positions",
                iterations: 0,
                last: u.clone(),
            })?
            .solve(&(-&g));

        let e0 = energy(&u);
        let g0 = g.norm();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            // Near the minimum energy differences drop below rounding; the
            // gradient norm still discriminates.
            if strictly_sorted(&trial) && (energy(&trial) < e0 || gradient(&trial).norm() < g0) {
                u = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // Energy no longer resolvable; accept the full Newton step if it keeps order.
                let full: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
                if strictly_sorted(&full) {
                    u = full;
                }
                break;
            }
        }
    }
    if gradient(&u).norm() < GRADIENT_TOL {
        return Ok(u);
    }
    Err(Error::NonConvergence {
        what: "equilibrium_positions",
        iterations: MAX_NEWTON_STEPS,
        last: u,
    })
}

/// Straight-line fit of field versus equilibrium position for an ion string.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCalibration {
    /// T/m
    pub slope: f64,
    /// Standard error of the slope from the fit residuals; `None` for two ions.
    pub slope_stderr: Option<f64>,
    /// Field at z = 0 (T).
    pub intercept: f64,
    pub positions: Vec<f64>,
    pub fields: Vec<f64>,
    /// False when the deduced fields are not monotone along the string.
    pub monotone_fields: bool,
}

/// Deduce the axial gradient from the resonance frequencies of an ion string.
///
/// `frequencies[i]` belongs to the i-th ion counted from the most negative
/// position.
pub fn calibrate_gradient(
    frequencies: &[f64],
    env: &TrapEnvironment,
    species: &IonSpecies,
) -> Result<GradientCalibration> {
    let n = frequencies.len();
    if n < 2 {
        return Err(invalid("frequencies", "need at least two ions"));
    }
    let positions = equilibrium_positions(n, env, species)?;
    let fields = frequencies
        .iter()
        .map(|&nu| field_from_frequency(species, nu))
        .collect::<Result<Vec<_>>>()?;

    let nf = n as f64;
    let zm = positions.iter().sum::<f64>() / nf;
    let bm = fields.iter().sum::<f64>() / nf;
    let sxx: f64 = positions.iter().map(|z| (z - zm).powi(2)).sum();
    let sxy: f64 = positions
        .iter()
        .zip(&fields)
        .map(|(z, b)| (z - zm) * (b - bm))
        .sum();
    let slope = sxy / sxx;
    let intercept = bm - slope * zm;
    let slope_stderr = (n > 2).then(|| {
        let ssr: f64 = positions
            .iter()
            .zip(&fields)
            .map(|(z, b)| (b - intercept - slope * z).powi(2))
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    });
    let monotone_fields =
        fields.windows(2).all(|w| w[1] >= w[0]) || fields.windows(2).all(|w| w[1] <= w[0]);

    Ok(GradientCalibration {
        slope,
        slope_stderr,
        intercept,
        positions,
        fields,
        monotone_fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomphys::transition_frequency;

    #[test]
    fn single_ion_sits_at_centre() {
        let env = TrapEnvironment::reference();
        assert_eq!(
            equilibrium_positions(1, &env, &IonSpecies::default()).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn two_and_three_ion_analytic_cases() {
        // 4u^3 = 1 and u^3 = 5/4 from the force balance.
        let u2 = 0.25f64.cbrt();
        let u3 = 1.25f64.cbrt();
        let two = scaled_equilibrium(2).unwrap();
        assert!((two[0] + u2).abs() < 1e-12 && (two[1] - u2).abs() < 1e-12);
        let three = scaled_equilibrium(3).unwrap();
        assert!((three[0] + u3).abs() < 1e-12);
        assert!(three[1].abs() < 1e-12);
        assert!((three[2] - u3).abs() < 1e-12);
        assert!((u2 - 0.62996).abs() < 1e-5 && (u3 - 1.0772).abs() < 1e-4);
    }

    #[test]
    fn physical_units_use_length_scale() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let l = length_scale(&env, &sp);
        assert!(l > 10e-6 && l < 15e-6, "{l}");
        let z = equilibrium_positions(2, &env, &sp).unwrap();
        assert!((z[1] / l - 0.25f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn large_strings_converge() {
        for n in [8, 16, 32] {
            let u = scaled_equilibrium(n).unwrap();
            assert!(gradient(&u).norm() < GRADIENT_TOL);
            assert!(strictly_sorted(&u));
        }
    }

    #[test]
    fn ion_count_bounds() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        assert!(equilibrium_positions(0, &env, &sp).is_err());
        assert!(equilibrium_positions(33, &env, &sp).is_err());
    }

    #[test]
    fn calibration_round_trip_eight_ions() {
        let env = TrapEnvironment {
            offset_field: 1e-3,
            ..TrapEnvironment::reference()
        };
        let sp = IonSpecies::default();
        let z = equilibrium_positions(8, &env, &sp).unwrap();
        let freqs: Vec<f64> = z
            .iter()
            .map(|z| transition_frequency(&sp, 1e-3 + 19.07 * z).unwrap())
            .collect();
        let cal = calibrate_gradient(&freqs, &env, &sp).unwrap();
        assert!((cal.slope / 19.07 - 1.0).abs() < 1e-6, "{}", cal.slope);
        assert!(cal.monotone_fields);
    }

    #[test]
    fn equal_frequencies_give_zero_slope() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let nu = transition_frequency(&sp, 442e-6).unwrap();
        let cal = calibrate_gradient(&[nu, nu], &env, &sp).unwrap();
        assert!(cal.slope.abs() < 1e-9);
        assert!(cal.slope_stderr.is_none());
        assert!(calibrate_gradient(&[nu], &env, &sp).is_err());
    }

    #[test]
    fn non_monotone_fields_flagged() {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let f = |b: f64| transition_frequency(&sp, b).unwrap();
        let cal = calibrate_gradient(&[f(400e-6), f(500e-6), f(450e-6)], &env, &sp).unwrap();
        assert!(!cal.monotone_fields);
    }
}
