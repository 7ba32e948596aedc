use super::{IonSpecies, TrapEnvironment};
use crate::constants::CODATA;
use crate::error::{invalid, Error, Result};

/// Upper end of the field bracket searched by [`field_from_frequency`] (T).
const FIELD_BRACKET_MAX: f64 = 0.1;

struct ZeemanTerms {
    nuclear: f64,
    x: f64,
    half_a: f64,
    c: f64,
}

impl ZeemanTerms {
    fn new(species: &IonSpecies) -> Self {
        let hbar = CODATA.hbar();
        let electron = species.g_electron * CODATA.bohr_magneton;
        let nucleus = species.g_nucleus * CODATA.nuclear_magneton;
        Self {
            nuclear: nucleus / hbar,
            x: (electron - nucleus) / (hbar * species.hyperfine_constant),
            half_a: 0.5 * species.hyperfine_constant,
            c: species.breit_rabi.linear_coefficient(),
        }
    }

    fn frequency(&self, b: f64) -> f64 {
        let xb = self.x * b;
        self.nuclear * b
            + self.half_a * (1.0 + self.c * xb + xb * xb).sqrt()
            + self.half_a * (1.0 + xb * xb).sqrt()
    }

    fn slope(&self, b: f64) -> f64 {
        let xb = self.x * b;
        let r1 = (1.0 + self.c * xb + xb * xb).sqrt();
        let r2 = (1.0 + xb * xb).sqrt();
        self.nuclear + self.half_a * self.x * ((0.5 * self.c + xb) / r1 + xb / r2)
    }
}

fn check_field(b: f64) -> Result<()> {
    if b.is_nan() || b < 0.0 {
        return Err(Error::Domain {
            what: "transition_frequency (field must be >= 0)",
            value: b,
        });
    }
    Ok(())
}

/// Resonance frequency (rad/s) of |F=0> <-> |F=1, m_F=+1> at field `b` (T).
pub fn transition_frequency(species: &IonSpecies, b: f64) -> Result<f64> {
    check_field(b)?;
    Ok(ZeemanTerms::new(species).frequency(b))
}

/// Analytic derivative d(nu)/dB in rad/s per tesla.
pub fn transition_slope(species: &IonSpecies, b: f64) -> Result<f64> {
    check_field(b)?;
    Ok(ZeemanTerms::new(species).slope(b))
}

/// Field magnitude (T) at which the transition sits at angular frequency `nu`.
///
/// Bisection on the monotone forward map over [0, 0.1 T], then Newton
/// polishing. Frequencies below the zero-field splitting are rejected.
pub fn field_from_frequency(species: &IonSpecies, nu: f64) -> Result<f64> {
    let terms = ZeemanTerms::new(species);
    let f0 = terms.frequency(0.0);
    if nu.is_nan() || nu < f0 {
        return Err(Error::Domain {
            what: "field_from_frequency (below zero-field splitting)",
            value: nu,
        });
    }
    if nu == f0 {
        return Ok(0.0);
    }
    let mut hi = FIELD_BRACKET_MAX;
    if nu > terms.frequency(hi) {
        return Err(Error::Domain {
            what: "field_from_frequency (above 0.1 T bracket)",
            value: nu,
        });
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if terms.frequency(mid) < nu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = 0.5 * (lo + hi);
    for _ in 0..3 {
        let step = (terms.frequency(b) - nu) / terms.slope(b);
        let next = (b - step).clamp(lo, hi);
        if next == b {
            break;
        }
        b = next;
    }
    Ok(b)
}

/// Position sensitivity d(nu)/dz = d(nu)/dB * dB/dz at the offset field (rad/s per m).
pub fn frequency_position_slope(env: &TrapEnvironment, species: &IonSpecies) -> Result<f64> {
    Ok(transition_slope(species, env.offset_field)? * env.gradient)
}

/// Linearized position change (m) corresponding to a resonance shift `delta_nu` (rad/s).
pub fn frequency_shift_to_position(
    delta_nu: f64,
    env: &TrapEnvironment,
    species: &IonSpecies,
) -> Result<f64> {
    if env.gradient == 0.0 {
        return Err(invalid(
            "gradient",
            "position encoding needs a nonzero gradient",
        ));
    }
    Ok(delta_nu / frequency_position_slope(env, species)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomphys::BreitRabiVariant;
    use crate::constants::hz_to_angular;

    fn yb() -> IonSpecies {
        IonSpecies::ytterbium_171()
    }

    #[test]
    fn zero_field_gives_hyperfine_constant() {
        let sp = yb();
        assert_eq!(
            transition_frequency(&sp, 0.0).unwrap(),
            sp.hyperfine_constant
        );
        assert_eq!(
            field_from_frequency(&sp, sp.hyperfine_constant).unwrap(),
            0.0
        );
    }

    #[test]
    fn negative_field_and_low_frequency_rejected() {
        let sp = yb();
        assert!(matches!(
            transition_frequency(&sp, -1e-9),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            field_from_frequency(&sp, sp.hyperfine_constant - 1.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn golden_frequency_at_offset_field() {
        // 40-digit evaluation of the same closed form, CODATA 2018 constants.
        let nu = transition_frequency(&yb(), 442.09e-6).unwrap();
        let expected = hz_to_angular(12_649_012_144.629_984);
        assert!((nu / expected - 1.0).abs() < 1e-13, "{nu}");
        let alt = transition_frequency(
            &yb().with_variant(BreitRabiVariant::SingleLinear),
            442.09e-6,
        )
        .unwrap();
        let expected_alt = hz_to_angular(12_645_917_580.737_515);
        assert!((alt / expected_alt - 1.0).abs() < 1e-13, "{alt}");
    }

    #[test]
    fn slope_matches_central_difference() {
        for variant in [BreitRabiVariant::Stretched, BreitRabiVariant::SingleLinear] {
            let sp = yb().with_variant(variant);
            for b in [0.0_f64, 10e-6, 442.09e-6, 5e-3] {
                let h = 1e-7;
                let lo = transition_frequency(&sp, (b - h).max(0.0)).unwrap();
                let hi = transition_frequency(&sp, b + h).unwrap();
                let fd = (hi - lo) / (b + h - (b - h).max(0.0));
                let an = transition_slope(&sp, b).unwrap();
                assert!(
                    (fd / an - 1.0).abs() < 1e-6,
                    "{variant:?} B={b}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn slope_near_fourteen_gigahertz_per_tesla() {
        let s = transition_slope(&yb(), 442.09e-6).unwrap();
        let ghz_per_t = s / hz_to_angular(1e9);
        assert!((ghz_per_t - 14.0).abs() < 0.05, "{ghz_per_t}");
    }

    #[test]
    fn round_trip_small_fields() {
        let sp = yb();
        for b in [10e-6, 100e-6, 442.09e-6] {
            let nu = transition_frequency(&sp, b).unwrap();
            let back = field_from_frequency(&sp, nu).unwrap();
            assert!((back - b).abs() < 1e-15, "{b} -> {back}");
        }
    }

    #[test]
    fn position_shift_for_266_hz_is_one_nanometre() {
        let env = TrapEnvironment::reference();
        let dz = frequency_shift_to_position(hz_to_angular(266.0), &env, &yb()).unwrap();
        assert!((dz / 1e-9 - 1.0).abs() < 0.01, "{dz:e}");
        assert_eq!(frequency_shift_to_position(0.0, &env, &yb()).unwrap(), 0.0);
    }

    #[test]
    fn zero_gradient_is_an_error() {
        let env = TrapEnvironment {
            gradient: 0.0,
            ..TrapEnvironment::reference()
        };
        assert!(frequency_shift_to_position(1.0, &env, &yb()).is_err());
    }
}
