use iontrack::analysis::{
    allan_deviation, fit_spectrum, octave_taus, position_statistics, AllanVariant, ForceReport,
    FrequencySample, FrequencySeries, SpectrumParams, SpectrumPoint,
};
use iontrack::atomphys::{
    equilibrium_positions, field_from_frequency, transition_frequency, transition_slope,
};
use iontrack::estimator::{g_forward, g_invert};
use iontrack::lineshape::{thermal_excitation, MotionalModel, PulseSpec, FWHM_CALIBRATED_ETA};
use iontrack::simulator::run_tracking;
use iontrack::{
    hz_to_angular, BreitRabiVariant, DriftModel, ExperimentTimeline, IonSpecies, TrapEnvironment,
    TwoPointConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn variant() -> impl Strategy<Value = BreitRabiVariant> {
    prop_oneof![
        Just(BreitRabiVariant::Stretched),
        Just(BreitRabiVariant::SingleLinear)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn breit_rabi_round_trip(b in 0.0f64..0.05, v in variant()) {
        let sp = IonSpecies::default().with_variant(v);
        let nu = transition_frequency(&sp, b).unwrap();
        let back = field_from_frequency(&sp, nu).unwrap();
        prop_assert!((back - b).abs() < 1e-15 + 1e-12 * b, "{b} -> {back}");
    }

    #[test]
    fn breit_rabi_monotone(b in 0.0f64..0.05, db in 1e-7f64..1e-3, v in variant()) {
        let sp = IonSpecies::default().with_variant(v);
        prop_assert!(transition_frequency(&sp, b + db).unwrap() > transition_frequency(&sp, b).unwrap());
        prop_assert!(transition_slope(&sp, b).unwrap() > 0.0);
    }

    #[test]
    fn g_map_round_trip(frac in -0.999f64..0.999, nbar in 0.0f64..120.0, kappa in 0.6f64..0.9) {
        let motion = MotionalModel::new(nbar, FWHM_CALIBRATED_ETA).unwrap();
        let cfg = TwoPointConfig::new(kappa, 50, PulseSpec::pi_pulse(1.0, 0.0).unwrap(), motion).unwrap();
        let d = frac * cfg.window_half_width();
        let inv = g_invert(g_forward(d, &cfg).unwrap(), &cfg).unwrap();
        prop_assert!(inv.in_window);
        prop_assert!((inv.delta - d).abs() < 1e-6);
    }

    #[test]
    fn g_map_odd(frac in 0.0f64..1.0, nbar in 0.0f64..120.0) {
        let cfg = TwoPointConfig::standard(1.0, MotionalModel::new(nbar, FWHM_CALIBRATED_ETA).unwrap()).unwrap();
        let d = frac * cfg.window_half_width();
        let (a, b) = (g_forward(d, &cfg).unwrap(), g_forward(-d, &cfg).unwrap());
        prop_assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn lineshape_symmetric_and_bounded(
        d in -10.0f64..10.0,
        nbar in 0.0f64..200.0,
        eta in 0.0f64..0.1,
    ) {
        let m = MotionalModel::new(nbar, eta).unwrap();
        let p = thermal_excitation(&PulseSpec::pi_pulse(1.0, d).unwrap(), &m);
        let q = thermal_excitation(&PulseSpec::pi_pulse(1.0, -d).unwrap(), &m);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - q).abs() < 1e-14);
    }

    #[test]
    fn thermal_weights_cover_distribution(nbar in 0.0f64..200.0) {
        let m = MotionalModel::new(nbar, 0.04).unwrap();
        let sum: f64 = m.thermal_weights().iter().sum();
        prop_assert!((1.0 - 1e-4..=1.0 + 1e-12).contains(&sum));
    }

    #[test]
    fn allan_offset_invariant(offset in -1e6f64..1e6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nus: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 100.0).collect();
        let series = |c: f64| {
            FrequencySeries::new(
                nus.iter()
                    .enumerate()
                    .map(|(i, nu)| FrequencySample { timestamp: 2.0 * i as f64, nu: nu + c, sigma: 1.0 })
                    .collect(),
            )
            .unwrap()
        };
        let (a, b) = (series(0.0), series(offset));
        let taus = octave_taus(&a);
        let ra = allan_deviation(&a, &taus, AllanVariant::Overlapping).unwrap();
        let rb = allan_deviation(&b, &taus, AllanVariant::Overlapping).unwrap();
        for (x, y) in ra.adev.iter().zip(&rb.adev) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn position_statistics_linear(c in -10.0f64..10.0) {
        let env = TrapEnvironment::reference();
        let sp = IonSpecies::default();
        let shifts = [(100.0, 30.0), (-250.0, 31.0), (7.0, 29.0)];
        let base = position_statistics(shifts, &env, &sp).unwrap();
        let scaled = position_statistics(shifts.iter().map(|(d, s)| (c * d, *s)), &env, &sp).unwrap();
        for (a, b) in base.z.iter().zip(&scaled.z) {
            prop_assert!((c * a - b).abs() <= 1e-15 * a.abs().max(1e-30) * c.abs().max(1.0));
        }
    }

    #[test]
    fn force_report_consistent(sz in 0.0f64..1e-8, t in 1e-3f64..1e4) {
        let r = ForceReport::from_stiffness(1.3e-13, sz, t).unwrap();
        prop_assert_eq!(r.sigma_f, r.k_z * r.sigma_z);
        prop_assert_eq!(r.sensitivity, r.sigma_f * t.sqrt());
    }
}

#[test]
fn g_strictly_increasing_on_window() {
    let cfg = TwoPointConfig::standard(1.0, MotionalModel::new(80.0, FWHM_CALIBRATED_ETA).unwrap())
        .unwrap();
    let edge = cfg.window_half_width();
    let g: Vec<f64> = (0..=10_000)
        .map(|k| g_forward(-edge + 2.0 * edge * k as f64 / 10_000.0, &cfg).unwrap())
        .collect();
    assert!(g.windows(2).all(|w| w[1] > w[0]));
}

fn energy(u: &[f64]) -> f64 {
    let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            e += 1.0 / (u[i] - u[j]).abs();
        }
    }
    e
}

#[test]
fn equilibrium_is_symmetric_minimum() {
    let env = TrapEnvironment::reference();
    let sp = IonSpecies::default();
    let l = iontrack::atomphys::length_scale(&env, &sp);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=10 {
        let z = equilibrium_positions(n, &env, &sp).unwrap();
        let u: Vec<f64> = z.iter().map(|x| x / l).collect();
        for i in 0..n {
            assert!((u[i] + u[n - 1 - i]).abs() < 1e-9, "n = {n}");
        }
        assert!(u.windows(2).all(|w| w[1] > w[0]));
        let e0 = energy(&u);
        for _ in 0..100 {
            let p: Vec<f64> = u
                .iter()
                .map(|x| x + 1e-3 * (rng.random::<f64>() - 0.5))
                .collect();
            assert!(energy(&p) > e0);
        }
    }
}

#[test]
fn tracking_is_deterministic() {
    let cfg = TwoPointConfig::standard(
        hz_to_angular(640.0),
        MotionalModel::new(80.0, FWHM_CALIBRATED_ETA).unwrap(),
    )
    .unwrap();
    let drift = DriftModel {
        random_walk: hz_to_angular(2.0),
        line_amplitude: hz_to_angular(3.0),
        seed: 5,
        ..DriftModel::linear(hz_to_angular(8.2))
    };
    let run =
        |seed| run_tracking(30, 1e10, &drift, &cfg, &ExperimentTimeline::default(), seed).unwrap();
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn spectrum_fit_noise_free_recovery() {
    let step_of = |rabi: f64| rabi * 0.06;
    for rabi_hz in [1e3, 25e3] {
        for nbar in [0.0, 80.0] {
            let rabi = hz_to_angular(rabi_hz);
            let motion = MotionalModel::new(nbar, FWHM_CALIBRATED_ETA).unwrap();
            let truth = SpectrumParams {
                center: 0.23 * rabi,
                rabi,
                amplitude: 0.92,
                baseline: 0.02,
            };
            let step = step_of(rabi);
            let pts: Vec<SpectrumPoint> = (0..80)
                .map(|i| {
                    let x = (i as f64 - 39.5) * step;
                    let p = thermal_excitation(
                        &PulseSpec::pi_pulse(rabi, truth.center - x).unwrap(),
                        &motion,
                    );
                    SpectrumPoint {
                        detuning: x,
                        excitation: truth.amplitude * p + truth.baseline,
                        shots: 100,
                    }
                })
                .collect();
            let fit = fit_spectrum(&pts, &motion, SpectrumParams::guess(&pts).unwrap()).unwrap();
            let p = fit.params;
            assert!(
                (p.center - truth.center).abs() < 1e-6 * rabi,
                "{rabi_hz} {nbar}: {p:?}"
            );
            assert!((p.rabi / rabi - 1.0).abs() < 1e-6, "{p:?}");
            assert!((p.amplitude / truth.amplitude - 1.0).abs() < 1e-6, "{p:?}");
            assert!((p.baseline / truth.baseline - 1.0).abs() < 1e-6, "{p:?}");
        }
    }
}

#[test]
fn flat_spectrum_is_degenerate() {
    let pts: Vec<SpectrumPoint> = (0..20)
        .map(|i| SpectrumPoint {
            detuning: i as f64 * 10.0,
            excitation: 0.04,
            shots: 100,
        })
        .collect();
    let init = SpectrumParams {
        center: 100.0,
        rabi: 30.0,
        amplitude: 0.5,
        baseline: 0.0,
    };
    assert!(matches!(
        fit_spectrum(&pts, &MotionalModel::ground(), init),
        Err(iontrack::Error::DegenerateData(_))
    ));
}
