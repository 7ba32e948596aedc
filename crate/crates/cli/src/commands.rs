use std::path::Path;

use iontrack::analysis::{
    allan_deviation, fit_spectrum, force_report, octave_taus, position_statistics, AllanResult,
    AllanVariant, ForceReport, FrequencySample, FrequencySeries, SpectrumFitResult, SpectrumParams,
    SpectrumPoint,
};
use iontrack::atomphys::{calibrate_gradient, frequency_position_slope};
use iontrack::estimator::analytic_sigma;
use iontrack::lineshape::{fwhm, PulseSpec, ThermalProfile};
use iontrack::simulator::{
    drift_correct, estimate_spread, run_tracking, run_voltage_scan, simulate_spectrum,
    TrackingRecord,
};
use iontrack::{angular_to_hz, hz_to_angular};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Output;

#[derive(Serialize)]
struct LineshapeRow {
    nbar: f64,
    detuning_over_rabi: f64,
    excitation: f64,
    fwhm_over_rabi: f64,
}

#[derive(Serialize)]
struct LineshapeCurve {
    nbar: f64,
    eta: f64,
    fwhm_over_rabi: f64,
}

pub fn lineshape(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let ls = &cfg.lineshape;
    if ls.points < 2 || !(ls.detuning_max_rabi > ls.detuning_min_rabi) {
        return Err(CliError::Config(
            "lineshape needs points >= 2 and detuning_max_rabi > detuning_min_rabi".into(),
        ));
    }
    if ls.nbar_values.is_empty() {
        return Err(CliError::Config("lineshape.nbar_values is empty".into()));
    }
    let pulse = PulseSpec::pi_pulse(1.0, 0.0)?;
    let mut rows = Vec::with_capacity(ls.points * ls.nbar_values.len());
    let mut curves = Vec::new();
    for &nbar in &ls.nbar_values {
        let motion = cfg.motion_with_nbar(nbar)?;
        let width = fwhm(&motion, &pulse)?;
        let profile = ThermalProfile::new(&pulse, &motion);
        let span = ls.detuning_max_rabi - ls.detuning_min_rabi;
        for i in 0..ls.points {
            let d = ls.detuning_min_rabi + span * i as f64 / (ls.points - 1) as f64;
            rows.push(LineshapeRow {
                nbar,
                detuning_over_rabi: d,
                excitation: profile.excitation(d),
                fwhm_over_rabi: width,
            });
        }
        curves.push(LineshapeCurve {
            nbar,
            eta: motion.eta,
            fwhm_over_rabi: width,
        });
    }
    out.table("lineshape", &rows)?;
    out.summary("lineshape", cfg, curves)?;
    Ok(())
}

/// One row of a scan file: probe offset from the scan reference, bright
/// counts and repetitions.
#[derive(Debug, Serialize, Deserialize)]
struct ScanRow {
    detuning_hz: f64,
    counts: u32,
    shots: u32,
}

pub fn spectrum(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let sc = &cfg.spectrum;
    if sc.points < 8 {
        return Err(CliError::Config(
            "spectrum.points must be at least 8".into(),
        ));
    }
    let pulse = PulseSpec::pi_pulse(hz_to_angular(sc.rabi_hz), 0.0)?;
    let mid = 0.5 * (sc.points as f64 - 1.0);
    let probes: Vec<f64> = (0..sc.points)
        .map(|i| hz_to_angular((i as f64 - mid) * sc.step_hz))
        .collect();
    let points = simulate_spectrum(
        hz_to_angular(sc.center_offset_hz),
        &pulse,
        &cfg.motion_model()?,
        &probes,
        sc.shots,
        &cfg.experiment_timeline()?,
        cfg.seed,
    )?;
    let rows: Vec<ScanRow> = points
        .iter()
        .map(|p| ScanRow {
            detuning_hz: angular_to_hz(p.detuning),
            counts: (p.excitation * f64::from(p.shots)).round() as u32,
            shots: p.shots,
        })
        .collect();
    out.table("spectrum", &rows)?;
    out.summary("spectrum", cfg, serde_json::json!({ "points": rows.len() }))?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(|e: csv::Error| CliError::Input {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct FitRow {
    detuning_hz: f64,
    excitation: f64,
    shots: u32,
    model: f64,
}

#[derive(Serialize)]
struct FitSummary {
    center_hz: f64,
    center_stderr_hz: f64,
    rabi_hz: f64,
    rabi_stderr_hz: f64,
    amplitude: f64,
    amplitude_stderr: f64,
    baseline: f64,
    baseline_stderr: f64,
    /// Order center, rabi, amplitude, baseline; frequency entries in Hz.
    covariance: [[f64; 4]; 4],
    chi_square: f64,
    reduced_chi_square: f64,
    iterations: usize,
    method: iontrack::analysis::FitMethod,
    points: usize,
}

impl FitSummary {
    fn new(fit: &SpectrumFitResult, points: usize) -> Self {
        let scale = [angular_to_hz(1.0), angular_to_hz(1.0), 1.0, 1.0];
        let mut covariance = fit.covariance;
        for (a, row) in covariance.iter_mut().enumerate() {
            for (b, c) in row.iter_mut().enumerate() {
                *c *= scale[a] * scale[b];
            }
        }
        Self {
            center_hz: angular_to_hz(fit.params.center),
            center_stderr_hz: angular_to_hz(fit.stderr.center),
            rabi_hz: angular_to_hz(fit.params.rabi),
            rabi_stderr_hz: angular_to_hz(fit.stderr.rabi),
            amplitude: fit.params.amplitude,
            amplitude_stderr: fit.stderr.amplitude,
            baseline: fit.params.baseline,
            baseline_stderr: fit.stderr.baseline,
            covariance,
            chi_square: fit.chi_square,
            reduced_chi_square: fit.reduced_chi_square,
            iterations: fit.iterations,
            method: fit.method,
            points,
        }
    }
}

pub fn fit_spectrum_file(cfg: &RunConfig, input: &Path, out: &Output) -> Result<(), CliError> {
    let rows: Vec<ScanRow> = read_rows(input)?;
    for (i, r) in rows.iter().enumerate() {
        if r.shots == 0 || r.counts > r.shots || !r.detuning_hz.is_finite() {
            return Err(CliError::Input {
                path: input.to_path_buf(),
                line: i as u64 + 2,
                message: "need shots > 0, counts <= shots and a finite detuning".into(),
            });
        }
    }
    let points: Vec<SpectrumPoint> = rows
        .iter()
        .map(|r| SpectrumPoint {
            detuning: hz_to_angular(r.detuning_hz),
            excitation: f64::from(r.counts) / f64::from(r.shots),
            shots: r.shots,
        })
        .collect();
    let motion = cfg.motion_model()?;
    let fit = fit_spectrum(&points, &motion, SpectrumParams::guess(&points)?)?;
    let profile = ThermalProfile::new(&PulseSpec::pi_pulse(fit.params.rabi, 0.0)?, &motion);
    let table: Vec<FitRow> = points
        .iter()
        .map(|p| FitRow {
            detuning_hz: angular_to_hz(p.detuning),
            excitation: p.excitation,
            shots: p.shots,
            model: fit.params.amplitude * profile.excitation(p.detuning - fit.params.center)
                + fit.params.baseline,
        })
        .collect();
    out.table("spectrum_fit", &table)?;
    out.summary("fit-spectrum", cfg, FitSummary::new(&fit, points.len()))?;
    Ok(())
}

#[derive(Serialize)]
struct TrackRow {
    timestamp_s: f64,
    applied_voltage_v: f64,
    nu0_used_hz: f64,
    delta_hat_hz: f64,
    nu_estimated_hz: f64,
    sigma_nu_hz: f64,
    true_nu_hz: f64,
    in_window: bool,
}

#[derive(Serialize)]
struct DisplacementRow {
    index: usize,
    timestamp_s: f64,
    voltage_v: f64,
    delta_nu_hz: f64,
    sigma_nu_hz: f64,
    sigma_nu_total_hz: f64,
    dz_m: f64,
    expected_dz_m: f64,
    sigma_z_m: f64,
    sigma_z_total_m: f64,
}

#[derive(Serialize)]
struct AllanSummary {
    taus_s: Vec<f64>,
    adev_hz: Vec<f64>,
    drift_rate_hz_per_s: f64,
    drift_sq_hz2_per_s4: f64,
    drift_sq_stderr_hz2_per_s4: f64,
    white_coefficient_hz2_s: f64,
    fit_residual: f64,
}

impl From<AllanResult> for AllanSummary {
    fn from(r: AllanResult) -> Self {
        let hz = angular_to_hz(1.0);
        Self {
            taus_s: r.taus,
            adev_hz: r.adev.iter().map(|a| a * hz).collect(),
            drift_rate_hz_per_s: r.fitted_drift_rate * hz,
            drift_sq_hz2_per_s4: r.drift_sq * hz * hz,
            drift_sq_stderr_hz2_per_s4: r.drift_sq_stderr * hz * hz,
            white_coefficient_hz2_s: r.white_coefficient * hz * hz,
            fit_residual: r.fit_residual,
        }
    }
}

#[derive(Serialize)]
struct TrackSummary {
    mode: &'static str,
    cycles: usize,
    lost_lock: bool,
    out_of_window: usize,
    rms_error_hz: f64,
    frequency_position_slope_hz_per_nm: f64,
    /// Zero-voltage measurements only.
    allan: Option<AllanSummary>,
    allan_error: Option<String>,
    mean_sigma_z_m: f64,
    force: ForceReport,
}

fn allan_of(record: &TrackingRecord) -> Result<AllanSummary, iontrack::Error> {
    let samples: Vec<FrequencySample> = record
        .samples
        .iter()
        .filter(|s| s.applied_voltage == 0.0)
        .map(|s| FrequencySample {
            timestamp: s.timestamp,
            nu: s.nu_estimated,
            sigma: s.sigma_nu,
        })
        .collect();
    let series = FrequencySeries::new(samples)?;
    let taus = octave_taus(&series);
    Ok(allan_deviation(&series, &taus, AllanVariant::Overlapping)?.into())
}

pub fn track(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let env = cfg.trap_environment()?;
    let sp = cfg.ion_species()?;
    let drift = cfg.drift_model()?;
    let tp = cfg.two_point_config()?;
    let timeline = cfg.experiment_timeline()?;
    let nu_start = cfg.initial_frequency()?;
    let scan = !cfg.voltage.schedule_v.is_empty();
    let record = if scan {
        run_voltage_scan(
            &cfg.voltage_schedule(),
            &env,
            &sp,
            &drift,
            &tp,
            &timeline,
            nu_start,
            cfg.seed,
        )?
    } else {
        run_tracking(
            cfg.tracking.cycles,
            nu_start,
            &drift,
            &tp,
            &timeline,
            cfg.seed,
        )?
    };

    let hz = angular_to_hz(1.0);
    let rows: Vec<TrackRow> = record
        .samples
        .iter()
        .map(|s| TrackRow {
            timestamp_s: s.timestamp,
            applied_voltage_v: s.applied_voltage,
            nu0_used_hz: s.nu0_used * hz,
            delta_hat_hz: s.delta_hat * hz,
            nu_estimated_hz: s.nu_estimated * hz,
            sigma_nu_hz: s.sigma_nu * hz,
            true_nu_hz: s.true_nu * hz,
            in_window: s.in_window,
        })
        .collect();
    out.table("tracking", &rows)?;

    let stats = if scan {
        let points = drift_correct(&record, &env, &sp)?;
        let table: Vec<DisplacementRow> = points
            .iter()
            .map(|p| DisplacementRow {
                index: p.index,
                timestamp_s: p.timestamp,
                voltage_v: p.voltage,
                delta_nu_hz: p.delta_nu * hz,
                sigma_nu_hz: p.sigma_nu * hz,
                sigma_nu_total_hz: p.sigma_nu_total * hz,
                dz_m: p.dz,
                expected_dz_m: env.displacement_for_voltage(&sp, p.voltage),
                sigma_z_m: p.sigma_z,
                sigma_z_total_m: p.sigma_z_total,
            })
            .collect();
        out.table("displacement", &table)?;
        position_statistics(points.iter().map(|p| (p.delta_nu, p.sigma_nu)), &env, &sp)?
    } else {
        let first = record.samples.first().map_or(0.0, |s| s.nu_estimated);
        position_statistics(
            record
                .samples
                .iter()
                .map(|s| (s.nu_estimated - first, s.sigma_nu)),
            &env,
            &sp,
        )?
    };

    let (allan, allan_error) = match allan_of(&record) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = TrackSummary {
        mode: if scan { "voltage_scan" } else { "tracking" },
        cycles: record.len(),
        lost_lock: record.lost_lock,
        out_of_window: record.samples.iter().filter(|s| !s.in_window).count(),
        rms_error_hz: record.rms_error() * hz,
        frequency_position_slope_hz_per_nm: frequency_position_slope(&env, &sp)? * hz * 1e-9,
        allan,
        allan_error,
        mean_sigma_z_m: stats.mean_sigma_z,
        force: force_report(
            stats.mean_sigma_z,
            &env,
            &sp,
            timeline.measurement_duration(),
        )?,
    };
    out.summary("track", cfg, summary)?;
    Ok(())
}

#[derive(Serialize)]
struct SensitivityRow {
    total_time_s: f64,
    window_fraction: f64,
    delta_over_rabi: f64,
    shots_per_side: u32,
    sigma_over_rabi: f64,
    sigma_over_rabi_analytic: f64,
    in_window_fraction: f64,
    trials: usize,
}

#[derive(Serialize)]
struct ScalingFit {
    window_fraction: f64,
    /// sigma / Omega = coefficient * T^(-1/2), T in s
    coefficient: f64,
    r_squared: f64,
}

// Least squares of y = c x with x = T^(-1/2).
fn scaling_fit(window_fraction: f64, rows: &[&SensitivityRow]) -> ScalingFit {
    let xs: Vec<f64> = rows.iter().map(|r| r.total_time_s.powf(-0.5)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sigma_over_rabi).collect();
    let c =
        xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c * x).powi(2)).sum();
    ScalingFit {
        window_fraction,
        coefficient: c,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
    }
}

pub fn sensitivity(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let sc = &cfg.sensitivity;
    if sc.total_times_s.is_empty() || sc.window_fractions.is_empty() {
        return Err(CliError::Config(
            "sensitivity needs total_times_s and window_fractions".into(),
        ));
    }
    if sc.seeds < 2 {
        return Err(CliError::Config(
            "sensitivity.seeds must be at least 2".into(),
        ));
    }
    let timeline = cfg.experiment_timeline()?;
    let rabi = hz_to_angular(cfg.pulse.rabi_hz);
    // Every cell draws from the same seed block.
    let start = cfg.seed.wrapping_mul(1 << 32);
    let seeds = start..start.saturating_add(sc.seeds);
    let mut rows = Vec::new();
    for &frac in &sc.window_fractions {
        if !(0.0..=1.0).contains(&frac) {
            return Err(CliError::Config(format!(
                "window fraction {frac} outside [0, 1]"
            )));
        }
        for &t in &sc.total_times_s {
            let shots = (t / timeline.rep_period / 2.0 * (1.0 + 1e-12)).floor();
            if !(shots >= 1.0) {
                return Err(CliError::Config(format!("total time {t} s gives no shots")));
            }
            let tp = cfg.two_point_with(rabi, shots as u32)?;
            let delta = frac * tp.window_half_width();
            let spread = estimate_spread(&tp, delta, seeds.clone(), &timeline)?;
            rows.push(SensitivityRow {
                total_time_s: t,
                window_fraction: frac,
                delta_over_rabi: delta / rabi,
                shots_per_side: tp.shots_per_side(),
                sigma_over_rabi: spread.std_dev / rabi,
                sigma_over_rabi_analytic: analytic_sigma(delta, &tp, tp.shots_per_side())? / rabi,
                in_window_fraction: spread.in_window_fraction,
                trials: spread.trials,
            });
        }
    }
    out.table("sensitivity", &rows)?;
    let fits: Vec<ScalingFit> = sc
        .window_fractions
        .iter()
        .map(|&f| {
            let sel: Vec<&SensitivityRow> =
                rows.iter().filter(|r| r.window_fraction == f).collect();
            scaling_fit(f, &sel)
        })
        .collect();
    out.summary("sensitivity", cfg, serde_json::json!({ "scaling": fits }))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct FrequencyRow {
    frequency_hz: f64,
}

#[derive(Serialize)]
struct IonRow {
    ion: usize,
    frequency_hz: f64,
    position_m: f64,
    field_t: f64,
}

pub fn calibrate(cfg: &RunConfig, input: &Path, out: &Output) -> Result<(), CliError> {
    let rows: Vec<FrequencyRow> = read_rows(input)?;
    let freqs: Vec<f64> = rows.iter().map(|r| hz_to_angular(r.frequency_hz)).collect();
    let cal = calibrate_gradient(&freqs, &cfg.trap_environment()?, &cfg.ion_species()?)?;
    let table: Vec<IonRow> = rows
        .iter()
        .zip(cal.positions.iter().zip(&cal.fields))
        .enumerate()
        .map(|(i, (r, (z, b)))| IonRow {
            ion: i,
            frequency_hz: r.frequency_hz,
            position_m: *z,
            field_t: *b,
        })
        .collect();
    out.table("calibration", &table)?;
    out.summary("calibrate", cfg, &cal)?;
    Ok(())
}
