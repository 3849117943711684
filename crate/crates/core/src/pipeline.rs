//! Amplitude and detuning sweeps, checkpointing and scale-factor calibration.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{decoherence_envelope, simulate_cr_rabi_with, RabiTrace, SimOptions};
use crate::error::{Error, Result};
use crate::fitting::{jeff_from_traces, JeffCurve, JeffPoint, MIN_LINEAR_POINTS};
use crate::hilbert::Mode;
use crate::model::DeviceParams;
use crate::perturbation::{cr_coefficients, mu_closed_form, validity_check, CrMethod, PoleGuard};

pub const MIN_AMPLITUDES: usize = 6;

/// Everything about a sweep except the device and the detunings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub amplitudes: Vec<f64>,
    pub durations_us: Vec<f64>,
    pub seed: u64,
    /// Standard deviation of Gaussian noise on `p_excited` (clipped to [0, 1]).
    pub readout_noise: f64,
    /// `(t1, t2)` in us when the decoherence envelope is applied.
    pub decoherence: Option<(f64, f64)>,
    pub pole_guard: f64,
}

impl SweepSettings {
    fn validate(&self) -> Result<()> {
        if self.amplitudes.len() < MIN_AMPLITUDES {
            return Err(Error::TooFewPoints { found: self.amplitudes.len(), required: MIN_AMPLITUDES });
        }
        if self.amplitudes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("amplitudes must be ascending".into()));
        }
        Ok(())
    }

    fn guard(&self) -> PoleGuard {
        PoleGuard(self.pole_guard)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one simulated trace, independent of evaluation order.
pub fn point_seed(root: u64, delta: f64, amplitude: f64, control_state: u8) -> u64 {
    [delta.to_bits(), amplitude.to_bits(), control_state as u64].iter().fold(mix(root), |h, &x| mix(h ^ x))
}

fn noisy(mut trace: RabiTrace, sigma: f64, seed: u64) -> RabiTrace {
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for p in trace.p_excited.iter_mut() {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    trace
}

/// One trace with the sweep's decoherence and readout noise applied.
pub fn simulate_point(
    device: &DeviceParams,
    amplitude: f64,
    control: u8,
    settings: &SweepSettings,
) -> Result<RabiTrace> {
    let trace =
        simulate_cr_rabi_with(device, amplitude, &settings.durations_us, control == 1, &SimOptions::default())?;
    let trace = match settings.decoherence {
        Some((t1, t2)) => decoherence_envelope(&trace, t1, t2)?,
        None => trace,
    };
    let seed = point_seed(settings.seed, device.detuning(), amplitude, control);
    Ok(noisy(trace, settings.readout_noise, seed))
}

/// J_eff curve and the traces behind it at one detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSweep {
    pub curve: JeffCurve,
    /// Control-ground and control-excited trace per amplitude, in amplitude order.
    pub traces: Vec<(RabiTrace, RabiTrace)>,
}

/// Builds a curve from trace pairs; per-point fit failures become status
/// entries. Fails when fewer than four points have a finite J_eff.
pub fn curve_from_traces(delta: f64, pairs: &[(RabiTrace, RabiTrace)]) -> Result<JeffCurve> {
    let points: Vec<JeffPoint> = pairs
        .par_iter()
        .map(|(g, e)| {
            jeff_from_traces(g, e).unwrap_or_else(|err| JeffPoint {
                amplitude: g.amplitude,
                f0: f64::NAN,
                f0_ci95: f64::NAN,
                fpi: f64::NAN,
                fpi_ci95: f64::NAN,
                jeff: f64::NAN,
                jeff_ci95: f64::NAN,
                status: format!("fit-failed:{}", err.category().as_str()),
            })
        })
        .collect();
    let valid: Vec<JeffPoint> = points.iter().filter(|p| p.jeff.is_finite()).cloned().collect();
    if valid.len() < MIN_LINEAR_POINTS {
        return Err(Error::TooFewPoints { found: valid.len(), required: MIN_LINEAR_POINTS });
    }
    let mut curve = JeffCurve::from_points(delta, valid);
    // keep failed points visible in the output, after the fitted ones
    curve.points.extend(points.into_iter().filter(|p| !p.jeff.is_finite()));
    Ok(curve)
}

/// Simulates both control states at every amplitude and fits J_eff.
pub fn amplitude_sweep(device: &DeviceParams, settings: &SweepSettings) -> Result<AmplitudeSweep> {
    settings.validate()?;
    let jobs: Vec<(f64, u8)> = settings.amplitudes.iter().flat_map(|&a| [(a, 0u8), (a, 1u8)]).collect();
    let traces: Vec<RabiTrace> =
        jobs.par_iter().map(|&(a, c)| simulate_point(device, a, c, settings)).collect::<Result<_>>()?;
    let mut it = traces.into_iter();
    let mut pairs = Vec::with_capacity(settings.amplitudes.len());
    while let (Some(g), Some(e)) = (it.next(), it.next()) {
        pairs.push((g, e));
    }
    let curve = curve_from_traces(device.detuning(), &pairs)?;
    Ok(AmplitudeSweep { curve, traces: pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuRow {
    pub delta: f64,
    pub slope: Option<f64>,
    pub slope_ci95: Option<f64>,
    pub prefix_len: Option<usize>,
    /// Closed-form value; a pure function of the device.
    pub mu_theory: Option<f64>,
    pub mu_numeric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCurve {
    pub rows: Vec<MuRow>,
    /// Measured slope per unit theory, when it can be determined.
    pub scale_factor: Option<ScaleFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub delta: f64,
    pub level: f64,
    pub level_ci95: f64,
    pub sign: f64,
    pub plateau_len: usize,
    /// Level above `J` by more than its CI.
    pub exceeds_j: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationCurve {
    pub rows: Vec<SaturationRow>,
    pub j_mhz: f64,
    /// Detunings of the closed-form poles, `0` and `-anh2`.
    pub reference_deltas: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningSweep {
    pub sweeps: Vec<AmplitudeSweep>,
    pub mu: MuCurve,
    pub saturation: SaturationCurve,
    /// `(delta, reason)` for detunings skipped inside pole windows.
    pub excluded: Vec<(f64, String)>,
    /// `(delta, reason)` for detunings whose sweep failed.
    pub failures: Vec<(f64, String)>,
}

impl DetuningSweep {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (d, why) in &self.excluded {
            out.push(format!("excluded delta={d}: {why}"));
        }
        for (d, why) in &self.failures {
            out.push(format!("failed delta={d}: {why}"));
        }
        for s in &self.sweeps {
            if s.curve.status != "ok" {
                out.push(format!("curve delta={}: {}", s.curve.delta, s.curve.status));
            }
        }
        for r in self.saturation.rows.iter().filter(|r| r.exceeds_j) {
            out.push(format!(
                "saturation delta={}: {} +/- {} MHz exceeds J={}",
                r.delta, r.level, r.level_ci95, self.saturation.j_mhz
            ));
        }
        match &self.mu.scale_factor {
            Some(s) => out.push(format!("scale factor {} +/- {} (rms residual {})", s.scale, s.scale_ci95, s.residual_rms)),
            None => out.push("scale factor undetermined".into()),
        }
        out
    }
}

/// Traces only: fits are recomputed on load (their non-finite CIs do not
/// survive JSON).
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    traces: Vec<(RabiTrace, RabiTrace)>,
}

fn checkpoint_path(dir: &Path, delta: f64) -> PathBuf {
    dir.join(format!("delta_{delta}.json"))
}

fn fingerprint(device: &DeviceParams, settings: &SweepSettings) -> Result<String> {
    Ok(serde_json::to_string(&(device, settings))?)
}

fn load_checkpoint(path: &Path, fingerprint: &str) -> Option<Vec<(RabiTrace, RabiTrace)>> {
    let text = std::fs::read_to_string(path).ok()?;
    let cp: Checkpoint = serde_json::from_str(&text).ok()?;
    (cp.fingerprint == fingerprint).then_some(cp.traces)
}

fn save_checkpoint(path: &Path, fingerprint: String, sweep: &AmplitudeSweep) -> Result<()> {
    let cp = Checkpoint { fingerprint, traces: sweep.traces.clone() };
    std::fs::write(path, serde_json::to_vec(&cp)?).map_err(|e| Error::io(path, e))
}

/// One amplitude sweep per detuning (moving Q1), assembled into the slope
/// and saturation curves. With `checkpoint_dir`, finished detunings are
/// stored and reused by a later call with identical inputs.
pub fn detuning_sweep(
    base: &DeviceParams,
    deltas: &[f64],
    settings: &SweepSettings,
    checkpoint_dir: Option<&Path>,
) -> Result<DetuningSweep> {
    settings.validate()?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut excluded = Vec::new();
    let mut active = Vec::new();
    for &delta in deltas {
        let report = validity_check(&base.with_detuning(delta), settings.guard());
        if report.near_pole() {
            excluded.push((delta, report.flag_string()));
        } else {
            active.push(delta);
        }
    }

    let results: Vec<(f64, Result<AmplitudeSweep>)> = active
        .par_iter()
        .map(|&delta| {
            let device = base.with_detuning(delta);
            let run = || -> Result<AmplitudeSweep> {
                let fp = fingerprint(&device, settings)?;
                let path = checkpoint_dir.map(|d| checkpoint_path(d, delta));
                if let Some(traces) = path.as_deref().and_then(|p| load_checkpoint(p, &fp)) {
                    return Ok(AmplitudeSweep { curve: curve_from_traces(delta, &traces)?, traces });
                }
                let sweep = amplitude_sweep(&device, settings)?;
                if let Some(p) = path {
                    save_checkpoint(&p, fp, &sweep)?;
                }
                Ok(sweep)
            };
            (delta, run())
        })
        .collect();

    let mut sweeps = Vec::new();
    let mut failures = Vec::new();
    for (delta, r) in results {
        match r {
            Ok(s) => sweeps.push(s),
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => failures.push((delta, e.to_string())),
        }
    }

    let guard = settings.guard();
    let rows: Vec<MuRow> = sweeps
        .iter()
        .map(|s| {
            let device = base.with_detuning(s.curve.delta);
            MuRow {
                delta: s.curve.delta,
                slope: s.curve.linear.map(|l| l.slope),
                slope_ci95: s.curve.linear.map(|l| l.slope_ci95),
                prefix_len: s.curve.linear.map(|l| l.prefix_len),
                mu_theory: mu_closed_form(&device, guard).ok(),
                mu_numeric: cr_coefficients(&device, CrMethod::Numeric(Mode::Q2), guard).ok().map(|t| t.mu),
            }
        })
        .collect();
    let usable: Vec<&MuRow> = rows.iter().filter(|r| r.slope.is_some() && r.mu_theory.is_some()).collect();
    let scale_factor = if usable.len() >= 2 {
        let m: Vec<f64> = usable.iter().map(|r| r.slope.unwrap()).collect();
        let t: Vec<f64> = usable.iter().map(|r| r.mu_theory.unwrap()).collect();
        let s: Vec<f64> = usable.iter().map(|r| r.slope_ci95.unwrap() / 1.96).collect();
        calibrate_scale_factor(&m, &t, Some(&s)).ok()
    } else {
        None
    };

    let j = base.coupling_j;
    let saturation = SaturationCurve {
        rows: sweeps
            .iter()
            .filter_map(|s| {
                s.curve.saturation.map(|sat| SaturationRow {
                    delta: s.curve.delta,
                    level: sat.level,
                    level_ci95: sat.level_ci95,
                    sign: sat.sign,
                    plateau_len: sat.len,
                    exceeds_j: sat.level > j + sat.level_ci95,
                })
            })
            .collect(),
        j_mhz: j,
        reference_deltas: [0.0, -base.anh2],
    };

    Ok(DetuningSweep { sweeps, mu: MuCurve { rows, scale_factor }, saturation, excluded, failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub scale: f64,
    pub scale_ci95: f64,
    pub residual_rms: f64,
}

/// Weighted least-squares `s` minimizing `sum w (measured - s theory)^2`,
/// with `w = 1 / sigma^2` when uncertainties are given (zero or non-finite
/// sigmas fall back to equal weights).
pub fn calibrate_scale_factor(measured: &[f64], theory: &[f64], sigma: Option<&[f64]>) -> Result<ScaleFit> {
    let n = measured.len();
    if n != theory.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidParameter("measured, theory and sigma must have equal lengths".into()));
    }
    if n < 2 {
        return Err(Error::TooFewPoints { found: n, required: 2 });
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.iter().all(|&x| x > 0.0 && x.is_finite()) => s.iter().map(|x| 1.0 / (x * x)).collect(),
        _ => vec![1.0; n],
    };
    let stt: f64 = theory.iter().zip(&w).map(|(t, w)| w * t * t).sum();
    if stt == 0.0 {
        return Err(Error::DegenerateTheory);
    }
    let smt: f64 = measured.iter().zip(theory).zip(&w).map(|((m, t), w)| w * m * t).sum();
    let scale = smt / stt;
    let resid: Vec<f64> = measured.iter().zip(theory).map(|(m, t)| m - scale * t).collect();
    let wrss: f64 = resid.iter().zip(&w).map(|(r, w)| w * r * r).sum();
    let scale_ci95 = 1.96 * (wrss / (n - 1) as f64 / stt).sqrt();
    let residual_rms = (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(ScaleFit { scale, scale_ci95, residual_rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> DeviceParams {
        DeviceParams::from_detuning(4349.0, -78.0, -347.0, -360.0, 1.08).unwrap()
    }

    fn settings(amplitudes: Vec<f64>) -> SweepSettings {
        SweepSettings {
            amplitudes,
            durations_us: (0..=200).map(|k| k as f64 * 0.02).collect(),
            seed: 11,
            readout_noise: 0.0,
            decoherence: None,
            pole_guard: 1.0,
        }
    }

    #[test]
    fn seeds_depend_on_every_key() {
        let s = point_seed(1, -78.0, 5.0, 0);
        assert_eq!(s, point_seed(1, -78.0, 5.0, 0));
        assert_ne!(s, point_seed(2, -78.0, 5.0, 0));
        assert_ne!(s, point_seed(1, -80.0, 5.0, 0));
        assert_ne!(s, point_seed(1, -78.0, 5.5, 0));
        assert_ne!(s, point_seed(1, -78.0, 5.0, 1));
    }

    #[test]
    fn zero_amplitudes_give_zero_jeff() {
        let sweep = amplitude_sweep(&device(), &settings(vec![0.0; 6])).unwrap();
        assert!(sweep.curve.points.iter().all(|p| p.jeff == 0.0));
    }

    #[test]
    fn too_few_amplitudes() {
        assert!(matches!(
            amplitude_sweep(&device(), &settings(vec![1.0, 2.0, 3.0])),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn noise_is_reproducible() {
        let mut s = settings(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        s.readout_noise = 0.05;
        let a = amplitude_sweep(&device(), &s).unwrap();
        let b = amplitude_sweep(&device(), &s).unwrap();
        assert_eq!(a, b);
        assert!(a.traces[0].0.p_excited.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn pole_windows_are_excluded() {
        let s = settings(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        let out = detuning_sweep(&device(), &[0.0, 360.0, 0.5], &s, None).unwrap();
        assert_eq!(out.excluded.len(), 3);
        assert!(out.sweeps.is_empty());
        assert!(out.excluded[0].1.contains("Delta=0"));
    }

    #[test]
    fn checkpoints_resume() {
        let dir = tempfile::tempdir().unwrap();
        let s = settings(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        let first = detuning_sweep(&device(), &[-78.0], &s, Some(dir.path())).unwrap();
        assert!(dir.path().join("delta_-78.json").exists());
        let second = detuning_sweep(&device(), &[-78.0], &s, Some(dir.path())).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn scale_factor() {
        let theory = [0.01, -0.02, 0.03];
        let measured: Vec<f64> = theory.iter().map(|t| 2.0 * t).collect();
        let fit = calibrate_scale_factor(&measured, &theory, None).unwrap();
        assert_eq!(fit.scale, 2.0);
        assert!(matches!(calibrate_scale_factor(&[1.0, 2.0], &[0.0, 0.0], None), Err(Error::DegenerateTheory)));
        assert!(calibrate_scale_factor(&[1.0], &[1.0], None).is_err());
    }
}
