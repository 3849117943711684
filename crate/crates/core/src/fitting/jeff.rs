use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::sinusoid::{fit_or_flat, SinusoidFit, Z95};
use crate::dynamics::RabiTrace;
use crate::error::{Error, Result};

/// Coefficient of determination a linear-regime prefix must keep.
pub const R2_THRESHOLD: f64 = 0.995;
pub const MIN_LINEAR_POINTS: usize = 4;
/// Plateau membership: within this fraction of the running maximum.
pub const PLATEAU_FRACTION: f64 = 0.9;
pub const MIN_PLATEAU_POINTS: usize = 3;

/// Effective coupling at one drive amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeffPoint {
    pub amplitude: f64,
    /// Signed Rabi frequency with the control in ground.
    pub f0: f64,
    pub f0_ci95: f64,
    /// Signed Rabi frequency with the control excited.
    pub fpi: f64,
    pub fpi_ci95: f64,
    pub jeff: f64,
    pub jeff_ci95: f64,
    /// `ok`, or `;`-separated problems such as `no-oscillation:0`.
    pub status: String,
}

impl JeffPoint {
    pub fn sigma(&self) -> f64 {
        self.jeff_ci95 / Z95
    }
}

/// `(f_pi - f_0) / 2` from signed frequencies, with the two frequency
/// uncertainties added in quadrature and halved.
pub fn compute_jeff(fit_pi: &SinusoidFit, fit_0: &SinusoidFit) -> JeffPoint {
    let (fpi, f0) = (fit_pi.signed_frequency(), fit_0.signed_frequency());
    let (cpi, c0) = (fit_pi.ci95.frequency, fit_0.ci95.frequency);
    let mut status = Vec::new();
    if fit_0.is_flat() {
        status.push("no-oscillation:0");
    }
    if fit_pi.is_flat() {
        status.push("no-oscillation:1");
    }
    JeffPoint {
        amplitude: f64::NAN,
        f0,
        f0_ci95: c0,
        fpi,
        fpi_ci95: cpi,
        jeff: 0.5 * (fpi - f0),
        jeff_ci95: 0.5 * cpi.hypot(c0),
        status: if status.is_empty() { "ok".into() } else { status.join(";") },
    }
}

/// Sense of the target rotation, `+1` or `-1`, from its rotating-frame
/// Bloch `y`: a positive Rabi frequency drives `y = -sin(2 pi f t)`.
pub fn rotation_sense(times: &[f64], target_y: &[f64], frequency: f64) -> f64 {
    let s: f64 = times.iter().zip(target_y).map(|(&t, &y)| -y * (TAU * frequency * t).sin()).sum();
    if s < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Fits the `p_excited` column; the rotation sense is taken from `target_y`
/// when the trace carries it.
pub fn fit_trace(trace: &RabiTrace) -> Result<SinusoidFit> {
    trace.validate()?;
    let mut fit = fit_or_flat(&trace.durations_us, &trace.p_excited)?;
    if let (Some(y), false) = (&trace.target_y, fit.is_flat()) {
        fit.rotation = rotation_sense(&trace.durations_us, y, fit.frequency);
    }
    Ok(fit)
}

/// J_eff at one amplitude from the control-ground and control-excited traces.
pub fn jeff_from_traces(trace_0: &RabiTrace, trace_pi: &RabiTrace) -> Result<JeffPoint> {
    if trace_0.control_state != 0 || trace_pi.control_state != 1 {
        return Err(Error::InvalidParameter("expected control states 0 and 1".into()));
    }
    let mut p = compute_jeff(&fit_trace(trace_pi)?, &fit_trace(trace_0)?);
    p.amplitude = trace_0.amplitude;
    Ok(p)
}

/// Weights `1 / sigma^2`; infinite sigma gives weight 0. If any finite sigma is
/// zero, all finite points are weighted equally.
fn weights(points: &[JeffPoint]) -> Vec<f64> {
    let sig: Vec<f64> = points.iter().map(JeffPoint::sigma).collect();
    let equal = sig.iter().any(|&s| s == 0.0 || s.is_nan());
    sig.iter()
        .map(|&s| {
            if s.is_infinite() {
                0.0
            } else if equal {
                1.0
            } else {
                1.0 / (s * s)
            }
        })
        .collect()
}

fn t975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// MHz of J_eff per unit amplitude.
    pub slope: f64,
    pub slope_ci95: f64,
    /// Number of leading points in the regime.
    pub prefix_len: usize,
    pub r_squared: f64,
}

fn through_origin(points: &[JeffPoint], w: &[f64]) -> Option<LinearFit> {
    let sxx: f64 = points.iter().zip(w).map(|(p, w)| w * p.amplitude * p.amplitude).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().zip(w).map(|(p, w)| w * p.amplitude * p.jeff).sum();
    let slope = sxy / sxx;
    let sw: f64 = w.iter().sum();
    let mean = points.iter().zip(w).map(|(p, w)| w * p.jeff).sum::<f64>() / sw;
    let ss_res: f64 = points.iter().zip(w).map(|(p, w)| w * (p.jeff - slope * p.amplitude).powi(2)).sum();
    let ss_tot: f64 = points.iter().zip(w).map(|(p, w)| w * (p.jeff - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let dof = points.len() - 1;
    let slope_ci95 = t975(dof) * (ss_res / dof as f64 / sxx).sqrt();
    Some(LinearFit { slope, slope_ci95, prefix_len: points.len(), r_squared })
}

/// Through-origin weighted fit over the longest amplitude prefix (at least
/// four points) that keeps R^2 >= 0.995. Prefixes are grown from four and the
/// scan stops at the first failure, so later points never move the result.
pub fn fit_linear_regime(points: &[JeffPoint]) -> Result<LinearFit> {
    let not_found = || Error::RegimeNotFound { min_points: MIN_LINEAR_POINTS, threshold: R2_THRESHOLD };
    if points.len() < MIN_LINEAR_POINTS {
        return Err(not_found());
    }
    if points.windows(2).any(|w| w[1].amplitude < w[0].amplitude) {
        return Err(Error::InvalidParameter("points must be sorted by amplitude".into()));
    }
    let w = weights(points);
    let mut best = None;
    for k in MIN_LINEAR_POINTS..=points.len() {
        match through_origin(&points[..k], &w[..k]) {
            Some(fit) if fit.r_squared >= R2_THRESHOLD => best = Some(fit),
            _ => break,
        }
    }
    best.ok_or_else(not_found)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    /// Weighted mean of `|jeff|` over the plateau, MHz.
    pub level: f64,
    pub level_ci95: f64,
    /// Sign of J_eff on the plateau.
    pub sign: f64,
    /// Index of the first plateau point.
    pub start: usize,
    pub len: usize,
}

/// Saturation level beyond the linear regime (or over all points when no
/// regime is found).
pub fn fit_saturation(points: &[JeffPoint]) -> Result<SaturationFit> {
    let regime_end = match fit_linear_regime(points) {
        Ok(fit) => fit.prefix_len,
        Err(Error::RegimeNotFound { .. }) => 0,
        Err(e) => return Err(e),
    };
    fit_saturation_after(points, regime_end)
}

/// Plateau = trailing points whose `|jeff|` stays within 10% of the running
/// maximum, scanning down from the largest amplitude.
pub fn fit_saturation_after(points: &[JeffPoint], regime_end: usize) -> Result<SaturationFit> {
    let tail = points.get(regime_end..).unwrap_or(&[]);
    if tail.len() < MIN_PLATEAU_POINTS {
        return Err(Error::NoPlateau(tail.len()));
    }
    let mut running = 0.0f64;
    let mut len = 0;
    for p in tail.iter().rev() {
        let v = p.jeff.abs();
        running = running.max(v);
        if v < PLATEAU_FRACTION * running {
            break;
        }
        len += 1;
    }
    if len < MIN_PLATEAU_POINTS {
        return Err(Error::NoPlateau(len));
    }
    let start = points.len() - len;
    let set = &points[start..];
    let mut w = weights(set);
    if w.iter().all(|&x| x == 0.0) {
        w.iter_mut().for_each(|x| *x = 1.0);
    }
    let sw: f64 = w.iter().sum();
    let level = set.iter().zip(&w).map(|(p, w)| w * p.jeff.abs()).sum::<f64>() / sw;
    let signed: f64 = set.iter().zip(&w).map(|(p, w)| w * p.jeff).sum();
    let var = set.iter().zip(&w).map(|(p, w)| w * (p.jeff.abs() - level).powi(2)).sum::<f64>() / sw;
    // effective sample size for the weighted mean
    let n_eff = sw * sw / w.iter().map(|x| x * x).sum::<f64>();
    let level_ci95 = t975(len - 1) * (var * len as f64 / (len - 1) as f64 / n_eff).sqrt();
    Ok(SaturationFit { level, level_ci95, sign: if signed < 0.0 { -1.0 } else { 1.0 }, start, len })
}

/// Points of one amplitude sweep with their linear and saturation fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeffCurve {
    pub delta: f64,
    pub points: Vec<JeffPoint>,
    pub linear: Option<LinearFit>,
    pub saturation: Option<SaturationFit>,
    /// `ok` or the reasons a fit is missing.
    pub status: String,
}

impl JeffCurve {
    pub fn from_points(delta: f64, mut points: Vec<JeffPoint>) -> Self {
        points.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
        let mut status = Vec::new();
        let linear = fit_linear_regime(&points).map_err(|e| status.push(tag(&e))).ok();
        let saturation = fit_saturation_after(&points, linear.map_or(0, |l| l.prefix_len))
            .map_err(|e| status.push(tag(&e)))
            .ok();
        let status = if status.is_empty() { "ok".to_string() } else { status.join(";") };
        JeffCurve { delta, points, linear, saturation, status }
    }
}

fn tag(e: &Error) -> String {
    match e {
        Error::RegimeNotFound { .. } => "regime-not-found".into(),
        Error::NoPlateau(_) => "no-plateau".into(),
        other => format!("error:{}", other.category().as_str()),
    }
}
