//! Time-domain simulation of the cross-resonance Rabi protocol.
//!
//! Q1 is the target and Q2 the control; the CR tone is applied to Q2's line at
//! the dressed Q1 frequency. States are reported in the frame rotating at the
//! carrier on both modes.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{FockLabel, Mode, Operator};
use crate::model::{
    build_drive_operator, build_system_hamiltonian, rotating_frame_hamiltonian, DeviceParams, DrivePulse, Envelope,
};
use crate::perturbation::{exact_dressed, ExactDressing};

pub const TARGET: Mode = Mode::Q1;
pub const CONTROL: Mode = Mode::Q2;

/// Default sub-step for piecewise-constant ramps in the rotating frame, us.
pub const DEFAULT_RAMP_STEP_US: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// RWA Hamiltonian, exact exponential per constant piece.
    Rotating,
    /// Full lab-frame Hamiltonian with counter-rotating terms, RK4.
    Lab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub pulse: DrivePulse,
    pub duration_us: f64,
}

/// Contiguous drive segments sharing one carrier, preceded (optionally) by an
/// ideal pi flip of the control.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    segments: Vec<Segment>,
    control_excited: bool,
}

impl PulseSchedule {
    pub fn new(segments: Vec<Segment>, control_excited: bool) -> Result<Self> {
        let Some(first) = segments.first() else {
            return Err(Error::InvalidParameter("schedule has no segments".into()));
        };
        for s in &segments {
            if !(s.duration_us > 0.0) || !s.duration_us.is_finite() {
                return Err(Error::InvalidParameter(format!("segment duration must be > 0, got {}", s.duration_us)));
            }
            s.pulse.validate(Some(s.duration_us))?;
            if !(s.pulse.carrier > 0.0) {
                return Err(Error::InvalidParameter(format!("carrier must be positive, got {}", s.pulse.carrier)));
            }
            if s.pulse.carrier != first.pulse.carrier {
                return Err(Error::InvalidParameter("all segments must share one carrier".into()));
            }
        }
        Ok(PulseSchedule { segments, control_excited })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn control_excited(&self) -> bool {
        self.control_excited
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_us).sum()
    }

    /// Frequency of the rotating frame.
    pub fn carrier(&self) -> f64 {
        self.segments[0].pulse.carrier
    }

    /// Dressed state the evolution starts from.
    pub fn initial_label(&self) -> FockLabel {
        CONTROL.label(self.control_excited as usize, 0)
    }
}

/// Dressed target 0-1 frequency with the control in its ground state.
pub fn cr_carrier(device: &DeviceParams) -> Result<f64> {
    Ok(dressing(device)?.transition_frequency(TARGET, 0))
}

fn dressing(device: &DeviceParams) -> Result<ExactDressing> {
    exact_dressed(device)
}

/// One square CR pulse on the control line at the dressed target frequency.
pub fn build_cr_schedule(
    device: &DeviceParams,
    amplitude: f64,
    duration_us: f64,
    control_excited: bool,
) -> Result<PulseSchedule> {
    let pulse = DrivePulse::square(CONTROL, amplitude, cr_carrier(device)?);
    PulseSchedule::new(vec![Segment { pulse, duration_us }], control_excited)
}

/// States sampled during a schedule, in the rotating frame.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
}

impl Trajectory {
    pub fn max_norm_error(&self) -> f64 {
        self.states.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Samples the evolution every `dt_us` from 0 to the end of the schedule.
///
/// In the rotating frame `dt_us` only sets the sampling (and the ramp
/// discretization); in the lab frame it is also the RK4 step and must satisfy
/// `dt <= 1 / (20 * spectral width)`.
pub fn propagate(device: &DeviceParams, schedule: &PulseSchedule, dt_us: f64, frame: Frame) -> Result<Trajectory> {
    if !(dt_us > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt_us}")));
    }
    let total = schedule.total_duration();
    let n = (total / dt_us + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt_us).collect();
    if total - times[n] > 1e-12 * total.max(1.0) {
        times.push(total);
    }
    let dressed = dressing(device)?;
    propagate_at(device, &dressed, schedule, frame, dt_us, &times)
}

/// Evolves the schedule's initial dressed state and records it at
/// `sample_times` (ascending, within the schedule).
pub fn propagate_at(
    device: &DeviceParams,
    dressed: &ExactDressing,
    schedule: &PulseSchedule,
    frame: Frame,
    step_us: f64,
    sample_times: &[f64],
) -> Result<Trajectory> {
    let total = schedule.total_duration();
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("sample times must be ascending".into()));
    }
    if sample_times.iter().any(|&t| t < 0.0 || t > total * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!("sample times must lie in [0, {total}] us")));
    }
    let psi0 = dressed.vector(schedule.initial_label()).expect("initial label in space").map(C64::from);
    let states = match frame {
        Frame::Rotating => evolve_rotating(device, schedule, &psi0, step_us, sample_times)?,
        Frame::Lab => {
            let lab = evolve_lab(device, schedule, &psi0, step_us, sample_times)?;
            let space = dressed.space();
            let wd = schedule.carrier();
            lab.into_iter()
                .zip(sample_times)
                .map(|(mut psi, &t)| {
                    for (i, &label) in space.labels().iter().enumerate() {
                        let n = (label.0 + label.1) as f64;
                        psi[i] *= C64::from_polar(1.0, TAU * wd * n * t);
                    }
                    psi
                })
                .collect()
        }
    };
    Ok(Trajectory { times: sample_times.to_vec(), states })
}

/// `exp(-i 2pi H t)` applied through the eigendecomposition of `H`.
struct Exponential {
    vectors: DMatrix<C64>,
    values: Vec<f64>,
}

impl Exponential {
    fn new(h: &Operator) -> Self {
        let eig = h.matrix().clone().symmetric_eigen();
        Exponential { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() }
    }

    fn coefficients(&self, psi: &DVector<C64>) -> DVector<C64> {
        self.vectors.adjoint() * psi
    }

    fn evolve(&self, coeffs: &DVector<C64>, t: f64) -> DVector<C64> {
        let phased = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&self.values).map(|(c, &l)| c * C64::from_polar(1.0, -TAU * l * t)),
        );
        &self.vectors * phased
    }
}

fn is_constant(env: &Envelope) -> bool {
    match *env {
        Envelope::Square => true,
        Envelope::Ramped { rise_us } => rise_us <= 0.0,
    }
}

fn evolve_rotating(
    device: &DeviceParams,
    schedule: &PulseSchedule,
    psi0: &DVector<C64>,
    step_us: f64,
    samples: &[f64],
) -> Result<Vec<DVector<C64>>> {
    let space = device.space()?;
    let mut out = Vec::with_capacity(samples.len());
    let mut next = 0;
    let mut psi = psi0.clone();
    let mut start = 0.0;
    for seg in schedule.segments() {
        let (p, d) = (&seg.pulse, seg.duration_us);
        let end = start + d;
        // piece boundaries relative to the segment start
        let pieces: Vec<(f64, f64)> = if is_constant(&p.envelope) {
            vec![(0.0, d)]
        } else {
            let n = (d / step_us).ceil().max(1.0) as usize;
            (0..n).map(|k| (k as f64 * d / n as f64, (k + 1) as f64 * d / n as f64)).collect()
        };
        for (a, b) in pieces {
            let h = rotating_frame_hamiltonian(device, &space, p, d, 0.5 * (a + b))?;
            let exp = Exponential::new(&h);
            let coeffs = exp.coefficients(&psi);
            let last_piece = b >= d;
            while next < samples.len() && (samples[next] - start < b || (last_piece && samples[next] <= end + 1e-12)) {
                out.push(exp.evolve(&coeffs, samples[next] - start - a));
                next += 1;
            }
            psi = exp.evolve(&coeffs, b - a);
        }
        start = end;
    }
    while next < samples.len() {
        out.push(psi.clone());
        next += 1;
    }
    Ok(out)
}

/// Largest RK4 step accepted for the lab-frame integrator.
pub fn max_lab_step(device: &DeviceParams) -> Result<f64> {
    let space = device.space()?;
    let eig = build_system_hamiltonian(device, &space)?.real_matrix().symmetric_eigenvalues();
    Ok(1.0 / (20.0 * (eig.max() - eig.min())))
}

fn evolve_lab(
    device: &DeviceParams,
    schedule: &PulseSchedule,
    psi0: &DVector<C64>,
    step_us: f64,
    samples: &[f64],
) -> Result<Vec<DVector<C64>>> {
    let max_us = max_lab_step(device)?;
    if step_us > max_us {
        return Err(Error::StepTooLarge { dt_us: step_us, max_us });
    }
    let space = device.space()?;
    let h0 = build_system_hamiltonian(device, &space)?.into_matrix();
    let drives: Vec<DMatrix<C64>> =
        schedule.segments().iter().map(|s| build_drive_operator(&space, s.pulse.line).into_matrix()).collect();
    let bounds: Vec<f64> = schedule
        .segments()
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.duration_us;
            Some(*acc)
        })
        .collect();
    let total = schedule.total_duration();

    // -i 2pi H(t) psi
    let rhs = |t: f64, psi: &DVector<C64>| -> DVector<C64> {
        let k = bounds.iter().position(|&b| t < b).unwrap_or(bounds.len() - 1);
        let seg = &schedule.segments()[k];
        let t_seg = t - (bounds[k] - seg.duration_us);
        let p = &seg.pulse;
        let coeff = p.strength(t_seg, seg.duration_us) * (TAU * p.carrier * t + p.phase).cos();
        let mut hpsi = &h0 * psi;
        hpsi.axpy(C64::from(coeff), &(&drives[k] * psi), C64::from(1.0));
        hpsi * C64::new(0.0, -TAU)
    };

    let mut out = Vec::with_capacity(samples.len());
    let mut psi = psi0.clone();
    let mut t = 0.0;
    for &target in samples {
        let target = target.min(total);
        while target - t > 1e-15 {
            let h = step_us.min(target - t);
            let k1 = rhs(t, &psi);
            let k2 = rhs(t + 0.5 * h, &(&psi + &k1 * C64::from(0.5 * h)));
            let k3 = rhs(t + 0.5 * h, &(&psi + &k2 * C64::from(0.5 * h)));
            let k4 = rhs(t + h, &(&psi + &k3 * C64::from(h)));
            psi += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
            t += h;
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// Populations read out from one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    /// Target in dressed `|1>`, summed over control levels.
    pub p_excited: f64,
    /// Outside the dressed computational manifold.
    pub p_leakage: f64,
    /// Target Bloch `y` within the prepared control manifold.
    pub target_y: f64,
}

pub fn readout(dressed: &ExactDressing, psi: &DVector<C64>, control_state: usize) -> Readout {
    let space = dressed.space();
    let amp = |label: FockLabel| -> C64 {
        let v = dressed.vector(label).expect("label in space");
        v.iter().zip(psi.iter()).map(|(&a, b)| b * a).sum()
    };
    let mut p_excited = 0.0;
    let mut computational = 0.0;
    for &label in space.labels() {
        let p = amp(label).norm_sqr();
        if TARGET.occupation(label) == 1 {
            p_excited += p;
        }
        if label.0 <= 1 && label.1 <= 1 {
            computational += p;
        }
    }
    let a = amp(CONTROL.label(control_state, 0));
    let b = amp(CONTROL.label(control_state, 1));
    Readout { p_excited, p_leakage: (1.0 - computational).max(0.0), target_y: 2.0 * (a.conj() * b).im }
}

/// Target response versus CR pulse duration at one amplitude and control state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    pub amplitude: f64,
    pub control_state: u8,
    pub durations_us: Vec<f64>,
    pub p_excited: Vec<f64>,
    pub p_leakage: Vec<f64>,
    /// Rotating-frame target `y`, available for simulated traces only.
    pub target_y: Option<Vec<f64>>,
}

impl RabiTrace {
    pub fn validate(&self) -> Result<()> {
        let n = self.durations_us.len();
        if self.p_excited.len() != n || self.p_leakage.len() != n || self.target_y.as_ref().is_some_and(|y| y.len() != n)
        {
            return Err(Error::InvalidParameter("trace columns differ in length".into()));
        }
        if self.control_state > 1 {
            return Err(Error::InvalidParameter(format!("control state must be 0 or 1, got {}", self.control_state)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.durations_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations_us.is_empty()
    }
}

/// Frame, step and pulse shape used by [`simulate_cr_rabi_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub frame: Frame,
    /// RK4 step (lab) or ramp discretization (rotating). `None` picks a safe value.
    pub step_us: Option<f64>,
    /// Overrides the dressed target frequency as carrier.
    pub carrier: Option<f64>,
    pub envelope: Envelope,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { frame: Frame::Rotating, step_us: None, carrier: None, envelope: Envelope::Square }
    }
}

pub fn simulate_cr_rabi(
    device: &DeviceParams,
    amplitude: f64,
    durations_us: &[f64],
    control_excited: bool,
) -> Result<RabiTrace> {
    simulate_cr_rabi_with(device, amplitude, durations_us, control_excited, &SimOptions::default())
}

pub fn simulate_cr_rabi_with(
    device: &DeviceParams,
    amplitude: f64,
    durations_us: &[f64],
    control_excited: bool,
    options: &SimOptions,
) -> Result<RabiTrace> {
    if durations_us.iter().any(|&d| !(d >= 0.0)) || durations_us.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("durations must be non-negative and ascending".into()));
    }
    let dressed = dressing(device)?;
    let carrier = options.carrier.unwrap_or_else(|| dressed.transition_frequency(TARGET, 0));
    let step = match (options.step_us, options.frame) {
        (Some(s), _) => s,
        (None, Frame::Rotating) => DEFAULT_RAMP_STEP_US,
        (None, Frame::Lab) => 0.5 * max_lab_step(device)?,
    };
    let pulse = DrivePulse { line: CONTROL, amplitude, carrier, phase: 0.0, envelope: options.envelope };
    let schedule_for =
        |d: f64| PulseSchedule::new(vec![Segment { pulse, duration_us: d }], control_excited);
    let control_state = control_excited as usize;

    let states: Vec<DVector<C64>> = match durations_us.last() {
        None => Vec::new(),
        Some(&longest) if is_constant(&options.envelope) || longest == 0.0 => {
            // a square pulse of length d is a prefix of the longest one
            if longest == 0.0 {
                let psi0 = dressed.vector(CONTROL.label(control_state, 0)).unwrap().map(C64::from);
                vec![psi0; durations_us.len()]
            } else {
                propagate_at(device, &dressed, &schedule_for(longest)?, options.frame, step, durations_us)?.states
            }
        }
        Some(_) => durations_us
            .iter()
            .map(|&d| {
                if d == 0.0 {
                    return Ok(dressed.vector(CONTROL.label(control_state, 0)).unwrap().map(C64::from));
                }
                let traj = propagate_at(device, &dressed, &schedule_for(d)?, options.frame, step, &[d])?;
                Ok(traj.states.into_iter().next().unwrap())
            })
            .collect::<Result<_>>()?,
    };

    let reads: Vec<Readout> = states.iter().map(|s| readout(&dressed, s, control_state)).collect();
    Ok(RabiTrace {
        amplitude,
        control_state: control_state as u8,
        durations_us: durations_us.to_vec(),
        p_excited: reads.iter().map(|r| r.p_excited).collect(),
        p_leakage: reads.iter().map(|r| r.p_leakage).collect(),
        target_y: Some(reads.iter().map(|r| r.target_y).collect()),
    })
}

/// Phenomenological damping: the oscillating part of `p_excited` decays with
/// `t2`, the mean relaxes to zero with `t1`. `target_y` decays with `t2`.
pub fn decoherence_envelope(trace: &RabiTrace, t1_us: f64, t2_us: f64) -> Result<RabiTrace> {
    if !(t1_us > 0.0) || !(t2_us > 0.0) {
        return Err(Error::InvalidParameter(format!("t1 and t2 must be > 0, got {t1_us}, {t2_us}")));
    }
    trace.validate()?;
    let n = trace.len().max(1) as f64;
    let mean = trace.p_excited.iter().sum::<f64>() / n;
    let mut out = trace.clone();
    for (k, &t) in trace.durations_us.iter().enumerate() {
        let (r1, r2) = ((-t / t1_us).exp(), (-t / t2_us).exp());
        out.p_excited[k] = mean * r1 + (trace.p_excited[k] - mean) * r2;
        if let Some(y) = out.target_y.as_mut() {
            y[k] *= r2;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn device(delta: f64) -> DeviceParams {
        DeviceParams::from_detuning(4349.0, delta, -347.0, -360.0, 1.08).unwrap()
    }

    fn grid(tmax: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| tmax * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn schedule_initial_states() {
        let dev = device(-78.0);
        let s = build_cr_schedule(&dev, 10.0, 0.5, false).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert_eq!(s.initial_label(), (0, 0));
        let s = build_cr_schedule(&dev, 10.0, 0.5, true).unwrap();
        // control excited, target ground
        assert_eq!(s.initial_label(), (0, 1));
        assert!(build_cr_schedule(&dev, 10.0, 0.0, true).is_err());
    }

    #[test]
    fn carrier_is_dressed_target_frequency() {
        let f = cr_carrier(&device(-78.0)).unwrap();
        assert!((f - 4270.98505).abs() < 1e-4, "{f}");
    }

    #[test]
    fn zero_amplitude_keeps_target_in_ground() {
        for excited in [false, true] {
            let tr = simulate_cr_rabi(&device(-78.0), 0.0, &grid(5.0, 51), excited).unwrap();
            assert!(tr.p_excited.iter().all(|&p| p.abs() < 1e-12));
            assert!(tr.p_leakage.iter().all(|&p| p.abs() < 1e-12));
        }
    }

    #[test]
    fn zero_drive_only_adds_phases() {
        let dev = device(150.0);
        let schedule = build_cr_schedule(&dev, 0.0, 3.0, false).unwrap();
        let dressed = exact_dressed(&dev).unwrap();
        let space = dressed.space().clone();
        let traj = propagate_at(&dev, &dressed, &schedule, Frame::Rotating, 0.01, &grid(3.0, 31)).unwrap();
        let pops = |psi: &DVector<C64>| -> Vec<f64> {
            space.labels().iter().map(|&l| readout_amp(&dressed, l, psi).norm_sqr()).collect()
        };
        let first = pops(&traj.states[0]);
        for s in &traj.states {
            for (a, b) in pops(s).iter().zip(&first) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    fn readout_amp(d: &ExactDressing, label: FockLabel, psi: &DVector<C64>) -> C64 {
        d.vector(label).unwrap().iter().zip(psi.iter()).map(|(&a, b)| b * a).sum()
    }

    #[test]
    fn resonant_rabi_matches_closed_form() {
        // isolated target, driven directly on its own line
        let dev = device(-78.0).with_coupling(0.0);
        let eps = 1.0;
        let pulse = DrivePulse::square(TARGET, eps, dev.omega1);
        let schedule = PulseSchedule::new(vec![Segment { pulse, duration_us: 2.0 }], false).unwrap();
        let traj = propagate(&dev, &schedule, 0.01, Frame::Rotating).unwrap();
        let dressed = exact_dressed(&dev).unwrap();
        for (t, psi) in traj.times.iter().zip(&traj.states) {
            let p = readout(&dressed, psi, 0).p_excited;
            let expected = (std::f64::consts::PI * eps * t).sin().powi(2);
            assert!((p - expected).abs() < 2e-3, "t={t}: {p} vs {expected}");
        }
    }

    #[test]
    fn lab_frame_agrees_with_rwa() {
        let dev = device(-78.0).with_coupling(0.0);
        let pulse = DrivePulse::square(TARGET, 5.0, dev.omega1);
        let schedule = PulseSchedule::new(vec![Segment { pulse, duration_us: 0.3 }], false).unwrap();
        let dressed = exact_dressed(&dev).unwrap();
        let times = grid(0.3, 31);
        let step = 0.5 * max_lab_step(&dev).unwrap();
        let rot = propagate_at(&dev, &dressed, &schedule, Frame::Rotating, step, &times).unwrap();
        let lab = propagate_at(&dev, &dressed, &schedule, Frame::Lab, step, &times).unwrap();
        let sq: f64 = rot
            .states
            .iter()
            .zip(&lab.states)
            .map(|(a, b)| (readout(&dressed, a, 0).p_excited - readout(&dressed, b, 0).p_excited).powi(2))
            .sum();
        let rms = (sq / times.len() as f64).sqrt();
        assert!(rms < 0.01, "{rms}");
        assert!(lab.max_norm_error() < 1e-6);
    }

    #[test]
    fn lab_step_is_checked() {
        let dev = device(-78.0);
        let schedule = build_cr_schedule(&dev, 1.0, 0.01, false).unwrap();
        let err = propagate(&dev, &schedule, 1e-3, Frame::Lab).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn control_state_changes_cr_response() {
        let dev = device(-78.0);
        let t = grid(2.0, 41);
        let g = simulate_cr_rabi(&dev, 30.0, &t, false).unwrap();
        let e = simulate_cr_rabi(&dev, 30.0, &t, true).unwrap();
        let diff: f64 = g.p_excited.iter().zip(&e.p_excited).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 0.1, "{diff}");
    }

    #[test]
    fn truncation_is_stable() {
        let t = grid(20.0, 41);
        for excited in [false, true] {
            let four = simulate_cr_rabi(&device(-78.0), 5.0, &t, excited).unwrap();
            let five = simulate_cr_rabi(&device(-78.0).with_levels([5, 5]), 5.0, &t, excited).unwrap();
            for (a, b) in four.p_excited.iter().zip(&five.p_excited) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn ramped_pulse_runs_per_duration() {
        let dev = device(-78.0);
        let opts = SimOptions { envelope: Envelope::Ramped { rise_us: 0.02 }, ..Default::default() };
        let tr = simulate_cr_rabi_with(&dev, 20.0, &[0.0, 0.1, 0.2], false, &opts).unwrap();
        assert_eq!(tr.p_excited[0], 0.0);
        assert!(tr.p_excited.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn decoherence_limits() {
        let tr = simulate_cr_rabi(&device(-78.0), 40.0, &grid(4.0, 81), false).unwrap();
        let same = decoherence_envelope(&tr, f64::INFINITY, f64::INFINITY).unwrap();
        for (a, b) in same.p_excited.iter().zip(&tr.p_excited) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut late = tr.clone();
        late.durations_us = late.durations_us.iter().map(|t| t + 1e4).collect();
        let late = decoherence_envelope(&late, 57.0, 7.8).unwrap();
        assert!(late.p_excited.iter().all(|p| p.abs() < 1e-12));
        assert!(decoherence_envelope(&tr, 0.0, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn evolution_is_unitary(delta in -300.0f64..300.0, eps in 0.0f64..60.0, excited in any::<bool>()) {
            // 01-10, 02-11, 11-20 and 12-21 anticrossings
            prop_assume!([0.0, -360.0, 347.0, -13.0].iter().all(|c| (delta - c).abs() > 5.0));
            let dev = device(delta);
            let schedule = build_cr_schedule(&dev, eps, 10.0, excited).unwrap();
            let traj = propagate(&dev, &schedule, 0.25, Frame::Rotating).unwrap();
            prop_assert!(traj.max_norm_error() < 1e-9);
            let dressed = exact_dressed(&dev).unwrap();
            for s in &traj.states {
                let r = readout(&dressed, s, excited as usize);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r.p_excited));
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r.p_leakage));
            }
        }
    }
}
