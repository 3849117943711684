//! Device parameters and the coupled-transmon Hamiltonians.
//!
//! All Hamiltonians are expressed in ordinary frequency units (MHz) and time
//! in microseconds, so a phase accumulates as `2*pi*E*t`. The single `2*pi`
//! lives in the propagators.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{make_space, Mode, Operator, SpaceDescriptor};

/// Default truncation for dynamics.
pub const DEFAULT_LEVELS: usize = 4;

/// Physical constants of the two-transmon device, in MHz.
///
/// `anh1`/`anh2` are signed (negative for transmons); `omega1`/`omega2` are
/// the bare 0-1 transition frequencies of Q1 and Q2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega1: f64,
    pub omega2: f64,
    pub anh1: f64,
    pub anh2: f64,
    pub coupling_j: f64,
    pub levels: [usize; 2],
}

impl DeviceParams {
    pub fn new(omega1: f64, omega2: f64, anh1: f64, anh2: f64, coupling_j: f64) -> Result<Self> {
        let device = DeviceParams {
            omega1,
            omega2,
            anh1,
            anh2,
            coupling_j,
            levels: [DEFAULT_LEVELS; 2],
        };
        device.validate()?;
        Ok(device)
    }

    /// Builds the device from Q2's frequency and the detuning `omega1 - omega2`.
    pub fn from_detuning(omega2: f64, delta: f64, anh1: f64, anh2: f64, coupling_j: f64) -> Result<Self> {
        DeviceParams::new(omega2 + delta, omega2, anh1, anh2, coupling_j)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega1, self.omega2, self.anh1, self.anh2, self.coupling_j];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("device parameters must be finite".into()));
        }
        if self.anh1 == 0.0 || self.anh2 == 0.0 {
            return Err(Error::InvalidParameter("anharmonicities must be nonzero".into()));
        }
        if self.coupling_j < 0.0 {
            return Err(Error::InvalidParameter(format!("coupling J must be >= 0, got {}", self.coupling_j)));
        }
        if let Some(&l) = self.levels.iter().find(|&&l| l < 2) {
            return Err(Error::TooFewLevels(l));
        }
        Ok(())
    }

    /// `omega1 - omega2`.
    pub fn detuning(&self) -> f64 {
        self.omega1 - self.omega2
    }

    /// Same device with Q1 moved so that `omega1 - omega2 == delta`.
    pub fn with_detuning(&self, delta: f64) -> Self {
        DeviceParams { omega1: self.omega2 + delta, ..*self }
    }

    pub fn with_coupling(&self, coupling_j: f64) -> Self {
        DeviceParams { coupling_j, ..*self }
    }

    pub fn with_levels(&self, levels: [usize; 2]) -> Self {
        DeviceParams { levels, ..*self }
    }

    pub fn frequency(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Q1 => self.omega1,
            Mode::Q2 => self.omega2,
        }
    }

    pub fn anharmonicity(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Q1 => self.anh1,
            Mode::Q2 => self.anh2,
        }
    }

    /// Exchanges the roles of the two transmons.
    pub fn swapped(&self) -> Self {
        DeviceParams {
            omega1: self.omega2,
            omega2: self.omega1,
            anh1: self.anh2,
            anh2: self.anh1,
            coupling_j: self.coupling_j,
            levels: [self.levels[1], self.levels[0]],
        }
    }

    pub fn space(&self) -> Result<SpaceDescriptor> {
        make_space(&self.levels)
    }
}

/// Time profile of a drive segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    Square,
    /// Linear rise and fall of `rise_us` at each end of the segment.
    Ramped { rise_us: f64 },
}

impl Envelope {
    /// Envelope value in `[0, 1]` at `t_us` into a segment of length `duration_us`.
    pub fn value(&self, t_us: f64, duration_us: f64) -> f64 {
        match *self {
            Envelope::Square => 1.0,
            Envelope::Ramped { rise_us } => {
                if rise_us <= 0.0 {
                    return 1.0;
                }
                let up = t_us / rise_us;
                let down = (duration_us - t_us) / rise_us;
                up.min(down).clamp(0.0, 1.0)
            }
        }
    }

    fn validate(&self, duration_us: Option<f64>) -> Result<()> {
        if let Envelope::Ramped { rise_us } = *self {
            if !(rise_us >= 0.0) {
                return Err(Error::InvalidParameter(format!("rise time must be >= 0, got {rise_us}")));
            }
            if let Some(d) = duration_us {
                if rise_us > 0.5 * d {
                    return Err(Error::InvalidParameter(format!(
                        "rise time {rise_us} us exceeds half the pulse duration {d} us"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A microwave tone on one drive line: `amplitude * env(t) * cos(2*pi*carrier*t + phase)`
/// multiplying `(a + a^dagger)` of `line`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    pub line: Mode,
    /// Peak amplitude, MHz.
    pub amplitude: f64,
    /// Carrier frequency, MHz.
    pub carrier: f64,
    pub phase: f64,
    pub envelope: Envelope,
}

impl DrivePulse {
    pub fn square(line: Mode, amplitude: f64, carrier: f64) -> Self {
        DrivePulse { line, amplitude, carrier, phase: 0.0, envelope: Envelope::Square }
    }

    pub fn validate(&self, duration_us: Option<f64>) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!("amplitude must be >= 0, got {}", self.amplitude)));
        }
        if !self.carrier.is_finite() || !self.phase.is_finite() {
            return Err(Error::InvalidParameter("carrier and phase must be finite".into()));
        }
        self.envelope.validate(duration_us)
    }

    /// `amplitude * env(t)`.
    pub fn strength(&self, t_us: f64, duration_us: f64) -> f64 {
        self.amplitude * self.envelope.value(t_us, duration_us)
    }
}

/// Duffing Hamiltonian `w1 b'b + d1/2 b'b(b'b-1) + w2 c'c + d2/2 c'c(c'c-1) + J(bc' + b'c)`.
pub fn build_system_hamiltonian(device: &DeviceParams, space: &SpaceDescriptor) -> Result<Operator> {
    device.validate()?;
    if space.levels() != device.levels {
        return Err(Error::InvalidParameter(format!(
            "space levels {:?} do not match device levels {:?}",
            space.levels(),
            device.levels
        )));
    }
    let duffing = |n: usize, w: f64, d: f64| {
        let n = n as f64;
        w * n + 0.5 * d * n * (n - 1.0)
    };
    let bare = Operator::diagonal(space, |(n1, n2)| {
        duffing(n1, device.omega1, device.anh1) + duffing(n2, device.omega2, device.anh2)
    });
    let b = Operator::annihilation(space, Mode::Q1);
    let c = Operator::annihilation(space, Mode::Q2);
    let hop = b.mul(&c.dagger())?.add(&b.dagger().mul(&c)?)?;
    bare.add(&hop.scale(device.coupling_j))
}

/// `(a + a^dagger)` on the selected mode.
pub fn build_drive_operator(space: &SpaceDescriptor, mode: Mode) -> Operator {
    let a = Operator::annihilation(space, mode);
    a.add(&a.dagger()).expect("same space")
}

/// Rotating-wave drive term `1/2 (e^{i phase} a + e^{-i phase} a^dagger)`.
///
/// A lab-frame tone `eps cos(w t + phase)(a + a^dagger)` becomes `eps` times
/// this operator once counter-rotating terms are dropped.
pub fn rwa_drive_operator(space: &SpaceDescriptor, mode: Mode, phase: f64) -> Operator {
    let a = Operator::annihilation(space, mode);
    let rot = C64::from_polar(0.5, phase);
    a.scale(rot).add(&a.dagger().scale(rot.conj())).expect("same space")
}

/// `H_sys - w_d (n1 + n2) + eps(t) * rwa_drive`, in the frame rotating at the
/// pulse carrier for both modes. `t_us` is measured from the segment start.
pub fn rotating_frame_hamiltonian(
    device: &DeviceParams,
    space: &SpaceDescriptor,
    pulse: &DrivePulse,
    duration_us: f64,
    t_us: f64,
) -> Result<Operator> {
    if !(pulse.carrier > 0.0) {
        return Err(Error::InvalidParameter(format!("carrier must be positive, got {}", pulse.carrier)));
    }
    pulse.validate(Some(duration_us))?;
    let frame = Operator::total_number(space).scale(-pulse.carrier);
    let drive = rwa_drive_operator(space, pulse.line, pulse.phase).scale(pulse.strength(t_us, duration_us));
    build_system_hamiltonian(device, space)?.add(&frame)?.add(&drive)
}

/// `H_sys + eps(t) cos(2*pi*w_d*t_abs + phase)(a + a^dagger)` with no frame change.
pub fn lab_frame_hamiltonian(
    device: &DeviceParams,
    space: &SpaceDescriptor,
    pulse: &DrivePulse,
    duration_us: f64,
    t_segment_us: f64,
    t_abs_us: f64,
) -> Result<Operator> {
    pulse.validate(Some(duration_us))?;
    let coeff = pulse.strength(t_segment_us, duration_us) * (TAU * pulse.carrier * t_abs_us + pulse.phase).cos();
    build_system_hamiltonian(device, space)?.add(&build_drive_operator(space, pulse.line).scale(coeff))
}

/// Parameters of the two-level lab-frame drive Hamiltonian
/// `1/2 w1 ZI + W1 cos(r1 t + p1) XI + 1/2 w2 IZ + W2 cos(r2 t + p2) IX + 1/2 J XX`.
///
/// This path only validates qualitative two-level statements; its `coupling`
/// normalization differs from [`DeviceParams::coupling_j`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoQubitDrive {
    pub omega1: f64,
    pub omega2: f64,
    pub rabi1: f64,
    pub rabi2: f64,
    pub rf1: f64,
    pub rf2: f64,
    pub phase1: f64,
    pub phase2: f64,
    pub coupling: f64,
}

/// 4x4 Hamiltonian on a `[2, 2]` space. `Z = |0><0| - |1><1|`, `X = |0><1| + |1><0|`.
pub fn two_level_lab_hamiltonian(p: &TwoQubitDrive, t_us: f64) -> Operator {
    let space = make_space(&[2, 2]).expect("2x2 space");
    let z1 = Operator::diagonal(&space, |(a, _)| if a == 0 { 1.0 } else { -1.0 });
    let z2 = Operator::diagonal(&space, |(_, b)| if b == 0 { 1.0 } else { -1.0 });
    let x1 = build_drive_operator(&space, Mode::Q1);
    let x2 = build_drive_operator(&space, Mode::Q2);
    let xx = x1.mul(&x2).expect("same space");
    let drive1 = p.rabi1 * (TAU * p.rf1 * t_us + p.phase1).cos();
    let drive2 = p.rabi2 * (TAU * p.rf2 * t_us + p.phase2).cos();
    [
        z1.scale(0.5 * p.omega1),
        x1.scale(drive1),
        z2.scale(0.5 * p.omega2),
        x2.scale(drive2),
        xx.scale(0.5 * p.coupling),
    ]
    .iter()
    .try_fold(Operator::zeros(&space), |acc, term| acc.add(term))
    .expect("same space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::max_abs;
    use nalgebra::DMatrix;

    pub(crate) fn reference_device(delta: f64) -> DeviceParams {
        DeviceParams::from_detuning(4349.0, delta, -347.0, -360.0, 1.08).unwrap()
    }

    fn sorted_eigs(m: DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn uncoupled_hamiltonian_is_duffing_ladder() {
        let dev = DeviceParams::new(5000.0, 4800.0, -300.0, -250.0, 0.0).unwrap().with_levels([3, 3]);
        let space = dev.space().unwrap();
        let h = build_system_hamiltonian(&dev, &space).unwrap();
        assert!((h.element((2, 0), (2, 0)).unwrap().re - (2.0 * 5000.0 - 300.0)).abs() < 1e-9);
        let off: f64 = (0..9)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| h.matrix()[(i, j)].norm())
            .fold(0.0, f64::max);
        assert_eq!(off, 0.0);
    }

    #[test]
    fn dressed_01_energy_matches_exact_diagonalization() {
        // omega2 - J^2/Delta plus O(J^4/Delta^3)
        let dev = reference_device(-78.0);
        let space = dev.space().unwrap();
        let eigs = sorted_eigs(build_system_hamiltonian(&dev, &space).unwrap().real_matrix());
        // single-excitation block: eigs[1] ~ |10> (4271), eigs[2] ~ |01> (4349)
        assert!((eigs[2] - 4349.01495).abs() < 1e-5, "{}", eigs[2]);
        assert!((eigs[1] - 4270.98505).abs() < 1e-5, "{}", eigs[1]);
    }

    #[test]
    fn system_hamiltonian_is_hermitian_and_conserves_excitations() {
        for delta in [-500.0, -78.0, 3.0, 282.0] {
            let dev = reference_device(delta);
            let space = dev.space().unwrap();
            let h = build_system_hamiltonian(&dev, &space).unwrap();
            assert!(h.is_hermitian(0.0));
            let n = Operator::total_number(&space);
            assert!(max_abs(h.commutator(&n).unwrap().matrix()) < 1e-9);
        }
    }

    #[test]
    fn spectrum_is_invariant_under_mode_swap() {
        let dev = reference_device(-78.0).with_levels([4, 3]);
        let a = sorted_eigs(build_system_hamiltonian(&dev, &dev.space().unwrap()).unwrap().real_matrix());
        let sw = dev.swapped();
        let b = sorted_eigs(build_system_hamiltonian(&sw, &sw.space().unwrap()).unwrap().real_matrix());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn drive_operator_structure() {
        let s = make_space(&[2, 2]).unwrap();
        let d = build_drive_operator(&s, Mode::Q2);
        let mut nonzero = vec![];
        for (i, &li) in s.labels().iter().enumerate() {
            for (j, &lj) in s.labels().iter().enumerate() {
                if i < j && d.matrix()[(i, j)].norm() > 0.0 {
                    nonzero.push((li, lj, d.matrix()[(i, j)].re));
                }
            }
        }
        assert_eq!(nonzero, vec![((0, 0), (0, 1), 1.0), ((1, 0), (1, 1), 1.0)]);

        let s = make_space(&[3, 2]).unwrap();
        let d = build_drive_operator(&s, Mode::Q1);
        assert!((d.element((1, 0), (2, 0)).unwrap().re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.trace().norm(), 0.0);
        assert!(d.is_hermitian(0.0));
    }

    #[test]
    fn undriven_rotating_frame_is_shifted_spectrum() {
        let dev = reference_device(-78.0);
        let space = dev.space().unwrap();
        let pulse = DrivePulse::square(Mode::Q2, 0.0, 4271.0);
        let h = rotating_frame_hamiltonian(&dev, &space, &pulse, 1.0, 0.3).unwrap();
        let hs = build_system_hamiltonian(&dev, &space).unwrap();
        let shifted = hs.sub(&Operator::total_number(&space).scale(4271.0)).unwrap();
        assert!(h.max_abs_diff(&shifted).unwrap() < 1e-12);
    }

    #[test]
    fn rotating_frame_hermitian_at_random_times() {
        let dev = reference_device(-78.0);
        let space = dev.space().unwrap();
        let pulse = DrivePulse {
            line: Mode::Q2,
            amplitude: 12.0,
            carrier: 4271.0,
            phase: 0.7,
            envelope: Envelope::Ramped { rise_us: 0.02 },
        };
        for t in [0.0, 0.013, 0.05, 0.099] {
            let h = rotating_frame_hamiltonian(&dev, &space, &pulse, 0.1, t).unwrap();
            assert!(h.is_hermitian(1e-12));
            let l = lab_frame_hamiltonian(&dev, &space, &pulse, 0.1, t, t).unwrap();
            assert!(l.is_hermitian(1e-12));
        }
        assert!(rotating_frame_hamiltonian(&dev, &space, &DrivePulse::square(Mode::Q2, 1.0, 0.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn ramp_envelope_shape() {
        let e = Envelope::Ramped { rise_us: 0.1 };
        assert_eq!(e.value(0.0, 1.0), 0.0);
        assert!((e.value(0.05, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.value(0.5, 1.0), 1.0);
        assert!((e.value(0.95, 1.0) - 0.5).abs() < 1e-12);
        let p = DrivePulse { envelope: Envelope::Ramped { rise_us: 0.6 }, ..DrivePulse::square(Mode::Q1, 1.0, 1.0) };
        assert!(p.validate(Some(1.0)).is_err());
        assert!(DrivePulse::square(Mode::Q1, -1.0, 1.0).validate(None).is_err());
    }

    #[test]
    fn two_level_uncoupled_spectrum() {
        let p = TwoQubitDrive { omega1: 5000.0, omega2: 4800.0, ..Default::default() };
        let eigs = sorted_eigs(two_level_lab_hamiltonian(&p, 0.0).real_matrix());
        let expected = [-4900.0, -100.0, 100.0, 4900.0];
        for (e, x) in eigs.iter().zip(expected) {
            assert!((e - x).abs() < 1e-9);
        }
    }

    #[test]
    fn two_level_coupled_spectrum() {
        // Oracle: XX couples {01,10} and {00,11} pairwise, so the 4x4 problem
        // splits into two 2x2 blocks with eigenvalues +-1/2 sqrt(diff^2 + J^2).
        let (w1, w2, j) = (5000.0, 4800.0, 12.0);
        let p = TwoQubitDrive { omega1: w1, omega2: w2, coupling: j, ..Default::default() };
        let eigs = sorted_eigs(two_level_lab_hamiltonian(&p, 0.0).real_matrix());
        let single = 0.5 * ((w1 - w2).powi(2) + j * j).sqrt();
        let double = 0.5 * ((w1 + w2).powi(2) + j * j).sqrt();
        let expected = [-double, -single, single, double];
        for (e, x) in eigs.iter().zip(expected) {
            assert!((e - x).abs() < 1e-9);
        }
        // single-excitation splitting sqrt(Delta^2 + J^2)
        assert!(((eigs[2] - eigs[1]) - ((w1 - w2).powi(2) + j * j).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn two_level_hermitian_when_driven() {
        let p = TwoQubitDrive {
            omega1: 5000.0,
            omega2: 4800.0,
            rabi1: 3.0,
            rabi2: 5.0,
            rf1: 4800.0,
            rf2: 5000.0,
            phase1: 0.2,
            phase2: -1.1,
            coupling: 2.0,
        };
        for t in [0.0, 0.001234, 0.5, 7.77] {
            assert!(two_level_lab_hamiltonian(&p, t).is_hermitian(0.0));
        }
    }

    #[test]
    fn device_validation() {
        assert!(DeviceParams::new(1.0, 2.0, 0.0, -1.0, 1.0).is_err());
        assert!(DeviceParams::new(1.0, 2.0, -1.0, -1.0, -0.1).is_err());
        let d = reference_device(-78.0);
        assert_eq!(d.detuning(), -78.0);
        assert_eq!(d.with_detuning(100.0).omega1, 4449.0);
    }
}
