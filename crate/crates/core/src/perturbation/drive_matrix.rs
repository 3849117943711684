use nalgebra::SMatrix;

use super::{basis_position, Denominators, PoleGuard, DRESSED_BASIS};
use crate::error::Result;
use crate::hilbert::{FockLabel, Mode};
use crate::model::DeviceParams;

pub type Matrix10 = SMatrix<f64, 10, 10>;

/// A drive operator `(b + b')` or `(c + c')` expressed in the dressed basis,
/// restricted to [`DRESSED_BASIS`].
#[derive(Debug, Clone, PartialEq)]
pub struct DressedDriveMatrix {
    pub line: Mode,
    pub matrix: Matrix10,
}

impl DressedDriveMatrix {
    pub fn entry(&self, bra: FockLabel, ket: FockLabel) -> Option<f64> {
        Some(self.matrix[(basis_position(bra)?, basis_position(ket)?)])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.matrix - self.matrix.transpose()).amax() <= tol
    }

    /// Target-flip elements `(control in 0, control in 1)` when this line
    /// drives the control qubit.
    pub fn conditional_entries(&self) -> (f64, f64) {
        let (control, target) = (self.line, self.line.other());
        let flip = |c: usize| {
            let lo = control.label(c, 0);
            let hi = control.label(c, 1);
            debug_assert_eq!(target.occupation(hi), 1);
            self.entry(lo, hi).expect("computational labels are in the basis")
        };
        (flip(0), flip(1))
    }

    /// Direct flip elements of the driven qubit `(target in 0, target in 1)`.
    pub fn direct_entries(&self) -> (f64, f64) {
        let control = self.line;
        let flip = |t: usize| self.entry(control.label(0, t), control.label(1, t)).expect("in basis");
        (flip(0), flip(1))
    }
}

/// First-order dressed drive matrix for line 1 (`b + b'`) or line 2 (`c + c'`),
/// transcribed entry by entry.
pub fn dressed_drive_matrix_pt(device: &DeviceParams, line: Mode, guard: PoleGuard) -> Result<DressedDriveMatrix> {
    let den = Denominators::checked(device, guard)?;
    let (j, delta, d1, d2) = (device.coupling_j, den.delta, device.anh1, device.anh2);
    let (s2, s3, s6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
    let mut m = Matrix10::zeros();
    let mut set = |bra: FockLabel, ket: FockLabel, v: f64| {
        let (i, k) = (basis_position(bra).unwrap(), basis_position(ket).unwrap());
        m[(i, k)] = v;
        m[(k, i)] = v;
    };
    // Both H2 poles factor as (2 d2 - Delta)(d2 - Delta).
    let d2_pair = den.two_d2_minus_delta * den.d2_minus_delta;
    let resonant = den.delta_d1_minus_d2;

    match line {
        Mode::Q1 => {
            set((0, 0), (0, 1), -j / delta);
            set((0, 0), (1, 0), 1.0);
            set((0, 1), (1, 1), 1.0);
            set((0, 1), (0, 2), s2 * j / den.d2_minus_delta);
            set((0, 1), (2, 0), -s2 * j * d1 / (delta * den.d1_plus_delta));
            set((1, 0), (1, 1), j * (1.0 / delta - 2.0 / den.d1_plus_delta));
            set((1, 0), (2, 0), s2);
            set((1, 1), (1, 2), -s2 * j * (d2 + d1 - delta) / (den.d2_minus_delta * resonant));
            set((1, 1), (2, 1), s2);
            set((1, 1), (3, 0), -s6 * j * d1 / (den.d1_plus_delta * den.two_d1_plus_delta));
            set((0, 2), (0, 3), s3 * j / den.two_d2_minus_delta);
            set((0, 2), (1, 2), 1.0);
            set((0, 2), (2, 1), 2.0 * j * d1 / (den.d2_minus_delta * resonant));
            set((2, 0), (2, 1), j * (d1 - delta) / (den.d1_plus_delta * den.two_d1_plus_delta));
            set((2, 0), (3, 0), s3);
        }
        Mode::Q2 => {
            set((0, 0), (0, 1), 1.0);
            set((0, 0), (1, 0), j / delta);
            set((0, 1), (1, 1), j * (d2 + delta) / (delta * -den.d2_minus_delta));
            set((0, 1), (0, 2), s2);
            set((1, 0), (1, 1), 1.0);
            set((1, 0), (0, 2), s2 * j * d2 / (den.d2_minus_delta * delta));
            set((1, 0), (2, 0), s2 * j / den.d1_plus_delta);
            set((1, 1), (0, 3), -s6 * j * d2 / d2_pair);
            set((1, 1), (1, 2), s2);
            set((1, 1), (2, 1), s2 * j * (d2 + d1 + delta) / (den.d1_plus_delta * resonant));
            set((0, 2), (0, 3), s3);
            set((0, 2), (1, 2), j * (d2 + delta) / d2_pair);
            set((2, 0), (1, 2), -2.0 * j * d2 / (den.d1_plus_delta * resonant));
            set((2, 0), (2, 1), 1.0);
            set((2, 0), (3, 0), s3 * j / den.two_d1_plus_delta);
        }
    }
    debug_assert!(DRESSED_BASIS.len() == 10);
    Ok(DressedDriveMatrix { line, matrix: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device(delta: f64) -> DeviceParams {
        DeviceParams::from_detuning(4349.0, delta, -347.0, -360.0, 1.08).unwrap()
    }

    #[test]
    fn symmetric() {
        for line in [Mode::Q1, Mode::Q2] {
            let h = dressed_drive_matrix_pt(&device(-78.0), line, PoleGuard::default()).unwrap();
            assert!(h.is_symmetric(0.0));
        }
    }

    #[test]
    fn bare_limit() {
        let dev = device(-78.0).with_coupling(0.0);
        let h1 = dressed_drive_matrix_pt(&dev, Mode::Q1, PoleGuard::default()).unwrap();
        let h2 = dressed_drive_matrix_pt(&dev, Mode::Q2, PoleGuard::default()).unwrap();
        // bare ladder: <n-1|a|n> = sqrt(n) on the driven mode, zero elsewhere
        for (h, mode) in [(&h1, Mode::Q1), (&h2, Mode::Q2)] {
            for (i, &bra) in DRESSED_BASIS.iter().enumerate() {
                for (k, &ket) in DRESSED_BASIS.iter().enumerate() {
                    let (nb, nk) = (mode.occupation(bra), mode.occupation(ket));
                    let same_other = mode.other().occupation(bra) == mode.other().occupation(ket);
                    let expected = if same_other && nk == nb + 1 {
                        (nk as f64).sqrt()
                    } else if same_other && nb == nk + 1 {
                        (nb as f64).sqrt()
                    } else {
                        0.0
                    };
                    assert_eq!(h.matrix[(i, k)], expected, "{mode:?} {bra:?} {ket:?}");
                }
            }
        }
        assert_eq!(h1.entry((1, 0), (2, 0)), Some(2f64.sqrt()));
    }

    #[test]
    fn conditional_entries_at_reference_point() {
        let h1 = dressed_drive_matrix_pt(&device(-78.0), Mode::Q1, PoleGuard::default()).unwrap();
        // -J/Delta = 1.08/78
        assert!((h1.entry((0, 0), (0, 1)).unwrap() - 0.013846).abs() < 5e-7);
        let (c0, c1) = h1.conditional_entries();
        assert_eq!(c0, h1.entry((0, 0), (0, 1)).unwrap());
        assert_eq!(c1, h1.entry((1, 0), (1, 1)).unwrap());
        // 2 J d1 / (Delta (d1 + Delta)) = 2*1.08*(-347)/((-78)(-425))
        assert!((c1 - c0 - (-0.022610)).abs() < 5e-7, "{}", c1 - c0);
        // printed text form J(d1 - Delta)/(Delta(d1 + Delta)) is the same entry
        let (j, d, d1) = (1.08, -78.0, -347.0);
        assert!((c1 - j * (d1 - d) / (d * (d1 + d))).abs() < 1e-15);
    }

    #[test]
    fn h2_conditional_entries() {
        let dev = device(-78.0);
        let h2 = dressed_drive_matrix_pt(&dev, Mode::Q2, PoleGuard::default()).unwrap();
        let (c0, c1) = h2.conditional_entries();
        assert_eq!(c0, h2.entry((0, 0), (1, 0)).unwrap());
        assert_eq!(c1, h2.entry((0, 1), (1, 1)).unwrap());
        let (j, d, d2) = (1.08, -78.0, -360.0);
        assert!((0.5 * (c1 - c0) - j * d2 / (d * (d - d2))).abs() < 1e-15);
        assert_eq!(h2.direct_entries(), (1.0, 1.0));
    }
}
