use nalgebra::{DMatrix, DVector};

use super::drive_matrix::{DressedDriveMatrix, Matrix10};
use super::{DressedSpectrum, SpectrumSource, DRESSED_BASIS};
use crate::error::{Error, Result};
use crate::hilbert::{FockLabel, Mode, SpaceDescriptor};
use crate::model::{build_drive_operator, build_system_hamiltonian, DeviceParams};

/// Minimum bare-state population for a dressed state to be labeled.
pub const LABEL_THRESHOLD: f64 = 0.7;

/// Exact eigenbasis of the system Hamiltonian, labeled by dominant bare state.
///
/// Column `i` of `vectors` is the dressed state labeled `space.label(i)`. Its
/// component on that bare state is positive.
#[derive(Debug, Clone)]
pub struct ExactDressing {
    space: SpaceDescriptor,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
    overlaps: Vec<f64>,
    pub spectrum: DressedSpectrum,
}

impl ExactDressing {
    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn energy(&self, label: FockLabel) -> Option<f64> {
        self.space.index_of(label).map(|i| self.energies[i])
    }

    /// Bare-state population of the dressed state carrying `label`.
    pub fn overlap(&self, label: FockLabel) -> Option<f64> {
        self.space.index_of(label).map(|i| self.overlaps[i])
    }

    pub fn vector(&self, label: FockLabel) -> Option<DVector<f64>> {
        self.space.index_of(label).map(|i| self.vectors.column(i).into_owned())
    }

    /// Orthogonal matrix whose columns are the labeled dressed states.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `V^T O V` for a real operator `O` on the bare space.
    pub fn to_dressed(&self, op: &DMatrix<f64>) -> DMatrix<f64> {
        self.vectors.transpose() * op * &self.vectors
    }

    /// Numerically dressed drive operator restricted to the ten-state basis.
    pub fn dressed_drive_matrix(&self, line: Mode) -> DressedDriveMatrix {
        let full = self.to_dressed(&build_drive_operator(&self.space, line).real_matrix());
        let idx: Vec<usize> = DRESSED_BASIS.iter().map(|&l| self.space.index_of(l).expect("levels >= 4")).collect();
        let matrix = Matrix10::from_fn(|r, c| full[(idx[r], idx[c])]);
        DressedDriveMatrix { line, matrix }
    }

    /// Dressed 0-1 frequency of `target` with the other qubit in `control_state`.
    pub fn transition_frequency(&self, target: Mode, control_state: usize) -> f64 {
        let lo = target.other().label(control_state, 0);
        let hi = target.other().label(control_state, 1);
        self.energy(hi).unwrap() - self.energy(lo).unwrap()
    }
}

/// Diagonalizes the system Hamiltonian one excitation-number block at a time
/// and labels every eigenvector by maximal bare overlap.
///
/// Fails with [`Error::LabelAmbiguity`] if any of the ten low-lying states has
/// overlap below [`LABEL_THRESHOLD`].
pub fn exact_dressed(device: &DeviceParams) -> Result<ExactDressing> {
    if device.levels.iter().any(|&l| l < 4) {
        return Err(Error::InvalidParameter(format!(
            "exact dressing needs at least 4 levels per mode, got {:?}",
            device.levels
        )));
    }
    let space = device.space()?;
    let h = build_system_hamiltonian(device, &space)?.real_matrix();
    let dim = space.dimension();
    let mut energies = vec![0.0; dim];
    let mut overlaps = vec![0.0; dim];
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);

    let max_n = space.levels()[0] + space.levels()[1] - 2;
    for n in 0..=max_n {
        let idx: Vec<usize> = (0..dim).filter(|&i| space.excitations(i) == n).collect();
        let shift = idx.iter().map(|&i| h[(i, i)]).sum::<f64>() / idx.len() as f64;
        let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
            h[(idx[r], idx[c])] - if r == c { shift } else { 0.0 }
        });
        let eig = block.symmetric_eigen();

        // Greedy assignment by descending population, ties to the lower bare index.
        let mut candidates: Vec<(usize, usize, f64)> = (0..idx.len())
            .flat_map(|k| (0..idx.len()).map(move |r| (k, r)))
            .map(|(k, r)| (k, r, eig.eigenvectors[(r, k)].powi(2)))
            .collect();
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(idx[a.1].cmp(&idx[b.1])));
        let mut vec_taken = vec![false; idx.len()];
        let mut bare_taken = vec![false; idx.len()];
        for (k, r, pop) in candidates {
            if vec_taken[k] || bare_taken[r] {
                continue;
            }
            vec_taken[k] = true;
            bare_taken[r] = true;
            let target = idx[r];
            let sign = eig.eigenvectors[(r, k)].signum();
            for (rr, &i) in idx.iter().enumerate() {
                vectors[(i, target)] = sign * eig.eigenvectors[(rr, k)];
            }
            energies[target] = eig.eigenvalues[k] + shift;
            overlaps[target] = pop;
        }
    }

    for &label in DRESSED_BASIS.iter() {
        let i = space.index_of(label).expect("levels >= 4");
        if overlaps[i] < LABEL_THRESHOLD {
            return Err(Error::LabelAmbiguity { label, overlap: overlaps[i], threshold: LABEL_THRESHOLD });
        }
    }

    let mut ten = [0.0; 10];
    for (slot, &label) in ten.iter_mut().zip(DRESSED_BASIS.iter()) {
        *slot = energies[space.index_of(label).unwrap()];
    }
    let zeta = ten[3] - ten[2] - ten[1] + ten[0];
    let spectrum = DressedSpectrum { energies: ten, zeta, source: SpectrumSource::Exact };
    Ok(ExactDressing { space, energies, vectors, overlaps, spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{dressed_energies_pt2, PoleGuard};

    fn device(delta: f64) -> DeviceParams {
        DeviceParams::from_detuning(4349.0, delta, -347.0, -360.0, 1.08).unwrap().with_levels([5, 5])
    }

    #[test]
    fn uncoupled_labels_are_exact() {
        let dev = device(-78.0).with_coupling(0.0);
        let ex = exact_dressed(&dev).unwrap();
        for &label in ex.space().labels() {
            assert_eq!(ex.overlap(label), Some(1.0));
            let (a, b) = (label.0 as f64, label.1 as f64);
            let bare = dev.omega1 * a + 0.5 * dev.anh1 * a * (a - 1.0) + dev.omega2 * b + 0.5 * dev.anh2 * b * (b - 1.0);
            assert!((ex.energy(label).unwrap() - bare).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_pt2_at_reference_point() {
        let dev = device(-78.0);
        let ex = exact_dressed(&dev).unwrap();
        let pt = dressed_energies_pt2(&dev, PoleGuard::default()).unwrap();
        assert!((ex.spectrum.energy((0, 1)).unwrap() - pt.energy((0, 1)).unwrap()).abs() < 1e-5);
        assert!((ex.energy((0, 1)).unwrap() - 4349.01495).abs() < 1e-5);
    }

    #[test]
    fn dressed_vectors_are_orthonormal() {
        let ex = exact_dressed(&device(150.0)).unwrap();
        let v = ex.vectors();
        let gram = v.transpose() * v;
        assert!((gram - DMatrix::identity(v.nrows(), v.ncols())).amax() < 1e-12);
        for &label in ex.space().labels() {
            let i = ex.space().index_of(label).unwrap();
            assert!(v[(i, i)] > 0.0);
        }
    }

    #[test]
    fn near_resonance_is_ambiguous() {
        let err = exact_dressed(&device(0.2)).unwrap_err();
        assert!(matches!(err, Error::LabelAmbiguity { .. }), "{err}");
    }

    #[test]
    fn needs_four_levels() {
        assert!(exact_dressed(&device(-78.0).with_levels([3, 5])).is_err());
    }
}
