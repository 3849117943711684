//! Truncated two-mode Fock space and dense operators on it.
//!
//! Basis states are labeled `(n1, n2)` and enumerated row-major with mode 1
//! as the slow index, so `|n1 n2>` sits at index `n1 * levels[1] + n2`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupation numbers `(n1, n2)` of a two-mode Fock state.
pub type FockLabel = (usize, usize);

/// One of the two transmon modes. `Q1` is annihilated by `b`, `Q2` by `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Q1,
    Q2,
}

impl Mode {
    /// Parses the 1-based mode index.
    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            1 => Ok(Mode::Q1),
            2 => Ok(Mode::Q2),
            other => Err(Error::InvalidMode(other)),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mode::Q1 => 1,
            Mode::Q2 => 2,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Mode::Q1 => Mode::Q2,
            Mode::Q2 => Mode::Q1,
        }
    }

    /// Occupation of this mode in `label`.
    pub fn occupation(self, label: FockLabel) -> usize {
        match self {
            Mode::Q1 => label.0,
            Mode::Q2 => label.1,
        }
    }

    /// Label with this mode's occupation set to `mine` and the other to `theirs`.
    pub fn label(self, mine: usize, theirs: usize) -> FockLabel {
        match self {
            Mode::Q1 => (mine, theirs),
            Mode::Q2 => (theirs, mine),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceDescriptor {
    levels: [usize; 2],
    labels: Vec<FockLabel>,
}

impl SpaceDescriptor {
    pub fn new(levels_per_mode: &[usize]) -> Result<Self> {
        if levels_per_mode.len() != 2 {
            return Err(Error::ModeCount(levels_per_mode.len()));
        }
        if let Some(&bad) = levels_per_mode.iter().find(|&&l| l < 2) {
            return Err(Error::TooFewLevels(bad));
        }
        let levels = [levels_per_mode[0], levels_per_mode[1]];
        let labels = (0..levels[0])
            .flat_map(|n1| (0..levels[1]).map(move |n2| (n1, n2)))
            .collect();
        Ok(SpaceDescriptor { levels, labels })
    }

    pub fn levels(&self) -> [usize; 2] {
        self.levels
    }

    pub fn levels_of(&self, mode: Mode) -> usize {
        self.levels[mode.index() - 1]
    }

    pub fn dimension(&self) -> usize {
        self.levels[0] * self.levels[1]
    }

    pub fn labels(&self) -> &[FockLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> FockLabel {
        self.labels[index]
    }

    pub fn index_of(&self, label: FockLabel) -> Option<usize> {
        (label.0 < self.levels[0] && label.1 < self.levels[1])
            .then(|| label.0 * self.levels[1] + label.1)
    }

    /// Total excitation number `n1 + n2` of basis state `index`.
    pub fn excitations(&self, index: usize) -> usize {
        let (a, b) = self.labels[index];
        a + b
    }
}

/// Builds the space for `levels_per_mode` (exactly two entries, each >= 2).
pub fn make_space(levels_per_mode: &[usize]) -> Result<SpaceDescriptor> {
    SpaceDescriptor::new(levels_per_mode)
}

/// Dense complex operator tied to a [`SpaceDescriptor`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: SpaceDescriptor,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(space: &SpaceDescriptor, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = space.dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::ShapeMismatch { rows: matrix.nrows(), cols: matrix.ncols(), dim });
        }
        Ok(Operator { space: space.clone(), matrix })
    }

    pub fn zeros(space: &SpaceDescriptor) -> Self {
        let dim = space.dimension();
        Operator { space: space.clone(), matrix: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(space: &SpaceDescriptor) -> Self {
        let dim = space.dimension();
        Operator { space: space.clone(), matrix: DMatrix::identity(dim, dim) }
    }

    /// Diagonal operator with entries `f(label)`.
    pub fn diagonal(space: &SpaceDescriptor, f: impl Fn(FockLabel) -> f64) -> Self {
        let mut op = Operator::zeros(space);
        for (i, &label) in space.labels().iter().enumerate() {
            op.matrix[(i, i)] = C64::new(f(label), 0.0);
        }
        op
    }

    pub fn annihilation(space: &SpaceDescriptor, mode: Mode) -> Self {
        let mut op = Operator::zeros(space);
        for (ket, &label) in space.labels().iter().enumerate() {
            let n = mode.occupation(label);
            if n == 0 {
                continue;
            }
            let lowered = match mode {
                Mode::Q1 => (label.0 - 1, label.1),
                Mode::Q2 => (label.0, label.1 - 1),
            };
            let bra = space.index_of(lowered).expect("lowered label is in range");
            op.matrix[(bra, ket)] = C64::new((n as f64).sqrt(), 0.0);
        }
        op
    }

    pub fn creation(space: &SpaceDescriptor, mode: Mode) -> Self {
        Operator::annihilation(space, mode).dagger()
    }

    pub fn number(space: &SpaceDescriptor, mode: Mode) -> Self {
        Operator::diagonal(space, |label| mode.occupation(label) as f64)
    }

    /// `n1 + n2`.
    pub fn total_number(space: &SpaceDescriptor) -> Self {
        Operator::diagonal(space, |(a, b)| (a + b) as f64)
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// `<bra| O |ket>`; `None` if either label is outside the truncation.
    pub fn element(&self, bra: FockLabel, ket: FockLabel) -> Option<C64> {
        Some(self.matrix[(self.space.index_of(bra)?, self.space.index_of(ket)?)])
    }

    pub fn dagger(&self) -> Self {
        Operator { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        let factor = factor.into();
        Operator { space: self.space.clone(), matrix: &self.matrix * factor }
    }

    fn check_space(&self, other: &Operator) -> Result<()> {
        if self.space.levels != other.space.levels {
            return Err(Error::SpaceMismatch { left: self.space.levels, right: other.space.levels });
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix - &other.matrix })
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        self.check_space(other)?;
        Ok(max_abs(&(&self.matrix - &other.matrix)))
    }

    /// `max |O - O^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Real part of a Hermitian operator's matrix. Only meaningful when the
    /// imaginary parts vanish, as for every Hamiltonian built without drive phase.
    pub fn real_matrix(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}
