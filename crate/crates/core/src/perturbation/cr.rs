use serde::{Deserialize, Serialize};

use super::{dressed_drive_matrix_pt, exact_dressed, validity_check, DressedDriveMatrix, PoleGuard, ValidityReport};
use crate::error::{Error, Result};
use crate::hilbert::Mode;
use crate::model::DeviceParams;

/// How the ZX participation `mu` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrMethod {
    /// `mu = (J / Delta) * d2 / (d2 + Delta)`, evaluated as printed.
    ClosedForm,
    /// Half the difference of the conditional target-flip entries of the
    /// perturbative dressed drive matrix for the given line.
    MatrixElement(Mode),
    /// Same entries taken from the numerically dressed drive operator.
    Numeric(Mode),
}

/// Coefficients of `eps [stark ZI - nu IX - mu ZX]` (control first).
///
/// `nu` and `stark` need matrix elements and are absent for the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCRTerms {
    pub method: CrMethod,
    pub mu: f64,
    pub nu: Option<f64>,
    pub stark: Option<f64>,
}

impl EffectiveCRTerms {
    fn from_matrix(method: CrMethod, m: &DressedDriveMatrix) -> Self {
        let (c0, c1) = m.conditional_entries();
        let (d0, d1) = m.direct_entries();
        EffectiveCRTerms { method, mu: 0.5 * (c1 - c0), nu: Some(0.5 * (c1 + c0)), stark: Some(0.5 * (d0 + d1)) }
    }
}

pub fn mu_closed_form(device: &DeviceParams, guard: PoleGuard) -> Result<f64> {
    let delta = guard.check("Delta", device.detuning())?;
    let denom = guard.check("delta2 + Delta", device.anh2 + delta)?;
    Ok(device.coupling_j / delta * device.anh2 / denom)
}

pub fn cr_coefficients(device: &DeviceParams, method: CrMethod, guard: PoleGuard) -> Result<EffectiveCRTerms> {
    match method {
        CrMethod::ClosedForm => Ok(EffectiveCRTerms { method, mu: mu_closed_form(device, guard)?, nu: None, stark: None }),
        CrMethod::MatrixElement(line) => {
            let m = dressed_drive_matrix_pt(device, line, guard)?;
            Ok(EffectiveCRTerms::from_matrix(method, &m))
        }
        CrMethod::Numeric(line) => {
            guard.check("Delta", device.detuning())?;
            let levels = [device.levels[0].max(4), device.levels[1].max(4)];
            let ex = exact_dressed(&device.with_levels(levels))?;
            Ok(EffectiveCRTerms::from_matrix(method, &ex.dressed_drive_matrix(line)))
        }
    }
}

/// All `mu` routes at one detuning, as reported in `mu.csv`.
#[derive(Debug, Clone)]
pub struct MethodComparison {
    pub delta: f64,
    pub closed: Option<f64>,
    pub matrix_h1: Option<f64>,
    pub matrix_h2: Option<f64>,
    pub numeric: Option<f64>,
    pub validity: ValidityReport,
    /// Failures and disagreements, machine-readable.
    pub flags: Vec<String>,
}

/// Ratio beyond which closed-form and matrix-element results are flagged.
const MISMATCH_RATIO: f64 = 2.0;

fn disagrees(a: f64, b: f64) -> bool {
    if a == 0.0 && b == 0.0 {
        return false;
    }
    if a.signum() != b.signum() {
        return true;
    }
    let ratio = (a / b).abs();
    !(1.0 / MISMATCH_RATIO..=MISMATCH_RATIO).contains(&ratio)
}

/// Evaluates closed form, both matrix-element forms and the numeric route
/// (control on line 2) at `device`'s detuning.
pub fn compare_methods(device: &DeviceParams, guard: PoleGuard) -> MethodComparison {
    let validity = validity_check(device, guard);
    let mut flags: Vec<String> = validity.flags.iter().map(ToString::to_string).collect();
    let mut run = |tag: &str, method: CrMethod| match cr_coefficients(device, method, guard) {
        Ok(t) => Some(t.mu),
        Err(e) => {
            flags.push(format!("{tag}-failed:{}", error_tag(&e)));
            None
        }
    };
    let closed = run("closed", CrMethod::ClosedForm);
    let matrix_h1 = run("h1", CrMethod::MatrixElement(Mode::Q1));
    let matrix_h2 = run("h2", CrMethod::MatrixElement(Mode::Q2));
    let numeric = run("numeric", CrMethod::Numeric(Mode::Q2));
    if let Some(c) = closed {
        for (tag, other) in [("h1", matrix_h1), ("h2", matrix_h2)] {
            if other.is_some_and(|o| disagrees(c, o)) {
                flags.push(format!("method-mismatch:{tag}"));
            }
        }
    }
    MethodComparison { delta: device.detuning(), closed, matrix_h1, matrix_h2, numeric, validity, flags }
}

fn error_tag(e: &Error) -> &'static str {
    match e {
        Error::ResonancePole { .. } => "pole",
        Error::LabelAmbiguity { .. } => "label-ambiguity",
        _ => "error",
    }
}
