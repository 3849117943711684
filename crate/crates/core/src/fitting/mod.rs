//! Damped-sinusoid fits, effective coupling, linear-regime and plateau fits.

mod jeff;
mod sinusoid;

pub use jeff::{
    compute_jeff, fit_linear_regime, fit_saturation, fit_saturation_after, fit_trace, jeff_from_traces,
    rotation_sense, JeffCurve, JeffPoint, LinearFit, SaturationFit, MIN_LINEAR_POINTS, MIN_PLATEAU_POINTS,
    PLATEAU_FRACTION, R2_THRESHOLD,
};
pub use sinusoid::{
    fit_damped_sinusoid, fit_or_flat, spectral_peak, SinusoidCi, SinusoidFit, MIN_SAMPLES, SNR_THRESHOLD, Z95,
};
