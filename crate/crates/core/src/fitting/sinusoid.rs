use std::f64::consts::{PI, TAU};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, Matrix5, OMatrix, Vector5, U5};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 8;
/// Spectral peak over median below which a trace counts as flat.
pub const SNR_THRESHOLD: f64 = 3.0;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
const PAD_FACTOR: usize = 8;

/// Half-widths of the 95% intervals of a [`SinusoidFit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidCi {
    pub amplitude: f64,
    pub decay_time: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
}

/// `amplitude * exp(-t / decay_time) * cos(2 pi frequency t + phase) + offset`.
///
/// `frequency >= 0` and `amplitude >= 0`; signs are folded into `phase`.
/// `rotation` is +1 or -1 when the sense of rotation is known (see
/// [`crate::fitting::rotation_sense`]), otherwise +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub frequency: f64,
    pub decay_time: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// Covariance of `(amplitude, decay rate, frequency, phase, offset)`.
    pub covariance: [[f64; 5]; 5],
    pub ci95: SinusoidCi,
    pub residual_rms: f64,
    pub snr: f64,
    pub rotation: f64,
}

impl SinusoidFit {
    /// Placeholder for a trace without a detectable oscillation.
    pub fn flat(offset: f64, snr: f64) -> Self {
        let inf = f64::INFINITY;
        SinusoidFit {
            frequency: 0.0,
            decay_time: inf,
            amplitude: 0.0,
            phase: 0.0,
            offset,
            covariance: [[inf; 5]; 5],
            ci95: SinusoidCi { amplitude: inf, decay_time: inf, frequency: inf, phase: inf, offset: inf },
            residual_rms: f64::NAN,
            snr,
            rotation: 1.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.frequency == 0.0 && self.ci95.frequency.is_infinite()
    }

    pub fn signed_frequency(&self) -> f64 {
        self.rotation * self.frequency
    }

    pub fn decay_rate(&self) -> f64 {
        1.0 / self.decay_time
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.decay_time).exp() * (TAU * self.frequency * t + self.phase).cos() + self.offset
    }
}

/// Peak-to-median ratio of the one-sided amplitude spectrum, and the
/// frequency of the peak on a zero-padded grid.
pub fn spectral_peak(times: &[f64], values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<Complex64> = values.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    let mut planner = FftPlanner::new();

    let mut plain = centered.clone();
    planner.plan_fft_forward(n).process(&mut plain);
    let mut mags: Vec<f64> = plain[1..=n / 2].iter().map(|c| c.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    // variations below ~1e-10 of max(|v|, 1) count as numerical noise
    let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let snr = if peak <= 1e-10 * scale * n as f64 {
        0.0
    } else if median <= 0.0 {
        f64::INFINITY
    } else {
        peak / median
    };

    let m = (n * PAD_FACTOR).next_power_of_two();
    let mut padded = centered;
    padded.resize(m, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(m).process(&mut padded);
    let k = (1..=m / 2).max_by(|&a, &b| padded[a].norm().total_cmp(&padded[b].norm())).unwrap_or(1);
    (snr, k as f64 / (m as f64 * dt))
}

struct DampedCosine<'a> {
    t: &'a [f64],
    y: &'a [f64],
    p: Vector5<f64>,
}

impl DampedCosine<'_> {
    fn model_parts(&self, t: f64) -> (f64, f64, f64) {
        let [a, g, f, ph, _] = [self.p[0], self.p[1], self.p[2], self.p[3], self.p[4]];
        let e = (-g * t).exp();
        let arg = TAU * f * t + ph;
        (a * e, arg.cos(), arg.sin())
    }
}

impl LeastSquaresProblem<f64, Dyn, U5> for DampedCosine<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U5>;
    type ParameterStorage = Owned<f64, U5>;

    fn set_params(&mut self, x: &Vector5<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> Vector5<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = DVector::from_iterator(
            self.t.len(),
            self.t.iter().zip(self.y).map(|(&t, &y)| {
                let (ae, c, _) = self.model_parts(t);
                ae * c + self.p[4] - y
            }),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U5>> {
        let a = self.p[0];
        let mut j = OMatrix::<f64, Dyn, U5>::zeros(self.t.len());
        for (k, &t) in self.t.iter().enumerate() {
            let (ae, c, s) = self.model_parts(t);
            let e = if a != 0.0 { ae / a } else { (-self.p[1] * t).exp() };
            j[(k, 0)] = e * c;
            j[(k, 1)] = -t * ae * c;
            j[(k, 2)] = -TAU * t * ae * s;
            j[(k, 3)] = -ae * s;
            j[(k, 4)] = 1.0;
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Least-squares fit of a damped cosine.
///
/// The starting frequency is the zero-padded spectral peak; four starting
/// phases are tried and the lowest residual kept.
pub fn fit_damped_sinusoid(times: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    let n = times.len();
    if n != values.len() {
        return Err(Error::InvalidParameter("times and values differ in length".into()));
    }
    if n < MIN_SAMPLES {
        return Err(Error::TooFewPoints { found: n, required: MIN_SAMPLES });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("times must be strictly ascending and values finite".into()));
    }
    let (snr, f0) = spectral_peak(times, values);
    if snr < SNR_THRESHOLD {
        return Err(Error::NoOscillation { snr, threshold: SNR_THRESHOLD });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let a0 = 0.5 * (hi - lo);

    let solver = LevenbergMarquardt::new().with_patience(400);
    type Candidate = (f64, Vector5<f64>, OMatrix<f64, Dyn, U5>);
    let mut best: Option<Candidate> = None;
    let mut last_reason = String::new();
    for k in 0..4 {
        let start = Vector5::new(a0, 0.0, f0, k as f64 * 0.5 * PI, mean);
        let problem = DampedCosine { t: times, y: values, p: start };
        let (solved, report) = solver.minimize(problem);
        if !report.termination.was_successful() {
            last_reason = format!("{:?}", report.termination);
            continue;
        }
        let (Some(r), Some(j)) = (solved.residuals(), solved.jacobian()) else { continue };
        let rss = r.norm_squared();
        if best.as_ref().is_none_or(|b| rss < b.0) {
            best = Some((rss, solved.p, j));
        }
    }
    let Some((rss, p, jac)) = best else {
        return Err(Error::NonConvergence(format!("damped sinusoid fit: {last_reason}")));
    };

    let s2 = rss / (n - 5) as f64;
    let jtj: Matrix5<f64> = jac.transpose() * &jac;
    let mut cov = jtj.try_inverse().map(|m| m * s2).unwrap_or_else(|| Matrix5::repeat(f64::INFINITY));

    // fold signs so that amplitude >= 0 and frequency >= 0
    let (mut a, g, mut f, mut ph, c) = (p[0], p[1], p[2], p[3], p[4]);
    let mut flip = Vector5::repeat(1.0);
    if a < 0.0 {
        a = -a;
        ph += PI;
        flip[0] = -1.0;
    }
    if f < 0.0 {
        f = -f;
        ph = -ph;
        flip[2] = -1.0;
        flip[3] = -1.0;
    }
    ph = (ph + PI).rem_euclid(TAU) - PI;
    for r in 0..5 {
        for k in 0..5 {
            cov[(r, k)] *= flip[r] * flip[k];
        }
    }

    let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let decay_time = if g > 0.0 { 1.0 / g } else { f64::INFINITY };
    let tau_ci = if g != 0.0 { Z95 * sd(1) / (g * g) } else { f64::INFINITY };
    let mut covariance = [[0.0; 5]; 5];
    for (r, row) in covariance.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = cov[(r, k)];
        }
    }
    Ok(SinusoidFit {
        frequency: f,
        decay_time,
        amplitude: a,
        phase: ph,
        offset: c,
        covariance,
        ci95: SinusoidCi {
            amplitude: Z95 * sd(0),
            decay_time: tau_ci,
            frequency: Z95 * sd(2),
            phase: Z95 * sd(3),
            offset: Z95 * sd(4),
        },
        residual_rms: (rss / n as f64).sqrt(),
        snr,
        rotation: 1.0,
    })
}

/// Like [`fit_damped_sinusoid`], but a flat trace yields [`SinusoidFit::flat`].
pub fn fit_or_flat(times: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    match fit_damped_sinusoid(times, values) {
        Err(Error::NoOscillation { snr, .. }) => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            Ok(SinusoidFit::flat(mean, snr))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synth(a: f64, tau: f64, f: f64, ph: f64, c: f64, tmax: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| tmax * k as f64 / (n - 1) as f64).collect();
        let y = t.iter().map(|&t| a * (-t / tau).exp() * (TAU * f * t + ph).cos() + c).collect();
        (t, y)
    }

    #[test]
    fn noiseless_recovery() {
        let (t, y) = synth(0.5, 3.0, 2.0, 0.3, 0.5, 8.0, 400);
        let fit = fit_damped_sinusoid(&t, &y).unwrap();
        assert!((fit.frequency - 2.0).abs() < 1e-6, "{}", fit.frequency);
        assert!((fit.decay_time - 3.0).abs() < 1e-5);
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
        assert!((fit.phase - 0.3).abs() < 1e-6);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn sign_folding() {
        // A cos(-wt + p) = A cos(wt - p); -A cos(x) = A cos(x + pi)
        let (t, y) = synth(-0.4, 1e9, 1.2, 0.5, 0.5, 6.0, 300);
        let fit = fit_damped_sinusoid(&t, &y).unwrap();
        assert!(fit.amplitude > 0.0 && fit.frequency > 0.0);
        assert!((fit.phase - (0.5 - PI)).abs() < 1e-6, "{}", fit.phase);
    }

    #[test]
    fn constant_signal_has_no_oscillation() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let y = vec![0.3; 100];
        assert!(matches!(fit_damped_sinusoid(&t, &y), Err(Error::NoOscillation { .. })));
        let flat = fit_or_flat(&t, &y).unwrap();
        assert!(flat.is_flat() && (flat.offset - 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let (t, y) = synth(0.5, 3.0, 2.0, 0.0, 0.5, 1.0, 7);
        assert!(matches!(fit_damped_sinusoid(&t, &y), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn noisy_ci_is_sensible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let (t, mut y) = synth(0.5, 1e9, 1.5, 0.0, 0.5, 5.0, 200);
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let fit = fit_damped_sinusoid(&t, &y).unwrap();
        assert!(fit.ci95.frequency > 0.0 && fit.ci95.frequency < 0.05);
        assert!((fit.frequency - 1.5).abs() < 3.0 * fit.ci95.frequency);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_within_three_ci(
            f in 0.5f64..3.0, tau in 2.0f64..20.0, ph in -3.0f64..3.0, a in 0.2f64..0.5, seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // SNR = a / sigma >= 10
            let noise = Normal::new(0.0, a / 10.0).unwrap();
            let (t, mut y) = synth(a, tau, f, ph, 0.5, 5.0, 250);
            y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            let fit = fit_damped_sinusoid(&t, &y).unwrap();
            prop_assert!((fit.frequency - f).abs() <= 3.0 * fit.ci95.frequency);
            prop_assert!((fit.amplitude - a).abs() <= 3.0 * fit.ci95.amplitude);
            prop_assert!((fit.offset - 0.5).abs() <= 3.0 * fit.ci95.offset);
        }
    }
}
