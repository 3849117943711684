use crosskit_core::dynamics::{decoherence_envelope, simulate_cr_rabi, simulate_cr_rabi_with, Frame, SimOptions};
use crosskit_core::fitting::{fit_trace, jeff_from_traces};
use crosskit_core::hilbert::Mode;
use crosskit_core::io::{pair_traces, read_traces, write_sweep};
use crosskit_core::model::DeviceParams;
use crosskit_core::perturbation::{cr_coefficients, CrMethod, PoleGuard};
use crosskit_core::pipeline::{amplitude_sweep, curve_from_traces, detuning_sweep, SweepSettings};

fn device(delta: f64) -> DeviceParams {
    DeviceParams::from_detuning(4349.0, delta, -347.0, -360.0, 1.08).unwrap()
}

fn grid(tmax: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * tmax / (n - 1) as f64).collect()
}

#[test]
fn control_state_reverses_rotation() {
    let dev = device(-78.0);
    let t = grid(60.0, 601);
    let g = fit_trace(&simulate_cr_rabi(&dev, 4.0, &t, false).unwrap()).unwrap();
    let e = fit_trace(&simulate_cr_rabi(&dev, 4.0, &t, true).unwrap()).unwrap();
    assert!(g.signed_frequency() < 0.0 && e.signed_frequency() > 0.0, "{} {}", g.signed_frequency(), e.signed_frequency());
}

#[test]
fn jeff_is_half_the_frequency_difference() {
    let dev = device(-20.0);
    let t = grid(20.0, 401);
    let g = simulate_cr_rabi(&dev, 5.0, &t, false).unwrap();
    let e = simulate_cr_rabi(&dev, 5.0, &t, true).unwrap();
    let p = jeff_from_traces(&g, &e).unwrap();
    assert_eq!(p.jeff, 0.5 * (p.fpi - p.f0));
    let mu = cr_coefficients(&dev, CrMethod::Numeric(Mode::Q2), PoleGuard::default()).unwrap().mu;
    assert!((p.jeff / 5.0 - mu).abs() / mu < 0.05, "{} vs {mu}", p.jeff / 5.0);
}

#[test]
fn fitted_decay_follows_t2() {
    let dev = device(-20.0);
    let t = grid(12.0, 601);
    let clean = simulate_cr_rabi(&dev, 20.0, &t, false).unwrap();
    let damped = decoherence_envelope(&clean, 57.0, 2.8).unwrap();
    let fit = fit_trace(&damped).unwrap();
    assert!((fit.decay_time - 2.8).abs() / 2.8 < 0.2, "decay {}", fit.decay_time);
}

#[test]
fn lab_frame_cr_agrees_with_rotating_frame() {
    let dev = device(-78.0);
    let t = grid(0.3, 31);
    let rot = simulate_cr_rabi(&dev, 20.0, &t, true).unwrap();
    let opts = SimOptions { frame: Frame::Lab, ..Default::default() };
    let lab = simulate_cr_rabi_with(&dev, 20.0, &t, true, &opts).unwrap();
    let rms = (rot.p_excited.iter().zip(&lab.p_excited).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64)
        .sqrt();
    assert!(rms < 0.01, "rms {rms}");
}

#[test]
fn noisy_sweep_keeps_the_slope() {
    let settings = SweepSettings {
        amplitudes: (0..8).map(|k| 1.0 + 0.5 * k as f64).collect(),
        durations_us: grid(50.0, 501),
        seed: 3,
        readout_noise: 0.02,
        decoherence: None,
        pole_guard: 1.0,
    };
    let dev = device(-20.0);
    let sweep = amplitude_sweep(&dev, &settings).unwrap();
    let slope = sweep.curve.linear.expect("linear regime").slope;
    let mu = cr_coefficients(&dev, CrMethod::Numeric(Mode::Q2), PoleGuard::default()).unwrap().mu;
    assert!((slope - mu).abs() / mu < 0.05, "{slope} vs {mu}");
}

#[test]
fn written_traces_refit_to_the_same_curves() {
    let settings = SweepSettings {
        amplitudes: (0..6).map(|k| 2.0 + k as f64).collect(),
        durations_us: grid(20.0, 201),
        seed: 5,
        readout_noise: 0.0,
        decoherence: None,
        pole_guard: 1.0,
    };
    let sweep = detuning_sweep(&device(-78.0), &[-40.0, 0.0, -20.0], &settings, None).unwrap();
    assert_eq!(sweep.excluded.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    write_sweep(dir.path(), 5, &sweep).unwrap();
    let path = dir.path().join("traces.csv");
    let grouped = pair_traces(&path, read_traces(&path).unwrap()).unwrap();
    assert_eq!(grouped.len(), 2);
    for (delta, pairs) in grouped {
        let original = sweep.sweeps.iter().find(|s| s.curve.delta == delta).unwrap();
        let refit = curve_from_traces(delta, &pairs).unwrap();
        for (a, b) in refit.points.iter().zip(&original.curve.points) {
            assert!((a.jeff - b.jeff).abs() < 1e-9, "{} vs {}", a.jeff, b.jeff);
        }
    }
}
