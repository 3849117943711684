//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeviceParams, DEFAULT_LEVELS};
use crate::pipeline::SweepSettings;

/// A list of values written as `start:step:stop`, `log:start:stop:n`, or `a,b,c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Range { start: f64, step: f64, stop: f64 },
    Log { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Grid::Range { start, step, stop } => {
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
            Grid::Log { start, stop, count } => {
                if count == 1 {
                    return vec![start];
                }
                let (a, b) = (start.ln(), stop.ln());
                (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
            }
            Grid::List(ref v) => v.clone(),
        }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let text = normalize(text);
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("invalid number `{}`", s.trim()));
        let parts: Vec<&str> = text.split(':').collect();
        let grid = match parts.as_slice() {
            ["log", a, b, n] => {
                let count = n.trim().parse::<usize>().map_err(|_| format!("invalid count `{}`", n.trim()))?;
                let (start, stop) = (num(a)?, num(b)?);
                if !(start > 0.0 && stop > 0.0) || count == 0 {
                    return Err("log grid needs positive bounds and count".into());
                }
                Grid::Log { start, stop, count }
            }
            [a, s, b] => {
                let (start, step, stop) = (num(a)?, num(s)?, num(b)?);
                if !(step > 0.0) || stop < start {
                    return Err(format!("range `{text}` needs step > 0 and stop >= start"));
                }
                Grid::Range { start, step, stop }
            }
            [single] => Grid::List(single.split(',').map(num).collect::<std::result::Result<_, _>>()?),
            _ => return Err(format!("unrecognized grid `{text}`")),
        };
        if grid.values().iter().any(|v| !v.is_finite()) {
            return Err(format!("grid `{text}` has non-finite values"));
        }
        Ok(grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Range { start, step, stop } => write!(f, "{start}:{step}:{stop}"),
            Grid::Log { start, stop, count } => write!(f, "log:{start}:{stop}:{count}"),
            Grid::List(v) => {
                let s: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", s.join(","))
            }
        }
    }
}

/// Everything a run needs, with defaults for the sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub omega2_mhz: f64,
    pub anh1_mhz: f64,
    pub anh2_mhz: f64,
    pub j_mhz: f64,
    /// `omega1 - omega2` of the base device.
    pub delta_mhz: f64,
    pub levels: [usize; 2],
    pub deltas: Grid,
    pub amplitudes: Grid,
    pub tmax_ns: f64,
    pub dt_ns: f64,
    pub seed: u64,
    pub pole_guard_mhz: f64,
    /// Standard deviation of Gaussian noise added to `p_excited`.
    pub readout_noise: f64,
    pub decoherence: bool,
    pub t1_us: f64,
    pub t2_us: f64,
    pub lab_validation: bool,
    pub output_dir: PathBuf,
}

pub const REQUIRED_KEYS: [&str; 4] = ["omega2_mhz", "anh1_mhz", "anh2_mhz", "j_mhz"];
pub const DEFAULT_DELTA_MHZ: f64 = -78.0;

impl RunConfig {
    /// Config with the given device constants and default sweep settings.
    pub fn with_device(omega2_mhz: f64, anh1_mhz: f64, anh2_mhz: f64, j_mhz: f64) -> Self {
        RunConfig {
            omega2_mhz,
            anh1_mhz,
            anh2_mhz,
            j_mhz,
            delta_mhz: DEFAULT_DELTA_MHZ,
            levels: [DEFAULT_LEVELS; 2],
            deltas: Grid::Range { start: -300.0, step: 20.0, stop: 500.0 },
            amplitudes: Grid::Log { start: 0.5, stop: 40.0, count: 17 },
            tmax_ns: 8000.0,
            dt_ns: 10.0,
            seed: 0,
            pole_guard_mhz: 1.0,
            readout_noise: 0.0,
            decoherence: false,
            t1_us: 57.0,
            t2_us: 7.8,
            lab_validation: false,
            output_dir: PathBuf::from("out"),
        }
    }

    /// The base device at `delta_mhz`.
    pub fn device(&self) -> Result<DeviceParams> {
        Ok(DeviceParams::from_detuning(self.omega2_mhz, self.delta_mhz, self.anh1_mhz, self.anh2_mhz, self.j_mhz)?
            .with_levels(self.levels))
    }

    /// Sample times `0, dt, ..., tmax` in microseconds.
    pub fn durations_us(&self) -> Vec<f64> {
        let n = (self.tmax_ns / self.dt_ns + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.dt_ns * 1e-3).collect()
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            amplitudes: self.amplitudes.values(),
            durations_us: self.durations_us(),
            seed: self.seed,
            readout_noise: self.readout_noise,
            decoherence: self.decoherence.then_some((self.t1_us, self.t2_us)),
            pole_guard: self.pole_guard_mhz,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::with_device(f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        let mut seen: Vec<&str> = Vec::new();
        let mut omega1: Option<(usize, f64)> = None;
        let mut delta_line: Option<usize> = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), normalize(value.trim()));
            let float = || value.parse::<f64>().map_err(|_| err(format!("`{key}`: invalid number `{value}`")));
            let boolean = || match value.as_str() {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(err(format!("`{key}`: expected true/false, got `{value}`"))),
            };
            let grid = || Grid::parse(&value).map_err(|m| err(format!("`{key}`: {m}")));
            let canonical = KNOWN_KEYS.iter().find(|&&k| k == key).copied();
            let Some(canonical) = canonical else {
                return Err(err(format!("unknown key `{key}`")));
            };
            if seen.contains(&canonical) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(canonical);
            match canonical {
                "omega2_mhz" => cfg.omega2_mhz = float()?,
                "anh1_mhz" => cfg.anh1_mhz = float()?,
                "anh2_mhz" => cfg.anh2_mhz = float()?,
                "j_mhz" => cfg.j_mhz = float()?,
                "omega1_mhz" => omega1 = Some((line_no, float()?)),
                "delta_mhz" => {
                    cfg.delta_mhz = float()?;
                    delta_line = Some(line_no);
                }
                "levels" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    let parsed: std::result::Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
                    cfg.levels = match parsed.as_deref() {
                        Ok([n]) => [*n, *n],
                        Ok([a, b]) => [*a, *b],
                        _ => return Err(err(format!("`levels`: expected `n` or `n1,n2`, got `{value}`"))),
                    };
                }
                "deltas" => cfg.deltas = grid()?,
                "amplitudes" => cfg.amplitudes = grid()?,
                "tmax_ns" => cfg.tmax_ns = float()?,
                "dt_ns" => cfg.dt_ns = float()?,
                "seed" => cfg.seed = value.parse().map_err(|_| err(format!("`seed`: invalid integer `{value}`")))?,
                "pole_guard_mhz" => cfg.pole_guard_mhz = float()?,
                "readout_noise" => cfg.readout_noise = float()?,
                "decoherence" => cfg.decoherence = boolean()?,
                "t1_us" => cfg.t1_us = float()?,
                "t2_us" => cfg.t2_us = float()?,
                "lab_validation" => cfg.lab_validation = boolean()?,
                "output_dir" => cfg.output_dir = PathBuf::from(value.as_str()),
                _ => unreachable!("key list and match arms agree"),
            }
        }

        let missing: Vec<&'static str> = REQUIRED_KEYS.iter().filter(|k| !seen.contains(k)).copied().collect();
        if !missing.is_empty() {
            return Err(Error::MissingKey(missing));
        }
        if let Some((line, w1)) = omega1 {
            let implied = w1 - cfg.omega2_mhz;
            match delta_line {
                Some(_) if (implied - cfg.delta_mhz).abs() > 1e-9 => {
                    return Err(Error::Parse {
                        line,
                        message: format!("omega1_mhz implies delta {implied}, but delta_mhz is {}", cfg.delta_mhz),
                    })
                }
                _ => cfg.delta_mhz = implied,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.device()?;
        let positive = [("tmax_ns", self.tmax_ns), ("dt_ns", self.dt_ns), ("pole_guard_mhz", self.pole_guard_mhz)];
        for (name, v) in positive.into_iter().chain([("t1_us", self.t1_us), ("t2_us", self.t2_us)]) {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.readout_noise >= 0.0) {
            return Err(Error::InvalidParameter(format!("readout_noise must be >= 0, got {}", self.readout_noise)));
        }
        if self.amplitudes.values().iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidParameter("amplitudes must be >= 0".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse(echo())` reproduces the config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("omega2_mhz", self.omega2_mhz.to_string());
        put("anh1_mhz", self.anh1_mhz.to_string());
        put("anh2_mhz", self.anh2_mhz.to_string());
        put("j_mhz", self.j_mhz.to_string());
        put("delta_mhz", self.delta_mhz.to_string());
        put("levels", format!("{},{}", self.levels[0], self.levels[1]));
        put("deltas", self.deltas.to_string());
        put("amplitudes", self.amplitudes.to_string());
        put("tmax_ns", self.tmax_ns.to_string());
        put("dt_ns", self.dt_ns.to_string());
        put("seed", self.seed.to_string());
        put("pole_guard_mhz", self.pole_guard_mhz.to_string());
        put("readout_noise", self.readout_noise.to_string());
        put("decoherence", self.decoherence.to_string());
        put("t1_us", self.t1_us.to_string());
        put("t2_us", self.t2_us.to_string());
        put("lab_validation", self.lab_validation.to_string());
        put("output_dir", self.output_dir.display().to_string());
        out
    }
}

const KNOWN_KEYS: [&str; 19] = [
    "omega2_mhz",
    "anh1_mhz",
    "anh2_mhz",
    "j_mhz",
    "omega1_mhz",
    "delta_mhz",
    "levels",
    "deltas",
    "amplitudes",
    "tmax_ns",
    "dt_ns",
    "seed",
    "pole_guard_mhz",
    "readout_noise",
    "decoherence",
    "t1_us",
    "t2_us",
    "lab_validation",
    "output_dir",
];

/// Accepts the Unicode minus sign.
fn normalize(s: &str) -> String {
    s.replace('\u{2212}', "-")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PAPER: &str = "omega2_mhz = 4349\nanh1_mhz = \u{2212}347\nanh2_mhz = -360\nj_mhz = 1.08\n";

    #[test]
    fn reference_device_is_accepted() {
        let cfg = RunConfig::parse(PAPER).unwrap();
        assert_eq!(cfg.anh1_mhz, -347.0);
        assert_eq!(cfg.delta_mhz, DEFAULT_DELTA_MHZ);
        assert_eq!(cfg.amplitudes.values().len(), 17);
        assert_eq!(cfg.durations_us().len(), 801);
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn omega1_sets_detuning() {
        let cfg = RunConfig::parse(&format!("{PAPER}omega1_mhz = 4271  # Q1\n")).unwrap();
        assert_eq!(cfg.delta_mhz, -78.0);
        let err = RunConfig::parse(&format!("{PAPER}omega1_mhz = 4271\ndelta_mhz = 10\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn typo_is_rejected_with_line() {
        let err = RunConfig::parse(&format!("{PAPER}\nomega1_mzh = 4271\n")).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 6);
                assert!(message.contains("omega1_mzh"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_keys_are_listed() {
        let err = RunConfig::parse("omega2_mhz = 4349\n").unwrap_err();
        assert!(matches!(err, Error::MissingKey(ref k) if k == &["anh1_mhz", "anh2_mhz", "j_mhz"]));
    }

    #[test]
    fn grids() {
        assert_eq!(Grid::parse("-300:20:500").unwrap().values().len(), 41);
        assert_eq!(Grid::parse("1,2, 3.5").unwrap().values(), vec![1.0, 2.0, 3.5]);
        let log = Grid::parse("log:0.5:40:17").unwrap().values();
        assert!((log[0] - 0.5).abs() < 1e-15 && (log[16] - 40.0).abs() < 1e-12);
        assert_eq!(Grid::parse("\u{2212}600:5:600").unwrap().values()[0], -600.0);
        assert!(Grid::parse("1:0:5").is_err());
        assert!(Grid::parse("log:0:5:3").is_err());
    }

    proptest! {
        #[test]
        fn echo_round_trips(
            w2 in 3000.0f64..6000.0, d1 in -400.0f64..-100.0, d2 in -400.0f64..-100.0, j in 0.1f64..10.0,
            delta in -500.0f64..500.0, seed in any::<u64>(), noise in 0.0f64..0.2, dec in any::<bool>(),
            start in -600.0f64..0.0, step in 0.5f64..50.0,
        ) {
            let mut cfg = RunConfig::with_device(w2, d1, d2, j);
            cfg.delta_mhz = delta;
            cfg.seed = seed;
            cfg.readout_noise = noise;
            cfg.decoherence = dec;
            cfg.deltas = Grid::Range { start, step, stop: start + 40.0 * step };
            cfg.amplitudes = Grid::List(vec![0.5, step, 2.0 * step]);
            prop_assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        }
    }
}
