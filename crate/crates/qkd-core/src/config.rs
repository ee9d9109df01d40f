//! Experiment configuration: the full parameter set of one run, a flat
//! key-value file format for it, and the bundled presets.
//!
//! Configuration files hold one `key = value` assignment per line with `#`
//! comments. Keys use dotted sections (`detectors.1a.eta = 0.5`); values are
//! SI base units (seconds, 1/s, radians). Keys with an `_ns` or `_khz`
//! suffix are converted at load (`timing.window_ns = 4` sets a 4 ns window),
//! which keeps the file close to how operating points are usually quoted.
//!
//! The source can be given directly (`source.lambda_p` plus per-detector
//! `lambda_u`) or through aggregate channel descriptors (`source.lambda_a`,
//! `source.alpha_a`, `source.ratio_ba`), from which the pair and
//! uncorrelated rates are derived. Mixing the two styles is rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::coincidence::TimingParams;
use crate::counting::{derive_source_rates, ChannelParams, DetectorParams, SourceParams};
use crate::detector::{Channel, Detector, PerChannel, PerDetector};
use crate::polarization::{EntanglementParams, PbsParams};
use crate::QkdError;

/// Full parameter set of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: SourceParams,
    pub entanglement: EntanglementParams,
    pub pbs_a: PbsParams,
    pub pbs_b: PbsParams,
    pub detectors: PerDetector<DetectorParams>,
    pub channels: PerChannel<ChannelParams>,
    pub timing: TimingParams,
    /// Base analyzer angle for the protocol setting grids, radians.
    pub theta_a: f64,
    /// Evaluate protocol quantities exactly as printed in the defining
    /// expressions (`true`, the default) or with the plain
    /// wrong-over-total normalization (`false`). The two differ only for
    /// the CHSH QBER; see [`crate::protocols`].
    pub strict_paper_formulas: bool,
}

impl Default for ExperimentConfig {
    /// Ideal noiseless baseline: maximally entangled source, ideal PBSs,
    /// unit efficiencies, no background, no dead time, zero-width window.
    /// The pair rate is zero and must be set for any non-trivial run.
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            source: SourceParams::default(),
            entanglement: EntanglementParams::maximal(),
            pbs_a: PbsParams::ideal(),
            pbs_b: PbsParams::ideal(),
            detectors: PerDetector::splat(DetectorParams::default()),
            channels: PerChannel([ChannelParams::default(); 2]),
            timing: TimingParams::default(),
            theta_a: 0.0,
            strict_paper_formulas: true,
        }
    }
}

impl ExperimentConfig {
    /// Checks every component invariant and emits warnings for parameter
    /// combinations outside the model's comfort zone.
    pub fn validate(&self) -> Result<(), QkdError> {
        self.source.validate()?;
        for det in Detector::ALL {
            self.detectors[det].validate(det.name())?;
        }
        self.channels[Channel::Alice].validate("a")?;
        self.channels[Channel::Bob].validate("b")?;
        self.timing.validate()?;
        if !self.theta_a.is_finite() {
            return Err(crate::invalid("analyzer.theta_a", "must be finite"));
        }

        crate::coincidence::warn_window_vs_dead_time(self);
        let max_dead = Channel::ALL
            .iter()
            .map(|&c| self.channels[c].dead_time)
            .fold(0.0, f64::max);
        if max_dead > 0.0 && self.timing.duration < 1e3 * max_dead {
            log::warn!(
                "duration ({:.3e} s) is not large against the dead time ({:.3e} s); \
                 the dead-time correction is only asymptotically exact",
                self.timing.duration,
                max_dead
            );
        }
        if self.timing.window > 0.0 && self.timing.duration < 1e3 * self.timing.window {
            log::warn!(
                "duration ({:.3e} s) should greatly exceed the coincidence window ({:.3e} s)",
                self.timing.duration,
                self.timing.window
            );
        }
        Ok(())
    }

    /// Correlation level of Alice's channel,
    /// `lambda_p / (lambda_p + sum of Alice's uncorrelated rates)`.
    pub fn alpha_a(&self) -> f64 {
        let u = self.detectors[Detector::A1].lambda_u + self.detectors[Detector::A2].lambda_u;
        let denom = self.source.lambda_p + u;
        if denom == 0.0 {
            f64::NAN
        } else {
            self.source.lambda_p / denom
        }
    }

    /// Stable plain-text dump of every resolved parameter, used for hashing
    /// and provenance lines in CSV output.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "analyzer.theta_a = {}", self.theta_a);
        for (c, name) in [(Channel::Alice, "a"), (Channel::Bob, "b")] {
            let _ = writeln!(
                s,
                "channels.{name}.dead_time = {}",
                self.channels[c].dead_time
            );
        }
        for det in Detector::ALL {
            let d = &self.detectors[det];
            let n = det.name();
            let _ = writeln!(s, "detectors.{n}.eta = {}", d.eta);
            let _ = writeln!(s, "detectors.{n}.tau = {}", d.tau);
            let _ = writeln!(s, "detectors.{n}.lambda_d = {}", d.lambda_d);
            let _ = writeln!(s, "detectors.{n}.lambda_u = {}", d.lambda_u);
        }
        let eps = self.entanglement.epsilon();
        let zeta = self.entanglement.zeta();
        let _ = writeln!(s, "entanglement.epsilon_re = {}", eps.re);
        let _ = writeln!(s, "entanglement.epsilon_im = {}", eps.im);
        let _ = writeln!(s, "entanglement.zeta_re = {}", zeta.re);
        let _ = writeln!(s, "entanglement.zeta_im = {}", zeta.im);
        for (pbs, name) in [(&self.pbs_a, "pbs_a"), (&self.pbs_b, "pbs_b")] {
            let _ = writeln!(s, "{name}.t = {}", pbs.t_mag());
            let _ = writeln!(s, "{name}.tperp = {}", pbs.tperp_mag());
        }
        let _ = writeln!(
            s,
            "protocols.strict_paper_formulas = {}",
            self.strict_paper_formulas
        );
        let _ = writeln!(s, "source.lambda_p = {}", self.source.lambda_p);
        let _ = writeln!(s, "timing.duration = {}", self.timing.duration);
        let _ = writeln!(s, "timing.window = {}", self.timing.window);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_string`].
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// An ordered list of raw `key = value` assignments.
///
/// Keeping the raw form around lets parameter sweeps override single keys
/// and re-resolve per grid cell; later assignments win.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    entries: Vec<Entry>,
}

impl ConfigSource {
    pub fn parse(text: &str) -> Result<ConfigSource, QkdError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(QkdError::Parse {
                    line,
                    message: format!("expected `key = value`, got `{stripped}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(QkdError::Parse {
                    line,
                    message: "empty key or value".to_string(),
                });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(QkdError::Parse {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            entries.push(Entry { key, value, line });
        }
        Ok(ConfigSource { entries })
    }

    pub fn from_path(path: &Path) -> Result<ConfigSource, QkdError> {
        let text = std::fs::read_to_string(path)?;
        ConfigSource::parse(&text).map_err(|e| match e {
            QkdError::Parse { line, message } => QkdError::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    /// Bundled preset by name (`fig3`, `fig5`, `fig6`, `fig7`).
    pub fn preset(name: &str) -> Option<ConfigSource> {
        preset_text(name).map(|text| ConfigSource::parse(text).expect("presets are well-formed"))
    }

    /// Raw `(key, value)` pairs in assignment order.
    pub(crate) fn iter_raw(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .map(|e| (e.key.as_str(), e.value.as_str()))
    }

    /// Returns a copy with one key overridden (appended; last wins).
    pub fn with_override(&self, key: &str, value: &str) -> ConfigSource {
        let mut entries = self.entries.clone();
        entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: 0,
        });
        ConfigSource { entries }
    }

    /// Resolves the assignments into a validated [`ExperimentConfig`].
    pub fn resolve(&self) -> Result<ExperimentConfig, QkdError> {
        Resolver::new().run(&self.entries)
    }
}

#[derive(Debug)]
struct Resolver {
    theta_a: f64,
    strict: bool,
    eps: (f64, f64),
    zeta: (f64, f64),
    pbs_t_sq: [f64; 2],
    pbs_tperp_sq: [f64; 2],
    detectors: PerDetector<DetectorParams>,
    channels: PerChannel<ChannelParams>,
    timing: TimingParams,
    lambda_p: Option<f64>,
    lambda_a: Option<f64>,
    alpha_a: Option<f64>,
    ratio_ba: Option<f64>,
    direct_lambda_u: bool,
}

fn parse_f64(value: &str, line: usize, key: &str) -> Result<f64, QkdError> {
    value.parse::<f64>().map_err(|_| QkdError::Parse {
        line,
        message: format!("`{key}`: expected a number, got `{value}`"),
    })
}

fn parse_bool(value: &str, line: usize, key: &str) -> Result<bool, QkdError> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(QkdError::Parse {
            line,
            message: format!("`{key}`: expected true/false, got `{value}`"),
        }),
    }
}

impl Resolver {
    fn new() -> Resolver {
        Resolver {
            theta_a: 0.0,
            strict: true,
            eps: (1.0, 0.0),
            zeta: (1.0, 0.0),
            pbs_t_sq: [1.0, 1.0],
            pbs_tperp_sq: [0.0, 0.0],
            detectors: PerDetector::splat(DetectorParams::default()),
            channels: PerChannel([ChannelParams::default(); 2]),
            timing: TimingParams::default(),
            lambda_p: None,
            lambda_a: None,
            alpha_a: None,
            ratio_ba: None,
            direct_lambda_u: false,
        }
    }

    fn run(mut self, entries: &[Entry]) -> Result<ExperimentConfig, QkdError> {
        for entry in entries {
            self.apply(entry)?;
        }
        self.finish(entries)
    }

    fn apply(&mut self, entry: &Entry) -> Result<(), QkdError> {
        let (key, value, line) = (entry.key.as_str(), entry.value.as_str(), entry.line);

        if key == "protocols.strict_paper_formulas" {
            self.strict = parse_bool(value, line, key)?;
            return Ok(());
        }

        let unknown = || QkdError::Parse {
            line,
            message: format!("unknown key `{key}`"),
        };

        // Unit-suffixed convenience keys: strip and rescale. `_ns` applies
        // to times, `_khz` to rates; anything else keeps the suffix and
        // falls through to the unknown-key rejection.
        const TIMES: [&str; 3] = ["dead_time", "window", "duration"];
        const RATES: [&str; 4] = ["lambda_p", "lambda_a", "lambda_d", "lambda_u"];
        let last_field = |s: &str| s.rsplit('.').next().unwrap_or("").to_string();
        let (canonical, factor) = if let Some(base) = key.strip_suffix("_ns") {
            if !TIMES.contains(&last_field(base).as_str()) {
                return Err(unknown());
            }
            (base.to_string(), 1e-9)
        } else if let Some(base) = key.strip_suffix("_khz") {
            if !RATES.contains(&last_field(base).as_str()) {
                return Err(unknown());
            }
            (base.to_string(), 1e3)
        } else {
            (key.to_string(), 1.0)
        };
        let num = parse_f64(value, line, key)? * factor;

        let parts: Vec<&str> = canonical.split('.').collect();
        match parts.as_slice() {
            ["source", "lambda_p"] => self.lambda_p = Some(num),
            ["source", "lambda_a"] => self.lambda_a = Some(num),
            ["source", "alpha_a"] => self.alpha_a = Some(num),
            ["source", "ratio_ba"] => self.ratio_ba = Some(num),
            ["entanglement", "epsilon"] => self.eps = (num, 0.0),
            ["entanglement", "epsilon_re"] => self.eps.0 = num,
            ["entanglement", "epsilon_im"] => self.eps.1 = num,
            ["entanglement", "zeta"] => self.zeta = (num, 0.0),
            ["entanglement", "zeta_re"] => self.zeta.0 = num,
            ["entanglement", "zeta_im"] => self.zeta.1 = num,
            ["pbs", "t_sq"] => self.pbs_t_sq = [num, num],
            ["pbs", "tperp_sq"] => self.pbs_tperp_sq = [num, num],
            ["pbs_a", "t_sq"] => self.pbs_t_sq[0] = num,
            ["pbs_a", "tperp_sq"] => self.pbs_tperp_sq[0] = num,
            ["pbs_b", "t_sq"] => self.pbs_t_sq[1] = num,
            ["pbs_b", "tperp_sq"] => self.pbs_tperp_sq[1] = num,
            ["detectors", which, field] => {
                let dets: &[Detector] = match *which {
                    "all" => &Detector::ALL,
                    "1a" => &[Detector::A1],
                    "2a" => &[Detector::A2],
                    "1b" => &[Detector::B1],
                    "2b" => &[Detector::B2],
                    _ => return Err(unknown()),
                };
                let table = &mut self.detectors;
                for &det in dets {
                    let d = &mut table[det];
                    match *field {
                        "eta" => d.eta = num,
                        "tau" => d.tau = num,
                        "lambda_d" => d.lambda_d = num,
                        "lambda_u" => {
                            d.lambda_u = num;
                            self.direct_lambda_u = true;
                        }
                        _ => return Err(unknown()),
                    }
                }
            }
            ["channels", "dead_time"] => {
                self.channels.0 =
                    [ChannelParams { dead_time: num }; 2];
            }
            ["channels", which, "dead_time"] => {
                let channel = match *which {
                    "a" => Channel::Alice,
                    "b" => Channel::Bob,
                    _ => return Err(unknown()),
                };
                self.channels[channel].dead_time = num;
            }
            ["timing", "window"] => self.timing.window = num,
            ["timing", "duration"] => self.timing.duration = num,
            ["analyzer", "theta_a"] => self.theta_a = num,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    fn finish(self, entries: &[Entry]) -> Result<ExperimentConfig, QkdError> {
        let mut detectors = self.detectors;

        let aggregate =
            self.lambda_a.is_some() || self.alpha_a.is_some() || self.ratio_ba.is_some();
        let lambda_p = if aggregate {
            if self.lambda_p.is_some() || self.direct_lambda_u {
                let line = entries.first().map(|e| e.line).unwrap_or(0);
                return Err(QkdError::Parse {
                    line,
                    message: "conflicting source specification: give either source.lambda_p \
                              (with per-detector lambda_u) or the aggregate trio \
                              source.lambda_a/alpha_a/ratio_ba"
                        .to_string(),
                });
            }
            let (Some(lambda_a), Some(alpha_a), Some(ratio_ba)) =
                (self.lambda_a, self.alpha_a, self.ratio_ba)
            else {
                return Err(QkdError::Parse {
                    line: 0,
                    message: "aggregate source specification needs all three of \
                              source.lambda_a, source.alpha_a, source.ratio_ba"
                        .to_string(),
                });
            };
            let rates = derive_source_rates(lambda_a, alpha_a, ratio_ba)?;
            for det in Detector::ALL {
                detectors[det].lambda_u = rates.lambda_u[det];
            }
            rates.lambda_p
        } else {
            self.lambda_p.ok_or_else(|| QkdError::Parse {
                line: 0,
                message: "missing source specification: set source.lambda_p or the \
                          aggregate trio source.lambda_a/alpha_a/ratio_ba"
                    .to_string(),
            })?
        };

        let cfg = ExperimentConfig {
            source: SourceParams { lambda_p },
            entanglement: EntanglementParams::new(
                num_complex::Complex64::new(self.eps.0, self.eps.1),
                num_complex::Complex64::new(self.zeta.0, self.zeta.1),
            )?,
            pbs_a: PbsParams::from_transmittances(self.pbs_t_sq[0], self.pbs_tperp_sq[0])?,
            pbs_b: PbsParams::from_transmittances(self.pbs_t_sq[1], self.pbs_tperp_sq[1])?,
            detectors,
            channels: self.channels,
            timing: self.timing,
            theta_a: self.theta_a,
            strict_paper_formulas: self.strict,
        };
        cfg.validate()?;
        log::info!(
            "config resolved: lambda_p = {:.6e} 1/s, derived alpha_a = {:.6}",
            cfg.source.lambda_p,
            cfg.alpha_a()
        );
        Ok(cfg)
    }
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, QkdError> {
    ConfigSource::from_path(path)?.resolve()
}

/// Resolves a CLI `--config` argument: an existing file path, or the name of
/// a bundled preset (with or without the `.cfg` extension).
pub fn resolve_config_arg(arg: &str) -> Result<ConfigSource, QkdError> {
    let path = Path::new(arg);
    if path.exists() {
        return ConfigSource::from_path(path);
    }
    let name = arg.strip_suffix(".cfg").unwrap_or(arg);
    ConfigSource::preset(name).ok_or_else(|| QkdError::Parse {
        line: 0,
        message: format!(
            "`{arg}` is neither an existing file nor a bundled preset ({})",
            preset_names().join(", ")
        ),
    })
}

const PRESET_LOW_NOISE: &str = "\
# Low-noise entangled-pair operating point with slightly leaky splitters.
source.lambda_a = 2.8e6
source.alpha_a = 0.25
source.ratio_ba = 1.2
entanglement.epsilon = 0.95
entanglement.zeta = 1.0
pbs.t_sq = 0.99
pbs.tperp_sq = 0.025
detectors.all.eta = 0.5
detectors.all.tau = 0.1
detectors.all.lambda_d = 50
channels.dead_time_ns = 100
timing.window_ns = 4
timing.duration = 100
analyzer.theta_a = 0
";

const PRESET_LEAKY_PBS: &str = "\
# Same operating point with strongly leaky splitters, for security-margin
# surfaces over the window and the channel correlation level.
source.lambda_a = 2.8e6
source.alpha_a = 0.25
source.ratio_ba = 1.2
entanglement.epsilon = 0.95
entanglement.zeta = 1.0
pbs.t_sq = 0.98
pbs.tperp_sq = 0.05
detectors.all.eta = 0.5
detectors.all.tau = 0.1
detectors.all.lambda_d = 50
channels.dead_time_ns = 100
timing.window_ns = 4
timing.duration = 100
analyzer.theta_a = 0
";

const PRESET_IDEAL_PBS: &str = "\
# Same operating point with ideal splitters, for error-correction sweeps.
source.lambda_a = 2.8e6
source.alpha_a = 0.25
source.ratio_ba = 1.2
entanglement.epsilon = 0.95
entanglement.zeta = 1.0
pbs.t_sq = 1.0
pbs.tperp_sq = 0.0
detectors.all.eta = 0.5
detectors.all.tau = 0.1
detectors.all.lambda_d = 50
channels.dead_time_ns = 100
timing.window_ns = 4
timing.duration = 100
analyzer.theta_a = 0
";

/// Names of the bundled presets.
pub fn preset_names() -> Vec<&'static str> {
    vec!["fig3", "fig5", "fig6", "fig7"]
}

/// Raw text of a bundled preset. `fig3` and `fig5` share the low-noise
/// operating point (the PBS transmittances are the usual sweep axes for the
/// former); `fig6` uses strongly leaky splitters and `fig7` ideal ones.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig3" | "fig5" => Some(PRESET_LOW_NOISE),
        "fig6" => Some(PRESET_LEAKY_PBS),
        "fig7" => Some(PRESET_IDEAL_PBS),
        _ => None,
    }
}
