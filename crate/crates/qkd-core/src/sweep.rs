//! Parameter sweeps over one- or two-axis grids, with resumable CSV output.
//!
//! A sweep spec names one or two configuration keys as axes plus a list of
//! output quantities. Each grid cell re-resolves the base configuration with
//! the axis keys overridden, so anything the config format accepts can be
//! swept (including the `_ns`/`_khz` convenience keys and aggregate source
//! descriptors).
//!
//! Sweep spec files use the same `key = value` syntax as configurations:
//!
//! ```text
//! axis1.param = timing.window_ns
//! axis1.from = 1
//! axis1.to = 16
//! axis1.steps = 16
//! axis2.param = source.alpha_a     # optional second axis
//! axis2.from = 0.1
//! axis2.to = 1.0
//! axis2.steps = 10
//! outputs = qber_bb84, s_norm, w_norm
//! ```
//!
//! CSV output starts with `#` provenance lines (version, config hash, mode,
//! seed for Monte-Carlo runs), then a header row naming the axes and
//! quantities, then one row per cell in row-major order. Interrupted runs
//! resume by counting the rows already present, provided the provenance
//! lines match. Cells that fail to evaluate produce `NaN` and the run
//! continues.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::config::{ConfigSource, ExperimentConfig};
use crate::correction::{self, CorrectionResult};
use crate::detector::{AliceDet, BobDet, DetectorPair, PerPair};
use crate::montecarlo::{simulate, EventTally};
use crate::polarization::AnalyzerSetting;
use crate::protocols::{self, ProtocolResult};
use crate::security::{self, normalized_margins};
use crate::QkdError;

/// Default post-correction error target.
pub const DEFAULT_TARGET_QBER: f64 = 0.01;

/// How grid cells are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Deterministic evaluation of the rate chain.
    Analytic,
    /// Quantities estimated from event-level simulation tallies.
    MonteCarlo,
}

impl std::str::FromStr for SweepMode {
    type Err = QkdError;
    fn from_str(s: &str) -> Result<SweepMode, QkdError> {
        match s {
            "analytic" => Ok(SweepMode::Analytic),
            "montecarlo" | "mc" => Ok(SweepMode::MonteCarlo),
            _ => Err(QkdError::Parse {
                line: 0,
                message: format!("unknown mode `{s}` (expected analytic or montecarlo)"),
            }),
        }
    }
}

/// Output quantities a sweep can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    QberBb84,
    QberChsh,
    QberWi,
    QabrBb84,
    QabrChsh,
    QabrWi,
    HalfQabrBb84,
    KBb84,
    KChsh,
    KWi,
    S,
    SPrime,
    SNorm,
    WParam,
    WNorm,
    QberBb84Corrected,
    QabrBb84Corrected,
    PassesBb84,
    CorrectedKeyBb84,
}

impl Quantity {
    pub const ALL: [Quantity; 19] = [
        Quantity::QberBb84,
        Quantity::QberChsh,
        Quantity::QberWi,
        Quantity::QabrBb84,
        Quantity::QabrChsh,
        Quantity::QabrWi,
        Quantity::HalfQabrBb84,
        Quantity::KBb84,
        Quantity::KChsh,
        Quantity::KWi,
        Quantity::S,
        Quantity::SPrime,
        Quantity::SNorm,
        Quantity::WParam,
        Quantity::WNorm,
        Quantity::QberBb84Corrected,
        Quantity::QabrBb84Corrected,
        Quantity::PassesBb84,
        Quantity::CorrectedKeyBb84,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::QberBb84 => "qber_bb84",
            Quantity::QberChsh => "qber_chsh",
            Quantity::QberWi => "qber_wi",
            Quantity::QabrBb84 => "qabr_bb84",
            Quantity::QabrChsh => "qabr_chsh",
            Quantity::QabrWi => "qabr_wi",
            Quantity::HalfQabrBb84 => "half_qabr_bb84",
            Quantity::KBb84 => "k_bb84",
            Quantity::KChsh => "k_chsh",
            Quantity::KWi => "k_wi",
            Quantity::S => "s",
            Quantity::SPrime => "s_prime",
            Quantity::SNorm => "s_norm",
            Quantity::WParam => "w_param",
            Quantity::WNorm => "w_norm",
            Quantity::QberBb84Corrected => "qber_bb84_corrected",
            Quantity::QabrBb84Corrected => "qabr_bb84_corrected",
            Quantity::PassesBb84 => "passes_bb84",
            Quantity::CorrectedKeyBb84 => "corrected_key_bb84",
        }
    }

    pub fn parse(s: &str) -> Option<Quantity> {
        Quantity::ALL.into_iter().find(|q| q.name() == s)
    }
}

/// One sweep axis: a configuration key and its grid values.
#[derive(Debug, Clone)]
pub struct Axis {
    pub param: String,
    pub values: Vec<f64>,
}

impl Axis {
    /// Inclusive linear grid with `steps` points.
    pub fn linear(param: &str, from: f64, to: f64, steps: usize) -> Axis {
        let values = if steps <= 1 {
            vec![from]
        } else {
            (0..steps)
                .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Axis {
            param: param.to_string(),
            values,
        }
    }
}

/// A full sweep request: one or two axes plus output quantities.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub outputs: Vec<Quantity>,
}

impl SweepSpec {
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }
}

/// Parses a sweep spec in the flat `key = value` format.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, QkdError> {
    let entries = ConfigSource::parse(text)?;
    let mut fields: HashMap<String, String> = HashMap::new();
    for (key, value) in entries.iter_raw() {
        fields.insert(key.to_string(), value.to_string());
    }

    let mut axes = Vec::new();
    for axis_name in ["axis1", "axis2"] {
        let param_key = format!("{axis_name}.param");
        let Some(param) = fields.get(&param_key) else {
            if axis_name == "axis1" {
                return Err(QkdError::Parse {
                    line: 0,
                    message: "sweep spec needs at least axis1.param".to_string(),
                });
            }
            continue;
        };
        let get_num = |suffix: &str| -> Result<f64, QkdError> {
            let key = format!("{axis_name}.{suffix}");
            fields
                .get(&key)
                .ok_or_else(|| QkdError::Parse {
                    line: 0,
                    message: format!("missing `{key}`"),
                })?
                .parse::<f64>()
                .map_err(|_| QkdError::Parse {
                    line: 0,
                    message: format!("`{key}` is not a number"),
                })
        };
        let from = get_num("from")?;
        let to = get_num("to")?;
        let steps = get_num("steps")? as usize;
        if steps == 0 {
            return Err(QkdError::Parse {
                line: 0,
                message: format!("`{axis_name}.steps` must be >= 1"),
            });
        }
        axes.push(Axis::linear(param, from, to, steps));
    }

    let outputs_raw = fields.get("outputs").ok_or_else(|| QkdError::Parse {
        line: 0,
        message: "sweep spec needs `outputs = <comma-separated quantities>`".to_string(),
    })?;
    let mut outputs = Vec::new();
    for name in outputs_raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let q = Quantity::parse(name).ok_or_else(|| QkdError::Parse {
            line: 0,
            message: format!(
                "unknown quantity `{name}`; available: {}",
                Quantity::ALL.map(|q| q.name()).join(", ")
            ),
        })?;
        outputs.push(q);
    }
    if outputs.is_empty() {
        return Err(QkdError::Parse {
            line: 0,
            message: "sweep spec lists no outputs".to_string(),
        });
    }
    Ok(SweepSpec { axes, outputs })
}

/// Loads a sweep spec file.
pub fn load_sweep(path: &Path) -> Result<SweepSpec, QkdError> {
    parse_sweep(&std::fs::read_to_string(path)?)
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_values: Vec<f64>,
    pub values: Vec<f64>,
}

/// The assembled sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis_names: Vec<String>,
    pub quantity_names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

struct CellEval {
    bb84: Option<ProtocolResult>,
    chsh: Option<ProtocolResult>,
    wigner: Option<ProtocolResult>,
    security: Option<security::SecurityResult>,
    corrected: Option<CorrectionResult>,
}

fn needs(outputs: &[Quantity]) -> (bool, bool, bool, bool, bool) {
    use Quantity::*;
    let has = |f: &dyn Fn(Quantity) -> bool| outputs.iter().copied().any(f);
    let bb84 = has(&|q| {
        matches!(
            q,
            QberBb84
                | QabrBb84
                | HalfQabrBb84
                | KBb84
                | QberBb84Corrected
                | QabrBb84Corrected
                | PassesBb84
                | CorrectedKeyBb84
        )
    });
    let chsh = has(&|q| matches!(q, QberChsh | QabrChsh | KChsh));
    let wigner = has(&|q| matches!(q, QberWi | QabrWi | KWi));
    let sec = has(&|q| matches!(q, S | SPrime | SNorm | WParam | WNorm));
    let corr = has(&|q| {
        matches!(
            q,
            QberBb84Corrected | QabrBb84Corrected | PassesBb84 | CorrectedKeyBb84
        )
    });
    (bb84, chsh, wigner, sec, corr)
}

fn evaluate_analytic(cfg: &ExperimentConfig, outputs: &[Quantity]) -> CellEval {
    let (need_bb84, need_chsh, need_wigner, need_sec, need_corr) = needs(outputs);
    let bb84 = (need_bb84).then(|| protocols::bb84(cfg, cfg.theta_a));
    let chsh = (need_chsh).then(|| protocols::ekert_chsh(cfg, cfg.theta_a));
    let wigner = (need_wigner).then(|| protocols::ekert_wigner(cfg, cfg.theta_a));
    let security = if need_sec {
        security::evaluate(cfg, cfg.theta_a).ok()
    } else {
        None
    };
    let corrected = if need_corr {
        bb84.as_ref().and_then(|b| {
            correction::correct(
                b.sifted_key,
                b.qber,
                b.qabr.unwrap_or(0.0),
                DEFAULT_TARGET_QBER,
            )
            .ok()
        })
    } else {
        None
    };
    CellEval {
        bb84,
        chsh,
        wigner,
        security,
        corrected,
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Tallies per distinct analyzer setting, simulated on demand.
struct TallyCache<'a> {
    cfg: &'a ExperimentConfig,
    cell_seed: u64,
    cache: HashMap<(u64, u64), EventTally>,
}

impl<'a> TallyCache<'a> {
    fn get(&mut self, setting: AnalyzerSetting) -> &EventTally {
        let key = (setting.theta_a.to_bits(), setting.theta_b.to_bits());
        let (cfg, cell_seed) = (self.cfg, self.cell_seed);
        self.cache.entry(key).or_insert_with(|| {
            let seed = splitmix64(cell_seed ^ key.0.rotate_left(17) ^ key.1.rotate_right(13));
            simulate(cfg, &setting, cfg.timing.duration, seed)
        })
    }

    fn counts(&mut self, setting: AnalyzerSetting) -> (PerPair<f64>, PerPair<f64>) {
        let tally = self.get(setting);
        let total = PerPair::from_fn(|p| tally.coincidences[p] as f64);
        let acc = PerPair::from_fn(|p| tally.accidental_coincidences(p) as f64);
        (total, acc)
    }
}

fn empirical_protocol(
    settings: &[(AnalyzerSetting, bool)],
    setting_fraction: f64,
    strict_factor: f64,
    cache: &mut TallyCache,
) -> ProtocolResult {
    // `bool` marks settings where the correlated pairs are the expected
    // ones (orthogonal CHSH setting); elsewhere they are the errors.
    let mut total = 0.0;
    let mut wrong = 0.0;
    let mut accidental = 0.0;
    for &(setting, correlated_expected) in settings {
        let (counts, acc) = cache.counts(setting);
        total += counts.sum();
        accidental += acc.sum();
        let same = counts[DetectorPair::new(AliceDet::A1, BobDet::B1)]
            + counts[DetectorPair::new(AliceDet::A2, BobDet::B2)];
        let cross = counts[DetectorPair::new(AliceDet::A1, BobDet::B2)]
            + counts[DetectorPair::new(AliceDet::A2, BobDet::B1)];
        wrong += if correlated_expected { cross } else { same };
    }
    let sifted_key = setting_fraction * total;
    let qber = if total > 0.0 {
        strict_factor * wrong / total
    } else {
        f64::NAN
    };
    let qabr = if total > 0.0 {
        Some(accidental / total)
    } else {
        None
    };
    ProtocolResult {
        protocol: protocols::Protocol::Bb84,
        sifted_key,
        qber,
        qabr,
    }
}

fn evaluate_montecarlo(cfg: &ExperimentConfig, outputs: &[Quantity], cell_seed: u64) -> CellEval {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};
    let (need_bb84, need_chsh, need_wigner, need_sec, need_corr) = needs(outputs);
    let theta = cfg.theta_a;
    let mut cache = TallyCache {
        cfg,
        cell_seed,
        cache: HashMap::new(),
    };

    let bb84 = need_bb84.then(|| {
        // For BB84 the printed and plain normalizations coincide.
        let mut r = empirical_protocol(
            &[
                (AnalyzerSetting::parallel(theta), false),
                (AnalyzerSetting::parallel(theta + FRAC_PI_4), false),
            ],
            0.25,
            1.0,
            &mut cache,
        );
        r.protocol = protocols::Protocol::Bb84;
        r
    });
    let chsh = need_chsh.then(|| {
        let mut r = empirical_protocol(
            &[
                (AnalyzerSetting::new(theta, theta + FRAC_PI_2), true),
                (AnalyzerSetting::parallel(theta + FRAC_PI_8), false),
                (AnalyzerSetting::parallel(theta + FRAC_PI_4), false),
                (AnalyzerSetting::parallel(theta + 3.0 * FRAC_PI_8), false),
            ],
            1.0 / 16.0,
            if cfg.strict_paper_formulas { 4.0 } else { 1.0 },
            &mut cache,
        );
        r.protocol = protocols::Protocol::EkertChsh;
        r
    });
    let wigner = need_wigner.then(|| {
        let mut r = empirical_protocol(
            &[(AnalyzerSetting::parallel(theta), false)],
            0.25,
            1.0,
            &mut cache,
        );
        r.protocol = protocols::Protocol::EkertWigner;
        r
    });

    let security = if need_sec {
        let mut m = |a: f64, b: f64| -> Option<PerPair<f64>> {
            let (counts, _) = cache.counts(AnalyzerSetting::new(a, b));
            let total = counts.sum();
            (total > 0.0).then(|| PerPair::from_fn(|p| counts[p] / total))
        };
        let e = |m_tab: PerPair<f64>| {
            m_tab[DetectorPair::new(AliceDet::A1, BobDet::B1)]
                - m_tab[DetectorPair::new(AliceDet::A1, BobDet::B2)]
                + m_tab[DetectorPair::new(AliceDet::A2, BobDet::B2)]
                - m_tab[DetectorPair::new(AliceDet::A2, BobDet::B1)]
        };
        let s_terms = (|| {
            let s = e(m(theta, theta + FRAC_PI_8)?) - e(m(theta, theta + 3.0 * FRAC_PI_8)?)
                + e(m(theta + FRAC_PI_4, theta + FRAC_PI_8)?)
                + e(m(theta + FRAC_PI_4, theta + 3.0 * FRAC_PI_8)?);
            let s_prime = e(m(theta + FRAC_PI_8, theta + FRAC_PI_4)?)
                - e(m(theta + FRAC_PI_8, theta + FRAC_PI_2)?)
                + e(m(theta + 3.0 * FRAC_PI_8, theta + FRAC_PI_4)?)
                + e(m(theta + 3.0 * FRAC_PI_8, theta + FRAC_PI_2)?);
            let pi6 = std::f64::consts::PI / 6.0;
            let mut m11 = |a: f64, b: f64| -> Option<f64> {
                Some(m(a, b)?[DetectorPair::new(AliceDet::A1, BobDet::B1)])
            };
            let w = m11(theta - pi6, theta)? + m11(theta, theta + pi6)?
                - m11(theta - pi6, theta + pi6)?;
            Some((s, s_prime, w))
        })();
        s_terms.map(|(s, s_prime, w_param)| {
            let (s_norm, w_norm) = normalized_margins(s, w_param);
            security::SecurityResult {
                s,
                s_prime,
                w_param,
                s_norm,
                w_norm,
            }
        })
    } else {
        None
    };

    let corrected = if need_corr {
        bb84.as_ref().and_then(|b| {
            correction::correct(
                b.sifted_key,
                b.qber,
                b.qabr.unwrap_or(0.0),
                DEFAULT_TARGET_QBER,
            )
            .ok()
        })
    } else {
        None
    };

    CellEval {
        bb84,
        chsh,
        wigner,
        security,
        corrected,
    }
}

fn extract(eval: &CellEval, q: Quantity) -> f64 {
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    match q {
        Quantity::QberBb84 => opt(eval.bb84.as_ref().map(|r| r.qber)),
        Quantity::QberChsh => opt(eval.chsh.as_ref().map(|r| r.qber)),
        Quantity::QberWi => opt(eval.wigner.as_ref().map(|r| r.qber)),
        Quantity::QabrBb84 => opt(eval.bb84.as_ref().and_then(|r| r.qabr)),
        Quantity::QabrChsh => opt(eval.chsh.as_ref().and_then(|r| r.qabr)),
        Quantity::QabrWi => opt(eval.wigner.as_ref().and_then(|r| r.qabr)),
        Quantity::HalfQabrBb84 => opt(eval.bb84.as_ref().and_then(|r| r.qabr)) / 2.0,
        Quantity::KBb84 => opt(eval.bb84.as_ref().map(|r| r.sifted_key)),
        Quantity::KChsh => opt(eval.chsh.as_ref().map(|r| r.sifted_key)),
        Quantity::KWi => opt(eval.wigner.as_ref().map(|r| r.sifted_key)),
        Quantity::S => opt(eval.security.as_ref().map(|s| s.s)),
        Quantity::SPrime => opt(eval.security.as_ref().map(|s| s.s_prime)),
        Quantity::SNorm => opt(eval.security.as_ref().map(|s| s.s_norm)),
        Quantity::WParam => opt(eval.security.as_ref().map(|s| s.w_param)),
        Quantity::WNorm => opt(eval.security.as_ref().map(|s| s.w_norm)),
        Quantity::QberBb84Corrected => opt(eval.corrected.as_ref().map(|c| c.residual_qber)),
        Quantity::QabrBb84Corrected => opt(eval.corrected.as_ref().map(|c| c.residual_qabr)),
        Quantity::PassesBb84 => opt(eval.corrected.as_ref().map(|c| c.passes as f64)),
        Quantity::CorrectedKeyBb84 => opt(eval.corrected.as_ref().map(|c| c.corrected_key)),
    }
}

fn preamble(base: &ExperimentConfig, spec: &SweepSpec, mode: SweepMode, seed: u64) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# qkdsim sweep v{}\n# config_hash = {}\n# mode = {}\n",
        env!("CARGO_PKG_VERSION"),
        base.config_hash(),
        match mode {
            SweepMode::Analytic => "analytic",
            SweepMode::MonteCarlo => "montecarlo",
        }
    ));
    if mode == SweepMode::MonteCarlo {
        s.push_str(&format!(
            "# seed = {seed}\n# rng = {}\n",
            crate::montecarlo::RNG_ALGORITHM
        ));
    }
    let header: Vec<&str> = spec
        .axes
        .iter()
        .map(|a| a.param.as_str())
        .chain(spec.outputs.iter().map(|q| q.name()))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    s
}

fn format_row(row: &SweepRow) -> String {
    let mut fields: Vec<String> = Vec::with_capacity(row.axis_values.len() + row.values.len());
    for v in row.axis_values.iter().chain(row.values.iter()) {
        fields.push(format!("{v}"));
    }
    let mut line = fields.join(",");
    line.push('\n');
    line
}

/// Runs a sweep, optionally writing (and resuming) a CSV file.
///
/// Cells are evaluated in row-major order over the axes. With an output
/// path, rows are appended as they complete; re-running with the same
/// arguments resumes after the last completed row, provided the provenance
/// preamble matches.
pub fn run_sweep(
    source: &ConfigSource,
    spec: &SweepSpec,
    mode: SweepMode,
    seed: u64,
    out: Option<&Path>,
) -> Result<SweepTable, QkdError> {
    let base = source.resolve()?;
    let expected_preamble = preamble(&base, spec, mode, seed);

    // Enumerate cells row-major.
    let cells: Vec<Vec<f64>> = match spec.axes.len() {
        1 => spec.axes[0].values.iter().map(|&v| vec![v]).collect(),
        2 => {
            let mut cells = Vec::with_capacity(spec.cell_count());
            for &v1 in &spec.axes[0].values {
                for &v2 in &spec.axes[1].values {
                    cells.push(vec![v1, v2]);
                }
            }
            cells
        }
        n => {
            return Err(QkdError::Parse {
                line: 0,
                message: format!("sweeps support 1 or 2 axes, got {n}"),
            })
        }
    };

    let mut table = SweepTable {
        axis_names: spec.axes.iter().map(|a| a.param.clone()).collect(),
        quantity_names: spec.outputs.iter().map(|q| q.name().to_string()).collect(),
        rows: Vec::with_capacity(cells.len()),
    };

    // Resume support: count complete rows under a matching preamble.
    let mut done = 0usize;
    let mut writer: Option<BufWriter<std::fs::File>> = None;
    if let Some(path) = out {
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        if existing.is_empty() {
            let mut w = BufWriter::new(
                OpenOptions::new()
                    .create(true)
                    .write(true)
                    .truncate(true)
                    .open(path)?,
            );
            w.write_all(expected_preamble.as_bytes())?;
            writer = Some(w);
        } else {
            if !existing.starts_with(&expected_preamble) {
                return Err(QkdError::Parse {
                    line: 0,
                    message: format!(
                        "{} exists but was written for a different config/spec/mode/seed; \
                         remove it or choose another output path",
                        path.display()
                    ),
                });
            }
            for line in existing[expected_preamble.len()..].lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<f64> = line
                    .split(',')
                    .map(|f| f.parse::<f64>().unwrap_or(f64::NAN))
                    .collect();
                let (axis_values, values) = fields.split_at(spec.axes.len());
                table.rows.push(SweepRow {
                    axis_values: axis_values.to_vec(),
                    values: values.to_vec(),
                });
                done += 1;
            }
            if done > cells.len() {
                return Err(QkdError::Parse {
                    line: 0,
                    message: format!("{} has more rows than the grid has cells", path.display()),
                });
            }
            writer = Some(BufWriter::new(OpenOptions::new().append(true).open(path)?));
            log::info!("resuming sweep at cell {done}/{}", cells.len());
        }
    }

    for (idx, cell) in cells.iter().enumerate().skip(done) {
        let mut cfg_source = source.clone();
        for (axis, value) in spec.axes.iter().zip(cell) {
            cfg_source = cfg_source.with_override(&axis.param, &format!("{value}"));
        }
        let eval = match cfg_source.resolve() {
            Ok(cfg) => match mode {
                SweepMode::Analytic => evaluate_analytic(&cfg, &spec.outputs),
                SweepMode::MonteCarlo => {
                    let cell_seed =
                        splitmix64(seed ^ (idx as u64).wrapping_mul(0x2545F4914F6CDD1D));
                    evaluate_montecarlo(&cfg, &spec.outputs, cell_seed)
                }
            },
            Err(e) => {
                if idx == 0 {
                    // A grid whose first cell cannot resolve is a spec
                    // error, not a degenerate cell.
                    return Err(e);
                }
                log::warn!("cell {idx} failed to resolve: {e}; emitting NaN");
                CellEval {
                    bb84: None,
                    chsh: None,
                    wigner: None,
                    security: None,
                    corrected: None,
                }
            }
        };
        let values: Vec<f64> = spec.outputs.iter().map(|&q| extract(&eval, q)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            log::warn!("cell {idx} produced non-finite outputs");
        }
        let row = SweepRow {
            axis_values: cell.clone(),
            values,
        };
        if let Some(w) = writer.as_mut() {
            w.write_all(format_row(&row).as_bytes())?;
        }
        table.rows.push(row);
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(table)
}

/// Reads a sweep CSV back into a table (provenance lines are skipped).
pub fn read_table(path: &Path) -> Result<SweepTable, QkdError> {
    let text = std::fs::read_to_string(path)?;
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        match &header {
            None => header = Some(line.split(',').map(str::to_string).collect()),
            Some(cols) => {
                let fields: Vec<f64> = line
                    .split(',')
                    .map(|f| f.parse::<f64>().unwrap_or(f64::NAN))
                    .collect();
                if fields.len() != cols.len() {
                    return Err(QkdError::Parse {
                        line: 0,
                        message: format!(
                            "row width {} != header width {}",
                            fields.len(),
                            cols.len()
                        ),
                    });
                }
                rows.push(fields);
            }
        }
    }
    let header = header.ok_or_else(|| QkdError::Parse {
        line: 0,
        message: "no header row found".to_string(),
    })?;
    // Axis columns are the ones that are not known quantity names.
    let axis_count = header
        .iter()
        .take_while(|name| Quantity::parse(name).is_none())
        .count();
    Ok(SweepTable {
        axis_names: header[..axis_count].to_vec(),
        quantity_names: header[axis_count..].to_vec(),
        rows: rows
            .into_iter()
            .map(|fields| {
                let (a, v) = fields.split_at(axis_count);
                SweepRow {
                    axis_values: a.to_vec(),
                    values: v.to_vec(),
                }
            })
            .collect(),
    })
}
