//! Experiment orchestration: validated configuration, seeded deterministic
//! Monte Carlo drivers, scaling fits, self-test suites, and CSV/JSON
//! emission.
//!
//! Determinism contract: every run is a pure function of (configuration,
//! master seed). Trials draw from counter-split random streams and results
//! reduce in trial order, so the worker count never changes a byte of
//! output. Wall-clock timing is deliberately kept out of the emitted
//! records and reported on stderr by the CLI instead.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::su2::Rotation;
use crate::{bb84, blocks, ekert, optimal, quad, schur, separable, su2};
use crate::{Error, Result};

/// Independent random stream for one trial: counter-based split of the
/// master seed, so worker count and scheduling cannot change statistics.
pub fn trial_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 step, used to derive independent session seeds.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ordinary least squares on `(log n, log value)`.
/// Returns `(slope, intercept, r_squared)`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidConfig("scaling fit needs at least 3 points".into()));
    }
    if points.iter().any(|&(n, v)| n <= 0.0 || v <= 0.0) {
        return Err(Error::InvalidConfig("scaling fit needs positive data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n.ln(), v.ln())).collect();
    let count = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = count * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidConfig("degenerate abscissae in scaling fit".into()));
    }
    let slope = (count * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / count;
    let mean_y = sy / count;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, intercept, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Separable,
    Planar,
    Optimal,
    Bb84,
    Ekert,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Separable => "separable",
            Protocol::Planar => "planar",
            Protocol::Optimal => "optimal",
            Protocol::Bb84 => "bb84",
            Protocol::Ekert => "ekert",
        };
        f.write_str(s)
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Protocol::Separable),
            "planar" => Ok(Protocol::Planar),
            "optimal" => Ok(Protocol::Optimal),
            "bb84" => Ok(Protocol::Bb84),
            "ekert" => Ok(Protocol::Ekert),
            other => Err(Error::InvalidConfig(format!("unknown protocol '{other}'"))),
        }
    }
}

/// CLI-facing eavesdropper selector; each protocol maps it onto its own
/// attack model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EveSpec {
    #[default]
    None,
    /// Intercept-resend (separable/planar) or the block-diagonal collective
    /// rotation (bb84).
    Intercept,
    /// Measure-and-reprepare (optimal, bb84).
    Reprepare,
    /// Multiplicity-basis measurement (ekert).
    MultBasis,
}

impl fmt::Display for EveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EveSpec::None => "none",
            EveSpec::Intercept => "intercept",
            EveSpec::Reprepare => "reprepare",
            EveSpec::MultBasis => "multbasis",
        };
        f.write_str(s)
    }
}

impl FromStr for EveSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EveSpec::None),
            "intercept" => Ok(EveSpec::Intercept),
            "reprepare" => Ok(EveSpec::Reprepare),
            "multbasis" => Ok(EveSpec::MultBasis),
            other => Err(Error::InvalidConfig(format!("unknown eve model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
        }
    }
}

/// Validated experiment configuration. `n` is the spin count for the
/// entangled protocols and the per-axis (per-analyzer) count for the
/// separable ones; `rounds` only matters for bb84 sessions and the ekert
/// CHSH stage.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub trials: usize,
    pub rounds: usize,
    pub eve: EveSpec,
    pub k_sigma: f64,
    pub threshold: f64,
    pub master_seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol) -> Self {
        ExperimentConfig {
            protocol,
            n: 16,
            trials: 1000,
            rounds: 400,
            eve: EveSpec::None,
            k_sigma: 5.0,
            threshold: 0.05,
            master_seed: 1,
            jobs: 1,
            out: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be positive".into()));
        }
        if self.k_sigma <= 0.0 || self.k_sigma.is_nan() {
            return Err(Error::InvalidConfig("k-sigma must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig("threshold must sit in (0, 1)".into()));
        }
        let allowed: &[EveSpec] = match self.protocol {
            Protocol::Separable | Protocol::Planar => &[EveSpec::None, EveSpec::Intercept],
            Protocol::Optimal => &[EveSpec::None, EveSpec::Reprepare],
            Protocol::Bb84 => &[EveSpec::None, EveSpec::Intercept, EveSpec::Reprepare],
            Protocol::Ekert => &[EveSpec::None, EveSpec::MultBasis],
        };
        if !allowed.contains(&self.eve) {
            return Err(Error::InvalidConfig(format!(
                "eve model '{}' is not defined for protocol '{}'",
                self.eve, self.protocol
            )));
        }
        match self.protocol {
            Protocol::Separable | Protocol::Planar => {
                if self.n < 100 {
                    return Err(Error::InvalidConfig(
                        "separable protocols need n >= 100 per axis".into(),
                    ));
                }
            }
            _ => {
                if self.n < 3 {
                    return Err(Error::InvalidConfig(
                        "entangled protocols need at least 3 spins".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Applies one `key = value` assignment using the flag names.
    pub fn apply_key(&mut self, key: &str, value: &str, place: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidConfig(format!("{place}: {what}"));
        match key {
            "protocol" => self.protocol = value.parse()?,
            "n" => self.n = value.parse().map_err(|_| bad("n wants a positive integer"))?,
            "trials" => {
                self.trials = value.parse().map_err(|_| bad("trials wants a positive integer"))?
            }
            "rounds" => {
                self.rounds = value.parse().map_err(|_| bad("rounds wants a positive integer"))?
            }
            "eve" => self.eve = value.parse()?,
            "seed" => {
                self.master_seed = value.parse().map_err(|_| bad("seed wants a 64-bit integer"))?
            }
            "k-sigma" | "k_sigma" => {
                self.k_sigma = value.parse().map_err(|_| bad("k-sigma wants a number"))?
            }
            "threshold" => {
                self.threshold = value.parse().map_err(|_| bad("threshold wants a number"))?
            }
            "jobs" => self.jobs = value.parse().map_err(|_| bad("jobs wants an integer"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            other => {
                return Err(Error::InvalidConfig(format!("{place}: unknown key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parses a flat `key = value` config file (`#` comments allowed) into
    /// this configuration. Files rank below explicit flags, so callers
    /// apply the file first and flags afterwards.
    pub fn apply_config_text(&mut self, text: &str, name: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let place = format!("{name}:{}", lineno + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("{place}: expected 'key = value'")))?;
            self.apply_key(key.trim(), value.trim(), &place)?;
        }
        Ok(())
    }
}

/// One experiment's emitted record. Wall-clock time is intentionally not a
/// field: outputs must be byte-identical across repeated seeded runs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunResult {
    pub protocol: String,
    pub n: u64,
    pub trials: u64,
    pub rms_error: f64,
    pub rms_stderr: f64,
    pub detection_rate: Option<f64>,
    pub alarm_rate: Option<f64>,
    pub mismatch_rate: Option<f64>,
    pub chsh_s: Option<f64>,
    /// Number of distinct randomization seed sequences (decimal; empty when
    /// the protocol consumes a plain shared bit string instead).
    pub secret_sequences: String,
    pub secret_bits: u64,
    pub master_seed: u64,
    pub code_version: String,
}

/// Floating-point text with 17 significant digits: exact f64 round-trips.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn json_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_else(|| "null".to_string())
}

impl RunResult {
    pub const CSV_HEADER: &'static str = "protocol,n,trials,rms_error,rms_stderr,detection_rate,alarm_rate,mismatch_rate,chsh_s,secret_sequences,secret_bits,master_seed,code_version";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.protocol,
            self.n,
            self.trials,
            fmt_float(self.rms_error),
            fmt_float(self.rms_stderr),
            fmt_opt(self.detection_rate),
            fmt_opt(self.alarm_rate),
            fmt_opt(self.mismatch_rate),
            fmt_opt(self.chsh_s),
            self.secret_sequences,
            self.secret_bits,
            self.master_seed,
            self.code_version,
        )
    }

    pub fn to_json(&self) -> String {
        format!(
            concat!(
                "{{\n",
                "  \"protocol\": \"{}\",\n",
                "  \"n\": {},\n",
                "  \"trials\": {},\n",
                "  \"rms_error\": {},\n",
                "  \"rms_stderr\": {},\n",
                "  \"detection_rate\": {},\n",
                "  \"alarm_rate\": {},\n",
                "  \"mismatch_rate\": {},\n",
                "  \"chsh_s\": {},\n",
                "  \"secret_sequences\": \"{}\",\n",
                "  \"secret_bits\": {},\n",
                "  \"master_seed\": {},\n",
                "  \"code_version\": \"{}\"\n",
                "}}\n"
            ),
            self.protocol,
            self.n,
            self.trials,
            fmt_float(self.rms_error),
            fmt_float(self.rms_stderr),
            json_opt(self.detection_rate),
            json_opt(self.alarm_rate),
            json_opt(self.mismatch_rate),
            json_opt(self.chsh_s),
            self.secret_sequences,
            self.secret_bits,
            self.master_seed,
            self.code_version,
        )
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn rms_and_stderr(errors: &[f64]) -> (f64, f64) {
    let tf = errors.len() as f64;
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / tf;
    let var_sq = errors
        .iter()
        .map(|e| (e * e - mean_sq).powi(2))
        .sum::<f64>()
        / (tf * (tf - 1.0).max(1.0));
    let rms = mean_sq.sqrt();
    (rms, if rms > 0.0 { var_sq.sqrt() / (2.0 * rms) } else { 0.0 })
}

/// Runs the configured experiment and assembles the emitted record.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let version = env!("CARGO_PKG_VERSION").to_string();
    let result = match config.protocol {
        Protocol::Separable => {
            let eve = match config.eve {
                EveSpec::Intercept => separable::Eavesdropper::InterceptResendRandomAxis,
                _ => separable::Eavesdropper::None,
            };
            let mut errors = Vec::with_capacity(config.trials);
            let mut alarms = 0u64;
            for t in 0..config.trials {
                let mut rng = trial_rng(config.master_seed, t as u64);
                let g = Rotation::haar(&mut rng);
                let res = separable::run_separable(config.n, g, eve, config.k_sigma, &mut rng);
                errors.push(res.error_angle);
                alarms += u64::from(res.alarm);
            }
            let (rms, stderr) = rms_and_stderr(&errors);
            RunResult {
                protocol: config.protocol.to_string(),
                n: config.n as u64,
                trials: config.trials as u64,
                rms_error: rms,
                rms_stderr: stderr,
                detection_rate: None,
                alarm_rate: Some(alarms as f64 / config.trials as f64),
                mismatch_rate: None,
                chsh_s: None,
                secret_sequences: String::new(),
                secret_bits: 3 * config.n as u64,
                master_seed: config.master_seed,
                code_version: version,
            }
        }
        Protocol::Planar => {
            let eve = match config.eve {
                EveSpec::Intercept => separable::Eavesdropper::InterceptResendRandomAxis,
                _ => separable::Eavesdropper::None,
            };
            let mut errors = Vec::with_capacity(config.trials);
            for t in 0..config.trials {
                let mut rng = trial_rng(config.master_seed, t as u64);
                let angle = std::f64::consts::PI * rng.random::<f64>();
                let res = separable::run_planar(config.n, angle, eve, &mut rng);
                errors.push(res.overall_error);
            }
            let (rms, stderr) = rms_and_stderr(&errors);
            RunResult {
                protocol: config.protocol.to_string(),
                n: config.n as u64,
                trials: config.trials as u64,
                rms_error: rms,
                rms_stderr: stderr,
                detection_rate: None,
                alarm_rate: None,
                mismatch_rate: None,
                chsh_s: None,
                secret_sequences: String::new(),
                secret_bits: 2 * config.n as u64,
                master_seed: config.master_seed,
                code_version: version,
            }
        }
        Protocol::Optimal => {
            let eve = match config.eve {
                EveSpec::Reprepare => optimal::Eavesdropper::MeasureReprepare,
                _ => optimal::Eavesdropper::None,
            };
            let run = optimal::run_optimal(config.n, config.trials, true, eve, config.master_seed)?;
            RunResult {
                protocol: config.protocol.to_string(),
                n: config.n as u64,
                trials: config.trials as u64,
                rms_error: run.rms_error,
                rms_stderr: run.rms_stderr,
                detection_rate: None,
                alarm_rate: None,
                mismatch_rate: None,
                chsh_s: None,
                secret_sequences: run.seed_count.sequence_count.to_string(),
                secret_bits: run.seed_count.secret_bits,
                master_seed: config.master_seed,
                code_version: version,
            }
        }
        Protocol::Bb84 => {
            let eve = match config.eve {
                EveSpec::Intercept => bb84::Eavesdropper::BlockDiagonal,
                EveSpec::Reprepare => bb84::Eavesdropper::MeasureReprepare,
                _ => bb84::Eavesdropper::None,
            };
            let mut errors = Vec::new();
            let mut detected = 0u64;
            let mut decided = 0u64;
            let mut mismatch_acc = 0.0;
            for session in 0..config.trials {
                let seed = derive_seed(config.master_seed, session as u64);
                let res = bb84::run_bb84(config.n, config.rounds, eve, config.threshold, seed)?;
                if res.frame_error.is_finite() {
                    errors.push(res.frame_error);
                }
                if let Some(d) = res.detection {
                    decided += 1;
                    detected += u64::from(d);
                }
                mismatch_acc += res.mismatch_rate;
            }
            let (rms, stderr) = if errors.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                rms_and_stderr(&errors)
            };
            let counts = blocks::seed_count(&blocks::BlockShape::for_spins(config.n))?;
            RunResult {
                protocol: config.protocol.to_string(),
                n: config.n as u64,
                trials: config.trials as u64,
                rms_error: rms,
                rms_stderr: stderr,
                detection_rate: (decided > 0).then(|| detected as f64 / decided as f64),
                alarm_rate: None,
                mismatch_rate: Some(mismatch_acc / config.trials as f64),
                chsh_s: None,
                secret_sequences: counts.sequence_count.to_string(),
                secret_bits: counts.secret_bits,
                master_seed: config.master_seed,
                code_version: version,
            }
        }
        Protocol::Ekert => {
            let recovery = ekert::run_frame_recovery(config.n, config.trials, config.master_seed)?;
            let eve = match config.eve {
                EveSpec::MultBasis => ekert::Eavesdropper::MultiplicityBasisMeasure,
                _ => ekert::Eavesdropper::None,
            };
            let shape = blocks::BlockShape::for_spins(config.n);
            let chsh = ekert::chsh_test(
                &shape,
                config.rounds,
                eve,
                derive_seed(config.master_seed, u64::from(u32::MAX)),
            )?;
            let counts = blocks::seed_count(&shape)?;
            RunResult {
                protocol: config.protocol.to_string(),
                n: config.n as u64,
                trials: config.trials as u64,
                rms_error: recovery.rms_error,
                rms_stderr: recovery.rms_stderr,
                detection_rate: None,
                alarm_rate: None,
                mismatch_rate: None,
                chsh_s: Some(chsh.s_value),
                secret_sequences: counts.sequence_count.to_string(),
                secret_bits: counts.secret_bits,
                master_seed: config.master_seed,
                code_version: version,
            }
        }
    };
    Ok(result)
}

/// One row of a scaling sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub protocol: String,
    pub n: u64,
    pub trials: u64,
    pub rms_error: f64,
    pub rms_stderr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,n,trials,rms_error,rms_stderr,seed,slope\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.protocol,
                row.n,
                row.trials,
                fmt_float(row.rms_error),
                fmt_float(row.rms_stderr),
                row.seed,
                fmt_float(self.slope),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<String> = self
            .rows
            .iter()
            .map(|row| {
                format!(
                    concat!(
                        "    {{\"protocol\": \"{}\", \"n\": {}, \"trials\": {}, ",
                        "\"rms_error\": {}, \"rms_stderr\": {}, \"seed\": {}}}"
                    ),
                    row.protocol,
                    row.n,
                    row.trials,
                    fmt_float(row.rms_error),
                    fmt_float(row.rms_stderr),
                    row.seed,
                )
            })
            .collect();
        format!(
            "{{\n  \"rows\": [\n{}\n  ],\n  \"slope\": {},\n  \"intercept\": {},\n  \"r_squared\": {}\n}}\n",
            rows.join(",\n"),
            fmt_float(self.slope),
            fmt_float(self.intercept),
            fmt_float(self.r_squared),
        )
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Sweeps the protocol's size knob over `n_list` (spins for the entangled
/// protocols, per-axis counts for the separable ones, rounds for bb84) and
/// fits the log-log slope of the rms error.
pub fn run_sweep(config: &ExperimentConfig, n_list: &[usize]) -> Result<SweepResult> {
    if n_list.len() < 3 {
        return Err(Error::InvalidConfig("sweep needs at least 3 sizes".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let mut point = config.clone();
        point.out = None;
        match config.protocol {
            Protocol::Bb84 => point.rounds = n,
            _ => point.n = n,
        }
        point.master_seed = derive_seed(config.master_seed, idx as u64);
        let res = run_experiment(&point)?;
        rows.push(SweepRow {
            protocol: res.protocol,
            n: n as u64,
            trials: res.trials,
            rms_error: res.rms_error,
            rms_stderr: res.rms_stderr,
            seed: point.master_seed,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.rms_error)).collect();
    let (slope, intercept, r_squared) = scaling_fit(&points)?;
    Ok(SweepResult { rows, slope, intercept, r_squared })
}

/// One self-test suite outcome.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

macro_rules! suite {
    ($reports:ident, $name:literal, $body:expr) => {
        let runner = || -> std::result::Result<String, String> { $body };
        match runner() {
            Ok(detail) => $reports.push(SuiteReport { name: $name, passed: true, detail }),
            Err(detail) => $reports.push(SuiteReport { name: $name, passed: false, detail }),
        }
    };
}

/// Compact oracle and invariant suites behind the `selftest` subcommand.
pub fn selftest() -> Vec<SuiteReport> {
    use num_complex::Complex64;
    let mut reports = Vec::new();

    suite!(reports, "rotation-representations", {
        let mut rng = trial_rng(0xF0, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let a = Rotation::haar(&mut rng);
            let b = Rotation::haar(&mut rng);
            for twice in 1..=4u32 {
                let j = su2::HalfInt::from_twice(twice);
                let da = su2::wigner_d(j, a);
                let db = su2::wigner_d(j, b);
                let dab = su2::wigner_d(j, a.compose(b));
                worst = worst.max((&da.mat * &db.mat - &dab.mat).map(|e| e.norm()).max());
                worst = worst.max(da.unitarity_defect());
                let tr = da.trace();
                worst = worst.max((tr.re - su2::character(j, a.class_angle())).abs());
                worst = worst.max(tr.im.abs());
            }
        }
        if worst <= 1e-9 {
            Ok(format!("max defect {worst:.2e}"))
        } else {
            Err(format!("defect {worst:.2e} exceeds 1e-9"))
        }
    });

    suite!(reports, "character-orthogonality", {
        let mut worst: f64 = 0.0;
        for ta in 0..=7u32 {
            for tb in ta..=7u32 {
                let ja = su2::HalfInt::from_twice(ta);
                let jb = su2::HalfInt::from_twice(tb);
                let integral = quad::adaptive_simpson(
                    |w| {
                        (0.5 * w).sin().powi(2) / std::f64::consts::PI
                            * su2::character(ja, w)
                            * su2::character(jb, w)
                    },
                    0.0,
                    2.0 * std::f64::consts::PI,
                    1e-10,
                );
                let expect = f64::from(ta == tb);
                worst = worst.max((integral - expect).abs());
            }
        }
        if worst <= 1e-8 {
            Ok(format!("max defect {worst:.2e}"))
        } else {
            Err(format!("defect {worst:.2e} exceeds 1e-8"))
        }
    });

    suite!(reports, "block-shape", {
        use num_bigint::BigUint;
        for n in 1..=20usize {
            let shape = blocks::BlockShape::for_spins(n);
            if shape.total_dimension() != BigUint::from(1u32) << n {
                return Err(format!("dimension sum rule fails at N = {n}"));
            }
            if n >= 2 {
                let sub = su2::HalfInt::from_twice(n as u32 - 2);
                if shape.block(sub).map(|b| b.mult.clone()) != Some(BigUint::from(n as u64 - 1)) {
                    return Err(format!("m at j = N/2 - 1 fails at N = {n}"));
                }
            }
        }
        Ok("N <= 20".into())
    });

    suite!(reports, "full-space-oracle", {
        let mut rng = trial_rng(0xF1, 0);
        let mut worst: f64 = 0.0;
        for n in [3usize, 4] {
            let basis = schur::SchurBasis::build(n).map_err(|e| e.to_string())?;
            let shape = blocks::BlockShape::for_spins(n);
            let a = blocks::BlockVector::signal_state(&shape).map_err(|e| e.to_string())?;
            let b = blocks::BlockVector::povm_seed(&shape).map_err(|e| e.to_string())?;
            let ea = schur::embed_vector(&basis, &a).map_err(|e| e.to_string())?;
            let eb = schur::embed_vector(&basis, &b).map_err(|e| e.to_string())?;
            for _ in 0..10 {
                let q = Rotation::haar(&mut rng);
                worst = worst.max(schur::verify_block_action(&basis, q));
                let lhs = eb.dotc(&(schur::full_rotation(n, q) * &ea));
                let rhs = b.inner(&a.apply_rotation(q)).map_err(|e| e.to_string())?;
                worst = worst.max((lhs - rhs).norm());
            }
        }
        if worst <= 1e-9 {
            Ok(format!("max deviation {worst:.2e}"))
        } else {
            Err(format!("deviation {worst:.2e} exceeds 1e-9"))
        }
    });

    suite!(reports, "seed-secrecy", {
        let mut rng = trial_rng(0xF2, 0);
        let mut worst: f64 = 0.0;
        for n in [3usize, 4] {
            let shape = blocks::BlockShape::for_spins(n);
            let a = blocks::BlockVector::signal_state(&shape).map_err(|e| e.to_string())?;
            let support: Vec<su2::HalfInt> = a.support().collect();
            let members: Vec<blocks::BlockDensity> = blocks::SeedSequence::enumerate_all(&support)
                .iter()
                .map(|s| blocks::BlockDensity::from_vector(&a.randomize(s).expect("support")))
                .collect();
            let avg = blocks::BlockDensity::average(&members);
            let amps = blocks::signal_amplitudes(&shape).map_err(|e| e.to_string())?;
            let analytic = blocks::BlockDensity::uniform_seed_average(n, &amps);
            let dev = avg.max_dev(&analytic);
            if dev > 1e-12 {
                return Err(format!("exhaustive average off by {dev:.2e} at N = {n}"));
            }
            for _ in 0..20 {
                let q = Rotation::haar(&mut rng);
                worst = worst.max(avg.conjugate_rotation(q).max_dev(&avg));
            }
        }
        if worst <= 1e-10 {
            Ok(format!("rotation-invariance defect {worst:.2e}"))
        } else {
            Err(format!("invariance defect {worst:.2e} exceeds 1e-10"))
        }
    });

    suite!(reports, "randomization-invariance", {
        let mut rng = trial_rng(0xF3, 0);
        let shape = blocks::BlockShape::for_spins(6);
        let a = blocks::BlockVector::signal_state(&shape).map_err(|e| e.to_string())?;
        let b = blocks::BlockVector::povm_seed(&shape).map_err(|e| e.to_string())?;
        let support: Vec<su2::HalfInt> = a.support().collect();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let seed = blocks::SeedSequence::uniform(&support, &mut rng);
            let q = Rotation::haar(&mut rng);
            let plain = b
                .inner(&a.apply_rotation(q))
                .map_err(|e| e.to_string())?
                .norm_sqr();
            let keyed = b
                .randomize(&seed)
                .map_err(|e| e.to_string())?
                .inner(
                    &a.randomize(&seed)
                        .map_err(|e| e.to_string())?
                        .apply_rotation(q),
                )
                .map_err(|e| e.to_string())?
                .norm_sqr();
            worst = worst.max((plain - keyed).abs());
        }
        if worst <= 1e-10 {
            Ok(format!("max defect {worst:.2e}"))
        } else {
            Err(format!("defect {worst:.2e} exceeds 1e-10"))
        }
    });

    suite!(reports, "povm-completeness", {
        let shape = blocks::BlockShape::for_spins(5);
        let b = blocks::BlockVector::povm_seed(&shape).map_err(|e| e.to_string())?;
        let dims: Vec<usize> = b.support().map(|j| j.dim() * j.dim()).collect();
        let total: usize = dims.iter().sum();
        let mut acc = nalgebra::DMatrix::<Complex64>::zeros(total, total);
        for (rot, w) in su2::haar_product_quadrature(3) {
            let rotated = b.apply_rotation(rot);
            let mut col = nalgebra::DVector::<Complex64>::zeros(total);
            let mut at = 0;
            for j in rotated.support().collect::<Vec<_>>() {
                let c = rotated.coeff(j).expect("support");
                let (rows, cols) = c.shape();
                for i in 0..rows * cols {
                    col[at + i] = c[(i / cols, i % cols)];
                }
                at += rows * cols;
            }
            acc += &col * col.adjoint() * Complex64::new(w, 0.0);
        }
        let dev = (&acc - nalgebra::DMatrix::<Complex64>::identity(total, total))
            .map(|e| e.norm())
            .max();
        if dev <= 1e-8 {
            Ok(format!("corner resolution defect {dev:.2e}"))
        } else {
            Err(format!("defect {dev:.2e} exceeds 1e-8"))
        }
    });

    suite!(reports, "outcome-density", {
        let mut worst: f64 = 0.0;
        for n in 3..=8usize {
            let q = optimal::OutcomeDensity::for_shape(&blocks::BlockShape::for_spins(n))
                .map_err(|e| e.to_string())?;
            worst = worst.max((q.normalization() - 1.0).abs());
        }
        if worst <= 1e-9 {
            Ok(format!("normalization defect {worst:.2e}"))
        } else {
            Err(format!("defect {worst:.2e} exceeds 1e-9"))
        }
    });

    suite!(reports, "test-state-fidelity", {
        let mut rng = trial_rng(0xF4, 0);
        let shape = blocks::BlockShape::for_spins(8);
        let amps = blocks::signal_amplitudes(&shape).map_err(|e| e.to_string())?;
        let a = blocks::BlockVector::signal_state(&shape).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let h = Rotation::haar(&mut rng);
            let rotated = a.apply_rotation(h);
            for &(j, amp) in &amps {
                let d = j.dim() as f64;
                for tilde in [false, true] {
                    let tau = bb84::test_state(&shape, j, 0, tilde).map_err(|e| e.to_string())?;
                    let f = bb84::state_overlap(&tau, &rotated);
                    worst = worst.max((f - amp * amp / (d * d)).abs());
                }
            }
        }
        if worst <= 1e-12 {
            Ok(format!("fidelity defect {worst:.2e}"))
        } else {
            Err(format!("defect {worst:.2e} exceeds 1e-12"))
        }
    });

    suite!(reports, "joint-density-reduction", {
        let mut rng = trial_rng(0xF5, 0);
        let mut worst: f64 = 0.0;
        for n in [3usize, 4] {
            let shape = blocks::BlockShape::for_spins(n);
            let phi = ekert::bipartite_signal(&shape).map_err(|e| e.to_string())?;
            for _ in 0..10 {
                let g = Rotation::haar(&mut rng);
                let ha = Rotation::haar(&mut rng);
                let hb = Rotation::haar(&mut rng);
                worst = worst.max(
                    ekert::verify_joint_density_reduction(&phi, g, ha, hb)
                        .map_err(|e| e.to_string())?,
                );
            }
        }
        if worst <= 1e-9 {
            Ok(format!("max deviation {worst:.2e}"))
        } else {
            Err(format!("deviation {worst:.2e} exceeds 1e-9"))
        }
    });

    suite!(reports, "chsh-violation", {
        let shape = blocks::BlockShape::for_spins(3);
        let res = ekert::chsh_test(&shape, 20_000, ekert::Eavesdropper::None, 0xF6)
            .map_err(|e| e.to_string())?;
        if res.s_value > 2.7 {
            Ok(format!("S = {:.3}", res.s_value))
        } else {
            Err(format!("S = {:.3} below 2.7", res.s_value))
        }
    });

    suite!(reports, "scaling-fit", {
        let exact: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&n| (n, 3.0 / n)).collect();
        let (slope, _, r2) = scaling_fit(&exact).map_err(|e| e.to_string())?;
        if (slope + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12 {
            Ok("exact power laws recovered".into())
        } else {
            Err(format!("slope {slope}, r2 {r2}"))
        }
    });

    reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scaling_fit_exact_laws() {
        let inv: Vec<(f64, f64)> = [8.0, 16.0, 32.0].iter().map(|&n| (n, 2.0 / n)).collect();
        let (slope, _, r2) = scaling_fit(&inv).unwrap();
        assert_abs_diff_eq!(slope, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);

        let half: Vec<(f64, f64)> =
            [4.0f64, 16.0, 64.0].iter().map(|&n| (n, 1.0 / n.sqrt())).collect();
        let (slope_half, _, _) = scaling_fit(&half).unwrap();
        assert_abs_diff_eq!(slope_half, -0.5, epsilon = 1e-12);

        let flat: Vec<(f64, f64)> = [4.0, 16.0, 64.0].iter().map(|&n| (n, 2.5)).collect();
        let (slope_flat, _, _) = scaling_fit(&flat).unwrap();
        assert_abs_diff_eq!(slope_flat, 0.0, epsilon = 1e-12);

        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, -0.5), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn config_text_parses_and_rejects_unknown_keys() {
        let mut config = ExperimentConfig::new(Protocol::Optimal);
        config
            .apply_config_text(
                "# comment\nn = 32\ntrials = 50\neve = reprepare\nseed = 77\n",
                "inline",
            )
            .unwrap();
        assert_eq!(config.n, 32);
        assert_eq!(config.trials, 50);
        assert_eq!(config.eve, EveSpec::Reprepare);
        assert_eq!(config.master_seed, 77);

        let err = config.apply_config_text("bogus = 1\n", "inline").unwrap_err();
        assert!(err.to_string().contains("inline:1"), "{err}");
        let err2 = config.apply_config_text("trials = minus\n", "inline").unwrap_err();
        assert!(err2.to_string().contains("positive integer"), "{err2}");
    }

    #[test]
    fn config_validation_catches_bad_combinations() {
        let mut config = ExperimentConfig::new(Protocol::Ekert);
        config.eve = EveSpec::Reprepare;
        assert!(config.validate().is_err());
        config.eve = EveSpec::MultBasis;
        assert!(config.validate().is_ok());
        config.n = 2;
        assert!(config.validate().is_err());
    }

    #[test]
    fn result_round_trips_through_json() {
        let mut config = ExperimentConfig::new(Protocol::Optimal);
        config.n = 8;
        config.trials = 64;
        let res = run_experiment(&config).unwrap();
        let json = res.to_json();
        let back: RunResult = serde_json::from_str(&json).unwrap();
        assert_eq!(res, back);
    }

    #[test]
    fn runs_are_reproducible() {
        let mut config = ExperimentConfig::new(Protocol::Optimal);
        config.n = 8;
        config.trials = 128;
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn sweep_fits_the_optimal_scaling() {
        let mut config = ExperimentConfig::new(Protocol::Optimal);
        config.trials = 800;
        let sweep = run_sweep(&config, &[8, 16, 32, 64]).unwrap();
        assert!((-1.15..=-0.85).contains(&sweep.slope), "slope {}", sweep.slope);
        let csv = sweep.to_csv();
        assert!(csv.lines().count() == 5);
        assert!(csv.starts_with("protocol,n,trials,rms_error,rms_stderr,seed,slope"));
    }

    #[test]
    fn float_formatting_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 3.5e17] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn selftest_suites_all_pass() {
        let reports = selftest();
        assert!(reports.len() >= 10);
        for r in &reports {
            assert!(r.passed, "suite {} failed: {}", r.name, r.detail);
        }
    }
}
