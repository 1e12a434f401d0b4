//! Command-line harness for the reference-frame transmission simulators.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when the
//! self-test suites fail. All protocol runs are deterministic in
//! (configuration, seed); wall-clock timing goes to stderr only.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

use framekey::harness::{
    run_experiment, run_sweep, selftest, ExperimentConfig, Protocol,
};
use framekey::{bb84, harness};

#[derive(Parser)]
#[command(
    name = "framekey",
    version,
    about = "Simulators for secret transmission of spatial reference frames"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Default, Clone)]
struct RunFlags {
    /// Spins per state (entangled protocols) or particles per axis
    /// (separable/planar).
    #[arg(long)]
    n: Option<usize>,
    /// Independent trials (sessions for bb84).
    #[arg(long)]
    trials: Option<usize>,
    /// Rounds per bb84 session / ekert CHSH stage.
    #[arg(long)]
    rounds: Option<usize>,
    /// Eavesdropper model: none, intercept, reprepare, multbasis.
    #[arg(long)]
    eve: Option<String>,
    /// Master seed; every output byte is a function of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Mismatch threshold for bb84 detection.
    #[arg(long)]
    threshold: Option<f64>,
    /// Alarm width in propagated standard deviations (separable).
    #[arg(long = "k-sigma")]
    k_sigma: Option<f64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Flat key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Spin-by-spin secret direction transfer keyed to a shared bit string.
    Separable(RunFlags),
    /// Photon-polarization variant for in-plane directions.
    Planar(RunFlags),
    /// Entangled block-state transmission with keyed randomization.
    Optimal(RunFlags),
    /// Prepare-and-measure alignment with multiplicity test rounds.
    Bb84 {
        #[command(flatten)]
        flags: RunFlags,
        /// Per-round transcript CSV of the first session.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Entanglement-based alignment with a CHSH stage.
    Ekert(RunFlags),
    /// Scaling sweep with a log-log slope fit.
    Sweep {
        #[command(flatten)]
        flags: RunFlags,
        /// Which protocol to sweep.
        #[arg(long)]
        protocol: String,
        /// Comma-separated sizes (spins, per-axis counts, or bb84 rounds).
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Oracle and invariant suites; exit code 2 on any failure.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let _ = Cli::command(); // keep usage text wired to --help
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> framekey::Result<ExitCode> {
    match cli.cmd {
        Command::Separable(flags) => run_protocol(Protocol::Separable, &flags, None),
        Command::Planar(flags) => run_protocol(Protocol::Planar, &flags, None),
        Command::Optimal(flags) => run_protocol(Protocol::Optimal, &flags, None),
        Command::Bb84 { flags, transcript } => {
            run_protocol(Protocol::Bb84, &flags, transcript)
        }
        Command::Ekert(flags) => run_protocol(Protocol::Ekert, &flags, None),
        Command::Sweep { flags, protocol, n_list } => {
            let protocol: Protocol = protocol.parse()?;
            let config = build_config(protocol, &flags)?;
            configure_jobs(config.jobs);
            let started = Instant::now();
            let sweep = run_sweep(&config, &n_list)?;
            eprintln!(
                "sweep slope {:.4} (r^2 {:.4}), wall time {:.2}s",
                sweep.slope,
                sweep.r_squared,
                started.elapsed().as_secs_f64()
            );
            emit(&config, sweep.render(config.format))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let reports = selftest();
            let mut all_ok = true;
            for r in &reports {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", r.name, r.detail);
                all_ok &= r.passed;
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn run_protocol(
    protocol: Protocol,
    flags: &RunFlags,
    transcript: Option<PathBuf>,
) -> framekey::Result<ExitCode> {
    let config = build_config(protocol, flags)?;
    configure_jobs(config.jobs);
    let started = Instant::now();
    let result = run_experiment(&config)?;
    eprintln!(
        "{} n={} trials={} rms={:.6e}, wall time {:.2}s",
        result.protocol,
        result.n,
        result.trials,
        result.rms_error,
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = transcript {
        write_transcript(&config, &path)?;
    }
    emit(&config, result.render(config.format))?;
    Ok(ExitCode::SUCCESS)
}

fn build_config(protocol: Protocol, flags: &RunFlags) -> framekey::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::new(protocol);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)?;
        config.apply_config_text(&text, &path.display().to_string())?;
        config.protocol = protocol; // the subcommand wins
    }
    if let Some(n) = flags.n {
        config.n = n;
    }
    if let Some(trials) = flags.trials {
        config.trials = trials;
    }
    if let Some(rounds) = flags.rounds {
        config.rounds = rounds;
    }
    if let Some(eve) = &flags.eve {
        config.eve = eve.parse()?;
    }
    if let Some(seed) = flags.seed {
        config.master_seed = seed;
    }
    if let Some(threshold) = flags.threshold {
        config.threshold = threshold;
    }
    if let Some(k) = flags.k_sigma {
        config.k_sigma = k;
    }
    if let Some(out) = &flags.out {
        config.out = Some(out.clone());
    }
    if let Some(format) = &flags.format {
        config.format = format.parse()?;
    }
    if let Some(jobs) = flags.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    Ok(config)
}

fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn emit(config: &ExperimentConfig, payload: String) -> framekey::Result<()> {
    match &config.out {
        Some(path) => std::fs::write(path, payload).map_err(Into::into),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

/// Per-round CSV of the first bb84 session under the current configuration.
fn write_transcript(config: &ExperimentConfig, path: &PathBuf) -> framekey::Result<()> {
    let eve = match config.eve {
        framekey::harness::EveSpec::Intercept => bb84::Eavesdropper::BlockDiagonal,
        framekey::harness::EveSpec::Reprepare => bb84::Eavesdropper::MeasureReprepare,
        _ => bb84::Eavesdropper::None,
    };
    let seed = harness::derive_seed(config.master_seed, 0);
    let session = bb84::run_bb84(config.n, config.rounds, eve, config.threshold, seed)?;
    let mut out = String::from(
        "round,sender_kind,sender_j2,sender_slot,receiver_kind,kept,outcome_j2,outcome_slot,frame_error\n",
    );
    for (idx, round) in session.transcript.iter().enumerate() {
        let (sender_kind, sender_j2, sender_slot) = match round.sender {
            bb84::SenderChoice::Orientation(_) => ("orientation", String::new(), String::new()),
            bb84::SenderChoice::Test { j, m, tilde } => (
                if tilde { "test_tilde" } else { "test" },
                j.twice().to_string(),
                m.to_string(),
            ),
        };
        let receiver_kind = match round.receiver {
            bb84::ReceiverChoice::Orientation => "orientation",
            bb84::ReceiverChoice::SlotComputational => "slot",
            bb84::ReceiverChoice::SlotFourier => "slot_tilde",
        };
        let (outcome_j2, outcome_slot, frame_error) = match &round.outcome {
            bb84::RoundOutcome::Slot { j, m } => {
                (j.twice().to_string(), m.to_string(), String::new())
            }
            bb84::RoundOutcome::Frame(est) => (
                String::new(),
                String::new(),
                harness::fmt_float(session.true_frame.so3_distance(*est)),
            ),
            bb84::RoundOutcome::Discarded => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{idx},{sender_kind},{sender_j2},{sender_slot},{receiver_kind},{},{outcome_j2},{outcome_slot},{frame_error}\n",
            round.kept,
        ));
    }
    std::fs::write(path, out).map_err(Into::into)
}
