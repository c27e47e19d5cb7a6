use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use atomic_loans::agents::scenario::TermsConfig;
use atomic_loans::agents::{builtin, enumerate, enumeration_config, run_scenario, DEFAULT_SEED, MAX_DEPTH};
use atomic_loans::primitives::PartyId;
use atomic_loans::trace::{to_jsonl, validate, Report};

const TRACE_DIR_ENV: &str = "ATOMIC_LOANS_TRACE_DIR";

#[derive(Parser)]
#[command(name = "atomic-loans", version, about = "Cross-chain collateralized loan simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a builtin scenario or a scenario TOML file.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Where to write the JSON-lines trace. Defaults to $ATOMIC_LOANS_TRACE_DIR/<scenario>.jsonl when set.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Search deviations of the non-honest parties for safety violations.
    Enumerate {
        /// Comma-separated parties that follow the protocol.
        #[arg(long, value_delimiter = ',', required = true)]
        honest: Vec<PartyId>,
        #[arg(long)]
        depth: usize,
        /// TOML file with loan terms overriding the defaults.
        #[arg(long)]
        terms: Option<PathBuf>,
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Replay a trace and check it reproduces exactly.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
    /// List builtin scenarios.
    ListScenarios,
}

/// Bad input: exit 1. Anything that ran but did not pass: exit 2.
enum Failure {
    Usage(anyhow::Error),
    Failed(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(scenario: &str, seed: u64, trace: Option<PathBuf>, report: Option<PathBuf>) -> Result<(), Failure> {
    let config = builtin::load(scenario)?;
    let name = config.name.clone();
    let run = run_scenario(config, seed)?;
    let trace =
        trace.or_else(|| std::env::var_os(TRACE_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{name}.jsonl"))));
    if let Some(path) = trace {
        write_file(&path, &to_jsonl(run.events()))?;
    }
    let summary = Report::from_session(&run.session, &run.violations);
    if let Some(path) = report {
        write_file(&path, &summary.to_json())?;
    }
    print!("{}", summary.render());
    if run.passed() {
        Ok(())
    } else {
        Err(Failure::Failed(format!("scenario {name} failed")))
    }
}

fn cmd_enumerate(honest: Vec<PartyId>, depth: usize, terms: Option<PathBuf>, sequential: bool) -> Result<(), Failure> {
    if depth > MAX_DEPTH {
        return Err(Failure::Usage(anyhow!("depth {depth} exceeds the cap of {MAX_DEPTH}")));
    }
    let honest: BTreeSet<PartyId> = honest.into_iter().collect();
    let terms = match terms {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<TermsConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TermsConfig::default(),
    };
    let config = enumeration_config(&honest, terms);
    config.validate()?;
    let report = enumerate(&config, &honest, depth, !sequential)?;
    println!("explored {} runs ({} subtrees pruned)", report.runs, report.pruned);
    println!("violations: {}", report.violations.len());
    match report.violations.first() {
        None => Ok(()),
        Some(first) => {
            println!("first violating sequence, as a scenario:");
            print!("{}", first.to_scenario(&config).to_toml());
            Err(Failure::Failed(String::new()))
        }
    }
}

fn cmd_validate(trace: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    match validate(&text) {
        Ok(session) => {
            println!("trace valid: {} events reproduced", session.events().len());
            Ok(())
        }
        Err(e) => Err(Failure::Failed(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { scenario, seed, trace, report } => cmd_run(&scenario, seed, trace, report),
        Command::Enumerate { honest, depth, terms, sequential } => cmd_enumerate(honest, depth, terms, sequential),
        Command::Validate { trace } => cmd_validate(&trace),
        Command::ListScenarios => {
            for (name, description) in builtin::list() {
                println!("{name:<28} {description}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Failed(msg)) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(2)
        }
    }
}
