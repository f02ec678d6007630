//! `streammon` command-line tool.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streammon::config::{load_config, ConfigError, RunConfig};
use streammon::ingest::StopSignal;
use streammon::plot::YScale;
use streammon::runner::{self, RunError, RunReport};
use streammon::simnode::{self, Clock, RunningNode, Scenario, SimError};

#[derive(Parser)]
#[command(
    name = "streammon",
    version,
    about = "Stream-based gas price and block usage monitoring for EVM networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Follow every configured chain until interrupted (Ctrl-C) or every
    /// chain reaches its `stop_after_block`.
    Monitor {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config and the environment.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the monitoring pipelines over a recorded JSONL file of raw headers.
    Replay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Whole-series statistics of a metric JSONL file.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<input>.stats.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Downsample a metric JSONL file into `<out>.csv` and `<out>.svg`.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Bucket width in seconds.
        #[arg(long, default_value_t = 300)]
        bucket: u64,
        #[arg(long)]
        out: PathBuf,
        /// Logarithmic value axis.
        #[arg(long)]
        log_scale: bool,
    },
    /// Deterministic simulated EVM node.
    #[command(subcommand)]
    Simnode(SimnodeCommand),
}

#[derive(Subcommand)]
enum SimnodeCommand {
    /// Serve a scenario over JSON-RPC, revealing blocks as scenario time passes.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "127.0.0.1:8545")]
        addr: SocketAddr,
        /// Scenario seconds per wall-clock second.
        #[arg(long, default_value_t = 1)]
        speed: u64,
    },
    /// Write a scenario's block ledger as replay-ready JSONL.
    Generate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a scenario as TOML, e.g. to start a custom one from a preset.
    Scenario {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// One of: ethereum, arbitrum, op-mainnet, linea.
    #[arg(
        long,
        conflicts_with = "scenario",
        required_unless_present = "scenario"
    )]
    preset: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "hours")]
    blocks: Option<u64>,
    /// Enough blocks to cover this many hours of scenario time.
    #[arg(long)]
    hours: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        RunError::from(e).into()
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Monitor { config, output_dir } => {
            let config = config_with(&config, output_dir)?;
            let stop = StopSignal::new();
            stop_on_ctrl_c(stop.clone());
            let report = runner::run_monitor(&config, &stop)?;
            print_report(&config, &report);
        }
        Command::Replay {
            input,
            config,
            output_dir,
        } => {
            let config = config_with(&config, output_dir)?;
            let report = runner::run_replay(&input, &config)?;
            print_report(&config, &report);
        }
        Command::Stats { input, out } => {
            let out = out.unwrap_or_else(|| runner::default_stats_path(&input));
            let stats = runner::run_stats(&input, &out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&stats).expect("stats serialize")
            );
        }
        Command::Plot {
            input,
            bucket,
            out,
            log_scale,
        } => {
            let scale = if log_scale {
                YScale::Log10
            } else {
                YScale::Linear
            };
            let plot = runner::run_plot(&input, bucket, &out, scale)?;
            println!(
                "{} buckets -> {} and {}",
                plot.buckets.len(),
                plot.csv.display(),
                plot.svg.display()
            );
        }
        Command::Simnode(cmd) => simnode_command(cmd)?,
    }
    Ok(())
}

fn config_with(path: &Path, output_dir: Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut config = load_config(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    Ok(config)
}

fn print_report(config: &RunConfig, report: &RunReport) {
    for c in &report.chains {
        println!(
            "{}: {} raw, {} normalized, {} window records, {} dead letters, feed {:?}",
            c.chain,
            c.raw_records,
            c.normalized_records,
            c.window_records,
            c.dead_letters(),
            c.feed
        );
        for s in &c.summaries {
            if let Some(stats) = &s.stats {
                println!(
                    "  {:<18} median {:<12} iqr {}",
                    s.kind.as_str(),
                    stats.median,
                    stats.iqr
                );
            }
        }
    }
    println!("outputs in {}", config.output_dir.display());
}

fn stop_on_ctrl_c(stop: StopSignal) {
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_io()
            .build()
            .expect("signal runtime");
        if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
            tracing::info!("interrupted, flushing");
            stop.stop();
        }
    });
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut scenario = match (&args.preset, &args.scenario) {
        (Some(name), _) => {
            Scenario::preset(name, args.seed.unwrap_or(1)).ok_or_else(|| Failure {
                code: 1,
                message: format!(
                    "unknown preset {name:?}; expected one of {}",
                    simnode::PRESET_NAMES.join(", ")
                ),
            })?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: 1,
                message: format!("{}: {e}", path.display()),
            })?;
            Scenario::from_toml(&text)?
        }
        (None, None) => unreachable!("clap requires one of --preset and --scenario"),
    };
    if let (Some(seed), Some(_)) = (args.seed, &args.scenario) {
        scenario = scenario.with_seed(seed);
    }
    if let Some(blocks) = args.blocks {
        scenario = scenario.with_blocks(blocks);
    }
    if let Some(hours) = args.hours {
        scenario = scenario.with_hours(hours);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn simnode_command(cmd: SimnodeCommand) -> Result<(), Failure> {
    match cmd {
        SimnodeCommand::Serve {
            scenario,
            addr,
            speed,
        } => {
            let scenario = load_scenario(&scenario)?;
            let ledger = simnode::generate_scenario(&scenario)?;
            let node =
                RunningNode::start_on(addr, ledger, Clock::real(scenario.genesis_timestamp, speed))
                    .map_err(|e| Failure {
                        code: 3,
                        message: format!("cannot listen on {addr}: {e}"),
                    })?;
            println!(
                "serving {} ({} blocks) at {}",
                scenario.chain,
                scenario.block_count,
                node.url()
            );
            node.wait();
        }
        SimnodeCommand::Generate { scenario, out } => {
            let scenario = load_scenario(&scenario)?;
            let ledger = simnode::generate_scenario(&scenario)?;
            std::fs::write(&out, simnode::ledger_jsonl(&ledger))
                .map_err(|e| io_failure(&out, e))?;
            println!(
                "{} blocks of {} -> {}",
                ledger.len(),
                scenario.chain,
                out.display()
            );
        }
        SimnodeCommand::Scenario { scenario } => print!("{}", load_scenario(&scenario)?.to_toml()),
    }
    Ok(())
}
