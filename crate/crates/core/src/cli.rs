//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::config::{parse_config, ConfigError, SimConfig};
use crate::engine::{
    oracle_partition, run_sim_with, sweep, train_policy, Channel, SimError, SweepAxis,
};
use crate::grouping::{enumerate_actions, GroupingError, QTable};
use crate::report::{emit_report, emit_sweep, fixed6, write_file, OutputFormat, ReportError};

pub const SEED_ENV: &str = "MUVIS_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "muvis",
    version,
    about = "MU-MIMO grouping and adaptive video streaming simulator"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the config seed and MUVIS_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the grouping agent; writes qtable.json and best_partition.json.
    Train(Common),
    /// Run a scenario and write per-epoch and QoE reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Q-table from `train`; without one the agent is trained first.
        #[arg(long, value_name = "PATH")]
        qtable: Option<PathBuf>,
    },
    /// Forced-MU versus all-SU comparison over a range of levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: CliAxis,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        levels: Vec<usize>,
        /// Number of seeds, counted up from the base seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Print the brute-force best partition and its expected throughput.
    Oracle(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CliAxis {
    NMobile,
    NLowSnr,
}

impl From<CliAxis> for SweepAxis {
    fn from(a: CliAxis) -> Self {
        match a {
            CliAxis::NMobile => Self::NMobile,
            CliAxis::NLowSnr => Self::NLowSnr,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{SEED_ENV}: {0}")]
    SeedEnv(String),
    #[error("{path}: {source}")]
    QTable {
        path: PathBuf,
        source: GroupingError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Read { .. } | Self::Config { .. } | Self::SeedEnv(_) | Self::QTable { .. } => 2,
            Self::Sim(SimError::Config(_)) => 2,
            Self::Sim(_) | Self::Report(_) => 3,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    parse_config(&read(path)?).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Flag, then config, then the environment, then zero.
pub fn resolve_seed(
    flag: Option<u64>,
    config: &SimConfig,
    env: Option<&str>,
) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match env {
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::SeedEnv(format!("not an unsigned integer: {text:?}"))),
        None => Ok(0),
    }
}

fn setup(common: &Common) -> Result<(SimConfig, u64), CliError> {
    let config = load_config(&common.config)?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(common.seed, &config, env.as_deref())?;
    Ok((config, seed))
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(common) => {
            let (config, seed) = setup(&common)?;
            let outcome = train_policy(&config, seed)?;
            fs::create_dir_all(&common.out).map_err(|source| ReportError::Io {
                path: common.out.clone(),
                source,
            })?;
            write_file(
                &common.out.join("qtable.json"),
                &outcome.q.to_json(&outcome.actions),
            )?;
            let best = json!({
                "partition": outcome.best.to_string(),
                "action_index": outcome.best_index(),
                "reward": fixed6(outcome.best_reward).parse::<f64>().expect("fixed-point text parses"),
                "seed": seed,
            });
            write_file(
                &common.out.join("best_partition.json"),
                &(serde_json::to_string_pretty(&best).expect("serialises") + "\n"),
            )?;
            let _ = writeln!(
                stdout,
                "best partition {} reward {}",
                outcome.best,
                fixed6(outcome.best_reward)
            );
        }
        Command::Run { common, qtable } => {
            let (config, seed) = setup(&common)?;
            let q = match qtable {
                Some(path) => {
                    let actions =
                        enumerate_actions(&config.users, &config.ap).map_err(SimError::from)?;
                    Some(
                        QTable::from_json(&read(&path)?, &actions)
                            .map_err(|source| CliError::QTable { path, source })?,
                    )
                }
                None => None,
            };
            let report = run_sim_with(&config, seed, q.as_ref())?;
            for path in emit_report(&report, common.format, &common.out)? {
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
        }
        Command::Sweep {
            common,
            axis,
            levels,
            seeds,
        } => {
            let (config, seed) = setup(&common)?;
            if levels.is_empty() || seeds == 0 {
                return Err(CliError::Usage(
                    "sweep needs at least one level and one seed".into(),
                ));
            }
            let seed_list: Vec<u64> = (0..seeds).map(|i| seed.wrapping_add(i)).collect();
            let rows = sweep(&config, axis.into(), &levels, &seed_list)?;
            let path = emit_sweep(&rows, common.format, &common.out)?;
            let _ = writeln!(stdout, "wrote {}", path.display());
        }
        Command::Oracle(common) => {
            let (config, seed) = setup(&common)?;
            config.validate().map_err(SimError::from)?;
            let report = Channel::new(&config, seed).sound();
            let (partition, value) = oracle_partition(&config, &report)?;
            let _ = writeln!(stdout, "partition {partition}");
            let _ = writeln!(stdout, "expected_throughput_mbps {}", fixed6(value));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{ApConfig, UserProfile};

    #[test]
    fn seed_priority() {
        let mut c = SimConfig::new(ApConfig::new(4), vec![UserProfile::new(0, 30.0)]);
        assert_eq!(resolve_seed(None, &c, None).unwrap(), 0);
        assert_eq!(resolve_seed(None, &c, Some("9")).unwrap(), 9);
        c.seed = Some(4);
        assert_eq!(resolve_seed(None, &c, Some("9")).unwrap(), 4);
        assert_eq!(resolve_seed(Some(2), &c, Some("9")).unwrap(), 2);
        c.seed = None;
        assert_eq!(
            resolve_seed(None, &c, Some("x")).unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn usage_errors_exit_1() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["muvis"], &mut out, &mut err), 1);
        assert!(!err.is_empty());
        assert_eq!(main_with(["muvis", "frobnicate"], &mut out, &mut err), 1);
        assert_eq!(main_with(["muvis", "run"], &mut out, &mut err), 1);
        assert_eq!(main_with(["muvis", "--help"], &mut out, &mut err), 0);
    }
}
