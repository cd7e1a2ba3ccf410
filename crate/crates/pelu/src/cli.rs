//! The `pelu` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use pelu_core::ParamConfig;

use crate::analyze::{analyze, write_analysis, DEFAULT_GRID_POINTS, SUMMARY_HEADER};
use crate::config::load_run_config;
use crate::error::{CliError, EXIT_USAGE};
use crate::gradcheck::{
    format_reports, parse_activation, parse_group, run_plan, verdict, Arch, GradcheckPlan,
};
use crate::runner::{train, write_outputs};
use crate::sweep::{load_sweep_config, run_sweep, write_sweep};

#[derive(Debug, Parser)]
#[command(
    name = "pelu",
    version,
    about = "Train, gradient-check and analyse PELU networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a JSON config; writes metrics.csv, progression.csv and model.json.
    Train {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// mlp:W,W,..., conv, zoo, smallnet-lite or all. Repeatable.
        #[arg(long = "arch", default_value = "all")]
        archs: Vec<String>,
        /// pelu, elu, relu, lrelu[:SLOPE], prelu or all. Repeatable.
        #[arg(long = "act", default_value = "all")]
        acts: Vec<String>,
        /// a_b, a_invb, inva_b, inva_invb or all (PELU only). Repeatable.
        #[arg(long = "param-config", default_value = "all")]
        param_configs: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic gradient of this group (harness self-test).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Tabulate the interval length l(w) and locate its maximum.
    Analyze {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Upper end of the weight grid; defaults to 10 e b / a.
        #[arg(long, allow_hyphen_values = true)]
        wmax: Option<f64>,
        /// Number of grid points.
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        grid: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train every variant of a sweep config over several seeds.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn expand<T>(
    values: &[String],
    all: impl Fn() -> Vec<T>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for v in values {
        if v == "all" {
            out.extend(all());
        } else {
            out.push(parse(v).map_err(CliError::Usage)?);
        }
    }
    Ok(out)
}

fn gradcheck_plan(
    archs: &[String],
    acts: &[String],
    param_configs: &[String],
    seed: u64,
    corrupt: Option<&str>,
) -> Result<GradcheckPlan, CliError> {
    Ok(GradcheckPlan {
        archs: expand(archs, Arch::defaults, |s| s.parse())?,
        activations: expand(acts, crate::gradcheck::all_activations, parse_activation)?,
        configs: expand(
            param_configs,
            || ParamConfig::ALL.to_vec(),
            |s| s.parse::<ParamConfig>().map_err(|e| e.to_string()),
        )?,
        seed,
        corrupt: corrupt
            .map(parse_group)
            .transpose()
            .map_err(CliError::Usage)?,
    })
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    let say = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e))
    };
    match command {
        Command::Train { config, out } => {
            let run = load_run_config(&config)?;
            let mut outcome = train(&run, &base_dir(&config))?;
            write_outputs(&run, &mut outcome, &out)?;
            let line = match outcome.final_metrics() {
                Some(m) => format!(
                    "epoch {} train_loss {:.4e} train_err {:.2}% test_err {}\n",
                    m.epoch,
                    m.train_loss,
                    m.train_err_pct,
                    m.test_err_pct
                        .map_or("n/a".to_string(), |e| format!("{e:.2}%"))
                ),
                None => "no epochs run\n".to_string(),
            };
            say(stdout, &line)
        }
        Command::Gradcheck {
            archs,
            acts,
            param_configs,
            seed,
            corrupt,
        } => {
            let plan = gradcheck_plan(&archs, &acts, &param_configs, seed, corrupt.as_deref())?;
            let cases = run_plan(&plan)?;
            say(stdout, &format_reports(&cases))?;
            verdict(&cases)?;
            let max = cases
                .iter()
                .map(|c| c.report.max_rel_err())
                .fold(0.0, f64::max);
            say(
                stdout,
                &format!("all {} checks passed, max rel err {max:.3e}\n", cases.len()),
            )
        }
        Command::Analyze {
            a,
            b,
            wmax,
            grid,
            out,
        } => {
            let analysis = analyze(a, b, wmax, grid)?;
            write_analysis(&analysis, &out)?;
            say(
                stdout,
                &format!(
                    "{}\n{}\n",
                    SUMMARY_HEADER.join(","),
                    analysis.summary_row().join(",")
                ),
            )
        }
        Command::Sweep { config, out } => {
            let sweep = load_sweep_config(&config)?;
            let outcome = run_sweep(&sweep, &base_dir(&config))?;
            write_sweep(&outcome, &out)?;
            let mut text = String::new();
            for s in &outcome.summaries {
                text += &format!(
                    "{:<16} test_err {} train_loss {}\n",
                    s.label,
                    s.mean_test_err_pct
                        .zip(s.std_test_err_pct)
                        .map_or("n/a".into(), |(m, d)| format!("{m:.2}% ± {d:.2}")),
                    s.mean_train_loss
                        .zip(s.std_train_loss)
                        .map_or("n/a".into(), |(m, d)| format!("{m:.3e} ± {d:.1e}")),
                );
            }
            say(stdout, &text)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Help and version requests exit 0.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
