//! `elastid` — build meshes, sweep the forward solver into datasets, train
//! the surrogate, estimate parameters, and export plot-ready surfaces.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use elastid_cli::config::{parse_parameter_pair, AppConfig};
use elastid_cli::pipeline::{self, Method, ObsSource};
use elastid_cli::{CliError, Result};
use elastid_core::estimator::StopReason;

#[derive(Parser)]
#[command(
    name = "elastid",
    version,
    about = "Finite-element contact simulation, neural surrogate training, and (E, nu) estimation"
)]
struct Cli {
    /// TOML configuration file overriding built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the seed of the current subcommand (sweep seed for
    /// generate/bench, training seed for train).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Directory artifacts are written into.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ObsArgs {
    /// Generate the observed record from one forward solve at these truth
    /// parameters, written as E,NU.
    #[arg(long, value_name = "E,NU", conflicts_with = "obs")]
    truth: Option<String>,
    /// Read the observed record from a one-row observation CSV.
    #[arg(long, value_name = "PATH")]
    obs: Option<PathBuf>,
}

impl ObsArgs {
    fn resolve(&self) -> Result<ObsSource> {
        match (&self.truth, &self.obs) {
            (Some(text), None) => Ok(ObsSource::Truth(parse_parameter_pair(text)?)),
            (None, Some(path)) => Ok(ObsSource::File(path.clone())),
            _ => Err(CliError::Usage("provide exactly one of --truth E,NU or --obs PATH".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Grad,
    Bfgs,
}

#[derive(Subcommand)]
enum Command {
    /// Build the rectangle mesh and write it as plain text.
    Mesh {
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        height: Option<f64>,
        #[arg(long, value_name = "H")]
        mesh_size: Option<f64>,
    },
    /// Sweep the forward solver over the parameter grid into train and
    /// validation datasets.
    Generate {
        #[arg(long)]
        n_young: Option<usize>,
        #[arg(long)]
        n_poisson: Option<usize>,
        #[arg(long)]
        n_validation: Option<usize>,
    },
    /// Train the surrogate network on generated datasets.
    Train {
        #[arg(long, default_value = "train.csv")]
        train: PathBuf,
        #[arg(long, default_value = "validation.csv")]
        validation: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Recover (E, nu) from an observed record with the surrogate.
    Estimate {
        #[arg(long, value_name = "PATH")]
        network: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[command(flatten)]
        observation: ObsArgs,
        /// Starting point E,NU; defaults to the box midpoint.
        #[arg(long, value_name = "E,NU")]
        start: Option<String>,
        /// Regularization weight.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Tabulate objective values over the parameter box for contour plots.
    Surface {
        /// Network file for the surrogate surface.
        #[arg(long, value_name = "PATH")]
        network: Option<PathBuf>,
        /// Also tabulate the finite-element objective (one solve per node).
        #[arg(long)]
        fe: bool,
        #[command(flatten)]
        observation: ObsArgs,
        #[arg(long, default_value_t = 50)]
        n_young: usize,
        #[arg(long, default_value_t = 50)]
        n_poisson: usize,
    },
    /// Time surrogate evaluations against one forward solve.
    Bench {
        #[arg(long, value_name = "PATH")]
        network: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        evals: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    let out_dir = &cli.out_dir;

    match cli.command {
        Command::Mesh { length, height, mesh_size } => {
            if let Some(v) = length {
                cfg.domain.length = v;
            }
            if let Some(v) = height {
                cfg.domain.height = v;
            }
            if let Some(v) = mesh_size {
                cfg.domain.mesh_size_h = v;
            }
            let report = pipeline::cmd_mesh(&cfg, out_dir)?;
            println!(
                "mesh: {} vertices, {} triangles, {} boundary edges -> {}",
                report.vertices,
                report.triangles,
                report.boundary_edges,
                report.path.display()
            );
            println!("manifest: {}", report.manifest.display());
        }
        Command::Generate { n_young, n_poisson, n_validation } => {
            if let Some(v) = n_young {
                cfg.sweep.n_young = v;
            }
            if let Some(v) = n_poisson {
                cfg.sweep.n_poisson = v;
            }
            if let Some(v) = n_validation {
                cfg.sweep.n_validation = v;
            }
            if let Some(seed) = cli.seed {
                cfg.sweep.seed = seed;
            }
            let report = pipeline::cmd_generate(&cfg, cli.jobs, out_dir)?;
            println!(
                "generated {} training rows -> {}",
                report.train_rows,
                report.train_path.display()
            );
            println!(
                "generated {} validation rows -> {}",
                report.validation_rows,
                report.validation_path.display()
            );
            if report.failures > 0 {
                println!("excluded {} failed solves", report.failures);
            }
            println!("manifest: {} ({:.1} s)", report.manifest.display(), report.wall_seconds);
        }
        Command::Train { train, validation, epochs } => {
            if let Some(v) = epochs {
                cfg.training.schedule.total_epochs = v;
            }
            if let Some(seed) = cli.seed {
                cfg.training.schedule.rng_seed = seed;
            }
            let report = pipeline::cmd_train(&cfg, &train, &validation, out_dir)?;
            println!(
                "validation loss {:.6e} -> {:.6e} (reduction {:.1}x)",
                report.initial_val_loss, report.final_val_loss, report.validation_reduction
            );
            println!("network: {}", report.network_path.display());
            println!("history: {}", report.history_path.display());
            println!("manifest: {} ({:.1} s)", report.manifest.display(), report.wall_seconds);
        }
        Command::Estimate { network, method, observation, start, alpha, max_iter } => {
            if let Some(v) = alpha {
                cfg.objective.alpha = v;
            }
            if let Some(v) = max_iter {
                cfg.estimator.max_iter = v;
            }
            let source = observation.resolve()?;
            let start_point = start.as_deref().map(parse_parameter_pair).transpose()?;
            let method = match method {
                MethodArg::Grad => Method::Grad,
                MethodArg::Bfgs => Method::Bfgs,
            };
            let report = pipeline::cmd_estimate(&cfg, &network, method, &source, start_point, out_dir)?;
            let run = &report.run;
            println!(
                "{}: E = {:.6e}, nu = {:.6}, objective {:.6e}, {} iterations",
                method.name(),
                run.parameters.young,
                run.parameters.poisson,
                run.objective,
                run.iterations
            );
            if let Some(truth) = report.truth {
                println!(
                    "relative error: E {:.3e}, nu {:.3e}",
                    (run.parameters.young - truth.young).abs() / truth.young,
                    (run.parameters.poisson - truth.poisson).abs() / truth.poisson.abs()
                );
            }
            for warning in &run.trace.warnings {
                eprintln!("warning: {warning}");
            }
            println!("trace: {}", report.trace_path.display());
            println!("manifest: {} ({:.2} s)", report.manifest.display(), report.wall_seconds);
            match run.reason {
                StopReason::Converged => {}
                StopReason::MaxIterations => {
                    eprintln!("note: stopped at the iteration cap before meeting the gradient test");
                }
                StopReason::LineSearchFailed { trials } => {
                    return Err(CliError::Numeric(elastid_core::Error::LineSearchFailed {
                        trials,
                    }));
                }
            }
        }
        Command::Surface { network, fe, observation, n_young, n_poisson } => {
            let source = observation.resolve()?;
            let report = pipeline::cmd_surface(
                &cfg,
                network.as_deref(),
                fe,
                &source,
                n_young,
                n_poisson,
                cli.jobs,
                out_dir,
            )?;
            if let (Some(path), Some((e, nu))) = (&report.net_path, report.net_min) {
                println!("surrogate surface -> {} (min near E = {e:.4e}, nu = {nu:.4})", path.display());
            }
            if let (Some(path), Some((e, nu))) = (&report.fe_path, report.fe_min) {
                println!("fe surface -> {} (min near E = {e:.4e}, nu = {nu:.4})", path.display());
            }
            println!("manifest: {} ({:.1} s)", report.manifest.display(), report.wall_seconds);
        }
        Command::Bench { network, evals } => {
            if let Some(seed) = cli.seed {
                cfg.sweep.seed = seed;
            }
            let report = pipeline::cmd_bench(&cfg, &network, evals, out_dir)?;
            println!(
                "surrogate: {:.3e} s/eval (std {:.1e}) over {} evaluations",
                report.mean_eval_seconds, report.eval_seconds_std, report.evaluations
            );
            println!("fe solve: {:.3} s", report.fe_solve_seconds);
            println!("speedup ratio: {:.0}x", report.speedup_ratio);
            println!("manifest: {}", report.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
