use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tensor_deflation::{
    deflate, estimate_params, estimate_params_auto, sample_spiked_tensor, solve_forward,
    solve_forward_auto, GroundTruth, InitSource, InverseInit, LimitStats, ModelParams,
    ObservedStats, SolveReport, SolverOptions,
};
use tensor_deflation_cli::config::ExperimentConfig;
use tensor_deflation_cli::plot::{parse_rows_csv, sweep_plot_svg, PlotKind};
use tensor_deflation_cli::spectrum::run_spectrum;
use tensor_deflation_cli::sweep::{output_paths, run_sweep};
use tensor_deflation_cli::worker_count;

/// Experiment harness for Hotelling deflation on spiked random tensors.
#[derive(Parser)]
#[command(name = "tensor-deflation", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over beta1 with asymptotic predictions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Eigenvalue spectrum reports for noise and spiked contractions.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the limiting equations in forward or inverse mode.
    Solve {
        #[arg(long, value_enum)]
        mode: SolveMode,
        /// Parameter document: a path to a JSON file, or inline JSON.
        #[arg(long)]
        params: String,
    },
    /// One deflation run with summary statistics.
    Deflate {
        #[arg(long)]
        config: PathBuf,
        /// Also print the statistics JSON to stdout.
        #[arg(long)]
        dump_stats: bool,
    },
    /// Render a sweep CSV as an SVG figure.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        /// Defaults to `<kind>.svg` next to the input.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMode {
    Forward,
    Inverse,
}

fn d3() -> usize {
    3
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardInitSpec {
    lambda: Vec<f64>,
    rho: Vec<Vec<f64>>,
    /// Strictly-lower-triangular cross alignments, row by row.
    eta: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardSpec {
    #[serde(default = "d3")]
    d: usize,
    beta: Vec<f64>,
    /// Rank-2 shorthand for the single off-diagonal correlation.
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    gram: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    init: Option<ForwardInitSpec>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iters: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservedSpec {
    lambda1: f64,
    lambda2: f64,
    eta12: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InverseInitSpec {
    beta: Vec<f64>,
    alpha: f64,
    rho: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InverseSpec {
    #[serde(default = "d3")]
    d: usize,
    observed: ObservedSpec,
    /// Optional alignment guess selecting the component labeling.
    #[serde(default)]
    rho_guess: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    init: Option<InverseInitSpec>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iters: Option<usize>,
}

fn read_params_doc(arg: &str) -> anyhow::Result<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading params file {arg}"))
    }
}

fn matrix_from(rows: &[Vec<f64>]) -> anyhow::Result<DMatrix<f64>> {
    let r = rows.len();
    if rows.iter().any(|row| row.len() != r) {
        bail!("matrix must be square");
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

fn solver_options(tol: Option<f64>, max_iters: Option<usize>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = max_iters {
        opts.max_iters = m;
    }
    opts
}

fn print_report(mode: &str, params: serde_json::Value, report: &SolveReport) -> anyhow::Result<()> {
    let doc = serde_json::json!({
        "mode": mode,
        "params": params,
        "solution": report.solution,
        "residual_norm": report.residual_norm,
        "iterations": report.iterations,
        "converged": report.converged,
        "init_source": report.init_source,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn solve_command(mode: SolveMode, params_arg: &str) -> anyhow::Result<()> {
    let doc = read_params_doc(params_arg)?;
    match mode {
        SolveMode::Forward => {
            let spec: ForwardSpec = serde_json::from_str(&doc).context("parsing forward params")?;
            let r = spec.beta.len();
            let gram = match (&spec.gram, spec.alpha) {
                (Some(rows), _) => matrix_from(rows)?,
                (None, Some(alpha)) if r == 2 => {
                    DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0])
                }
                (None, Some(_)) => bail!("alpha shorthand needs exactly two weights"),
                (None, None) => bail!("provide either gram or alpha"),
            };
            let params = ModelParams::new(spec.beta.clone(), gram)?;
            let opts = solver_options(spec.tol, spec.max_iters);
            let report = match &spec.init {
                Some(init) => {
                    let stats = LimitStats::new(
                        init.lambda.clone(),
                        matrix_from(&init.rho)?,
                        init.eta.clone(),
                    )?;
                    solve_forward(&params, spec.d, &stats, InitSource::User, &opts)?
                }
                None => solve_forward_auto(&params, spec.d, None, &opts)?,
            };
            print_report("forward", serde_json::from_str(&doc)?, &report)
        }
        SolveMode::Inverse => {
            let spec: InverseSpec = serde_json::from_str(&doc).context("parsing inverse params")?;
            let observed = ObservedStats {
                lambda1: spec.observed.lambda1,
                lambda2: spec.observed.lambda2,
                eta12: spec.observed.eta12,
            };
            let opts = solver_options(spec.tol, spec.max_iters);
            let report = match &spec.init {
                Some(init) => {
                    let inverse_init = InverseInit {
                        params: ModelParams::new(
                            init.beta.clone(),
                            DMatrix::from_row_slice(
                                2,
                                2,
                                &[1.0, init.alpha, init.alpha, 1.0],
                            ),
                        )?,
                        rho: matrix_from(&init.rho)?,
                    };
                    estimate_params(&observed, spec.d, &inverse_init, InitSource::User, &opts)?
                }
                None => {
                    let guess = spec.rho_guess.as_deref().map(matrix_from).transpose()?;
                    estimate_params_auto(&observed, spec.d, guess.as_ref(), &opts)?
                }
            };
            print_report("inverse", serde_json::from_str(&doc)?, &report)
        }
    }
}

fn deflate_command(config_path: &PathBuf, dump_stats: bool) -> anyhow::Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let beta1 = config.beta_grid()[0];
    let params = config.spike_params(beta1, config.base_seed)?;
    let r = params.r;
    let truth = GroundTruth::generate(params)?;
    let tensor = sample_spiked_tensor(&truth)?;
    let opts = config.power_options(config.base_seed);
    let (result, stats) = deflate(&tensor, r, &truth, &opts, false)?;

    let doc = serde_json::json!({
        "beta1": beta1,
        "lambda_hat": stats.lambda_hat,
        "rho_hat": stats.rho_hat,
        "eta_hat": stats.eta_hat,
        "eig_residuals": result.fits.iter().map(|f| f.eig_residual).collect::<Vec<_>>(),
        "iterations": result.fits.iter().map(|f| f.iterations).collect::<Vec<_>>(),
        "converged_restarts": result.fits.iter().map(|f| f.converged_restarts).collect::<Vec<_>>(),
        "monotone": result.fits.iter().map(|f| f.monotone).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::create_dir_all(&config.outputs.dir)?;
    let path = config.outputs.dir.join("deflate_stats.json");
    std::fs::write(&path, &text)?;
    if dump_stats {
        println!("{text}");
    } else {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sweep { config } => {
            let config = ExperimentConfig::load(&config)?;
            let output = run_sweep(&config)?;
            let converged = output.rows.iter().filter(|r| r.converged).count();
            eprintln!(
                "sweep: {} grid points, {} with predictions, {} workers",
                output.rows.len(),
                converged,
                worker_count()
            );
            for path in output_paths(&config) {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Spectrum { config } => {
            let config = ExperimentConfig::load(&config)?;
            let output = run_spectrum(&config)?;
            eprintln!(
                "spectrum: noise ks = {:.4}, spiked outliers = {:?} (lambda_hat = {:.4})",
                output.noise.ks_distance, output.spiked.outliers, output.lambda_hat
            );
            eprintln!("wrote {}", config.outputs.dir.join("spectrum_noise.json").display());
            eprintln!("wrote {}", config.outputs.dir.join("spectrum_spiked.json").display());
            Ok(())
        }
        Command::Solve { mode, params } => solve_command(mode, &params),
        Command::Deflate { config, dump_stats } => deflate_command(&config, dump_stats),
        Command::Plot {
            input,
            kind,
            output,
        } => {
            let Some(kind_parsed) = PlotKind::parse(&kind) else {
                bail!("unknown plot kind {kind:?}; use alignments, eigenvalues, or eta");
            };
            let text = std::fs::read_to_string(&input)?;
            let rows = parse_rows_csv(&text)?;
            let svg = sweep_plot_svg(&rows, kind_parsed)?;
            let path = output.unwrap_or_else(|| {
                input
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join(format!("{kind}.svg"))
            });
            std::fs::write(&path, svg)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
