use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sparse_sbm::commands::{
    cmd_compare, cmd_fit, cmd_simulate, cmd_validate, fit_summary, FitOverrides, LambdaSetting,
    ModelPreset, RunConfig, SelectChoice, SimulateConfig,
};
use sparse_sbm::glm::{Family, FitResult};
use sparse_sbm::reduced_graph::ExportFormat;
use sparse_sbm::simulate::GeneratorSpec;
use sparse_sbm::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-sbm", version, about = "Extended stochastic blockmodels with adaptive-lasso reduced graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Eq1,
    Eq2,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bernoulli,
    Poisson,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Bernoulli => Family::BernoulliLogit,
            FamilyArg::Poisson => Family::PoissonLog,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Bic,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Dot,
    Graphml,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model described by a JSON run config.
    Fit {
        config: PathBuf,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        /// Enable or disable the adaptive-lasso path.
        #[arg(long)]
        penalized: Option<bool>,
        /// `auto` (BIC) or a fixed penalty level.
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        gamma_w: Option<f64>,
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long, value_enum)]
        select: Option<SelectArg>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the design matrix as (row, column, value) triplets.
        #[arg(long)]
        dump_design: bool,
    },
    /// Sample a synthetic network and write a matching fit config.
    Simulate {
        /// Full generator spec (JSON); other generator flags are ignored when given.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long, value_enum, default_value = "bernoulli")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.5)]
        fraction_zero: f64,
        #[arg(long, default_value_t = 0.8)]
        magnitude: f64,
        /// Target density (Bernoulli) or mean count (Poisson).
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        #[arg(long, default_value_t = 0.3)]
        effect_sd: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sim")]
        out: PathBuf,
    },
    /// Compare two saved fits of the same design.
    Compare {
        fit_a: PathBuf,
        fit_b: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check inputs and print ingest diagnostics.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            config,
            model,
            family,
            penalized,
            lambda,
            gamma_w,
            grid_size,
            select,
            format,
            threshold,
            out,
            dump_design,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            let overrides = FitOverrides {
                model: model.map(|m| match m {
                    ModelArg::Eq1 => ModelPreset::Eq1,
                    ModelArg::Eq2 => ModelPreset::Eq2,
                    ModelArg::Custom => ModelPreset::Custom,
                }),
                family: family.map(Family::from),
                penalized,
                lambda: lambda.as_deref().map(LambdaSetting::parse).transpose()?,
                gamma_w,
                grid_size,
                select: select.map(|s| match s {
                    SelectArg::Bic => SelectChoice::Bic,
                    SelectArg::Fixed => SelectChoice::Fixed,
                }),
                format: format.map(|f| match f {
                    FormatArg::Dot => ExportFormat::Dot,
                    FormatArg::Graphml => ExportFormat::Graphml,
                    FormatArg::Json => ExportFormat::Json,
                }),
                threshold,
                out,
            };
            overrides.apply(&mut cfg);
            cfg.dump_design |= dump_design;
            let art = cmd_fit(&cfg)?;
            print!("{}", fit_summary(&art));
            println!("outputs written to {}", cfg.out.display());
        }
        Command::Simulate {
            spec,
            n,
            p,
            family,
            fraction_zero,
            magnitude,
            density,
            effect_sd,
            seed,
            out,
        } => {
            let generator: GeneratorSpec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    let mut g: GeneratorSpec = serde_json::from_str(&text)?;
                    if let Some(s) = seed {
                        g.seed = s;
                    }
                    g
                }
                None => SimulateConfig {
                    n,
                    p,
                    family: family.into(),
                    fraction_zero,
                    magnitude,
                    target_mean: density,
                    effect_sd,
                    seed: seed.unwrap_or(1),
                }
                .to_spec()?,
            };
            cmd_simulate(&generator, &out)?;
            println!("simulated network written to {}", out.display());
        }
        Command::Compare { fit_a, fit_b, json } => {
            let a = FitResult::load(&fit_a)?;
            let b = FitResult::load(&fit_b)?;
            let report = cmd_compare(&a, &b)?;
            print!("{}", report.render());
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let diag = cmd_validate(&cfg)?;
            print!("{diag}");
            if !diag.pass {
                return Err(Error::Validation(diag.problems.join("; ")));
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "I/O" => 2,
        "validation" => 3,
        "non-convergence" => 4,
        "design" => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
