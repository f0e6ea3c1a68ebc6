use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gradfuse::analysis::{evaluate_surface, SurfaceReport, SurfaceSource};
use gradfuse::artifacts::{
    read_observations_csv, read_surface_csv, render_heatmap_svg, write_json, write_observations_csv,
    write_surface_csv,
};
use gradfuse::config::{load_config, ExperimentConfig};
use gradfuse::experiment::{run_experiment, study_cells, write_reference, RunCell, Study};
use gradfuse::problem::{sample_loss_surface, GridSpec, MiniBatchPolicy};
use gradfuse::rng::derive_stream;
use gradfuse::surrogate::{fit_surrogate, translate_to_zero, FitMode};
use gradfuse::Error;

#[derive(Parser)]
#[command(name = "gradfuse", version, about = "Gradient-only RBF surrogates of mini-batch loss surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full study matrix and write the artifact tree.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Emit the analytic full-batch loss surface.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Sample the mini-batch loss surface and write observations only.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Repeat index used to derive the sampling stream.
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Fit one surrogate from an observations CSV.
    Fit {
        observations: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Analyze a surface CSV and print its report as JSON.
    Report {
        surface: PathBuf,
        /// Reference surface on the same grid, for RMSE.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<FitMode>,
    #[arg(long)]
    batch_max: Option<usize>,
    #[arg(long)]
    centres: Option<usize>,
    /// Training grid resolution per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Report grid resolution per axis.
    #[arg(long)]
    report_grid: Option<usize>,
}

fn parse_mode(s: &str) -> Result<FitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            c.mode_list = vec![mode];
        }
        if let Some(b) = self.batch_max {
            c.batch_max_list = vec![b];
        }
        if let Some(m) = self.centres {
            c.centre_list = vec![m];
        }
        if let Some(r) = self.grid {
            c.train_grid = GridSpec::new(c.train_grid.lower, c.train_grid.upper, r)?;
        }
        if let Some(r) = self.report_grid {
            c.report_grid = GridSpec::new(c.report_grid.lower, c.report_grid.upper, r)?;
        }
        c.validate()?;
        Ok(c)
    }
}

enum Failure {
    Usage(Error),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::FitFailure { .. } | Error::Numerical(_) => Failure::Numerical(e),
            other => Failure::Usage(other),
        }
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
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common, threads } => {
            let config = common.config()?;
            let single = study_cells(&config).len() == 1;
            let index = run_experiment(&config, threads)?;
            let failed: Vec<_> = index.failures().collect();
            for f in &failed {
                eprintln!("cell {} failed", f.label);
            }
            println!(
                "{} cells ({} failed) written to {}",
                index.cells.len(),
                failed.len(),
                config.output_dir.display()
            );
            if single && !failed.is_empty() {
                return Err(Failure::Numerical(Error::Numerical(format!(
                    "cell {} failed",
                    failed[0].label
                ))));
            }
            Ok(())
        }
        Command::Oracle { common } => {
            let config = common.config()?;
            let study = Study::new(config.clone())?;
            write_reference(&study, &config.output_dir)?;
            println!("reference surface written to {}", config.output_dir.display());
            Ok(())
        }
        Command::Sample { common, repeat } => {
            let config = common.config()?;
            let data = config.dataset.generate()?;
            for &b in &config.batch_max_list {
                let cell = RunCell::new(config.seed, b, FitMode::G, 1, repeat);
                let obs = sample_loss_surface(&config.train_grid, &data, MiniBatchPolicy::new(b), cell.surface_seed)?;
                let path = config.output_dir.join(format!("observations_b{b}_r{repeat}.csv"));
                write_observations_csv(&obs, &path)?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Fit { observations, common } => fit_command(&observations, &common),
        Command::Report { surface, reference, out } => {
            let s = read_surface_csv(&surface)?;
            let r = reference.as_deref().map(read_surface_csv).transpose()?;
            let report = SurfaceReport::new(&s, r.as_ref())?;
            match out {
                Some(path) => write_json(&report, &path)?,
                None => println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?),
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FitReportFile<'a> {
    mode: FitMode,
    n_centres: usize,
    shape: f64,
    training_mse: f64,
    offset: f64,
    skipped_candidates: usize,
    report_grid: &'a SurfaceReport,
    surrogate: &'a gradfuse::Surrogate,
}

fn fit_command(observations: &Path, common: &Common) -> Result<(), Failure> {
    let config = common.config()?;
    let obs = read_observations_csv(observations)?;
    let mode = config.mode_list[0];
    let centres = config.centre_list[0];
    let recipe = config.recipe(mode, centres);
    let mut rng = derive_stream(config.seed, format!("fit/{mode}/c{centres}"));
    let fit = fit_surrogate(&obs, &recipe, &mut rng)?;
    let surrogate = translate_to_zero(&fit.surrogate, &config.report_grid.nodes())?;
    let surface = evaluate_surface(SurfaceSource::Surrogate(&surrogate), &config.report_grid)?;
    let report = SurfaceReport::new(&surface, None)?;
    let out = &config.output_dir;
    write_surface_csv(&surface, &out.join("report_surface.csv"))?;
    render_heatmap_svg(&surface, &out.join("heatmap.svg"), Some(report.argmin))?;
    write_json(
        &FitReportFile {
            mode,
            n_centres: centres,
            shape: surrogate.shape(),
            training_mse: fit.training_mse,
            offset: surrogate.offset,
            skipped_candidates: fit.skipped().count(),
            report_grid: &report,
            surrogate: &surrogate,
        },
        &out.join("report.json"),
    )?;
    println!(
        "mode {mode}, {centres} centres: eps = {:e}, training MSE = {:e}",
        surrogate.shape(),
        fit.training_mse
    );
    Ok(())
}
