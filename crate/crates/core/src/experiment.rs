//! The study matrix: every combination of batch maximum, fit mode, centre count
//! and repeat, each fitted and written to its own directory.
//!
//! Randomness is keyed by labels, never by draw order:
//!
//! * the sampled loss surface of a cell uses `surface/b{B}/r{R}`, so all modes
//!   and centre counts of one repeat see the same observations;
//! * centre selection uses `centres/b{B}/c{M}/r{R}`, shared across modes.
//!
//! Adding cells or changing the worker count therefore cannot change any
//! existing cell's output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{evaluate_surface, locate_min, surface_rmse, SurfaceGrid, SurfaceReport, SurfaceSource};
use crate::artifacts::{render_heatmap_svg, write_json, write_observations_csv, write_surface_csv};
use crate::config::{ConfigEcho, ExperimentConfig};
use crate::error::{Error, Result};
use crate::problem::{sample_loss_surface, Dataset1D, FullBatchOracle, MiniBatchPolicy};
use crate::rng::{derive_stream, mix_label};
use crate::surrogate::{fit_surrogate, translate_to_zero, Candidate, Fit, FitMode, LossObservation, Surrogate};

/// One subplot of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunCell {
    pub batch_max: usize,
    pub mode: FitMode,
    pub n_centres: usize,
    pub repeat_index: usize,
    /// Seed of the centre-selection stream.
    pub derived_seed: u64,
    /// Seed of the loss-surface sampling stream.
    pub surface_seed: u64,
}

impl RunCell {
    pub fn new(seed: u64, batch_max: usize, mode: FitMode, n_centres: usize, repeat_index: usize) -> Self {
        Self {
            batch_max,
            mode,
            n_centres,
            repeat_index,
            derived_seed: mix_label(seed, centres_label(batch_max, n_centres, repeat_index).as_bytes()),
            surface_seed: mix_label(seed, surface_label(batch_max, repeat_index).as_bytes()),
        }
    }

    pub fn label(&self) -> String {
        format!(
            "b{}_{}_c{}_r{}",
            self.batch_max, self.mode, self.n_centres, self.repeat_index
        )
    }
}

fn surface_label(batch_max: usize, repeat: usize) -> String {
    format!("surface/b{batch_max}/r{repeat}")
}

fn centres_label(batch_max: usize, n_centres: usize, repeat: usize) -> String {
    format!("centres/b{batch_max}/c{n_centres}/r{repeat}")
}

/// All cells in index order: batch maximum, then repeat, then mode, then centres.
pub fn study_cells(config: &ExperimentConfig) -> Vec<RunCell> {
    let mut cells = Vec::new();
    for &b in &config.batch_max_list {
        for r in 0..config.repeats {
            for &mode in &config.mode_list {
                for &m in &config.centre_list {
                    cells.push(RunCell::new(config.seed, b, mode, m, r));
                }
            }
        }
    }
    cells
}

/// The shared inputs of every cell.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: ExperimentConfig,
    pub data: Dataset1D,
    pub oracle: FullBatchOracle,
    pub reference_train: SurfaceGrid,
    pub reference_report: SurfaceGrid,
}

impl Study {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let data = config.dataset.generate()?;
        let oracle = FullBatchOracle::new(&data);
        Ok(Self {
            reference_train: evaluate_surface(SurfaceSource::Oracle(&oracle), &config.train_grid)?,
            reference_report: evaluate_surface(SurfaceSource::Oracle(&oracle), &config.report_grid)?,
            config,
            data,
            oracle,
        })
    }

    pub fn observations(&self, cell: &RunCell) -> Result<Vec<LossObservation>> {
        sample_loss_surface(
            &self.config.train_grid,
            &self.data,
            MiniBatchPolicy::new(cell.batch_max),
            cell.surface_seed,
        )
    }

    /// Sample, fit, translate and evaluate one cell without touching the disk.
    pub fn run_cell(&self, cell: &RunCell) -> Result<CellResult> {
        let observations = self.observations(cell)?;
        self.fit_cell(cell, observations)
    }

    pub fn fit_cell(&self, cell: &RunCell, observations: Vec<LossObservation>) -> Result<CellResult> {
        let recipe = self.config.recipe(cell.mode, cell.n_centres);
        let mut rng = derive_stream(cell.derived_seed, "centres");
        let fit = fit_surrogate(&observations, &recipe, &mut rng)?;
        let surrogate = translate_to_zero(&fit.surrogate, &self.config.report_grid.nodes())?;
        let train_surface = evaluate_surface(SurfaceSource::Surrogate(&surrogate), &self.config.train_grid)?;
        let report_surface = evaluate_surface(SurfaceSource::Surrogate(&surrogate), &self.config.report_grid)?;
        Ok(CellResult {
            cell: *cell,
            train_report: SurfaceReport::new(&train_surface, Some(&self.reference_train))?,
            report: SurfaceReport::new(&report_surface, Some(&self.reference_report))?,
            aligned_rmse: aligned_rmse(&report_surface, &self.reference_report)?,
            observations,
            fit,
            surrogate,
            train_surface,
            report_surface,
        })
    }
}

/// RMSE after shifting both surfaces so their minima are zero.
pub fn aligned_rmse(a: &SurfaceGrid, b: &SurfaceGrid) -> Result<f64> {
    surface_rmse(&a.shifted(-a.min_max().0), &b.shifted(-b.min_max().0))
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: RunCell,
    pub observations: Vec<LossObservation>,
    pub fit: Fit,
    /// The fitted surrogate after zero-translation (unchanged for F and FG).
    pub surrogate: Surrogate,
    pub train_surface: SurfaceGrid,
    pub report_surface: SurfaceGrid,
    pub train_report: SurfaceReport,
    pub report: SurfaceReport,
    pub aligned_rmse: f64,
}

/// Contents of a cell's `report.json`.
#[derive(Debug, Serialize)]
struct CellReportFile<'a> {
    cell: &'a RunCell,
    shape: f64,
    training_mse: f64,
    offset: f64,
    skipped_candidates: usize,
    report_grid: &'a SurfaceReport,
    train_grid: &'a SurfaceReport,
    aligned_rmse_vs_reference: f64,
    surrogate: &'a Surrogate,
    candidates: &'a [Candidate],
}

pub const CELL_ARTIFACTS: [&str; 6] = [
    "observations.csv",
    "observations.svg",
    "train_surface.csv",
    "report_surface.csv",
    "report.json",
    "heatmap.svg",
];

fn write_cell(dir: &Path, result: &CellResult, train_grid: &crate::problem::GridSpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_observations_csv(&result.observations, &dir.join("observations.csv"))?;
    let sampled = evaluate_surface(SurfaceSource::Observations(&result.observations), train_grid)?;
    render_heatmap_svg(&sampled, &dir.join("observations.svg"), Some(locate_min(&sampled).0))?;
    write_surface_csv(&result.train_surface, &dir.join("train_surface.csv"))?;
    write_surface_csv(&result.report_surface, &dir.join("report_surface.csv"))?;
    write_json(
        &CellReportFile {
            cell: &result.cell,
            shape: result.surrogate.shape(),
            training_mse: result.fit.training_mse,
            offset: result.surrogate.offset,
            skipped_candidates: result.fit.skipped().count(),
            report_grid: &result.report,
            train_grid: &result.train_report,
            aligned_rmse_vs_reference: result.aligned_rmse,
            surrogate: &result.surrogate,
            candidates: &result.fit.candidates,
        },
        &dir.join("report.json"),
    )?;
    render_heatmap_svg(&result.report_surface, &dir.join("heatmap.svg"), Some(result.report.argmin))
}

pub const REFERENCE_ARTIFACTS: [&str; 4] = ["train_surface.csv", "report_surface.csv", "report.json", "heatmap.svg"];

#[derive(Debug, Serialize)]
struct ReferenceReportFile<'a> {
    report_grid: &'a SurfaceReport,
    train_grid: &'a SurfaceReport,
    moments: [f64; 3],
}

/// Write the analytic full-batch surface on both grids.
pub fn write_reference(study: &Study, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let report = SurfaceReport::new(&study.reference_report, None)?;
    let train = SurfaceReport::new(&study.reference_train, None)?;
    let m = study.oracle.moments();
    write_surface_csv(&study.reference_train, &dir.join("train_surface.csv"))?;
    write_surface_csv(&study.reference_report, &dir.join("report_surface.csv"))?;
    write_json(
        &ReferenceReportFile {
            report_grid: &report,
            train_grid: &train,
            moments: [m.m2, m.m3, m.m4],
        },
        &dir.join("report.json"),
    )?;
    render_heatmap_svg(&study.reference_report, &dir.join("heatmap.svg"), Some(report.argmin))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Ok { artifacts: Vec<String> },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEntry {
    pub label: String,
    #[serde(flatten)]
    pub cell: RunCell,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunIndex {
    pub config: ConfigEcho,
    pub reference: Vec<String>,
    pub cells: Vec<IndexEntry>,
}

impl RunIndex {
    pub fn failures(&self) -> impl Iterator<Item = &IndexEntry> {
        self.cells.iter().filter(|e| matches!(e.status, CellStatus::Failed { .. }))
    }
}

fn relative(parts: &[&str]) -> String {
    parts.join("/")
}

/// Run every cell and write the artifact tree under `config.output_dir`.
///
/// `threads` sizes the worker pool (`None` lets rayon decide); it never affects
/// the output. A cell whose fit fails is recorded in `index.json` and skipped.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunIndex> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<RunIndex> {
    let study = Study::new(config.clone())?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    write_reference(&study, &out.join("reference"))?;

    let cells = study_cells(config);
    let entries: Vec<Result<IndexEntry>> = cells
        .par_iter()
        .map(|cell| {
            let label = cell.label();
            let status = match study.run_cell(cell) {
                Ok(result) => {
                    write_cell(&out.join("cells").join(&label), &result, &config.train_grid)?;
                    CellStatus::Ok {
                        artifacts: CELL_ARTIFACTS
                            .iter()
                            .map(|f| relative(&["cells", &label, f]))
                            .collect(),
                    }
                }
                Err(e @ (Error::FitFailure { .. } | Error::Numerical(_))) => {
                    CellStatus::Failed { reason: e.to_string() }
                }
                Err(e) => return Err(e),
            };
            Ok(IndexEntry {
                label,
                cell: *cell,
                status,
            })
        })
        .collect();

    let index = RunIndex {
        config: config.echo(),
        reference: REFERENCE_ARTIFACTS
            .iter()
            .map(|f| relative(&["reference", f]))
            .collect(),
        cells: entries.into_iter().collect::<Result<_>>()?,
    };
    write_json(&index, &out.join("index.json"))?;
    Ok(index)
}

/// Path of the index file for an output directory.
pub fn index_path(output_dir: &Path) -> PathBuf {
    output_dir.join("index.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_has_24_cells() {
        let c = ExperimentConfig::default();
        let cells = study_cells(&c);
        assert_eq!(cells.len(), 24);
        let mut labels: Vec<String> = cells.iter().map(RunCell::label).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 24);
    }

    #[test]
    fn seeds_depend_on_coordinates_only() {
        let a = RunCell::new(5, 3, FitMode::F, 100, 1);
        let b = RunCell::new(5, 3, FitMode::G, 100, 1);
        assert_eq!(a.surface_seed, b.surface_seed);
        assert_eq!(a.derived_seed, b.derived_seed);
        assert_ne!(a.surface_seed, RunCell::new(5, 3, FitMode::F, 100, 0).surface_seed);
        assert_ne!(a.derived_seed, RunCell::new(5, 3, FitMode::F, 1, 1).derived_seed);
        assert_ne!(a.surface_seed, RunCell::new(6, 3, FitMode::F, 100, 1).surface_seed);
        assert_eq!(a, RunCell::new(5, 3, FitMode::F, 100, 1));
    }

    #[test]
    fn aligned_rmse_ignores_offsets() {
        let g = crate::problem::GridSpec::square(4).unwrap();
        let a = SurfaceGrid::new(g, g.nodes().iter().map(|w| w[0] * w[1]).collect()).unwrap();
        assert_eq!(aligned_rmse(&a, &a.shifted(3.5)).unwrap(), 0.0);
    }
}
