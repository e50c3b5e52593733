//! Runs every (treatment, replicate) cell of an experiment and writes the
//! per-generation CSV logs and winner genomes.
//!
//! Output layout under the configured directory:
//!
//! - `cells/<label>_r<replicate>.csv`, one log per cell
//! - `winners/<label>_r<replicate>.genome`, the winner dump of each cell
//! - `results.csv`, every cell log concatenated in (treatment, replicate) order

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use structevo::{run_replicate, GenerationRecord, RunHistory};

use crate::config::{ExperimentConfig, TaskSource};

pub const CSV_HEADER: &str =
    "generation,treatment,replicate,best_fitness,median_q,median_delta_to_mrec,median_mod_diversity";

/// Position of one cell in the experiment grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub treatment: usize,
    pub replicate: usize,
}

#[derive(Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    pub history: RunHistory,
    pub csv_path: PathBuf,
    pub winner_path: PathBuf,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub results_csv: PathBuf,
    /// Cells in (treatment, replicate) order.
    pub cells: Vec<CellResult>,
}

impl ExperimentOutput {
    pub fn data_rows(&self) -> usize {
        self.cells.iter().map(|c| c.history.records.len()).sum()
    }
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    (0..cfg.treatments.len())
        .flat_map(|treatment| (0..cfg.replicates).map(move |replicate| Cell { treatment, replicate }))
        .collect()
}

fn cell_stem(cfg: &ExperimentConfig, cell: Cell) -> String {
    format!("{}_r{:03}", cfg.treatments[cell.treatment].label, cell.replicate)
}

/// Runs one cell and returns its history without touching the file system.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<RunHistory> {
    let spec = &cfg.treatments[cell.treatment];
    run_replicate(&cfg.evolution, &spec.treatment, &cfg.task, cfg.seed(cell.replicate))
        .with_context(|| format!("treatment {} replicate {}", spec.label, cell.replicate))
}

fn metadata(cfg: &ExperimentConfig) -> String {
    let evo = &cfg.evolution;
    let task = match &cfg.task_source {
        TaskSource::PatternFile(p) => format!("pattern_file {}", p.file_name().map_or_else(
            || p.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        )),
        TaskSource::NonModularSeed(s) => format!("nonmodular seed {s}"),
    };
    let mut out = String::new();
    writeln!(out, "# task: {task}").unwrap();
    writeln!(
        out,
        "# population {} generations {} p_init {} m_rec {}",
        evo.population,
        evo.generations,
        evo.p_init,
        evo.m_rec.format(&evo.arch)
    )
    .unwrap();
    out
}

fn cell_header(cfg: &ExperimentConfig, cell: Cell) -> String {
    let spec = &cfg.treatments[cell.treatment];
    format!(
        "# cell treatment {} ({}) objective_probability {} replicate {} seed {}\n",
        spec.label,
        spec.treatment.kind,
        spec.treatment.objective_probability,
        cell.replicate,
        cfg.seed(cell.replicate)
    )
}

fn write_rows(out: &mut Vec<u8>, label: &str, replicate: usize, records: &[GenerationRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in records {
        w.write_record([
            r.generation.to_string(),
            label.to_string(),
            replicate.to_string(),
            r.best_fitness.to_string(),
            r.median_q.to_string(),
            r.median_delta_to_mrec.to_string(),
            r.median_mod_diversity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs all cells, in parallel across cells, and writes the outputs.
/// Reruns of the same configuration produce byte-identical files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let dir = &cfg.output_dir;
    let cells_dir = dir.join("cells");
    let winners_dir = dir.join("winners");
    for d in [&cells_dir, &winners_dir] {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }

    let meta = metadata(cfg);
    let results: Vec<CellResult> = cells(cfg)
        .into_par_iter()
        .map(|cell| {
            let history = run_cell(cfg, cell)?;
            let stem = cell_stem(cfg, cell);
            let mut bytes = Vec::new();
            bytes.extend_from_slice(meta.as_bytes());
            bytes.extend_from_slice(cell_header(cfg, cell).as_bytes());
            bytes.extend_from_slice(CSV_HEADER.as_bytes());
            bytes.push(b'\n');
            write_rows(&mut bytes, &cfg.treatments[cell.treatment].label, cell.replicate, &history.records)?;
            let csv_path = cells_dir.join(format!("{stem}.csv"));
            write_file(&csv_path, &bytes)?;
            let winner_path = winners_dir.join(format!("{stem}.genome"));
            write_file(&winner_path, history.winner.to_dump().as_bytes())?;
            Ok(CellResult { cell, seed: cfg.seed(cell.replicate), history, csv_path, winner_path })
        })
        .collect::<Result<_>>()?;

    let mut merged = Vec::new();
    merged.extend_from_slice(meta.as_bytes());
    for r in &results {
        merged.extend_from_slice(cell_header(cfg, r.cell).as_bytes());
    }
    merged.extend_from_slice(CSV_HEADER.as_bytes());
    merged.push(b'\n');
    for r in &results {
        write_rows(&mut merged, &cfg.treatments[r.cell.treatment].label, r.cell.replicate, &r.history.records)?;
    }
    let results_csv = dir.join("results.csv");
    write_file(&results_csv, &merged)?;
    Ok(ExperimentOutput { results_csv, cells: results })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}
