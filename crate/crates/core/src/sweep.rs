//! Grid sweep over (positional coefficient, noise level) cells, each
//! trained with both architectures on identical data and masks, plus
//! the loss-ratio table formatter.

use crate::layers::{rng_labels, AdjacencyMode, Architecture, ModelConfig};
use crate::numerics::RngState;
use crate::synthgen::{gen_dataset, sample_e_ij, SynthConfig};
use crate::training::{train, TrainConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub e_p_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub epochs: usize,
    pub sample_count: usize,
    pub hidden_dim: usize,
}

impl SweepGrid {
    /// The full published grid: six positional coefficients, five noise
    /// levels, five trials per cell.
    pub fn default_with_seed(seed: u64) -> Self {
        SweepGrid {
            e_p_values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            sigma_values: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            trials: 5,
            seed,
            epochs: 200,
            sample_count: 20_000,
            hidden_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.e_p_values.is_empty() || self.sigma_values.is_empty() || self.trials == 0 {
            return Err(Error::Config("sweep grid must be non-empty".into()));
        }
        for &e_p in &self.e_p_values {
            if !(0.0..=1.0).contains(&e_p) {
                return Err(Error::Config(format!("e_p {e_p} outside [0, 1]")));
            }
        }
        for &s in &self.sigma_values {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma {s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn run_count(&self) -> usize {
        self.e_p_values.len() * self.sigma_values.len() * self.trials * 2
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub e_p_idx: usize,
    pub sigma_idx: usize,
    pub trial: usize,
    pub architecture: Architecture,
    pub best_test_loss: f64,
    pub best_epoch: usize,
    pub test_curve: Vec<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub grid: SweepGrid,
    pub runs: Vec<RunRecord>,
}

/// Seed for a cell's shared token-interaction matrix: one draw per
/// (e_p, sigma) cell, reused across trials and architectures.
fn cell_rng(master: u64, e_p_idx: usize, sigma_idx: usize) -> RngState {
    RngState::from_seed(master)
        .derive(rng_labels::TRANSFER)
        .derive(e_p_idx as u64)
        .derive(sigma_idx as u64)
}

fn data_seed(master: u64, e_p_idx: usize, sigma_idx: usize, trial: usize) -> u64 {
    RngState::from_seed(master)
        .derive(rng_labels::DATA)
        .derive(e_p_idx as u64)
        .derive(sigma_idx as u64)
        .derive(trial as u64)
        .seed()
}

fn train_seed(master: u64, e_p_idx: usize, sigma_idx: usize, trial: usize) -> u64 {
    RngState::from_seed(master)
        .derive(rng_labels::TRAIN)
        .derive(e_p_idx as u64)
        .derive(sigma_idx as u64)
        .derive(trial as u64)
        .seed()
}

fn model_seed(master: u64, e_p_idx: usize, sigma_idx: usize, trial: usize, arch: Architecture) -> u64 {
    RngState::from_seed(master)
        .derive(rng_labels::MODEL)
        .derive(e_p_idx as u64)
        .derive(sigma_idx as u64)
        .derive(trial as u64)
        .derive(match arch {
            Architecture::Attention => 0,
            Architecture::Adjacency => 1,
        })
        .seed()
}

/// The synthetic-data config for one trial of one cell. Public so the
/// acceptance suite can rebuild the exact dataset a sweep run saw.
pub fn cell_synth_config(grid: &SweepGrid, e_p_idx: usize, sigma_idx: usize, trial: usize) -> Result<SynthConfig> {
    let mut rng = cell_rng(grid.seed, e_p_idx, sigma_idx);
    let transfer = sample_e_ij(4, &mut rng);
    let mut cfg = SynthConfig::default_with_seed(data_seed(grid.seed, e_p_idx, sigma_idx, trial));
    cfg.transfer = transfer;
    cfg.e_p = grid.e_p_values[e_p_idx];
    cfg.sigma = grid.sigma_values[sigma_idx];
    cfg.sample_count = grid.sample_count;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cell_train_config(grid: &SweepGrid, e_p_idx: usize, sigma_idx: usize, trial: usize) -> TrainConfig {
    let mut tc = TrainConfig::default_with_seed(train_seed(grid.seed, e_p_idx, sigma_idx, trial));
    tc.epochs = grid.epochs;
    tc
}

fn cell_model_config(grid: &SweepGrid, e_p_idx: usize, sigma_idx: usize, trial: usize, arch: Architecture) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        vocab_size: 4,
        seq_len: 4,
        hidden_dim: grid.hidden_dim,
        adjacency_mode: AdjacencyMode::Dense,
        attention_scaling: false,
        num_layers: 1,
        seed: model_seed(grid.seed, e_p_idx, sigma_idx, trial, arch),
    }
}

/// Runs the whole grid. Work items are scheduled by index, and results
/// are written back by index, so the output is identical for any worker
/// count. Individual run failures do not abort the sweep; if any run
/// fails the error lists every gap.
pub fn run_sweep(grid: &SweepGrid, workers: usize) -> Result<SweepReport> {
    grid.validate()?;
    let mut jobs = Vec::new();
    for e_p_idx in 0..grid.e_p_values.len() {
        for sigma_idx in 0..grid.sigma_values.len() {
            for trial in 0..grid.trials {
                for arch in [Architecture::Attention, Architecture::Adjacency] {
                    jobs.push((e_p_idx, sigma_idx, trial, arch));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e_p_idx, sigma_idx, trial, arch)| {
                run_one(grid, e_p_idx, sigma_idx, trial, arch)
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut gaps = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(rec) => runs.push(rec),
            Err(e) => gaps.push(format!(
                "e_p={} sigma={} trial={} arch={}: {e}",
                grid.e_p_values[job.0], grid.sigma_values[job.1], job.2, job.3.as_str()
            )),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::PartialSweep(format!(
            "{} of {} runs failed:\n{}",
            gaps.len(),
            jobs.len(),
            gaps.join("\n")
        )));
    }
    Ok(SweepReport { grid: grid.clone(), runs })
}

fn run_one(grid: &SweepGrid, e_p_idx: usize, sigma_idx: usize, trial: usize, arch: Architecture) -> Result<RunRecord> {
    let synth_cfg = cell_synth_config(grid, e_p_idx, sigma_idx, trial)?;
    let dataset = gen_dataset(&synth_cfg)?;
    let train_cfg = cell_train_config(grid, e_p_idx, sigma_idx, trial);
    let model_cfg = cell_model_config(grid, e_p_idx, sigma_idx, trial, arch);
    let (_, report) = train(&model_cfg, &dataset, &train_cfg)?;
    let (best_epoch, best_test_loss) = report
        .best
        .ok_or_else(|| Error::Config("sweep runs need at least one epoch".into()))?;
    Ok(RunRecord {
        e_p_idx,
        sigma_idx,
        trial,
        architecture: arch,
        best_test_loss,
        best_epoch,
        test_curve: report.test_losses,
        wall_secs: report.wall_secs,
    })
}

/// Per-cell mean best losses and their ratio, plus the per-e_p average
/// ratio across noise levels.
#[derive(Debug, Clone)]
pub struct TableCell {
    pub tf_loss: f64,
    pub gnn_loss: f64,
    pub ratio: f64,
}

pub fn cell_table(report: &SweepReport) -> Vec<Vec<TableCell>> {
    let grid = &report.grid;
    let ne = grid.e_p_values.len();
    let ns = grid.sigma_values.len();
    let mut sums = vec![vec![[0.0f64; 2]; ns]; ne];
    let mut counts = vec![vec![[0usize; 2]; ns]; ne];
    for run in &report.runs {
        let a = match run.architecture {
            Architecture::Attention => 0,
            Architecture::Adjacency => 1,
        };
        sums[run.e_p_idx][run.sigma_idx][a] += run.best_test_loss;
        counts[run.e_p_idx][run.sigma_idx][a] += 1;
    }
    (0..ne)
        .map(|i| {
            (0..ns)
                .map(|j| {
                    let tf = sums[i][j][0] / counts[i][j][0] as f64;
                    let gnn = sums[i][j][1] / counts[i][j][1] as f64;
                    TableCell { tf_loss: tf, gnn_loss: gnn, ratio: gnn / tf }
                })
                .collect()
        })
        .collect()
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders the loss table grouped by e_p: one block per positional
/// coefficient, one row per noise level, TF/GNN losses, their ratio,
/// and the across-noise average ratio.
pub fn render_table(report: &SweepReport) -> String {
    let grid = &report.grid;
    let cells = cell_table(report);
    let mut out = String::new();
    out.push_str("masked value prediction: mean best test loss over trials\n");
    for (i, &e_p) in grid.e_p_values.iter().enumerate() {
        out.push_str(&format!("\ne_p = {e_p}\n"));
        out.push_str("  sigma     tf_loss    gnn_loss   ratio\n");
        let mut ratio_sum = 0.0;
        for (j, &sigma) in grid.sigma_values.iter().enumerate() {
            let c = &cells[i][j];
            ratio_sum += c.ratio;
            out.push_str(&format!(
                "  {:<9} {:<10} {:<10} {}\n",
                fmt3(sigma),
                fmt3(c.tf_loss),
                fmt3(c.gnn_loss),
                fmt3(c.ratio)
            ));
        }
        let avg = ratio_sum / grid.sigma_values.len() as f64;
        out.push_str(&format!("  avg ratio: {}\n", fmt3(avg)));
    }
    out
}

/// Machine-readable twin of the rendered table.
pub fn render_table_csv(report: &SweepReport) -> String {
    let grid = &report.grid;
    let cells = cell_table(report);
    let mut out = String::from("e_p,sigma,tf_loss,gnn_loss,ratio\n");
    for (i, &e_p) in grid.e_p_values.iter().enumerate() {
        for (j, &sigma) in grid.sigma_values.iter().enumerate() {
            let c = &cells[i][j];
            out.push_str(&format!(
                "{e_p},{sigma},{},{},{}\n",
                c.tf_loss, c.gnn_loss, c.ratio
            ));
        }
    }
    out
}

/// Long-format per-epoch test curves for every run.
pub fn render_curves_csv(report: &SweepReport) -> String {
    let mut out = String::from("e_p,sigma,architecture,trial,epoch,test_loss\n");
    for run in &report.runs {
        let e_p = report.grid.e_p_values[run.e_p_idx];
        let sigma = report.grid.sigma_values[run.sigma_idx];
        for (epoch, loss) in run.test_curve.iter().enumerate() {
            out.push_str(&format!(
                "{e_p},{sigma},{},{},{epoch},{loss}\n",
                run.architecture.as_str(),
                run.trial
            ));
        }
    }
    out
}

fn render_manifest(report: &SweepReport) -> String {
    let g = &report.grid;
    let total_wall: f64 = report.runs.iter().map(|r| r.wall_secs).sum();
    let mut out = String::new();
    out.push_str("[sweep]\n");
    out.push_str(&format!(
        "e_p_values = {}\n",
        g.e_p_values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
    ));
    out.push_str(&format!(
        "sigma_values = {}\n",
        g.sigma_values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
    ));
    out.push_str(&format!("trials = {}\n", g.trials));
    out.push_str(&format!("seed = {}\n", g.seed));
    out.push_str(&format!("epochs = {}\n", g.epochs));
    out.push_str(&format!("sample_count = {}\n", g.sample_count));
    out.push_str(&format!("hidden_dim = {}\n", g.hidden_dim));
    out.push_str(&format!("runs = {}\n", report.runs.len()));
    out.push_str(&format!("total_train_secs = {total_wall:.3}\n"));
    out.push_str(&format!("tool_version = {}\n", crate::VERSION));
    out
}

/// Writes table1.txt, table1.csv, curves.csv, and sweep_manifest.txt
/// into `dir`.
pub fn write_outputs(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("table1.txt"), render_table(report))?;
    std::fs::write(dir.join("table1.csv"), render_table_csv(report))?;
    std::fs::write(dir.join("curves.csv"), render_curves_csv(report))?;
    std::fs::write(dir.join("sweep_manifest.txt"), render_manifest(report))?;
    Ok(())
}
