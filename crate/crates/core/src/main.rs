use clap::{Args, Parser, Subcommand};
use posfree::config::ExperimentConfigFile;
use posfree::layers::Architecture;
use posfree::manifest::RunManifest;
use posfree::synthgen::{gen_dataset, read_split, write_split, SynthDataset};
use posfree::training::{train, write_report};
use posfree::{config, costmodel, layers, sweep, Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Reproducible masked-value-prediction experiments comparing QKV
/// attention with adjacency attention on synthetic permutation data.
#[derive(Parser)]
#[command(name = "posfree", version = posfree::VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config file; omitted means published defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override (falls back to POSFREE_SEED, then config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset files.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write its report and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory with train.tsv/test.tsv from `gen`; omitted means
        /// generate the dataset in memory from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Architecture override: attention|adjacency.
        #[arg(long)]
        arch: Option<String>,
        /// Epoch-count override.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run the full grid sweep and emit the loss-ratio table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parallel workers; default = available cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Epoch-count override for every run.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Emit the analytic FLOPs/memory report.
    Cost {
        #[command(flatten)]
        common: Common,
    },
    /// Pretty-print the table from an existing sweep output directory.
    Report {
        /// Directory containing table1.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(ExperimentConfigFile, u64)> {
    let mut cfg = match &common.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfigFile::default(),
    };
    let env_seed = match std::env::var("POSFREE_SEED") {
        Ok(s) => Some(s.parse::<u64>().map_err(|_| {
            Error::Usage(format!("POSFREE_SEED must be a non-negative integer, got '{s}'"))
        })?),
        Err(_) => None,
    };
    let seed = common.seed.or(env_seed);
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    let master = seed.unwrap_or(cfg.sweep.seed);
    Ok((cfg, master))
}

fn cmd_gen(common: &Common) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let synth = cfg.to_synth_config()?;
    let ds = gen_dataset(&synth)?;
    std::fs::create_dir_all(&common.out)?;
    let mut manifest = RunManifest::new("gen", master, &cfg);
    let train_path = common.out.join("train.tsv");
    let test_path = common.out.join("test.tsv");
    write_split(&synth, &ds.train, "train", &train_path)?;
    write_split(&synth, &ds.test, "test", &test_path)?;
    manifest.record(&train_path);
    manifest.record(&test_path);
    manifest.write(&common.out)?;
    println!(
        "wrote {} train and {} test samples to {}",
        ds.train.len(),
        ds.test.len(),
        common.out.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<SynthDataset> {
    let (cfg, train) = read_split(&dir.join("train.tsv"))?;
    let (cfg2, test) = read_split(&dir.join("test.tsv"))?;
    if cfg != cfg2 {
        return Err(Error::Data(
            "train.tsv and test.tsv carry different configs".into(),
        ));
    }
    Ok(SynthDataset { train, test, config: cfg })
}

fn cmd_train(common: &Common, data: &Option<PathBuf>, arch: &Option<String>, epochs: Option<usize>) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let dataset = match data {
        Some(dir) => load_dataset(dir)?,
        None => gen_dataset(&cfg.to_synth_config()?)?,
    };
    let mut model_cfg = cfg.to_model_config()?;
    if let Some(a) = arch {
        model_cfg.architecture = Architecture::parse(a)?;
    }
    let mut train_cfg = cfg.to_train_config();
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    let (params, report) = train(&model_cfg, &dataset, &train_cfg)?;
    std::fs::create_dir_all(&common.out)?;
    let mut manifest = RunManifest::new("train", master, &cfg);
    let csv = common.out.join("report.csv");
    let side = common.out.join("report.txt");
    let ckpt = common.out.join("checkpoint.bin");
    write_report(&report, &csv, &side)?;
    layers::save_checkpoint(&params, &ckpt)?;
    manifest.record(&csv);
    manifest.record(&side);
    manifest.record(&ckpt);
    manifest.write(&common.out)?;
    match report.best {
        Some((epoch, loss)) => println!("best test loss {loss} at epoch {epoch}"),
        None => println!("no epochs run; wrote initialization checkpoint"),
    }
    Ok(())
}

fn cmd_sweep(common: &Common, workers: Option<usize>, epochs: Option<usize>) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let mut grid = cfg.to_sweep_grid()?;
    if let Some(e) = epochs {
        grid.epochs = e;
    }
    let workers = workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let report = sweep::run_sweep(&grid, workers)?;
    sweep::write_outputs(&report, &common.out)?;
    let mut manifest = RunManifest::new("sweep", master, &cfg);
    for name in ["table1.txt", "table1.csv", "curves.csv", "sweep_manifest.txt"] {
        manifest.record(&common.out.join(name));
    }
    manifest.write(&common.out)?;
    let cells = sweep::cell_table(&report);
    let avgs: Vec<String> = cells
        .iter()
        .map(|row| {
            let avg = row.iter().map(|c| c.ratio).sum::<f64>() / row.len() as f64;
            format!("{avg:.3}")
        })
        .collect();
    println!("avg loss ratio per e_p: {}", avgs.join(" "));
    Ok(())
}

fn cmd_cost(common: &Common) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let configs = cfg.to_cost_configs()?;
    let reports: Vec<_> = configs
        .iter()
        .map(costmodel::full_report)
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&common.out)?;
    let mut manifest = RunManifest::new("cost", master, &cfg);
    let report_path = common.out.join("cost_report.csv");
    std::fs::write(&report_path, costmodel::render_report_csv(&reports))?;
    manifest.record(&report_path);
    if !cfg.cost.scaling_lengths.is_empty() {
        if let Some(first) = configs.first() {
            let table = costmodel::scaling_table(
                first,
                &cfg.cost.scaling_lengths,
                cfg.cost.memory_budget_bytes,
            )?;
            let scaling_path = common.out.join("scaling.csv");
            std::fs::write(&scaling_path, costmodel::render_scaling_csv(&table))?;
            manifest.record(&scaling_path);
        }
    }
    manifest.write(&common.out)?;
    println!("wrote {} cost rows to {}", reports.len(), report_path.display());
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let path = out.join("table1.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<(f64, f64, f64, f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "e_p,sigma,tf_loss,gnn_loss,ratio" {
                return Err(Error::Data(format!("{}: unrecognized header", path.display())));
            }
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 5 {
            return Err(Error::Data(format!(
                "{} line {}: expected 5 fields",
                path.display(),
                i + 1
            )));
        }
        rows.push((fields[0], fields[1], fields[2], fields[3], fields[4]));
    }
    let mut current_ep = f64::NAN;
    let mut ratios: Vec<f64> = Vec::new();
    let flush = |e_p: f64, ratios: &mut Vec<f64>| {
        if !ratios.is_empty() {
            let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
            println!("  avg ratio: {avg:.3}");
            ratios.clear();
        }
        let _ = e_p;
    };
    for (e_p, sigma, tf, gnn, ratio) in rows {
        if e_p != current_ep || current_ep.is_nan() {
            flush(current_ep, &mut ratios);
            println!("e_p = {e_p}");
            println!("  sigma     tf_loss    gnn_loss   ratio");
            current_ep = e_p;
        }
        println!("  {sigma:<9.3} {tf:<10.3} {gnn:<10.3} {ratio:.3}");
        ratios.push(ratio);
    }
    flush(current_ep, &mut ratios);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::Gen { common } => cmd_gen(common),
        Cmd::Train { common, data, arch, epochs } => cmd_train(common, data, arch, *epochs),
        Cmd::Sweep { common, workers, epochs } => cmd_sweep(common, *workers, *epochs),
        Cmd::Cost { common } => cmd_cost(common),
        Cmd::Report { out } => cmd_report(out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
