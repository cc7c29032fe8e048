//! Sectioned key=value experiment config files.
//!
//! The format is deliberately tiny: `[section]` headers, `key = value`
//! lines, `#` comments, nothing else. Every field of every runtime
//! config is addressable, unknown keys are rejected, and diagnostics
//! carry line numbers. Defaults reproduce the published experiment
//! settings, so an empty file is a valid full experiment.

use crate::costmodel::CostConfig;
use crate::layers::{AdjacencyMode, Architecture, ModelConfig};
use crate::sweep::SweepGrid;
use crate::synthgen::SynthConfig;
use crate::training::TrainConfig;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// The parsed file: one experiment's worth of settings. The synthetic
/// section stores the generator seed; the token-interaction matrix is
/// always re-derived from that seed, which keeps files short and the
/// round-trip exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfigFile {
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub cost: CostSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub token_count: usize,
    pub means: Vec<f64>,
    pub sigma: f64,
    pub alpha: f64,
    pub e_p: f64,
    pub sample_count: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub hidden_dim: usize,
    /// 0 selects the dense adjacency table; r > 0 the rank-r factors.
    pub factor_rank: usize,
    pub attention_scaling: bool,
    pub num_layers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub masks_per_sample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub e_p_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub epochs: usize,
    pub sample_count: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSection {
    pub num_layers: usize,
    pub vocab_size: usize,
    pub factor_rank: usize,
    pub bytes_per_scalar: usize,
    /// hidden_dim/seq_len pairs, rendered as "d/l".
    pub settings: Vec<(usize, usize)>,
    pub scaling_lengths: Vec<usize>,
    pub memory_budget_bytes: f64,
}

impl Default for ExperimentConfigFile {
    fn default() -> Self {
        ExperimentConfigFile {
            synth: SynthSection {
                token_count: 4,
                means: vec![-0.5, -0.25, 0.25, 0.5],
                sigma: 0.1,
                alpha: -0.1,
                e_p: 0.0,
                sample_count: 20_000,
                train_fraction: 0.7,
                seed: 0,
            },
            model: ModelSection {
                architecture: Architecture::Attention,
                vocab_size: 4,
                seq_len: 4,
                hidden_dim: 8,
                factor_rank: 0,
                attention_scaling: false,
                num_layers: 1,
                seed: 0,
            },
            train: TrainSection {
                epochs: 200,
                batch_size: 256,
                learning_rate: 0.001,
                masks_per_sample: 1,
                seed: 0,
            },
            sweep: SweepSection {
                e_p_values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
                sigma_values: vec![0.1, 0.2, 0.3, 0.4, 0.5],
                trials: 5,
                seed: 0,
                epochs: 200,
                sample_count: 20_000,
                hidden_dim: 8,
            },
            cost: CostSection {
                num_layers: 6,
                vocab_size: 60_000,
                factor_rank: 0,
                bytes_per_scalar: 4,
                settings: vec![(256, 512), (128, 512), (512, 512), (256, 256), (256, 1024)],
                scaling_lengths: vec![128, 256, 512, 1024, 2048, 4096],
                memory_budget_bytes: 16.0 * 1024.0 * 1024.0,
            },
        }
    }
}

impl ExperimentConfigFile {
    pub fn to_synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        let mut cfg = SynthConfig::default_with_seed(s.seed);
        cfg.token_count = s.token_count;
        cfg.means = s.means.clone();
        cfg.sigma = s.sigma;
        cfg.alpha = s.alpha;
        cfg.e_p = s.e_p;
        cfg.sample_count = s.sample_count;
        cfg.train_fraction = s.train_fraction;
        cfg.resample_transfer();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            architecture: m.architecture,
            vocab_size: m.vocab_size,
            seq_len: m.seq_len,
            hidden_dim: m.hidden_dim,
            adjacency_mode: if m.factor_rank == 0 {
                AdjacencyMode::Dense
            } else {
                AdjacencyMode::Factorized { rank: m.factor_rank }
            },
            attention_scaling: m.attention_scaling,
            num_layers: m.num_layers,
            seed: m.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            masks_per_sample: t.masks_per_sample,
            seed: t.seed,
        }
    }

    pub fn to_sweep_grid(&self) -> Result<SweepGrid> {
        let s = &self.sweep;
        let grid = SweepGrid {
            e_p_values: s.e_p_values.clone(),
            sigma_values: s.sigma_values.clone(),
            trials: s.trials,
            seed: s.seed,
            epochs: s.epochs,
            sample_count: s.sample_count,
            hidden_dim: s.hidden_dim,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_cost_configs(&self) -> Result<Vec<CostConfig>> {
        let c = &self.cost;
        let mut out = Vec::new();
        for &(d, l) in &c.settings {
            for arch in [Architecture::Attention, Architecture::Adjacency] {
                let mut cfg = CostConfig::new(arch, c.num_layers, d, l, c.vocab_size);
                cfg.bytes_per_scalar = c.bytes_per_scalar;
                if c.factor_rank > 0 {
                    cfg.adjacency_mode = AdjacencyMode::Factorized { rank: c.factor_rank };
                }
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }

    /// Applies a global seed (e.g. --seed or POSFREE_SEED) to every
    /// section that carries one.
    pub fn override_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.sweep.seed = seed;
    }
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("config line {line}: {msg}"))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| parse_err(line, format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| parse_err(line, format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| parse_err(line, format!("{key}: expected a number, got '{v}'")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(line, format!("{key}: expected true|false, got '{v}'"))),
    }
}

fn parse_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_f64(line, key, p.trim()))
        .collect()
}

fn parse_usize_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|p| parse_usize(line, key, p.trim()))
        .collect()
}

fn parse_settings(line: usize, v: &str) -> Result<Vec<(usize, usize)>> {
    v.split(',')
        .map(|p| {
            let p = p.trim();
            let (d, l) = p
                .split_once('/')
                .ok_or_else(|| parse_err(line, format!("settings: expected d/l pairs, got '{p}'")))?;
            Ok((parse_usize(line, "settings", d)?, parse_usize(line, "settings", l)?))
        })
        .collect()
}

pub fn parse(text: &str) -> Result<ExperimentConfigFile> {
    let mut cfg = ExperimentConfigFile::default();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                .trim();
            match name {
                "synth" | "model" | "train" | "sweep" | "cost" => {
                    section = Some(name.to_string());
                }
                other => {
                    return Err(parse_err(
                        line_no,
                        format!("unknown section [{other}] (expected synth|model|train|sweep|cost)"),
                    ))
                }
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(sec) = &section else {
            return Err(parse_err(line_no, format!("key '{key}' appears before any [section]")));
        };
        apply_key(&mut cfg, sec, key, value, line_no)?;
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfigFile, section: &str, key: &str, v: &str, line: usize) -> Result<()> {
    let unknown = || {
        Err(parse_err(
            line,
            format!("unknown key '{key}' in section [{section}]"),
        ))
    };
    match section {
        "synth" => {
            let s = &mut cfg.synth;
            match key {
                "token_count" => s.token_count = parse_usize(line, key, v)?,
                "means" => s.means = parse_f64_list(line, key, v)?,
                "sigma" => s.sigma = parse_f64(line, key, v)?,
                "alpha" => s.alpha = parse_f64(line, key, v)?,
                "e_p" => s.e_p = parse_f64(line, key, v)?,
                "sample_count" => s.sample_count = parse_usize(line, key, v)?,
                "train_fraction" => s.train_fraction = parse_f64(line, key, v)?,
                "seed" => s.seed = parse_u64(line, key, v)?,
                _ => return unknown(),
            }
        }
        "model" => {
            let m = &mut cfg.model;
            match key {
                "architecture" => {
                    m.architecture = Architecture::parse(v)
                        .map_err(|e| parse_err(line, e))?
                }
                "vocab_size" => m.vocab_size = parse_usize(line, key, v)?,
                "seq_len" => m.seq_len = parse_usize(line, key, v)?,
                "hidden_dim" => m.hidden_dim = parse_usize(line, key, v)?,
                "factor_rank" => m.factor_rank = parse_usize(line, key, v)?,
                "attention_scaling" => m.attention_scaling = parse_bool(line, key, v)?,
                "num_layers" => m.num_layers = parse_usize(line, key, v)?,
                "seed" => m.seed = parse_u64(line, key, v)?,
                _ => return unknown(),
            }
        }
        "train" => {
            let t = &mut cfg.train;
            match key {
                "epochs" => t.epochs = parse_usize(line, key, v)?,
                "batch_size" => t.batch_size = parse_usize(line, key, v)?,
                "learning_rate" => t.learning_rate = parse_f64(line, key, v)?,
                "masks_per_sample" => t.masks_per_sample = parse_usize(line, key, v)?,
                "seed" => t.seed = parse_u64(line, key, v)?,
                _ => return unknown(),
            }
        }
        "sweep" => {
            let s = &mut cfg.sweep;
            match key {
                "e_p_values" => s.e_p_values = parse_f64_list(line, key, v)?,
                "sigma_values" => s.sigma_values = parse_f64_list(line, key, v)?,
                "trials" => s.trials = parse_usize(line, key, v)?,
                "seed" => s.seed = parse_u64(line, key, v)?,
                "epochs" => s.epochs = parse_usize(line, key, v)?,
                "sample_count" => s.sample_count = parse_usize(line, key, v)?,
                "hidden_dim" => s.hidden_dim = parse_usize(line, key, v)?,
                _ => return unknown(),
            }
        }
        "cost" => {
            let c = &mut cfg.cost;
            match key {
                "num_layers" => c.num_layers = parse_usize(line, key, v)?,
                "vocab_size" => c.vocab_size = parse_usize(line, key, v)?,
                "factor_rank" => c.factor_rank = parse_usize(line, key, v)?,
                "bytes_per_scalar" => c.bytes_per_scalar = parse_usize(line, key, v)?,
                "settings" => c.settings = parse_settings(line, v)?,
                "scaling_lengths" => c.scaling_lengths = parse_usize_list(line, key, v)?,
                "memory_budget_bytes" => c.memory_budget_bytes = parse_f64(line, key, v)?,
                _ => return unknown(),
            }
        }
        _ => unreachable!("sections validated at header parse"),
    }
    Ok(())
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn render_lines(out: &mut String, section: &str, pairs: &BTreeMap<&str, String>) {
    out.push_str(&format!("[{section}]\n"));
    for (k, v) in pairs {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out.push('\n');
}

pub fn serialize(cfg: &ExperimentConfigFile) -> String {
    let mut out = String::new();
    let s = &cfg.synth;
    render_lines(
        &mut out,
        "synth",
        &BTreeMap::from([
            ("token_count", s.token_count.to_string()),
            ("means", join_f64(&s.means)),
            ("sigma", s.sigma.to_string()),
            ("alpha", s.alpha.to_string()),
            ("e_p", s.e_p.to_string()),
            ("sample_count", s.sample_count.to_string()),
            ("train_fraction", s.train_fraction.to_string()),
            ("seed", s.seed.to_string()),
        ]),
    );
    let m = &cfg.model;
    render_lines(
        &mut out,
        "model",
        &BTreeMap::from([
            ("architecture", m.architecture.as_str().to_string()),
            ("vocab_size", m.vocab_size.to_string()),
            ("seq_len", m.seq_len.to_string()),
            ("hidden_dim", m.hidden_dim.to_string()),
            ("factor_rank", m.factor_rank.to_string()),
            ("attention_scaling", m.attention_scaling.to_string()),
            ("num_layers", m.num_layers.to_string()),
            ("seed", m.seed.to_string()),
        ]),
    );
    let t = &cfg.train;
    render_lines(
        &mut out,
        "train",
        &BTreeMap::from([
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("masks_per_sample", t.masks_per_sample.to_string()),
            ("seed", t.seed.to_string()),
        ]),
    );
    let w = &cfg.sweep;
    render_lines(
        &mut out,
        "sweep",
        &BTreeMap::from([
            ("e_p_values", join_f64(&w.e_p_values)),
            ("sigma_values", join_f64(&w.sigma_values)),
            ("trials", w.trials.to_string()),
            ("seed", w.seed.to_string()),
            ("epochs", w.epochs.to_string()),
            ("sample_count", w.sample_count.to_string()),
            ("hidden_dim", w.hidden_dim.to_string()),
        ]),
    );
    let c = &cfg.cost;
    render_lines(
        &mut out,
        "cost",
        &BTreeMap::from([
            ("num_layers", c.num_layers.to_string()),
            ("vocab_size", c.vocab_size.to_string()),
            ("factor_rank", c.factor_rank.to_string()),
            ("bytes_per_scalar", c.bytes_per_scalar.to_string()),
            (
                "settings",
                c.settings
                    .iter()
                    .map(|(d, l)| format!("{d}/{l}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            (
                "scaling_lengths",
                c.scaling_lengths
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("memory_budget_bytes", c.memory_budget_bytes.to_string()),
        ]),
    );
    out
}

pub fn load(path: &std::path::Path) -> Result<ExperimentConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse(&text)
}

/// Sidecar-report renderers reused by training and manifest output.
pub fn render_model_section(m: &ModelConfig) -> String {
    let rank = match m.adjacency_mode {
        AdjacencyMode::Dense => 0,
        AdjacencyMode::Factorized { rank } => rank,
    };
    format!(
        "[model]\narchitecture = {}\nvocab_size = {}\nseq_len = {}\nhidden_dim = {}\nfactor_rank = {rank}\nattention_scaling = {}\nnum_layers = {}\nseed = {}\n",
        m.architecture.as_str(),
        m.vocab_size,
        m.seq_len,
        m.hidden_dim,
        m.attention_scaling,
        m.num_layers,
        m.seed
    )
}

pub fn render_train_section(t: &TrainConfig) -> String {
    format!(
        "[train]\nepochs = {}\nbatch_size = {}\nlearning_rate = {}\nmasks_per_sample = {}\nseed = {}\n",
        t.epochs, t.batch_size, t.learning_rate, t.masks_per_sample, t.seed
    )
}

pub fn render_synth_section(s: &SynthConfig) -> String {
    format!(
        "[synth]\ntoken_count = {}\nmeans = {}\nsigma = {}\nalpha = {}\ne_p = {}\nsample_count = {}\ntrain_fraction = {}\nseed = {}\n",
        s.token_count,
        join_f64(&s.means),
        s.sigma,
        s.alpha,
        s.e_p,
        s.sample_count,
        s.train_fraction,
        s.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_published_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfigFile::default());
        let synth = cfg.to_synth_config().unwrap();
        assert_eq!(synth.sample_count, 20_000);
        assert_eq!(synth.means, vec![-0.5, -0.25, 0.25, 0.5]);
        let train = cfg.to_train_config();
        assert_eq!(train.epochs, 200);
        assert_eq!(train.batch_size, 256);
        assert!((train.learning_rate - 0.001).abs() < 1e-15);
        let grid = cfg.to_sweep_grid().unwrap();
        assert_eq!(grid.run_count(), 300);
        assert_eq!(cfg.to_cost_configs().unwrap().len(), 10);
    }

    #[test]
    fn parse_serialize_round_trip() {
        let text = "\n[synth]\nsigma = 0.3\ne_p = 0.25\nseed = 9\n\n[model]\narchitecture = adjacency\nfactor_rank = 2\n\n[train]\nepochs = 10\n\n[sweep]\ntrials = 2\ne_p_values = 0, 0.5\n\n[cost]\nsettings = 8/16, 32/64\n";
        let cfg = parse(text).unwrap();
        assert!((cfg.synth.sigma - 0.3).abs() < 1e-15);
        assert_eq!(cfg.model.architecture, Architecture::Adjacency);
        assert_eq!(cfg.cost.settings, vec![(8, 16), (32, 64)]);
        let round = parse(&serialize(&cfg)).unwrap();
        assert_eq!(round, cfg);
        // And serializing the round-trip is byte-stable.
        assert_eq!(serialize(&round), serialize(&cfg));
    }

    #[test]
    fn unknown_key_rejected_with_line_number() {
        let text = "[synth]\nsigma = 0.1\nbogus = 3\n";
        match parse(text) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("line 3"), "{msg}");
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_section_and_bad_values_rejected() {
        assert!(matches!(parse("[mystery]\n"), Err(Error::Config(_))));
        match parse("[train]\nepochs = many\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(parse("sigma = 0.1\n").is_err());
        assert!(parse("[cost]\nsettings = 256x512\n").is_err());
        assert!(parse("[synth]\nbroken line\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse("# top comment\n\n[train]\n# inline section comment\nepochs = 7\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
    }

    #[test]
    fn seed_override_touches_all_sections() {
        let mut cfg = ExperimentConfigFile::default();
        cfg.override_seed(99);
        assert_eq!(cfg.synth.seed, 99);
        assert_eq!(cfg.model.seed, 99);
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.sweep.seed, 99);
    }

    #[test]
    fn synth_config_transfer_follows_seed() {
        let mut cfg = ExperimentConfigFile::default();
        cfg.synth.seed = 1;
        let a = cfg.to_synth_config().unwrap();
        let b = cfg.to_synth_config().unwrap();
        assert_eq!(a.transfer.data(), b.transfer.data());
        cfg.synth.seed = 2;
        let c = cfg.to_synth_config().unwrap();
        assert_ne!(a.transfer.data(), c.transfer.data());
    }
}
