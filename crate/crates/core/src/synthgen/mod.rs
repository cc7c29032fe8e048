//! Synthetic permutation/value dataset generation with a tunable
//! relative-position coefficient, plus dataset file serialization.
//!
//! Each sample draws a uniform permutation of the token set and builds
//! values autoregressively in slot order: the token at slot k receives
//! its exogenous Gaussian draw, an absolute-position term, and transfer
//! contributions from every earlier slot weighted by
//! `e_ij + e_p * (p_i - p_j)` with 1-based slot indices.

mod bayes;

pub use bayes::{
    bayes_risk, conditional_variance, set_bayes_floor, BayesRisk, ConditionalMeanOracle,
};

use crate::layers::rng_labels;
use crate::numerics::{DenseMatrix, RngState};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub token_count: usize,
    pub means: Vec<f64>,
    pub sigma: f64,
    pub alpha: f64,
    /// Transfer coefficients e_ij, one per ordered token pair. Diagonal
    /// entries are sampled but never used (tokens are distinct within a
    /// sample).
    pub transfer: DenseMatrix,
    pub e_p: f64,
    pub sample_count: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Reference defaults: four tokens with means
    /// {-0.5, -0.25, 0.25, 0.5}, alpha = -0.1, 20,000 samples split
    /// 70/30, transfer matrix sampled fresh from the seed.
    pub fn default_with_seed(seed: u64) -> Self {
        let mut rng = RngState::from_seed(seed).derive(rng_labels::TRANSFER);
        let transfer = sample_e_ij(4, &mut rng);
        SynthConfig {
            token_count: 4,
            means: vec![-0.5, -0.25, 0.25, 0.5],
            sigma: 0.1,
            alpha: -0.1,
            transfer,
            e_p: 0.0,
            sample_count: 20_000,
            train_fraction: 0.7,
            seed,
        }
    }

    /// Re-derives the transfer matrix from the current seed and token
    /// count; used after fields are edited in place (e.g. from a config
    /// file) so the matrix stays a pure function of the seed.
    pub fn resample_transfer(&mut self) {
        let mut rng = RngState::from_seed(self.seed).derive(rng_labels::TRANSFER);
        self.transfer = sample_e_ij(self.token_count, &mut rng);
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_count < 2 || self.token_count > 26 {
            return Err(Error::Config(format!(
                "token_count {} outside supported range 2..=26",
                self.token_count
            )));
        }
        if self.means.len() != self.token_count {
            return Err(Error::Config(format!(
                "{} means given for {} tokens",
                self.means.len(),
                self.token_count
            )));
        }
        if !(0.0..=1.0).contains(&self.e_p) {
            return Err(Error::Config(format!("e_p {} outside [0,1]", self.e_p)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma {} must be nonnegative", self.sigma)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0,1)",
                self.train_fraction
            )));
        }
        if self.sample_count < 2 {
            return Err(Error::Config("sample_count must be >= 2".into()));
        }
        if self.transfer.rows() != self.token_count || self.transfer.cols() != self.token_count {
            return Err(Error::Config("transfer matrix dimensions mismatch token_count".into()));
        }
        Ok(())
    }
}

/// One (permutation, values) pair; slot positions are the 1-based
/// indices into these vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub tokens: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub train: Vec<SynthSample>,
    pub test: Vec<SynthSample>,
    pub config: SynthConfig,
}

/// Every entry i.i.d. uniform in the open interval (0.2, 0.5); one
/// matrix per experimental cell, shared by all samples in that cell.
pub fn sample_e_ij(token_count: usize, rng: &mut RngState) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(token_count, token_count);
    for r in 0..token_count {
        for c in 0..token_count {
            m.set(r, c, rng.uniform_open(0.2, 0.5));
        }
    }
    m
}

/// Information-transfer coefficient from token i (slot p_i) to token j
/// (slot p_j): e_ij + e_p * (p_i - p_j). Slots are 1-based.
pub fn beta(cfg: &SynthConfig, i: usize, j: usize, p_i: usize, p_j: usize) -> f64 {
    cfg.transfer.get(i, j) + cfg.e_p * (p_i as f64 - p_j as f64)
}

/// Autoregressive value generation in a fixed token order: token 0 is
/// exogenous, and each higher-numbered token receives transfer from
/// every lower-numbered token. The sampled permutation enters only
/// through the slot positions used by the absolute-position term and
/// the relative-position part of beta, so at e_p = 0 the transfer
/// structure is identical for every permutation. `u_draws` holds one
/// exogenous draw per token id; the result is in slot order.
pub fn gen_values(permutation: &[usize], u_draws: &[f64], cfg: &SynthConfig) -> Vec<f64> {
    let l = permutation.len();
    let mut slot = vec![0usize; l]; // 1-based slot of each token id
    for (k, &t) in permutation.iter().enumerate() {
        slot[t] = k + 1;
    }
    let mut v_tok = vec![0.0; l];
    for t in 0..l {
        let mut v = u_draws[t] + cfg.alpha * slot[t] as f64;
        for s in 0..t {
            v += beta(cfg, s, t, slot[s], slot[t]) * v_tok[s];
        }
        v_tok[t] = v;
    }
    permutation.iter().map(|&t| v_tok[t]).collect()
}

fn gen_sample(cfg: &SynthConfig, sample_rng: &mut RngState) -> SynthSample {
    let mut perm: Vec<usize> = (0..cfg.token_count).collect();
    sample_rng.shuffle(&mut perm);
    let u: Vec<f64> = cfg
        .means
        .iter()
        .map(|&mu| sample_rng.normal(mu, cfg.sigma))
        .collect();
    let values = gen_values(&perm, &u, cfg);
    SynthSample { tokens: perm, values }
}

/// Generates the full dataset and splits it by the train fraction.
/// Pure function of the config; per-sample child RNG streams keyed by
/// sample index keep the output identical under any parallel schedule.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let base = RngState::from_seed(cfg.seed).derive(rng_labels::DATA);
    let samples: Vec<SynthSample> = (0..cfg.sample_count)
        .map(|i| {
            let mut rng = base.derive(i as u64);
            gen_sample(cfg, &mut rng)
        })
        .collect();
    let train_n = (cfg.sample_count as f64 * cfg.train_fraction).round() as usize;
    let train_n = train_n.clamp(1, cfg.sample_count - 1);
    let mut samples = samples;
    let test = samples.split_off(train_n);
    Ok(SynthDataset {
        train: samples,
        test,
        config: cfg.clone(),
    })
}

fn token_letter(id: usize) -> char {
    (b'a' + id as u8) as char
}

fn token_id(c: char) -> Result<usize> {
    if c.is_ascii_lowercase() {
        Ok((c as u8 - b'a') as usize)
    } else {
        Err(Error::Data(format!("invalid token letter '{c}'")))
    }
}

/// Writes one split as a text file: header lines embedding the full
/// config, then one `tokens<TAB>values` record per sample with 9
/// significant digits.
pub fn write_split(
    cfg: &SynthConfig,
    samples: &[SynthSample],
    split_name: &str,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# posfree dataset v1").unwrap();
    writeln!(out, "# token_count = {}", cfg.token_count).unwrap();
    writeln!(out, "# means = {}", join_floats(&cfg.means)).unwrap();
    writeln!(out, "# sigma = {}", cfg.sigma).unwrap();
    writeln!(out, "# alpha = {}", cfg.alpha).unwrap();
    writeln!(out, "# transfer = {}", join_floats(cfg.transfer.data())).unwrap();
    writeln!(out, "# e_p = {}", cfg.e_p).unwrap();
    writeln!(out, "# sample_count = {}", cfg.sample_count).unwrap();
    writeln!(out, "# train_fraction = {}", cfg.train_fraction).unwrap();
    writeln!(out, "# seed = {}", cfg.seed).unwrap();
    writeln!(out, "# split = {split_name}").unwrap();
    writeln!(out, "# records = {}", samples.len()).unwrap();
    for s in samples {
        let tokens: String = s
            .tokens
            .iter()
            .map(|&t| token_letter(t).to_string())
            .collect::<Vec<_>>()
            .join(",");
        let values: String = s
            .values
            .iter()
            .map(|v| format!("{v:.8e}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{tokens}\t{values}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Data(format!("bad float '{t}': {e}")))
        })
        .collect()
}

/// Reads one split file back: (config, samples).
pub fn read_split(path: &Path) -> Result<(SynthConfig, Vec<SynthSample>)> {
    let text = std::fs::read_to_string(path)?;
    let mut token_count = None;
    let mut means = None;
    let mut sigma = None;
    let mut alpha = None;
    let mut transfer = None;
    let mut e_p = None;
    let mut sample_count = None;
    let mut train_fraction = None;
    let mut seed = None;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, val)) = rest.split_once('=') {
                let key = key.trim();
                let val = val.trim();
                let bad = |e: String| Error::Data(format!("line {}: {e}", lineno + 1));
                match key {
                    "token_count" => token_count = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "means" => means = Some(parse_floats(val)?),
                    "sigma" => sigma = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "alpha" => alpha = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "transfer" => transfer = Some(parse_floats(val)?),
                    "e_p" => e_p = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "sample_count" => sample_count = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "train_fraction" => train_fraction = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    "seed" => seed = Some(val.parse().map_err(|e| bad(format!("{e}")))?),
                    _ => {} // split / records / version markers
                }
            }
            continue;
        }
        let (toks, vals) = line.split_once('\t').ok_or_else(|| {
            Error::Data(format!("line {}: record missing tab separator", lineno + 1))
        })?;
        let tokens: Vec<usize> = toks
            .split(',')
            .map(|t| {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => token_id(c),
                    _ => Err(Error::Data(format!("line {}: bad token '{t}'", lineno + 1))),
                }
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = vals
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if tokens.len() != values.len() {
            return Err(Error::Data(format!(
                "line {}: {} tokens but {} values",
                lineno + 1,
                tokens.len(),
                values.len()
            )));
        }
        samples.push(SynthSample { tokens, values });
    }
    let tc: usize = token_count.ok_or_else(|| Error::Data("missing token_count header".into()))?;
    let transfer = DenseMatrix::from_vec(
        tc,
        tc,
        transfer.ok_or_else(|| Error::Data("missing transfer header".into()))?,
    )?;
    let cfg = SynthConfig {
        token_count: tc,
        means: means.ok_or_else(|| Error::Data("missing means header".into()))?,
        sigma: sigma.ok_or_else(|| Error::Data("missing sigma header".into()))?,
        alpha: alpha.ok_or_else(|| Error::Data("missing alpha header".into()))?,
        transfer,
        e_p: e_p.ok_or_else(|| Error::Data("missing e_p header".into()))?,
        sample_count: sample_count.ok_or_else(|| Error::Data("missing sample_count header".into()))?,
        train_fraction: train_fraction
            .ok_or_else(|| Error::Data("missing train_fraction header".into()))?,
        seed: seed.ok_or_else(|| Error::Data("missing seed header".into()))?,
    };
    cfg.validate()?;
    Ok((cfg, samples))
}

/// Enumerates all permutations of 0..n in lexicographic order.
pub fn enumerate_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        out.push(perm.clone());
        // next_permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    out
}

/// Lehmer rank of a permutation, matching `enumerate_permutations` order.
pub fn permutation_rank(perm: &[usize]) -> usize {
    let n = perm.len();
    let mut rank = 0;
    let mut factorial = 1;
    for i in 2..=n {
        factorial *= i;
    }
    for (i, &p) in perm.iter().enumerate() {
        factorial /= n - i;
        let smaller = perm[i + 1..].iter().filter(|&&q| q < p).count();
        rank += smaller * factorial;
    }
    rank
}
