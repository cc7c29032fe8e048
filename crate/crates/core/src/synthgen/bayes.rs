//! Closed-form Bayes-risk oracle for the masked-value problem.
//!
//! For a fixed permutation, the generated values are an affine function
//! of the exogenous Gaussian vector, so (values | permutation) is
//! jointly Gaussian. The minimum achievable squared error for a masked
//! coordinate given the visible ones is the exact Gaussian conditional
//! variance, averaged over the uniform permutation and mask choices.

use super::{enumerate_permutations, permutation_rank, SynthConfig};
use crate::numerics::{solve_small, DenseMatrix};
use crate::{Error, Result};
use std::collections::HashMap;

/// Affine structure of one permutation: values = transform * u_perm + offset.
struct PermAffine {
    mean: Vec<f64>,       // E[values]
    cov: DenseMatrix,     // Cov[values] = sigma^2 T T^t
}

fn perm_affine(cfg: &SynthConfig, perm: &[usize]) -> PermAffine {
    let l = perm.len();
    let mut slot = vec![0usize; l]; // 1-based slot of each token id
    for (k, &tok) in perm.iter().enumerate() {
        slot[tok] = k + 1;
    }
    // T maps exogenous draws (in token-id order) to token values; unit
    // lower triangular built by forward substitution of the generator.
    let mut t = DenseMatrix::zeros(l, l);
    for tok in 0..l {
        t.set(tok, tok, 1.0);
        for src in 0..tok {
            let b = super::beta(cfg, src, tok, slot[src], slot[tok]);
            for c in 0..=src {
                let add = b * t.get(src, c);
                t.set(tok, c, t.get(tok, c) + add);
            }
        }
    }
    let base_mean: Vec<f64> = (0..l)
        .map(|tok| cfg.means[tok] + cfg.alpha * slot[tok] as f64)
        .collect();
    let mut mean_tok = vec![0.0; l];
    for tok in 0..l {
        for c in 0..l {
            mean_tok[tok] += t.get(tok, c) * base_mean[c];
        }
    }
    let s2 = cfg.sigma * cfg.sigma;
    let mut cov_tok = DenseMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let mut acc = 0.0;
            for c in 0..l {
                acc += t.get(i, c) * t.get(j, c);
            }
            cov_tok.set(i, j, s2 * acc);
        }
    }
    // Reindex from token order to slot order.
    let mut mean = vec![0.0; l];
    let mut cov = DenseMatrix::zeros(l, l);
    for i in 0..l {
        mean[i] = mean_tok[perm[i]];
        for j in 0..l {
            cov.set(i, j, cov_tok.get(perm[i], perm[j]));
        }
    }
    PermAffine { mean, cov }
}

/// Exact conditional variance of `masked` given the coordinates in
/// `observed` for the given permutation.
pub fn conditional_variance(
    cfg: &SynthConfig,
    perm: &[usize],
    masked: usize,
    observed: &[usize],
) -> Result<f64> {
    let aff = perm_affine(cfg, perm);
    cond_var_from_cov(&aff.cov, masked, observed)
        .map_err(|e| Error::Numeric(format!("permutation {perm:?}: {e}")))
}

fn cond_var_from_cov(cov: &DenseMatrix, masked: usize, observed: &[usize]) -> Result<f64> {
    let no = observed.len();
    let prior = cov.get(masked, masked);
    if no == 0 {
        return Ok(prior);
    }
    let mut s_oo = DenseMatrix::zeros(no, no);
    let mut s_ok = vec![0.0; no];
    for (a, &i) in observed.iter().enumerate() {
        s_ok[a] = cov.get(i, masked);
        for (b, &j) in observed.iter().enumerate() {
            s_oo.set(a, b, cov.get(i, j));
        }
    }
    let w = solve_small(&s_oo, &s_ok)?;
    let mut reduction = 0.0;
    for a in 0..no {
        reduction += s_ok[a] * w[a];
    }
    Ok(prior - reduction)
}

fn mask_subsets(l: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, l: usize, m: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for i in start..l {
            current.push(i);
            rec(i + 1, l, m, current, out);
            current.pop();
        }
    }
    rec(0, l, m, &mut current, &mut out);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct BayesRisk {
    /// Mean conditional variance over permutations, mask subsets, and
    /// masked coordinates.
    pub risk: f64,
    /// Variance of the per-position squared error at the Bayes optimum.
    pub sqerr_variance: f64,
}

impl BayesRisk {
    /// Standard error of a test-set loss estimate over n masked positions.
    pub fn standard_error(&self, n: usize) -> f64 {
        (self.sqerr_variance / n as f64).sqrt()
    }
}

/// Closed-form Bayes risk for `masks_per_sample` uniformly chosen
/// masked slots. Requires sigma > 0.
pub fn bayes_risk(cfg: &SynthConfig, masks_per_sample: usize) -> Result<BayesRisk> {
    cfg.validate()?;
    if cfg.sigma <= 0.0 {
        return Err(Error::Config("bayes_risk requires sigma > 0".into()));
    }
    let l = cfg.token_count;
    if masks_per_sample == 0 || masks_per_sample >= l {
        return Err(Error::Config(format!(
            "masks_per_sample {masks_per_sample} must be in 1..{l}"
        )));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for perm in enumerate_permutations(l) {
        let aff = perm_affine(cfg, &perm);
        for subset in mask_subsets(l, masks_per_sample) {
            let observed: Vec<usize> = (0..l).filter(|i| !subset.contains(i)).collect();
            for &k in &subset {
                let var = cond_var_from_cov(&aff.cov, k, &observed)
                    .map_err(|e| Error::Numeric(format!("permutation {perm:?}: {e}")))?;
                sum += var;
                // Gaussian residual: squared error ~ var * chi^2_1, so
                // E[e] = var and E[e^2] = 3 var^2.
                sum_sq += 3.0 * var * var;
                count += 1;
            }
        }
    }
    let risk = sum / count as f64;
    let second_moment = sum_sq / count as f64;
    Ok(BayesRisk {
        risk,
        sqerr_variance: second_moment - risk * risk,
    })
}

/// The exact conditional-mean predictor, usable wherever a trained
/// model is: given (tokens, visible values, mask flags) it returns the
/// Gaussian conditional expectation for each masked slot.
pub struct ConditionalMeanOracle {
    token_count: usize,
    /// per (perm rank, mask bitmask): (mean vector, per-masked-coord
    /// regression weights over observed coords in ascending order)
    table: HashMap<(usize, u32), SubsetSolution>,
}

struct SubsetSolution {
    mean: Vec<f64>,
    observed: Vec<usize>,
    /// weights[i] pairs with the i-th masked coordinate (ascending).
    masked: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl ConditionalMeanOracle {
    pub fn new(cfg: &SynthConfig, masks_per_sample: usize) -> Result<Self> {
        cfg.validate()?;
        if cfg.sigma <= 0.0 {
            return Err(Error::Config("conditional-mean oracle requires sigma > 0".into()));
        }
        let l = cfg.token_count;
        let mut table = HashMap::new();
        for perm in enumerate_permutations(l) {
            let aff = perm_affine(cfg, &perm);
            let rank = permutation_rank(&perm);
            for subset in mask_subsets(l, masks_per_sample) {
                let observed: Vec<usize> = (0..l).filter(|i| !subset.contains(i)).collect();
                let no = observed.len();
                let mut s_oo = DenseMatrix::zeros(no, no);
                for (a, &i) in observed.iter().enumerate() {
                    for (b, &j) in observed.iter().enumerate() {
                        s_oo.set(a, b, aff.cov.get(i, j));
                    }
                }
                let mut weights = Vec::with_capacity(subset.len());
                for &k in &subset {
                    let s_ok: Vec<f64> =
                        observed.iter().map(|&i| aff.cov.get(i, k)).collect();
                    let w = solve_small(&s_oo, &s_ok)
                        .map_err(|e| Error::Numeric(format!("permutation {perm:?}: {e}")))?;
                    weights.push(w);
                }
                let bitmask = subset.iter().fold(0u32, |m, &i| m | (1 << i));
                table.insert(
                    (rank, bitmask),
                    SubsetSolution {
                        mean: aff.mean.clone(),
                        observed,
                        masked: subset,
                        weights,
                    },
                );
            }
        }
        Ok(ConditionalMeanOracle {
            token_count: l,
            table,
        })
    }

    /// Predictions for every slot: conditional means at masked slots,
    /// pass-through values elsewhere.
    pub fn predict(&self, tokens: &[usize], values: &[f64], flags: &[bool]) -> Result<Vec<f64>> {
        if tokens.len() != self.token_count {
            return Err(Error::Data(format!(
                "oracle built for {} slots, sample has {}",
                self.token_count,
                tokens.len()
            )));
        }
        let rank = permutation_rank(tokens);
        let bitmask = flags
            .iter()
            .enumerate()
            .fold(0u32, |m, (i, &f)| if f { m | (1 << i) } else { m });
        let sol = self.table.get(&(rank, bitmask)).ok_or_else(|| {
            Error::Usage(format!(
                "oracle has no solution for permutation rank {rank} mask {bitmask:#b}"
            ))
        })?;
        let mut preds = values.to_vec();
        for (mi, &k) in sol.masked.iter().enumerate() {
            let mut p = sol.mean[k];
            for (a, &o) in sol.observed.iter().enumerate() {
                p += sol.weights[mi][a] * (values[o] - sol.mean[o]);
            }
            preds[k] = p;
        }
        Ok(preds)
    }
}

/// Determinant of a small matrix via Gaussian elimination with partial
/// pivoting. Used only for permutation-posterior likelihoods.
fn det_small(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a.get(r, col).abs() > a.get(pivot, col).abs() {
                pivot = r;
            }
        }
        if a.get(pivot, col) == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a.get(col, c);
                a.set(col, c, a.get(pivot, c));
                a.set(pivot, c, tmp);
            }
            det = -det;
        }
        let p = a.get(col, col);
        det *= p;
        for r in col + 1..n {
            let f = a.get(r, col) / p;
            for c in col..n {
                let v = a.get(r, c) - f * a.get(col, c);
                a.set(r, c, v);
            }
        }
    }
    det
}

/// Monte-Carlo estimate of the lowest expected squared error reachable
/// by any permutation-equivariant predictor: one that sees the
/// token/value pairs and which token is masked, but no slot indices.
/// Such a predictor cannot tell two permutations apart beyond what the
/// visible values reveal, so its optimum is the posterior-weighted
/// average of the per-permutation conditional means. This floor sits
/// at or above `bayes_risk` (which assumes the permutation is known)
/// and the gap between the two is exactly the information carried by
/// slot positions.
pub fn set_bayes_floor(cfg: &SynthConfig, samples: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if cfg.sigma <= 0.0 {
        return Err(Error::Config("set_bayes_floor requires sigma > 0".into()));
    }
    if samples == 0 {
        return Err(Error::Config("set_bayes_floor requires samples > 0".into()));
    }
    let l = cfg.token_count;
    let perms = enumerate_permutations(l);
    // Token-indexed moments per candidate permutation.
    struct Candidate {
        slot_of: Vec<usize>,
        mean: Vec<f64>,
        cov: DenseMatrix,
    }
    let candidates: Vec<Candidate> = perms
        .iter()
        .map(|perm| {
            let aff = perm_affine(cfg, perm);
            let mut slot_of = vec![0usize; l];
            for (k, &t) in perm.iter().enumerate() {
                slot_of[t] = k;
            }
            Candidate { slot_of, mean: aff.mean, cov: aff.cov }
        })
        .collect();
    let mut rng = crate::numerics::RngState::from_seed(seed).derive(rng_labels_floor());
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut perm: Vec<usize> = (0..l).collect();
        rng.shuffle(&mut perm);
        let u: Vec<f64> = cfg
            .means
            .iter()
            .map(|&mu| rng.normal(mu, cfg.sigma))
            .collect();
        let values = super::gen_values(&perm, &u, cfg);
        let mut value_of = vec![0.0; l];
        for (k, &t) in perm.iter().enumerate() {
            value_of[t] = values[k];
        }
        let masked_tok = perm[rng.usize_below(l)];
        let obs_toks: Vec<usize> = (0..l).filter(|&t| t != masked_tok).collect();
        let no = obs_toks.len();
        let mut logliks = Vec::with_capacity(candidates.len());
        let mut cond_means = Vec::with_capacity(candidates.len());
        for cand in &candidates {
            let oi: Vec<usize> = obs_toks.iter().map(|&t| cand.slot_of[t]).collect();
            let mi = cand.slot_of[masked_tok];
            let mut s_oo = DenseMatrix::zeros(no, no);
            let mut resid = vec![0.0; no];
            for (a, (&t, &i)) in obs_toks.iter().zip(&oi).enumerate() {
                resid[a] = value_of[t] - cand.mean[i];
                for (b, &j) in oi.iter().enumerate() {
                    s_oo.set(a, b, cand.cov.get(i, j));
                }
            }
            let x = solve_small(&s_oo, &resid)
                .map_err(|e| Error::Numeric(format!("floor posterior: {e}")))?;
            let mut cm = cand.mean[mi];
            let mut quad = 0.0;
            for a in 0..no {
                cm += cand.cov.get(mi, oi[a]) * x[a];
                quad += resid[a] * x[a];
            }
            let det = det_small(&s_oo);
            if det <= 0.0 {
                return Err(Error::Numeric(
                    "floor posterior: non-positive covariance determinant".into(),
                ));
            }
            logliks.push(-0.5 * quad - 0.5 * det.ln());
            cond_means.push(cm);
        }
        let max_ll = logliks.iter().cloned().fold(f64::MIN, f64::max);
        let mut w_sum = 0.0;
        let mut pred = 0.0;
        for (ll, cm) in logliks.iter().zip(&cond_means) {
            let w = (ll - max_ll).exp();
            w_sum += w;
            pred += w * cm;
        }
        pred /= w_sum;
        let err = pred - value_of[masked_tok];
        sum_sq += err * err;
    }
    Ok(sum_sq / samples as f64)
}

/// Label for the floor estimator's RNG stream.
fn rng_labels_floor() -> u64 {
    super::rng_labels::DATA ^ 0x5e7_f100e
}
