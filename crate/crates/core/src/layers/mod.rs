//! The two architectures under comparison: token/value embedding, QKV
//! attention, and adjacency attention (dense or factorized), with
//! analytic forward and backward passes.
//!
//! Parameters live in one flat `Vec<f64>` with a named-range layout, in
//! checkpoint declaration order: token embedding, value-encoder weight,
//! value-encoder bias, mask embedding, architecture block (w_q/w_k/w_v
//! or A or U,V), output-head weight, output-head bias. The optimizer,
//! the finite-difference oracle, and the checkpoint writer all operate
//! on that flat vector.

mod backward;
mod checkpoint;
mod forward;

pub use backward::backward_trace;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    adjacency_forward, attention_forward, embed, forward_trace, predict, LayerActivation, Trace,
};

use crate::numerics::RngState;
use crate::{Error, Result};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Attention,
    Adjacency,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Attention => "attention",
            Architecture::Adjacency => "adjacency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Architecture::Attention),
            "adjacency" => Ok(Architecture::Adjacency),
            other => Err(Error::Config(format!(
                "unknown architecture '{other}' (expected attention|adjacency)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyMode {
    Dense,
    Factorized { rank: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub hidden_dim: usize,
    pub adjacency_mode: AdjacencyMode,
    pub attention_scaling: bool,
    pub num_layers: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.seq_len == 0 || self.hidden_dim == 0 || self.num_layers == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.seq_len > self.vocab_size {
            return Err(Error::Config(format!(
                "sequence length {} exceeds vocabulary size {} (permutations are sampled without replacement)",
                self.seq_len, self.vocab_size
            )));
        }
        if let AdjacencyMode::Factorized { rank } = self.adjacency_mode {
            if rank == 0 || rank > self.vocab_size {
                return Err(Error::Config(format!(
                    "factorization rank {} must satisfy 0 < r <= vocab size {}",
                    rank, self.vocab_size
                )));
            }
        }
        Ok(())
    }
}

/// Named byte-free ranges into the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub token_embedding: Range<usize>, // s x d, row-major by token
    pub value_weight: Range<usize>,    // d (the 1 x d weight of L1)
    pub value_bias: Range<usize>,      // d
    pub mask_embedding: Range<usize>,  // d
    pub w_q: Range<usize>,             // d x d (attention only)
    pub w_k: Range<usize>,
    pub w_v: Range<usize>,
    pub adjacency: Range<usize>, // s x s (dense adjacency only)
    pub factor_u: Range<usize>,  // s x r (factorized adjacency only)
    pub factor_v: Range<usize>,  // s x r
    pub head_weight: Range<usize>, // d
    pub head_bias: Range<usize>,   // 1
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let s = cfg.vocab_size;
        let d = cfg.hidden_dim;
        let mut at = 0usize;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let token_embedding = take(s * d);
        let value_weight = take(d);
        let value_bias = take(d);
        let mask_embedding = take(d);
        let (w_q, w_k, w_v, adjacency, factor_u, factor_v) = match cfg.architecture {
            Architecture::Attention => (
                take(d * d),
                take(d * d),
                take(d * d),
                0..0,
                0..0,
                0..0,
            ),
            Architecture::Adjacency => match cfg.adjacency_mode {
                AdjacencyMode::Dense => (0..0, 0..0, 0..0, take(s * s), 0..0, 0..0),
                AdjacencyMode::Factorized { rank } => {
                    (0..0, 0..0, 0..0, 0..0, take(s * rank), take(s * rank))
                }
            },
        };
        let head_weight = take(d);
        let head_bias = take(1);
        ParamLayout {
            token_embedding,
            value_weight,
            value_bias,
            mask_embedding,
            w_q,
            w_k,
            w_v,
            adjacency,
            factor_u,
            factor_v,
            head_weight,
            head_bias,
            total: at,
        }
    }
}

/// All trainable weights for one model, flat with a named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl ParameterSet {
    /// Seeded random initialization. Embedding tables (token, mask)
    /// are standard normal; every linear map is uniform in
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)]; the dense adjacency and its
    /// factors are standard normal so that score rows differ from
    /// uniform at the start of training.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let mut rng = RngState::from_seed(config.seed).derive(rng_labels::PARAM_INIT);
        let mut data = vec![0.0; layout.total];
        let lin = 1.0 / (config.hidden_dim as f64).sqrt();
        for i in layout.token_embedding.clone().chain(layout.mask_embedding.clone()) {
            data[i] = rng.normal(0.0, 1.0);
        }
        // value encoder has fan-in 1
        for i in layout.value_weight.clone().chain(layout.value_bias.clone()) {
            data[i] = rng.uniform(-1.0, 1.0);
        }
        for i in layout
            .w_q
            .clone()
            .chain(layout.w_k.clone())
            .chain(layout.w_v.clone())
        {
            data[i] = rng.uniform(-lin, lin);
        }
        for i in layout.adjacency.clone() {
            data[i] = rng.normal(0.0, 1.0);
        }
        if let AdjacencyMode::Factorized { rank } = config.adjacency_mode {
            let fb = 1.0 / (rank as f64).sqrt();
            for i in layout.factor_u.clone().chain(layout.factor_v.clone()) {
                data[i] = rng.normal(0.0, fb);
            }
        }
        for i in layout.head_weight.clone().chain(layout.head_bias.clone()) {
            data[i] = rng.uniform(-lin, lin);
        }
        Ok(ParameterSet {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn zeros_like(other: &ParameterSet) -> Self {
        ParameterSet {
            config: other.config.clone(),
            layout: other.layout.clone(),
            data: vec![0.0; other.layout.total],
        }
    }

    pub fn token_embedding(&self) -> &[f64] {
        &self.data[self.layout.token_embedding.clone()]
    }

    pub fn value_weight(&self) -> &[f64] {
        &self.data[self.layout.value_weight.clone()]
    }

    pub fn value_bias(&self) -> &[f64] {
        &self.data[self.layout.value_bias.clone()]
    }

    pub fn mask_embedding(&self) -> &[f64] {
        &self.data[self.layout.mask_embedding.clone()]
    }

    pub fn w_q(&self) -> &[f64] {
        &self.data[self.layout.w_q.clone()]
    }

    pub fn w_k(&self) -> &[f64] {
        &self.data[self.layout.w_k.clone()]
    }

    pub fn w_v(&self) -> &[f64] {
        &self.data[self.layout.w_v.clone()]
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.data[self.layout.adjacency.clone()]
    }

    pub fn factor_u(&self) -> &[f64] {
        &self.data[self.layout.factor_u.clone()]
    }

    pub fn factor_v(&self) -> &[f64] {
        &self.data[self.layout.factor_v.clone()]
    }

    pub fn head_weight(&self) -> &[f64] {
        &self.data[self.layout.head_weight.clone()]
    }

    pub fn head_bias(&self) -> f64 {
        self.data[self.layout.head_bias.start]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite parameter {v} at flat index {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Labels for deriving independent RNG streams; kept in one place so
/// stream assignments never collide.
pub mod rng_labels {
    pub const PARAM_INIT: u64 = 0x50_41;
    pub const SHUFFLE: u64 = 0x53_48;
    pub const TRAIN_MASK: u64 = 0x54_4D;
    pub const EVAL_MASK: u64 = 0x45_4D;
    pub const PERMUTATION: u64 = 0x50_45;
    pub const EXOGENOUS: u64 = 0x55_44;
    pub const TRANSFER: u64 = 0x45_49;
    pub const DATA: u64 = 0x44_41;
    pub const TRAIN: u64 = 0x54_52;
    pub const MODEL: u64 = 0x4D_44;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(arch: Architecture) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            vocab_size: 4,
            seq_len: 4,
            hidden_dim: 8,
            adjacency_mode: AdjacencyMode::Dense,
            attention_scaling: false,
            num_layers: 1,
            seed: 1,
        }
    }

    #[test]
    fn layout_is_contiguous_and_exclusive() {
        let c = cfg(Architecture::Attention);
        let l = ParamLayout::new(&c);
        assert_eq!(l.token_embedding, 0..32);
        assert_eq!(l.total, 32 + 8 + 8 + 8 + 3 * 64 + 8 + 1);
        assert!(l.adjacency.is_empty());
        let c2 = cfg(Architecture::Adjacency);
        let l2 = ParamLayout::new(&c2);
        assert!(l2.w_q.is_empty());
        assert_eq!(l2.adjacency.len(), 16);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = cfg(Architecture::Attention);
        let a = ParameterSet::init(&c).unwrap();
        let b = ParameterSet::init(&c).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|v| v.is_finite()));
        // linear maps stay within the fan-in bound
        let lin = 1.0 / (c.hidden_dim as f64).sqrt();
        assert!(a.w_q().iter().all(|v| v.abs() <= lin));
        assert!(a.head_weight().iter().all(|v| v.abs() <= lin));
        let mut c3 = c.clone();
        c3.seed = 2;
        let d = ParameterSet::init(&c3).unwrap();
        assert_ne!(a.data, d.data);
    }

    #[test]
    fn invalid_rank_rejected() {
        let mut c = cfg(Architecture::Adjacency);
        c.adjacency_mode = AdjacencyMode::Factorized { rank: 9 };
        assert!(ParameterSet::init(&c).is_err());
    }

    #[test]
    fn seq_len_over_vocab_rejected() {
        let mut c = cfg(Architecture::Attention);
        c.seq_len = 5;
        assert!(c.validate().is_err());
    }

    use crate::numerics::{finite_diff_grad, softmax_rows, DenseMatrix};

    fn slice_mut<'a>(p: &'a mut ParameterSet, r: &Range<usize>) -> &'a mut [f64] {
        &mut p.data[r.clone()]
    }

    fn random_sample(rng: &mut RngState, l: usize) -> (Vec<usize>, Vec<f64>, Vec<bool>) {
        let mut tokens: Vec<usize> = (0..l).collect();
        rng.shuffle(&mut tokens);
        let values: Vec<f64> = (0..l).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut flags = vec![false; l];
        flags[rng.usize_below(l)] = true;
        (tokens, values, flags)
    }

    #[test]
    fn embed_branches_match_hand_affine_map() {
        let c = cfg(Architecture::Attention);
        let params = ParameterSet::init(&c).unwrap();
        let d = c.hidden_dim;
        let tokens = [2usize, 0, 3, 1];

        // All masked: row i = E[token_i] + mask embedding.
        let e = embed(&tokens, &[0.0; 4], &[true; 4], &params).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            for a in 0..d {
                let want = params.token_embedding()[t * d + a] + params.mask_embedding()[a];
                assert!((e.get(i, a) - want).abs() <= 1e-15);
            }
        }

        // Value 0 with zero bias: row = E[token].
        let mut zb = params.clone();
        slice_mut(&mut zb, &c_layout(&c).value_bias).fill(0.0);
        let e = embed(&tokens, &[0.0; 4], &[false; 4], &zb).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            for a in 0..d {
                assert!((e.get(i, a) - zb.token_embedding()[t * d + a]).abs() <= 1e-15);
            }
        }

        // Value 1.5: row = E[token] + 1.5 w + b, entrywise.
        let e = embed(&[1], &[1.5], &[false], &params).unwrap();
        for a in 0..d {
            let want = params.token_embedding()[d + a]
                + 1.5 * params.value_weight()[a]
                + params.value_bias()[a];
            assert!((e.get(0, a) - want).abs() <= 1e-15);
        }

        assert!(embed(&[9], &[0.0], &[false], &params).is_err());
    }

    fn c_layout(c: &ModelConfig) -> ParamLayout {
        ParamLayout::new(c)
    }

    #[test]
    fn attention_zero_scores_give_uniform_rows() {
        let c = cfg(Architecture::Attention);
        let mut params = ParameterSet::init(&c).unwrap();
        slice_mut(&mut params, &c_layout(&c).w_q).fill(0.0);
        let mut rng = RngState::from_seed(31);
        let e = DenseMatrix::from_vec(4, 8, (0..32).map(|_| rng.uniform(-0.1, 0.1)).collect()).unwrap();
        let act = attention_forward(&e, &params).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((act.attention.get(i, j) - 0.25).abs() <= 1e-12);
            }
        }
        // e' = row-mean of e w_v.
        let wv = DenseMatrix::from_vec(8, 8, params.w_v().to_vec()).unwrap();
        let ev = e.matmul(&wv).unwrap();
        for a in 0..8 {
            let mean: f64 = (0..4).map(|j| ev.get(j, a)).sum::<f64>() / 4.0;
            for i in 0..4 {
                assert!((act.output.get(i, a) - mean).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn attention_singleton_and_loop_oracle() {
        let mut c = cfg(Architecture::Attention);
        c.seq_len = 1;
        let params = ParameterSet::init(&c).unwrap();
        let mut rng = RngState::from_seed(32);
        let e = DenseMatrix::from_vec(1, 8, (0..8).map(|_| rng.uniform(-0.1, 0.1)).collect()).unwrap();
        let act = attention_forward(&e, &params).unwrap();
        assert!((act.attention.get(0, 0) - 1.0).abs() <= 1e-15);
        let wv = DenseMatrix::from_vec(8, 8, params.w_v().to_vec()).unwrap();
        let ewv = e.matmul(&wv).unwrap();
        for a in 0..8 {
            assert!((act.output.get(0, a) - ewv.get(0, a)).abs() <= 1e-12);
        }

        // 4x8 random input against a matrix-algebra oracle.
        let c = cfg(Architecture::Attention);
        let params = ParameterSet::init(&c).unwrap();
        let e = DenseMatrix::from_vec(4, 8, (0..32).map(|_| rng.uniform(-0.1, 0.1)).collect()).unwrap();
        let act = attention_forward(&e, &params).unwrap();
        let wq = DenseMatrix::from_vec(8, 8, params.w_q().to_vec()).unwrap();
        let wk = DenseMatrix::from_vec(8, 8, params.w_k().to_vec()).unwrap();
        let q = e.matmul(&wq).unwrap();
        let k = e.matmul(&wk).unwrap();
        let scores = q.matmul(&k.transpose()).unwrap();
        let attn = softmax_rows(&scores);
        let want = attn.matmul(&e.matmul(&wv).unwrap()).unwrap();
        for i in 0..4 {
            let mut row_sum = 0.0;
            for j in 0..4 {
                assert!((act.attention.get(i, j) - attn.get(i, j)).abs() <= 1e-12);
                row_sum += act.attention.get(i, j);
            }
            assert!((row_sum - 1.0).abs() <= 1e-12);
            for a in 0..8 {
                assert!((act.output.get(i, a) - want.get(i, a)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adjacency_gather_and_factorization_identity() {
        let c = cfg(Architecture::Adjacency);
        let mut params = ParameterSet::init(&c).unwrap();
        let mut rng = RngState::from_seed(33);
        let e = DenseMatrix::from_vec(4, 8, (0..32).map(|_| rng.uniform(-0.1, 0.1)).collect()).unwrap();

        // Zero adjacency: uniform attention, e' = row-mean of e.
        let mut zeroed = params.clone();
        slice_mut(&mut zeroed, &c_layout(&c).adjacency).fill(0.0);
        let act = adjacency_forward(&e, &[0, 1, 2, 3], &zeroed).unwrap();
        for a in 0..8 {
            let mean: f64 = (0..4).map(|j| e.get(j, a)).sum::<f64>() / 4.0;
            for i in 0..4 {
                assert!((act.attention.get(i, a % 4) - 0.25).abs() <= 1e-12);
                assert!((act.output.get(i, a) - mean).abs() <= 1e-12);
            }
        }

        // Gather semantics: reordering the tokens permutes the scores.
        let toks_a = [0usize, 1, 2, 3];
        let toks_b = [3usize, 1, 0, 2];
        let ga = adjacency_forward(&e, &toks_a, &params).unwrap();
        let gb = adjacency_forward(&e, &toks_b, &params).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                // Row i/col j of gb looks up the pair (toks_b[i], toks_b[j]);
                // find that pair's slots under toks_a.
                let pi = toks_a.iter().position(|&t| t == toks_b[i]).unwrap();
                let pj = toks_a.iter().position(|&t| t == toks_b[j]).unwrap();
                let sa = params.adjacency()[toks_a[pi] * 4 + toks_a[pj]];
                let sb = params.adjacency()[toks_b[i] * 4 + toks_b[j]];
                assert_eq!(sa, sb);
                let _ = (ga.attention.get(i, j), gb.attention.get(i, j));
            }
        }

        // Factorized with r=s, U=A, V=I reproduces the dense output.
        let mut fc = c.clone();
        fc.adjacency_mode = AdjacencyMode::Factorized { rank: 4 };
        let mut fparams = ParameterSet::init(&fc).unwrap();
        let dense = params.adjacency().to_vec();
        slice_mut(&mut fparams, &c_layout(&fc).factor_u).copy_from_slice(&dense);
        let eye = DenseMatrix::identity(4);
        slice_mut(&mut fparams, &c_layout(&fc).factor_v).copy_from_slice(eye.data());
        // Align the shared embedding/head parameters.
        let shared = c_layout(&c).mask_embedding.end;
        fparams.data[..shared].copy_from_slice(&params.data[..shared]);
        let head = c_layout(&c).head_weight.start;
        let fhead = c_layout(&fc).head_weight.start;
        for off in 0..9 {
            fparams.data[fhead + off] = params.data[head + off];
        }
        let da = adjacency_forward(&e, &toks_b, &params).unwrap();
        let fa = adjacency_forward(&e, &toks_b, &fparams).unwrap();
        for i in 0..4 {
            for a in 0..8 {
                assert!((da.output.get(i, a) - fa.output.get(i, a)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn predict_matches_dot_oracle() {
        let c = cfg(Architecture::Attention);
        let mut params = ParameterSet::init(&c).unwrap();
        let layout = c_layout(&c);
        slice_mut(&mut params, &layout.head_weight).fill(0.0);
        params.data[layout.head_bias.start] = 0.7;
        let mut rng = RngState::from_seed(34);
        let e = DenseMatrix::from_vec(4, 8, (0..32).map(|_| rng.uniform(-0.1, 0.1)).collect()).unwrap();
        for p in predict(&e, &params) {
            assert!((p - 0.7).abs() <= 1e-15);
        }

        let params = ParameterSet::init(&c).unwrap();
        // One-hot feature row picks out one head weight.
        let mut onehot = DenseMatrix::zeros(1, 8);
        onehot.set(0, 3, 1.0);
        let p = predict(&onehot, &params)[0];
        assert!((p - (params.head_weight()[3] + params.head_bias())).abs() <= 1e-15);

        let preds = predict(&e, &params);
        for i in 0..4 {
            let mut want = params.head_bias();
            for a in 0..8 {
                want += e.get(i, a) * params.head_weight()[a];
            }
            assert!((preds[i] - want).abs() <= 1e-12);
        }
    }

    fn sample_loss(params: &ParameterSet, tokens: &[usize], values: &[f64], flags: &[bool], targets: &[f64]) -> f64 {
        let mut trace = Trace::new(&params.config);
        forward_trace(params, tokens, values, flags, &mut trace).unwrap();
        trace
            .preds
            .iter()
            .zip(targets)
            .zip(flags)
            .filter(|(_, &f)| f)
            .map(|((p, t), _)| (p - t) * (p - t))
            .sum()
    }

    fn grad_check(c: &ModelConfig, seed: u64) {
        let params = ParameterSet::init(c).unwrap();
        let mut rng = RngState::from_seed(seed);
        let (tokens, values, flags) = random_sample(&mut rng, c.seq_len);
        let targets: Vec<f64> = (0..c.seq_len).map(|_| rng.uniform(-0.1, 0.1)).collect();
        let mut trace = Trace::new(c);
        forward_trace(&params, &tokens, &values, &flags, &mut trace).unwrap();
        let dpreds: Vec<f64> = trace
            .preds
            .iter()
            .zip(&targets)
            .zip(&flags)
            .map(|((p, t), &f)| if f { 2.0 * (p - t) } else { 0.0 })
            .collect();
        let mut grads = vec![0.0; params.layout.total];
        backward_trace(&params, &tokens, &values, &flags, &mut trace, &dpreds, &mut grads).unwrap();
        let numeric = finite_diff_grad(
            |data| {
                let p = ParameterSet {
                    config: c.clone(),
                    layout: params.layout.clone(),
                    data: data.to_vec(),
                };
                sample_loss(&p, &tokens, &values, &flags, &targets)
            },
            &params.data,
            1e-5,
        )
        .unwrap();
        for (i, (a, n)) in grads.iter().zip(&numeric).enumerate() {
            let denom = a.abs().max(n.abs()).max(1.0);
            assert!(
                (a - n).abs() / denom <= 1e-4,
                "param {i}: analytic {a} vs numeric {n} ({:?})",
                c.architecture
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        grad_check(&cfg(Architecture::Attention), 41);
        grad_check(&cfg(Architecture::Adjacency), 42);
        let mut fc = cfg(Architecture::Adjacency);
        fc.adjacency_mode = AdjacencyMode::Factorized { rank: 2 };
        grad_check(&fc, 43);
        let mut deep = cfg(Architecture::Attention);
        deep.num_layers = 3;
        grad_check(&deep, 44);
    }

    #[test]
    fn backward_trivial_cases() {
        let c = cfg(Architecture::Attention);
        let params = ParameterSet::init(&c).unwrap();
        let tokens = [0usize, 2, 1, 3];
        let values = [0.3, -0.2, 0.5, 0.1];
        let mut trace = Trace::new(&c);

        // Zero upstream gradient: all parameter gradients zero.
        let flags = [false, true, false, false];
        forward_trace(&params, &tokens, &values, &flags, &mut trace).unwrap();
        let mut grads = vec![0.0; params.layout.total];
        backward_trace(&params, &tokens, &values, &flags, &mut trace, &[0.0; 4], &mut grads).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));

        // No masked slot: mask-embedding gradient stays zero.
        let flags = [false; 4];
        forward_trace(&params, &tokens, &values, &flags, &mut trace).unwrap();
        backward_trace(&params, &tokens, &values, &flags, &mut trace, &[1.0; 4], &mut grads).unwrap();
        assert!(grads[params.layout.mask_embedding.clone()].iter().all(|&g| g == 0.0));
        assert!(grads[params.layout.w_q.clone()].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn predictions_are_permutation_equivariant() {
        let mut rng = RngState::from_seed(51);
        for arch in [Architecture::Attention, Architecture::Adjacency] {
            let c = cfg(arch);
            let params = ParameterSet::init(&c).unwrap();
            let (tokens, values, flags) = random_sample(&mut rng, 4);
            let mut perm: Vec<usize> = (0..4).collect();
            rng.shuffle(&mut perm);
            let ptokens: Vec<usize> = perm.iter().map(|&i| tokens[i]).collect();
            let pvalues: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
            let pflags: Vec<bool> = perm.iter().map(|&i| flags[i]).collect();
            let mut t1 = Trace::new(&c);
            let mut t2 = Trace::new(&c);
            forward_trace(&params, &tokens, &values, &flags, &mut t1).unwrap();
            forward_trace(&params, &ptokens, &pvalues, &pflags, &mut t2).unwrap();
            for (slot, &src) in perm.iter().enumerate() {
                assert!(
                    (t2.preds[slot] - t1.preds[src]).abs() <= 1e-12,
                    "{arch:?} not equivariant"
                );
            }
        }
    }

    #[test]
    fn static_attention_equals_adjacency_construction() {
        // With a token-only embedding and w_v = I, QKV attention reduces
        // to a static map A[t][t'] = (E[t] w_q)(E[t'] w_k)^T.
        let ca = cfg(Architecture::Attention);
        let mut att = ParameterSet::init(&ca).unwrap();
        let layout_a = c_layout(&ca);
        slice_mut(&mut att, &layout_a.value_weight).fill(0.0);
        slice_mut(&mut att, &layout_a.value_bias).fill(0.0);
        slice_mut(&mut att, &layout_a.mask_embedding).fill(0.0);
        let eye = DenseMatrix::identity(8);
        slice_mut(&mut att, &layout_a.w_v).copy_from_slice(eye.data());

        let cg = cfg(Architecture::Adjacency);
        let mut gnn = ParameterSet::init(&cg).unwrap();
        let layout_g = c_layout(&cg);
        let shared = layout_a.mask_embedding.end;
        gnn.data[..shared].copy_from_slice(&att.data[..shared]);
        slice_mut(&mut gnn, &layout_g.value_weight).fill(0.0);
        slice_mut(&mut gnn, &layout_g.value_bias).fill(0.0);
        slice_mut(&mut gnn, &layout_g.mask_embedding).fill(0.0);
        for off in 0..9 {
            gnn.data[layout_g.head_weight.start + off] = att.data[layout_a.head_weight.start + off];
        }
        let d = 8;
        let emb = att.token_embedding().to_vec();
        let e_mat = DenseMatrix::from_vec(4, d, emb).unwrap();
        let wq = DenseMatrix::from_vec(d, d, att.w_q().to_vec()).unwrap();
        let wk = DenseMatrix::from_vec(d, d, att.w_k().to_vec()).unwrap();
        let a_mat = e_mat
            .matmul(&wq)
            .unwrap()
            .matmul(&e_mat.matmul(&wk).unwrap().transpose())
            .unwrap();
        let adj = layout_g.adjacency.clone();
        gnn.data[adj].copy_from_slice(a_mat.data());

        let mut rng = RngState::from_seed(52);
        let (tokens, values, flags) = random_sample(&mut rng, 4);
        let mut ta = Trace::new(&ca);
        let mut tg = Trace::new(&cg);
        forward_trace(&att, &tokens, &values, &flags, &mut ta).unwrap();
        forward_trace(&gnn, &tokens, &values, &flags, &mut tg).unwrap();
        for (pa, pg) in ta.preds.iter().zip(&tg.preds) {
            assert!((pa - pg).abs() <= 1e-10, "attention {pa} vs adjacency {pg}");
        }
    }
}
