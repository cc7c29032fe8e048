//! Forward passes. The trainer drives `forward_trace` on preallocated
//! buffers; the `embed`/`attention_forward`/`adjacency_forward`/`predict`
//! wrappers expose the same kernels on matrices for tests and tooling.

use super::{Architecture, ModelConfig, ParameterSet};
use crate::numerics::{softmax_row_in_place, DenseMatrix};
use crate::{Error, Result};

/// One layer's retained activations.
#[derive(Debug, Clone)]
pub struct LayerBufs {
    pub q: Vec<f64>,      // l x d, attention only
    pub k: Vec<f64>,      // l x d, attention only
    pub v: Vec<f64>,      // l x d, attention only
    pub scores: Vec<f64>, // l x l, pre-softmax
    pub attn: Vec<f64>,   // l x l, row-stochastic
    pub out: Vec<f64>,    // l x d
}

impl LayerBufs {
    fn new(arch: Architecture, l: usize, d: usize) -> Self {
        let ld = match arch {
            Architecture::Attention => l * d,
            Architecture::Adjacency => 0,
        };
        LayerBufs {
            q: vec![0.0; ld],
            k: vec![0.0; ld],
            v: vec![0.0; ld],
            scores: vec![0.0; l * l],
            attn: vec![0.0; l * l],
            out: vec![0.0; l * d],
        }
    }
}

/// Retained forward activations plus backward scratch, reusable across
/// samples of one training run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub l: usize,
    pub d: usize,
    pub e0: Vec<f64>,
    pub layers: Vec<LayerBufs>,
    pub preds: Vec<f64>,
    // backward scratch
    pub(super) d_out: Vec<f64>,
    pub(super) d_in: Vec<f64>,
    pub(super) d_map: Vec<f64>,
    pub(super) d_scores: Vec<f64>,
    pub(super) d_q: Vec<f64>,
    pub(super) d_k: Vec<f64>,
    pub(super) d_v: Vec<f64>,
}

impl Trace {
    pub fn new(cfg: &ModelConfig) -> Self {
        let l = cfg.seq_len;
        let d = cfg.hidden_dim;
        let layers = (0..cfg.num_layers)
            .map(|_| LayerBufs::new(cfg.architecture, l, d))
            .collect();
        Trace {
            l,
            d,
            e0: vec![0.0; l * d],
            layers,
            preds: vec![0.0; l],
            d_out: vec![0.0; l * d],
            d_in: vec![0.0; l * d],
            d_map: vec![0.0; l * l],
            d_scores: vec![0.0; l * l],
            d_q: vec![0.0; l * d],
            d_k: vec![0.0; l * d],
            d_v: vec![0.0; l * d],
        }
    }
}

fn check_inputs(params: &ParameterSet, tokens: &[usize], values: &[f64], flags: &[bool]) -> Result<()> {
    let l = tokens.len();
    if values.len() != l || flags.len() != l {
        return Err(Error::Data(format!(
            "ragged sample: {} tokens, {} values, {} mask flags",
            l,
            values.len(),
            flags.len()
        )));
    }
    let s = params.config.vocab_size;
    for &t in tokens {
        if t >= s {
            return Err(Error::Data(format!("token id {t} out of range (vocab {s})")));
        }
    }
    Ok(())
}

pub(super) fn embed_kernel(
    params: &ParameterSet,
    tokens: &[usize],
    values: &[f64],
    flags: &[bool],
    out: &mut [f64],
) {
    let d = params.config.hidden_dim;
    let emb = params.token_embedding();
    let vw = params.value_weight();
    let vb = params.value_bias();
    let mask = params.mask_embedding();
    for (i, &t) in tokens.iter().enumerate() {
        let row = &mut out[i * d..(i + 1) * d];
        let te = &emb[t * d..(t + 1) * d];
        if flags[i] {
            for a in 0..d {
                row[a] = te[a] + mask[a];
            }
        } else {
            let v = values[i];
            for a in 0..d {
                row[a] = te[a] + v * vw[a] + vb[a];
            }
        }
    }
}

/// x (l x d, row-major) times w (d x d, row-major) into out (l x d).
pub(super) fn project(x: &[f64], w: &[f64], l: usize, d: usize, out: &mut [f64]) {
    for i in 0..l {
        let xin = &x[i * d..(i + 1) * d];
        let row = &mut out[i * d..(i + 1) * d];
        row.fill(0.0);
        for (a, &xa) in xin.iter().enumerate() {
            let wrow = &w[a * d..(a + 1) * d];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += xa * wv;
            }
        }
    }
}

pub(super) fn attention_layer(params: &ParameterSet, input: &[f64], bufs: &mut LayerBufs) {
    let d = params.config.hidden_dim;
    let l = input.len() / d;
    project(input, params.w_q(), l, d, &mut bufs.q);
    project(input, params.w_k(), l, d, &mut bufs.k);
    project(input, params.w_v(), l, d, &mut bufs.v);
    let scale = if params.config.attention_scaling {
        1.0 / (d as f64).sqrt()
    } else {
        1.0
    };
    for i in 0..l {
        let qi = &bufs.q[i * d..(i + 1) * d];
        for j in 0..l {
            let kj = &bufs.k[j * d..(j + 1) * d];
            let mut s = 0.0;
            for a in 0..d {
                s += qi[a] * kj[a];
            }
            bufs.scores[i * l + j] = s * scale;
        }
    }
    weighted_sum_rows(&bufs.scores, &bufs.v, l, d, &mut bufs.attn, &mut bufs.out);
}

pub(super) fn adjacency_layer(
    params: &ParameterSet,
    tokens: &[usize],
    input: &[f64],
    bufs: &mut LayerBufs,
) {
    let l = tokens.len();
    let d = input.len() / l;
    let s = params.config.vocab_size;
    if !params.layout.adjacency.is_empty() {
        let a = params.adjacency();
        for (i, &ti) in tokens.iter().enumerate() {
            for (j, &tj) in tokens.iter().enumerate() {
                bufs.scores[i * l + j] = a[ti * s + tj];
            }
        }
    } else {
        let r = params.layout.factor_u.len() / s;
        let u = params.factor_u();
        let v = params.factor_v();
        for (i, &ti) in tokens.iter().enumerate() {
            let ui = &u[ti * r..(ti + 1) * r];
            for (j, &tj) in tokens.iter().enumerate() {
                let vj = &v[tj * r..(tj + 1) * r];
                let mut sc = 0.0;
                for a in 0..r {
                    sc += ui[a] * vj[a];
                }
                bufs.scores[i * l + j] = sc;
            }
        }
    }
    weighted_sum_rows(&bufs.scores, input, l, d, &mut bufs.attn, &mut bufs.out);
}

/// attn = softmax_rows(scores); out = attn * feats.
fn weighted_sum_rows(
    scores: &[f64],
    feats: &[f64],
    l: usize,
    d: usize,
    attn: &mut [f64],
    out: &mut [f64],
) {
    attn.copy_from_slice(scores);
    for i in 0..l {
        softmax_row_in_place(&mut attn[i * l..(i + 1) * l]);
    }
    for i in 0..l {
        let row = &mut out[i * d..(i + 1) * d];
        row.fill(0.0);
        for j in 0..l {
            let w = attn[i * l + j];
            let fj = &feats[j * d..(j + 1) * d];
            for (o, &f) in row.iter_mut().zip(fj) {
                *o += w * f;
            }
        }
    }
}

pub(super) fn predict_kernel(params: &ParameterSet, feats: &[f64], preds: &mut [f64]) {
    let d = params.config.hidden_dim;
    let w = params.head_weight();
    let b = params.head_bias();
    for (i, p) in preds.iter_mut().enumerate() {
        let fi = &feats[i * d..(i + 1) * d];
        let mut s = b;
        for a in 0..d {
            s += fi[a] * w[a];
        }
        *p = s;
    }
}

/// Full forward pass for one sample into a reusable trace.
pub fn forward_trace(
    params: &ParameterSet,
    tokens: &[usize],
    values: &[f64],
    flags: &[bool],
    trace: &mut Trace,
) -> Result<()> {
    check_inputs(params, tokens, values, flags)?;
    if tokens.len() != trace.l {
        return Err(Error::Data(format!(
            "sample length {} does not match model sequence length {}",
            tokens.len(),
            trace.l
        )));
    }
    embed_kernel(params, tokens, values, flags, &mut trace.e0);
    for li in 0..trace.layers.len() {
        let (before, rest) = trace.layers.split_at_mut(li);
        let bufs = &mut rest[0];
        let input: &[f64] = if li == 0 { &trace.e0 } else { &before[li - 1].out };
        match params.config.architecture {
            Architecture::Attention => attention_layer(params, input, bufs),
            Architecture::Adjacency => adjacency_layer(params, tokens, input, bufs),
        }
    }
    let final_out = &trace.layers[trace.layers.len() - 1].out;
    predict_kernel(params, final_out, &mut trace.preds);
    Ok(())
}

/// Input embeddings, row-stochastic attention map, and output features
/// of one layer application.
#[derive(Debug, Clone)]
pub struct LayerActivation {
    pub input: DenseMatrix,
    pub attention: DenseMatrix,
    pub output: DenseMatrix,
}

/// Per position: token embedding plus either the mask embedding or the
/// affine value encoding. No positional term of any kind.
pub fn embed(
    tokens: &[usize],
    values: &[f64],
    flags: &[bool],
    params: &ParameterSet,
) -> Result<DenseMatrix> {
    check_inputs(params, tokens, values, flags)?;
    let d = params.config.hidden_dim;
    let mut out = DenseMatrix::zeros(tokens.len(), d);
    embed_kernel(params, tokens, values, flags, out.data_mut());
    Ok(out)
}

pub fn attention_forward(e: &DenseMatrix, params: &ParameterSet) -> Result<LayerActivation> {
    if params.config.architecture != Architecture::Attention {
        return Err(Error::Usage("attention_forward requires an attention model".into()));
    }
    let l = e.rows();
    let d = e.cols();
    let mut bufs = LayerBufs::new(Architecture::Attention, l, d);
    attention_layer(params, e.data(), &mut bufs);
    Ok(LayerActivation {
        input: e.clone(),
        attention: DenseMatrix::from_vec(l, l, bufs.attn)?,
        output: DenseMatrix::from_vec(l, d, bufs.out)?,
    })
}

pub fn adjacency_forward(
    e: &DenseMatrix,
    tokens: &[usize],
    params: &ParameterSet,
) -> Result<LayerActivation> {
    if params.config.architecture != Architecture::Adjacency {
        return Err(Error::Usage("adjacency_forward requires an adjacency model".into()));
    }
    let s = params.config.vocab_size;
    for &t in tokens {
        if t >= s {
            return Err(Error::Data(format!("token id {t} out of range (vocab {s})")));
        }
    }
    let l = e.rows();
    let d = e.cols();
    let mut bufs = LayerBufs::new(Architecture::Adjacency, l, d);
    adjacency_layer(params, tokens, e.data(), &mut bufs);
    Ok(LayerActivation {
        input: e.clone(),
        attention: DenseMatrix::from_vec(l, l, bufs.attn)?,
        output: DenseMatrix::from_vec(l, d, bufs.out)?,
    })
}

pub fn predict(e_prime: &DenseMatrix, params: &ParameterSet) -> Vec<f64> {
    let mut preds = vec![0.0; e_prime.rows()];
    predict_kernel(params, e_prime.data(), &mut preds);
    preds
}
