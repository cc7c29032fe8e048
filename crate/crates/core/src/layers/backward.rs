//! Exact reverse-mode gradients for both architectures, accumulated
//! into a flat gradient vector matching the parameter layout.

use super::forward::Trace;
use super::{Architecture, ParameterSet};
use crate::{Error, Result};

/// Backpropagates the loss gradient with respect to the predictions
/// through the full forward trace. Gradients ACCUMULATE into `grads`,
/// which must have the parameter layout's length; callers zero it per
/// batch.
pub fn backward_trace(
    params: &ParameterSet,
    tokens: &[usize],
    values: &[f64],
    flags: &[bool],
    trace: &mut Trace,
    dpreds: &[f64],
    grads: &mut [f64],
) -> Result<()> {
    if grads.len() != params.layout.total {
        return Err(Error::Usage(format!(
            "gradient buffer length {} does not match parameter count {}",
            grads.len(),
            params.layout.total
        )));
    }
    if dpreds.len() != trace.l {
        return Err(Error::Usage("prediction gradient length mismatch".into()));
    }
    let l = trace.l;
    let d = trace.d;
    let lay = params.layout.clone();
    let Trace {
        e0,
        layers,
        d_out,
        d_in,
        d_map,
        d_scores,
        d_q,
        d_k,
        d_v,
        ..
    } = trace;

    // Output head.
    let top_out = &layers[layers.len() - 1].out;
    {
        let g_hw = &mut grads[lay.head_weight.clone()];
        for (i, &dp) in dpreds.iter().enumerate() {
            let oi = &top_out[i * d..(i + 1) * d];
            for a in 0..d {
                g_hw[a] += dp * oi[a];
            }
        }
    }
    grads[lay.head_bias.start] += dpreds.iter().sum::<f64>();
    let hw = params.head_weight();
    for (i, &dp) in dpreds.iter().enumerate() {
        for a in 0..d {
            d_out[i * d + a] = dp * hw[a];
        }
    }

    let scale = if params.config.attention_scaling {
        1.0 / (d as f64).sqrt()
    } else {
        1.0
    };
    let s = params.config.vocab_size;

    for li in (0..layers.len()).rev() {
        let (before, rest) = layers.split_at(li);
        let bufs = &rest[0];
        let input: &[f64] = if li == 0 { e0 } else { &before[li - 1].out };
        match params.config.architecture {
            Architecture::Attention => {
                // d_map = d_out . v^T ; d_v accumulated through attn.
                d_v.fill(0.0);
                for i in 0..l {
                    let doi = &d_out[i * d..(i + 1) * d];
                    for j in 0..l {
                        let vj = &bufs.v[j * d..(j + 1) * d];
                        let mut acc = 0.0;
                        for a in 0..d {
                            acc += doi[a] * vj[a];
                        }
                        d_map[i * l + j] = acc;
                        let w = bufs.attn[i * l + j];
                        let dvj = &mut d_v[j * d..(j + 1) * d];
                        for a in 0..d {
                            dvj[a] += w * doi[a];
                        }
                    }
                }
                softmax_backward(&bufs.attn, d_map, l, scale, d_scores);
                // d_q = d_scores . K ; d_k = d_scores^T . Q
                d_q.fill(0.0);
                d_k.fill(0.0);
                for i in 0..l {
                    for j in 0..l {
                        let ds = d_scores[i * l + j];
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &bufs.k[j * d..(j + 1) * d];
                        let qi = &bufs.q[i * d..(i + 1) * d];
                        for a in 0..d {
                            d_q[i * d + a] += ds * kj[a];
                            d_k[j * d + a] += ds * qi[a];
                        }
                    }
                }
                accumulate_weight_grad(input, d_q, l, d, &mut grads[lay.w_q.clone()]);
                accumulate_weight_grad(input, d_k, l, d, &mut grads[lay.w_k.clone()]);
                accumulate_weight_grad(input, d_v, l, d, &mut grads[lay.w_v.clone()]);
                // d_in = d_q W_q^T + d_k W_k^T + d_v W_v^T
                d_in.fill(0.0);
                add_input_grad(d_q, params.w_q(), l, d, d_in);
                add_input_grad(d_k, params.w_k(), l, d, d_in);
                add_input_grad(d_v, params.w_v(), l, d, d_in);
            }
            Architecture::Adjacency => {
                d_in.fill(0.0);
                for i in 0..l {
                    let doi = &d_out[i * d..(i + 1) * d];
                    for j in 0..l {
                        let inj = &input[j * d..(j + 1) * d];
                        let mut acc = 0.0;
                        for a in 0..d {
                            acc += doi[a] * inj[a];
                        }
                        d_map[i * l + j] = acc;
                        let w = bufs.attn[i * l + j];
                        let dij = &mut d_in[j * d..(j + 1) * d];
                        for a in 0..d {
                            dij[a] += w * doi[a];
                        }
                    }
                }
                softmax_backward(&bufs.attn, d_map, l, 1.0, d_scores);
                if !lay.adjacency.is_empty() {
                    let g_a = &mut grads[lay.adjacency.clone()];
                    for (i, &ti) in tokens.iter().enumerate() {
                        for (j, &tj) in tokens.iter().enumerate() {
                            g_a[ti * s + tj] += d_scores[i * l + j];
                        }
                    }
                } else {
                    let r = lay.factor_u.len() / s;
                    let fu = params.factor_u();
                    let fv = params.factor_v();
                    for (i, &ti) in tokens.iter().enumerate() {
                        for (j, &tj) in tokens.iter().enumerate() {
                            let ds = d_scores[i * l + j];
                            if ds == 0.0 {
                                continue;
                            }
                            for a in 0..r {
                                grads[lay.factor_u.start + ti * r + a] += ds * fv[tj * r + a];
                                grads[lay.factor_v.start + tj * r + a] += ds * fu[ti * r + a];
                            }
                        }
                    }
                }
            }
        }
        d_out.copy_from_slice(d_in);
    }

    // Embedding backward; d_out now holds the gradient at e0.
    let (g_emb, tail) = grads.split_at_mut(lay.value_weight.start);
    let (g_vw, tail) = tail.split_at_mut(d);
    let (g_vb, tail) = tail.split_at_mut(d);
    let g_mask = &mut tail[..d];
    for (i, &t) in tokens.iter().enumerate() {
        let de = &d_out[i * d..(i + 1) * d];
        let ge = &mut g_emb[t * d..(t + 1) * d];
        for a in 0..d {
            ge[a] += de[a];
        }
        if flags[i] {
            for a in 0..d {
                g_mask[a] += de[a];
            }
        } else {
            let v = values[i];
            for a in 0..d {
                g_vw[a] += v * de[a];
                g_vb[a] += de[a];
            }
        }
    }
    Ok(())
}

/// Row-wise softmax Jacobian: dS[i] = scale * attn[i] o (dP[i] - <dP[i], attn[i]>).
fn softmax_backward(attn: &[f64], d_map: &[f64], l: usize, scale: f64, d_scores: &mut [f64]) {
    for i in 0..l {
        let row = &attn[i * l..(i + 1) * l];
        let dm = &d_map[i * l..(i + 1) * l];
        let mut dot = 0.0;
        for j in 0..l {
            dot += dm[j] * row[j];
        }
        let out = &mut d_scores[i * l..(i + 1) * l];
        for j in 0..l {
            out[j] = scale * row[j] * (dm[j] - dot);
        }
    }
}

/// g += input^T . d_proj for a d x d projection weight.
fn accumulate_weight_grad(input: &[f64], d_proj: &[f64], l: usize, d: usize, g: &mut [f64]) {
    for i in 0..l {
        let xin = &input[i * d..(i + 1) * d];
        let dp = &d_proj[i * d..(i + 1) * d];
        for a in 0..d {
            let xa = xin[a];
            if xa == 0.0 {
                continue;
            }
            let grow = &mut g[a * d..(a + 1) * d];
            for b in 0..d {
                grow[b] += xa * dp[b];
            }
        }
    }
}

/// d_in += d_proj . w^T for a d x d projection weight.
fn add_input_grad(d_proj: &[f64], w: &[f64], l: usize, d: usize, d_in: &mut [f64]) {
    for i in 0..l {
        let dp = &d_proj[i * d..(i + 1) * d];
        let din = &mut d_in[i * d..(i + 1) * d];
        for a in 0..d {
            let wrow = &w[a * d..(a + 1) * d];
            let mut acc = 0.0;
            for b in 0..d {
                acc += dp[b] * wrow[b];
            }
            din[a] += acc;
        }
    }
}
