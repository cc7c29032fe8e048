//! Analytic per-sample cost accounting for both architectures.
//!
//! Counting convention, fixed here and stamped into every report:
//! one multiply-add = 2 FLOPs, softmax = 5 FLOPs per entry, a table
//! gather = 1 FLOP per entry. Memory counts retained forward
//! activations only (no parameters, gradients, or optimizer state), at
//! a configurable bytes-per-scalar (default 4). For the adjacency
//! architecture the l x l score and attention maps are a function of
//! the token sequence alone, not of layer activations, so a training
//! step needs just one copy regardless of depth; they are counted once.
//! Published hardware measurements use unknown conventions, so this
//! model is validated by cost *ratios* between architectures, never by
//! absolute numbers.

use crate::layers::{AdjacencyMode, Architecture};
use crate::{Error, Result};

pub const MULADD_FLOPS: f64 = 2.0;
pub const SOFTMAX_FLOPS_PER_ENTRY: f64 = 5.0;
pub const GATHER_FLOPS_PER_ENTRY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub architecture: Architecture,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub adjacency_mode: AdjacencyMode,
    pub bytes_per_scalar: usize,
}

impl CostConfig {
    pub fn new(architecture: Architecture, num_layers: usize, hidden_dim: usize, seq_len: usize, vocab_size: usize) -> Self {
        CostConfig {
            architecture,
            num_layers,
            hidden_dim,
            seq_len,
            vocab_size,
            adjacency_mode: AdjacencyMode::Dense,
            bytes_per_scalar: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0
            || self.hidden_dim == 0
            || self.seq_len == 0
            || self.vocab_size == 0
            || self.bytes_per_scalar == 0
        {
            return Err(Error::Config("cost config dimensions must be positive".into()));
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

/// One itemized cost line: label plus a scalar amount (FLOPs or bytes).
#[derive(Debug, Clone, PartialEq)]
pub struct CostItem {
    pub label: String,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub config: CostConfig,
    pub flops_items: Vec<CostItem>,
    pub memory_items: Vec<CostItem>,
    pub flops_total: f64,
    pub memory_bytes_total: f64,
    pub parameter_count: usize,
    pub convention: &'static str,
}

pub const CONVENTION: &str =
    "muladd=2 flops, softmax=5 flops/entry, gather=1 flop/entry; memory = retained forward activations only, adjacency score/attention maps counted once (layer-invariant)";

fn sum(items: &[CostItem]) -> f64 {
    items.iter().map(|i| i.amount).sum()
}

fn parameter_count(cfg: &CostConfig) -> usize {
    let s = cfg.vocab_size;
    let d = cfg.hidden_dim;
    let arch_block = match cfg.architecture {
        Architecture::Attention => 3 * d * d,
        Architecture::Adjacency => match cfg.adjacency_mode {
            AdjacencyMode::Dense => s * s,
            AdjacencyMode::Factorized { rank } => 2 * s * rank,
        },
    };
    s * d + d + d + d + arch_block + d + 1
}

/// Forward FLOPs itemized by sublayer.
pub fn flops(cfg: &CostConfig) -> Result<CostReport> {
    cfg.validate()?;
    let l = cfg.seq_len as f64;
    let d = cfg.hidden_dim as f64;
    let layers = cfg.num_layers as f64;
    let mut items = Vec::new();
    // Embedding: value encode (d muladds) + token-embedding add (d) +
    // output head (d muladds + bias add), shared by both architectures.
    items.push(CostItem {
        label: "embedding".into(),
        amount: l * (d * MULADD_FLOPS + d),
    });
    items.push(CostItem {
        label: "output_head".into(),
        amount: l * (d * MULADD_FLOPS + 1.0),
    });
    match cfg.architecture {
        Architecture::Attention => {
            items.push(CostItem {
                label: "qkv_projections".into(),
                amount: layers * 3.0 * l * d * d * MULADD_FLOPS,
            });
            items.push(CostItem {
                label: "score_matmul".into(),
                amount: layers * l * l * d * MULADD_FLOPS,
            });
            items.push(CostItem {
                label: "softmax".into(),
                amount: layers * l * l * SOFTMAX_FLOPS_PER_ENTRY,
            });
            items.push(CostItem {
                label: "weighted_sum".into(),
                amount: layers * l * l * d * MULADD_FLOPS,
            });
        }
        Architecture::Adjacency => {
            let gather = match cfg.adjacency_mode {
                AdjacencyMode::Dense => l * l * GATHER_FLOPS_PER_ENTRY,
                AdjacencyMode::Factorized { rank } => l * l * rank as f64 * MULADD_FLOPS,
            };
            items.push(CostItem {
                label: "score_gather".into(),
                amount: layers * gather,
            });
            items.push(CostItem {
                label: "softmax".into(),
                amount: layers * l * l * SOFTMAX_FLOPS_PER_ENTRY,
            });
            items.push(CostItem {
                label: "weighted_sum".into(),
                amount: layers * l * l * d * MULADD_FLOPS,
            });
        }
    }
    let total = sum(&items);
    Ok(CostReport {
        config: cfg.clone(),
        flops_total: total,
        memory_items: Vec::new(),
        memory_bytes_total: 0.0,
        flops_items: items,
        parameter_count: parameter_count(cfg),
        convention: CONVENTION,
    })
}

/// Per-sample retained-activation bytes itemized by tensor.
pub fn memory(cfg: &CostConfig) -> Result<CostReport> {
    cfg.validate()?;
    let l = cfg.seq_len as f64;
    let d = cfg.hidden_dim as f64;
    let layers = cfg.num_layers as f64;
    let b = cfg.bytes_per_scalar as f64;
    let mut items = Vec::new();
    items.push(CostItem {
        label: "embeddings".into(),
        amount: l * d * b,
    });
    items.push(CostItem {
        label: "layer_outputs".into(),
        amount: layers * l * d * b,
    });
    match cfg.architecture {
        Architecture::Attention => {
            items.push(CostItem {
                label: "qkv_activations".into(),
                amount: layers * 3.0 * l * d * b,
            });
            // Scores and attention weights recomputed per layer from
            // layer inputs, so each layer retains its own maps.
            items.push(CostItem {
                label: "score_and_attention_maps".into(),
                amount: layers * 2.0 * l * l * b,
            });
        }
        Architecture::Adjacency => {
            // The maps depend only on token ids: one copy serves every
            // layer, so depth does not multiply this term.
            items.push(CostItem {
                label: "score_and_attention_maps".into(),
                amount: 2.0 * l * l * b,
            });
        }
    }
    let total = sum(&items);
    Ok(CostReport {
        config: cfg.clone(),
        memory_bytes_total: total,
        flops_items: Vec::new(),
        flops_total: 0.0,
        memory_items: items,
        parameter_count: parameter_count(cfg),
        convention: CONVENTION,
    })
}

/// Combined report with both parts filled in.
pub fn full_report(cfg: &CostConfig) -> Result<CostReport> {
    let f = flops(cfg)?;
    let m = memory(cfg)?;
    Ok(CostReport {
        config: cfg.clone(),
        flops_total: f.flops_total,
        flops_items: f.flops_items,
        memory_bytes_total: m.memory_bytes_total,
        memory_items: m.memory_items,
        parameter_count: f.parameter_count,
        convention: CONVENTION,
    })
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub architecture: Architecture,
    pub seq_len: usize,
    pub flops: f64,
    pub memory_bytes: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Smallest listed l whose memory reaches the budget, per arch.
    pub attention_crossing: Option<usize>,
    pub adjacency_crossing: Option<usize>,
    pub memory_budget_bytes: f64,
}

/// Costs for both architectures across a list of sequence lengths,
/// plus the first length at which each architecture's per-sample
/// memory reaches a budget (the out-of-memory analogue).
pub fn scaling_table(template: &CostConfig, l_values: &[usize], memory_budget_bytes: f64) -> Result<ScalingTable> {
    if l_values.is_empty() {
        return Err(Error::Config("scaling table needs at least one sequence length".into()));
    }
    let mut rows = Vec::new();
    let mut crossings = [None, None];
    for &l in l_values {
        for (ai, arch) in [Architecture::Attention, Architecture::Adjacency].iter().enumerate() {
            let mut cfg = template.clone();
            cfg.architecture = *arch;
            cfg.seq_len = l;
            let rep = full_report(&cfg)?;
            if crossings[ai].is_none() && rep.memory_bytes_total >= memory_budget_bytes {
                crossings[ai] = Some(l);
            }
            rows.push(ScalingRow {
                architecture: *arch,
                seq_len: l,
                flops: rep.flops_total,
                memory_bytes: rep.memory_bytes_total,
            });
        }
    }
    Ok(ScalingTable {
        rows,
        attention_crossing: crossings[0],
        adjacency_crossing: crossings[1],
        memory_budget_bytes,
    })
}

pub fn render_scaling_csv(table: &ScalingTable) -> String {
    let mut out = String::from("architecture,seq_len,flops,mem_bytes\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.architecture.as_str(),
            row.seq_len,
            row.flops,
            row.memory_bytes
        ));
    }
    out
}

/// One-line-per-config CSV used by the `cost` subcommand.
pub fn render_report_csv(reports: &[CostReport]) -> String {
    let mut out = String::from("arch,layers,d,l,flops,mem_bytes,params\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.config.architecture.as_str(),
            r.config.num_layers,
            r.config.hidden_dim,
            r.config.seq_len,
            r.flops_total,
            r.memory_bytes_total,
            r.parameter_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(arch: Architecture, layers: usize, d: usize, l: usize) -> CostConfig {
        CostConfig::new(arch, layers, d, l, l.max(4))
    }

    #[test]
    fn breakdown_sums_to_total() {
        for arch in [Architecture::Attention, Architecture::Adjacency] {
            let c = cfg(arch, 6, 256, 512);
            let r = full_report(&c).unwrap();
            let fs: f64 = r.flops_items.iter().map(|i| i.amount).sum();
            let ms: f64 = r.memory_items.iter().map(|i| i.amount).sum();
            assert_eq!(fs, r.flops_total);
            assert_eq!(ms, r.memory_bytes_total);
        }
    }

    #[test]
    fn degenerate_sequence_collapses_attention() {
        // l = 1: projections survive, the score matmul and weighted sum
        // shrink to single d-dim dots, softmax to one entry.
        let c = cfg(Architecture::Attention, 1, 8, 1);
        let r = flops(&c).unwrap();
        let item = |label: &str| {
            r.flops_items
                .iter()
                .find(|i| i.label == label)
                .unwrap()
                .amount
        };
        assert_eq!(item("qkv_projections"), 3.0 * 8.0 * 8.0 * 2.0);
        assert_eq!(item("score_matmul"), 8.0 * 2.0);
        assert_eq!(item("softmax"), 5.0);
        assert_eq!(item("weighted_sum"), 8.0 * 2.0);
    }

    #[test]
    fn dense_adjacency_always_cheaper_than_attention() {
        for (layers, d, l) in [(1, 8, 4), (6, 256, 512), (2, 64, 128), (12, 512, 1024)] {
            let fa = flops(&cfg(Architecture::Attention, layers, d, l)).unwrap();
            let fg = flops(&cfg(Architecture::Adjacency, layers, d, l)).unwrap();
            assert!(fg.flops_total < fa.flops_total, "{layers}/{d}/{l}");
            let ma = memory(&cfg(Architecture::Attention, layers, d, l)).unwrap();
            let mg = memory(&cfg(Architecture::Adjacency, layers, d, l)).unwrap();
            assert!(mg.memory_bytes_total < ma.memory_bytes_total, "{layers}/{d}/{l}");
        }
    }

    #[test]
    fn reference_ratio_bands_at_settings_256_512() {
        let fa = flops(&cfg(Architecture::Attention, 6, 256, 512)).unwrap();
        let fg = flops(&cfg(Architecture::Adjacency, 6, 256, 512)).unwrap();
        let fr = fa.flops_total / fg.flops_total;
        assert!((1.5..=4.0).contains(&fr), "flops ratio {fr}");
        let ma = memory(&cfg(Architecture::Attention, 6, 256, 512)).unwrap();
        let mg = memory(&cfg(Architecture::Adjacency, 6, 256, 512)).unwrap();
        let mr = ma.memory_bytes_total / mg.memory_bytes_total;
        assert!((3.0..=10.0).contains(&mr), "memory ratio {mr}");
    }

    #[test]
    fn doubling_l_more_than_doubles_costs_and_stays_in_band() {
        let m512 = memory(&cfg(Architecture::Attention, 6, 256, 512)).unwrap();
        let m1024 = memory(&cfg(Architecture::Attention, 6, 256, 1024)).unwrap();
        let g = m1024.memory_bytes_total / m512.memory_bytes_total;
        assert!(g > 2.0);
        assert!((2.0..=4.0).contains(&g), "growth {g}");
        let f512 = flops(&cfg(Architecture::Adjacency, 6, 256, 512)).unwrap();
        let f1024 = flops(&cfg(Architecture::Adjacency, 6, 256, 1024)).unwrap();
        assert!(f1024.flops_total > 2.0 * f512.flops_total);
    }

    #[test]
    fn monotone_in_l_d_layers() {
        let base = cfg(Architecture::Attention, 2, 16, 32);
        let fb = full_report(&base).unwrap();
        for bumped in [
            cfg(Architecture::Attention, 3, 16, 32),
            cfg(Architecture::Attention, 2, 17, 32),
            cfg(Architecture::Attention, 2, 16, 33),
        ] {
            let fr = full_report(&bumped).unwrap();
            assert!(fr.flops_total >= fb.flops_total);
            assert!(fr.memory_bytes_total >= fb.memory_bytes_total);
        }
    }

    #[test]
    fn factorized_flops_up_params_down() {
        let s = 60_000;
        let mut dense = CostConfig::new(Architecture::Adjacency, 6, 48, 512, s);
        dense.adjacency_mode = AdjacencyMode::Dense;
        let mut fact = dense.clone();
        fact.adjacency_mode = AdjacencyMode::Factorized { rank: 48 };
        let fd = flops(&dense).unwrap();
        let ff = flops(&fact).unwrap();
        assert!(ff.flops_total > fd.flops_total);
        assert!(ff.parameter_count < fd.parameter_count);
        assert_eq!(
            fd.parameter_count - ff.parameter_count,
            s * s - 2 * s * 48
        );
    }

    #[test]
    fn scaling_table_crossings() {
        let template = cfg(Architecture::Attention, 6, 256, 512);
        let budget = memory(&template).unwrap().memory_bytes_total;
        let ls = [128, 256, 512, 1024, 2048, 4096];
        let table = scaling_table(&template, &ls, budget).unwrap();
        assert_eq!(table.attention_crossing, Some(512));
        let gnn_cross = table.adjacency_crossing.unwrap();
        assert!(gnn_cross > 512, "adjacency crossing {gnn_cross}");
        assert_eq!(table.rows.len(), ls.len() * 2);
        let csv = render_scaling_csv(&table);
        assert_eq!(csv.lines().count(), ls.len() * 2 + 1);
        assert!(scaling_table(&template, &[], budget).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg(Architecture::Adjacency, 1, 8, 4);
        c.adjacency_mode = AdjacencyMode::Factorized { rank: 0 };
        assert!(flops(&c).is_err());
        c.adjacency_mode = AdjacencyMode::Dense;
        c.num_layers = 0;
        assert!(memory(&c).is_err());
    }
}
