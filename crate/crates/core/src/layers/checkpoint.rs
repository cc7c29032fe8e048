//! Flat binary parameter checkpoints: a fixed header describing the
//! model configuration, then all parameters as little-endian f64 in
//! layout declaration order.

use super::{AdjacencyMode, Architecture, ModelConfig, ParamLayout, ParameterSet};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PFCKPT01";

pub fn save_checkpoint(params: &ParameterSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let cfg = &params.config;
    w.write_all(MAGIC)?;
    w.write_all(&[match cfg.architecture {
        Architecture::Attention => 0u8,
        Architecture::Adjacency => 1u8,
    }])?;
    w.write_all(&(cfg.vocab_size as u32).to_le_bytes())?;
    w.write_all(&(cfg.seq_len as u32).to_le_bytes())?;
    w.write_all(&(cfg.hidden_dim as u32).to_le_bytes())?;
    let (mode, rank) = match cfg.adjacency_mode {
        AdjacencyMode::Dense => (0u8, 0u32),
        AdjacencyMode::Factorized { rank } => (1u8, rank as u32),
    };
    w.write_all(&[mode])?;
    w.write_all(&rank.to_le_bytes())?;
    w.write_all(&[cfg.attention_scaling as u8])?;
    w.write_all(&(cfg.num_layers as u32).to_le_bytes())?;
    w.write_all(&cfg.seed.to_le_bytes())?;
    w.write_all(&(params.data.len() as u64).to_le_bytes())?;
    for v in &params.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a parameter checkpoint (bad magic)",
            path.display()
        )));
    }
    let arch = match read_u8(&mut r)? {
        0 => Architecture::Attention,
        1 => Architecture::Adjacency,
        x => return Err(Error::Data(format!("unknown architecture tag {x}"))),
    };
    let vocab_size = read_u32(&mut r)? as usize;
    let seq_len = read_u32(&mut r)? as usize;
    let hidden_dim = read_u32(&mut r)? as usize;
    let mode = read_u8(&mut r)?;
    let rank = read_u32(&mut r)? as usize;
    let adjacency_mode = match mode {
        0 => AdjacencyMode::Dense,
        1 => AdjacencyMode::Factorized { rank },
        x => return Err(Error::Data(format!("unknown adjacency mode tag {x}"))),
    };
    let attention_scaling = read_u8(&mut r)? != 0;
    let num_layers = read_u32(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let config = ModelConfig {
        architecture: arch,
        vocab_size,
        seq_len,
        hidden_dim,
        adjacency_mode,
        attention_scaling,
        num_layers,
        seed,
    };
    config.validate()?;
    let layout = ParamLayout::new(&config);
    if layout.total != count {
        return Err(Error::Data(format!(
            "checkpoint declares {count} parameters but layout expects {}",
            layout.total
        )));
    }
    let mut data = vec![0.0f64; count];
    let mut buf = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(ParameterSet { config, layout, data })
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_both_architectures() {
        let dir = tempfile::tempdir().unwrap();
        for (arch, mode) in [
            (Architecture::Attention, AdjacencyMode::Dense),
            (Architecture::Adjacency, AdjacencyMode::Dense),
            (Architecture::Adjacency, AdjacencyMode::Factorized { rank: 2 }),
        ] {
            let cfg = ModelConfig {
                architecture: arch,
                vocab_size: 4,
                seq_len: 4,
                hidden_dim: 8,
                adjacency_mode: mode,
                attention_scaling: false,
                num_layers: 1,
                seed: 3,
            };
            let params = ParameterSet::init(&cfg).unwrap();
            let path = dir.path().join(format!("{}_{mode:?}.bin", arch.as_str()));
            save_checkpoint(&params, &path).unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(loaded, params);
        }
    }
}
