//! Run manifests: a config snapshot, seed, and artifact list written
//! after everything else so its presence marks a completed run.

use crate::config::ExperimentConfigFile;
use crate::Result;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
pub struct RunManifest {
    pub command: String,
    pub master_seed: u64,
    pub config: ExperimentConfigFile,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: &ExperimentConfigFile) -> Self {
        RunManifest {
            command: command.to_string(),
            master_seed,
            config: config.clone(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Registers an artifact path; every emitted file must pass through
    /// here before `write` so the manifest stays complete.
    pub fn record(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Writes `manifest.txt` into `dir`. Call only after all artifacts
    /// exist.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut out = String::new();
        out.push_str("[run]\n");
        out.push_str(&format!("command = {}\n", self.command));
        out.push_str(&format!("master_seed = {}\n", self.master_seed));
        out.push_str(&format!("tool_version = {}\n", crate::VERSION));
        out.push_str(&format!("wall_secs = {:.3}\n", self.started.elapsed().as_secs_f64()));
        out.push_str("\n[artifacts]\n");
        for (i, a) in self.artifacts.iter().enumerate() {
            out.push_str(&format!("artifact_{i} = {}\n", a.display()));
        }
        out.push_str("\n# config snapshot\n");
        out.push_str(&crate::config::serialize(&self.config));
        let path = dir.join("manifest.txt");
        std::fs::write(&path, out)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_artifacts_and_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfigFile::default();
        let mut m = RunManifest::new("gen", 7, &cfg);
        let a = dir.path().join("train.tsv");
        std::fs::write(&a, "x").unwrap();
        m.record(&a);
        let path = m.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("command = gen"));
        assert!(text.contains("master_seed = 7"));
        assert!(text.contains("train.tsv"));
        assert!(text.contains("[synth]"));
        // Snapshot must re-parse to the original config.
        let snap_at = text.find("# config snapshot\n").unwrap();
        let parsed = crate::config::parse(&text[snap_at..]).unwrap();
        assert_eq!(parsed, cfg);
    }
}
