//! Run configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memrag_core::env::EnvConfig;
use memrag_core::metrics::Metric;
use memrag_core::pipeline::{TrainOptions, WsSampling};
use memrag_core::synth::{CorpusSpec, EditStreamSpec};
use memrag_core::{TrainConfig, TransEConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Answer generator backend.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum GeneratorConfig {
    #[default]
    Mock,
    /// Chat-completions endpoint. The URL and key come from the
    /// environment (see [`crate::remote`]).
    Remote {
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_timeout() -> u64 {
    30
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Copied into every nested seed (corpus, edit stream, TransE, policy).
    pub seed: u64,
    pub out_dir: PathBuf,
    /// The last `test_users` generated users are held out for evaluation.
    pub test_users: usize,
    /// Activated nodes per question.
    pub k: usize,
    pub max_selected: usize,
    /// Reward metric.
    pub metric: Metric,
    pub ws_sampling: WsSampling,
    /// K values swept by `param-k`.
    pub k_values: Vec<usize>,
    /// Timing repeats per query in `param-k`; the fastest is kept.
    pub timing_repeats: usize,
    pub corpus: CorpusSpec,
    pub edits: EditStreamSpec,
    pub train: TrainConfig,
    pub transe: TransEConfig,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/default"),
            test_users: 10,
            k: 3,
            max_selected: EnvConfig::default().max_selected,
            metric: Metric::RougeL,
            ws_sampling: WsSampling::default(),
            k_values: vec![1, 2, 3, 4, 5],
            timing_repeats: 5,
            corpus: CorpusSpec::default(),
            edits: EditStreamSpec::default(),
            train: TrainConfig::default(),
            transe: TransEConfig::default(),
            generator: GeneratorConfig::Mock,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Nested seeds overwritten by the top-level seed.
    pub fn resolved(mut self) -> Self {
        self.corpus.seed = self.seed;
        self.edits.seed = self.seed;
        self.train.seed = self.seed;
        self.transe.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.k_values.contains(&0) {
            bail!("k_values must all be at least 1");
        }
        if self.test_users > self.corpus.n_users {
            bail!("test_users ({}) exceeds n_users ({})", self.test_users, self.corpus.n_users);
        }
        if self.timing_repeats == 0 {
            bail!("timing_repeats must be at least 1");
        }
        self.corpus.validate()?;
        self.edits.validate()?;
        self.train.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        if let GeneratorConfig::Remote { max_in_flight: 0, .. } = self.generator {
            bail!("max_in_flight must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output
    /// directory is not part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { out_dir: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig { k: self.k, max_selected: self.max_selected, ..EnvConfig::default() }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { train: self.train.clone(), env: self.env(), metric: self.metric, ws_sampling: self.ws_sampling }
    }

    /// Index where the held-out users start.
    pub fn split(&self) -> usize {
        self.corpus.n_users - self.test_users
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default().resolved();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_files_fill_defaults_and_seed_propagates() {
        let cfg: RunConfig = toml::from_str("seed = 9\nk = 2\n[corpus]\nn_users = 12\n").unwrap();
        let cfg = cfg.resolved();
        assert_eq!((cfg.k, cfg.corpus.n_users, cfg.corpus.memories_per_user), (2, 12, 100));
        assert_eq!((cfg.corpus.seed, cfg.train.seed, cfg.transe.seed, cfg.edits.seed), (9, 9, 9, 9));
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = RunConfig { k: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.k = 3;
        cfg.test_users = 1000;
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<RunConfig>("no_such_field = 1").is_err());
    }

    #[test]
    fn remote_backend_parses() {
        let cfg: RunConfig = toml::from_str("[generator]\nbackend = \"remote\"\nmodel = \"gpt-4\"\n").unwrap();
        assert_eq!(
            cfg.generator,
            GeneratorConfig::Remote { model: "gpt-4".into(), timeout_secs: 30, max_in_flight: 4, retries: 2 }
        );
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { k: 4, ..RunConfig::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = RunConfig { out_dir: "elsewhere".into(), ..RunConfig::default() };
        assert_eq!(moved.hash(), a.hash());
    }
}
