//! Run configuration: a flat `key = value` file with `#` comments, covering
//! the embedding, tracker, trainer, and simulator settings plus the global
//! seed. Parsing rejects unknown keys; serialization emits a normalized
//! (sorted, canonically formatted) form that round-trips exactly.

use std::path::Path;

use crate::embedding::{EmbeddingConfig, EmbeddingMethod};
use crate::error::{Error, Result};
use crate::io;
use crate::simulator::SimConfig;
use crate::tracker::{ExemplarPolicy, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pairs_per_sequence: usize,
    pub max_gap_windows: usize,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr_start: 1e-2,
            lr_end: 1e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            pairs_per_sequence: 4,
            max_gap_windows: 8,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embedding: EmbeddingConfig,
    pub window_influence: f64,
    pub window_us: u64,
    pub exemplar_policy: ExemplarPolicy,
    pub edge_ratio: f64,
    pub upsample: usize,
    pub scale_search: bool,
    pub train: TrainConfig,
    pub sim_threshold: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embedding: EmbeddingConfig::default(),
            window_influence: 0.176,
            window_us: 40_000,
            exemplar_policy: ExemplarPolicy::Fixed,
            edge_ratio: 0.05,
            upsample: 16,
            scale_search: false,
            train: TrainConfig::default(),
            sim_threshold: 0.15,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            embedding: self.embedding,
            window_influence: self.window_influence,
            upsample: self.upsample,
            edge_ratio: self.edge_ratio,
            window_us: self.window_us,
            exemplar_policy: self.exemplar_policy,
            scales: self.scale_search.then_some([0.96, 1.0, 1.04]),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            threshold_pos: self.sim_threshold,
            threshold_neg: self.sim_threshold,
            ..SimConfig::default()
        }
    }

    /// Normalized key/value form, sorted by key.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let policy = match self.exemplar_policy {
            ExemplarPolicy::Fixed => "fixed",
            ExemplarPolicy::Sliding => "sliding",
        };
        let mut entries = vec![
            ("embedding.bins".to_string(), self.embedding.bins.to_string()),
            ("embedding.method".to_string(), self.embedding.method.name().to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("sim.threshold".to_string(), self.sim_threshold.to_string()),
            ("tracker.edge_ratio".to_string(), self.edge_ratio.to_string()),
            ("tracker.exemplar_policy".to_string(), policy.to_string()),
            ("tracker.scale_search".to_string(), self.scale_search.to_string()),
            ("tracker.upsample".to_string(), self.upsample.to_string()),
            ("tracker.window_influence".to_string(), self.window_influence.to_string()),
            ("tracker.window_us".to_string(), self.window_us.to_string()),
            ("train.epochs".to_string(), self.train.epochs.to_string()),
            ("train.lr_end".to_string(), self.train.lr_end.to_string()),
            ("train.lr_start".to_string(), self.train.lr_start.to_string()),
            ("train.max_gap_windows".to_string(), self.train.max_gap_windows.to_string()),
            ("train.momentum".to_string(), self.train.momentum.to_string()),
            ("train.pairs_per_sequence".to_string(), self.train.pairs_per_sequence.to_string()),
            ("train.train_fraction".to_string(), self.train.train_fraction.to_string()),
            ("train.weight_decay".to_string(), self.train.weight_decay.to_string()),
        ];
        entries.sort();
        entries
    }

    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in entries {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| {
                Error::InvalidArgument(format!("config key `{key}`: bad value `{value}`: {e}"))
            })
        }
        match key {
            "embedding.bins" => self.embedding.bins = num(key, value)?,
            "embedding.method" => self.embedding.method = EmbeddingMethod::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "sim.threshold" => self.sim_threshold = num(key, value)?,
            "tracker.edge_ratio" => self.edge_ratio = num(key, value)?,
            "tracker.exemplar_policy" => {
                self.exemplar_policy = match value {
                    "fixed" => ExemplarPolicy::Fixed,
                    "sliding" => ExemplarPolicy::Sliding,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "config key `{key}`: expected fixed|sliding, got `{other}`"
                        )))
                    }
                }
            }
            "tracker.scale_search" => self.scale_search = num(key, value)?,
            "tracker.upsample" => self.upsample = num(key, value)?,
            "tracker.window_influence" => self.window_influence = num(key, value)?,
            "tracker.window_us" => self.window_us = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.lr_end" => self.train.lr_end = num(key, value)?,
            "train.lr_start" => self.train.lr_start = num(key, value)?,
            "train.max_gap_windows" => self.train.max_gap_windows = num(key, value)?,
            "train.momentum" => self.train.momentum = num(key, value)?,
            "train.pairs_per_sequence" => self.train.pairs_per_sequence = num(key, value)?,
            "train.train_fraction" => self.train.train_fraction = num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = num(key, value)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.embedding.bins == 0 {
            return Err(Error::InvalidArgument("embedding.bins must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.window_influence) {
            return Err(Error::InvalidArgument(
                "tracker.window_influence must be in [0, 1]".into(),
            ));
        }
        if self.upsample == 0 {
            return Err(Error::InvalidArgument("tracker.upsample must be >= 1".into()));
        }
        if self.window_us == 0 {
            return Err(Error::InvalidArgument("tracker.window_us must be > 0".into()));
        }
        if self.sim_threshold <= 0.0 {
            return Err(Error::InvalidArgument("sim.threshold must be > 0".into()));
        }
        if self.train.epochs == 0 {
            return Err(Error::InvalidArgument("train.epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.train.train_fraction) {
            return Err(Error::InvalidArgument(
                "train.train_fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries = io::read_kv(path)?;
        Self::from_entries(&entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_kv(path, &self.to_entries())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let entries = cfg.to_entries();
        let parsed = RunConfig::from_entries(&entries).unwrap();
        assert_eq!(parsed, cfg);
        // Normalized form is stable.
        assert_eq!(parsed.to_entries(), entries);
    }

    #[test]
    fn modified_values_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.embedding.bins = 3;
        cfg.embedding.method = EmbeddingMethod::TwoChannelVoxel;
        cfg.window_influence = 0.25;
        cfg.exemplar_policy = ExemplarPolicy::Sliding;
        cfg.scale_search = true;
        cfg.train.epochs = 7;
        cfg.train.lr_start = 0.5;
        cfg.seed = 1234567;
        let parsed = RunConfig::from_entries(&cfg.to_entries()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let entries = vec![("tracker.bogus".to_string(), "1".to_string())];
        assert!(RunConfig::from_entries(&entries).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        for (k, v) in [
            ("embedding.bins", "0"),
            ("tracker.window_influence", "1.5"),
            ("tracker.exemplar_policy", "both"),
            ("train.epochs", "0"),
            ("sim.threshold", "-0.1"),
        ] {
            let entries = vec![(k.to_string(), v.to_string())];
            assert!(RunConfig::from_entries(&entries).is_err(), "{k}={v}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }
}
