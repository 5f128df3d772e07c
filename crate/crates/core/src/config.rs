//! Run configuration: defaults, key=value config files, and validation.

use std::path::PathBuf;

use crate::model::ModelConfig;
use crate::Error;

/// Everything a protocol run needs. Defaults follow the standard benchmark
/// horizons (8 observed / 12 predicted steps at 0.4 s) over the four
/// frame-annotated scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene_root: PathBuf,
    pub scenes: Vec<String>,
    pub obs_len: usize,
    pub pred_len: usize,
    pub use_semantic: bool,
    pub sparsity_k: usize,
    pub graph_dim: usize,
    pub scene_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Window stride in annotation frames.
    pub window_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene_root: PathBuf::from("."),
            scenes: vec!["eth".into(), "hotel".into(), "zara1".into(), "zara2".into()],
            obs_len: 8,
            pred_len: 12,
            use_semantic: true,
            sparsity_k: 4,
            graph_dim: 64,
            scene_dim: 64,
            key_dim: 64,
            value_dim: 64,
            lr: 0.01,
            epochs: 64,
            seed: 42,
            output_dir: PathBuf::from("out"),
            window_stride: 1,
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines from a config file; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), Error> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", idx + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "scene_root" => self.scene_root = PathBuf::from(value),
            "scenes" => {
                self.scenes = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "obs_len" => self.obs_len = num(key, value)?,
            "pred_len" => self.pred_len = num(key, value)?,
            "use_semantic" => {
                self.use_semantic = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(format!("bad value {other:?} for use_semantic")),
                }
            }
            "sparsity_k" => self.sparsity_k = num(key, value)?,
            "d_g" => self.graph_dim = num(key, value)?,
            "d_s" => self.scene_dim = num(key, value)?,
            "d_k" => self.key_dim = num(key, value)?,
            "d_v" => self.value_dim = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "window_stride" => self.window_stride = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.obs_len < 2 {
            return Err(Error::Config(format!("obs_len must be >= 2, got {}", self.obs_len)));
        }
        if self.pred_len < 1 {
            return Err(Error::Config(format!("pred_len must be >= 1, got {}", self.pred_len)));
        }
        if self.scenes.is_empty() {
            return Err(Error::Config("scene list is empty".into()));
        }
        if self.sparsity_k < 1 {
            return Err(Error::Config("sparsity_k must be >= 1".into()));
        }
        for (name, v) in [
            ("d_g", self.graph_dim),
            ("d_s", self.scene_dim),
            ("d_k", self.key_dim),
            ("d_v", self.value_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.window_stride < 1 {
            return Err(Error::Config("window_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Architecture settings implied by this run configuration.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            obs_len: self.obs_len,
            pred_len: self.pred_len,
            graph_dim: self.graph_dim,
            scene_dim: self.scene_dim,
            key_dim: self.key_dim,
            value_dim: self.value_dim,
            sparsity_k: self.sparsity_k,
            use_semantic: self.use_semantic,
            ..ModelConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn file_text_overrides_fields() {
        let mut cfg = RunConfig::default();
        cfg.apply_file_text("# comment\nseed=7\nscenes=a, b\nuse_semantic=false\nlr=0.5\n")
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.scenes, vec!["a".to_string(), "b".to_string()]);
        assert!(!cfg.use_semantic);
        assert_eq!(cfg.lr, 0.5);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_file_text("bogus=1").is_err());
        assert!(cfg.apply_file_text("no equals sign").is_err());
    }

    #[test]
    fn invalid_horizons_rejected() {
        let mut cfg = RunConfig::default();
        cfg.obs_len = 1;
        assert!(cfg.validate().is_err());
        cfg.obs_len = 8;
        cfg.pred_len = 0;
        assert!(cfg.validate().is_err());
    }
}
