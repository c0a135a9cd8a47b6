//! Run configuration: a flat `key = value` text format with `#` comments.
//!
//! Every key can also be overridden from the command line under the same
//! name. [`RunConfig::snapshot`] writes the complete resolved configuration
//! back out in the same format, which is what run metadata files record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::features::FeatureConfig;
use crate::gmm::EmConfig;
use crate::openset::{Architecture, MulticlassConfig, SubnnConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub partition: PathBuf,
    pub out: PathBuf,
    pub arch: Architecture,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime pick.
    pub threads: usize,
    pub population_sizes: Vec<usize>,
    pub sample_rate: u32,
    pub train_fraction: f64,
    pub features: FeatureConfig,
    /// `em.seed` is ignored; per-model seeds derive from `seed`.
    pub em: EmConfig,
    pub ubm_components: usize,
    pub speaker_components: usize,
    pub subnn: SubnnConfig,
    pub multiclass: MulticlassConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: PathBuf::from("manifest.csv"),
            partition: PathBuf::from("partition.csv"),
            out: PathBuf::from("out"),
            arch: Architecture::Gmm,
            seed: 0,
            threads: 0,
            population_sizes: vec![100, 300, 500, 700],
            sample_rate: crate::dataset::DEFAULT_SAMPLE_RATE,
            train_fraction: 0.7,
            features: FeatureConfig::default(),
            em: EmConfig::default(),
            ubm_components: 1024,
            speaker_components: 64,
            subnn: SubnnConfig::default(),
            multiclass: MulticlassConfig::default(),
        }
    }
}

/// Every recognised key, in snapshot order.
pub const KEYS: &[&str] = &[
    "manifest",
    "partition",
    "out",
    "arch",
    "seed",
    "threads",
    "population_sizes",
    "sample_rate",
    "train_fraction",
    "pre_emphasis_mu",
    "window_ms",
    "overlap_fraction",
    "num_mel_filters",
    "num_ceps",
    "vad_threshold_db",
    "em_max_iterations",
    "em_rel_tol",
    "em_variance_floor",
    "em_kmeans_iterations",
    "ubm_components",
    "speaker_components",
    "learning_rate",
    "nag_mu",
    "rms_alpha",
    "rms_epsilon",
    "subnn_hidden",
    "subnn_epochs",
    "subnn_batch_size",
    "neg_ratio",
    "multiclass_hidden",
    "multiclass_epochs",
    "multiclass_batch_size",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Configuration(format!("bad value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn list(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "manifest" => self.manifest = PathBuf::from(v),
            "partition" => self.partition = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "arch" => {
                self.arch = v
                    .parse()
                    .map_err(|e: Error| Error::Configuration(e.to_string()))?
            }
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "population_sizes" => self.population_sizes = parse_list(key, v)?,
            "sample_rate" => self.sample_rate = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "pre_emphasis_mu" => self.features.pre_emphasis_mu = parse(key, v)?,
            "window_ms" => self.features.window_ms = parse(key, v)?,
            "overlap_fraction" => self.features.overlap_fraction = parse(key, v)?,
            "num_mel_filters" => self.features.num_mel_filters = parse(key, v)?,
            "num_ceps" => self.features.num_ceps = parse(key, v)?,
            "vad_threshold_db" => self.features.vad_threshold_db = parse(key, v)?,
            "em_max_iterations" => self.em.max_iterations = parse(key, v)?,
            "em_rel_tol" => self.em.rel_tol = parse(key, v)?,
            "em_variance_floor" => self.em.variance_floor = parse(key, v)?,
            "em_kmeans_iterations" => self.em.kmeans_iterations = parse(key, v)?,
            "ubm_components" => self.ubm_components = parse(key, v)?,
            "speaker_components" => self.speaker_components = parse(key, v)?,
            "learning_rate" => {
                let x = parse(key, v)?;
                self.subnn.optimizer.eta = x;
                self.multiclass.optimizer.eta = x;
            }
            "nag_mu" => {
                let x = parse(key, v)?;
                self.subnn.optimizer.mu = x;
                self.multiclass.optimizer.mu = x;
            }
            "rms_alpha" => {
                let x = parse(key, v)?;
                self.subnn.optimizer.alpha = x;
                self.multiclass.optimizer.alpha = x;
            }
            "rms_epsilon" => {
                let x = parse(key, v)?;
                self.subnn.optimizer.epsilon = x;
                self.multiclass.optimizer.epsilon = x;
            }
            "subnn_hidden" => self.subnn.hidden = parse_list(key, v)?,
            "subnn_epochs" => self.subnn.train.epochs = parse(key, v)?,
            "subnn_batch_size" => self.subnn.train.batch_size = parse(key, v)?,
            "neg_ratio" => self.subnn.neg_ratio = parse(key, v)?,
            "multiclass_hidden" => self.multiclass.hidden = parse_list(key, v)?,
            "multiclass_epochs" => self.multiclass.train.epochs = parse(key, v)?,
            "multiclass_batch_size" => self.multiclass.train.batch_size = parse(key, v)?,
            other => return Err(Error::Configuration(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "manifest" => self.manifest.display().to_string(),
            "partition" => self.partition.display().to_string(),
            "out" => self.out.display().to_string(),
            "arch" => self.arch.to_string(),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "population_sizes" => list(&self.population_sizes),
            "sample_rate" => self.sample_rate.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "pre_emphasis_mu" => self.features.pre_emphasis_mu.to_string(),
            "window_ms" => self.features.window_ms.to_string(),
            "overlap_fraction" => self.features.overlap_fraction.to_string(),
            "num_mel_filters" => self.features.num_mel_filters.to_string(),
            "num_ceps" => self.features.num_ceps.to_string(),
            "vad_threshold_db" => self.features.vad_threshold_db.to_string(),
            "em_max_iterations" => self.em.max_iterations.to_string(),
            "em_rel_tol" => self.em.rel_tol.to_string(),
            "em_variance_floor" => self.em.variance_floor.to_string(),
            "em_kmeans_iterations" => self.em.kmeans_iterations.to_string(),
            "ubm_components" => self.ubm_components.to_string(),
            "speaker_components" => self.speaker_components.to_string(),
            "learning_rate" => self.subnn.optimizer.eta.to_string(),
            "nag_mu" => self.subnn.optimizer.mu.to_string(),
            "rms_alpha" => self.subnn.optimizer.alpha.to_string(),
            "rms_epsilon" => self.subnn.optimizer.epsilon.to_string(),
            "subnn_hidden" => list(&self.subnn.hidden),
            "subnn_epochs" => self.subnn.train.epochs.to_string(),
            "subnn_batch_size" => self.subnn.train.batch_size.to_string(),
            "neg_ratio" => self.subnn.neg_ratio.to_string(),
            "multiclass_hidden" => list(&self.multiclass.hidden),
            "multiclass_epochs" => self.multiclass.train.epochs.to_string(),
            "multiclass_batch_size" => self.multiclass.train.batch_size.to_string(),
            _ => return None,
        })
    }

    /// Parses config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Configuration(format!("line {}: expected `key = value`", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Configuration(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Loads a config file. Relative `manifest`, `partition` and `out`
    /// paths are taken relative to the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        let mut cfg = Self::parse_str(&text).map_err(|e| e.at(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.partition, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The full resolved configuration as config-file text.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(
                s,
                "{key} = {}",
                self.get(key).expect("every key is gettable")
            );
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Configuration(e.to_string());
        self.features.validate().map_err(cfg_err)?;
        self.em.validate().map_err(cfg_err)?;
        self.subnn.train.validate().map_err(cfg_err)?;
        self.multiclass.train.validate().map_err(cfg_err)?;
        if self.population_sizes.is_empty() || self.population_sizes.contains(&0) {
            return Err(Error::Configuration(
                "population sizes must be positive".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Configuration(
                "train_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.sample_rate == 0 || self.ubm_components == 0 || self.speaker_components == 0 {
            return Err(Error::Configuration(
                "sample rate and component counts must be positive".into(),
            ));
        }
        if !(self.subnn.neg_ratio > 0.0) {
            return Err(Error::Configuration("neg_ratio must be positive".into()));
        }
        Ok(())
    }

    /// Population sizes in increasing order without duplicates.
    pub fn sorted_population_sizes(&self) -> Vec<usize> {
        let mut v = self.population_sizes.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}
