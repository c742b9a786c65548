//! Single-file pipeline configuration.
//!
//! One TOML document with a section per stage. Every field has a default, so
//! an empty file is valid up to the inputs each stage requires. Relative
//! paths are resolved against the directory holding the config file.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! trips = "trips.csv"
//! zones = "zones.csv"
//! poi = "poi.csv"
//! coords = "coords.csv"
//! output_dir = "out"
//!
//! [split.observation]
//! start = "2019-08-05"
//! end = "2019-08-11"
//!
//! [split.future]
//! start = "2019-08-12"
//! end = "2019-08-25"
//!
//! [train]
//! dim = 32
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::TrainConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvaluateConfig;
use crate::synth::SynthConfig;
use crate::tkg::GraphOptions;
use crate::trip_data::{LowPredictabilityThresholds, ObservationSplit, TemporalConfig};
use crate::util::read_to_string;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub trips: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub poi: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            trips: None,
            zones: None,
            poi: None,
            coords: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.trips, &mut self.zones, &mut self.poi, &mut self.coords]
            .into_iter()
            .flatten()
        {
            join(p);
        }
        join(&mut self.output_dir);
    }
}

/// Reference methods runnable through the `baseline` stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Random,
    MdUv,
    MdQr,
    MdSvd,
    CfUser,
    CfItem,
    Epr,
    Pepr,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 8] = [
        BaselineMethod::Random,
        BaselineMethod::MdUv,
        BaselineMethod::MdQr,
        BaselineMethod::MdSvd,
        BaselineMethod::CfUser,
        BaselineMethod::CfItem,
        BaselineMethod::Epr,
        BaselineMethod::Pepr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::Random => "random",
            BaselineMethod::MdUv => "md_uv",
            BaselineMethod::MdQr => "md_qr",
            BaselineMethod::MdSvd => "md_svd",
            BaselineMethod::CfUser => "cf_user",
            BaselineMethod::CfItem => "cf_item",
            BaselineMethod::Epr => "epr",
            BaselineMethod::Pepr => "pepr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Methods run by `run_all`.
    pub methods: Vec<BaselineMethod>,
    /// Truncation rank of the matrix decompositions.
    pub md_rank: usize,
    pub k_neighbors: usize,
    pub jump_bin_m: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            methods: vec![
                BaselineMethod::Random,
                BaselineMethod::MdUv,
                BaselineMethod::MdQr,
                BaselineMethod::MdSvd,
                BaselineMethod::CfUser,
                BaselineMethod::CfItem,
            ],
            md_rank: 5,
            k_neighbors: 20,
            jump_bin_m: 1000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the train, baseline and synth seeds when set.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub split: Option<ObservationSplit>,
    pub temporal: TemporalConfig,
    pub filter: LowPredictabilityThresholds,
    pub graph: GraphOptions,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub baselines: BaselineConfig,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `seed` to every seeded section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.train.seed = s;
            self.baselines.seed = s;
            self.synth.seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.temporal.validate()?;
        self.train.validate()?;
        self.evaluate.validate()?;
        if let Some(split) = &self.split {
            split.validate()?;
        }
        if let Some(f) = self.filter.min_entropy_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config("min_entropy_fraction must lie in [0, 1]".into()));
            }
        }
        if self.baselines.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        if self.baselines.md_rank == 0 {
            return Err(Error::Config("md_rank must be at least 1".into()));
        }
        if !(self.baselines.jump_bin_m > 0.0) {
            return Err(Error::Config("jump_bin_m must be positive".into()));
        }
        Ok(())
    }
}
