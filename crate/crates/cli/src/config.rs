//! Run configuration: a TOML file with sections, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bmpnn_core::features::FeatureMask;
use bmpnn_core::mpnn::{ModelSpec, Task, Variant};
use bmpnn_core::pipeline::Conformation;
use bmpnn_core::train::{Sampler, TrainConfig};
use bmpnn_core::tuning::SearchSpace;
use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub tune: TuneSection,
    pub selection: SelectionSection,
    pub diversity: DiversitySection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![0, 1, 2, 3, 4],
            model: ModelSection::default(),
            train: TrainConfig::default(),
            data: DataSection::default(),
            tune: TuneSection::default(),
            selection: SelectionSection::default(),
            diversity: DiversitySection::default(),
            ablation: AblationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub task: Task,
    pub hidden: usize,
    pub dropout: f64,
    pub heads: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: Variant::Bmp,
            task: Task::Classification,
            hidden: 250,
            dropout: 0.25,
            heads: 1,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, mask: &FeatureMask) -> ModelSpec {
        let mut s = ModelSpec::new(
            self.variant,
            self.task,
            self.hidden,
            mask.atom_dim(),
            mask.bond_dim(),
            mask.global_dim(),
        );
        s.dropout = self.dropout;
        s.heads = self.heads;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `2d`, `3d` or `noisy3d:<sigma>`.
    pub mode: String,
    /// SDF data field holding the label.
    pub label_field: Option<String>,
    /// Binarize an `ic50` column (nM) at this threshold.
    pub ic50_threshold: Option<f64>,
    /// Active feature names; all features when absent.
    pub features: Option<Vec<String>>,
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            mode: "3d".into(),
            label_field: None,
            ic50_threshold: None,
            features: None,
            test_fraction: bmpnn_core::protocol::BLIND_TEST_FRACTION,
        }
    }
}

impl DataSection {
    pub fn conformation(&self) -> Result<Conformation> {
        Ok(self.mode.parse()?)
    }

    pub fn mask(&self) -> Result<FeatureMask> {
        Ok(match &self.features {
            Some(names) => FeatureMask::from_names(names.iter().map(String::as_str))?,
            None => FeatureMask::all(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub trials: usize,
    pub space: SearchSpace,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            trials: 50,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub max_rounds: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection { max_rounds: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversitySection {
    pub threshold: f64,
}

impl Default for DiversitySection {
    fn default() -> Self {
        DiversitySection {
            threshold: bmpnn_core::diversity::CLUSTER_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub noise_sigma: f64,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { noise_sigma: 0.5 }
    }
}

/// Flags shared by every command that reads a run configuration.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `uniform` or `weighted-by-class`.
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<Sampler>,
    /// Balance classes with randomized-SMILES copies of the minority class.
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Geometry: `2d`, `3d` or `noisy3d:<sigma>`.
    #[arg(long)]
    pub mode: Option<Conformation>,
    #[arg(long)]
    pub label_field: Option<String>,
    #[arg(long)]
    pub ic50_threshold: Option<f64>,
    /// Comma-separated active feature names.
    #[arg(long, value_delimiter = ',', conflicts_with = "features_file")]
    pub features: Option<Vec<String>>,
    /// JSON file with a `features` list (e.g. from `select-features`).
    #[arg(long, value_name = "FILE")]
    pub features_file: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

fn parse_sampler(s: &str) -> Result<Sampler, String> {
    match s.replace('-', "_").as_str() {
        "uniform" => Ok(Sampler::Uniform),
        "weighted_by_class" | "weighted" => Ok(Sampler::WeightedByClass),
        _ => Err(format!("unknown sampler `{s}`")),
    }
}

#[derive(Deserialize)]
struct FeatureList {
    features: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.seeds {
            c.seeds = v.clone();
        }
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.variant => c.model.variant);
        set!(self.task => c.model.task);
        set!(self.hidden => c.model.hidden);
        set!(self.dropout => c.model.dropout);
        set!(self.heads => c.model.heads);
        set!(self.lr => c.train.lr);
        set!(self.batch_size => c.train.batch_size);
        set!(self.epochs => c.train.epochs);
        set!(self.sampler => c.train.sampler);
        set!(self.cv_folds => c.train.cv_folds);
        set!(self.test_fraction => c.data.test_fraction);
        if self.augment {
            c.train.augment_minority = true;
        }
        if let Some(m) = self.mode {
            c.data.mode = m.to_string();
        }
        if self.label_field.is_some() {
            c.data.label_field = self.label_field.clone();
        }
        if self.ic50_threshold.is_some() {
            c.data.ic50_threshold = self.ic50_threshold;
        }
        if self.features.is_some() {
            c.data.features = self.features.clone();
        }
        if let Some(p) = &self.features_file {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let list: FeatureList =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            c.data.features = Some(list.features);
        }
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        self.train.validate()?;
        self.data.conformation()?;
        self.data.mask()?;
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            bail!("test fraction must be in [0, 1)");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
