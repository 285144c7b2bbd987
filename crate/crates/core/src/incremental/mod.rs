//! Per-increment strategies: model distillation, AC distillation and the
//! finetune, LwF and exemplar-rehearsal baselines.

mod strategies;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classify::{ClassMeans, ExemplarSet};
use crate::data::LabeledDataset;
use crate::distill::{DistillSource, DEFAULT_ALPHA, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::gan::{GanBundle, GanTrainConfig};
use crate::models::{AccessLog, ClassifierArch, ClassifierModel, TrainConfig};
use crate::rng;

pub use strategies::{
    augment_with_generated, increment_ac_distillation, increment_exemplar_rehearsal, increment_finetune,
    increment_lwf, increment_model_distillation, run_increment,
};

/// Training procedure applied at every increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Finetune,
    Lwf,
    Icarl,
    ModelDistillation,
    AcDistillation,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Finetune => "finetune",
            StrategyKind::Lwf => "lwf",
            StrategyKind::Icarl => "icarl",
            StrategyKind::ModelDistillation => "model-distillation",
            StrategyKind::AcDistillation => "ac-distillation",
        }
    }

    /// Whether the strategy avoids storing real samples of past increments.
    pub fn privacy_preserving(self) -> bool {
        !matches!(self, StrategyKind::Icarl)
    }

    /// Default for re-using the previous classifier's weights.
    pub fn default_warm_start(self) -> bool {
        !matches!(self, StrategyKind::ModelDistillation | StrategyKind::AcDistillation)
    }
}

/// Classification rule used at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// The trained classifier's head.
    Tc,
    /// Nearest mean of exemplars in embedding space.
    Moe,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Tc => "tc",
            Rule::Moe => "moe",
        }
    }
}

/// A named (training procedure, classification rule) pair, e.g.
/// `ac-distillation-moe`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub rule: Rule,
}

impl StrategySpec {
    pub const ALL: [StrategySpec; 7] = [
        StrategySpec::new(StrategyKind::Finetune, Rule::Tc),
        StrategySpec::new(StrategyKind::Lwf, Rule::Tc),
        StrategySpec::new(StrategyKind::Icarl, Rule::Moe),
        StrategySpec::new(StrategyKind::ModelDistillation, Rule::Tc),
        StrategySpec::new(StrategyKind::ModelDistillation, Rule::Moe),
        StrategySpec::new(StrategyKind::AcDistillation, Rule::Tc),
        StrategySpec::new(StrategyKind::AcDistillation, Rule::Moe),
    ];

    pub const fn new(kind: StrategyKind, rule: Rule) -> Self {
        Self { kind, rule }
    }

    pub fn name(&self) -> String {
        match self.kind {
            StrategyKind::ModelDistillation | StrategyKind::AcDistillation => {
                format!("{}-{}", self.kind.name(), self.rule.name())
            }
            _ => self.kind.name().to_string(),
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategySpec::ALL.into_iter().find(|spec| spec.name() == s).ok_or_else(|| {
            let known: Vec<String> = StrategySpec::ALL.iter().map(StrategySpec::name).collect();
            Error::invalid("strategies", format!("unknown strategy `{s}` (known: {})", known.join(", ")))
        })
    }
}

impl Serialize for StrategySpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for StrategySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Generated samples per old class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleCount {
    /// The real per-class count of the current increment.
    #[default]
    MatchReal,
    Fixed(usize),
}

impl SampleCount {
    pub fn resolve(self, real: &LabeledDataset) -> usize {
        match self {
            SampleCount::MatchReal => real.len() / real.class_set().len().max(1),
            SampleCount::Fixed(k) => k,
        }
    }
}

impl Serialize for SampleCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleCount::MatchReal => s.serialize_str("match-real"),
            SampleCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SampleCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = SampleCount;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"match-real\" or a non-negative integer")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<SampleCount, E> {
                Ok(SampleCount::Fixed(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<SampleCount, E> {
                usize::try_from(v)
                    .map(SampleCount::Fixed)
                    .map_err(|_| E::custom("k must be >= 0"))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<SampleCount, E> {
                if v == "match-real" {
                    Ok(SampleCount::MatchReal)
                } else {
                    Err(E::custom(format!("unknown k `{v}`")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Samples behind the class means of the mean-of-exemplars rule for the
/// generative strategies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoeMeanSource {
    /// Generated samples for old classes, real samples for the new ones.
    #[default]
    Generated,
    /// Real samples of every class, kept across increments. Not private.
    Real,
}

/// Everything an increment needs besides the incoming data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementConfig {
    pub classifier: ClassifierArch,
    pub train: TrainConfig,
    pub gan: GanTrainConfig,
    #[serde(default = "default_temperature")]
    pub temperature: f32,
    #[serde(default = "default_alpha")]
    pub alpha: f32,
    #[serde(default)]
    pub k: SampleCount,
    /// Total exemplar memory of the rehearsal baseline.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// `None` uses [`StrategyKind::default_warm_start`].
    #[serde(default)]
    pub warm_start: Option<bool>,
    #[serde(default)]
    pub moe_means: MoeMeanSource,
    #[serde(default)]
    pub seed: u64,
}

fn default_temperature() -> f32 {
    DEFAULT_TEMPERATURE
}

fn default_alpha() -> f32 {
    DEFAULT_ALPHA
}

fn default_budget() -> usize {
    2000
}

impl IncrementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", format!("{} must be > 0", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("{} outside [0, 1]", self.alpha)));
        }
        self.classifier.embed_dim()?;
        self.train.validate()?;
        self.gan.validate()
    }

    pub fn warm_start_for(&self, kind: StrategyKind) -> bool {
        match kind {
            StrategyKind::Finetune => true,
            _ => self.warm_start.unwrap_or(kind.default_warm_start()),
        }
    }

    fn seed_for(&self, tag: &str, increment: usize) -> u64 {
        rng::derive_seed(self.seed, tag, increment as u64)
    }
}

/// Soft targets that trained the classifier during one increment.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftRecord {
    pub source: DistillSource,
    pub temperature: f32,
    pub class_support: Vec<usize>,
    /// Class of each item: its hard label, or the conditioning class for a
    /// generated sample.
    pub item_classes: Vec<usize>,
    pub labels: Vec<Vec<f32>>,
}

/// What happened during one increment.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementLog {
    /// 1-based.
    pub increment: usize,
    pub old_classes: Vec<usize>,
    pub new_classes: Vec<usize>,
    pub real_count: usize,
    /// `k * m` samples appended by the previous generator.
    pub generated_count: usize,
    pub k: usize,
    pub access: AccessLog,
    pub soft: Option<SoftRecord>,
    pub gan_init_checksum: Option<u64>,
    pub gan_checksum: Option<u64>,
    pub epoch_losses: Vec<f32>,
}

/// Carried from one increment to the next.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IncrementState {
    pub classifier: Option<ClassifierModel>,
    pub gan: Option<GanBundle>,
    /// Classes in arrival order.
    pub seen_classes: Vec<usize>,
    pub exemplars: Option<ExemplarSet>,
    /// Means for the mean-of-exemplars rule, when the strategy has them.
    pub means: Option<ClassMeans>,
    /// Increment at which each class arrived.
    pub class_arrival: BTreeMap<usize, usize>,
    pub logs: Vec<IncrementLog>,
    /// Real samples of all past increments; only kept for
    /// [`MoeMeanSource::Real`].
    pub real_archive: Option<LabeledDataset>,
}

impl IncrementState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of completed increments.
    pub fn increments(&self) -> usize {
        self.logs.len()
    }

    /// Heads and class lists agree.
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(c) = &self.classifier {
            if c.head_classes() != self.seen_classes {
                return Err(Error::invalid("classifier", "head does not match seen classes"));
            }
        }
        if let Some(g) = &self.gan {
            if g.classes() != self.seen_classes {
                return Err(Error::invalid("gan", "aux head does not match seen classes"));
            }
        }
        Ok(())
    }
}
