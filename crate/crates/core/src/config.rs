//! TOML experiment configuration, bundled presets and the experiment runner.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bench::{bias_report, emit_outputs, run_protocol_rules, ProtocolResult, RunBias};
use crate::data::{
    load_mnist, parse_cifar10_binary, split_incremental, split_with_order, synth_gaussians, IncrementStream,
    LabeledDataset, MeansLayout, MnistSplit,
};
use crate::diffcore::{LrSchedule, OptimizerKind};
use crate::error::{Error, Result};
use crate::gan::{GanArch, GanTrainConfig};
use crate::incremental::{IncrementConfig, MoeMeanSource, Rule, SampleCount, StrategyKind, StrategySpec};
use crate::models::{ClassifierArch, LayerSpec, TrainConfig};
use crate::rng;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ROOT_ENV: &str = "ACDISTILL_OUTPUT_ROOT";

/// Bundled presets as `(name, TOML source)`.
pub const PRESETS: [(&str, &str); 3] = [
    ("desk-gauss", include_str!("../presets/desk-gauss.toml")),
    ("desk-mnist", include_str!("../presets/desk-mnist.toml")),
    ("paper-mnist", include_str!("../presets/paper-mnist.toml")),
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetPreset {
    #[default]
    MnistFull,
    MnistDesk,
    Gauss2d,
    Cifar10Stretch,
}

impl DatasetPreset {
    pub fn name(self) -> &'static str {
        match self {
            DatasetPreset::MnistFull => "mnist-full",
            DatasetPreset::MnistDesk => "mnist-desk",
            DatasetPreset::Gauss2d => "gauss2d",
            DatasetPreset::Cifar10Stretch => "cifar10-stretch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussConfig {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub sigma: f32,
    pub radius: f32,
    pub seed: u64,
}

impl Default for GaussConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            train_per_class: 200,
            test_per_class: 100,
            sigma: 0.3,
            radius: 3.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub mnist_dir: Option<PathBuf>,
    pub cifar_dir: Option<PathBuf>,
    /// Training samples kept per class; `None` keeps all.
    pub cap_per_class: Option<usize>,
    /// 2x average-pool downsampling of images.
    pub downsample: Option<bool>,
    pub gauss: GaussConfig,
}

/// Classifier body; the input shape comes from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Mlp { hidden: Vec<usize> },
    SmallCnn,
    Layers { body: Vec<LayerSpec> },
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::SmallCnn
    }
}

impl ClassifierSpec {
    pub fn arch(&self, input_shape: &[usize]) -> ClassifierArch {
        match self {
            ClassifierSpec::Mlp { hidden } => ClassifierArch::mlp(input_shape.to_vec(), hidden),
            ClassifierSpec::SmallCnn => ClassifierArch::small_cnn(input_shape.to_vec()),
            ClassifierSpec::Layers { body } => ClassifierArch {
                input_shape: input_shape.to_vec(),
                body: body.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GanModel {
    /// `tanh_output` defaults to true for image datasets.
    Mlp {
        hidden: Vec<usize>,
        #[serde(default)]
        tanh_output: Option<bool>,
    },
    Dcgan,
    Layers {
        generator: Vec<LayerSpec>,
        discriminator: Vec<LayerSpec>,
    },
}

impl Default for GanModel {
    fn default() -> Self {
        GanModel::Dcgan
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    pub model: GanModel,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerKind,
}

impl Default for GanSection {
    fn default() -> Self {
        Self {
            model: GanModel::default(),
            latent_dim: 100,
            cond_dim: 10,
            epochs: 20,
            batch_size: 100,
            schedule: LrSchedule {
                base_lr: 2e-4,
                decay_factor: 0.1,
                decay_epochs: vec![11, 16],
            },
            optimizer: OptimizerKind::Adam {
                beta1: 0.5,
                beta2: 0.999,
            },
        }
    }
}

impl GanSection {
    pub fn arch(&self, input_shape: &[usize]) -> GanArch {
        let image = input_shape.len() == 3;
        match &self.model {
            GanModel::Mlp { hidden, tanh_output } => GanArch::mlp(
                input_shape.to_vec(),
                self.latent_dim,
                self.cond_dim,
                hidden,
                tanh_output.unwrap_or(image),
            ),
            GanModel::Dcgan => GanArch::dcgan(input_shape.to_vec(), self.latent_dim, self.cond_dim),
            GanModel::Layers {
                generator,
                discriminator,
            } => GanArch {
                input_shape: input_shape.to_vec(),
                latent_dim: self.latent_dim,
                cond_dim: self.cond_dim,
                generator: generator.clone(),
                discriminator: discriminator.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 100,
            schedule: LrSchedule {
                base_lr: 2.0,
                decay_factor: 0.2,
                decay_epochs: vec![8, 12],
            },
            optimizer: OptimizerKind::default(),
        }
    }
}

impl From<&TrainSection> for TrainConfig {
    fn from(t: &TrainSection) -> Self {
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            schedule: t.schedule.clone(),
            optimizer: t.optimizer,
        }
    }
}

/// One experiment. Every field has a default, so an empty file is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label recorded in the outputs.
    pub name: String,
    pub dataset: DatasetPreset,
    pub data: DataConfig,
    pub strategies: Vec<StrategySpec>,
    pub classes_per_increment: usize,
    /// Explicit increments; overrides `classes_per_increment` and `split_seed`.
    pub class_order: Option<Vec<Vec<usize>>>,
    pub split_seed: u64,
    pub seeds: Vec<u64>,
    pub temperature: f32,
    pub alpha: f32,
    pub k: SampleCount,
    pub budget: usize,
    /// `None` keeps each strategy's default.
    pub warm_start: Option<bool>,
    pub moe_means: MoeMeanSource,
    pub classifier: ClassifierSpec,
    pub train: TrainSection,
    pub gan: GanSection,
    pub output_dir: PathBuf,
    /// Leaves wall-clock timings out of the outputs so repeated runs are
    /// byte-identical.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            dataset: DatasetPreset::default(),
            data: DataConfig::default(),
            strategies: StrategySpec::ALL.to_vec(),
            classes_per_increment: 2,
            class_order: None,
            split_seed: 0,
            seeds: vec![0, 1, 2],
            temperature: crate::distill::DEFAULT_TEMPERATURE,
            alpha: crate::distill::DEFAULT_ALPHA,
            k: SampleCount::default(),
            budget: 2000,
            warm_start: None,
            moe_means: MoeMeanSource::default(),
            classifier: ClassifierSpec::default(),
            train: TrainSection::default(),
            gan: GanSection::default(),
            output_dir: PathBuf::from("results"),
            deterministic: true,
        }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn rename_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument { name, reason } => invalid(format!("{prefix}{name}"), reason),
        other => other,
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML source.
    pub fn from_toml(src: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            Error::ConfigParse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a bundled preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let src = preset_source(name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            invalid("preset", format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })?;
        Self::from_toml(src)
    }

    /// Fills dataset-dependent defaults so the echo shows effective values.
    pub fn resolve(&mut self) {
        let d = &mut self.data;
        let image = !matches!(self.dataset, DatasetPreset::Gauss2d);
        if image {
            d.downsample.get_or_insert(self.dataset == DatasetPreset::MnistDesk);
            if self.dataset == DatasetPreset::MnistDesk && d.cap_per_class.is_none() {
                d.cap_per_class = Some(500);
            }
        }
        match self.dataset {
            DatasetPreset::MnistFull | DatasetPreset::MnistDesk => {
                d.mnist_dir.get_or_insert_with(|| PathBuf::from("data/mnist"));
            }
            DatasetPreset::Cifar10Stretch => {
                d.cifar_dir.get_or_insert_with(|| PathBuf::from("data/cifar-10-batches-bin"));
            }
            DatasetPreset::Gauss2d => {}
        }
        if let GanModel::Mlp { tanh_output, .. } = &mut self.gan.model {
            tanh_output.get_or_insert(image);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "at least one strategy is required"));
        }
        if self.classes_per_increment == 0 {
            return Err(invalid("classes_per_increment", "must be >= 1"));
        }
        if let Some(order) = &self.class_order {
            if order.is_empty() || order.iter().any(Vec::is_empty) {
                return Err(invalid("class_order", "increments must be non-empty"));
            }
        }
        let g = &self.data.gauss;
        if g.num_classes < 2 || g.train_per_class == 0 || g.test_per_class == 0 {
            return Err(invalid("data.gauss", "needs >= 2 classes and >= 1 sample per class"));
        }
        if !(g.sigma > 0.0) {
            return Err(invalid("data.gauss.sigma", format!("{} must be > 0", g.sigma)));
        }
        if self.data.cap_per_class == Some(0) {
            return Err(invalid("data.cap_per_class", "must be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature", format!("{} must be > 0", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", format!("{} outside [0, 1]", self.alpha)));
        }
        let shape = self.input_shape();
        if shape.len() != 3 {
            if self.classifier == ClassifierSpec::SmallCnn {
                return Err(invalid("classifier.kind", "small_cnn needs image data"));
            }
            if self.gan.model == GanModel::Dcgan {
                return Err(invalid("gan.model", "dcgan needs image data"));
            }
        }
        let inc = self.increment_config(&shape, 0);
        inc.classifier.embed_dim().map_err(|e| rename_field("classifier.", e))?;
        inc.train.validate().map_err(|e| rename_field("train.", e))?;
        inc.gan.validate().map_err(|e| rename_field("gan.", e))?;
        if self
            .strategies
            .iter()
            .any(|s| s.kind == StrategyKind::Icarl)
            && self.budget == 0
        {
            return Err(invalid("budget", "must be >= 1"));
        }
        Ok(())
    }

    /// Per-sample input shape implied by the dataset settings.
    pub fn input_shape(&self) -> Vec<usize> {
        let half = |n: usize| if self.data.downsample.unwrap_or(false) { n / 2 } else { n };
        match self.dataset {
            DatasetPreset::MnistFull | DatasetPreset::MnistDesk => vec![1, half(28), half(28)],
            DatasetPreset::Cifar10Stretch => vec![3, half(32), half(32)],
            DatasetPreset::Gauss2d => vec![2],
        }
    }

    pub fn increment_config(&self, input_shape: &[usize], seed: u64) -> IncrementConfig {
        IncrementConfig {
            classifier: self.classifier.arch(input_shape),
            train: (&self.train).into(),
            gan: GanTrainConfig {
                arch: self.gan.arch(input_shape),
                epochs: self.gan.epochs,
                batch_size: self.gan.batch_size,
                schedule: self.gan.schedule.clone(),
                optimizer: self.gan.optimizer,
                seed,
            },
            temperature: self.temperature,
            alpha: self.alpha,
            k: self.k,
            budget: self.budget,
            warm_start: self.warm_start,
            moe_means: self.moe_means,
            seed,
        }
    }

    /// Every effective value, as recorded in `summary.json`.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut v {
            m.insert("input_shape".into(), json!(self.input_shape()));
        }
        v
    }

    /// The output directory after applying [`OUTPUT_ROOT_ENV`].
    pub fn effective_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }

    /// `(train, test)` for the configured dataset.
    pub fn load_data(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let d = &self.data;
        let (train, test) = match self.dataset {
            DatasetPreset::Gauss2d => {
                let g = &d.gauss;
                let layout = MeansLayout::Circle { radius: g.radius };
                let train = synth_gaussians(g.num_classes, g.train_per_class, &layout, g.sigma, g.seed)?;
                let test_seed = rng::derive_seed(g.seed, "gauss-test", 0);
                let test = synth_gaussians(g.num_classes, g.test_per_class, &layout, g.sigma, test_seed)?;
                return Ok((train, test));
            }
            DatasetPreset::MnistFull | DatasetPreset::MnistDesk => {
                let dir = d.mnist_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"));
                (load_mnist(&dir, MnistSplit::Train)?, load_mnist(&dir, MnistSplit::Test)?)
            }
            DatasetPreset::Cifar10Stretch => {
                let dir = d.cifar_dir.clone().unwrap_or_else(|| PathBuf::from("data/cifar-10-batches-bin"));
                let read = |name: &str| -> Result<LabeledDataset> {
                    let p = dir.join(name);
                    parse_cifar10_binary(&std::fs::read(&p).map_err(|e| Error::io(p, e))?)
                };
                let mut train = read("data_batch_1.bin")?;
                for i in 2..=5 {
                    train = train.concat(&read(&format!("data_batch_{i}.bin"))?)?;
                }
                (train, read("test_batch.bin")?)
            }
        };
        let train = match d.cap_per_class {
            Some(n) => train.cap_per_class(n),
            None => train,
        };
        if d.downsample.unwrap_or(false) {
            Ok((train.downsample2x()?, test.downsample2x()?))
        } else {
            Ok((train, test))
        }
    }

    pub fn stream(&self, train: &LabeledDataset) -> Result<IncrementStream> {
        match &self.class_order {
            Some(order) => split_with_order(train, order).map_err(|e| rename_field("class_order.", e)),
            None => split_incremental(train, self.classes_per_increment, self.split_seed),
        }
    }

    /// Distinct training procedures in first-mention order with their rules.
    pub fn kinds(&self) -> Vec<(StrategyKind, Vec<Rule>)> {
        let mut out: Vec<(StrategyKind, Vec<Rule>)> = Vec::new();
        for s in &self.strategies {
            match out.iter_mut().find(|(k, _)| *k == s.kind) {
                Some((_, rules)) if !rules.contains(&s.rule) => rules.push(s.rule),
                Some(_) => {}
                None => out.push((s.kind, vec![s.rule])),
            }
        }
        out
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&src)
}

/// Loads `arg` as a file path, or as a bundled preset name when no such
/// file exists.
pub fn load_config_or_preset(arg: &str) -> Result<ExperimentConfig> {
    let p = Path::new(arg);
    if !p.exists() && preset_source(arg).is_some() {
        return ExperimentConfig::preset(arg);
    }
    load_config(p)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    /// In config order.
    pub results: Vec<ProtocolResult>,
    pub bias: Vec<RunBias>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn result(&self, spec: StrategySpec) -> Option<&ProtocolResult> {
        self.results.iter().find(|r| r.strategy == spec)
    }
}

/// One line per strategy: final mean and std over seeds, then the
/// per-increment means.
pub fn summary_line(r: &ProtocolResult) -> String {
    let curve: Vec<String> = r.mean.iter().map(|m| format!("{:.1}", m * 100.0)).collect();
    format!(
        "{:<28} final {:5.1}% +- {:4.1} over {} seed(s)  [{}]",
        r.strategy.name(),
        r.final_mean() * 100.0,
        r.final_std() * 100.0,
        r.seeds.len(),
        curve.join(", ")
    )
}

/// Runs every configured strategy over all seeds, writes the result files to
/// `out_dir` and prints a summary line per strategy to `log`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, log: &mut dyn Write) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (train, test) = cfg.load_data()?;
    let stream = cfg.stream(&train)?;
    let seen = stream.all_classes();
    let test = test.restrict(&seen);
    let shape = train
        .input_shape()
        .ok_or(Error::EmptyDataset)?
        .to_vec();
    let inc_cfg = cfg.increment_config(&shape, 0);
    let mut by_spec: BTreeMap<StrategySpec, ProtocolResult> = BTreeMap::new();
    let mut bias = Vec::new();
    let mut timings = serde_json::Map::new();
    for (kind, rules) in cfg.kinds() {
        let t = Instant::now();
        let kr = run_protocol_rules(kind, &rules, &stream, &test, &cfg.seeds, &inc_cfg).map_err(|e| Error::Strategy {
            strategy: kind.name().to_string(),
            source: Box::new(e),
        })?;
        timings.insert(kind.name().into(), json!(t.elapsed().as_secs_f64()));
        for (seed, logs) in &kr.logs {
            if logs.iter().any(|l| l.soft.is_some()) {
                bias.push(RunBias {
                    strategy: kind.name().to_string(),
                    seed: *seed,
                    report: bias_report(logs),
                });
            }
        }
        for r in kr.results {
            let _ = writeln!(log, "{}", summary_line(&r));
            by_spec.insert(r.strategy, r);
        }
    }
    let results: Vec<ProtocolResult> = cfg.strategies.iter().filter_map(|s| by_spec.remove(s)).collect();
    let mut echo = cfg.echo();
    if !cfg.deterministic {
        if let Value::Object(m) = &mut echo {
            m.insert("wall_clock_seconds".into(), Value::Object(timings));
        }
    }
    let files = emit_outputs(&results, &bias, &echo, out_dir)?;
    Ok(ExperimentOutcome { results, bias, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.dataset, DatasetPreset::MnistFull);
        assert_eq!(c.strategies.len(), 7);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.train.batch_size, 100);
        assert_eq!(c.train.epochs, 15);
        assert_eq!(c.train.schedule.lr_at(12), 2.0 * 0.2 * 0.2);
        assert_eq!(c.gan.epochs, 20);
        assert_eq!(c.gan.schedule.decay_epochs, vec![11, 16]);
    }

    #[test]
    fn alpha_out_of_range_names_alpha() {
        match ExperimentConfig::from_toml("alpha = 1.5") {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "alpha"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_positive_temperature_names_temperature() {
        match ExperimentConfig::from_toml("temperature = 0.0") {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "temperature"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("seeds = []"),
            Err(Error::ConfigInvalid { field, .. }) if field == "seeds"
        ));
    }

    #[test]
    fn parse_errors_carry_position() {
        match ExperimentConfig::from_toml("seeds = [0]\nalpha = \n") {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_toml("strategies = [\"finetune\", \"bogus\"]") {
            Err(Error::ConfigParse { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::from_toml("no_such_field = 1"),
            Err(Error::ConfigParse { .. })
        ));
    }

    #[test]
    fn explicit_class_order_is_honored() {
        let src = "dataset = \"gauss2d\"\nclass_order = [[7, 8], [5, 9], [4, 6], [0, 2], [1, 3]]\n";
        let err = ExperimentConfig::from_toml(src).unwrap_err();
        assert!(err.to_string().contains("classifier.kind"), "{err}");
        let src = format!("{src}[classifier]\nkind = \"mlp\"\nhidden = [8]\n[gan.model]\nkind = \"mlp\"\nhidden = [8]\n");
        let c = ExperimentConfig::from_toml(&src).unwrap();
        let (train, _) = c.load_data().unwrap();
        let s = c.stream(&train).unwrap();
        assert_eq!(s.class_order, vec![vec![7, 8], vec![5, 9], vec![4, 6], vec![0, 2], vec![1, 3]]);
        assert_eq!(s.increments[0].class_set(), &[7, 8]);
    }

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            assert_eq!(c.name, name);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn echo_has_every_section() {
        let c = ExperimentConfig::preset("desk-mnist").unwrap();
        let e = c.echo();
        for key in ["temperature", "alpha", "k", "seeds", "dataset", "name", "train", "gan", "classifier", "data"] {
            assert!(e.get(key).is_some(), "{key}");
        }
        assert_eq!(e["data"]["cap_per_class"], json!(500));
    }

    #[test]
    fn kinds_group_rules() {
        let c = ExperimentConfig::from_toml(
            "strategies = [\"ac-distillation-moe\", \"finetune\", \"ac-distillation-tc\"]",
        )
        .unwrap();
        assert_eq!(
            c.kinds(),
            vec![
                (StrategyKind::AcDistillation, vec![Rule::Moe, Rule::Tc]),
                (StrategyKind::Finetune, vec![Rule::Tc])
            ]
        );
    }
}
