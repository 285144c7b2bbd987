use std::collections::BTreeMap;

use crate::classify::{compute_class_means, herd_select, ClassMeans, ExemplarSet, MeanProvenance};
use crate::data::LabeledDataset;
use crate::diffcore::Tensor;
use crate::distill::{extend_soft, make_soft_dataset, LogitScorer, SoftDataset};
use crate::error::{Error, Result};
use crate::gan::{train_acgan_ordered, GanBundle};
use crate::models::{
    train_classifier, AccessLog, ClassifierModel, LossSelector, Origin, TrainItem, TrainSummary, TrainingSet,
};
use crate::rng;

use super::{IncrementConfig, IncrementLog, IncrementState, MoeMeanSource, SoftRecord, StrategyKind};

/// Appends `k` samples of every old class, drawn from `gan`, after the
/// samples of `d`. With no old classes `d` is returned unchanged.
pub fn augment_with_generated(
    d: &LabeledDataset,
    gan: Option<&GanBundle>,
    old_classes: &[usize],
    k: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if old_classes.is_empty() {
        return Ok(d.clone());
    }
    let gan = gan.ok_or(Error::MissingGenerator)?;
    let mut inputs = d.inputs().to_vec();
    let mut labels = d.labels().to_vec();
    for &c in old_classes {
        inputs.extend(gan.sample(c, k, rng::derive_seed(seed, "class", c as u64))?);
        labels.extend(std::iter::repeat_n(c, k));
    }
    let declared: Vec<usize> = d.class_set().iter().chain(old_classes).copied().collect();
    LabeledDataset::new(inputs, labels, &declared, d.normalization().clone())
}

/// Shared bookkeeping for one increment.
struct Step {
    increment: usize,
    old: Vec<usize>,
    new: Vec<usize>,
    all: Vec<usize>,
}

fn begin(state: &IncrementState, d_new: &LabeledDataset, cfg: &IncrementConfig) -> Result<Step> {
    cfg.validate()?;
    if d_new.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let overlap: Vec<usize> = d_new
        .class_set()
        .iter()
        .copied()
        .filter(|c| state.seen_classes.contains(c))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::ClassOverlap(overlap));
    }
    let old = state.seen_classes.clone();
    let new = d_new.class_set().to_vec();
    let all = old.iter().chain(&new).copied().collect();
    Ok(Step {
        increment: state.logs.len() + 1,
        old,
        new,
        all,
    })
}

/// The student for this increment: the previous classifier with a grown head
/// when warm-starting, otherwise a fresh one over all classes.
fn student(state: &IncrementState, step: &Step, cfg: &IncrementConfig, warm: bool) -> Result<ClassifierModel> {
    let mut r = rng::derived_rng(cfg.seed, "classifier", step.increment as u64);
    match &state.classifier {
        Some(prev) if warm => {
            let mut m = prev.clone();
            m.grow_head(&step.new, &mut r)?;
            Ok(m)
        }
        _ => ClassifierModel::new(cfg.classifier.clone(), &step.all, &mut r),
    }
}

fn origins(real: usize, total: usize, increment: usize) -> Vec<Origin> {
    (0..total)
        .map(|i| {
            if i < real {
                Origin::Real { increment }
            } else {
                Origin::Generated { increment }
            }
        })
        .collect()
}

fn hard_items(d: &LabeledDataset, origins: &[Origin]) -> TrainingSet {
    TrainingSet {
        items: d
            .iter()
            .zip(origins)
            .map(|((x, y), &origin)| TrainItem {
                input: x.clone(),
                hard: Some(y),
                soft: None,
                origin,
            })
            .collect(),
    }
}

/// Attaches soft targets, reordered to the student head.
fn with_soft(mut set: TrainingSet, soft: &SoftDataset, head: &[usize], keep_hard: bool) -> Result<TrainingSet> {
    for (item, s) in set.items.iter_mut().zip(&soft.items) {
        item.soft = Some(extend_soft(&s.label, &soft.class_support, head)?);
        if !keep_hard {
            item.hard = None;
        }
    }
    Ok(set)
}

fn soft_record(soft: &SoftDataset, item_classes: &[usize]) -> SoftRecord {
    SoftRecord {
        source: soft.source,
        temperature: soft.temperature,
        class_support: soft.class_support.clone(),
        item_classes: item_classes.to_vec(),
        labels: soft.items.iter().map(|s| s.label.clone()).collect(),
    }
}

fn train(model: &mut ClassifierModel, set: &TrainingSet, loss: LossSelector, cfg: &IncrementConfig, inc: usize) -> Result<TrainSummary> {
    train_classifier(model, set, &loss, &cfg.train, cfg.seed_for("train", inc))
}

fn means_from(model: &ClassifierModel, d: &LabeledDataset, provenance: MeanProvenance) -> Result<ClassMeans> {
    let groups: BTreeMap<usize, Vec<Tensor>> = d
        .by_class()
        .into_iter()
        .map(|(c, xs)| (c, xs.into_iter().cloned().collect()))
        .collect();
    compute_class_means(model, &groups, provenance)
}

fn finish(
    mut state: IncrementState,
    step: Step,
    model: ClassifierModel,
    log: IncrementLog,
) -> Result<IncrementState> {
    for &c in &step.new {
        state.class_arrival.insert(c, step.increment);
    }
    state.seen_classes = step.all;
    state.classifier = Some(model);
    state.logs.push(log);
    state.check_invariants()?;
    Ok(state)
}

fn base_log(step: &Step, d_new: &LabeledDataset) -> IncrementLog {
    IncrementLog {
        increment: step.increment,
        old_classes: step.old.clone(),
        new_classes: step.new.clone(),
        real_count: d_new.len(),
        generated_count: 0,
        k: 0,
        access: AccessLog::default(),
        soft: None,
        gan_init_checksum: None,
        gan_checksum: None,
        epoch_losses: Vec::new(),
    }
}

/// Grows the head and trains on the new data only with the plain loss.
pub fn increment_finetune(state: IncrementState, d_new: &LabeledDataset, cfg: &IncrementConfig) -> Result<IncrementState> {
    let step = begin(&state, d_new, cfg)?;
    let mut model = student(&state, &step, cfg, true)?;
    let set = hard_items(d_new, &origins(d_new.len(), d_new.len(), step.increment));
    let summary = train(&mut model, &set, LossSelector::Plain, cfg, step.increment)?;
    let mut log = base_log(&step, d_new);
    log.access = summary.access;
    log.epoch_losses = summary.epoch_losses;
    let mut state = state;
    state.means = None;
    finish(state, step, model, log)
}

/// Distillation from the old classifier on the new data only.
pub fn increment_lwf(state: IncrementState, d_new: &LabeledDataset, cfg: &IncrementConfig) -> Result<IncrementState> {
    let step = begin(&state, d_new, cfg)?;
    let mut model = student(&state, &step, cfg, cfg.warm_start_for(StrategyKind::Lwf))?;
    let set = hard_items(d_new, &origins(d_new.len(), d_new.len(), step.increment));
    let mut log = base_log(&step, d_new);
    let summary = match &state.classifier {
        None => train(&mut model, &set, LossSelector::Plain, cfg, step.increment)?,
        Some(teacher) => {
            let soft = make_soft_dataset(teacher, d_new.inputs(), cfg.temperature, teacher.scorer_classes())?;
            let set = with_soft(set, &soft, model.head_classes(), true)?;
            log.soft = Some(soft_record(&soft, d_new.labels()));
            let loss = LossSelector::ModelDistillation {
                alpha: cfg.alpha,
                temperature: cfg.temperature,
            };
            train(&mut model, &set, loss, cfg, step.increment)?
        }
    };
    log.access = summary.access;
    log.epoch_losses = summary.epoch_losses;
    let mut state = state;
    state.means = None;
    finish(state, step, model, log)
}

fn generative(
    kind: StrategyKind,
    mut state: IncrementState,
    d_new: &LabeledDataset,
    cfg: &IncrementConfig,
) -> Result<IncrementState> {
    let step = begin(&state, d_new, cfg)?;
    let inc = step.increment;
    let mut log = base_log(&step, d_new);

    // generate old classes with the previous generator, then discard it
    let has_old = state.classifier.is_some();
    let k = if has_old { cfg.k.resolve(d_new) } else { 0 };
    let d = if has_old {
        augment_with_generated(d_new, state.gan.as_ref(), &step.old, k, cfg.seed_for("sample", inc))?
    } else {
        d_new.clone()
    };
    state.gan = None;
    log.k = k;
    log.generated_count = d.len() - d_new.len();
    let item_origins = origins(d_new.len(), d.len(), inc);

    // fresh AC-GAN on the augmented data
    let mut gan_cfg = cfg.gan.clone();
    gan_cfg.seed = cfg.seed_for("gan", inc);
    log.gan_init_checksum = Some(GanBundle::init(gan_cfg.arch.clone(), &step.all, gan_cfg.seed)?.checksum());
    let (gan, _) = train_acgan_ordered(&d, &step.all, &gan_cfg)?;
    log.gan_checksum = Some(gan.checksum());
    for o in &item_origins {
        log.access.record_inputs(*o, gan_cfg.epochs as u64);
    }

    let mut model = student(&state, &step, cfg, cfg.warm_start_for(kind))?;
    let set = hard_items(&d, &item_origins);
    let summary = match (&state.classifier, kind) {
        (None, _) => train(&mut model, &set, LossSelector::Plain, cfg, inc)?,
        (Some(teacher), StrategyKind::ModelDistillation) => {
            let soft = make_soft_dataset(teacher, d.inputs(), cfg.temperature, teacher.scorer_classes())?;
            let set = with_soft(set, &soft, model.head_classes(), true)?;
            log.soft = Some(soft_record(&soft, d.labels()));
            let loss = LossSelector::ModelDistillation {
                alpha: cfg.alpha,
                temperature: cfg.temperature,
            };
            train(&mut model, &set, loss, cfg, inc)?
        }
        (Some(_), _) => {
            let soft = make_soft_dataset(&gan, d.inputs(), cfg.temperature, &step.all)?;
            let set = with_soft(set, &soft, model.head_classes(), false)?;
            log.soft = Some(soft_record(&soft, d.labels()));
            let loss = LossSelector::AcDistillation {
                temperature: cfg.temperature,
            };
            train(&mut model, &set, loss, cfg, inc)?
        }
    };
    log.access.merge(&summary.access);
    log.epoch_losses = summary.epoch_losses;

    state.means = Some(match cfg.moe_means {
        MoeMeanSource::Generated => {
            let provenance = if has_old {
                MeanProvenance::GeneratedMean
            } else {
                MeanProvenance::TrueMean
            };
            means_from(&model, &d, provenance)?
        }
        MoeMeanSource::Real => {
            let archive = match state.real_archive.take() {
                Some(a) => a.concat(d_new)?,
                None => d_new.clone(),
            };
            for (_, y) in archive.iter() {
                let origin = Origin::Real {
                    increment: state.class_arrival.get(&y).copied().unwrap_or(inc),
                };
                log.access.record_inputs(origin, 1);
            }
            let m = means_from(&model, &archive, MeanProvenance::TrueMean)?;
            state.real_archive = Some(archive);
            m
        }
    });
    state.gan = Some(gan);
    finish(state, step, model, log)
}

/// Augment with generated samples, train a new AC-GAN, then distill from the
/// previous classifier with the weighted hard/soft loss.
pub fn increment_model_distillation(
    state: IncrementState,
    d_new: &LabeledDataset,
    cfg: &IncrementConfig,
) -> Result<IncrementState> {
    generative(StrategyKind::ModelDistillation, state, d_new, cfg)
}

/// Augment with generated samples, train a new AC-GAN, then train on the
/// soft targets of its auxiliary head over all classes. Hard labels are not
/// used after the first increment.
pub fn increment_ac_distillation(
    state: IncrementState,
    d_new: &LabeledDataset,
    cfg: &IncrementConfig,
) -> Result<IncrementState> {
    generative(StrategyKind::AcDistillation, state, d_new, cfg)
}

/// Exemplar rehearsal with herding and distillation from the previous
/// classifier. Stores real samples.
pub fn increment_exemplar_rehearsal(
    mut state: IncrementState,
    d_new: &LabeledDataset,
    cfg: &IncrementConfig,
) -> Result<IncrementState> {
    let step = begin(&state, d_new, cfg)?;
    let inc = step.increment;
    if cfg.budget < step.all.len() {
        return Err(Error::BudgetTooSmall {
            budget: cfg.budget,
            classes: step.all.len(),
        });
    }
    let per_class = cfg.budget / step.all.len();
    let mut exemplars = state.exemplars.take().unwrap_or_else(|| ExemplarSet::new(per_class));

    let mut inputs = d_new.inputs().to_vec();
    let mut labels = d_new.labels().to_vec();
    let mut item_origins = origins(d_new.len(), d_new.len(), inc);
    for (&c, xs) in &exemplars.per_class {
        let increment = state.class_arrival[&c];
        inputs.extend(xs.iter().cloned());
        labels.extend(std::iter::repeat_n(c, xs.len()));
        item_origins.extend(std::iter::repeat_n(Origin::Real { increment }, xs.len()));
    }
    let d = LabeledDataset::new(inputs, labels, &step.all, d_new.normalization().clone())?;

    let mut model = student(&state, &step, cfg, cfg.warm_start_for(StrategyKind::Icarl))?;
    let set = hard_items(&d, &item_origins);
    let mut log = base_log(&step, d_new);
    let summary = match &state.classifier {
        None => train(&mut model, &set, LossSelector::Plain, cfg, inc)?,
        Some(teacher) => {
            let soft = make_soft_dataset(teacher, d.inputs(), cfg.temperature, teacher.scorer_classes())?;
            let set = with_soft(set, &soft, model.head_classes(), true)?;
            log.soft = Some(soft_record(&soft, d.labels()));
            let loss = LossSelector::ModelDistillation {
                alpha: cfg.alpha,
                temperature: cfg.temperature,
            };
            train(&mut model, &set, loss, cfg, inc)?
        }
    };
    log.access = summary.access;
    log.epoch_losses = summary.epoch_losses;

    exemplars.reduce(per_class);
    for (c, xs) in d_new.by_class() {
        let xs: Vec<Tensor> = xs.into_iter().cloned().collect();
        let m = per_class.min(xs.len());
        exemplars.insert(c, herd_select(&model, &xs, m)?);
    }
    state.means = Some(exemplars.means(&model)?);
    state.exemplars = Some(exemplars);
    finish(state, step, model, log)
}

/// Dispatches one increment to the procedure of `kind`.
pub fn run_increment(
    kind: StrategyKind,
    state: IncrementState,
    d_new: &LabeledDataset,
    cfg: &IncrementConfig,
) -> Result<IncrementState> {
    match kind {
        StrategyKind::Finetune => increment_finetune(state, d_new, cfg),
        StrategyKind::Lwf => increment_lwf(state, d_new, cfg),
        StrategyKind::Icarl => increment_exemplar_rehearsal(state, d_new, cfg),
        StrategyKind::ModelDistillation => increment_model_distillation(state, d_new, cfg),
        StrategyKind::AcDistillation => increment_ac_distillation(state, d_new, cfg),
    }
    .map_err(|e| Error::Strategy {
        strategy: kind.name().to_string(),
        source: Box::new(e),
    })
}
