//! Round-based active-learning protocol.
//!
//! Round 0 labels one example per class, optionally merges the capped
//! retrieved set, adapts and evaluates. Each later round scores the unlabeled
//! pool, selects `budget` ids with the configured strategy, labels them with
//! the oracle, re-adapts (warm-started by default) and evaluates.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::adapt::{
    AdaptationKind, AdaptedModel, LinearProbe, PrototypeModel, TrainConfig, DEFAULT_TEMPERATURE,
};
use crate::data::{class_counts, FeaturePool, LabelLedger, RoundRecord};
use crate::error::{Error, Result};
use crate::retrieval::{cap_retrieved, mean_prototypes, CapPolicy, RetrievedSet};
use crate::seed::{self, Stream};
use crate::strategies::{
    argmax, score_pool, select, Labeler, SelectionContext, SelectionRequest, Strategy,
    StrategyConfig,
};
use crate::synth::SynthTask;

/// Simulated annotator backed by held-back ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    labels: HashMap<u64, usize>,
}

impl Oracle {
    /// An oracle answering for every example of a labeled pool.
    pub fn from_pool(pool: &FeaturePool) -> Result<Self> {
        let labels = pool
            .labels()
            .ok_or_else(|| Error::InvalidInput("oracle needs a labeled pool".into()))?;
        Ok(Self {
            labels: pool.ids().iter().copied().zip(labels.iter().copied()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Labeler for Oracle {
    fn label(&self, id: u64) -> Result<usize> {
        self.labels.label(id)
    }
}

/// Round-0 ledger: one oracle label per class, each drawn uniformly from
/// that class's examples.
pub fn init_round0(
    pool: &FeaturePool,
    oracle: &Oracle,
    num_classes: usize,
    seed: u64,
) -> Result<LabelLedger> {
    let mut by_class: Vec<Vec<u64>> = vec![Vec::new(); num_classes];
    let mut ids = pool.ids().to_vec();
    ids.sort_unstable();
    for id in ids {
        let c = oracle.label(id)?;
        if c >= num_classes {
            return Err(Error::InvalidLabel {
                label: c,
                num_classes,
            });
        }
        by_class[c].push(id);
    }
    let mut rng = seed::rng(seed);
    let mut ledger = LabelLedger::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Infeasible(format!(
                "class {c} has no pool examples to seed round 0"
            )));
        }
        ledger.add_oracle(members[rng.random_range(0..members.len())], c, 0)?;
    }
    Ok(ledger)
}

/// Accuracy, macro-F1 and per-class recall.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_accuracy: Vec<f64>,
}

/// Metrics from true and predicted class indices.
///
/// Classes absent from `truth` are left out of the macro-F1 mean and get a
/// per-class accuracy of 0. A class's F1 is 0 when precision and recall are
/// both 0.
pub fn classification_metrics(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    let mut pred = vec![0usize; num_classes];
    for (&y, &p) in truth.iter().zip(predicted) {
        if y >= num_classes || p >= num_classes {
            return Err(Error::InvalidLabel {
                label: y.max(p),
                num_classes,
            });
        }
        actual[y] += 1;
        pred[p] += 1;
        if y == p {
            tp[y] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    let mut per_class_accuracy = vec![0.0; num_classes];
    for k in 0..num_classes {
        if actual[k] == 0 {
            continue;
        }
        present += 1;
        let recall = tp[k] as f64 / actual[k] as f64;
        let precision = if pred[k] == 0 {
            0.0
        } else {
            tp[k] as f64 / pred[k] as f64
        };
        per_class_accuracy[k] = recall;
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / present as f64,
        per_class_accuracy,
    })
}

pub fn evaluate(model: &AdaptedModel, test: &FeaturePool) -> Result<Evaluation> {
    let truth = test
        .labels()
        .ok_or_else(|| Error::InvalidInput("test pool has no labels".into()))?;
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let proba = model.predict_proba(test.features())?;
    let predicted: Vec<usize> = proba.rows().into_iter().map(argmax).collect();
    classification_metrics(truth, &predicted, model.num_classes())
}

/// How the prototype head is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrototypeInit {
    /// Normalized mean of the labeled (and retrieved) training features.
    #[default]
    ClassMeans,
    /// The task's supplied prototype matrix, e.g. class-name text embeddings.
    Supplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Rounds after round 0; records cover rounds `0..=rounds`.
    pub rounds: usize,
    /// Labels per round; `None` means one per class.
    pub budget: Option<usize>,
    pub strategy: Strategy,
    pub adaptation: AdaptationKind,
    pub rda_enabled: bool,
    pub cap: CapPolicy,
    /// Drop corpus images matched under more than one class.
    pub drop_multi_class: bool,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub warm_start: bool,
    pub include_retrieved_in_counts: bool,
    pub strategy_config: StrategyConfig,
    /// Loss weight of each retrieved example relative to an oracle label.
    pub retrieved_weight: f64,
    pub allow_tfs_without_rda: bool,
    pub temperature: f64,
    pub prototype_init: PrototypeInit,
    /// Record wall-clock time per round; off keeps reports byte-reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 6,
            budget: None,
            strategy: Strategy::Tfs,
            adaptation: AdaptationKind::PrototypeCt,
            rda_enabled: true,
            cap: CapPolicy::default(),
            drop_multi_class: false,
            train: TrainConfig::default(),
            seeds: vec![666, 777, 888],
            warm_start: true,
            include_retrieved_in_counts: true,
            strategy_config: StrategyConfig::default(),
            retrieved_weight: 1.0,
            allow_tfs_without_rda: false,
            temperature: DEFAULT_TEMPERATURE,
            prototype_init: PrototypeInit::ClassMeans,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.budget == Some(0) {
            problems.push("budget must be >= 1".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".to_string());
        }
        if self.strategy == Strategy::Tfs && !self.rda_enabled && !self.allow_tfs_without_rda {
            problems.push(
                "strategy tfs needs retrieved data for its class counts; enable rda or set \
                 allow_tfs_without_rda"
                    .to_string(),
            );
        }
        if !(self.retrieved_weight >= 0.0 && self.retrieved_weight.is_finite()) {
            problems.push(format!(
                "retrieved_weight must be finite and >= 0, got {}",
                self.retrieved_weight
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            problems.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        let frac = self.strategy_config.pcb_fraction;
        if !(frac > 0.0 && frac <= 1.0) {
            problems.push(format!("pcb_fraction must be in (0, 1], got {frac}"));
        }
        if let Err(e) = self.cap.validate() {
            problems.push(e.to_string());
        }
        if let Err(Error::Config(mut p)) = self.train.validate() {
            problems.append(&mut p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Retrieved corpus features plus the matched class lists.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedData {
    pub features: FeaturePool,
    pub set: RetrievedSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    /// Unlabeled pool; its labels are visible only through the oracle.
    pub train: FeaturePool,
    pub test: FeaturePool,
    pub retrieved: Option<RetrievedData>,
    /// Class prototypes for similarity filtering (and optional head init).
    pub prototypes: Option<Array2<f64>>,
}

impl TaskData {
    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }
}

impl From<SynthTask> for TaskData {
    fn from(task: SynthTask) -> Self {
        let k = task.train.num_classes();
        let mut per_class = vec![Vec::new(); k];
        let labels = task.retrieved.labels().expect("synthetic pools are labeled");
        for (&id, &c) in task.retrieved.ids().iter().zip(labels) {
            per_class[c].push(id);
        }
        TaskData {
            train: task.train,
            test: task.test,
            retrieved: Some(RetrievedData {
                features: task.retrieved,
                set: RetrievedSet::new(per_class),
            }),
            prototypes: Some(task.prototypes),
        }
    }
}

struct TrainingSet {
    features: Array2<f64>,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

fn training_set(
    ledger: &LabelLedger,
    train: &FeaturePool,
    retrieved: Option<&FeaturePool>,
    retrieved_weight: f64,
) -> Result<TrainingSet> {
    let dim = train.dim();
    let mut rows = Vec::with_capacity((ledger.oracle_len() + ledger.retrieved_len()) * dim);
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (id, c) in ledger.oracle_entries() {
        let r = train
            .row(id)
            .ok_or_else(|| Error::DataInconsistency(format!("labeled id {id} not in pool")))?;
        rows.extend(r.iter().copied());
        labels.push(c);
        weights.push(1.0);
    }
    if ledger.retrieved_len() > 0 {
        let pool = retrieved.ok_or_else(|| {
            Error::DataInconsistency("ledger has retrieved entries but no retrieved pool".into())
        })?;
        for (id, c) in ledger.retrieved_entries() {
            let r = pool.row(id).ok_or_else(|| {
                Error::DataInconsistency(format!("retrieved id {id} has no feature"))
            })?;
            rows.extend(r.iter().copied());
            labels.push(c);
            weights.push(retrieved_weight);
        }
    }
    let n = labels.len();
    Ok(TrainingSet {
        features: Array2::from_shape_vec((n, dim), rows).expect("n x dim"),
        labels,
        weights,
    })
}

fn initial_model(
    cfg: &ExperimentConfig,
    task: &TaskData,
    set: &TrainingSet,
) -> Result<AdaptedModel> {
    let k = task.num_classes();
    match cfg.adaptation {
        AdaptationKind::LinearProbe => Ok(LinearProbe::zeros(k, task.train.dim()).into()),
        AdaptationKind::PrototypeCt => match (cfg.prototype_init, &task.prototypes) {
            (PrototypeInit::Supplied, Some(p)) => {
                Ok(PrototypeModel::new(p.clone(), cfg.temperature)?.into())
            }
            (PrototypeInit::Supplied, None) => Err(Error::InvalidInput(
                "prototype_init = supplied but the task has no prototypes".into(),
            )),
            (PrototypeInit::ClassMeans, _) => Ok(PrototypeModel::from_class_means(
                set.features.view(),
                &set.labels,
                k,
                cfg.temperature,
            )?
            .into()),
        },
    }
}

fn adapt(
    cfg: &ExperimentConfig,
    model: &AdaptedModel,
    set: &TrainingSet,
    seed: u64,
    round: usize,
) -> Result<AdaptedModel> {
    let train_cfg = TrainConfig {
        seed: seed::derive(seed, Stream::Train, round),
        ..cfg.train.clone()
    };
    let uniform = set.weights.iter().all(|&w| w == 1.0);
    let weights = (!uniform).then_some(set.weights.as_slice());
    model.train_weighted(set.features.view(), &set.labels, weights, &train_cfg)
}

/// The retrieved `(id, class)` pairs that join round 0 after capping.
pub fn prepare_retrieved(cfg: &ExperimentConfig, task: &TaskData) -> Result<Option<RetrievedSet>> {
    if !cfg.rda_enabled {
        return Ok(None);
    }
    let data = task.retrieved.as_ref().ok_or_else(|| {
        Error::InvalidInput("rda is enabled but the task has no retrieved data".into())
    })?;
    if data.set.num_classes() != task.num_classes() {
        return Err(Error::DataInconsistency(format!(
            "retrieved set has {} classes, task has {}",
            data.set.num_classes(),
            task.num_classes()
        )));
    }
    let set = if cfg.drop_multi_class {
        data.set.drop_multi_class()
    } else {
        data.set.clone()
    };
    let prototypes = match &task.prototypes {
        Some(p) => p.clone(),
        None => mean_prototypes(&set, &data.features)?,
    };
    cap_retrieved(&set, &data.features, &prototypes, &cfg.cap).map(Some)
}

/// Runs the protocol for one seed and returns records for rounds `0..=R`.
pub fn run_seed(cfg: &ExperimentConfig, task: &TaskData, seed: u64) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let k = task.num_classes();
    let budget = cfg.budget.unwrap_or(k);
    let oracle = Oracle::from_pool(&task.train)?;
    let retrieved = prepare_retrieved(cfg, task)?;
    let retrieved_pool = task.retrieved.as_ref().map(|r| &r.features);

    let started = Instant::now();
    let elapsed = |t: Instant| if cfg.record_timing { t.elapsed().as_millis() as u64 } else { 0 };

    let mut ledger = init_round0(&task.train, &oracle, k, seed::derive(seed, Stream::Init, 0))
        .map_err(|e| Error::in_round(0, e))?;
    let initial: Vec<u64> = {
        let mut by_class: Vec<(usize, u64)> = ledger.oracle_entries().map(|(id, c)| (c, id)).collect();
        by_class.sort_unstable();
        by_class.into_iter().map(|(_, id)| id).collect()
    };
    if let Some(set) = &retrieved {
        for (id, c) in set.pairs() {
            ledger.add_retrieved(id, c)?;
        }
    }

    let round0 = || -> Result<(AdaptedModel, RoundRecord)> {
        let set = training_set(&ledger, &task.train, retrieved_pool, cfg.retrieved_weight)?;
        let init = initial_model(cfg, task, &set)?;
        let model = adapt(cfg, &init, &set, seed, 0)?;
        let eval = evaluate(&model, &task.test)?;
        Ok((
            model,
            RoundRecord {
                round: 0,
                selected_ids: initial.clone(),
                accuracy: eval.accuracy,
                macro_f1: eval.macro_f1,
                per_class_accuracy: eval.per_class_accuracy,
                labeled_count: ledger.oracle_len(),
                seed,
                wall_ms: elapsed(started),
            },
        ))
    };
    let (mut model, record) = round0().map_err(|e| Error::in_round(0, e))?;
    let mut records = vec![record];

    for round in 1..=cfg.rounds {
        let started = Instant::now();
        let mut step = || -> Result<RoundRecord> {
            let candidates: Vec<u64> = {
                let mut c: Vec<u64> = task
                    .train
                    .ids()
                    .iter()
                    .copied()
                    .filter(|&id| !ledger.is_labeled(id))
                    .collect();
                c.sort_unstable();
                c
            };
            if candidates.len() < budget {
                return Err(Error::Budget(format!(
                    "{} unlabeled examples left, budget is {budget}",
                    candidates.len()
                )));
            }
            let unlabeled = task.train.subset(&candidates)?;
            let scores = score_pool(&model, &unlabeled)?;
            let labeled_ids: Vec<u64> = ledger.oracle_entries().map(|(id, _)| id).collect();
            let req = SelectionRequest {
                budget,
                rng_seed: seed::derive(seed, Stream::Select, round),
                labeled_counts: class_counts(&ledger, cfg.include_retrieved_in_counts, k)?,
                candidate_ids: candidates,
            };
            let ctx = SelectionContext {
                features: &task.train,
                labeled_ids: &labeled_ids,
                scores: &scores,
                oracle: Some(&oracle),
            };
            let picks = select(cfg.strategy, &ctx, &req, &cfg.strategy_config)?;
            for &id in &picks {
                ledger.add_oracle(id, oracle.label(id)?, round)?;
            }
            let set = training_set(&ledger, &task.train, retrieved_pool, cfg.retrieved_weight)?;
            let start_from = if cfg.warm_start {
                model.clone()
            } else {
                initial_model(cfg, task, &set)?
            };
            model = adapt(cfg, &start_from, &set, seed, round)?;
            let eval = evaluate(&model, &task.test)?;
            Ok(RoundRecord {
                round,
                selected_ids: picks,
                accuracy: eval.accuracy,
                macro_f1: eval.macro_f1,
                per_class_accuracy: eval.per_class_accuracy,
                labeled_count: ledger.oracle_len(),
                seed,
                wall_ms: elapsed(started),
            })
        };
        records.push(step().map_err(|e| Error::in_round(round, e))?);
    }
    Ok(records)
}

/// Runs every configured seed (in parallel) and returns all records ordered
/// by seed position, then round.
pub fn run_experiment(cfg: &ExperimentConfig, task: &TaskData) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let per_seed: Vec<Vec<RoundRecord>> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, task, s))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Mean and sample standard deviation across seeds for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-round summary over all seeds present in `records`.
pub fn summarize(records: &[RoundRecord]) -> Vec<RoundSummary> {
    let max_round = records.iter().map(|r| r.round).max();
    let Some(max_round) = max_round else {
        return Vec::new();
    };
    (0..=max_round)
        .filter_map(|round| {
            let rows: Vec<&RoundRecord> = records.iter().filter(|r| r.round == round).collect();
            if rows.is_empty() {
                return None;
            }
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = rows.iter().map(|r| r.macro_f1).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (macro_f1_mean, macro_f1_std) = mean_std(&f1);
            Some(RoundSummary {
                round,
                runs: rows.len(),
                accuracy_mean,
                accuracy_std,
                macro_f1_mean,
                macro_f1_std,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_task, SynthSpec};

    fn tiny_task(seed: u64) -> TaskData {
        generate_task(&SynthSpec {
            num_classes: 3,
            dim: 4,
            pool_size: 30,
            test_per_class: 4,
            retrieved_max: 6,
            seed,
            ..SynthSpec::default()
        })
        .unwrap()
        .into()
    }

    #[test]
    fn metrics_examples() {
        let e = classification_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((e.accuracy, e.macro_f1), (1.0, 1.0));
        assert_eq!(e.per_class_accuracy, vec![1.0; 3]);

        let e = classification_metrics(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert_eq!(e.accuracy, 0.5);
        // class 0: P = 0.5, R = 1 -> F1 = 2/3; class 1: F1 = 0
        assert!((e.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(e.per_class_accuracy, vec![1.0, 0.0]);

        assert!(classification_metrics(&[], &[], 2).is_err());
    }

    #[test]
    fn absent_classes_excluded_from_macro_mean() {
        let e = classification_metrics(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(e.macro_f1, 1.0);
    }

    #[test]
    fn round0_one_per_class() {
        let task = tiny_task(1);
        let oracle = Oracle::from_pool(&task.train).unwrap();
        let ledger = init_round0(&task.train, &oracle, 3, 5).unwrap();
        assert_eq!(class_counts(&ledger, true, 3).unwrap().counts(), &[1, 1, 1]);
        assert_eq!(ledger, init_round0(&task.train, &oracle, 3, 5).unwrap());
    }

    #[test]
    fn round0_infeasible_when_class_missing() {
        let task = tiny_task(1);
        let keep: Vec<u64> = task
            .train
            .ids()
            .iter()
            .copied()
            .filter(|&id| task.train.label_of(id) != Some(2))
            .collect();
        let pool = task.train.subset(&keep).unwrap();
        let oracle = Oracle::from_pool(&pool).unwrap();
        assert!(matches!(
            init_round0(&pool, &oracle, 3, 0),
            Err(Error::Infeasible(_))
        ));
    }

    fn quick_cfg(strategy: Strategy, rounds: usize) -> ExperimentConfig {
        ExperimentConfig {
            rounds,
            strategy,
            seeds: vec![1],
            train: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_rounds_gives_single_record() {
        let recs = run_experiment(&quick_cfg(Strategy::Tfs, 0), &tiny_task(2)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].selected_ids.len(), 3);
        assert_eq!(recs[0].labeled_count, 3);
    }

    #[test]
    fn labeled_count_grows_by_budget() {
        for strategy in Strategy::ALL {
            let cfg = ExperimentConfig {
                rda_enabled: false,
                allow_tfs_without_rda: true,
                ..quick_cfg(strategy, 4)
            };
            let recs = run_experiment(&cfg, &tiny_task(3)).unwrap();
            let mut seen = std::collections::HashSet::new();
            for r in &recs {
                assert_eq!(r.labeled_count, 3 * (1 + r.round), "{strategy}");
                for id in &r.selected_ids {
                    assert!(seen.insert(*id), "{strategy}: {id} selected twice");
                }
            }
        }
    }

    #[test]
    fn budget_error_when_pool_runs_out() {
        let cfg = quick_cfg(Strategy::Random, 20);
        let err = run_experiment(&cfg, &tiny_task(3)).unwrap_err();
        assert_eq!(err.class(), "budget");
        assert!(err.to_string().starts_with("round 10"), "{err}");
    }

    #[test]
    fn tfs_without_rda_rejected() {
        let cfg = ExperimentConfig {
            rda_enabled: false,
            ..quick_cfg(Strategy::Tfs, 1)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_records() {
        let cfg = ExperimentConfig {
            seeds: vec![4, 5],
            ..quick_cfg(Strategy::Badge, 2)
        };
        let task = tiny_task(4);
        assert_eq!(
            run_experiment(&cfg, &task).unwrap(),
            run_experiment(&cfg, &task).unwrap()
        );
    }

    #[test]
    fn summary_statistics() {
        let rec = |round, acc| RoundRecord {
            round,
            selected_ids: vec![],
            accuracy: acc,
            macro_f1: acc,
            per_class_accuracy: vec![],
            labeled_count: 0,
            seed: 0,
            wall_ms: 0,
        };
        let s = summarize(&[rec(0, 0.2), rec(0, 0.4), rec(1, 0.5)]);
        assert_eq!(s.len(), 2);
        assert!((s[0].accuracy_mean - 0.3).abs() < 1e-12);
        assert!((s[0].accuracy_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].accuracy_std, 0.0);
    }
}
