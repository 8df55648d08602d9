use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, Axis};
use rand::Rng;
use tailfirst::harness::{evaluate, run_seed, ExperimentConfig, TaskData};
use tailfirst::seed::{self, Stream};
use tailfirst::synth::{generate_task, SynthSpec};
use tailfirst::{AdaptationKind, AdaptedModel, LinearProbe, PrototypeModel, Strategy, TrainConfig};

fn tiny(seed: u64) -> SynthSpec {
    SynthSpec {
        num_classes: 3,
        dim: 4,
        pool_size: 30,
        test_per_class: 6,
        retrieved_max: 4,
        seed,
        ..SynthSpec::default()
    }
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Random sampling without retrieval, written out step by step.
fn reference_random_loop(task: &TaskData, cfg: &ExperimentConfig, run_seed: u64) -> Vec<(Vec<u64>, f64, usize)> {
    let pool = &task.train;
    let k = pool.num_classes();
    let truth: BTreeMap<u64, usize> = pool
        .ids()
        .iter()
        .copied()
        .zip(pool.labels().unwrap().iter().copied())
        .collect();

    let mut rng = seed::rng(seed::derive(run_seed, Stream::Init, 0));
    let mut labeled: BTreeMap<u64, usize> = BTreeMap::new();
    let mut first = Vec::new();
    for c in 0..k {
        let members: Vec<u64> = truth.iter().filter(|e| *e.1 == c).map(|e| *e.0).collect();
        let id = members[rng.random_range(0..members.len())];
        labeled.insert(id, c);
        first.push(id);
    }

    let fit = |model: &AdaptedModel, labeled: &BTreeMap<u64, usize>, round: usize| {
        let ids: Vec<u64> = labeled.keys().copied().collect();
        let x = pool.subset(&ids).unwrap().features().to_owned();
        let y: Vec<usize> = labeled.values().copied().collect();
        let tc = TrainConfig { seed: seed::derive(run_seed, Stream::Train, round), ..cfg.train.clone() };
        model.train(x.view(), &y, &tc).unwrap()
    };
    let accuracy = |model: &AdaptedModel| {
        let p = model.predict_proba(task.test.features()).unwrap();
        let hits = p
            .axis_iter(Axis(0))
            .zip(task.test.labels().unwrap())
            .filter(|(row, &y)| argmax(*row) == y)
            .count();
        hits as f64 / task.test.len() as f64
    };

    let mut model = fit(&LinearProbe::zeros(k, pool.dim()).into(), &labeled, 0);
    let mut out = vec![(first, accuracy(&model), labeled.len())];
    for round in 1..=cfg.rounds {
        let candidates: Vec<u64> = truth.keys().copied().filter(|id| !labeled.contains_key(id)).collect();
        let mut rng = seed::rng(seed::derive(run_seed, Stream::Select, round));
        let picks: Vec<u64> = rand::seq::index::sample(&mut rng, candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        for &id in &picks {
            labeled.insert(id, truth[&id]);
        }
        model = fit(&model, &labeled, round);
        out.push((picks, accuracy(&model), labeled.len()));
    }
    out
}

#[test]
fn harness_matches_reference_loop() {
    for s in 0..5 {
        let task: TaskData = generate_task(&tiny(s)).unwrap().into();
        let cfg = ExperimentConfig {
            strategy: Strategy::Random,
            adaptation: AdaptationKind::LinearProbe,
            rda_enabled: false,
            rounds: 4,
            train: TrainConfig { epochs: 5, lr_head: 1e-2, ..TrainConfig::default() },
            ..ExperimentConfig::default()
        };
        let records = run_seed(&cfg, &task, 100 + s).unwrap();
        let reference = reference_random_loop(&task, &cfg, 100 + s);
        assert_eq!(records.len(), reference.len());
        for (r, (ids, acc, count)) in records.iter().zip(&reference) {
            let mut got = r.selected_ids.clone();
            let mut want = ids.clone();
            if r.round == 0 {
                got.sort_unstable();
                want.sort_unstable();
            }
            assert_eq!(got, want, "round {}", r.round);
            assert_eq!(r.accuracy, *acc, "round {}", r.round);
            assert_eq!(r.labeled_count, *count);
        }
    }
}

#[test]
fn ids_never_repeat_across_rounds() {
    let spec = SynthSpec { num_classes: 4, dim: 6, pool_size: 120, test_per_class: 5, retrieved_max: 8, ..SynthSpec::default() };
    for strategy in Strategy::ALL {
        for s in 0..3 {
            let task: TaskData = generate_task(&SynthSpec { seed: s, ..spec.clone() }).unwrap().into();
            let cfg = ExperimentConfig {
                strategy,
                rounds: 5,
                train: TrainConfig { epochs: 3, ..TrainConfig::default() },
                ..ExperimentConfig::default()
            };
            let records = run_seed(&cfg, &task, s).unwrap();
            let mut seen = HashSet::new();
            for r in &records {
                for id in &r.selected_ids {
                    assert!(seen.insert(*id), "{strategy}: id {id} chosen twice");
                    assert!(task.train.contains(*id));
                }
                assert_eq!(r.labeled_count, seen.len());
            }
        }
    }
}

#[test]
fn retrieved_pool_alone_beats_chance() {
    let k = 20;
    let mut accs = Vec::new();
    for s in 0..20 {
        let task = generate_task(&SynthSpec { seed: s, ..SynthSpec::default() }).unwrap();
        let model: AdaptedModel = LinearProbe::zeros(k, task.retrieved.dim()).into();
        let trained = model
            .train(
                task.retrieved.features(),
                task.retrieved.labels().unwrap(),
                &TrainConfig::default(),
            )
            .unwrap();
        accs.push(evaluate(&trained, &task.test).unwrap().accuracy);
    }
    for (s, a) in accs.iter().enumerate() {
        assert!(*a > 2.0 / k as f64, "seed {s}: accuracy {a}");
    }
}

fn separable(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = tailfirst::seed::rng(seed);
    let n = 40;
    let mut x = Array2::zeros((n, 3));
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 2;
        let sign = if c == 0 { 1.0 } else { -1.0 };
        x[[i, 0]] = sign * rng.random_range(0.5..1.5);
        x[[i, 1]] = rng.random_range(-0.3..0.3);
        x[[i, 2]] = rng.random_range(-0.3..0.3);
        y.push(c);
    }
    (x, y)
}

#[test]
fn training_reduces_loss_on_separable_data() {
    for s in 0..20 {
        let (x, y) = separable(s);
        let cfg = TrainConfig { seed: s, ..TrainConfig::default() };
        let models: [AdaptedModel; 2] = [
            LinearProbe::zeros(2, 3).into(),
            PrototypeModel::new(Array2::from_shape_fn((2, 3), |(i, j)| (i + j + 1) as f64), 0.07)
                .unwrap()
                .into(),
        ];
        for m in models {
            let before = m.loss(x.view(), &y).unwrap();
            let after = m.train(x.view(), &y, &cfg).unwrap().loss(x.view(), &y).unwrap();
            assert!(after < before, "seed {s} {:?}: {before} -> {after}", m.kind());
        }
    }
}
