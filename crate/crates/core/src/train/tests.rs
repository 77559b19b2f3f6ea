use super::*;
use crate::cells::{CellConfig, CellKind};
use crate::models::Regressor;
use crate::synth::{generate, SynthConfig};

fn data(n: usize, t: usize, seed: u64) -> Vec<crate::synth::SequenceSample> {
    generate(&SynthConfig {
        n,
        t,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .samples
}

fn run(name: &str) -> RunId {
    RunId {
        name: name.into(),
        seed: 0,
    }
}

fn train_quiet<M: Model>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_epochs(model, train, val, cfg, &run("t"), |_| {}, |_, _| false)
}

fn values(records: &[MetricsRecord]) -> Vec<(usize, Split, Metric, f64)> {
    records.iter().map(|r| (r.epoch, r.split, r.metric, r.value)).collect()
}

#[test]
fn zero_learning_rate_keeps_metrics_flat() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Srehn, 4, 2), 0).unwrap();
    let before = m.store.clone();
    let cfg = TrainConfig {
        batch_size: 3,
        epochs: 3,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let out = train_quiet(&mut m, &data(6, 5, 0), &data(2, 5, 1), &cfg).unwrap();
    assert_eq!(m.store, before);
    let val: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.split == Split::Val && r.metric == Metric::Mse)
        .map(|r| r.value)
        .collect();
    assert_eq!(val.len(), 3);
    assert!(val.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn identical_seeds_reproduce_records() {
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 2,
        seed: 11,
        ..TrainConfig::default()
    };
    let go = || {
        let mut m = Regressor::new(&CellConfig::new(CellKind::Eirehn, 4, 2), 11).unwrap();
        let out = train_quiet(&mut m, &data(8, 6, 0), &data(3, 6, 1), &cfg).unwrap();
        (values(&out.records), m.store)
    };
    let (a, sa) = go();
    let (b, sb) = go();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let mut m = Regressor::new(&CellConfig::new(CellKind::Eirehn, 4, 2), 11).unwrap();
    let other = train_quiet(&mut m, &data(8, 6, 0), &data(3, 6, 1), &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(values(&other.records), a);
}

#[test]
fn best_checkpoint_is_retained() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Rnn, 6, 2), 3).unwrap();
    let val = data(4, 6, 1);
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 6,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let out = train_quiet(&mut m, &data(8, 6, 0), &val, &cfg).unwrap();
    assert_eq!(m.store, out.best);
    let again = evaluate(&m, &val).unwrap().get(Metric::Mse).unwrap();
    assert_eq!(again, out.best_value);
    let best_logged = out
        .records
        .iter()
        .filter(|r| r.split == Split::Val && r.metric == Metric::Mse)
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best_logged, out.best_value);
}

#[test]
fn eval_cadence_and_early_stop() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Rnn, 3, 2), 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 5,
        eval_every: 2,
        ..TrainConfig::default()
    };
    let out = train_quiet(&mut m, &data(4, 4, 0), &data(2, 4, 1), &cfg).unwrap();
    let val_epochs: Vec<usize> = out
        .records
        .iter()
        .filter(|r| r.split == Split::Val)
        .map(|r| r.epoch)
        .collect();
    assert_eq!(val_epochs, vec![2, 4, 5]);

    let out = train_epochs(&mut m, &data(4, 4, 0), &data(2, 4, 1), &cfg, &run("t"), |_| {}, |e, _| e >= 2).unwrap();
    assert_eq!(out.records.last().unwrap().epoch, 2);
}

#[test]
fn divergence_reports_position() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Rnn, 3, 2), 0).unwrap();
    m.store.get_mut(m.head.b).data_mut()[0] = f64::NAN;
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 1,
        ..TrainConfig::default()
    };
    let err = train_quiet(&mut m, &data(4, 4, 0), &[], &cfg).unwrap_err();
    assert!(err.is_numerical());
    assert!(err.to_string().contains("epoch 1, batch 1"), "{err}");
}

#[test]
fn contract_errors() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Rnn, 3, 2), 0).unwrap();
    assert!(train_quiet(&mut m, &[], &[], &TrainConfig::default()).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train_quiet(&mut m, &data(2, 3, 0), &[], &bad).is_err());
    assert!(evaluate(&m, &[]).is_err());
}

#[test]
fn elastic_evaluation_reports_depth() {
    let m = Regressor::new(&CellConfig::new(CellKind::Eirehn, 4, 2), 0).unwrap();
    let rep = evaluate(&m, &data(3, 5, 0)).unwrap();
    let depth = rep.get(Metric::MeanDepth).unwrap();
    let bound = m.cell.elastic_gate().unwrap().depth_upper_bound(&m.store);
    assert!(depth >= 1.0 && depth <= bound.min(10) as f64);
    assert_eq!(rep.stats.depths.len(), 12);
}

#[test]
fn overfits_one_batch() {
    let mut m = Regressor::new(&CellConfig::new(CellKind::Eirehn, 8, 2), 0).unwrap();
    // Long sequences need far more steps to memorize; five steps keep this a smoke test.
    let batch = data(4, 5, 0);
    let refs: Vec<_> = batch.iter().collect();
    let mut adam = AdamState::new(&m.store, AdamConfig::with_lr(0.01));
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        let (grads, stats) = batch_gradients(&m, &refs).unwrap();
        last = stats.value(Metric::Mse).unwrap();
        if last < 1e-4 {
            break;
        }
        adam.update(&mut m.store, &grads).unwrap();
    }
    assert!(last < 1e-4, "final batch mse {last}");
}
