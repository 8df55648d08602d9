//! Every strategy selecting from the same scored pool.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use tailfirst::strategies::{score_pool, select, SelectionContext};
use tailfirst::{
    ClassDistribution, FeaturePool, LinearProbe, Result, SelectionRequest, Strategy,
    StrategyConfig,
};

fn main() -> Result<()> {
    let (n, k, d) = (60, 4, 5);
    let mut rng = tailfirst::seed::rng(7);
    let ids: Vec<u64> = (0..n as u64).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let feats = Array2::from_shape_fn((n, d), |(i, j)| {
        let signal = if j == labels[i] { 1.0 } else { 0.0 };
        signal + 0.4 * rng.random_range(-1.0..1.0)
    });
    let pool = FeaturePool::new(ids.clone(), feats, None, k)?.normalized()?;

    let labeled: Vec<u64> = ids[..k].to_vec();
    let candidates: Vec<u64> = ids[k..].to_vec();
    let head = LinearProbe::new(
        Array2::from_shape_fn((k, d), |(c, j)| if c == j { 2.0 } else { 0.0 }),
        ndarray::Array1::zeros(k),
    )?;
    let scores = score_pool(&head.into(), &pool.subset(&candidates)?)?;
    let oracle: HashMap<u64, usize> = ids.iter().map(|&id| (id, labels[id as usize])).collect();
    let ctx = SelectionContext {
        features: &pool,
        labeled_ids: &labeled,
        scores: &scores,
        oracle: Some(&oracle),
    };
    let req = SelectionRequest {
        budget: 6,
        rng_seed: 3,
        labeled_counts: ClassDistribution::new(vec![4, 2, 1, 1]),
        candidate_ids: candidates,
    };
    for strategy in Strategy::ALL {
        let picks = select(strategy, &ctx, &req, &StrategyConfig::default())?;
        let classes: Vec<usize> = picks.iter().map(|id| oracle[id]).collect();
        println!("{strategy:>8}: ids {picks:?} classes {classes:?}");
    }
    Ok(())
}
