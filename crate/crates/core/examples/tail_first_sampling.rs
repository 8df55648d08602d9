//! One selection step: picks go to the class with the fewest labels so far,
//! taking its most uncertain pseudo-labeled candidate.

use std::collections::HashMap;

use ndarray::array;
use tailfirst::strategies::{select_tfs, PoolScores};
use tailfirst::{ClassDistribution, CountUpdate, Result, SelectionRequest};

fn main() -> Result<()> {
    let ids = vec![10, 11, 12, 13, 14, 15];
    let proba = array![
        [0.8, 0.1, 0.1],
        [0.5, 0.3, 0.2],
        [0.2, 0.7, 0.1],
        [0.3, 0.4, 0.3],
        [0.1, 0.2, 0.7],
        [0.3, 0.3, 0.4],
    ];
    let scores = PoolScores::from_proba(ids.clone(), proba)?;
    let truth: HashMap<u64, usize> = [(10, 0), (11, 1), (12, 1), (13, 1), (14, 2), (15, 0)].into();
    let req = SelectionRequest {
        budget: 4,
        rng_seed: 0,
        labeled_counts: ClassDistribution::new(vec![5, 1, 3]),
        candidate_ids: ids,
    };

    let oracle = select_tfs(&scores, &req, CountUpdate::OracleLabel, Some(&truth))?;
    let pseudo = select_tfs(&scores, &req, CountUpdate::PseudoLabel, None)?;
    println!("counts {:?}", req.labeled_counts.counts());
    println!("oracle-label updates: {oracle:?}");
    println!("pseudo-label updates: {pseudo:?}");
    Ok(())
}
