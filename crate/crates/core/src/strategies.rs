//! Unlabeled-data selection: Random, Entropy, Coreset (k-center greedy),
//! BADGE (k-means++ seeding on gradient embeddings), the pseudo-class-balance
//! wrapper, and Tail-First Sampling.
//!
//! Every strategy returns exactly `budget` distinct ids drawn from the
//! request's candidates and is a pure function of its inputs and seed.
//! Ranking ties always go to the lower id.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;

use crate::adapt::AdaptedModel;
use crate::data::{ClassDistribution, FeaturePool};
use crate::error::{Error, Result};
use crate::seed;

/// Model outputs over a set of unlabeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    ids: Vec<u64>,
    proba: Array2<f64>,
    entropy: Vec<f64>,
    pseudo_label: Vec<usize>,
    index: HashMap<u64, usize>,
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: ArrayView1<'_, f64>) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    h.clamp(0.0, (p.len() as f64).ln())
}

/// Argmax with ties to the lowest index.
pub fn argmax(p: ArrayView1<'_, f64>) -> usize {
    p.iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > p[best] { k } else { best })
}

impl PoolScores {
    pub fn from_proba(ids: Vec<u64>, proba: Array2<f64>) -> Result<Self> {
        if ids.len() != proba.nrows() {
            return Err(Error::Shape(format!(
                "{} ids for {} probability rows",
                ids.len(),
                proba.nrows()
            )));
        }
        let (entropy, pseudo_label) = proba
            .rows()
            .into_iter()
            .map(|r| (entropy(r), argmax(r)))
            .unzip();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self {
            ids,
            proba,
            entropy,
            pseudo_label,
            index,
        })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn proba(&self) -> &Array2<f64> {
        &self.proba
    }

    pub fn entropy(&self) -> &[f64] {
        &self.entropy
    }

    pub fn pseudo_label(&self) -> &[usize] {
        &self.pseudo_label
    }

    pub fn num_classes(&self) -> usize {
        self.proba.ncols()
    }

    pub fn position(&self, id: u64) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::DataInconsistency(format!("no score for candidate {id}")))
    }
}

const SCORE_CHUNK: usize = 256;

/// Scores every example of `pool` with `model`. Rows are independent, so
/// chunks are scored in parallel and reassembled in pool order.
pub fn score_pool(model: &AdaptedModel, pool: &FeaturePool) -> Result<PoolScores> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty pool".into()));
    }
    let feats = pool.features();
    let n = pool.len();
    let chunks: Vec<Array2<f64>> = (0..n)
        .step_by(SCORE_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + SCORE_CHUNK).min(n);
            model.predict_proba(feats.slice(ndarray::s![start..end, ..]))
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
    let proba = ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| Error::Shape(e.to_string()))?;
    PoolScores::from_proba(pool.ids().to_vec(), proba)
}

/// One round's selection request.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRequest {
    pub budget: usize,
    pub rng_seed: u64,
    pub labeled_counts: ClassDistribution,
    pub candidate_ids: Vec<u64>,
}

impl SelectionRequest {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Budget("budget must be at least 1".into()));
        }
        if self.budget > self.candidate_ids.len() {
            return Err(Error::Budget(format!(
                "budget {} exceeds {} candidates",
                self.budget,
                self.candidate_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.candidate_ids.len());
        if let Some(id) = self.candidate_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidInput(format!("duplicate candidate id {id}")));
        }
        Ok(())
    }

    fn sorted_candidates(&self) -> Vec<u64> {
        let mut c = self.candidate_ids.clone();
        c.sort_unstable();
        c
    }
}

/// Ground-truth labeler consulted during selection.
pub trait Labeler {
    fn label(&self, id: u64) -> Result<usize>;
}

impl Labeler for HashMap<u64, usize> {
    fn label(&self, id: u64) -> Result<usize> {
        self.get(&id)
            .copied()
            .ok_or_else(|| Error::DataInconsistency(format!("oracle has no label for {id}")))
    }
}

/// How Tail-First Sampling updates class counts after each pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountUpdate {
    /// Query the oracle immediately and count the true class.
    #[default]
    OracleLabel,
    /// Count the pick under its pseudo-label.
    PseudoLabel,
}

impl FromStr for CountUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" | "oracle_label" => Ok(CountUpdate::OracleLabel),
            "pseudo" | "pseudo_label" => Ok(CountUpdate::PseudoLabel),
            other => Err(Error::InvalidInput(format!("unknown count update {other:?}"))),
        }
    }
}

/// The `budget` highest-entropy candidates.
pub fn select_entropy(scores: &PoolScores, req: &SelectionRequest) -> Result<Vec<u64>> {
    req.validate()?;
    let mut ranked = req
        .candidate_ids
        .iter()
        .map(|&id| Ok((scores.entropy[scores.position(id)?], id)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(req.budget).map(|(_, id)| id).collect())
}

/// Uniform sample without replacement.
pub fn select_random(req: &SelectionRequest) -> Result<Vec<u64>> {
    req.validate()?;
    let candidates = req.sorted_candidates();
    let mut rng = seed::rng(req.rng_seed);
    Ok(rand::seq::index::sample(&mut rng, candidates.len(), req.budget)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn feature_row(pool: &FeaturePool, id: u64) -> Result<ArrayView1<'_, f64>> {
    pool.row(id)
        .ok_or_else(|| Error::DataInconsistency(format!("no feature for id {id}")))
}

/// k-center greedy: repeatedly take the candidate farthest (Euclidean) from
/// its nearest center, where centers are the labeled ids plus earlier picks.
///
/// Distances are computed on the pool's features as stored; pools used by the
/// harness are unit-normalized at load time.
pub fn select_coreset(
    features: &FeaturePool,
    labeled_ids: &[u64],
    req: &SelectionRequest,
) -> Result<Vec<u64>> {
    req.validate()?;
    if labeled_ids.is_empty() {
        return Err(Error::InvalidInput("coreset needs at least one labeled center".into()));
    }
    let candidates = req.sorted_candidates();
    let cand_rows = candidates
        .iter()
        .map(|&id| feature_row(features, id))
        .collect::<Result<Vec<_>>>()?;
    let centers = labeled_ids
        .iter()
        .map(|&id| feature_row(features, id))
        .collect::<Result<Vec<_>>>()?;
    let mut nearest: Vec<f64> = cand_rows
        .par_iter()
        .map(|x| {
            centers
                .iter()
                .map(|c| sq_dist(*x, *c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(req.budget);
    for _ in 0..req.budget {
        let best = (0..candidates.len())
            .filter(|&i| !taken[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("budget <= candidates");
        taken[best] = true;
        picks.push(candidates[best]);
        let center = cand_rows[best];
        for (i, x) in cand_rows.iter().enumerate() {
            if !taken[i] {
                nearest[i] = nearest[i].min(sq_dist(*x, center));
            }
        }
    }
    Ok(picks)
}

/// Loss-gradient embedding `(p - onehot(argmax p)) ⊗ x`, class-major.
pub fn gradient_embedding(proba: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>) -> Vec<f64> {
    let yhat = argmax(proba);
    let mut g = Vec::with_capacity(proba.len() * x.len());
    for (k, &pk) in proba.iter().enumerate() {
        let coef = pk - if k == yhat { 1.0 } else { 0.0 };
        g.extend(x.iter().map(|&xj| coef * xj));
    }
    g
}

/// k-means++ seeding over gradient embeddings: uniform first pick, then
/// picks proportional to squared distance from the nearest chosen embedding.
/// When every remaining distance is zero the pick is uniform.
pub fn select_badge(
    features: &FeaturePool,
    scores: &PoolScores,
    req: &SelectionRequest,
) -> Result<Vec<u64>> {
    req.validate()?;
    let candidates = req.sorted_candidates();
    let embeddings = candidates
        .iter()
        .map(|&id| {
            let x = feature_row(features, id)?;
            let p = scores.proba.row(scores.position(id)?);
            if x.len() * p.len() == 0 {
                return Err(Error::Shape("empty embedding".into()));
            }
            Ok(gradient_embedding(p, x))
        })
        .collect::<Result<Vec<_>>>()?;
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut rng = seed::rng(req.rng_seed);
    let n = candidates.len();
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut picks = Vec::with_capacity(req.budget);
    for _ in 0..req.budget {
        let remaining: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let total: f64 = remaining.iter().map(|&i| nearest[i]).sum();
        let chosen = if picks.is_empty() || !(total > 0.0 && total.is_finite()) {
            remaining[rng.random_range(0..remaining.len())]
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for &i in &remaining {
                if nearest[i] > 0.0 {
                    chosen = Some(i);
                    acc += nearest[i];
                    if acc > target {
                        break;
                    }
                }
            }
            chosen.expect("positive total implies a positive weight")
        };
        taken[chosen] = true;
        picks.push(candidates[chosen]);
        let center = &embeddings[chosen];
        for i in 0..n {
            if !taken[i] {
                nearest[i] = nearest[i].min(sq(&embeddings[i], center));
            }
        }
    }
    Ok(picks)
}

/// Candidate filter applied before pseudo-class balancing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcbBase {
    #[default]
    Badge,
    Entropy,
    Random,
    /// Keep every candidate.
    All,
}

impl FromStr for PcbBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "badge" => Ok(PcbBase::Badge),
            "entropy" => Ok(PcbBase::Entropy),
            "random" => Ok(PcbBase::Random),
            "all" | "identity" => Ok(PcbBase::All),
            other => Err(Error::InvalidInput(format!("unknown PCB base {other:?}"))),
        }
    }
}

/// Pseudo-class balancing. The base strategy first narrows the candidates to
/// `max(ceil(fraction * n), budget)` ids (computed once per call); picks are
/// then made one at a time from the pseudo-label class with the lowest
/// running count (labeled counts plus picks so far), highest entropy first.
pub fn wrap_pcb(
    base: PcbBase,
    features: &FeaturePool,
    scores: &PoolScores,
    req: &SelectionRequest,
    candidate_fraction: f64,
) -> Result<Vec<u64>> {
    req.validate()?;
    if !(candidate_fraction > 0.0 && candidate_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "candidate fraction {candidate_fraction} outside (0, 1]"
        )));
    }
    let n = req.candidate_ids.len();
    let pool_size = ((candidate_fraction * n as f64).ceil() as usize)
        .max(req.budget)
        .min(n);
    let narrowed = SelectionRequest {
        budget: pool_size,
        ..req.clone()
    };
    let shortlist = match base {
        PcbBase::Badge => select_badge(features, scores, &narrowed)?,
        PcbBase::Entropy => select_entropy(scores, &narrowed)?,
        PcbBase::Random => select_random(&narrowed)?,
        PcbBase::All => req.candidate_ids.clone(),
    };
    let buckets = class_buckets(scores, &shortlist, req.labeled_counts.num_classes())?;
    greedy_by_counts(buckets, req.labeled_counts.clone(), req.budget, |_, k| Ok(k))
}

/// Candidates grouped by pseudo-label, each bucket ordered by descending
/// entropy then ascending id and stored reversed so `pop` yields the best.
fn class_buckets(scores: &PoolScores, ids: &[u64], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    if scores.num_classes() != num_classes {
        return Err(Error::Shape(format!(
            "scores have {} classes, counts have {num_classes}",
            scores.num_classes()
        )));
    }
    let mut buckets: Vec<Vec<(f64, u64)>> = vec![Vec::new(); num_classes];
    for &id in ids {
        let pos = scores.position(id)?;
        buckets[scores.pseudo_label[pos]].push((scores.entropy[pos], id));
    }
    Ok(buckets
        .into_iter()
        .map(|mut b| {
            b.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            b.into_iter().rev().map(|(_, id)| id).collect()
        })
        .collect())
}

/// Repeatedly takes the best remaining candidate of the rarest class that
/// still has candidates; `counted` maps `(picked id, its bucket)` to the class
/// whose count is incremented.
fn greedy_by_counts(
    mut buckets: Vec<Vec<u64>>,
    mut counts: ClassDistribution,
    budget: usize,
    mut counted: impl FnMut(u64, usize) -> Result<usize>,
) -> Result<Vec<u64>> {
    let k = counts.num_classes();
    let mut picks = Vec::with_capacity(budget);
    for _ in 0..budget {
        let class = counts
            .by_rarity()
            .into_iter()
            .find(|&c| !buckets[c].is_empty())
            .ok_or_else(|| Error::Budget(format!("candidates exhausted after {} picks", picks.len())))?;
        let id = buckets[class].pop().expect("non-empty bucket");
        picks.push(id);
        let c = counted(id, class)?;
        if c >= k {
            return Err(Error::InvalidLabel { label: c, num_classes: k });
        }
        counts.increment(c);
    }
    Ok(picks)
}

/// Tail-First Sampling: for each of `budget` picks, find the rarest class in
/// the current counts, take its highest-entropy pseudo-labeled candidate
/// (falling back to the next-rarest class when none remain), and update the
/// counts per `mode`.
pub fn select_tfs(
    scores: &PoolScores,
    req: &SelectionRequest,
    mode: CountUpdate,
    oracle: Option<&dyn Labeler>,
) -> Result<Vec<u64>> {
    req.validate()?;
    let buckets = class_buckets(scores, &req.candidate_ids, req.labeled_counts.num_classes())?;
    match mode {
        CountUpdate::OracleLabel => {
            let oracle = oracle.ok_or_else(|| {
                Error::InvalidInput("oracle count update requires an oracle".into())
            })?;
            greedy_by_counts(buckets, req.labeled_counts.clone(), req.budget, |id, _| {
                oracle.label(id)
            })
        }
        CountUpdate::PseudoLabel => {
            greedy_by_counts(buckets, req.labeled_counts.clone(), req.budget, |_, k| Ok(k))
        }
    }
}

/// Strategy names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Entropy,
    Coreset,
    Badge,
    Pcb,
    Tfs,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Entropy,
        Strategy::Coreset,
        Strategy::Badge,
        Strategy::Pcb,
        Strategy::Tfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Coreset => "coreset",
            Strategy::Badge => "badge",
            Strategy::Pcb => "pcb",
            Strategy::Tfs => "tfs",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown strategy {s:?} (expected random|entropy|coreset|badge|pcb|tfs)"
                ))
            })
    }
}

/// Knobs shared by the strategies that need them.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub count_update: CountUpdate,
    pub pcb_fraction: f64,
    pub pcb_base: PcbBase,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            count_update: CountUpdate::OracleLabel,
            pcb_fraction: 0.10,
            pcb_base: PcbBase::Badge,
        }
    }
}

/// Everything a strategy may look at.
pub struct SelectionContext<'a> {
    /// Features of labeled and unlabeled task examples.
    pub features: &'a FeaturePool,
    pub labeled_ids: &'a [u64],
    pub scores: &'a PoolScores,
    pub oracle: Option<&'a dyn Labeler>,
}

/// Dispatches to the named strategy.
pub fn select(
    strategy: Strategy,
    ctx: &SelectionContext<'_>,
    req: &SelectionRequest,
    cfg: &StrategyConfig,
) -> Result<Vec<u64>> {
    match strategy {
        Strategy::Random => select_random(req),
        Strategy::Entropy => select_entropy(ctx.scores, req),
        Strategy::Coreset => select_coreset(ctx.features, ctx.labeled_ids, req),
        Strategy::Badge => select_badge(ctx.features, ctx.scores, req),
        Strategy::Pcb => wrap_pcb(cfg.pcb_base, ctx.features, ctx.scores, req, cfg.pcb_fraction),
        Strategy::Tfs => select_tfs(ctx.scores, req, cfg.count_update, ctx.oracle),
    }
}
