//! Shared data model: feature pools, the label ledger, class-count bookkeeping
//! and per-round records.
//!
//! All cross-module references are by 64-bit id, never by row position, so a
//! pool can be filtered into sub-pools without invalidating anything that
//! points into it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Immutable matrix of example embeddings keyed by id, with optional
/// ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePool {
    ids: Vec<u64>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
    index: HashMap<u64, usize>,
}

impl FeaturePool {
    pub fn new(
        ids: Vec<u64>,
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if d == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be positive".into()));
        }
        if ids.len() != n {
            return Err(Error::Shape(format!("{} ids for {} feature rows", ids.len(), n)));
        }
        if let Some((pos, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value in row {}",
                pos / d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), n)));
            }
            if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
                return Err(Error::InvalidLabel { label, num_classes });
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::InvalidInput(format!("duplicate id {id}")));
            }
        }
        Ok(Self {
            ids,
            features,
            labels,
            num_classes,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn row(&self, id: u64) -> Option<ArrayView1<'_, f64>> {
        self.position(id).map(|r| self.features.row(r))
    }

    pub fn label_of(&self, id: u64) -> Option<usize> {
        let labels = self.labels.as_ref()?;
        self.position(id).map(|r| labels[r])
    }

    /// Sub-pool with the given ids, in the given order.
    pub fn subset(&self, ids: &[u64]) -> Result<FeaturePool> {
        let rows = ids
            .iter()
            .map(|&id| {
                self.position(id)
                    .ok_or_else(|| Error::DataInconsistency(format!("id {id} not in pool")))
            })
            .collect::<Result<Vec<_>>>()?;
        let features = self.features.select(Axis(0), &rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        FeaturePool::new(ids.to_vec(), features, labels, self.num_classes)
    }

    /// Same pool with every row scaled to unit norm.
    pub fn normalized(&self) -> Result<FeaturePool> {
        Ok(FeaturePool {
            features: l2_normalize(&self.features)?,
            ..self.clone()
        })
    }

    pub fn with_labels(self, labels: Option<Vec<usize>>) -> Result<FeaturePool> {
        FeaturePool::new(self.ids, self.features, labels, self.num_classes)
    }

    pub fn into_parts(self) -> (Vec<u64>, Array2<f64>, Option<Vec<usize>>) {
        (self.ids, self.features, self.labels)
    }
}

/// Labeling state of a task-pool example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelStatus {
    Unlabeled,
    OracleLabeled(usize),
    Retrieved(usize),
}

/// Per-example labeling state across rounds.
///
/// Oracle labels are keyed by task-pool id. Retrieved examples come from the
/// open corpus, whose ids form a separate namespace, and one corpus image may
/// be retrieved under several classes, so they are kept as `(id, class)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelLedger {
    oracle: BTreeMap<u64, (usize, usize)>,
    retrieved: BTreeSet<(u64, usize)>,
    latest_round: usize,
}

impl LabelLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_oracle(&mut self, id: u64, class: usize, round: usize) -> Result<()> {
        if let Some(&(prev, _)) = self.oracle.get(&id) {
            return Err(Error::InvalidLedger(format!(
                "id {id} already labeled as class {prev}"
            )));
        }
        self.oracle.insert(id, (class, round));
        self.latest_round = self.latest_round.max(round);
        Ok(())
    }

    /// Retrieved entries may only be created before any round past 0 has
    /// been labeled.
    pub fn add_retrieved(&mut self, id: u64, class: usize) -> Result<()> {
        if self.latest_round > 0 {
            return Err(Error::InvalidLedger(format!(
                "retrieved entry {id} added after round {}",
                self.latest_round
            )));
        }
        self.retrieved.insert((id, class));
        Ok(())
    }

    /// Status of a task-pool id.
    pub fn status(&self, id: u64) -> LabelStatus {
        match self.oracle.get(&id) {
            Some(&(class, _)) => LabelStatus::OracleLabeled(class),
            None => LabelStatus::Unlabeled,
        }
    }

    /// Status of a corpus id; the first (lowest) class when retrieved under several.
    pub fn retrieved_status(&self, id: u64) -> LabelStatus {
        match self.retrieved.range((id, 0)..=(id, usize::MAX)).next() {
            Some(&(_, class)) => LabelStatus::Retrieved(class),
            None => LabelStatus::Unlabeled,
        }
    }

    pub fn round_added(&self, id: u64) -> Option<usize> {
        self.oracle.get(&id).map(|&(_, round)| round)
    }

    pub fn is_labeled(&self, id: u64) -> bool {
        self.oracle.contains_key(&id)
    }

    /// `(id, class)` of oracle labels, ordered by id.
    pub fn oracle_entries(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.oracle.iter().map(|(&id, &(class, _))| (id, class))
    }

    /// `(id, class)` of retrieved entries, ordered by id then class.
    pub fn retrieved_entries(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.retrieved.iter().copied()
    }

    pub fn oracle_len(&self) -> usize {
        self.oracle.len()
    }

    pub fn retrieved_len(&self) -> usize {
        self.retrieved.len()
    }
}

/// Per-class example counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDistribution {
    counts: Vec<usize>,
}

impl ClassDistribution {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn zeros(num_classes: usize) -> Self {
        Self::new(vec![0; num_classes])
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn increment(&mut self, class: usize) {
        self.counts[class] += 1;
    }

    /// Class indices ordered from rarest to most common; ties by index.
    pub fn by_rarity(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by_key(|&k| (self.counts[k], k));
        order
    }
}

/// Counts oracle labels per class, plus retrieved entries when
/// `include_retrieved` is set.
pub fn class_counts(
    ledger: &LabelLedger,
    include_retrieved: bool,
    num_classes: usize,
) -> Result<ClassDistribution> {
    let mut dist = ClassDistribution::zeros(num_classes);
    let retrieved = ledger
        .retrieved_entries()
        .filter(|_| include_retrieved);
    for (id, class) in ledger.oracle_entries().chain(retrieved) {
        if class >= num_classes {
            return Err(Error::InvalidLedger(format!(
                "id {id} has class {class} but num_classes = {num_classes}"
            )));
        }
        dist.increment(class);
    }
    Ok(dist)
}

/// Argmin over class counts; ties go to the lowest class index.
pub fn rarest_class(dist: &ClassDistribution) -> Result<usize> {
    dist.counts
        .iter()
        .enumerate()
        .min_by_key(|&(k, &c)| (c, k))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidInput("empty class distribution".into()))
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(features: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = features.clone();
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        let norm = r.dot(&r).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateFeature { row });
        }
        r.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Outcome of one active-learning round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Ids sent to the oracle this round; at round 0 the initial one-per-class set.
    pub selected_ids: Vec<u64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_accuracy: Vec<f64>,
    /// Number of oracle labels held after this round.
    pub labeled_count: usize,
    pub seed: u64,
    pub wall_ms: u64,
}
