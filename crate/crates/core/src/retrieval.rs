//! Retrieval-based data augmentation over an open image-caption corpus.
//!
//! The pipeline is fixed: captions are matched against per-class synonym
//! lists, then each class is cut down to its capped size by dropping the
//! images least similar to the class prototype.
//!
//! Text normalization (applied to both captions and synonyms): Unicode
//! lowercase, every character that is neither alphanumeric nor whitespace
//! becomes a space, and whitespace runs collapse to a single space. A synonym
//! matches a caption when its token sequence occurs as a contiguous run of
//! whole caption tokens, so `cat` matches "a cat." but not "concatenate".

use std::collections::{BTreeMap, BTreeSet, HashSet};

use aho_corasick::{AhoCorasick, MatchKind};
use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::data::FeaturePool;
use crate::error::{Error, Result};

/// Lowercases, maps punctuation to spaces and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let mapped: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Open image-caption corpus.
#[derive(Debug, Clone, Default)]
pub struct CaptionCorpus {
    entries: Vec<(u64, String)>,
}

impl CaptionCorpus {
    pub fn new(entries: Vec<(u64, String)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, caption) in &entries {
            if !seen.insert(*id) {
                return Err(Error::InvalidInput(format!("duplicate caption id {id}")));
            }
            if normalize_text(caption).is_empty() {
                return Err(Error::InvalidInput(format!(
                    "caption {id} is empty after normalization"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u64, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Class names and their synonyms, stored normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable {
    names: Vec<String>,
    synonyms: Vec<Vec<String>>,
}

impl SynonymTable {
    /// Builds a table from `(class name, synonyms)` pairs. The class name is
    /// itself used as a synonym.
    pub fn new(classes: Vec<(String, Vec<String>)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("synonym table has no classes".into()));
        }
        let mut names = Vec::with_capacity(classes.len());
        let mut synonyms = Vec::with_capacity(classes.len());
        for (name, syns) in classes {
            let mut list: Vec<String> = Vec::new();
            for raw in std::iter::once(&name).chain(syns.iter()) {
                let norm = normalize_text(raw);
                if norm.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "empty synonym {raw:?} for class {name:?}"
                    )));
                }
                if !list.contains(&norm) {
                    list.push(norm);
                }
            }
            names.push(name);
            synonyms.push(list);
        }
        Ok(Self { names, synonyms })
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn synonyms(&self, class: usize) -> &[String] {
        &self.synonyms[class]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Per-class lists of matched corpus ids, each sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievedSet {
    per_class: Vec<Vec<u64>>,
}

impl RetrievedSet {
    pub fn new(mut per_class: Vec<Vec<u64>>) -> Self {
        for ids in &mut per_class {
            ids.sort_unstable();
            ids.dedup();
        }
        Self { per_class }
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn class(&self, k: usize) -> &[u64] {
        &self.per_class[k]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }

    /// `(id, class)` pairs, class-major.
    pub fn pairs(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.per_class
            .iter()
            .enumerate()
            .flat_map(|(k, ids)| ids.iter().map(move |&id| (id, k)))
    }

    /// Removes every id that appears under more than one class.
    pub fn drop_multi_class(&self) -> RetrievedSet {
        let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
        for (id, _) in self.pairs() {
            *seen.entry(id).or_default() += 1;
        }
        RetrievedSet {
            per_class: self
                .per_class
                .iter()
                .map(|ids| ids.iter().copied().filter(|id| seen[id] == 1).collect())
                .collect(),
        }
    }
}

const SHARD: usize = 4096;

/// Assigns each caption to every class with a synonym occurring in it as a
/// whole-token match.
pub fn match_captions(corpus: &CaptionCorpus, names: &SynonymTable) -> RetrievedSet {
    // One padded pattern per distinct synonym; padding with spaces on both
    // sides of a padded caption gives token-boundary semantics.
    let mut pattern_classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for k in 0..names.num_classes() {
        for syn in names.synonyms(k) {
            pattern_classes.entry(format!(" {syn} ")).or_default().push(k);
        }
    }
    let patterns: Vec<&String> = pattern_classes.keys().collect();
    let classes: Vec<&Vec<usize>> = pattern_classes.values().collect();
    let automaton = AhoCorasick::builder()
        .match_kind(MatchKind::Standard)
        .build(&patterns)
        .expect("synonym patterns are bounded in size");

    let k = names.num_classes();
    let shards: Vec<Vec<Vec<u64>>> = corpus
        .entries()
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut local = vec![Vec::new(); k];
            for (id, caption) in chunk {
                let text = format!(" {} ", normalize_text(caption));
                let mut hit = BTreeSet::new();
                for m in automaton.find_overlapping_iter(&text) {
                    hit.extend(classes[m.pattern().as_usize()].iter().copied());
                }
                for c in hit {
                    local[c].push(*id);
                }
            }
            local
        })
        .collect();

    let mut per_class = vec![Vec::new(); k];
    for shard in shards {
        for (c, ids) in shard.into_iter().enumerate() {
            per_class[c].extend(ids);
        }
    }
    RetrievedSet::new(per_class)
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Option<f64> {
    let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
    (denom > 0.0).then(|| a.dot(&b) / denom)
}

/// Keeps, for each class, the `caps[k]` ids most cosine-similar to prototype
/// row `k` (ties to the lower id).
pub fn similarity_filter_per_class(
    set: &RetrievedSet,
    features: &FeaturePool,
    prototypes: &Array2<f64>,
    caps: &[usize],
) -> Result<RetrievedSet> {
    let k = set.num_classes();
    if caps.len() != k {
        return Err(Error::Shape(format!("{} caps for {k} classes", caps.len())));
    }
    if prototypes.nrows() != k || prototypes.ncols() != features.dim() {
        return Err(Error::Shape(format!(
            "prototypes are {}x{}, expected {k}x{}",
            prototypes.nrows(),
            prototypes.ncols(),
            features.dim()
        )));
    }
    let mut per_class = Vec::with_capacity(k);
    for (class, &cap) in caps.iter().enumerate() {
        let proto = prototypes.row(class);
        let mut scored = set
            .class(class)
            .iter()
            .map(|&id| {
                let row = features.row(id).ok_or_else(|| {
                    Error::DataInconsistency(format!("no feature for retrieved id {id}"))
                })?;
                let cos = cosine(row, proto).ok_or_else(|| {
                    Error::InvalidInput(format!("zero-norm feature or prototype for class {class}"))
                })?;
                Ok((cos, id))
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(cap);
        per_class.push(scored.into_iter().map(|(_, id)| id).collect());
    }
    Ok(RetrievedSet::new(per_class))
}

/// Uniform per-class cap, dropping least-similar ids first.
pub fn similarity_filter(
    set: &RetrievedSet,
    features: &FeaturePool,
    prototypes: &Array2<f64>,
    per_class_cap: usize,
) -> Result<RetrievedSet> {
    let caps = vec![per_class_cap; set.num_classes()];
    similarity_filter_per_class(set, features, prototypes, &caps)
}

/// Indices of the `top_x` largest counts; ties to the lower index.
fn dominant_classes(counts: &[usize], top_x: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(top_x);
    order
}

/// Clamps the `top_x` dominant classes to at most `cap`.
pub fn cap_by_count(counts: &[usize], cap: usize, top_x: usize) -> Vec<usize> {
    let mut out = counts.to_vec();
    for k in dominant_classes(counts, top_x) {
        out[k] = out[k].min(cap);
    }
    out
}

/// Keeps `floor(ratio * count)` for the `top_x` dominant classes.
pub fn cap_by_ratio(counts: &[usize], ratio: f64, top_x: usize) -> Vec<usize> {
    let mut out = counts.to_vec();
    for k in dominant_classes(counts, top_x) {
        out[k] = (ratio * counts[k] as f64).floor() as usize;
    }
    out
}

/// How retrieved examples are capped per class. `top_x = None` caps every class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapPolicy {
    Count { cap: usize, top_x: Option<usize> },
    Ratio { ratio: f64, top_x: Option<usize> },
    None,
}

impl Default for CapPolicy {
    fn default() -> Self {
        CapPolicy::Count {
            cap: 500,
            top_x: None,
        }
    }
}

impl CapPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CapPolicy::Ratio { ratio, .. } if !(ratio > 0.0 && ratio <= 1.0) => Err(
                Error::InvalidInput(format!("cap ratio {ratio} outside (0, 1]")),
            ),
            CapPolicy::Count { top_x: Some(0), .. } | CapPolicy::Ratio { top_x: Some(0), .. } => {
                Err(Error::InvalidInput("top_x must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn retained(&self, counts: &[usize]) -> Vec<usize> {
        let k = counts.len();
        match *self {
            CapPolicy::Count { cap, top_x } => cap_by_count(counts, cap, top_x.unwrap_or(k).min(k)),
            CapPolicy::Ratio { ratio, top_x } => {
                cap_by_ratio(counts, ratio, top_x.unwrap_or(k).min(k))
            }
            CapPolicy::None => counts.to_vec(),
        }
    }
}

/// Per-class normalized mean of the matched features. Classes with no
/// matches get a zero row.
pub fn mean_prototypes(set: &RetrievedSet, features: &FeaturePool) -> Result<Array2<f64>> {
    let mut protos = Array2::zeros((set.num_classes(), features.dim()));
    for k in 0..set.num_classes() {
        let mut row = protos.row_mut(k);
        for &id in set.class(k) {
            let f = features.row(id).ok_or_else(|| {
                Error::DataInconsistency(format!("no feature for retrieved id {id}"))
            })?;
            row += &f;
        }
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(protos)
}

/// Caps an already-matched set: the policy decides how many ids each class
/// keeps and similarity to the prototypes decides which.
pub fn cap_retrieved(
    set: &RetrievedSet,
    features: &FeaturePool,
    prototypes: &Array2<f64>,
    policy: &CapPolicy,
) -> Result<RetrievedSet> {
    policy.validate()?;
    let caps = policy.retained(&set.counts());
    similarity_filter_per_class(set, features, prototypes, &caps)
}
