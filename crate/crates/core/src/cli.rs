//! Command implementations behind the `tailfirst` binary.
//!
//! * `synth` writes `train.alfp`, `test.alfp`, `retrieved.alfp`,
//!   `labels.csv` (all three pools) and `prototypes.alfp` (ids `0..K`).
//! * `retrieve` matches a caption corpus against a synonym table, caps the
//!   result by similarity and writes `class,id` lines.
//! * `run` executes a config file over its seeds and writes the JSONL report
//!   plus a per-round summary CSV.
//! * `report` turns a JSONL report into a class-by-round accuracy matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::adapt::AdaptationKind;
use crate::config::{self, RunConfig};
use crate::data::FeaturePool;
use crate::error::{Error, Result};
use crate::harness::{self, RetrievedData, TaskData};
use crate::io::{self, ReportContext};
use crate::retrieval::{self, CapPolicy, RetrievedSet};
use crate::strategies::Strategy;
use crate::synth::{self, SynthSpec};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates a synthetic task and writes its five files into `out_dir`.
pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let task = synth::generate_task(spec)?;
    create_dir(out_dir)?;
    let paths: Vec<PathBuf> = ["train.alfp", "test.alfp", "retrieved.alfp", "labels.csv", "prototypes.alfp"]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    io::write_features(&paths[0], task.train.ids(), &task.train.features().to_owned())?;
    io::write_features(&paths[1], task.test.ids(), &task.test.features().to_owned())?;
    io::write_features(&paths[2], task.retrieved.ids(), &task.retrieved.features().to_owned())?;
    let mut labels = String::new();
    for pool in [&task.train, &task.test, &task.retrieved] {
        labels.push_str(&io::encode_labels(pool.ids(), pool.labels().expect("labeled")));
    }
    io::write_atomic(&paths[3], labels.as_bytes())?;
    let class_ids: Vec<u64> = (0..spec.num_classes as u64).collect();
    io::write_features(&paths[4], &class_ids, &task.prototypes)?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrieveArgs {
    pub corpus: PathBuf,
    pub synonyms: PathBuf,
    pub features: PathBuf,
    /// Class prototypes (ids `0..K`); defaults to the mean matched feature.
    pub prototypes: Option<PathBuf>,
    pub cap: CapPolicy,
    pub drop_multi_class: bool,
    pub out: PathBuf,
}

/// Per-class counts before and after capping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrieveSummary {
    pub names: Vec<String>,
    pub matched: Vec<usize>,
    pub kept: Vec<usize>,
}

impl RetrieveSummary {
    /// `class<TAB>matched<TAB>kept` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("class\tmatched\tkept\n");
        for ((n, m), k) in self.names.iter().zip(&self.matched).zip(&self.kept) {
            let _ = writeln!(s, "{n}\t{m}\t{k}");
        }
        s
    }
}

fn read_prototypes(path: &Path, num_classes: usize, dim: usize) -> Result<Array2<f64>> {
    let (ids, p) = io::read_features(path)?;
    if p.dim() != (num_classes, dim) || ids != (0..num_classes as u64).collect::<Vec<_>>() {
        return Err(Error::Shape(format!(
            "{}: expected {num_classes} prototypes of dim {dim} with ids 0..{num_classes}, got {:?}",
            path.display(),
            p.dim()
        )));
    }
    Ok(p)
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> Result<RetrieveSummary> {
    args.cap.validate()?;
    let corpus = io::read_captions(&args.corpus)?;
    let table = io::read_synonyms(&args.synonyms)?;
    let k = table.num_classes();
    let (ids, feats) = io::read_features(&args.features)?;
    let features = FeaturePool::new(ids, feats, None, k)?.normalized()?;

    let mut matched = retrieval::match_captions(&corpus, &table);
    if args.drop_multi_class {
        matched = matched.drop_multi_class();
    }
    if let Some((id, c)) = matched.pairs().find(|&(id, _)| !features.contains(id)) {
        return Err(Error::DataInconsistency(format!(
            "caption {id} matched class {:?} but has no feature in {}",
            table.names()[c],
            args.features.display()
        )));
    }
    let prototypes = match &args.prototypes {
        Some(p) => read_prototypes(p, k, features.dim())?,
        None => retrieval::mean_prototypes(&matched, &features)?,
    };
    let kept = retrieval::cap_retrieved(&matched, &features, &prototypes, &args.cap)?;
    io::write_atomic(&args.out, io::encode_retrieved(&kept, table.names()).as_bytes())?;
    Ok(RetrieveSummary {
        names: table.names().to_vec(),
        matched: matched.counts(),
        kept: kept.counts(),
    })
}

/// Command-line overrides for `run`; `None` leaves the config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub seeds: Option<Vec<u64>>,
    pub strategy: Option<Strategy>,
    pub adaptation: Option<AdaptationKind>,
    pub rda: Option<bool>,
    pub cap: Option<usize>,
    pub rounds: Option<usize>,
    pub budget: Option<usize>,
    pub allow_tfs_without_rda: bool,
    pub out_dir: Option<PathBuf>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.experiment;
        if let Some(s) = &self.seeds {
            e.seeds = s.clone();
        }
        if let Some(s) = self.strategy {
            e.strategy = s;
        }
        if let Some(a) = self.adaptation {
            e.adaptation = a;
        }
        if let Some(r) = self.rda {
            e.rda_enabled = r;
        }
        if let Some(cap) = self.cap {
            let top_x = match e.cap {
                CapPolicy::Count { top_x, .. } | CapPolicy::Ratio { top_x, .. } => top_x,
                CapPolicy::None => None,
            };
            e.cap = CapPolicy::Count { cap, top_x };
        }
        if let Some(r) = self.rounds {
            e.rounds = r;
        }
        if let Some(b) = self.budget {
            e.budget = Some(b);
        }
        if self.allow_tfs_without_rda {
            e.allow_tfs_without_rda = true;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
    }
}

/// Loads the pools named in a config. Task and corpus features are
/// L2-normalized on load.
pub fn load_task(cfg: &RunConfig) -> Result<TaskData> {
    let d = &cfg.data;
    let labels = io::read_labels(&d.labels)?;
    let synonyms = d.synonyms.as_deref().map(io::read_synonyms).transpose()?;
    let k = match (d.num_classes, &synonyms) {
        (Some(k), _) => k,
        (None, Some(t)) => t.num_classes(),
        (None, None) => labels.iter().map(|&(_, c)| c + 1).max().unwrap_or(0),
    };
    let train = io::load_pool(&d.train, Some(&labels), k)?.normalized()?;
    let test = io::load_pool(&d.test, Some(&labels), k)?.normalized()?;
    let retrieved = match &d.retrieved {
        None => None,
        Some(path) => {
            let (ids, feats) = io::read_features(path)?;
            let features = FeaturePool::new(ids, feats, None, k)?.normalized()?;
            let set = match &d.retrieved_set {
                Some(p) => io::read_retrieved(p, synonyms.as_ref(), k)?,
                None => {
                    let by_id: HashMap<u64, usize> = labels.iter().copied().collect();
                    let mut per_class = vec![Vec::new(); k];
                    for &id in features.ids() {
                        if let Some(&c) = by_id.get(&id) {
                            if c >= k {
                                return Err(Error::InvalidLabel { label: c, num_classes: k });
                            }
                            per_class[c].push(id);
                        }
                    }
                    RetrievedSet::new(per_class)
                }
            };
            Some(RetrievedData { features, set })
        }
    };
    let prototypes = d
        .prototypes
        .as_deref()
        .map(|p| read_prototypes(p, k, train.dim()))
        .transpose()?;
    Ok(TaskData { train, test, retrieved, prototypes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub jsonl: PathBuf,
    pub summary: PathBuf,
    pub lines: usize,
}

pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> Result<RunOutputs> {
    let mut cfg = config::load_run_config(config_path)?;
    overrides.apply(&mut cfg);
    cfg.experiment.validate()?;
    let task = load_task(&cfg)?;
    let records = harness::run_experiment(&cfg.experiment, &task)?;
    let e = &cfg.experiment;
    let ctx = ReportContext {
        strategy: e.strategy.name(),
        adaptation: e.adaptation.name(),
        rda: e.rda_enabled,
    };
    create_dir(&cfg.output.dir)?;
    let out = RunOutputs {
        jsonl: cfg.output.jsonl(),
        summary: cfg.output.summary(),
        lines: records.len(),
    };
    io::write_atomic(&out.jsonl, io::encode_report(&ctx, &records).as_bytes())?;
    let summary = harness::summarize(&records);
    io::write_atomic(&out.summary, io::encode_summary(&ctx, &summary).as_bytes())?;
    Ok(out)
}

/// Per-class accuracy by round, averaged over every line for that round.
/// Rows are ordered by round-0 accuracy, highest first (ties by class index).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatrix {
    pub rounds: Vec<usize>,
    /// `(class, accuracies per round)`.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl ClassMatrix {
    pub fn from_entries(entries: &[io::ReportEntry]) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::DataInconsistency("report has no lines".into()))?;
        let k = first.per_class_accuracy.len();
        let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.per_class_accuracy.len() != k {
                return Err(Error::DataInconsistency(format!(
                    "line {} has {} classes, line 1 has {k}",
                    i + 1,
                    e.per_class_accuracy.len()
                )));
            }
            let slot = sums.entry(e.round).or_insert_with(|| (vec![0.0; k], 0));
            for (s, v) in slot.0.iter_mut().zip(&e.per_class_accuracy) {
                *s += v;
            }
            slot.1 += 1;
        }
        let rounds: Vec<usize> = sums.keys().copied().collect();
        let mut rows: Vec<(usize, Vec<f64>)> = (0..k)
            .map(|c| (c, sums.values().map(|(s, n)| s[c] / *n as f64).collect()))
            .collect();
        rows.sort_by(|a, b| b.1[0].total_cmp(&a.1[0]).then(a.0.cmp(&b.0)));
        Ok(Self { rounds, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class");
        for r in &self.rounds {
            let _ = write!(s, ",round_{r}");
        }
        s.push('\n');
        for (c, values) in &self.rows {
            let _ = write!(s, "{c}");
            for v in values {
                let _ = write!(s, ",{}", io::format_float(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Builds the matrix CSV; writes it to `out` when given and returns it.
pub fn cmd_report(jsonl: &Path, out: Option<&Path>) -> Result<String> {
    let matrix = ClassMatrix::from_entries(&io::parse_report(jsonl)?)?;
    let csv = matrix.to_csv();
    if let Some(path) = out {
        io::write_atomic(path, csv.as_bytes())?;
    }
    Ok(csv)
}
