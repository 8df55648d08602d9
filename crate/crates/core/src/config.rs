//! Experiment configuration files.
//!
//! TOML with one table per concern; every key is optional except the data
//! paths. Unknown keys are errors, and all problems are reported together.
//! Relative paths resolve against the config file's directory.
//!
//! ```toml
//! [data]
//! train = "train.alfp"          # unlabeled pool
//! test = "test.alfp"
//! labels = "labels.csv"         # id,class for train, test (and retrieved)
//! retrieved = "retrieved.alfp"  # optional corpus features
//! retrieved_set = "matched.csv" # optional class,id; else labels are used
//! synonyms = "classes.toml"     # optional, resolves class names
//! prototypes = "prototypes.alfp"
//! num_classes = 20              # default: largest label + 1
//!
//! [harness]
//! rounds = 6
//! budget = 20                   # default: num_classes
//! seeds = [666, 777, 888]
//! warm_start = true
//! include_retrieved_in_counts = true
//! retrieved_weight = 1.0
//! allow_tfs_without_rda = false
//! prototype_init = "class_means" # or "supplied"
//! timing = false
//!
//! [retrieval]
//! rda = true
//! cap = "count"                 # count | ratio | none
//! cap_count = 500
//! cap_ratio = 0.5
//! top_x = 10                    # default: every class
//! drop_multi_class = false
//!
//! [adapt]
//! kind = "prototype_ct"         # or "linear_probe"
//! lr_head = 1e-4
//! lr_temperature = 1e-4
//! epochs = 50
//! batch_size = 32
//! weight_decay = 1e-2
//! seed = 0
//! temperature = 0.07
//!
//! [strategies]
//! name = "tfs"                  # random | entropy | coreset | badge | pcb | tfs
//! count_update = "oracle"       # or "pseudo"
//! pcb_fraction = 0.1
//! pcb_base = "badge"            # badge | entropy | random | all
//!
//! [output]
//! dir = "out"
//! name = "run"                  # run.jsonl, run_summary.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adapt::AdaptationKind;
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, PrototypeInit};
use crate::retrieval::CapPolicy;
use crate::strategies::{CountUpdate, PcbBase, Strategy};

/// Environment variable that overrides `[output] dir`.
pub const OUT_DIR_ENV: &str = "TAILFIRST_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub labels: PathBuf,
    pub retrieved: Option<PathBuf>,
    pub retrieved_set: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub prototypes: Option<PathBuf>,
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub name: String,
}

impl OutputConfig {
    pub fn jsonl(&self) -> PathBuf {
        self.dir.join(format!("{}.jsonl", self.name))
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join(format!("{}_summary.csv", self.name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataPaths,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

/// Typed key extraction over one table, collecting problems as it goes.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
    seen: Vec<&'static str>,
    problems: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a toml::Table, name: &'static str, problems: &'a mut Vec<String>) -> Self {
        let table = match doc.get(name) {
            None => None,
            Some(toml::Value::Table(t)) => Some(t),
            Some(_) => {
                problems.push(format!("[{name}] must be a table"));
                None
            }
        };
        Self { name, table, seen: Vec::new(), problems }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a toml::Value> {
        self.seen.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&mut self, key: &str, expected: &str) {
        self.problems.push(format!("{}.{key}: expected {expected}", self.name));
    }

    fn string(&mut self, key: &'static str) -> Option<String> {
        match self.raw(key)? {
            toml::Value::String(s) => Some(s.clone()),
            _ => {
                self.bad(key, "a string");
                None
            }
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &'static str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.string(key)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("{}.{key}: {e}", self.name));
                None
            }
        }
    }

    fn boolean(&mut self, key: &'static str) -> Option<bool> {
        match self.raw(key)? {
            toml::Value::Boolean(b) => Some(*b),
            _ => {
                self.bad(key, "true or false");
                None
            }
        }
    }

    fn uint(&mut self, key: &'static str) -> Option<u64> {
        match self.raw(key)? {
            toml::Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.bad(key, "a non-negative integer");
                None
            }
        }
    }

    fn usize(&mut self, key: &'static str) -> Option<usize> {
        self.uint(key).map(|v| v as usize)
    }

    fn float(&mut self, key: &'static str) -> Option<f64> {
        match self.raw(key)? {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => {
                self.bad(key, "a number");
                None
            }
        }
    }

    fn uint_list(&mut self, key: &'static str) -> Option<Vec<u64>> {
        let toml::Value::Array(items) = self.raw(key)? else {
            self.bad(key, "an array of integers");
            return None;
        };
        let out: Option<Vec<u64>> = items
            .iter()
            .map(|v| v.as_integer().filter(|i| *i >= 0).map(|i| i as u64))
            .collect();
        if out.is_none() {
            self.bad(key, "an array of non-negative integers");
        }
        out
    }

    fn finish(self) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.seen.contains(&key.as_str()) {
                    self.problems.push(format!("[{}]: unknown key {key:?}", self.name));
                }
            }
        }
    }
}

const SECTIONS: [&str; 6] = ["data", "harness", "retrieval", "adapt", "strategies", "output"];

fn parse_prototype_init(s: &str) -> std::result::Result<PrototypeInit, String> {
    match s {
        "class_means" => Ok(PrototypeInit::ClassMeans),
        "supplied" => Ok(PrototypeInit::Supplied),
        other => Err(format!("unknown prototype init {other:?}")),
    }
}

/// Parses and validates a config document; `base` anchors relative paths.
pub fn parse_run_config(text: &str, base: &Path) -> Result<RunConfig> {
    let cfg = parse_unchecked(text, base)?;
    cfg.experiment.validate()?;
    Ok(cfg)
}

/// Schema checks only; the experiment settings are left for the caller to
/// validate, typically after applying command-line overrides.
pub fn parse_unchecked(text: &str, base: &Path) -> Result<RunConfig> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
    let mut problems = Vec::new();
    for key in doc.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            problems.push(format!("unknown section [{key}]"));
        }
    }
    let resolve = |p: String| base.join(p);
    let mut cfg = ExperimentConfig::default();

    let mut s = Section::new(&doc, "data", &mut problems);
    let train = s.string("train").map(resolve);
    let test = s.string("test").map(resolve);
    let labels = s.string("labels").map(resolve);
    let retrieved = s.string("retrieved").map(resolve);
    let retrieved_set = s.string("retrieved_set").map(resolve);
    let synonyms = s.string("synonyms").map(resolve);
    let prototypes = s.string("prototypes").map(resolve);
    let num_classes = s.usize("num_classes");
    for (key, v) in [("train", &train), ("test", &test), ("labels", &labels)] {
        if v.is_none() && s.table.is_none_or(|t| !t.contains_key(key)) {
            s.problems.push(format!("data.{key} is required"));
        }
    }
    s.finish();

    let mut s = Section::new(&doc, "harness", &mut problems);
    if let Some(v) = s.usize("rounds") {
        cfg.rounds = v;
    }
    if let Some(v) = s.usize("budget") {
        cfg.budget = Some(v);
    }
    if let Some(v) = s.uint_list("seeds") {
        cfg.seeds = v;
    }
    if let Some(v) = s.boolean("warm_start") {
        cfg.warm_start = v;
    }
    if let Some(v) = s.boolean("include_retrieved_in_counts") {
        cfg.include_retrieved_in_counts = v;
    }
    if let Some(v) = s.float("retrieved_weight") {
        cfg.retrieved_weight = v;
    }
    if let Some(v) = s.boolean("allow_tfs_without_rda") {
        cfg.allow_tfs_without_rda = v;
    }
    if let Some(v) = s.string("prototype_init") {
        match parse_prototype_init(&v) {
            Ok(p) => cfg.prototype_init = p,
            Err(e) => s.problems.push(format!("harness.prototype_init: {e}")),
        }
    }
    if let Some(v) = s.boolean("timing") {
        cfg.record_timing = v;
    }
    s.finish();

    let mut s = Section::new(&doc, "retrieval", &mut problems);
    if let Some(v) = s.boolean("rda") {
        cfg.rda_enabled = v;
    }
    let kind = s.string("cap");
    let cap_count = s.usize("cap_count");
    let cap_ratio = s.float("cap_ratio");
    let top_x = s.usize("top_x");
    if let Some(v) = s.boolean("drop_multi_class") {
        cfg.drop_multi_class = v;
    }
    let default_count = match CapPolicy::default() {
        CapPolicy::Count { cap, .. } => cap,
        _ => unreachable!(),
    };
    match kind.as_deref().unwrap_or("count") {
        "count" => {
            cfg.cap = CapPolicy::Count {
                cap: cap_count.unwrap_or(default_count),
                top_x,
            }
        }
        "ratio" => match cap_ratio {
            Some(ratio) => cfg.cap = CapPolicy::Ratio { ratio, top_x },
            None => s.problems.push("retrieval.cap = \"ratio\" needs cap_ratio".into()),
        },
        "none" => cfg.cap = CapPolicy::None,
        other => s.problems.push(format!("retrieval.cap: unknown policy {other:?}")),
    }
    s.finish();

    let mut s = Section::new(&doc, "adapt", &mut problems);
    if let Some(v) = s.parsed::<AdaptationKind>("kind") {
        cfg.adaptation = v;
    }
    if let Some(v) = s.float("lr_head") {
        cfg.train.lr_head = v;
    }
    if let Some(v) = s.float("lr_temperature") {
        cfg.train.lr_temperature = v;
    }
    if let Some(v) = s.usize("epochs") {
        cfg.train.epochs = v;
    }
    if let Some(v) = s.usize("batch_size") {
        cfg.train.batch_size = v;
    }
    if let Some(v) = s.float("weight_decay") {
        cfg.train.weight_decay = v;
    }
    if let Some(v) = s.uint("seed") {
        cfg.train.seed = v;
    }
    if let Some(v) = s.float("temperature") {
        cfg.temperature = v;
    }
    s.finish();

    let mut s = Section::new(&doc, "strategies", &mut problems);
    if let Some(v) = s.parsed::<Strategy>("name") {
        cfg.strategy = v;
    }
    if let Some(v) = s.parsed::<CountUpdate>("count_update") {
        cfg.strategy_config.count_update = v;
    }
    if let Some(v) = s.float("pcb_fraction") {
        cfg.strategy_config.pcb_fraction = v;
    }
    if let Some(v) = s.parsed::<PcbBase>("pcb_base") {
        cfg.strategy_config.pcb_base = v;
    }
    s.finish();

    let mut s = Section::new(&doc, "output", &mut problems);
    let dir = s.string("dir").map(resolve).unwrap_or_else(|| base.join("out"));
    let name = s.string("name").unwrap_or_else(|| "run".to_string());
    if name.is_empty() || name.contains(['/', '\\']) {
        s.problems.push(format!("output.name {name:?} must be a plain file stem"));
    }
    s.finish();

    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    Ok(RunConfig {
        data: DataPaths {
            train: train.expect("checked"),
            test: test.expect("checked"),
            labels: labels.expect("checked"),
            retrieved,
            retrieved_set,
            synonyms,
            prototypes,
            num_classes,
        },
        experiment: cfg,
        output: OutputConfig { dir, name },
    })
}

/// Reads a config file without validating the experiment settings, then
/// applies the output-directory environment override.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_unchecked(&text, base)?;
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.output.dir = PathBuf::from(dir);
    }
    Ok(cfg)
}
