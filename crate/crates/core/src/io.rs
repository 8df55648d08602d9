//! On-disk formats.
//!
//! * Feature file (`.alfp`), little-endian:
//!   `b"ALFP"`, `u32` version (= 1), `u64` n, `u32` d, then `n*d` `f32`
//!   values row-major, then `n` `u64` ids. Length is exactly `20 + 4nd + 8n`.
//! * Label CSV: one `id,class` per line, no header.
//! * Caption TSV: one `id<TAB>caption` per line, ids in decimal.
//! * Synonym table (TOML): an array of `[[class]]` tables with `name` and
//!   optional `synonyms = [...]`; class index is the table's position.
//! * Retrieved set CSV: one `class,id` per line, class given by name.
//! * Model checkpoint: `b"ALMD"`, `u32` version (= 1), `u32` kind
//!   (0 linear probe, 1 prototype), `u64` rows K, `u64` cols d, then `K*d`
//!   `f64` row-major, then K `f64` biases (linear) or one `f64` temperature.
//! * Report JSONL: one object per round with keys in the fixed order
//!   `seed, round, strategy, adaptation, rda, selected_ids, accuracy,
//!   macro_f1, per_class_accuracy, labeled_count, wall_ms`; floats carry 17
//!   significant digits.
//!
//! Every writer goes through a temp file in the destination directory that
//! is renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::adapt::{AdaptedModel, LinearProbe, PrototypeModel};
use crate::data::{FeaturePool, RoundRecord};
use crate::error::{Error, Result};
use crate::harness::RoundSummary;
use crate::retrieval::{CaptionCorpus, RetrievedSet, SynonymTable};

pub const FEATURE_MAGIC: &[u8; 4] = b"ALFP";
pub const MODEL_MAGIC: &[u8; 4] = b"ALMD";
pub const FORMAT_VERSION: u32 = 1;
const FEATURE_HEADER_LEN: usize = 20;

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, len: usize) -> &'a [u8] {
    let s = &bytes[*at..*at + len];
    *at += len;
    s
}

fn u32_at(bytes: &[u8], at: &mut usize) -> u32 {
    u32::from_le_bytes(take(bytes, at, 4).try_into().expect("4 bytes"))
}

fn u64_at(bytes: &[u8], at: &mut usize) -> u64 {
    u64::from_le_bytes(take(bytes, at, 8).try_into().expect("8 bytes"))
}

fn f64_at(bytes: &[u8], at: &mut usize) -> f64 {
    f64::from_le_bytes(take(bytes, at, 8).try_into().expect("8 bytes"))
}

/// Serializes ids and features; values are narrowed to `f32`.
pub fn encode_features(ids: &[u64], features: &Array2<f64>) -> Result<Vec<u8>> {
    let (n, d) = features.dim();
    if ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} rows", ids.len())));
    }
    let d32 = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?;
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * n * d + 8 * n);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for v in features.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

/// Parses and validates a feature file.
pub fn decode_features(bytes: &[u8]) -> Result<(Vec<u64>, Array2<f64>)> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Format(format!(
            "feature file is {} bytes, shorter than its header",
            bytes.len()
        )));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format("bad feature file magic".into()));
    }
    let mut at = 4;
    let version = u32_at(bytes, &mut at);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let n = u64_at(bytes, &mut at);
    let d = u32_at(bytes, &mut at) as u64;
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|b| b.checked_add(n.checked_mul(8)?))
        .and_then(|b| b.checked_add(FEATURE_HEADER_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::Format(format!(
            "feature file is {} bytes, header (n = {n}, d = {d}) requires {}",
            bytes.len(),
            expected.map_or_else(|| "overflow".to_string(), |e| e.to_string())
        )));
    }
    if d == 0 {
        return Err(Error::Format("feature dimension is zero".into()));
    }
    let (n, d) = (n as usize, d as usize);
    let values: Vec<f64> = bytes[at..at + 4 * n * d]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    at += 4 * n * d;
    let ids = (0..n).map(|_| u64_at(bytes, &mut at)).collect();
    Ok((ids, Array2::from_shape_vec((n, d), values).expect("n x d")))
}

pub fn write_features(path: &Path, ids: &[u64], features: &Array2<f64>) -> Result<()> {
    write_atomic(path, &encode_features(ids, features)?)
}

pub fn read_features(path: &Path) -> Result<(Vec<u64>, Array2<f64>)> {
    decode_features(&read_file(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads a feature file as a pool, attaching labels from `labels` when given.
/// Every pool id must have a label.
pub fn load_pool(
    path: &Path,
    labels: Option<&[(u64, usize)]>,
    num_classes: usize,
) -> Result<FeaturePool> {
    let (ids, features) = read_features(path)?;
    let labels = match labels {
        None => None,
        Some(pairs) => {
            let map: std::collections::HashMap<u64, usize> = pairs.iter().copied().collect();
            Some(
                ids.iter()
                    .map(|id| {
                        map.get(id).copied().ok_or_else(|| {
                            Error::DataInconsistency(format!(
                                "{}: id {id} has no label",
                                path.display()
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    FeaturePool::new(ids, features, labels, num_classes)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("invalid {what} {s:?}"),
    })
}

/// Reads `id,class` lines. Blank lines are skipped; a leading `id,class`
/// header is tolerated.
pub fn read_labels(path: &Path) -> Result<Vec<(u64, usize)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "id,class") {
            continue;
        }
        let (id, class) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: "expected id,class".into(),
        })?;
        out.push((
            parse_field(path, line_no, "id", id)?,
            parse_field(path, line_no, "class", class)?,
        ));
    }
    Ok(out)
}

pub fn encode_labels(ids: &[u64], labels: &[usize]) -> String {
    let mut s = String::new();
    for (id, c) in ids.iter().zip(labels) {
        let _ = writeln!(s, "{id},{c}");
    }
    s
}

/// Reads an `id<TAB>caption` corpus; blank lines are skipped.
pub fn read_captions(path: &Path) -> Result<CaptionCorpus> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, caption) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected id<TAB>caption".into(),
        })?;
        entries.push((parse_field(path, i + 1, "id", id)?, caption.to_string()));
    }
    CaptionCorpus::new(entries)
}

/// Reads a synonym table from TOML.
pub fn read_synonyms(path: &Path) -> Result<SynonymTable> {
    parse_synonyms(&read_text(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_synonyms(text: &str) -> Result<SynonymTable> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Format(e.to_string()))?;
    let mut problems = Vec::new();
    for key in doc.keys().filter(|k| *k != "class") {
        problems.push(format!("unknown key {key:?}"));
    }
    let classes = match doc.get("class") {
        Some(toml::Value::Array(a)) => a.clone(),
        _ => {
            problems.push("expected [[class]] tables".into());
            Vec::new()
        }
    };
    let mut out = Vec::new();
    for (i, entry) in classes.iter().enumerate() {
        let Some(t) = entry.as_table() else {
            problems.push(format!("class #{i} is not a table"));
            continue;
        };
        for key in t.keys().filter(|k| *k != "name" && *k != "synonyms") {
            problems.push(format!("class #{i}: unknown key {key:?}"));
        }
        let name = match t.get("name").and_then(|v| v.as_str()) {
            Some(n) => n.to_string(),
            None => {
                problems.push(format!("class #{i}: missing string `name`"));
                continue;
            }
        };
        let synonyms = match t.get("synonyms") {
            None => Vec::new(),
            Some(toml::Value::Array(a)) => a
                .iter()
                .filter_map(|v| match v.as_str() {
                    Some(s) => Some(s.to_string()),
                    None => {
                        problems.push(format!("class {name:?}: synonyms must be strings"));
                        None
                    }
                })
                .collect(),
            Some(_) => {
                problems.push(format!("class {name:?}: synonyms must be an array"));
                Vec::new()
            }
        };
        out.push((name, synonyms));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    SynonymTable::new(out)
}

/// `class,id` lines with class names, class-major then id order.
pub fn encode_retrieved(set: &RetrievedSet, names: &[String]) -> String {
    let mut s = String::new();
    for (id, k) in set.pairs() {
        let _ = writeln!(s, "{},{id}", names[k]);
    }
    s
}

/// Reads `class,id` lines; classes resolve through `names` or, when absent,
/// must be numeric indices below `num_classes`.
pub fn read_retrieved(
    path: &Path,
    names: Option<&SynonymTable>,
    num_classes: usize,
) -> Result<RetrievedSet> {
    let text = read_text(path)?;
    let mut per_class = vec![Vec::new(); num_classes];
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (class, id) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: "expected class,id".into(),
        })?;
        let k = match names.and_then(|n| n.class_index(class)) {
            Some(k) => k,
            None => parse_field::<usize>(path, line_no, "class", class)?,
        };
        if k >= num_classes {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("class {class:?} out of range"),
            });
        }
        per_class[k].push(parse_field(path, line_no, "id", id)?);
    }
    Ok(RetrievedSet::new(per_class))
}

pub fn encode_model(model: &AdaptedModel) -> Vec<u8> {
    let (kind, matrix, tail): (u32, &Array2<f64>, Vec<f64>) = match model {
        AdaptedModel::Linear(m) => (0, &m.weights, m.bias.to_vec()),
        AdaptedModel::Prototype(m) => {
            let p = m.prototypes();
            return encode_model_parts(1, &p.to_owned(), &[m.temperature()]);
        }
    };
    encode_model_parts(kind, matrix, &tail)
}

fn encode_model_parts(kind: u32, matrix: &Array2<f64>, tail: &[f64]) -> Vec<u8> {
    let (k, d) = matrix.dim();
    let mut out = Vec::with_capacity(28 + 8 * (k * d + tail.len()));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for v in matrix.iter().chain(tail) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<AdaptedModel> {
    if bytes.len() < 28 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut at = 4;
    let version = u32_at(bytes, &mut at);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let kind = u32_at(bytes, &mut at);
    let k = u64_at(bytes, &mut at) as usize;
    let d = u64_at(bytes, &mut at) as usize;
    let tail = match kind {
        0 => k,
        1 => 1,
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    };
    let expected = k
        .checked_mul(d)
        .and_then(|kd| kd.checked_add(tail))
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(28));
    if expected != Some(bytes.len()) {
        return Err(Error::Format("model checkpoint length does not match header".into()));
    }
    let matrix: Vec<f64> = (0..k * d).map(|_| f64_at(bytes, &mut at)).collect();
    let matrix = Array2::from_shape_vec((k, d), matrix).expect("k x d");
    let tail: Vec<f64> = (0..tail).map(|_| f64_at(bytes, &mut at)).collect();
    match kind {
        0 => Ok(LinearProbe::new(matrix, Array1::from(tail))?.into()),
        _ => {
            if !(tail[0] > 0.0 && tail[0].is_finite()) {
                return Err(Error::Format(format!("invalid temperature {}", tail[0])));
            }
            Ok(PrototypeModel::from_raw(matrix, tail[0]).into())
        }
    }
}

pub fn write_model(path: &Path, model: &AdaptedModel) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn read_model(path: &Path) -> Result<AdaptedModel> {
    decode_model(&read_file(path)?)
}

/// Seventeen significant digits, JSON-compatible.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Run-level fields repeated on every report line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportContext<'a> {
    pub strategy: &'a str,
    pub adaptation: &'a str,
    pub rda: bool,
}

pub fn report_line(ctx: &ReportContext<'_>, r: &RoundRecord) -> String {
    let ids = r
        .selected_ids
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let per_class = r
        .per_class_accuracy
        .iter()
        .map(|&v| format_float(v))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "{{\"seed\":{},\"round\":{},\"strategy\":{},\"adaptation\":{},\"rda\":{},\
         \"selected_ids\":[{ids}],\"accuracy\":{},\"macro_f1\":{},\
         \"per_class_accuracy\":[{per_class}],\"labeled_count\":{},\"wall_ms\":{}}}",
        r.seed,
        r.round,
        serde_json::Value::from(ctx.strategy),
        serde_json::Value::from(ctx.adaptation),
        ctx.rda,
        format_float(r.accuracy),
        format_float(r.macro_f1),
        r.labeled_count,
        r.wall_ms,
    )
}

pub fn encode_report(ctx: &ReportContext<'_>, records: &[RoundRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&report_line(ctx, r));
        s.push('\n');
    }
    s
}

/// One parsed report line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub seed: u64,
    pub round: usize,
    pub strategy: String,
    pub per_class_accuracy: Vec<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

pub fn parse_report(path: &Path) -> Result<Vec<ReportEntry>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let field = |k: &str| v.get(k).ok_or_else(|| err(format!("missing key {k:?}")));
        let num = |k: &str| -> Result<f64> {
            field(k)?.as_f64().ok_or_else(|| err(format!("{k} is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            field(k)?.as_u64().ok_or_else(|| err(format!("{k} is not an integer")))
        };
        let per_class = field("per_class_accuracy")?
            .as_array()
            .ok_or_else(|| err("per_class_accuracy is not an array".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| err("non-numeric per-class accuracy".into())))
            .collect::<Result<Vec<_>>>()?;
        out.push(ReportEntry {
            seed: int("seed")?,
            round: int("round")? as usize,
            strategy: field("strategy")?.as_str().unwrap_or_default().to_string(),
            per_class_accuracy: per_class,
            accuracy: num("accuracy")?,
            macro_f1: num("macro_f1")?,
        });
    }
    Ok(out)
}

pub fn encode_summary(ctx: &ReportContext<'_>, summary: &[RoundSummary]) -> String {
    let mut s = String::from(
        "strategy,adaptation,rda,round,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std\n",
    );
    for r in summary {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            ctx.strategy,
            ctx.adaptation,
            ctx.rda,
            r.round,
            r.runs,
            format_float(r.accuracy_mean),
            format_float(r.accuracy_std),
            format_float(r.macro_f1_mean),
            format_float(r.macro_f1_std),
        );
    }
    s
}
