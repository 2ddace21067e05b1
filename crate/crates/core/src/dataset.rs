//! Factuality dataset adapters.
//!
//! Source datasets ship in heterogeneous JSONL/CSV layouts. An
//! [`AdapterManifest`] maps a source's columns and label vocabulary onto the
//! canonical [`LabeledPair`] record; every supported format has a built-in
//! manifest that can be replaced by a TOML file.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Binary factuality label; the positive class is `Factual`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Factual,
    NonFactual,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::Factual => Label::NonFactual,
            Label::NonFactual => Label::Factual,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Factual => "factual",
            Label::NonFactual => "non_factual",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// FRANK error typology, grouped into its three top-level categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    SemanticFrame,
    Discourse,
    ContentVerifiability,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [
        ErrorCategory::SemanticFrame,
        ErrorCategory::Discourse,
        ErrorCategory::ContentVerifiability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::SemanticFrame => "semantic_frame",
            ErrorCategory::Discourse => "discourse",
            ErrorCategory::ContentVerifiability => "content_verifiability",
        }
    }
}

impl FromStr for ErrorCategory {
    type Err = String;

    /// Accepts category names and FRANK error codes (`EntE`, `CorefE`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match key.as_str() {
            "semantic_frame" | "prede" | "ente" | "circe" => Ok(ErrorCategory::SemanticFrame),
            "discourse" | "corefe" | "linke" => Ok(ErrorCategory::Discourse),
            "content_verifiability" | "oute" | "grame" => Ok(ErrorCategory::ContentVerifiability),
            _ => Err(format!("unknown error category `{s}`")),
        }
    }
}

/// Canonical labeled (summary, document) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id: String,
    pub summary: String,
    pub document: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_categories: Option<BTreeSet<ErrorCategory>>,
}

/// Label as found in the source, before three-way labels are binarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawLabel {
    Factual,
    NonFactual,
    Support,
    Refute,
    Nei,
}

impl FromStr for RawLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "factual" => Ok(RawLabel::Factual),
            "non_factual" | "non-factual" => Ok(RawLabel::NonFactual),
            "support" => Ok(RawLabel::Support),
            "refute" => Ok(RawLabel::Refute),
            "nei" => Ok(RawLabel::Nei),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// A loaded record that still carries its source label.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePair {
    pub id: String,
    pub summary: String,
    pub document: String,
    pub raw_label: RawLabel,
    pub subset: Option<String>,
    pub human_score: Option<f64>,
    pub error_categories: Option<BTreeSet<ErrorCategory>>,
}

impl SourcePair {
    fn with_label(self, label: Label) -> LabeledPair {
        LabeledPair {
            id: self.id,
            summary: self.summary,
            document: self.document,
            label,
            subset: self.subset,
            human_score: self.human_score,
            error_categories: self.error_categories,
        }
    }

    /// Binary records convert directly; three-way records need [`drop_nei`].
    pub fn into_labeled(self) -> Result<LabeledPair, DatasetError> {
        match self.raw_label {
            RawLabel::Factual => Ok(self.with_label(Label::Factual)),
            RawLabel::NonFactual => Ok(self.with_label(Label::NonFactual)),
            other => Err(DatasetError::ThreeWayLabel {
                id: self.id,
                label: other,
            }),
        }
    }
}

impl From<LabeledPair> for SourcePair {
    fn from(p: LabeledPair) -> Self {
        SourcePair {
            id: p.id,
            summary: p.summary,
            document: p.document,
            raw_label: match p.label {
                Label::Factual => RawLabel::Factual,
                Label::NonFactual => RawLabel::NonFactual,
            },
            subset: p.subset,
            human_score: p.human_score,
            error_categories: p.error_categories,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),
    #[error("invalid adapter manifest: {0}")]
    Manifest(String),
    #[error("record {line}: missing required column `{column}`")]
    MissingColumn { line: usize, column: String },
    #[error("record {line}: unparseable label `{value}`")]
    Label { line: usize, value: String },
    #[error("record {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("record `{id}` has three-way label {label:?}; drop NEI records first")]
    ThreeWayLabel { id: String, label: RawLabel },
    #[error("record {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Factcollect,
    Covidfact,
    Healthver,
    Scifact,
    Frank,
    Canonical,
}

impl DatasetFormat {
    pub const ALL: [DatasetFormat; 6] = [
        DatasetFormat::Factcollect,
        DatasetFormat::Covidfact,
        DatasetFormat::Healthver,
        DatasetFormat::Scifact,
        DatasetFormat::Frank,
        DatasetFormat::Canonical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::Factcollect => "factcollect",
            DatasetFormat::Covidfact => "covidfact",
            DatasetFormat::Healthver => "healthver",
            DatasetFormat::Scifact => "scifact",
            DatasetFormat::Frank => "frank",
            DatasetFormat::Canonical => "canonical",
        }
    }

    /// Whether the source labels are support/refute/NEI.
    pub fn is_three_way(self) -> bool {
        matches!(self, DatasetFormat::Healthver | DatasetFormat::Scifact)
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetFormat::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| DatasetError::UnknownFormat(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileType {
    Jsonl,
    Csv,
    Tsv,
}

/// Source column names for each canonical field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    /// Joined with `/` to form the record id; empty means "use the record number".
    #[serde(default)]
    pub id: Vec<String>,
    pub summary: String,
    pub document: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_categories: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterManifest {
    pub format: DatasetFormat,
    pub file_type: FileType,
    /// Without a label column, records with `human_score >= label_from_score` are factual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_from_score: Option<f64>,
    pub columns: ColumnMap,
    /// Source label value (case-insensitive) -> raw label.
    #[serde(default)]
    pub labels: BTreeMap<String, RawLabel>,
}

const FACTCOLLECT_MANIFEST: &str = r#"
format = "factcollect"
file_type = "jsonl"

[columns]
id = ["id"]
summary = "summary"
document = "article"
label = "label"
subset = "dataset"

[labels]
CORRECT = "factual"
INCORRECT = "non_factual"
1 = "factual"
0 = "non_factual"
"#;

const COVIDFACT_MANIFEST: &str = r#"
format = "covidfact"
file_type = "jsonl"

[columns]
id = ["id"]
summary = "claim"
document = "evidence"
label = "label"

[labels]
SUPPORTED = "factual"
SUPPORT = "factual"
SUPPORTS = "factual"
REFUTED = "non_factual"
REFUTE = "non_factual"
REFUTES = "non_factual"
"#;

const THREE_WAY_LABELS: &str = r#"
[labels]
SUPPORT = "support"
SUPPORTS = "support"
SUPPORTED = "support"
REFUTE = "refute"
REFUTES = "refute"
REFUTED = "refute"
CONTRADICT = "refute"
NEI = "nei"
NOINFO = "nei"
NOT_ENOUGH_INFO = "nei"
"NOT ENOUGH INFO" = "nei"
"#;

const HEALTHVER_COLUMNS: &str = r#"
format = "healthver"
file_type = "jsonl"

[columns]
id = ["id"]
summary = "claim"
document = "evidence"
label = "label"
"#;

const SCIFACT_COLUMNS: &str = r#"
format = "scifact"
file_type = "jsonl"

[columns]
id = ["id"]
summary = "claim"
document = "evidence"
label = "label"
"#;

const FRANK_MANIFEST: &str = r#"
format = "frank"
file_type = "jsonl"
label_from_score = 1.0

[columns]
id = ["hash", "model_name"]
summary = "summary"
document = "article"
human_score = "Factuality"
error_categories = "error_categories"
"#;

const CANONICAL_MANIFEST: &str = r#"
format = "canonical"
file_type = "jsonl"

[columns]
id = ["id"]
summary = "summary"
document = "document"
label = "label"
subset = "subset"
human_score = "human_score"
error_categories = "error_categories"

[labels]
factual = "factual"
non_factual = "non_factual"
"#;

impl AdapterManifest {
    /// The default column mapping for `format`.
    pub fn builtin(format: DatasetFormat) -> AdapterManifest {
        let text = match format {
            DatasetFormat::Factcollect => FACTCOLLECT_MANIFEST.to_owned(),
            DatasetFormat::Covidfact => COVIDFACT_MANIFEST.to_owned(),
            DatasetFormat::Healthver => format!("{HEALTHVER_COLUMNS}{THREE_WAY_LABELS}"),
            DatasetFormat::Scifact => format!("{SCIFACT_COLUMNS}{THREE_WAY_LABELS}"),
            DatasetFormat::Frank => FRANK_MANIFEST.to_owned(),
            DatasetFormat::Canonical => CANONICAL_MANIFEST.to_owned(),
        };
        AdapterManifest::from_toml_str(&text).expect("built-in manifests parse")
    }

    pub fn from_toml_str(text: &str) -> Result<AdapterManifest, DatasetError> {
        let manifest: AdapterManifest =
            toml::from_str(text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if manifest.columns.label.is_none() && manifest.label_from_score.is_none() {
            return Err(DatasetError::Manifest(
                "either columns.label or label_from_score is required".into(),
            ));
        }
        if manifest.label_from_score.is_some() && manifest.columns.human_score.is_none() {
            return Err(DatasetError::Manifest(
                "label_from_score needs columns.human_score".into(),
            ));
        }
        Ok(manifest)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn lookup_label(&self, value: &str) -> Option<RawLabel> {
        let key = value.trim();
        self.labels
            .iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
            .map(|(_, v)| *v)
            .or_else(|| key.parse().ok())
    }
}

type Row = HashMap<String, Value>;

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        other => Some(other.to_string()),
    }
}

fn read_rows<R: Read>(source: R, file_type: FileType) -> Result<Vec<(usize, Row)>, DatasetError> {
    match file_type {
        FileType::Jsonl => {
            let mut rows = Vec::new();
            for (i, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row =
                    serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                        line: i + 1,
                        source,
                    })?;
                rows.push((i + 1, row));
            }
            Ok(rows)
        }
        FileType::Csv | FileType::Tsv => {
            let delimiter = if file_type == FileType::Tsv {
                b'\t'
            } else {
                b','
            };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .from_reader(source);
            let headers = reader.headers()?.clone();
            let mut rows = Vec::new();
            for (i, record) in reader.records().enumerate() {
                let record = record?;
                let row = headers
                    .iter()
                    .zip(record.iter())
                    .map(|(h, v)| (h.to_owned(), Value::String(v.to_owned())))
                    .collect();
                // header is line 1
                rows.push((i + 2, row));
            }
            Ok(rows)
        }
    }
}

fn parse_categories(line: usize, v: &Value) -> Result<BTreeSet<ErrorCategory>, DatasetError> {
    let items: Vec<String> = match v {
        Value::Array(items) => items.iter().filter_map(value_text).collect(),
        Value::String(s) => s
            .split([';', ','])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect(),
        Value::Null => Vec::new(),
        other => {
            return Err(DatasetError::Invalid {
                line,
                reason: format!("error categories must be a list or string, found {other}"),
            })
        }
    };
    items
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|reason| DatasetError::Invalid { line, reason })
        })
        .collect()
}

fn parse_row(
    line: usize,
    row: &Row,
    manifest: &AdapterManifest,
) -> Result<SourcePair, DatasetError> {
    let cols = &manifest.columns;
    let required = |column: &str| -> Result<String, DatasetError> {
        row.get(column)
            .and_then(value_text)
            .ok_or_else(|| DatasetError::MissingColumn {
                line,
                column: column.to_owned(),
            })
    };
    let optional = |column: &Option<String>| column.as_ref().and_then(|c| row.get(c));

    let id = if cols.id.is_empty() {
        format!("{}-{line}", manifest.format)
    } else {
        cols.id
            .iter()
            .map(|c| required(c))
            .collect::<Result<Vec<_>, _>>()?
            .join("/")
    };
    let summary = required(&cols.summary)?;
    let document = required(&cols.document)?;
    if summary.trim().is_empty() || document.trim().is_empty() {
        return Err(DatasetError::Invalid {
            line,
            reason: format!("record `{id}` has an empty summary or document"),
        });
    }

    let human_score = match optional(&cols.human_score).and_then(value_text) {
        None => None,
        Some(text) => {
            let score: f64 = text.trim().parse().map_err(|_| DatasetError::Invalid {
                line,
                reason: format!("human score `{text}` is not a number"),
            })?;
            if !score.is_finite() {
                return Err(DatasetError::Invalid {
                    line,
                    reason: format!("human score `{text}` is not finite"),
                });
            }
            Some(score)
        }
    };

    let raw_label = match &cols.label {
        Some(column) => {
            let value = required(column)?;
            manifest
                .lookup_label(&value)
                .ok_or(DatasetError::Label { line, value })?
        }
        None => {
            let threshold = manifest.label_from_score.expect("checked by manifest");
            match human_score {
                Some(s) if s >= threshold => RawLabel::Factual,
                Some(_) => RawLabel::NonFactual,
                None => {
                    return Err(DatasetError::MissingColumn {
                        line,
                        column: cols.human_score.clone().unwrap_or_default(),
                    })
                }
            }
        }
    };

    let subset = optional(&cols.subset).and_then(value_text);
    let error_categories = optional(&cols.error_categories)
        .map(|v| parse_categories(line, v))
        .transpose()?;

    Ok(SourcePair {
        id,
        summary,
        document,
        raw_label,
        subset,
        human_score,
        error_categories,
    })
}

/// Loads every record of `source` according to `manifest`.
pub fn load_pairs<R: Read>(
    source: R,
    manifest: &AdapterManifest,
) -> Result<Vec<SourcePair>, DatasetError> {
    read_rows(source, manifest.file_type)?
        .iter()
        .map(|(line, row)| parse_row(*line, row, manifest))
        .collect()
}

/// Loads a canonical pairs file.
pub fn load_canonical<R: Read>(source: R) -> Result<Vec<LabeledPair>, DatasetError> {
    load_pairs(source, &AdapterManifest::builtin(DatasetFormat::Canonical))?
        .into_iter()
        .map(SourcePair::into_labeled)
        .collect()
}

/// Removes NEI records and maps support -> factual, refute -> non-factual.
/// Binary records pass through unchanged; order is preserved.
pub fn drop_nei(pairs: Vec<SourcePair>) -> Vec<LabeledPair> {
    pairs
        .into_iter()
        .filter_map(|p| match p.raw_label {
            RawLabel::Nei => None,
            RawLabel::Support | RawLabel::Factual => Some(p.with_label(Label::Factual)),
            RawLabel::Refute | RawLabel::NonFactual => Some(p.with_label(Label::NonFactual)),
        })
        .collect()
}

/// Drops pairs whose subset tag is in `excluded`.
pub fn exclude_subsets(pairs: Vec<LabeledPair>, excluded: &[String]) -> Vec<LabeledPair> {
    pairs
        .into_iter()
        .filter(|p| {
            p.subset
                .as_ref()
                .is_none_or(|s| !excluded.iter().any(|e| e.eq_ignore_ascii_case(s)))
        })
        .collect()
}

/// Classifier input: `summary [SEP] document`.
pub fn format_pair_input(pair: &LabeledPair) -> String {
    format!("{} [SEP] {}", pair.summary, pair.document)
}

pub fn write_pairs<'a, W, I>(pairs: I, mut sink: W) -> Result<usize, DatasetError>
where
    W: Write,
    I: IntoIterator<Item = &'a LabeledPair>,
{
    let mut n = 0;
    for pair in pairs {
        serde_json::to_writer(&mut sink, pair).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
        n += 1;
    }
    sink.flush()?;
    Ok(n)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub dev: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    /// Expected (train, dev, test) sizes.
    pub expected_counts: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitSize {
    pub split: &'static str,
    pub actual: usize,
    pub expected: Option<usize>,
    pub factual: usize,
    pub non_factual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlappingId {
    pub id: String,
    pub splits: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub passed: bool,
    pub sizes_match: bool,
    pub ids_disjoint: bool,
    pub splits: Vec<SplitSize>,
    pub overlapping_ids: Vec<OverlappingId>,
}

/// Checks sizes against the expectation, id disjointness, and label balance.
pub fn verify_split(split: &DatasetSplit) -> SplitReport {
    let parts: [(&'static str, &[LabeledPair]); 3] = [
        ("train", &split.train),
        ("dev", &split.dev),
        ("test", &split.test),
    ];
    let mut sizes = Vec::new();
    let mut sizes_match = true;
    let mut membership: BTreeMap<&str, Vec<&'static str>> = BTreeMap::new();
    for (i, (name, pairs)) in parts.iter().enumerate() {
        let expected = split.expected_counts.map(|c| c[i]);
        if expected.is_some_and(|e| e != pairs.len()) {
            sizes_match = false;
        }
        let factual = pairs.iter().filter(|p| p.label == Label::Factual).count();
        sizes.push(SplitSize {
            split: name,
            actual: pairs.len(),
            expected,
            factual,
            non_factual: pairs.len() - factual,
        });
        let mut seen = HashSet::new();
        for p in pairs.iter() {
            if seen.insert(p.id.as_str()) {
                membership.entry(p.id.as_str()).or_default().push(name);
            }
        }
    }
    let overlapping_ids: Vec<_> = membership
        .into_iter()
        .filter(|(_, splits)| splits.len() > 1)
        .map(|(id, splits)| OverlappingId {
            id: id.to_owned(),
            splits,
        })
        .collect();
    let ids_disjoint = overlapping_ids.is_empty();
    SplitReport {
        passed: sizes_match && ids_disjoint,
        sizes_match,
        ids_disjoint,
        splits: sizes,
        overlapping_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(format: DatasetFormat) -> AdapterManifest {
        AdapterManifest::builtin(format)
    }

    fn pair(id: &str, label: Label) -> LabeledPair {
        LabeledPair {
            id: id.into(),
            summary: "s".into(),
            document: "d".into(),
            label,
            subset: None,
            human_score: None,
            error_categories: None,
        }
    }

    #[test]
    fn builtin_manifests_parse() {
        for format in DatasetFormat::ALL {
            let m = manifest(format);
            assert_eq!(m.format, format);
            let again = AdapterManifest::from_toml_str(&m.to_toml_string()).unwrap();
            assert_eq!(again, m);
        }
    }

    #[test]
    fn factcollect_row() {
        let row = r#"{"id": 17, "summary": "a.", "article": "b.", "label": "CORRECT", "dataset": "cnndm"}"#;
        let pairs = load_pairs(row.as_bytes(), &manifest(DatasetFormat::Factcollect)).unwrap();
        assert_eq!(pairs.len(), 1);
        let p = pairs.into_iter().next().unwrap().into_labeled().unwrap();
        assert_eq!(p.id, "17");
        assert_eq!(p.label, Label::Factual);
        assert_eq!(p.subset.as_deref(), Some("cnndm"));
    }

    #[test]
    fn healthver_three_way() {
        let rows = "{\"id\":\"1\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"Supports\"}\n\
                    {\"id\":\"2\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"Refutes\"}\n\
                    {\"id\":\"3\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"Neutral\"}\n";
        let err = load_pairs(rows.as_bytes(), &manifest(DatasetFormat::Healthver)).unwrap_err();
        assert!(matches!(err, DatasetError::Label { line: 3, .. }));

        let rows = rows.replace("Neutral", "NEI");
        let pairs = load_pairs(rows.as_bytes(), &manifest(DatasetFormat::Healthver)).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[2].raw_label, RawLabel::Nei);
        assert!(pairs[0].clone().into_labeled().is_err());
    }

    #[test]
    fn drop_nei_fixture() {
        let raw = [
            RawLabel::Support,
            RawLabel::Nei,
            RawLabel::Refute,
            RawLabel::Support,
            RawLabel::Nei,
            RawLabel::Refute,
        ];
        let pairs: Vec<SourcePair> = raw
            .iter()
            .enumerate()
            .map(|(i, &l)| SourcePair {
                raw_label: l,
                ..SourcePair::from(pair(&i.to_string(), Label::Factual))
            })
            .collect();
        let out = drop_nei(pairs);
        let ids: Vec<_> = out.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["0", "2", "3", "5"]);
        let labels: Vec<_> = out.iter().map(|p| p.label).collect();
        assert_eq!(
            labels,
            [
                Label::Factual,
                Label::NonFactual,
                Label::Factual,
                Label::NonFactual
            ]
        );

        let all_nei = vec![SourcePair {
            raw_label: RawLabel::Nei,
            ..SourcePair::from(pair("x", Label::Factual))
        }];
        assert!(drop_nei(all_nei).is_empty());
    }

    #[test]
    fn frank_scores_and_categories() {
        let row = r#"{"hash":"h1","model_name":"bart","summary":"s","article":"a","Factuality":0.5,"error_categories":["EntE","CorefE"]}
{"hash":"h1","model_name":"pgn","summary":"s","article":"a","Factuality":1.0,"error_categories":[]}"#;
        let pairs: Vec<_> = load_pairs(row.as_bytes(), &manifest(DatasetFormat::Frank))
            .unwrap()
            .into_iter()
            .map(|p| p.into_labeled().unwrap())
            .collect();
        assert_eq!(pairs[0].id, "h1/bart");
        assert_eq!(pairs[0].human_score, Some(0.5));
        assert_eq!(pairs[0].label, Label::NonFactual);
        assert_eq!(
            pairs[0].error_categories,
            Some(BTreeSet::from([
                ErrorCategory::SemanticFrame,
                ErrorCategory::Discourse
            ]))
        );
        assert_eq!(pairs[1].label, Label::Factual);
    }

    #[test]
    fn csv_source_with_custom_manifest() {
        let m = AdapterManifest::from_toml_str(
            r#"
format = "covidfact"
file_type = "csv"
[columns]
id = ["claim_id"]
summary = "claim"
document = "evidence"
label = "verdict"
[labels]
true = "factual"
false = "non_factual"
"#,
        )
        .unwrap();
        let text = "claim_id,claim,evidence,verdict\n1,\"x, y\",e,true\n2,z,e,false\n";
        let pairs = load_pairs(text.as_bytes(), &m).unwrap();
        assert_eq!(pairs[0].summary, "x, y");
        assert_eq!(pairs[1].raw_label, RawLabel::NonFactual);

        let missing = "claim_id,claim,verdict\n1,x,true\n";
        let err = load_pairs(missing.as_bytes(), &m).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn { line: 2, .. }));
    }

    #[test]
    fn empty_text_rejected() {
        let row = r#"{"id":"1","summary":"  ","article":"b","label":"CORRECT"}"#;
        let err = load_pairs(row.as_bytes(), &manifest(DatasetFormat::Factcollect)).unwrap_err();
        assert!(matches!(err, DatasetError::Invalid { line: 1, .. }));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "fever".parse::<DatasetFormat>(),
            Err(DatasetError::UnknownFormat(_))
        ));
        assert_eq!(
            "SciFact".parse::<DatasetFormat>().unwrap(),
            DatasetFormat::Scifact
        );
    }

    #[test]
    fn pair_input_format() {
        let mut p = pair("1", Label::Factual);
        p.summary = "a.".into();
        p.document = "b.".into();
        assert_eq!(format_pair_input(&p), "a. [SEP] b.");
        p.summary = "x [SEP] y".into();
        assert_eq!(format_pair_input(&p), "x [SEP] y [SEP] b.");
    }

    #[test]
    fn subset_exclusion() {
        let mut a = pair("a", Label::Factual);
        a.subset = Some("frank".into());
        let b = pair("b", Label::Factual);
        let kept = exclude_subsets(vec![a, b], &["FRANK".into()]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "b");
    }

    #[test]
    fn split_verification() {
        let split = DatasetSplit {
            train: vec![pair("1", Label::Factual), pair("2", Label::NonFactual)],
            dev: vec![pair("3", Label::Factual)],
            test: vec![pair("4", Label::NonFactual)],
            expected_counts: Some([2, 1, 1]),
        };
        let report = verify_split(&split);
        assert!(report.passed);
        assert_eq!(report.splits[0].factual, 1);

        let mut overlap = split.clone();
        overlap.test.push(pair("2", Label::Factual));
        let report = verify_split(&overlap);
        assert!(!report.passed);
        assert!(!report.sizes_match);
        assert_eq!(report.overlapping_ids.len(), 1);
        assert_eq!(report.overlapping_ids[0].id, "2");
        assert_eq!(report.overlapping_ids[0].splits, ["train", "test"]);
    }

    #[test]
    fn canonical_round_trip() {
        let mut p = pair("1", Label::NonFactual);
        p.subset = Some("xsum".into());
        p.human_score = Some(0.25);
        p.error_categories = Some(BTreeSet::from([ErrorCategory::ContentVerifiability]));
        let pairs = vec![p, pair("2", Label::Factual)];
        let mut buf = Vec::new();
        write_pairs(&pairs, &mut buf).unwrap();
        assert_eq!(load_canonical(buf.as_slice()).unwrap(), pairs);
    }
}
