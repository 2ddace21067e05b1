//! Classification and correlation metrics for factuality classifiers.
//!
//! Undefined statistics (single-class gold labels, zero-variance inputs) are
//! reported as [`MetricError`]s rather than NaN or zero.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dataset::{ErrorCategory, Label, LabeledPair};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} gold vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("balanced accuracy undefined: gold labels contain only `{0}`")]
    SingleClassGold(Label),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("exact permutation p-value supports n <= {max}, got {n}")]
    PermutationTooLarge { n: usize, max: usize },
    #[error("no prediction for gold id `{0}`")]
    MissingPrediction(String),
    #[error("duplicate prediction id `{0}`")]
    DuplicatePrediction(String),
    #[error("duplicate gold id `{0}`")]
    DuplicateGold(String),
    #[error("gold pair `{0}` has no human score")]
    MissingHumanScore(String),
    #[error("invalid prediction record{}: {reason}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    InvalidPrediction { line: Option<usize>, reason: String },
}

/// Classifier output for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub pred_label: Label,
    /// Probability of the factual class.
    pub score_factual: f64,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if !self.score_factual.is_finite() || !(0.0..=1.0).contains(&self.score_factual) {
            return Err(format!(
                "score_factual {} of `{}` outside [0, 1]",
                self.score_factual, self.id
            ));
        }
        Ok(())
    }
}

pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<PredictionRecord>, MetricError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let invalid = |reason: String| MetricError::InvalidPrediction {
            line: Some(i + 1),
            reason,
        };
        let line = line.map_err(|e| invalid(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        record.validate().map_err(invalid)?;
        out.push(record);
    }
    Ok(out)
}

/// Binary confusion counts with `Factual` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(gold: &[Label], pred: &[Label]) -> Result<Self, MetricError> {
        if gold.len() != pred.len() {
            return Err(MetricError::LengthMismatch(gold.len(), pred.len()));
        }
        if gold.is_empty() {
            return Err(MetricError::Empty);
        }
        let mut cm = ConfusionMatrix::default();
        for (&g, &p) in gold.iter().zip(pred) {
            match (g, p) {
                (Label::Factual, Label::Factual) => cm.tp += 1,
                (Label::NonFactual, Label::Factual) => cm.fp += 1,
                (Label::NonFactual, Label::NonFactual) => cm.tn += 1,
                (Label::Factual, Label::NonFactual) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Mean of the true-positive and true-negative rates.
    pub fn balanced_accuracy(&self) -> Result<f64, MetricError> {
        let positives = self.tp + self.fn_;
        let negatives = self.tn + self.fp;
        if positives == 0 {
            return Err(MetricError::SingleClassGold(Label::NonFactual));
        }
        if negatives == 0 {
            return Err(MetricError::SingleClassGold(Label::Factual));
        }
        let tpr = self.tp as f64 / positives as f64;
        let tnr = self.tn as f64 / negatives as f64;
        Ok((tpr + tnr) / 2.0)
    }

    /// F1 micro-averaged over both classes.
    ///
    /// Each error is a false positive for one class and a false negative for the
    /// other, so in single-label binary classification this equals accuracy.
    pub fn micro_f1(&self) -> f64 {
        // per-class (tp, fp, fn): factual = (tp, fp, fn_), non-factual = (tn, fn_, fp)
        let tp = (self.tp + self.tn) as f64;
        let fp = (self.fp + self.fn_) as f64;
        let fn_ = (self.fn_ + self.fp) as f64;
        if tp == 0.0 {
            return 0.0;
        }
        let precision = tp / (tp + fp);
        let recall = tp / (tp + fn_);
        2.0 * precision * recall / (precision + recall)
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

pub fn balanced_accuracy(gold: &[Label], pred: &[Label]) -> Result<f64, MetricError> {
    ConfusionMatrix::from_labels(gold, pred)?.balanced_accuracy()
}

pub fn micro_f1(gold: &[Label], pred: &[Label]) -> Result<f64, MetricError> {
    Ok(ConfusionMatrix::from_labels(gold, pred)?.micro_f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Two-sided Student-t test on `r * sqrt((n-2)/(1-r^2))` with n-2 degrees of freedom.
    #[default]
    StudentT,
    /// Exact two-sided permutation test over all n! orderings (small n only).
    ExactPermutation,
}

/// Largest sample the exact permutation test accepts (9! = 362,880 orderings).
pub const MAX_PERMUTATION_N: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::UndefinedCorrelation(format!(
            "need at least 2 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::UndefinedCorrelation("non-finite input".into()));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|&a| a == v[0]) {
            return Err(MetricError::UndefinedCorrelation(format!(
                "{name} has zero variance"
            )));
        }
    }
    Ok(())
}

/// Product-moment coefficient, inputs already checked.
fn product_moment(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    // Exactly collinear inputs can land a few ulps short of 1.
    if 1.0 - r.abs() <= 8.0 * f64::EPSILON {
        r.signum()
    } else {
        r
    }
}

/// Two-sided Student-t p-value for a correlation coefficient.
pub fn t_test_p_value(r: f64, n: usize) -> f64 {
    if n <= 2 {
        // Two points always fit a line exactly.
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Fraction of orderings of `y` whose |r| reaches the observed |r|.
fn permutation_p_value(x: &[f64], y: &[f64], observed: f64) -> Result<f64, MetricError> {
    let n = x.len();
    if n > MAX_PERMUTATION_N {
        return Err(MetricError::PermutationTooLarge {
            n,
            max: MAX_PERMUTATION_N,
        });
    }
    let threshold = observed.abs() - 1e-12;
    let mut perm = y.to_vec();
    let mut hits = 0u64;
    let mut total = 0u64;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let mut visit = |p: &[f64]| {
        total += 1;
        if product_moment(x, p).abs() >= threshold {
            hits += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

fn correlation(
    x: &[f64],
    y: &[f64],
    method: PValueMethod,
) -> Result<CorrelationResult, MetricError> {
    let r = product_moment(x, y);
    let p_value = match method {
        PValueMethod::StudentT => t_test_p_value(r, x.len()),
        PValueMethod::ExactPermutation => permutation_p_value(x, y, r)?,
    };
    Ok(CorrelationResult {
        coefficient: r,
        p_value,
        n: x.len(),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, MetricError> {
    pearson_with(x, y, PValueMethod::StudentT)
}

pub fn pearson_with(
    x: &[f64],
    y: &[f64],
    method: PValueMethod,
) -> Result<CorrelationResult, MetricError> {
    check_pair(x, y)?;
    correlation(x, y, method)
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, MetricError> {
    spearman_with(x, y, PValueMethod::StudentT)
}

/// Pearson correlation of average ranks.
pub fn spearman_with(
    x: &[f64],
    y: &[f64],
    method: PValueMethod,
) -> Result<CorrelationResult, MetricError> {
    check_pair(x, y)?;
    correlation(&average_ranks(x), &average_ranks(y), method)
}

/// Per-group classification scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    /// `None` when undefined for this group; see `note`.
    pub bacc: Option<f64>,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub rows: Vec<GroupRow>,
    /// Predictions whose id is not in the gold set (ignored).
    pub unmatched_predictions: usize,
}

pub const ALL_GROUP: &str = "all";
pub const UNTAGGED_GROUP: &str = "untagged";

fn index_predictions(
    predictions: &[PredictionRecord],
) -> Result<HashMap<&str, &PredictionRecord>, MetricError> {
    let mut by_id = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(MetricError::DuplicatePrediction(p.id.clone()));
        }
    }
    Ok(by_id)
}

/// Joins gold pairs to predictions by id, returning matched predictions in gold order.
fn join<'p>(
    gold: &[LabeledPair],
    predictions: &'p [PredictionRecord],
) -> Result<(Vec<&'p PredictionRecord>, usize), MetricError> {
    let by_id = index_predictions(predictions)?;
    let mut seen = HashSet::with_capacity(gold.len());
    let mut matched = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(MetricError::DuplicateGold(g.id.clone()));
        }
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| MetricError::MissingPrediction(g.id.clone()))?;
        matched.push(*p);
    }
    Ok((matched, predictions.len() - gold.len()))
}

fn group_row(group: &str, gold: &[Label], pred: &[Label]) -> Result<GroupRow, MetricError> {
    let cm = ConfusionMatrix::from_labels(gold, pred)?;
    let (bacc, note) = match cm.balanced_accuracy() {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(GroupRow {
        group: group.to_owned(),
        n: cm.total(),
        bacc,
        f1: cm.micro_f1(),
        confusion: cm,
        note,
    })
}

/// Scores predictions against gold pairs: an overall row, then one row per
/// subset tag when `group_by_subset` is set.
///
/// The overall balanced accuracy must be defined; per-subset rows whose gold
/// labels are single-class carry `bacc: None` and a note.
pub fn evaluate_classification(
    gold: &[LabeledPair],
    predictions: &[PredictionRecord],
    group_by_subset: bool,
) -> Result<ClassificationReport, MetricError> {
    let (matched, unmatched) = join(gold, predictions)?;
    let gold_labels: Vec<Label> = gold.iter().map(|g| g.label).collect();
    let pred_labels: Vec<Label> = matched.iter().map(|p| p.pred_label).collect();

    ConfusionMatrix::from_labels(&gold_labels, &pred_labels)?.balanced_accuracy()?;
    let mut rows = vec![group_row(ALL_GROUP, &gold_labels, &pred_labels)?];

    if group_by_subset {
        let mut groups: BTreeMap<&str, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
        for (i, g) in gold.iter().enumerate() {
            let key = g.subset.as_deref().unwrap_or(UNTAGGED_GROUP);
            let entry = groups.entry(key).or_default();
            entry.0.push(gold_labels[i]);
            entry.1.push(pred_labels[i]);
        }
        for (name, (g, p)) in &groups {
            rows.push(group_row(name, g, p)?);
        }
    }
    Ok(ClassificationReport {
        rows,
        unmatched_predictions: unmatched,
    })
}

/// Which prediction field is correlated with human scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// `score_factual`.
    #[default]
    Probability,
    /// 1.0 for a factual prediction, 0.0 otherwise.
    Binary,
}

impl ScoreSource {
    pub fn score(self, p: &PredictionRecord) -> f64 {
        match self {
            ScoreSource::Probability => p.score_factual,
            ScoreSource::Binary => match p.pred_label {
                Label::Factual => 1.0,
                Label::NonFactual => 0.0,
            },
        }
    }
}

/// One human-judged pair joined with its model score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub human_score: f64,
    pub model_score: f64,
    pub categories: Vec<ErrorCategory>,
    pub subset: Option<String>,
}

/// Joins gold pairs carrying human scores to model scores.
pub fn join_scores(
    gold: &[LabeledPair],
    predictions: &[PredictionRecord],
    source: ScoreSource,
) -> Result<Vec<ScoredPair>, MetricError> {
    let (matched, _) = join(gold, predictions)?;
    gold.iter()
        .zip(matched)
        .map(|(g, p)| {
            Ok(ScoredPair {
                human_score: g
                    .human_score
                    .ok_or_else(|| MetricError::MissingHumanScore(g.id.clone()))?,
                model_score: source.score(p),
                categories: g
                    .error_categories
                    .as_ref()
                    .map(|c| c.iter().copied().collect())
                    .unwrap_or_default(),
                subset: g.subset.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub group: String,
    pub n: usize,
    pub pearson: CorrelationResult,
    pub spearman: CorrelationResult,
}

/// Pearson and Spearman of model scores against human scores.
pub fn correlate(
    pairs: &[ScoredPair],
    group: &str,
    method: PValueMethod,
) -> Result<CorrelationRow, MetricError> {
    let human: Vec<f64> = pairs.iter().map(|p| p.human_score).collect();
    let model: Vec<f64> = pairs.iter().map(|p| p.model_score).collect();
    Ok(CorrelationRow {
        group: group.to_owned(),
        n: pairs.len(),
        pearson: pearson_with(&model, &human, method)?,
        spearman: spearman_with(&model, &human, method)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDelta {
    pub category: ErrorCategory,
    /// Pairs tagged with the category (excluded from the recomputation).
    pub removed: usize,
    pub remaining: usize,
    /// coefficient without the category minus coefficient on all pairs.
    pub pearson_delta: Option<f64>,
    pub spearman_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub baseline: CorrelationRow,
    pub categories: Vec<CategoryDelta>,
}

/// For each error category, drops the pairs tagged with it and reports how the
/// Pearson and Spearman coefficients move relative to the full set.
pub fn category_ablation(pairs: &[ScoredPair]) -> Result<AblationReport, MetricError> {
    let baseline = correlate(pairs, ALL_GROUP, PValueMethod::StudentT)?;
    let categories = ErrorCategory::ALL
        .into_iter()
        .map(|category| {
            let kept: Vec<ScoredPair> = pairs
                .iter()
                .filter(|p| !p.categories.contains(&category))
                .cloned()
                .collect();
            let removed = pairs.len() - kept.len();
            match correlate(&kept, category.as_str(), PValueMethod::StudentT) {
                Ok(row) => CategoryDelta {
                    category,
                    removed,
                    remaining: kept.len(),
                    pearson_delta: Some(row.pearson.coefficient - baseline.pearson.coefficient),
                    spearman_delta: Some(row.spearman.coefficient - baseline.spearman.coefficient),
                    note: None,
                },
                Err(e) => CategoryDelta {
                    category,
                    removed,
                    remaining: kept.len(),
                    pearson_delta: None,
                    spearman_delta: None,
                    note: Some(format!("undefined: {e}")),
                },
            }
        })
        .collect();
    Ok(AblationReport {
        baseline,
        categories,
    })
}
