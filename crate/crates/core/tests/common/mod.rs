//! Fixtures and independent reference implementations shared by the
//! integration tests. Nothing here calls into the metric or synthesis code
//! under test.
#![allow(dead_code)]

use std::collections::HashSet;
use std::fmt::Write as _;

use kbfact::{load_kb, KnowledgeBase, Label, LabeledPair, LoadOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KEPLER_KB: &str =
    "Johannes Kepler\tborn in\tItaly\nJohannes Kepler\tauthor of\tAstronomia nova\n";

pub const CLINTON_KB: &str = "Hillary Clinton\tparty affiliation\tDemocratic Party\n";
pub const CLINTON_DESC: &str = "Hillary Clinton\tHillary Diane Rodham Clinton is an American politician, diplomat, and former lawyer. Member of the Democratic Party, she was the nominee for president in 2016.\n";

pub const EDINBURGH_KB: &str = "University of Edinburgh\tlocated in\tScotland\nScotland\tlocated in\tEurope\nEurope\tis a\tcontinent\n";

pub fn kb(tsv: &str) -> KnowledgeBase {
    load_kb(tsv.as_bytes(), LoadOptions::default()).expect("fixture parses")
}

/// Complete directed graph on four nodes with one relation.
pub fn k4_tsv() -> String {
    let mut out = String::new();
    for s in 0..4 {
        for o in 0..4 {
            if s != o {
                let _ = writeln!(out, "v{s}\tto\tv{o}");
            }
        }
    }
    out
}

const SURFACE_PIECES: &[&str] = &[
    "alpha",
    "Beta",
    "γάμμα",
    "d\"q",
    "back\\slash",
    "emoji 🎉",
    "x",
    "New York",
    "São Paulo",
    "[SEP]",
    "tab-free",
    "{json}",
];

fn surface(rng: &mut ChaCha8Rng, prefix: &str, i: usize) -> String {
    let piece = SURFACE_PIECES[rng.random_range(0..SURFACE_PIECES.len())];
    format!("{prefix}{i} {piece}")
}

/// Random knowledge base as TSV: `entities` names, `relations` names, about
/// `triples` lines (duplicates allowed), with roughly `sink_fraction` of the
/// entities never used as a subject.
pub fn random_kb_tsv(
    seed: u64,
    entities: usize,
    relations: usize,
    triples: usize,
    sink_fraction: f64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..entities).map(|i| surface(&mut rng, "e", i)).collect();
    let rels: Vec<String> = (0..relations).map(|i| surface(&mut rng, "r", i)).collect();
    let sources = ((entities as f64) * (1.0 - sink_fraction)).ceil().max(1.0) as usize;
    let mut out = String::new();
    for _ in 0..triples {
        let s = rng.random_range(0..sources);
        let r = rng.random_range(0..relations);
        let o = rng.random_range(0..entities);
        let _ = writeln!(out, "{}\t{}\t{}", names[s], rels[r], names[o]);
    }
    out
}

/// Descriptions for every entity whose index is a multiple of `every`.
pub fn descriptions_for(kb: &KnowledgeBase, every: usize) -> String {
    let mut out = String::new();
    for (i, e) in kb.entities().enumerate() {
        if i % every == 0 {
            let name = kb.entity_name(e);
            let _ = writeln!(
                out,
                "{name}\t{name} is described here. It has \"quotes\" and ünïcode."
            );
        }
    }
    out
}

/// Every stored triple, straight from the TSV text.
pub fn triple_set(tsv: &str) -> HashSet<(String, String, String)> {
    tsv.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (
                f[0].trim().to_owned(),
                f[1].trim().to_owned(),
                f[2].trim().to_owned(),
            )
        })
        .collect()
}

pub fn pair(id: &str, label: Label) -> LabeledPair {
    LabeledPair {
        id: id.to_owned(),
        summary: format!("summary of {id}"),
        document: format!("document of {id}"),
        label,
        subset: None,
        human_score: None,
        error_categories: None,
    }
}

// Reference metrics.

pub fn oracle_bacc(gold: &[Label], pred: &[Label]) -> Option<f64> {
    let pos = gold.iter().filter(|&&g| g == Label::Factual).count();
    let neg = gold.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let tp = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| **g == Label::Factual && **p == Label::Factual)
        .count();
    let tn = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| **g == Label::NonFactual && **p == Label::NonFactual)
        .count();
    Some((tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0)
}

/// Micro F1 from per-class TP/FP/FN sums.
pub fn oracle_micro_f1(gold: &[Label], pred: &[Label]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for class in [Label::Factual, Label::NonFactual] {
        for (g, p) in gold.iter().zip(pred) {
            match (*g == class, *p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Raw-sums Pearson formula.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank by counting: 1 + (#smaller) + (#equal - 1) / 2.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let smaller = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// Two-sided Student-t p-value for a correlation, by Simpson integration of the
/// t density over [0, |t|].
pub fn oracle_t_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let t = (r * (df / (1.0 - r * r)).sqrt()).abs();
    // Gamma((df+1)/2) / Gamma(df/2) by the recurrence ratio(v+2) = ratio(v) (v+1)/v.
    let mut ratio = if (n - 2) % 2 == 1 {
        1.0 / std::f64::consts::PI.sqrt()
    } else {
        std::f64::consts::PI.sqrt() / 2.0
    };
    let mut v = if (n - 2) % 2 == 1 { 1.0 } else { 2.0 };
    while v < df {
        ratio *= (v + 1.0) / v;
        v += 2.0;
    }
    let c = ratio / (df * std::f64::consts::PI).sqrt();
    let density = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let steps = 20_000;
    let h = t / steps as f64;
    let mut sum = density(0.0) + density(t);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * density(i as f64 * h);
    }
    (1.0 - 2.0 * sum * h / 3.0).max(0.0)
}

/// Fraction of all orderings of `y` reaching the observed |r|, by recursive enumeration.
pub fn oracle_permutation_p(x: &[f64], y: &[f64], stat: fn(&[f64], &[f64]) -> f64) -> f64 {
    fn rec(
        x: &[f64],
        pool: &mut Vec<f64>,
        current: &mut Vec<f64>,
        observed: f64,
        stat: fn(&[f64], &[f64]) -> f64,
        hits: &mut u64,
        total: &mut u64,
    ) {
        if pool.is_empty() {
            *total += 1;
            if stat(x, current).abs() >= observed - 1e-12 {
                *hits += 1;
            }
            return;
        }
        for i in 0..pool.len() {
            let v = pool.remove(i);
            current.push(v);
            rec(x, pool, current, observed, stat, hits, total);
            current.pop();
            pool.insert(i, v);
        }
    }
    let observed = stat(x, y).abs();
    let (mut hits, mut total) = (0, 0);
    rec(
        x,
        &mut y.to_vec(),
        &mut Vec::new(),
        observed,
        stat,
        &mut hits,
        &mut total,
    );
    hits as f64 / total as f64
}

pub fn has_variance(v: &[f64]) -> bool {
    v.iter().any(|&a| a != v[0])
}
