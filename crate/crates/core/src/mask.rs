//! Unit-level masking and the line-delimited corpus format.
//!
//! Masking works on whole units: a masked entity or relation becomes a single
//! `[MASK]` literal regardless of how many words its surface has. Separator and
//! auxiliary units are never masked. Evidence documents always mask their object
//! slot.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{join_surfaces, Document, Strategy};

pub const MASK: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("integrity error in `{id}`: {reason}")]
    Integrity { id: String, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskOptions {
    pub p: f64,
    /// Skip the at-least-one-mask guarantee.
    pub allow_unmasked: bool,
    /// On evidence documents, mask only the object slot.
    pub evidence_forced_only: bool,
}

impl MaskOptions {
    pub fn new(p: f64) -> Self {
        MaskOptions {
            p,
            allow_unmasked: false,
            evidence_forced_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskTarget {
    pub unit: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedDocument {
    pub document: Document,
    /// Sorted, distinct.
    pub masked_unit_indices: Vec<usize>,
    /// One per masked index, same order.
    pub targets: Vec<MaskTarget>,
    pub masked_text: String,
}

/// Masks with the default options for probability `p`.
pub fn mask_document<R: Rng + ?Sized>(
    doc: Document,
    p: f64,
    rng: &mut R,
) -> Result<MaskedDocument, MaskError> {
    mask_document_with(doc, &MaskOptions::new(p), rng)
}

/// Masks each entity/relation unit independently with probability `options.p`.
///
/// One uniform draw is consumed per randomly maskable unit, so the random stream
/// advances identically for every `p`. When `p > 0` and nothing ended up masked,
/// one maskable unit is chosen uniformly unless `allow_unmasked` is set.
pub fn mask_document_with<R: Rng + ?Sized>(
    doc: Document,
    options: &MaskOptions,
    rng: &mut R,
) -> Result<MaskedDocument, MaskError> {
    let p = options.p;
    if !(0.0..=1.0).contains(&p) {
        return Err(MaskError::Probability(p));
    }
    let forced_only = options.evidence_forced_only && doc.strategy == Strategy::Evidence;

    let mut masked = Vec::new();
    let mut candidates = Vec::new();
    for (i, unit) in doc.units.iter().enumerate() {
        if doc.forced_masks.contains(&i) {
            masked.push(i);
        } else if unit.kind.is_maskable() && !forced_only {
            candidates.push(i);
            if rng.random::<f64>() < p {
                masked.push(i);
            }
        }
    }
    if p > 0.0 && !options.allow_unmasked && masked.is_empty() && !candidates.is_empty() {
        masked.push(candidates[rng.random_range(0..candidates.len())]);
    }
    masked.sort_unstable();

    let targets = masked
        .iter()
        .map(|&i| MaskTarget {
            unit: i,
            surface: doc.units[i].surface.clone(),
        })
        .collect();
    let masked_text = render_masked(&doc, &masked);
    Ok(MaskedDocument {
        document: doc,
        masked_unit_indices: masked,
        targets,
        masked_text,
    })
}

fn render_masked(doc: &Document, masked: &[usize]) -> String {
    join_surfaces(doc.units.iter().enumerate().map(|(i, u)| {
        if masked.binary_search(&i).is_ok() {
            MASK
        } else {
            u.surface.as_str()
        }
    }))
}

impl MaskedDocument {
    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), MaskError> {
        let fail = |reason: String| MaskError::Integrity {
            id: self.document.id.clone(),
            reason,
        };
        let units = &self.document.units;
        if self.targets.len() != self.masked_unit_indices.len() {
            return Err(fail(format!(
                "{} targets for {} masked units",
                self.targets.len(),
                self.masked_unit_indices.len()
            )));
        }
        if self.masked_unit_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("masked indices not strictly increasing".into()));
        }
        for (&idx, target) in self.masked_unit_indices.iter().zip(&self.targets) {
            if target.unit != idx {
                return Err(fail(format!(
                    "target unit {} != masked index {idx}",
                    target.unit
                )));
            }
            let Some(unit) = units.get(idx) else {
                return Err(fail(format!("dangling masked index {idx}")));
            };
            if !unit.kind.is_maskable() && !self.document.forced_masks.contains(&idx) {
                return Err(fail(format!(
                    "unit {idx} of kind {:?} is not maskable",
                    unit.kind
                )));
            }
            if unit.surface != target.surface {
                return Err(fail(format!("target surface mismatch at unit {idx}")));
            }
        }
        if render_masked(&self.document, &self.masked_unit_indices) != self.masked_text {
            return Err(fail("masked text does not match masked units".into()));
        }
        Ok(())
    }
}

/// Reconstructs the unmasked rendering after checking integrity.
pub fn unmask(md: &MaskedDocument) -> Result<String, MaskError> {
    md.validate()?;
    Ok(md.document.render())
}

/// Replaces each `[MASK]` in `masked_text` by the next target surface.
fn fill_masks(masked_text: &str, targets: &[MaskTarget]) -> Option<String> {
    let mut out = String::with_capacity(masked_text.len());
    let mut rest = masked_text;
    let mut targets = targets.iter();
    while let Some(pos) = rest.find(MASK) {
        out.push_str(&rest[..pos]);
        out.push_str(&targets.next()?.surface);
        rest = &rest[pos + MASK.len()..];
    }
    if targets.next().is_some() {
        return None;
    }
    out.push_str(rest);
    Some(out)
}

/// One line of a corpus file. Field names and order are the on-disk contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub strategy: Strategy,
    pub text: String,
    pub masked_text: String,
    pub targets: Vec<MaskTarget>,
    pub source_entities: Vec<String>,
    pub seed: u64,
}

impl CorpusRecord {
    /// `seed` is the master seed of the run.
    pub fn from_masked(md: &MaskedDocument, seed: u64) -> Self {
        CorpusRecord {
            id: md.document.id.clone(),
            strategy: md.document.strategy,
            text: md.document.render(),
            masked_text: md.masked_text.clone(),
            targets: md.targets.clone(),
            source_entities: md.document.source_entities.clone(),
            seed,
        }
    }

    /// Fills the masks of `masked_text` from `targets`, in order.
    pub fn unmask(&self) -> Result<String, MaskError> {
        fill_masks(&self.masked_text, &self.targets).ok_or_else(|| MaskError::Integrity {
            id: self.id.clone(),
            reason: format!(
                "{} targets do not match the [MASK] slots of masked_text",
                self.targets.len()
            ),
        })
    }

    /// `unmask()` must reproduce `text`.
    pub fn validate(&self) -> Result<(), MaskError> {
        if self.unmask()? != self.text {
            return Err(MaskError::Integrity {
                id: self.id.clone(),
                reason: "unmasked text differs from text".into(),
            });
        }
        Ok(())
    }
}

/// Writes one JSON record per line; returns the record count.
pub fn write_corpus<W, I>(records: I, mut sink: W) -> Result<usize, MaskError>
where
    W: Write,
    I: IntoIterator<Item = CorpusRecord>,
{
    let mut count = 0;
    for record in records {
        write_record(&record, &mut sink)?;
        count += 1;
    }
    sink.flush()?;
    Ok(count)
}

pub(crate) fn write_record<W: Write>(record: &CorpusRecord, sink: &mut W) -> Result<(), MaskError> {
    serde_json::to_writer(&mut *sink, record).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Streams records back; errors carry 1-based line numbers.
pub fn read_corpus<R: BufRead>(source: R) -> impl Iterator<Item = Result<CorpusRecord, MaskError>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, line)| line.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line?;
            serde_json::from_str(&line).map_err(|source| MaskError::Parse {
                line: i + 1,
                source,
            })
        })
}
