//! Synthesis + masking + emission, optionally fanned out over a worker pool.
//!
//! Documents are produced in fixed-size chunks; within a chunk any number of
//! workers compute documents by index and the results are written in index
//! order, so the output bytes never depend on the worker count.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::mask::{
    mask_document_with, write_record, CorpusRecord, MaskError, MaskOptions, MaskedDocument,
};
use crate::rng::{stream_rng, Stream};
use crate::synth::DocumentSource;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitOptions {
    pub mask: MaskOptions,
    pub seed: u64,
    /// Worker threads; 0 or 1 runs serially on the calling thread.
    pub workers: usize,
}

/// Corpus-level statistics reported alongside an emitted corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub distinct_texts: usize,
    /// Fraction of documents whose text repeats an earlier document.
    pub duplicate_rate: f64,
    pub whitespace_tokens: usize,
    pub units: usize,
    pub masked_units: usize,
}

/// Masks document `index` of `source` with its own random stream.
pub fn masked_document(
    source: &dyn DocumentSource,
    index: usize,
    options: &EmitOptions,
) -> Result<MaskedDocument, MaskError> {
    let doc = source.document(index);
    let mut rng = stream_rng(options.seed, Stream::Mask, index as u64);
    mask_document_with(doc, &options.mask, &mut rng)
}

/// Generates, masks and writes every document of `source` to `sink`.
pub fn emit_corpus<W: Write>(
    source: &dyn DocumentSource,
    options: &EmitOptions,
    mut sink: W,
) -> Result<CorpusSummary, MaskError> {
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| std::io::Error::other(e.to_string()))?,
        )
    } else {
        None
    };

    let mut summary = CorpusSummary::default();
    let mut seen = HashSet::new();
    let total = source.len();
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let chunk: Vec<Result<(CorpusRecord, usize), MaskError>> = match &pool {
            Some(pool) => pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| chunk_item(source, i, options))
                    .collect()
            }),
            None => (start..end)
                .map(|i| chunk_item(source, i, options))
                .collect(),
        };
        for item in chunk {
            let (record, units) = item?;
            summary.documents += 1;
            summary.units += units;
            summary.masked_units += record.targets.len();
            summary.whitespace_tokens += record.text.split_whitespace().count();
            if seen.insert(record.text.clone()) {
                summary.distinct_texts += 1;
            }
            write_record(&record, &mut sink)?;
        }
        start = end;
    }
    sink.flush()?;
    if summary.documents > 0 {
        summary.duplicate_rate =
            (summary.documents - summary.distinct_texts) as f64 / summary.documents as f64;
    }
    Ok(summary)
}

fn chunk_item(
    source: &dyn DocumentSource,
    index: usize,
    options: &EmitOptions,
) -> Result<(CorpusRecord, usize), MaskError> {
    let md = masked_document(source, index, options)?;
    Ok((
        CorpusRecord::from_masked(&md, options.seed),
        md.document.units.len(),
    ))
}
