//! Knowledge-base factuality toolkit.
//!
//! Turns a triple store into masked-language-model pretraining corpora and
//! scores factuality classifiers against labeled summary/document pairs.
//!
//! ```
//! use kbfact::{load_kb, LoadOptions, EntityWiki, SynthConfig, DocumentSource};
//!
//! let kb = load_kb("Kepler\tdiscovered\tplanetary motion laws\n".as_bytes(), LoadOptions::default())?;
//! let wiki = EntityWiki::new(&kb, &SynthConfig::default())?;
//! assert_eq!(wiki.document(0).render(), "Kepler discovered planetary motion laws [SEP]");
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod cli;
pub mod dataset;
pub mod kb;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use dataset::{
    drop_nei, format_pair_input, load_canonical, load_pairs, verify_split, write_pairs,
    AdapterManifest, DatasetError, DatasetFormat, DatasetSplit, ErrorCategory, Label, LabeledPair,
    SourcePair,
};
pub use kb::{
    kb_stats, load_descriptions, load_kb, DescriptionStore, EntityId, KbError, KnowledgeBase,
    LoadOptions, RelationId, TripleId,
};
pub use mask::{
    mask_document, mask_document_with, read_corpus, unmask, write_corpus, CorpusRecord, MaskError,
    MaskOptions, MaskedDocument, MASK,
};
pub use metrics::{
    balanced_accuracy, evaluate_classification, micro_f1, pearson, read_predictions, spearman,
    ConfusionMatrix, CorrelationResult, MetricError, PredictionRecord,
};
pub use pipeline::{emit_corpus, CorpusSummary, EmitOptions};
pub use synth::{
    sample_walk, DeadEndPolicy, Document, DocumentSource, EntityWiki, Evidence, KnowledgeWalk,
    Strategy, SynthConfig, SynthError, Unit, UnitKind, Walk, WalkOptions,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/knowledge-base.md")]
    mod knowledge_base {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/masking.md")]
    mod masking {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
