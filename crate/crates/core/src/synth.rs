//! Pretraining document synthesis.
//!
//! Three generators turn a [`KnowledgeBase`] into unmasked documents:
//!
//! * [`EntityWiki`]: one document per entity with out-edges, listing each one-hop
//!   fact as `subject relation object [SEP]`.
//! * [`Evidence`]: a sampled triple `subject relation object` followed by the
//!   subject's description paragraph; the object is a forced mask slot.
//! * [`KnowledgeWalk`]: a sampled K-hop walk verbalized as
//!   `e0 r01 e1 r12 e2 ...`.
//!
//! Each generator implements [`DocumentSource`]: document `i` is a pure function
//! of the knowledge base, the configuration and `i`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{DescriptionStore, EntityId, KnowledgeBase, RelationId, TripleId};
use crate::rng::{stream_rng, Stream};

/// Literal separator unit surface.
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EntityWiki,
    Evidence,
    KnowledgeWalk,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EntityWiki => "entity_wiki",
            Strategy::Evidence => "evidence",
            Strategy::KnowledgeWalk => "knowledge_walk",
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            Strategy::EntityWiki => "wiki",
            Strategy::Evidence => "evidence",
            Strategy::KnowledgeWalk => "walk",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity_wiki" | "entity-wiki" => Ok(Strategy::EntityWiki),
            "evidence" => Ok(Strategy::Evidence),
            "knowledge_walk" | "walk" => Ok(Strategy::KnowledgeWalk),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Entity,
    Relation,
    Separator,
    Auxiliary,
}

impl UnitKind {
    /// Entity and relation units may be masked.
    pub fn is_maskable(self) -> bool {
        matches!(self, UnitKind::Entity | UnitKind::Relation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Unit {
    pub kind: UnitKind,
    pub surface: String,
}

impl Unit {
    pub fn entity(surface: impl Into<String>) -> Self {
        Unit {
            kind: UnitKind::Entity,
            surface: surface.into(),
        }
    }

    pub fn relation(surface: impl Into<String>) -> Self {
        Unit {
            kind: UnitKind::Relation,
            surface: surface.into(),
        }
    }

    pub fn separator() -> Self {
        Unit {
            kind: UnitKind::Separator,
            surface: SEP.to_owned(),
        }
    }

    pub fn auxiliary(surface: impl Into<String>) -> Self {
        Unit {
            kind: UnitKind::Auxiliary,
            surface: surface.into(),
        }
    }
}

/// A synthesized, unmasked pretraining document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub strategy: Strategy,
    pub units: Vec<Unit>,
    /// Source triples, in the order they appear in `units`.
    pub provenance: Vec<TripleId>,
    /// Distinct entity surfaces in order of first appearance.
    pub source_entities: Vec<String>,
    /// Index of this document within its generator's stream.
    pub seed_offset: u64,
    /// Unit indices that are always masked (the evidence object slot).
    pub forced_masks: Vec<usize>,
}

impl Document {
    /// Unit surfaces joined by single spaces.
    pub fn render(&self) -> String {
        join_surfaces(self.units.iter().map(|u| u.surface.as_str()))
    }

    pub fn whitespace_tokens(&self) -> usize {
        self.units
            .iter()
            .map(|u| u.surface.split_whitespace().count())
            .sum()
    }
}

pub(crate) fn join_surfaces<'a>(surfaces: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, s) in surfaces.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadEndPolicy {
    /// Keep the shorter walk.
    Truncate,
    /// Restart the whole walk, up to `max_walk_attempts` times, then truncate.
    Resample,
}

impl FromStr for DeadEndPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncate" => Ok(DeadEndPolicy::Truncate),
            "resample" => Ok(DeadEndPolicy::Resample),
            other => Err(format!("unknown dead-end policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Target document count for the evidence and walk strategies.
    pub n: usize,
    /// Walk length in hops.
    pub k: usize,
    /// Masking probability, consumed by the masking stage.
    pub mask_prob: f64,
    pub seed: u64,
    /// Entity-wiki documents are cut at a fact boundary to stay within this many units.
    pub max_units_per_doc: usize,
    pub dead_end_policy: DeadEndPolicy,
    pub max_walk_attempts: usize,
    pub no_revisit: bool,
    pub sample_with_replacement: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 100_000,
            k: 5,
            mask_prob: 0.15,
            seed: 0,
            max_units_per_doc: 480,
            dead_end_policy: DeadEndPolicy::Resample,
            max_walk_attempts: 8,
            no_revisit: false,
            sample_with_replacement: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 1 {
            return Err(SynthError::Config("n must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(SynthError::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(SynthError::Config(format!(
                "mask probability {} outside [0, 1]",
                self.mask_prob
            )));
        }
        if self.max_units_per_doc < 3 {
            return Err(SynthError::Config(
                "max units per document must be at least 3".into(),
            ));
        }
        if self.max_walk_attempts < 1 {
            return Err(SynthError::Config(
                "max walk attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn walk_options(&self) -> WalkOptions {
        WalkOptions {
            k: self.k,
            dead_end_policy: self.dead_end_policy,
            no_revisit: self.no_revisit,
            max_attempts: self.max_walk_attempts,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("entity {0} has no out-edges; a walk cannot start there")]
    DeadStart(EntityId),
    #[error("no entity has out-edges; knowledge walks are impossible")]
    NoStartEntities,
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
}

/// A validated walk: `start -r0-> e1 -r1-> e2 ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Walk {
    pub start: EntityId,
    pub steps: Vec<(RelationId, EntityId)>,
}

impl Walk {
    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    /// `(subject, relation, object)` for every hop.
    pub fn triples(&self) -> impl Iterator<Item = (EntityId, RelationId, EntityId)> + '_ {
        let subjects = std::iter::once(self.start).chain(self.steps.iter().map(|s| s.1));
        subjects
            .zip(self.steps.iter())
            .map(|(s, &(r, o))| (s, r, o))
    }

    pub fn is_valid_in(&self, kb: &KnowledgeBase) -> bool {
        self.triples().all(|(s, r, o)| kb.has_edge(s, r, o))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOptions {
    pub k: usize,
    pub dead_end_policy: DeadEndPolicy,
    pub no_revisit: bool,
    pub max_attempts: usize,
}

impl WalkOptions {
    pub fn new(k: usize) -> Self {
        WalkOptions {
            k,
            dead_end_policy: DeadEndPolicy::Resample,
            no_revisit: false,
            max_attempts: 8,
        }
    }
}

/// Samples a walk of up to `options.k` hops, each hop uniform over the current
/// entity's out-edges.
///
/// A walk that hits a sink early (or, with `no_revisit`, would revisit an entity)
/// is incomplete. Under [`DeadEndPolicy::Truncate`] without `no_revisit` the
/// incomplete walk is returned as is; otherwise the walk is restarted up to
/// `max_attempts` times and the longest attempt is returned.
pub fn sample_walk<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    start: EntityId,
    options: &WalkOptions,
    rng: &mut R,
) -> Result<Walk, SynthError> {
    if kb.out_neighborhood(start)?.is_empty() {
        return Err(SynthError::DeadStart(start));
    }
    let attempts = if options.dead_end_policy == DeadEndPolicy::Resample || options.no_revisit {
        options.max_attempts.max(1)
    } else {
        1
    };

    let mut best: Option<Walk> = None;
    for _ in 0..attempts {
        let walk = walk_attempt(kb, start, options, rng);
        if walk.hops() == options.k {
            return Ok(walk);
        }
        if best.as_ref().is_none_or(|b| walk.hops() > b.hops()) {
            best = Some(walk);
        }
    }
    Ok(best.expect("at least one attempt"))
}

fn walk_attempt<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    start: EntityId,
    options: &WalkOptions,
    rng: &mut R,
) -> Walk {
    let mut steps = Vec::with_capacity(options.k);
    let mut current = start;
    for _ in 0..options.k {
        let edges = kb.out_edges_unchecked(current);
        if edges.is_empty() {
            break;
        }
        let edge = edges[rng.random_range(0..edges.len())];
        if options.no_revisit
            && (edge.target == start || steps.iter().any(|&(_, e)| e == edge.target))
        {
            break;
        }
        steps.push((edge.relation, edge.target));
        current = edge.target;
    }
    Walk { start, steps }
}

/// Random-access source of documents.
pub trait DocumentSource: Sync {
    fn strategy(&self) -> Strategy;

    /// Number of documents this source produces.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Document `index`; `index < self.len()`.
    fn document(&self, index: usize) -> Document;

    fn documents(&self) -> Box<dyn Iterator<Item = Document> + '_> {
        Box::new((0..self.len()).map(move |i| self.document(i)))
    }
}

fn document_id(strategy: Strategy, index: usize) -> String {
    format!("{}-{index:07}", strategy.id_prefix())
}

fn push_distinct(names: &mut Vec<String>, name: &str) {
    if !names.iter().any(|n| n == name) {
        names.push(name.to_owned());
    }
}

/// One document per entity with at least one out-edge.
pub struct EntityWiki<'a> {
    kb: &'a KnowledgeBase,
    subjects: Vec<EntityId>,
    max_units: usize,
}

impl<'a> EntityWiki<'a> {
    pub fn new(kb: &'a KnowledgeBase, cfg: &SynthConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        Ok(EntityWiki {
            kb,
            subjects: kb.entities_with_out_edges(),
            max_units: cfg.max_units_per_doc,
        })
    }

    /// Facts kept per document, and whether the last one keeps its separator.
    fn fact_budget(&self, degree: usize) -> (usize, bool) {
        let fits = self.max_units / 4;
        if degree <= fits {
            (degree, true)
        } else if fits >= 1 {
            (fits, true)
        } else {
            // Cap below one full fact: keep a bare triple.
            (1, false)
        }
    }
}

impl DocumentSource for EntityWiki<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::EntityWiki
    }

    fn len(&self) -> usize {
        self.subjects.len()
    }

    fn document(&self, index: usize) -> Document {
        let subject = self.subjects[index];
        let kb = self.kb;
        let edges = kb.out_edges_unchecked(subject);
        let (facts, trailing_sep) = self.fact_budget(edges.len());
        let subject_name = kb.entity_name(subject);

        let mut units = Vec::with_capacity(facts * 4);
        let mut provenance = Vec::with_capacity(facts);
        let mut source_entities = vec![subject_name.to_owned()];
        for (pos, edge) in edges.iter().take(facts).enumerate() {
            let object = kb.entity_name(edge.target);
            units.push(Unit::entity(subject_name));
            units.push(Unit::relation(kb.relation_name(edge.relation)));
            units.push(Unit::entity(object));
            if trailing_sep || pos + 1 < facts {
                units.push(Unit::separator());
            }
            provenance.push(kb.triple_id_of(subject, pos));
            push_distinct(&mut source_entities, object);
        }
        Document {
            id: document_id(Strategy::EntityWiki, index),
            strategy: Strategy::EntityWiki,
            units,
            provenance,
            source_entities,
            seed_offset: index as u64,
            forced_masks: Vec::new(),
        }
    }
}

/// Triple plus the subject's description; the object slot is always masked.
pub struct Evidence<'a> {
    kb: &'a KnowledgeBase,
    descriptions: &'a DescriptionStore,
    eligible: Vec<TripleId>,
    /// Pre-drawn triples when sampling without replacement.
    permutation: Option<Vec<TripleId>>,
    n: usize,
    seed: u64,
}

impl<'a> Evidence<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        descriptions: &'a DescriptionStore,
        cfg: &SynthConfig,
    ) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut eligible = Vec::new();
        for subject in kb.entities() {
            if !descriptions.contains(subject) {
                continue;
            }
            for pos in 0..kb.out_degree(subject) {
                eligible.push(kb.triple_id_of(subject, pos));
            }
        }
        let permutation = if cfg.sample_with_replacement {
            None
        } else {
            let take = cfg.n.min(eligible.len());
            let mut order = eligible.clone();
            let mut rng = stream_rng(cfg.seed, Stream::EvidencePermutation, 0);
            let (chosen, _) = order.partial_shuffle(&mut rng, take);
            Some(chosen.to_vec())
        };
        Ok(Evidence {
            kb,
            descriptions,
            eligible,
            permutation,
            n: cfg.n,
            seed: cfg.seed,
        })
    }

    /// Triples whose subject has a description.
    pub fn eligible_count(&self) -> usize {
        self.eligible.len()
    }

    fn triple_for(&self, index: usize) -> TripleId {
        match &self.permutation {
            Some(order) => order[index],
            None => {
                let mut rng = stream_rng(self.seed, Stream::EvidenceSample, index as u64);
                self.eligible[rng.random_range(0..self.eligible.len())]
            }
        }
    }
}

impl DocumentSource for Evidence<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::Evidence
    }

    fn len(&self) -> usize {
        match &self.permutation {
            Some(order) => order.len(),
            None if self.eligible.is_empty() => 0,
            None => self.n,
        }
    }

    fn document(&self, index: usize) -> Document {
        let triple = self.triple_for(index);
        let (s, r, o) = self.kb.triple(triple).expect("eligible triple in range");
        let subject = self.kb.entity_name(s);
        let object = self.kb.entity_name(o);
        let paragraph = self
            .descriptions
            .get(s)
            .expect("eligible subject has a description");
        Document {
            id: document_id(Strategy::Evidence, index),
            strategy: Strategy::Evidence,
            units: vec![
                Unit::entity(subject),
                Unit::relation(self.kb.relation_name(r)),
                Unit::entity(object),
                Unit::auxiliary(paragraph),
            ],
            provenance: vec![triple],
            source_entities: if s == o {
                vec![subject.to_owned()]
            } else {
                vec![subject.to_owned(), object.to_owned()]
            },
            seed_offset: index as u64,
            forced_masks: vec![2],
        }
    }
}

/// Verbalized K-hop random walks from uniformly drawn start entities.
pub struct KnowledgeWalk<'a> {
    kb: &'a KnowledgeBase,
    starts: Vec<EntityId>,
    options: WalkOptions,
    n: usize,
    seed: u64,
}

impl<'a> KnowledgeWalk<'a> {
    pub fn new(kb: &'a KnowledgeBase, cfg: &SynthConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let starts = kb.entities_with_out_edges();
        if starts.is_empty() {
            return Err(SynthError::NoStartEntities);
        }
        Ok(KnowledgeWalk {
            kb,
            starts,
            options: cfg.walk_options(),
            n: cfg.n,
            seed: cfg.seed,
        })
    }

    /// The walk behind document `index`.
    pub fn walk(&self, index: usize) -> Walk {
        let mut rng = stream_rng(self.seed, Stream::Walk, index as u64);
        let start = self.starts[rng.random_range(0..self.starts.len())];
        sample_walk(self.kb, start, &self.options, &mut rng).expect("start has out-edges")
    }
}

impl DocumentSource for KnowledgeWalk<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::KnowledgeWalk
    }

    fn len(&self) -> usize {
        self.n
    }

    fn document(&self, index: usize) -> Document {
        let walk = self.walk(index);
        let kb = self.kb;
        let mut units = Vec::with_capacity(1 + 2 * walk.hops());
        let mut source_entities = Vec::with_capacity(walk.hops() + 1);
        let start = kb.entity_name(walk.start);
        units.push(Unit::entity(start));
        source_entities.push(start.to_owned());
        for &(r, e) in &walk.steps {
            let name = kb.entity_name(e);
            units.push(Unit::relation(kb.relation_name(r)));
            units.push(Unit::entity(name));
            push_distinct(&mut source_entities, name);
        }
        let provenance = walk
            .triples()
            .map(|(s, r, o)| kb.find_triple(s, r, o).expect("walk edges are stored"))
            .collect();
        Document {
            id: document_id(Strategy::KnowledgeWalk, index),
            strategy: Strategy::KnowledgeWalk,
            units,
            provenance,
            source_entities,
            seed_offset: index as u64,
            forced_masks: Vec::new(),
        }
    }
}

pub fn synth_entity_wiki<'a>(
    kb: &'a KnowledgeBase,
    cfg: &SynthConfig,
) -> Result<impl Iterator<Item = Document> + 'a, SynthError> {
    let source = EntityWiki::new(kb, cfg)?;
    Ok((0..source.len()).map(move |i| source.document(i)))
}

pub fn synth_evidence<'a>(
    kb: &'a KnowledgeBase,
    descriptions: &'a DescriptionStore,
    cfg: &SynthConfig,
) -> Result<impl Iterator<Item = Document> + 'a, SynthError> {
    let source = Evidence::new(kb, descriptions, cfg)?;
    Ok((0..source.len()).map(move |i| source.document(i)))
}

pub fn synth_knowledge_walk<'a>(
    kb: &'a KnowledgeBase,
    cfg: &SynthConfig,
) -> Result<impl Iterator<Item = Document> + 'a, SynthError> {
    let source = KnowledgeWalk::new(kb, cfg)?;
    Ok((0..source.len()).map(move |i| source.document(i)))
}
