//! Immutable knowledge-base store.
//!
//! A [`KnowledgeBase`] holds interned entities and relations plus a compressed
//! out-edge adjacency (one contiguous edge array indexed by per-entity offsets).
//! Every stored edge is one `(subject, relation, object)` triple; its position in
//! the edge array is its [`TripleId`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::Serialize;
use thiserror::Error;

/// Prefix prepended to relation surfaces of materialized reverse edges.
pub const INVERSE_PREFIX: &str = "inverse ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

/// Position of a triple in the knowledge base's edge array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripleId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TripleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A stored out-edge: the relation and the target entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub relation: RelationId,
    pub target: EntityId,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("entity id {0} out of range (knowledge base has {1} entities)")]
    EntityOutOfRange(u32, usize),
    #[error("triple id {0} out of range (knowledge base has {1} triples)")]
    TripleOutOfRange(u32, usize),
    #[error("knowledge base exceeds u32 id space")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Materialize a reverse edge `(o, "inverse " + r, s)` for every triple.
    pub add_inverse: bool,
}

/// Interns strings into dense ids in first-appearance order.
#[derive(Debug, Default, Clone)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> Result<u32, KbError> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let id = u32::try_from(self.names.len()).map_err(|_| KbError::TooLarge)?;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        Ok(id)
    }
}

/// Incremental builder; used by the file loader and handy for tests.
#[derive(Debug, Default, Clone)]
pub struct KbBuilder {
    entities: Interner,
    relations: Interner,
    triples: Vec<(u32, u32, u32)>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one triple by surface form. Surfaces are trimmed; empty surfaces and
    /// surfaces containing `[MASK]` are rejected.
    pub fn add(&mut self, subject: &str, relation: &str, object: &str) -> Result<(), String> {
        let (s, r, o) = (subject.trim(), relation.trim(), object.trim());
        for (field, value) in [("subject", s), ("relation", r), ("object", o)] {
            if value.is_empty() {
                return Err(format!("empty {field} field"));
            }
            if value.contains(crate::mask::MASK) {
                return Err(format!(
                    "{field} contains the reserved token {}",
                    crate::mask::MASK
                ));
            }
        }
        let s = self.entities.intern(s).map_err(|e| e.to_string())?;
        let r = self.relations.intern(r).map_err(|e| e.to_string())?;
        let o = self.entities.intern(o).map_err(|e| e.to_string())?;
        self.triples.push((s, r, o));
        Ok(())
    }

    pub fn build(self, options: LoadOptions) -> Result<KnowledgeBase, KbError> {
        let KbBuilder {
            entities,
            mut relations,
            mut triples,
        } = self;

        if options.add_inverse {
            // Inverse relations are interned after every forward relation, in forward-id order.
            let forward = relations.names.len();
            let mut inverse_of = Vec::with_capacity(forward);
            for r in 0..forward {
                let name = format!("{INVERSE_PREFIX}{}", relations.names[r]);
                inverse_of.push(relations.intern(&name)?);
            }
            let reversed: Vec<_> = triples
                .iter()
                .map(|&(s, r, o)| (o, inverse_of[r as usize], s))
                .collect();
            triples.extend(reversed);
        }

        triples.sort_unstable();
        triples.dedup();
        if triples.len() > u32::MAX as usize {
            return Err(KbError::TooLarge);
        }

        let num_entities = entities.names.len();
        let mut offsets = vec![0usize; num_entities + 1];
        for &(s, _, _) in &triples {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..num_entities {
            offsets[i + 1] += offsets[i];
        }
        let edges = triples
            .iter()
            .map(|&(_, r, o)| Edge {
                relation: RelationId(r),
                target: EntityId(o),
            })
            .collect();

        Ok(KnowledgeBase {
            entity_names: entities.names,
            entity_ids: entities.ids,
            relation_names: relations.names,
            relation_ids: relations.ids,
            offsets,
            edges,
        })
    }
}

/// Immutable triple store with interned names and CSR out-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, u32>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, u32>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

impl KnowledgeBase {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_triples(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.entity_names.is_empty()
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = EntityId> {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    /// Surface name of an entity. Panics on an id from another knowledge base.
    pub fn entity_name(&self, entity: EntityId) -> &str {
        &self.entity_names[entity.index()]
    }

    pub fn relation_name(&self, relation: RelationId) -> &str {
        &self.relation_names[relation.index()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied().map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied().map(RelationId)
    }

    /// Sorted `(relation, target)` out-edges of `entity`.
    pub fn out_neighborhood(&self, entity: EntityId) -> Result<&[Edge], KbError> {
        if entity.index() >= self.num_entities() {
            return Err(KbError::EntityOutOfRange(entity.0, self.num_entities()));
        }
        Ok(self.out_edges_unchecked(entity))
    }

    pub(crate) fn out_edges_unchecked(&self, entity: EntityId) -> &[Edge] {
        let i = entity.index();
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn out_degree(&self, entity: EntityId) -> usize {
        let i = entity.index();
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Triple id of the `position`-th out-edge of `entity`.
    pub(crate) fn triple_id_of(&self, entity: EntityId, position: usize) -> TripleId {
        TripleId((self.offsets[entity.index()] + position) as u32)
    }

    pub fn has_edge(&self, subject: EntityId, relation: RelationId, object: EntityId) -> bool {
        self.find_triple(subject, relation, object).is_some()
    }

    pub fn find_triple(
        &self,
        subject: EntityId,
        relation: RelationId,
        object: EntityId,
    ) -> Option<TripleId> {
        if subject.index() >= self.num_entities() {
            return None;
        }
        let edges = self.out_edges_unchecked(subject);
        let needle = Edge {
            relation,
            target: object,
        };
        edges
            .binary_search(&needle)
            .ok()
            .map(|pos| self.triple_id_of(subject, pos))
    }

    /// Resolves a triple id to `(subject, relation, object)`.
    pub fn triple(&self, id: TripleId) -> Result<(EntityId, RelationId, EntityId), KbError> {
        let idx = id.index();
        if idx >= self.edges.len() {
            return Err(KbError::TripleOutOfRange(id.0, self.edges.len()));
        }
        // offsets is non-decreasing; the subject is the last entity whose range starts at or before idx.
        let subject = self.offsets.partition_point(|&o| o <= idx) - 1;
        let edge = self.edges[idx];
        Ok((EntityId(subject as u32), edge.relation, edge.target))
    }

    /// All triples in storage order (sorted by subject, relation, object).
    pub fn triples(&self) -> impl Iterator<Item = (EntityId, RelationId, EntityId)> + '_ {
        self.entities().flat_map(move |s| {
            self.out_edges_unchecked(s)
                .iter()
                .map(move |e| (s, e.relation, e.target))
        })
    }

    /// Entities with at least one out-edge, in id order.
    pub fn entities_with_out_edges(&self) -> Vec<EntityId> {
        self.entities()
            .filter(|&e| self.out_degree(e) > 0)
            .collect()
    }

    /// Writes every triple back as a tab-separated line.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, r, o) in self.triples() {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_name(s),
                self.relation_name(r),
                self.entity_name(o)
            )?;
        }
        Ok(())
    }
}

/// Parses a tab-separated triples stream.
///
/// Lines starting with `#` and blank lines are skipped. Every other line must have
/// exactly three non-empty, tab-separated fields.
pub fn load_kb<R: BufRead>(reader: R, options: LoadOptions) -> Result<KnowledgeBase, KbError> {
    let mut builder = KbBuilder::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KbError::Parse {
                line: line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        builder
            .add(fields[0], fields[1], fields[2])
            .map_err(|reason| KbError::Parse {
                line: line_no,
                reason,
            })?;
    }
    builder.build(options)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KbStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    pub num_entities_with_out_edges: usize,
    /// out-degree -> number of entities with that out-degree
    pub out_degree_histogram: BTreeMap<usize, usize>,
}

pub fn kb_stats(kb: &KnowledgeBase) -> KbStats {
    let mut histogram = BTreeMap::new();
    let mut with_edges = 0;
    for e in kb.entities() {
        let d = kb.out_degree(e);
        *histogram.entry(d).or_insert(0) += 1;
        if d > 0 {
            with_edges += 1;
        }
    }
    KbStats {
        num_entities: kb.num_entities(),
        num_relations: kb.num_relations(),
        num_triples: kb.num_triples(),
        num_entities_with_out_edges: with_edges,
        out_degree_histogram: histogram,
    }
}

/// Entity descriptions (the auxiliary paragraph used by evidence documents).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DescriptionStore {
    paragraphs: HashMap<EntityId, String>,
    /// Lines naming entities the knowledge base does not contain.
    pub skipped_unknown: usize,
    /// Repeated lines for an entity already described; the first paragraph wins.
    pub skipped_duplicate: usize,
}

impl DescriptionStore {
    pub fn get(&self, entity: EntityId) -> Option<&str> {
        self.paragraphs.get(&entity).map(String::as_str)
    }

    pub fn contains(&self, entity: EntityId) -> bool {
        self.paragraphs.contains_key(&entity)
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn insert(&mut self, entity: EntityId, paragraph: impl Into<String>) -> bool {
        let paragraph = paragraph.into();
        if paragraph.trim().is_empty() || self.paragraphs.contains_key(&entity) {
            return false;
        }
        self.paragraphs.insert(entity, paragraph);
        true
    }
}

/// Parses `entity<TAB>paragraph` lines against `kb`.
pub fn load_descriptions<R: BufRead>(
    reader: R,
    kb: &KnowledgeBase,
) -> Result<DescriptionStore, KbError> {
    let mut store = DescriptionStore::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let Some((name, paragraph)) = line.split_once('\t') else {
            return Err(KbError::Parse {
                line: line_no,
                reason: "expected `entity<TAB>paragraph`".into(),
            });
        };
        let (name, paragraph) = (name.trim(), paragraph.trim());
        if name.is_empty() {
            return Err(KbError::Parse {
                line: line_no,
                reason: "empty entity field".into(),
            });
        }
        if paragraph.is_empty() {
            return Err(KbError::Parse {
                line: line_no,
                reason: format!("empty description for `{name}`"),
            });
        }
        if paragraph.contains(crate::mask::MASK) {
            return Err(KbError::Parse {
                line: line_no,
                reason: format!(
                    "description of `{name}` contains the reserved token {}",
                    crate::mask::MASK
                ),
            });
        }
        match kb.entity_id(name) {
            None => store.skipped_unknown += 1,
            Some(id) => {
                if !store.insert(id, paragraph) {
                    store.skipped_duplicate += 1;
                }
            }
        }
    }
    Ok(store)
}
