//! In-memory typed property graph over requirements and entities, with
//! shared-entity retrieval.
//!
//! The graph is bipartite: requirement nodes (keyed by source and id) and
//! entity nodes (keyed by kind and value), connected by typed `HAS_*` edges
//! whose type is determined by the entity kind. Retrieval collects every
//! same-source requirement adjacent to at least one of the query's entities
//! and ranks the candidates by
//!
//! ```text
//! score = alpha * s_e + beta * s_t + gamma * s_d
//! ```
//!
//! where `s_e` is the shared-entity count, `s_t` the number of distinct
//! relationship types over shared entities, and `s_d` the reciprocal
//! shortest-path length (0 when unreachable). A role-aware variant replaces
//! `s_e` with an inverse-frequency weighted overlap that damps entities
//! occurring in many requirements.
//!
//! The graph is immutable after build; queries are safe to run concurrently.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::extract::{Entity, EntityKind, EntitySet};

/// Relationship type of a requirement-to-entity edge; fixed by the entity
/// kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    HasActor,
    HasAction,
    HasObject,
    HasAttribute,
    HasCondition,
}

impl From<EntityKind> for RelationType {
    fn from(kind: EntityKind) -> RelationType {
        match kind {
            EntityKind::Actor => RelationType::HasActor,
            EntityKind::Action => RelationType::HasAction,
            EntityKind::Object => RelationType::HasObject,
            EntityKind::Attribute => RelationType::HasAttribute,
            EntityKind::Condition => RelationType::HasCondition,
        }
    }
}

impl RelationType {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelationType::HasActor => "HAS_ACTOR",
            RelationType::HasAction => "HAS_ACTION",
            RelationType::HasObject => "HAS_OBJECT",
            RelationType::HasAttribute => "HAS_ATTRIBUTE",
            RelationType::HasCondition => "HAS_CONDITION",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scoring weights; all non-negative and not all zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> ScoreWeights {
        ScoreWeights {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.25,
        }
    }
}

impl ScoreWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> ScoreWeights {
        ScoreWeights { alpha, beta, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("weight {name} must be >= 0, got {v}")));
            }
        }
        if self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::Config("weights must not all be zero".into()));
        }
        Ok(())
    }
}

/// Per-role multipliers for the inverse-frequency weighted overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleWeights {
    pub actor: f64,
    pub action: f64,
    pub object: f64,
    pub attribute: f64,
    pub condition: f64,
}

impl Default for RoleWeights {
    fn default() -> RoleWeights {
        RoleWeights {
            actor: 1.0,
            action: 1.0,
            object: 1.0,
            attribute: 1.0,
            condition: 1.0,
        }
    }
}

impl RoleWeights {
    pub fn weight(&self, kind: EntityKind) -> f64 {
        match kind {
            EntityKind::Actor => self.actor,
            EntityKind::Action => self.action,
            EntityKind::Object => self.object,
            EntityKind::Attribute => self.attribute,
            EntityKind::Condition => self.condition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("actor", self.actor),
            ("action", self.action),
            ("object", self.object),
            ("attribute", self.attribute),
            ("condition", self.condition),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "role weight {name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One ranked retrieval candidate with its score decomposition. `d` is the
/// shortest-path hop count with 0 as the unreachable sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate_id: String,
    pub s_e: usize,
    pub s_t: usize,
    pub d: usize,
    pub s_d: f64,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_overlap: Option<f64>,
}

#[derive(Debug, Clone)]
struct ReqNode {
    source: usize,
    id: String,
}

/// Bipartite typed graph with both-direction adjacency and per-source
/// document frequencies.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    sources: Vec<String>,
    reqs: Vec<ReqNode>,
    req_index: Vec<HashMap<String, usize>>,
    reqs_by_source: Vec<Vec<usize>>,
    entities: Vec<Entity>,
    entity_index: HashMap<Entity, usize>,
    /// requirement -> sorted, deduplicated entity indices.
    req_edges: Vec<Vec<usize>>,
    /// entity -> sorted requirement indices.
    entity_edges: Vec<Vec<usize>>,
    /// entity -> source -> number of distinct adjacent requirements.
    df: Vec<HashMap<usize, usize>>,
}

/// Incremental builder; call [`GraphBuilder::add_dataset`] per source.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: Option<KnowledgeGraph>,
}

impl GraphBuilder {
    pub fn new() -> GraphBuilder {
        GraphBuilder { graph: None }
    }

    pub fn add_dataset(&mut self, dataset: &Dataset, entity_sets: &[EntitySet]) -> Result<()> {
        let g = self.graph.get_or_insert_with(KnowledgeGraph::empty);
        g.add_dataset(dataset, entity_sets)
    }

    pub fn build(self) -> KnowledgeGraph {
        self.graph.unwrap_or_else(KnowledgeGraph::empty)
    }
}

impl KnowledgeGraph {
    fn empty() -> KnowledgeGraph {
        KnowledgeGraph {
            sources: Vec::new(),
            reqs: Vec::new(),
            req_index: Vec::new(),
            reqs_by_source: Vec::new(),
            entities: Vec::new(),
            entity_index: HashMap::new(),
            req_edges: Vec::new(),
            entity_edges: Vec::new(),
            df: Vec::new(),
        }
    }

    /// Build a graph from one dataset and its extracted entity sets. Every
    /// entity set must reference a requirement of the dataset.
    pub fn from_dataset(dataset: &Dataset, entity_sets: &[EntitySet]) -> Result<KnowledgeGraph> {
        let mut b = GraphBuilder::new();
        b.add_dataset(dataset, entity_sets)?;
        Ok(b.build())
    }

    fn add_dataset(&mut self, dataset: &Dataset, entity_sets: &[EntitySet]) -> Result<()> {
        if self.sources.contains(&dataset.source) {
            return Err(Error::Integrity(format!(
                "source '{}' already in graph",
                dataset.source
            )));
        }
        let source = self.sources.len();
        self.sources.push(dataset.source.clone());
        self.req_index.push(HashMap::new());
        self.reqs_by_source.push(Vec::new());

        for r in &dataset.requirements {
            let idx = self.reqs.len();
            self.reqs.push(ReqNode {
                source,
                id: r.id.clone(),
            });
            self.req_index[source].insert(r.id.clone(), idx);
            self.reqs_by_source[source].push(idx);
            self.req_edges.push(Vec::new());
        }

        for set in entity_sets {
            let &req_idx = self.req_index[source].get(&set.requirement_id).ok_or_else(|| {
                Error::Integrity(format!(
                    "entity set references unknown requirement '{}' in source '{}'",
                    set.requirement_id, dataset.source
                ))
            })?;
            for entity in &set.entities {
                let ent_idx = match self.entity_index.get(entity) {
                    Some(&i) => i,
                    None => {
                        let i = self.entities.len();
                        self.entities.push(entity.clone());
                        self.entity_index.insert(entity.clone(), i);
                        self.entity_edges.push(Vec::new());
                        self.df.push(HashMap::new());
                        i
                    }
                };
                // BTreeSet input guarantees no duplicate (kind, value) per
                // requirement, so no parallel edges arise.
                self.req_edges[req_idx].push(ent_idx);
                self.entity_edges[ent_idx].push(req_idx);
                *self.df[ent_idx].entry(source).or_insert(0) += 1;
            }
        }
        for edges in &mut self.req_edges {
            edges.sort_unstable();
            edges.dedup();
        }
        for edges in &mut self.entity_edges {
            edges.sort_unstable();
            edges.dedup();
        }
        Ok(())
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn requirement_count(&self, source: &str) -> usize {
        match self.source_idx(source) {
            Ok(s) => self.reqs_by_source[s].len(),
            Err(_) => 0,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.req_edges.iter().map(Vec::len).sum()
    }

    /// Number of distinct requirements of `source` adjacent to `entity`.
    pub fn df(&self, entity: &Entity, source: &str) -> usize {
        let Ok(s) = self.source_idx(source) else {
            return 0;
        };
        self.entity_index
            .get(entity)
            .and_then(|&e| self.df[e].get(&s))
            .copied()
            .unwrap_or(0)
    }

    /// Entities adjacent to a requirement.
    pub fn entities_of(&self, source: &str, id: &str) -> Result<Vec<&Entity>> {
        let q = self.req_idx(source, id)?;
        Ok(self.req_edges[q].iter().map(|&e| &self.entities[e]).collect())
    }

    fn source_idx(&self, source: &str) -> Result<usize> {
        self.sources
            .iter()
            .position(|s| s == source)
            .ok_or_else(|| Error::Lookup(format!("unknown source '{source}'")))
    }

    fn req_idx(&self, source: &str, id: &str) -> Result<usize> {
        let s = self.source_idx(source)?;
        self.req_index[s]
            .get(id)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("unknown requirement '{id}' in source '{source}'")))
    }

    /// Breadth-first shortest path length in edge hops over the undirected
    /// bipartite view. `Ok(None)` means unreachable; `q == j` gives
    /// `Some(0)`.
    pub fn shortest_path_len(&self, source: &str, q: &str, j: &str) -> Result<Option<usize>> {
        let qi = self.req_idx(source, q)?;
        let ji = self.req_idx(source, j)?;
        Ok(self.req_distances(qi)[ji])
    }

    /// BFS from a requirement; returns hop distances to every requirement
    /// node (None = unreachable). Acts as the per-query memo for retrieval.
    fn req_distances(&self, start: usize) -> Vec<Option<usize>> {
        // Node space: requirements [0, R), entities [R, R+E).
        let r = self.reqs.len();
        let total = r + self.entities.len();
        let mut dist: Vec<Option<usize>> = vec![None; total];
        let mut queue = VecDeque::new();
        dist[start] = Some(0);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            let neighbors: &[usize] = if u < r {
                &self.req_edges[u]
            } else {
                &self.entity_edges[u - r]
            };
            for &v in neighbors {
                let v_node = if u < r { v + r } else { v };
                if dist[v_node].is_none() {
                    dist[v_node] = Some(du + 1);
                    queue.push_back(v_node);
                }
            }
        }
        dist.truncate(r);
        dist
    }

    fn shared_entities(&self, qi: usize, ji: usize) -> Vec<usize> {
        let (a, b) = (&self.req_edges[qi], &self.req_edges[ji]);
        let mut shared = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        shared
    }

    fn score_from_parts(
        &self,
        candidate_id: &str,
        shared: &[usize],
        d: Option<usize>,
        weights: &ScoreWeights,
        role_weights: Option<&RoleWeights>,
        source_idx: usize,
    ) -> ScoredCandidate {
        let n_req = self.reqs_by_source[source_idx].len();
        let s_e = shared.len();
        let kinds: BTreeSet<EntityKind> = shared
            .iter()
            .map(|&e| self.entities[e].kind)
            .collect();
        let s_t = kinds.len();
        debug_assert!(s_t <= s_e.min(5), "each matched type implies a shared entity of that kind");
        let s_d = match d {
            Some(h) if h > 0 => 1.0 / h as f64,
            _ => 0.0,
        };
        let weighted_overlap = role_weights.map(|rw| {
            shared
                .iter()
                .map(|&e| {
                    let df = *self.df[e].get(&source_idx).unwrap_or(&1) as f64;
                    rw.weight(self.entities[e].kind) * (n_req as f64 / df).ln()
                })
                .sum::<f64>()
        });
        let overlap_term = weighted_overlap.unwrap_or(s_e as f64);
        let score = weights.alpha * overlap_term + weights.beta * s_t as f64 + weights.gamma * s_d;
        ScoredCandidate {
            candidate_id: candidate_id.to_string(),
            s_e,
            s_t,
            d: d.unwrap_or(0),
            s_d,
            score,
            weighted_overlap,
        }
    }

    /// Score a single candidate against a query (same source, `q != j`).
    pub fn score_candidate(
        &self,
        source: &str,
        q: &str,
        j: &str,
        weights: &ScoreWeights,
    ) -> Result<ScoredCandidate> {
        if q == j {
            return Err(Error::Validation(format!(
                "query and candidate must differ, got '{q}' twice"
            )));
        }
        let qi = self.req_idx(source, q)?;
        let ji = self.req_idx(source, j)?;
        let s = self.source_idx(source)?;
        let shared = self.shared_entities(qi, ji);
        let d = self.req_distances(qi)[ji];
        Ok(self.score_from_parts(j, &shared, d, weights, None, s))
    }

    /// Shared-entity retrieval: candidates are the same-source requirements
    /// adjacent to at least one query entity, minus the query itself, ranked
    /// by descending score with ties broken by ascending candidate id. An
    /// entity-less query returns an empty ranking.
    pub fn retrieve(
        &self,
        source: &str,
        q: &str,
        k: usize,
        weights: &ScoreWeights,
    ) -> Result<Vec<ScoredCandidate>> {
        self.retrieve_inner(source, q, k, weights, None)
    }

    /// The inverse-frequency variant: the shared-entity count is replaced by
    /// `sum over shared e of role_weight(kind(e)) * ln(N_req / df(e))`,
    /// damping entities that occur in most requirements of the source.
    pub fn retrieve_weighted(
        &self,
        source: &str,
        q: &str,
        k: usize,
        weights: &ScoreWeights,
        role_weights: &RoleWeights,
    ) -> Result<Vec<ScoredCandidate>> {
        self.retrieve_inner(source, q, k, weights, Some(role_weights))
    }

    fn retrieve_inner(
        &self,
        source: &str,
        q: &str,
        k: usize,
        weights: &ScoreWeights,
        role_weights: Option<&RoleWeights>,
    ) -> Result<Vec<ScoredCandidate>> {
        if k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        weights.validate()?;
        if let Some(rw) = role_weights {
            rw.validate()?;
        }
        let s = self.source_idx(source)?;
        let qi = self.req_idx(source, q)?;
        if self.req_edges[qi].is_empty() {
            return Ok(Vec::new());
        }

        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for &e in &self.req_edges[qi] {
            for &r in &self.entity_edges[e] {
                if r != qi && self.reqs[r].source == s {
                    candidates.insert(r);
                }
            }
        }
        if candidates.is_empty() {
            return Ok(Vec::new());
        }

        let distances = self.req_distances(qi);
        let mut scored: Vec<ScoredCandidate> = candidates
            .into_iter()
            .map(|ji| {
                let shared = self.shared_entities(qi, ji);
                self.score_from_parts(
                    &self.reqs[ji].id,
                    &shared,
                    distances[ji],
                    weights,
                    role_weights,
                    s,
                )
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.candidate_id.cmp(&b.candidate_id))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Line-oriented text export: `REQ<TAB>source<TAB>id`,
    /// `ENT<TAB>kind<TAB>value`, `EDGE<TAB>req_id<TAB>type<TAB>kind<TAB>value`,
    /// each section sorted for stable bytes.
    pub fn export(&self) -> String {
        let mut out = String::new();
        let mut req_lines: Vec<String> = self
            .reqs
            .iter()
            .map(|r| format!("REQ\t{}\t{}", self.sources[r.source], r.id))
            .collect();
        req_lines.sort();
        let mut ent_lines: Vec<String> = self
            .entities
            .iter()
            .map(|e| format!("ENT\t{}\t{}", e.kind, e.value))
            .collect();
        ent_lines.sort();
        let mut edge_lines: Vec<String> = Vec::new();
        for (ri, edges) in self.req_edges.iter().enumerate() {
            for &ei in edges {
                let e = &self.entities[ei];
                edge_lines.push(format!(
                    "EDGE\t{}\t{}\t{}\t{}",
                    self.reqs[ri].id,
                    RelationType::from(e.kind),
                    e.kind,
                    e.value
                ));
            }
        }
        edge_lines.sort();
        for line in req_lines.into_iter().chain(ent_lines).chain(edge_lines) {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Rebuild a graph from its text export. Requirement ids must be unique
    /// across sources for `EDGE` lines to resolve.
    pub fn import(text: &str) -> Result<KnowledgeGraph> {
        let mut g = KnowledgeGraph::empty();
        let mut id_to_idx: HashMap<String, usize> = HashMap::new();
        let mut ambiguous: BTreeSet<String> = BTreeSet::new();
        let mut edges: Vec<(String, Entity)> = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let location = format!("graph line {}", lineno + 1);
            match fields.first().copied() {
                Some("REQ") if fields.len() == 3 => {
                    let (source, id) = (fields[1].to_string(), fields[2].to_string());
                    let s = match g.sources.iter().position(|x| *x == source) {
                        Some(s) => s,
                        None => {
                            g.sources.push(source);
                            g.req_index.push(HashMap::new());
                            g.reqs_by_source.push(Vec::new());
                            g.sources.len() - 1
                        }
                    };
                    let idx = g.reqs.len();
                    g.reqs.push(ReqNode {
                        source: s,
                        id: id.clone(),
                    });
                    g.req_index[s].insert(id.clone(), idx);
                    g.reqs_by_source[s].push(idx);
                    g.req_edges.push(Vec::new());
                    if id_to_idx.insert(id.clone(), idx).is_some() {
                        ambiguous.insert(id);
                    }
                }
                Some("ENT") if fields.len() == 3 => {
                    let kind = EntityKind::parse(fields[1]).ok_or_else(|| Error::Parse {
                        location: location.clone(),
                        message: format!("unknown entity kind '{}'", fields[1]),
                    })?;
                    let entity = Entity::new(kind, fields[2]);
                    if !g.entity_index.contains_key(&entity) {
                        let i = g.entities.len();
                        g.entities.push(entity.clone());
                        g.entity_index.insert(entity, i);
                        g.entity_edges.push(Vec::new());
                        g.df.push(HashMap::new());
                    }
                }
                Some("EDGE") if fields.len() == 5 => {
                    let kind = EntityKind::parse(fields[3]).ok_or_else(|| Error::Parse {
                        location: location.clone(),
                        message: format!("unknown entity kind '{}'", fields[3]),
                    })?;
                    if RelationType::from(kind).as_str() != fields[2] {
                        return Err(Error::Parse {
                            location,
                            message: format!(
                                "edge type '{}' inconsistent with entity kind '{}'",
                                fields[2], fields[3]
                            ),
                        });
                    }
                    edges.push((fields[1].to_string(), Entity::new(kind, fields[4])));
                }
                _ => {
                    return Err(Error::Parse {
                        location,
                        message: format!("unrecognized record '{line}'"),
                    });
                }
            }
        }

        for (req_id, entity) in edges {
            if ambiguous.contains(&req_id) {
                return Err(Error::Integrity(format!(
                    "edge references requirement id '{req_id}' present in multiple sources"
                )));
            }
            let &ri = id_to_idx.get(&req_id).ok_or_else(|| {
                Error::Integrity(format!("edge references unknown requirement '{req_id}'"))
            })?;
            let &ei = g.entity_index.get(&entity).ok_or_else(|| {
                Error::Integrity(format!(
                    "edge references undeclared entity ({}, '{}')",
                    entity.kind, entity.value
                ))
            })?;
            g.req_edges[ri].push(ei);
            g.entity_edges[ei].push(ri);
        }
        for (ei, edges) in g.entity_edges.iter_mut().enumerate() {
            edges.sort_unstable();
            edges.dedup();
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &ri in edges.iter() {
                *counts.entry(g.reqs[ri].source).or_insert(0) += 1;
            }
            g.df[ei] = counts;
        }
        for edges in &mut g.req_edges {
            edges.sort_unstable();
            edges.dedup();
        }
        Ok(g)
    }
}

/// Per-source descriptive counts used by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub requirements: usize,
    pub entities: usize,
    pub edges: usize,
}

pub fn graph_stats(graph: &KnowledgeGraph) -> BTreeMap<String, GraphStats> {
    graph
        .sources()
        .iter()
        .map(|s| {
            (
                s.clone(),
                GraphStats {
                    requirements: graph.requirement_count(s),
                    entities: graph.entity_count(),
                    edges: graph.edge_count(),
                },
            )
        })
        .collect()
}
