//! Topology and path representation, bounded solution-space enumeration,
//! and the brute-force target-space oracle used as ground truth everywhere
//! else in the crate.
//!
//! The solution space deliberately admits invalid node sequences —
//! disconnected and loopy candidates are legal members, and eliminating
//! them is exactly what learned constraints are for.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_rational::Rational64;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::batch;
use crate::intent::Intent;
use crate::rational::{is_non_negative, ratio_serde};

/// Unitless link cost. Exact so that shortest-path ties stay ties.
pub type Weight = Rational64;

/// Candidate ceiling applied to solution-space enumeration by default.
pub const DEFAULT_CANDIDATE_CEILING: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node name `{0}` is not a valid token (letters, digits, `_`, `-`)")]
    InvalidNodeName(String),
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("self-loop on node `{0}` is not allowed")]
    SelfLoop(String),
    #[error("duplicate link between `{src}` and `{dst}`")]
    DuplicateLink { src: String, dst: String },
    #[error("a topology needs at least one node")]
    EmptyNodeSet,
    #[error("link weight must be non-negative")]
    NegativeWeight,
    #[error("a path must contain at least one node")]
    EmptyPath,
    #[error("max_hops must be at least 1")]
    ZeroMaxHops,
    #[error("solution space holds {candidates} candidates, above the ceiling of {ceiling}")]
    SpaceTooLarge { candidates: u128, ceiling: u64 },
}

/// Interned node name. Comparison is case-sensitive byte equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(Arc<str>);

impl NodeId {
    pub fn new(name: &str) -> Result<Self, GraphError> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !valid {
            return Err(GraphError::InvalidNodeName(name.to_string()));
        }
        Ok(NodeId(Arc::from(name)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        NodeId::new(&raw).map_err(D::Error::custom)
    }
}

fn default_weight() -> Weight {
    Weight::from_integer(1)
}

/// One edge of the topology. Undirected links are stored once and matched
/// in both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(default = "default_weight", with = "ratio_serde")]
    pub weight: Weight,
    #[serde(default)]
    pub directed: bool,
}

impl Link {
    pub fn undirected(src: NodeId, dst: NodeId) -> Self {
        Link { src, dst, weight: default_weight(), directed: false }
    }

    pub fn weighted(src: NodeId, dst: NodeId, weight: Weight, directed: bool) -> Self {
        Link { src, dst, weight, directed }
    }
}

/// Validated weighted graph. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct Topology {
    label: String,
    nodes: Vec<NodeId>,
    links: Vec<Link>,
    adjacency: BTreeMap<(NodeId, NodeId), Weight>,
}

/// Wire form of a topology document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub label: String,
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = GraphError;

    fn try_from(doc: TopologyDoc) -> Result<Self, Self::Error> {
        build_topology(&doc.label, doc.nodes, doc.links)
    }
}

impl From<Topology> for TopologyDoc {
    fn from(t: Topology) -> Self {
        TopologyDoc { label: t.label, nodes: t.nodes, links: t.links }
    }
}

/// Builds a validated topology from a node set and a link sequence.
pub fn build_topology(
    label: &str,
    nodes: impl IntoIterator<Item = NodeId>,
    links: impl IntoIterator<Item = Link>,
) -> Result<Topology, GraphError> {
    let node_set: BTreeSet<NodeId> = nodes.into_iter().collect();
    if node_set.is_empty() {
        return Err(GraphError::EmptyNodeSet);
    }
    let nodes: Vec<NodeId> = node_set.iter().cloned().collect();
    let mut adjacency = BTreeMap::new();
    let mut stored = Vec::new();
    for link in links {
        if !node_set.contains(&link.src) {
            return Err(GraphError::UnknownEndpoint(link.src.to_string()));
        }
        if !node_set.contains(&link.dst) {
            return Err(GraphError::UnknownEndpoint(link.dst.to_string()));
        }
        if link.src == link.dst {
            return Err(GraphError::SelfLoop(link.src.to_string()));
        }
        if !is_non_negative(link.weight) {
            return Err(GraphError::NegativeWeight);
        }
        let mut directions = vec![(link.src.clone(), link.dst.clone())];
        if !link.directed {
            directions.push((link.dst.clone(), link.src.clone()));
        }
        for key in directions {
            if adjacency.contains_key(&key) {
                return Err(GraphError::DuplicateLink {
                    src: key.0.to_string(),
                    dst: key.1.to_string(),
                });
            }
            adjacency.insert(key, link.weight);
        }
        stored.push(link);
    }
    Ok(Topology { label: label.to_string(), nodes, links: stored, adjacency })
}

impl Topology {
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Nodes in sorted order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.binary_search(node).is_ok()
    }

    pub fn link_weight(&self, src: &NodeId, dst: &NodeId) -> Option<Weight> {
        self.adjacency.get(&(src.clone(), dst.clone())).copied()
    }

    pub fn has_link(&self, src: &NodeId, dst: &NodeId) -> bool {
        self.adjacency.contains_key(&(src.clone(), dst.clone()))
    }
}

/// A candidate node sequence. May be disconnected, loopy, or otherwise
/// invalid — validity is exactly what constraints test.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Path(Vec<NodeId>);

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyPath);
        }
        Ok(Path(nodes))
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn hop_count(&self) -> usize {
        self.0.len() - 1
    }

    pub fn first(&self) -> &NodeId {
        &self.0[0]
    }

    pub fn last(&self) -> &NodeId {
        self.0.last().expect("paths are non-empty")
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let nodes = Vec::<NodeId>::deserialize(d)?;
        Path::new(nodes).map_err(D::Error::custom)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for node in &self.0 {
            if !first {
                f.write_str("->")?;
            }
            first = false;
            write!(f, "{node}")?;
        }
        Ok(())
    }
}

/// Deduplicated path collection with lexicographic iteration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathSet {
    members: BTreeSet<Path>,
}

impl PathSet {
    pub fn new() -> Self {
        PathSet::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, path: &Path) -> bool {
        self.members.contains(path)
    }

    pub fn insert(&mut self, path: Path) -> bool {
        self.members.insert(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Path> {
        self.members.iter()
    }

    pub fn intersection_size(&self, other: &PathSet) -> usize {
        self.members.iter().filter(|p| other.contains(p)).count()
    }

    pub fn is_subset(&self, other: &PathSet) -> bool {
        self.members.iter().all(|p| other.contains(p))
    }
}

impl FromIterator<Path> for PathSet {
    fn from_iter<I: IntoIterator<Item = Path>>(iter: I) -> Self {
        PathSet { members: iter.into_iter().collect() }
    }
}

impl Extend<Path> for PathSet {
    fn extend<I: IntoIterator<Item = Path>>(&mut self, iter: I) {
        self.members.extend(iter);
    }
}

impl Serialize for PathSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.members.iter())
    }
}

impl<'de> Deserialize<'de> for PathSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let paths = Vec::<Path>::deserialize(d)?;
        Ok(paths.into_iter().collect())
    }
}

/// Primitive facts about one path on one topology. Total: defined for every
/// path, including ones that mention foreign nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathFacts {
    pub is_connected: bool,
    pub is_simple: bool,
    pub endpoints: (NodeId, NodeId),
    pub visited: BTreeSet<NodeId>,
    pub total_weight: Option<Weight>,
}

impl PathFacts {
    pub fn visits(&self, node: &NodeId) -> bool {
        self.visited.contains(node)
    }
}

/// Evaluates the primitive predicates of `p` against `t`.
pub fn path_predicates(t: &Topology, p: &Path) -> PathFacts {
    let nodes = p.nodes();
    let mut is_connected = true;
    let mut weight = Weight::from_integer(0);
    for pair in nodes.windows(2) {
        match t.link_weight(&pair[0], &pair[1]) {
            Some(w) => weight += w,
            None => {
                is_connected = false;
                break;
            }
        }
    }
    // A repeated link implies a repeated node, so node uniqueness covers both.
    let visited: BTreeSet<NodeId> = nodes.iter().cloned().collect();
    let is_simple = visited.len() == nodes.len();
    PathFacts {
        is_connected,
        is_simple,
        endpoints: (p.first().clone(), p.last().clone()),
        visited,
        total_weight: if is_connected { Some(weight) } else { None },
    }
}

/// Closed-form candidate count for the bounded walk enumeration.
fn candidate_count(n: usize, start_is_dest: bool, max_hops: usize) -> u128 {
    let n = n as u128;
    let mut total: u128 = if start_is_dest { 1 } else { 0 };
    for hops in 1..=max_hops {
        let interior = hops as u32 - 1;
        let count = n.checked_pow(interior).unwrap_or(u128::MAX);
        total = total.saturating_add(count);
    }
    total
}

/// Enumerates every node sequence from `endpoints.0` to `endpoints.1` with
/// at most `max_hops` hops, including disconnected candidates.
pub fn enumerate_solution_space(
    t: &Topology,
    endpoints: (&NodeId, &NodeId),
    max_hops: usize,
) -> Result<PathSet, GraphError> {
    enumerate_solution_space_with_ceiling(t, endpoints, max_hops, DEFAULT_CANDIDATE_CEILING)
}

/// As [`enumerate_solution_space`] with an explicit candidate ceiling.
pub fn enumerate_solution_space_with_ceiling(
    t: &Topology,
    endpoints: (&NodeId, &NodeId),
    max_hops: usize,
    ceiling: u64,
) -> Result<PathSet, GraphError> {
    let (start, dest) = endpoints;
    if max_hops == 0 {
        return Err(GraphError::ZeroMaxHops);
    }
    for node in [start, dest] {
        if !t.contains(node) {
            return Err(GraphError::UnknownEndpoint(node.to_string()));
        }
    }
    let count = candidate_count(t.nodes().len(), start == dest, max_hops);
    if count > ceiling as u128 {
        return Err(GraphError::SpaceTooLarge { candidates: count, ceiling });
    }

    let max_len = max_hops + 1;
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = vec![start.clone()];
    walk(t.nodes(), dest, max_len, &mut prefix, &mut out);
    Ok(out.into_iter().collect())
}

fn walk(nodes: &[NodeId], dest: &NodeId, max_len: usize, prefix: &mut Vec<NodeId>, out: &mut Vec<Path>) {
    if prefix.last().expect("prefix never empty") == dest {
        out.push(Path(prefix.clone()));
    }
    if prefix.len() == max_len {
        return;
    }
    for node in nodes {
        prefix.push(node.clone());
        walk(nodes, dest, max_len, prefix, out);
        prefix.pop();
    }
}

/// Whether `p` meets every feasibility requirement of `intent`: connected,
/// loop-free, correct endpoints, passes all VIA nodes, avoids all AVOID
/// nodes. The SHORTEST objective is handled separately.
pub fn satisfies_intent_feasibility(facts: &PathFacts, intent: &Intent) -> bool {
    facts.is_connected
        && facts.is_simple
        && facts.endpoints.0 == *intent.start()
        && facts.endpoints.1 == *intent.dest()
        && intent.via().iter().all(|n| facts.visits(n))
        && intent.avoid().iter().all(|n| !facts.visits(n))
}

/// Brute-force target space: filters the enumerated solution space by
/// direct predicate evaluation. Never consults mined constraints or
/// learned structures.
pub fn oracle_target_space(
    t: &Topology,
    intent: &Intent,
    max_hops: usize,
) -> Result<PathSet, GraphError> {
    oracle_target_space_with_ceiling(t, intent, max_hops, DEFAULT_CANDIDATE_CEILING)
}

/// As [`oracle_target_space`] with an explicit candidate ceiling.
pub fn oracle_target_space_with_ceiling(
    t: &Topology,
    intent: &Intent,
    max_hops: usize,
    ceiling: u64,
) -> Result<PathSet, GraphError> {
    for node in intent.referenced_nodes() {
        if !t.contains(node) {
            return Err(GraphError::UnknownEndpoint(node.to_string()));
        }
    }
    let space =
        enumerate_solution_space_with_ceiling(t, (intent.start(), intent.dest()), max_hops, ceiling)?;
    Ok(oracle_target_from_space(t, intent, &space))
}

/// The oracle filter applied to an already enumerated space. Exposed so the
/// demonstration generator can reuse one enumeration for several passes.
pub fn oracle_target_from_space(t: &Topology, intent: &Intent, space: &PathSet) -> PathSet {
    let candidates: Vec<&Path> = space.iter().collect();
    let facts = batch::map_collect(&candidates, |p| path_predicates(t, p));
    let mut feasible: Vec<(&Path, Weight)> = Vec::new();
    for (path, facts) in candidates.iter().zip(facts.iter()) {
        if satisfies_intent_feasibility(facts, intent) {
            let w = facts.total_weight.expect("connected paths have a weight");
            feasible.push((path, w));
        }
    }
    if intent.wants_shortest() {
        if let Some(min) = feasible.iter().map(|(_, w)| *w).min() {
            feasible.retain(|(_, w)| *w == min);
        }
    }
    feasible.into_iter().map(|(p, _)| (*p).clone()).collect()
}
