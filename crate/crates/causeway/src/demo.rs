//! Demonstration corpus: file format, validation, and a seeded generator
//! that reproduces the path-selection practice of selecting target routes
//! and discarding flawed candidates.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::graph::{
    enumerate_solution_space_with_ceiling, oracle_target_from_space, path_predicates, GraphError,
    NodeId, Path, PathFacts, PathSet, Topology, Weight,
};
use crate::intent::{parse_intent, Intent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemoError {
    #[error("corpus does not parse: {0}")]
    Parse(String),
    #[error("record {record} references unknown topology `{label}`")]
    UnknownTopologyLabel { record: usize, label: String },
    #[error("duplicate topology label `{0}`")]
    DuplicateTopologyLabel(String),
    #[error("record {record}: selected and discarded sets overlap")]
    OverlappingSets { record: usize },
    #[error("record {record}: selected set is empty")]
    EmptySelected { record: usize },
    #[error("record {record}: path mentions `{node}`, absent from topology `{label}`")]
    UnknownPathNode { record: usize, node: String, label: String },
    #[error("n_records must be at least 1")]
    ZeroRecords,
    #[error("no endpoint pair with a valid path found after {attempts} attempts")]
    NoValidPath { attempts: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One demonstration: the routes an operator kept and the ones they threw
/// away, on a named topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeRecord {
    pub topology_label: String,
    pub selected: PathSet,
    pub discarded: PathSet,
}

/// A validated corpus of demonstrations over one or more topologies.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    topologies: BTreeMap<String, Topology>,
    records: Vec<PracticeRecord>,
    seed: Option<u64>,
}

impl DemonstrationSet {
    pub fn topologies(&self) -> &BTreeMap<String, Topology> {
        &self.topologies
    }

    pub fn records(&self) -> &[PracticeRecord] {
        &self.records
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn topology_of(&self, record: &PracticeRecord) -> &Topology {
        &self.topologies[&record.topology_label]
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds a set from parts, enforcing every corpus invariant.
    pub fn build(
        topologies: impl IntoIterator<Item = Topology>,
        records: Vec<PracticeRecord>,
        seed: Option<u64>,
    ) -> Result<Self, DemoError> {
        let mut map = BTreeMap::new();
        for t in topologies {
            if map.contains_key(t.label()) {
                return Err(DemoError::DuplicateTopologyLabel(t.label().to_string()));
            }
            map.insert(t.label().to_string(), t);
        }
        for (index, record) in records.iter().enumerate() {
            let topology = map.get(&record.topology_label).ok_or_else(|| {
                DemoError::UnknownTopologyLabel {
                    record: index,
                    label: record.topology_label.clone(),
                }
            })?;
            if record.selected.is_empty() {
                return Err(DemoError::EmptySelected { record: index });
            }
            if record.selected.iter().any(|p| record.discarded.contains(p)) {
                return Err(DemoError::OverlappingSets { record: index });
            }
            for path in record.selected.iter().chain(record.discarded.iter()) {
                for node in path.nodes() {
                    if !topology.contains(node) {
                        return Err(DemoError::UnknownPathNode {
                            record: index,
                            node: node.to_string(),
                            label: record.topology_label.clone(),
                        });
                    }
                }
            }
        }
        Ok(DemonstrationSet { topologies: map, records, seed })
    }

    /// Concatenates two corpora; labels shared by both must agree.
    pub fn merge(self, other: DemonstrationSet) -> Result<Self, DemoError> {
        let mut topologies: Vec<Topology> = self.topologies.into_values().collect();
        for (label, t) in other.topologies {
            match topologies.iter().find(|existing| existing.label() == label) {
                Some(existing) if *existing == t => {}
                Some(_) => return Err(DemoError::DuplicateTopologyLabel(label)),
                None => topologies.push(t),
            }
        }
        let mut records = self.records;
        records.extend(other.records);
        DemonstrationSet::build(topologies, records, None)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusDoc {
    topologies: Vec<Topology>,
    records: Vec<PracticeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<RunConfig>,
}

/// Parses and validates a corpus document.
pub fn load_demonstrations(text: &str) -> Result<DemonstrationSet, DemoError> {
    let doc: CorpusDoc = serde_json::from_str(text).map_err(|e| DemoError::Parse(e.to_string()))?;
    DemonstrationSet::build(doc.topologies, doc.records, doc.seed)
}

/// Serializes a corpus with the configuration that produced it.
pub fn serialize_demonstrations(ds: &DemonstrationSet, config: Option<&RunConfig>) -> String {
    let doc = CorpusDoc {
        topologies: ds.topologies.values().cloned().collect(),
        records: ds.records.clone(),
        seed: ds.seed,
        config: config.cloned(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("corpus serialization");
    out.push('\n');
    out
}

/// The demonstrated practice: connectivity + loop-free + shortest, with an
/// optional mandatory waypoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicySpec {
    pub via: Option<NodeId>,
}

impl PolicySpec {
    fn intent_for(&self, start: &NodeId, dest: &NodeId) -> Intent {
        let mut text = format!("FIND PATH FROM {start} TO {dest}");
        if let Some(via) = &self.via {
            text.push_str(&format!(" VIA {via}"));
        }
        parse_intent(&text).expect("generated intent text is grammatical")
    }
}

const RETRIES_PER_RECORD: usize = 32;

/// Generates a seeded demonstration corpus on `t`.
///
/// Each record keeps the brute-force target space for a random endpoint
/// pair and discards a stratified sample of flawed candidates: one
/// strictly heavier feasible path, one connected loopy walk, one
/// disconnected simple candidate, and disconnected wrong-endpoint walks
/// for the remainder. Strata that do not exist on the drawn pair are
/// skipped. Deterministic for a fixed seed.
pub fn generate_demonstrations(
    t: &Topology,
    policy: &PolicySpec,
    n_records: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<DemonstrationSet, DemoError> {
    if n_records == 0 {
        return Err(DemoError::ZeroRecords);
    }
    if let Some(via) = &policy.via {
        if !t.contains(via) {
            return Err(DemoError::Graph(GraphError::UnknownEndpoint(via.to_string())));
        }
    }
    let max_hops = config.effective_max_hops(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        records.push(generate_record(t, policy, max_hops, config, &mut rng)?);
    }
    DemonstrationSet::build([t.clone()], records, Some(seed))
}

fn generate_record(
    t: &Topology,
    policy: &PolicySpec,
    max_hops: usize,
    config: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PracticeRecord, DemoError> {
    // Endpoints never coincide with the waypoint: the practice routes
    // traffic through it, not from it.
    let endpoint_pool: Vec<&NodeId> = t
        .nodes()
        .iter()
        .filter(|n| policy.via.as_ref() != Some(*n))
        .collect();
    if endpoint_pool.len() < 2 {
        return Err(DemoError::NoValidPath { attempts: 0 });
    }

    for attempt in 1..=RETRIES_PER_RECORD {
        let start = endpoint_pool[rng.random_range(0..endpoint_pool.len())].clone();
        let dest = loop {
            let candidate = endpoint_pool[rng.random_range(0..endpoint_pool.len())].clone();
            if candidate != start {
                break candidate;
            }
        };
        let intent = policy.intent_for(&start, &dest);
        let space = enumerate_solution_space_with_ceiling(
            t,
            (&start, &dest),
            max_hops,
            config.candidate_ceiling,
        )?;
        let selected = oracle_target_from_space(t, &intent, &space);
        if selected.is_empty() {
            if attempt == RETRIES_PER_RECORD {
                return Err(DemoError::NoValidPath { attempts: attempt });
            }
            continue;
        }
        let discarded = sample_discards(t, policy, &intent, &space, &selected, max_hops, config, rng);
        debug_assert!(selected.iter().all(|p| !discarded.contains(p)));
        return Ok(PracticeRecord {
            topology_label: t.label().to_string(),
            selected,
            discarded,
        });
    }
    unreachable!("loop returns or errors on the last attempt")
}

struct Candidate {
    path: Path,
    facts: PathFacts,
}

#[allow(clippy::too_many_arguments)]
fn sample_discards(
    t: &Topology,
    policy: &PolicySpec,
    intent: &Intent,
    space: &PathSet,
    selected: &PathSet,
    max_hops: usize,
    config: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> PathSet {
    let target_weight: Option<Weight> = selected
        .iter()
        .filter_map(|p| path_predicates(t, p).total_weight)
        .min();
    let pool: Vec<Candidate> = space
        .iter()
        .filter(|p| !selected.contains(p))
        .map(|p| Candidate { path: p.clone(), facts: path_predicates(t, p) })
        .collect();

    let endpoints_match = |c: &Candidate| {
        c.facts.endpoints.0 == *intent.start() && c.facts.endpoints.1 == *intent.dest()
    };
    // Strata: one strictly heavier feasible path, one connected loopy walk,
    // one disconnected simple candidate.
    let heavy: Vec<&Candidate> = pool
        .iter()
        .filter(|c| {
            c.facts.is_connected
                && c.facts.is_simple
                && endpoints_match(c)
                && match (c.facts.total_weight, target_weight) {
                    (Some(w), Some(min)) => w > min,
                    _ => false,
                }
        })
        .collect();
    let loopy: Vec<&Candidate> =
        pool.iter().filter(|c| c.facts.is_connected && !c.facts.is_simple).collect();
    let disconnected_simple: Vec<&Candidate> =
        pool.iter().filter(|c| !c.facts.is_connected && c.facts.is_simple).collect();

    let mut discards = PathSet::new();
    for stratum in [&heavy, &loopy, &disconnected_simple] {
        if discards.len() >= config.discard_size {
            break;
        }
        if let Some(pick) = pick_preferring_no_via(stratum, policy.via.as_ref(), rng) {
            discards.insert(pick.path.clone());
        }
    }

    // The remainder is wrong-endpoint disconnected garbage; it carries the
    // disconnected stratum and makes the endpoint pair learnable at all.
    let mut tries = 0usize;
    let cap = config.discard_size * 60;
    while discards.len() < config.discard_size && tries < cap {
        tries += 1;
        if let Some(path) = garbage_walk(t, policy, intent, max_hops, rng) {
            if !selected.contains(&path) {
                discards.insert(path);
            }
        }
    }
    discards
}

fn pick_preferring_no_via<'a>(
    stratum: &[&'a Candidate],
    via: Option<&NodeId>,
    rng: &mut ChaCha8Rng,
) -> Option<&'a Candidate> {
    if stratum.is_empty() {
        return None;
    }
    if let Some(via) = via {
        let misses: Vec<&&Candidate> = stratum.iter().filter(|c| !c.facts.visits(via)).collect();
        if !misses.is_empty() {
            return Some(misses[rng.random_range(0..misses.len())]);
        }
    }
    Some(stratum[rng.random_range(0..stratum.len())])
}

/// Draws one disconnected walk with endpoints other than the record's pair.
/// Under a via policy the walk usually misses the waypoint entirely.
fn garbage_walk(
    t: &Topology,
    policy: &PolicySpec,
    intent: &Intent,
    max_hops: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Path> {
    let avoid_via = match &policy.via {
        Some(_) => rng.random_range(0..100u32) < 85,
        None => false,
    };
    let nodes: Vec<&NodeId> = t
        .nodes()
        .iter()
        .filter(|n| !(avoid_via && policy.via.as_ref() == Some(*n)))
        .collect();
    if nodes.len() < 2 {
        return None;
    }
    let max_len = max_hops + 1;
    for _ in 0..24 {
        let length = if max_len >= 5 {
            max_len - rng.random_range(0..2usize)
        } else {
            max_len.max(2)
        };
        let start = nodes[rng.random_range(0..nodes.len())];
        let dest = nodes[rng.random_range(0..nodes.len())];
        if start == dest || (start == intent.start() && dest == intent.dest()) {
            continue;
        }
        let mut seq = Vec::with_capacity(length);
        seq.push(start.clone());
        for _ in 0..length.saturating_sub(2) {
            seq.push(nodes[rng.random_range(0..nodes.len())].clone());
        }
        seq.push(dest.clone());
        let path = Path::new(seq).expect("walks are non-empty");
        if !path_predicates(t, &path).is_connected {
            return Some(path);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, satisfies_intent_feasibility, Link};

    fn node(name: &str) -> NodeId {
        NodeId::new(name).unwrap()
    }

    pub(crate) fn triangle() -> Topology {
        build_topology(
            "triangle",
            [node("A"), node("B"), node("C")],
            [
                Link::undirected(node("A"), node("B")),
                Link::undirected(node("B"), node("C")),
                Link::undirected(node("A"), node("C")),
            ],
        )
        .unwrap()
    }

    fn path_of(names: &[&str]) -> Path {
        Path::new(names.iter().map(|n| node(n)).collect()).unwrap()
    }

    #[test]
    fn generated_record_selected_matches_oracle() {
        let t = triangle();
        let cfg = RunConfig::default();
        let ds = generate_demonstrations(&t, &PolicySpec::default(), 1, 7, &cfg).unwrap();
        assert_eq!(ds.records().len(), 1);
        let record = &ds.records()[0];
        // Every selected path must satisfy the full policy; every discarded
        // path must violate at least one predicate.
        let start = record.selected.iter().next().unwrap().first().clone();
        let dest = record.selected.iter().next().unwrap().last().clone();
        let intent = PolicySpec::default().intent_for(&start, &dest);
        for p in record.selected.iter() {
            let facts = path_predicates(&t, p);
            assert!(satisfies_intent_feasibility(&facts, &intent));
        }
        for p in record.discarded.iter() {
            let facts = path_predicates(&t, p);
            let feasible = satisfies_intent_feasibility(&facts, &intent);
            let minimal = facts.total_weight
                == record
                    .selected
                    .iter()
                    .filter_map(|s| path_predicates(&t, s).total_weight)
                    .min();
            assert!(!(feasible && minimal), "discard {p} satisfies the whole policy");
        }
    }

    #[test]
    fn zero_records_is_a_precondition_error() {
        let t = triangle();
        let err = generate_demonstrations(&t, &PolicySpec::default(), 0, 7, &RunConfig::default())
            .unwrap_err();
        assert_eq!(err, DemoError::ZeroRecords);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let t = triangle();
        let cfg = RunConfig::default();
        let a = generate_demonstrations(&t, &PolicySpec::default(), 5, 11, &cfg).unwrap();
        let b = generate_demonstrations(&t, &PolicySpec::default(), 5, 11, &cfg).unwrap();
        assert_eq!(
            serialize_demonstrations(&a, Some(&cfg)),
            serialize_demonstrations(&b, Some(&cfg))
        );
        let c = generate_demonstrations(&t, &PolicySpec::default(), 5, 12, &cfg).unwrap();
        assert_ne!(
            serialize_demonstrations(&a, Some(&cfg)),
            serialize_demonstrations(&c, Some(&cfg))
        );
    }

    #[test]
    fn corpus_round_trip_preserves_the_set() {
        let t = triangle();
        let cfg = RunConfig::default();
        let ds = generate_demonstrations(&t, &PolicySpec::default(), 3, 5, &cfg).unwrap();
        let text = serialize_demonstrations(&ds, Some(&cfg));
        let back = load_demonstrations(&text).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let t = triangle();
        let record = PracticeRecord {
            topology_label: "triangle".into(),
            selected: [path_of(&["A", "B"])].into_iter().collect(),
            discarded: [path_of(&["A", "B"])].into_iter().collect(),
        };
        let err = DemonstrationSet::build([t], vec![record], None).unwrap_err();
        assert_eq!(err, DemoError::OverlappingSets { record: 0 });
    }

    #[test]
    fn empty_selected_rejected() {
        let t = triangle();
        let record = PracticeRecord {
            topology_label: "triangle".into(),
            selected: PathSet::new(),
            discarded: [path_of(&["A", "B"])].into_iter().collect(),
        };
        let err = DemonstrationSet::build([t], vec![record], None).unwrap_err();
        assert_eq!(err, DemoError::EmptySelected { record: 0 });
    }

    #[test]
    fn unknown_label_and_foreign_node_rejected() {
        let t = triangle();
        let record = PracticeRecord {
            topology_label: "nope".into(),
            selected: [path_of(&["A", "B"])].into_iter().collect(),
            discarded: PathSet::new(),
        };
        let err = DemonstrationSet::build([t.clone()], vec![record], None).unwrap_err();
        assert!(matches!(err, DemoError::UnknownTopologyLabel { record: 0, .. }));

        let record = PracticeRecord {
            topology_label: "triangle".into(),
            selected: [path_of(&["A", "Z"])].into_iter().collect(),
            discarded: PathSet::new(),
        };
        let err = DemonstrationSet::build([t], vec![record], None).unwrap_err();
        assert!(matches!(err, DemoError::UnknownPathNode { record: 0, .. }));
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(load_demonstrations("{not json"), Err(DemoError::Parse(_))));
    }

    #[test]
    fn via_policy_selected_paths_pass_the_waypoint() {
        let t = triangle();
        let policy = PolicySpec { via: Some(node("B")) };
        let cfg = RunConfig::default();
        let ds = generate_demonstrations(&t, &policy, 4, 3, &cfg).unwrap();
        for record in ds.records() {
            for p in record.selected.iter() {
                assert!(p.nodes().contains(&node("B")));
            }
        }
    }
}
