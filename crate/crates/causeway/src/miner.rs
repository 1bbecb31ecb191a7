//! Mines environment-invariant constraint templates from demonstrations.
//!
//! Three detectors cover the three phenomenon classes: point (a node that
//! is always on kept routes and missing from some discarded one), adjacent
//! (kept routes are link-connected while discards are not), and global
//! (loop-freeness, endpoint agreement, weight minimality). Each surviving
//! template carries a likelihood learned from satisfaction counts over
//! selected versus discarded paths — bottom-up belief, no structural
//! information involved.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::config::RunConfig;
use crate::demo::{DemonstrationSet, PracticeRecord};
use crate::graph::{path_predicates, NodeId, PathFacts, Topology, Weight};
use crate::rational::{ratio_serde, render_ratio};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MinerError {
    #[error("the demonstration set is empty")]
    EmptyCorpus,
    #[error("no record binds the `{0}` template")]
    NoApplicableRecords(&'static str),
    #[error("library does not parse: {0}")]
    Parse(String),
    #[error("invalid likelihood counts: {0}")]
    InvalidCounts(String),
}

/// The closed template inventory. Variant order matches the lexicographic
/// order of the kind names, which tie-breaks lean on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Connectivity,
    Endpoints,
    FixedNode,
    LoopFree,
    Shortest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Point,
    Adjacent,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Feasibility,
    Optimization,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 5] = [
        ConstraintKind::Connectivity,
        ConstraintKind::Endpoints,
        ConstraintKind::FixedNode,
        ConstraintKind::LoopFree,
        ConstraintKind::Shortest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::Connectivity => "connectivity",
            ConstraintKind::Endpoints => "endpoints",
            ConstraintKind::FixedNode => "fixed-node",
            ConstraintKind::LoopFree => "loop-free",
            ConstraintKind::Shortest => "shortest",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            ConstraintKind::FixedNode => &["node"],
            ConstraintKind::Endpoints => &["start", "dest"],
            _ => &[],
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            ConstraintKind::FixedNode => Scope::Point,
            ConstraintKind::Connectivity => Scope::Adjacent,
            _ => Scope::Global,
        }
    }

    pub fn category(self) -> Category {
        match self {
            ConstraintKind::Shortest => Category::Optimization,
            _ => Category::Feasibility,
        }
    }
}

/// An environment-invariant constraint with placeholders instead of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintTemplate {
    pub kind: ConstraintKind,
}

impl ConstraintTemplate {
    pub fn new(kind: ConstraintKind) -> Self {
        ConstraintTemplate { kind }
    }
}

/// Satisfaction counts over selected and discarded paths, plus smoothing.
///
/// `score = p_sel · (1 - p_dis)` with Laplace-smoothed proportions; it is
/// monotone in discriminative evidence and stays strictly inside (0,1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LikelihoodDoc", into = "LikelihoodDoc")]
pub struct LikelihoodModel {
    pub template: ConstraintTemplate,
    pub sel_sat: u64,
    pub sel_tot: u64,
    pub dis_sat: u64,
    pub dis_tot: u64,
    pub smoothing: Rational64,
}

impl LikelihoodModel {
    pub fn new(
        template: ConstraintTemplate,
        sel_sat: u64,
        sel_tot: u64,
        dis_sat: u64,
        dis_tot: u64,
        smoothing: Rational64,
    ) -> Result<Self, MinerError> {
        if sel_sat > sel_tot || dis_sat > dis_tot {
            return Err(MinerError::InvalidCounts(format!(
                "{}: satisfied counts exceed totals",
                template.kind.name()
            )));
        }
        if smoothing <= Rational64::from_integer(0) {
            return Err(MinerError::InvalidCounts("smoothing must be positive".into()));
        }
        Ok(LikelihoodModel { template, sel_sat, sel_tot, dis_sat, dis_tot, smoothing })
    }

    fn smoothed(&self, sat: u64, tot: u64) -> Rational64 {
        let s = self.smoothing;
        (Rational64::from_integer(sat as i64) + s)
            / (Rational64::from_integer(tot as i64) + s * 2)
    }

    pub fn p_sel(&self) -> Rational64 {
        self.smoothed(self.sel_sat, self.sel_tot)
    }

    pub fn p_dis(&self) -> Rational64 {
        self.smoothed(self.dis_sat, self.dis_tot)
    }

    pub fn score(&self) -> Rational64 {
        self.p_sel() * (Rational64::from_integer(1) - self.p_dis())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LikelihoodDoc {
    kind: ConstraintKind,
    placeholders: Vec<String>,
    scope: Scope,
    category: Category,
    sel_sat: u64,
    sel_tot: u64,
    dis_sat: u64,
    dis_tot: u64,
    #[serde(with = "ratio_serde")]
    smoothing: Rational64,
    score: String,
}

impl TryFrom<LikelihoodDoc> for LikelihoodModel {
    type Error = MinerError;

    fn try_from(doc: LikelihoodDoc) -> Result<Self, Self::Error> {
        LikelihoodModel::new(
            ConstraintTemplate::new(doc.kind),
            doc.sel_sat,
            doc.sel_tot,
            doc.dis_sat,
            doc.dis_tot,
            doc.smoothing,
        )
    }
}

impl From<LikelihoodModel> for LikelihoodDoc {
    fn from(m: LikelihoodModel) -> Self {
        LikelihoodDoc {
            kind: m.template.kind,
            placeholders: m.template.kind.placeholders().iter().map(|s| s.to_string()).collect(),
            scope: m.template.kind.scope(),
            category: m.template.kind.category(),
            sel_sat: m.sel_sat,
            sel_tot: m.sel_tot,
            dis_sat: m.dis_sat,
            dis_tot: m.dis_tot,
            smoothing: m.smoothing,
            score: render_ratio(m.score()),
        }
    }
}

/// One template candidate with the records that witness it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhenomenonCandidate {
    pub template: ConstraintTemplate,
    /// The concrete node behind a point phenomenon; None for the others.
    pub node: Option<NodeId>,
    /// Indices of the records whose evidence supports the candidate.
    pub witnesses: Vec<usize>,
}

impl PhenomenonCandidate {
    pub fn evidence(&self) -> usize {
        self.witnesses.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhenomenonReport {
    pub candidates: Vec<PhenomenonCandidate>,
}

/// Per-record satisfaction profile shared by detectors and the estimator.
struct RecordAnalysis {
    sel: Vec<PathFacts>,
    dis: Vec<PathFacts>,
    /// The endpoint pair shared by every selected path, when unanimous.
    implied: Option<(NodeId, NodeId)>,
    /// Minimum weight over connected simple endpoint-matching candidates
    /// in the whole record.
    min_feasible_weight: Option<Weight>,
    /// Nodes on every selected path and absent from at least one discard.
    evidence: BTreeSet<NodeId>,
}

fn analyze_record(t: &Topology, record: &PracticeRecord) -> RecordAnalysis {
    let sel: Vec<PathFacts> = record.selected.iter().map(|p| path_predicates(t, p)).collect();
    let dis: Vec<PathFacts> = record.discarded.iter().map(|p| path_predicates(t, p)).collect();

    let mut implied = None;
    if let Some(first) = sel.first() {
        if sel.iter().all(|f| f.endpoints == first.endpoints) {
            implied = Some(first.endpoints.clone());
        }
    }
    let min_feasible_weight = implied.as_ref().and_then(|ends| {
        sel.iter()
            .chain(dis.iter())
            .filter(|f| f.is_connected && f.is_simple && f.endpoints == *ends)
            .filter_map(|f| f.total_weight)
            .min()
    });

    let mut shared: Option<BTreeSet<NodeId>> = None;
    for facts in &sel {
        shared = Some(match shared {
            None => facts.visited.clone(),
            Some(prev) => prev.intersection(&facts.visited).cloned().collect(),
        });
    }
    let evidence = shared
        .unwrap_or_default()
        .into_iter()
        .filter(|n| dis.iter().any(|f| !f.visits(n)))
        .collect();

    RecordAnalysis { sel, dis, implied, min_feasible_weight, evidence }
}

fn analyze(ds: &DemonstrationSet) -> Vec<RecordAnalysis> {
    let records: Vec<&PracticeRecord> = ds.records().iter().collect();
    batch::map_collect(&records, |r| analyze_record(ds.topology_of(r), r))
}

fn sat_shortest(facts: &PathFacts, implied: &(NodeId, NodeId), min: Weight) -> bool {
    facts.is_connected
        && facts.is_simple
        && facts.endpoints == *implied
        && facts.total_weight == Some(min)
}

/// Detects point phenomena: one candidate per node that lies on every
/// selected path of some record while missing from one of its discards.
pub fn detect_point_phenomena(ds: &DemonstrationSet) -> PhenomenonReport {
    let analyses = analyze(ds);
    let mut witnesses: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (index, analysis) in analyses.iter().enumerate() {
        for node in &analysis.evidence {
            witnesses.entry(node.clone()).or_default().push(index);
        }
    }
    PhenomenonReport {
        candidates: witnesses
            .into_iter()
            .map(|(node, witnesses)| PhenomenonCandidate {
                template: ConstraintTemplate::new(ConstraintKind::FixedNode),
                node: Some(node),
                witnesses,
            })
            .collect(),
    }
}

/// Detects the Markovian adjacency phenomenon: kept routes are
/// link-connected while some discarded candidate is not.
pub fn detect_adjacent_phenomena(ds: &DemonstrationSet) -> PhenomenonReport {
    let analyses = analyze(ds);
    let witnesses = analyses
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            a.sel.iter().all(|f| f.is_connected) && a.dis.iter().any(|f| !f.is_connected)
        })
        .map(|(i, _)| i)
        .collect();
    PhenomenonReport {
        candidates: vec![PhenomenonCandidate {
            template: ConstraintTemplate::new(ConstraintKind::Connectivity),
            node: None,
            witnesses,
        }],
    }
}

/// Detects whole-dataset phenomena: loop-freeness, weight minimality, and
/// endpoint agreement.
pub fn detect_global_phenomena(ds: &DemonstrationSet) -> PhenomenonReport {
    let analyses = analyze(ds);
    let mut loop_free = Vec::new();
    let mut shortest = Vec::new();
    let mut endpoints = Vec::new();
    for (index, a) in analyses.iter().enumerate() {
        if a.sel.iter().all(|f| f.is_simple) && a.dis.iter().any(|f| !f.is_simple) {
            loop_free.push(index);
        }
        if let (Some(implied), Some(min)) = (&a.implied, a.min_feasible_weight) {
            let all_minimal = a.sel.iter().all(|f| sat_shortest(f, implied, min));
            let heavier_discard = a.dis.iter().any(|f| {
                f.is_connected
                    && f.is_simple
                    && f.endpoints == *implied
                    && f.total_weight.map_or(false, |w| w > min)
            });
            if all_minimal && heavier_discard {
                shortest.push(index);
            }
        }
        if let Some(implied) = &a.implied {
            if a.dis.iter().any(|f| f.endpoints != *implied) {
                endpoints.push(index);
            }
        }
    }
    PhenomenonReport {
        candidates: vec![
            PhenomenonCandidate {
                template: ConstraintTemplate::new(ConstraintKind::Endpoints),
                node: None,
                witnesses: endpoints,
            },
            PhenomenonCandidate {
                template: ConstraintTemplate::new(ConstraintKind::LoopFree),
                node: None,
                witnesses: loop_free,
            },
            PhenomenonCandidate {
                template: ConstraintTemplate::new(ConstraintKind::Shortest),
                node: None,
                witnesses: shortest,
            },
        ],
    }
}

/// Learns the likelihood term for one template over the corpus.
///
/// Placeholders are bound per record from that record's own evidence; for
/// FixedNode the binding is the corpus-wide most-witnessed evidence node
/// present in the record (ties to the smallest name). Records that cannot
/// bind the template are skipped and excluded from the totals.
pub fn estimate_likelihood(
    template: ConstraintTemplate,
    ds: &DemonstrationSet,
    smoothing: Rational64,
) -> Result<LikelihoodModel, MinerError> {
    if ds.is_empty() {
        return Err(MinerError::EmptyCorpus);
    }
    let analyses = analyze(ds);

    // Corpus-wide witness counts rank FixedNode bindings; the waypoint a
    // practice actually enforces recurs across records while incidental
    // shared nodes do not.
    let mut witness_rank: BTreeMap<NodeId, usize> = BTreeMap::new();
    if template.kind == ConstraintKind::FixedNode {
        for a in &analyses {
            for node in &a.evidence {
                *witness_rank.entry(node.clone()).or_insert(0) += 1;
            }
        }
    }

    let mut sel_sat = 0u64;
    let mut sel_tot = 0u64;
    let mut dis_sat = 0u64;
    let mut dis_tot = 0u64;
    let mut applicable = false;

    for a in &analyses {
        let sat: Box<dyn Fn(&PathFacts) -> bool> = match template.kind {
            ConstraintKind::Connectivity => Box::new(|f: &PathFacts| f.is_connected),
            ConstraintKind::LoopFree => Box::new(|f: &PathFacts| f.is_simple),
            ConstraintKind::Endpoints => match &a.implied {
                Some(implied) => {
                    let implied = implied.clone();
                    Box::new(move |f: &PathFacts| f.endpoints == implied)
                }
                None => continue,
            },
            ConstraintKind::Shortest => match (&a.implied, a.min_feasible_weight) {
                (Some(implied), Some(min)) => {
                    let implied = implied.clone();
                    Box::new(move |f: &PathFacts| sat_shortest(f, &implied, min))
                }
                _ => continue,
            },
            ConstraintKind::FixedNode => {
                let binding = a
                    .evidence
                    .iter()
                    .max_by_key(|n| (witness_rank.get(*n).copied().unwrap_or(0), std::cmp::Reverse((*n).clone())));
                match binding {
                    Some(node) => {
                        let node = node.clone();
                        Box::new(move |f: &PathFacts| f.visits(&node))
                    }
                    None => continue,
                }
            }
        };
        applicable = true;
        sel_tot += a.sel.len() as u64;
        dis_tot += a.dis.len() as u64;
        sel_sat += a.sel.iter().filter(|f| sat(f)).count() as u64;
        dis_sat += a.dis.iter().filter(|f| sat(f)).count() as u64;
    }

    if !applicable {
        return Err(MinerError::NoApplicableRecords(template.kind.name()));
    }
    LikelihoodModel::new(template, sel_sat, sel_tot, dis_sat, dis_tot, smoothing)
}

/// Runs all three detectors, learns a likelihood per candidate template,
/// and keeps the ones scoring at least `tau`, sorted by score descending
/// then kind name ascending.
pub fn mine(
    ds: &DemonstrationSet,
    tau: Rational64,
    smoothing: Rational64,
) -> Result<Vec<LikelihoodModel>, MinerError> {
    if ds.is_empty() {
        return Err(MinerError::EmptyCorpus);
    }
    let point = detect_point_phenomena(ds);
    let mut kinds = vec![
        ConstraintKind::Connectivity,
        ConstraintKind::Endpoints,
        ConstraintKind::LoopFree,
        ConstraintKind::Shortest,
    ];
    if !point.candidates.is_empty() {
        kinds.push(ConstraintKind::FixedNode);
    }
    let mut mined = Vec::new();
    for kind in kinds {
        match estimate_likelihood(ConstraintTemplate::new(kind), ds, smoothing) {
            Ok(model) => {
                if model.score() >= tau {
                    mined.push(model);
                }
            }
            Err(MinerError::NoApplicableRecords(_)) => {}
            Err(other) => return Err(other),
        }
    }
    mined.sort_by(|a, b| {
        b.score()
            .cmp(&a.score())
            .then_with(|| a.template.kind.name().cmp(b.template.kind.name()))
    });
    Ok(mined)
}

/// The mined template set, reloadable by the intent and structure modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateLibrary {
    entries: Vec<LikelihoodModel>,
    tau: Rational64,
    smoothing: Rational64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryDoc {
    templates: Vec<LikelihoodModel>,
    #[serde(with = "ratio_serde")]
    tau: Rational64,
    #[serde(with = "ratio_serde")]
    smoothing: Rational64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<RunConfig>,
}

impl TemplateLibrary {
    pub fn new(entries: Vec<LikelihoodModel>, tau: Rational64, smoothing: Rational64) -> Self {
        TemplateLibrary { entries, tau, smoothing }
    }

    pub fn entries(&self) -> &[LikelihoodModel] {
        &self.entries
    }

    pub fn tau(&self) -> Rational64 {
        self.tau
    }

    pub fn smoothing(&self) -> Rational64 {
        self.smoothing
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: ConstraintKind) -> Option<&LikelihoodModel> {
        self.entries.iter().find(|m| m.template.kind == kind)
    }

    pub fn kinds(&self) -> Vec<ConstraintKind> {
        self.entries.iter().map(|m| m.template.kind).collect()
    }

    pub fn to_json(&self, config: Option<&RunConfig>) -> String {
        let doc = LibraryDoc {
            templates: self.entries.clone(),
            tau: self.tau,
            smoothing: self.smoothing,
            config: config.cloned(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("library serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, MinerError> {
        let doc: LibraryDoc =
            serde_json::from_str(text).map_err(|e| MinerError::Parse(e.to_string()))?;
        Ok(TemplateLibrary { entries: doc.templates, tau: doc.tau, smoothing: doc.smoothing })
    }
}
