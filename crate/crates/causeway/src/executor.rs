//! Executes a causal knowledge structure as stepwise solution-space
//! filters, measures per-step precision and recall against the oracle
//! target space, renders step-by-step explanations, and exports flow rules
//! for the selected routes.

use std::fmt::Write as _;

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::config::RunConfig;
use crate::graph::{
    enumerate_solution_space_with_ceiling, path_predicates, GraphError, NodeId, Path, PathSet,
    Topology, Weight,
};
use crate::intent::{ConstraintInstance, Intent};
use crate::miner::{Category, ConstraintKind};
use crate::rational::render_ratio;
use crate::structure::CausalKnowledgeStructure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("constraint binds `{0}`, which is not a node of the topology")]
    UnboundEntity(String),
    #[error("the solution space is empty")]
    EmptySolutionSpace,
    #[error("the target space is empty")]
    EmptyTarget,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("document does not parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One elimination with the violated constraint spelled out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub path: Path,
    pub reason: String,
}

/// One filter application: the subspace before, the survivors, and every
/// eliminated candidate with its reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub index: usize,
    pub instance: ConstraintInstance,
    pub before: PathSet,
    pub survivors: PathSet,
    pub eliminated: Vec<Elimination>,
}

/// Full record of one execution: the intent, the chain, and each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub topology_label: String,
    pub intent: Intent,
    pub structure: CausalKnowledgeStructure,
    pub steps: Vec<FilterStep>,
    pub final_set: PathSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

impl ExecutionTrace {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("trace serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ExecError> {
        serde_json::from_str(text).map_err(|e| ExecError::Parse(e.to_string()))
    }
}

/// Why `path` fails `instance`, or None when it satisfies it. Covers the
/// feasibility kinds; the optimization kind needs the subspace context and
/// lives inside [`execute`].
pub fn feasibility_rejection(t: &Topology, instance: &ConstraintInstance, path: &Path) -> Option<String> {
    let facts = path_predicates(t, path);
    match instance.kind() {
        ConstraintKind::Connectivity => path
            .nodes()
            .windows(2)
            .find(|pair| !t.has_link(&pair[0], &pair[1]))
            .map(|pair| {
                format!("link {}->{} is absent from topology `{}`", pair[0], pair[1], t.label())
            }),
        ConstraintKind::LoopFree => {
            let mut seen = std::collections::BTreeSet::new();
            path.nodes()
                .iter()
                .find(|n| !seen.insert((*n).clone()))
                .map(|n| format!("node {n} is traversed more than once"))
        }
        ConstraintKind::Endpoints => {
            let start = &instance.bindings["start"];
            let dest = &instance.bindings["dest"];
            if path.first() != start {
                Some(format!("starts at {}, expected {start}", path.first()))
            } else if path.last() != dest {
                Some(format!("ends at {}, expected {dest}", path.last()))
            } else {
                None
            }
        }
        ConstraintKind::FixedNode => {
            let node = &instance.bindings["node"];
            if instance.negated {
                facts.visits(node).then(|| format!("visits excluded node {node}"))
            } else {
                (!facts.visits(node)).then(|| format!("does not visit required node {node}"))
            }
        }
        ConstraintKind::Shortest => None,
    }
}

fn shortest_rejection(weight: Option<Weight>, min: Option<Weight>) -> Option<String> {
    match (weight, min) {
        (None, _) => Some("has no defined total weight (not connected)".into()),
        (Some(w), Some(min)) if w > min => Some(format!(
            "total weight {} exceeds the subspace minimum {}",
            render_ratio(w),
            render_ratio(min)
        )),
        _ => None,
    }
}

/// Re-evaluates one recorded step against `path`: true when the path
/// satisfies the step's instantiated predicate in that step's context.
pub fn step_predicate_holds(t: &Topology, step: &FilterStep, path: &Path) -> bool {
    if step.instance.kind() == ConstraintKind::Shortest {
        let min = step
            .before
            .iter()
            .filter_map(|p| path_predicates(t, p).total_weight)
            .min();
        shortest_rejection(path_predicates(t, path).total_weight, min).is_none()
    } else {
        feasibility_rejection(t, &step.instance, path).is_none()
    }
}

/// Applies the structure's chain to the enumerated solution space, one
/// constraint per step, recording every elimination with its reason.
pub fn execute(
    structure: &CausalKnowledgeStructure,
    t: &Topology,
    intent: &Intent,
    max_hops: usize,
    ceiling: u64,
) -> Result<ExecutionTrace, ExecError> {
    for instance in &structure.chain.chain {
        for node in instance.bindings.values() {
            if !t.contains(node) {
                return Err(ExecError::UnboundEntity(node.to_string()));
            }
        }
    }
    let space = enumerate_solution_space_with_ceiling(
        t,
        (intent.start(), intent.dest()),
        max_hops,
        ceiling,
    )?;
    if space.is_empty() {
        return Err(ExecError::EmptySolutionSpace);
    }

    let mut current = space;
    let mut steps = Vec::with_capacity(structure.chain.chain.len());
    for (index, instance) in structure.chain.chain.iter().enumerate() {
        let candidates: Vec<&Path> = current.iter().collect();
        let rejections: Vec<Option<String>> =
            if instance.kind().category() == Category::Optimization {
                let weights = batch::map_collect(&candidates, |p| {
                    path_predicates(t, p).total_weight
                });
                let min = weights.iter().flatten().min().copied();
                weights.into_iter().map(|w| shortest_rejection(w, min)).collect()
            } else {
                batch::map_collect(&candidates, |p| feasibility_rejection(t, instance, p))
            };

        let mut survivors = PathSet::new();
        let mut eliminated = Vec::new();
        for (path, rejection) in candidates.into_iter().zip(rejections) {
            match rejection {
                None => {
                    survivors.insert(path.clone());
                }
                Some(reason) => eliminated.push(Elimination { path: path.clone(), reason }),
            }
        }
        debug_assert_eq!(survivors.len() + eliminated.len(), current.len());
        steps.push(FilterStep {
            index,
            instance: instance.clone(),
            before: current,
            survivors: survivors.clone(),
            eliminated,
        });
        current = survivors;
    }

    Ok(ExecutionTrace {
        topology_label: t.label().to_string(),
        intent: intent.clone(),
        structure: structure.clone(),
        steps,
        final_set: current,
        config: None,
    })
}

/// Per-step precision and recall against a fixed target space, exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepMetrics {
    pub index: usize,
    pub constraint: String,
    pub subspace_size: usize,
    pub precision: Rational64,
    pub recall: Rational64,
}

fn ratio_of(num: usize, den: usize) -> Rational64 {
    if den == 0 {
        Rational64::zero()
    } else {
        Rational64::new(num as i64, den as i64)
    }
}

/// Computes P and R for every step of the trace. A zero-step trace yields
/// one row for the unfiltered solution space.
pub fn compute_metrics(
    trace: &ExecutionTrace,
    target: &PathSet,
) -> Result<Vec<StepMetrics>, ExecError> {
    if target.is_empty() {
        return Err(ExecError::EmptyTarget);
    }
    let row = |index: usize, constraint: String, subspace: &PathSet| {
        let kept = subspace.intersection_size(target);
        StepMetrics {
            index,
            constraint,
            subspace_size: subspace.len(),
            precision: ratio_of(kept, subspace.len()),
            recall: ratio_of(kept, target.len()),
        }
    };
    if trace.steps.is_empty() {
        return Ok(vec![row(0, "(none)".into(), &trace.final_set)]);
    }
    Ok(trace
        .steps
        .iter()
        .map(|step| row(step.index, step.instance.label(), &step.survivors))
        .collect())
}

/// Renders metric rows as the CSV interchange format, with the producing
/// configuration echoed in comment lines. P and R are exact: a terminating
/// decimal where one exists, `n/d` otherwise.
pub fn metrics_to_csv(metrics: &[StepMetrics], config: Option<&RunConfig>) -> String {
    let mut out = String::new();
    if let Some(config) = config {
        let json = serde_json::to_string(config).expect("config serialization");
        let _ = writeln!(out, "# config: {json}");
    }
    out.push_str("step,constraint,subspace_size,P,R\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.index,
            m.constraint,
            m.subspace_size,
            render_ratio(m.precision),
            render_ratio(m.recall)
        );
    }
    out
}

/// Machine-readable explanation content; the plain-text rendering samples
/// from the same model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub topology_label: String,
    pub intent: String,
    pub chain: Vec<String>,
    pub steps: Vec<ExplainStep>,
    pub final_paths: Vec<FinalPathReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainStep {
    pub index: usize,
    pub constraint: String,
    pub before_count: usize,
    pub survivor_count: usize,
    pub eliminated_count: usize,
    /// Every elimination; the text rendering samples the first few.
    pub eliminations: Vec<Elimination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPathReport {
    pub path: Path,
    pub links: Vec<LinkReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub src: NodeId,
    pub dst: NodeId,
    /// Constraint steps this link's path survived, in step order.
    pub survived_steps: Vec<String>,
}

/// Default number of sample eliminations shown per step in text output.
pub const EXPLAIN_SAMPLE: usize = 5;

/// Builds the explanation content model for a trace.
pub fn explain(trace: &ExecutionTrace) -> Explanation {
    let step_labels: Vec<String> = trace
        .steps
        .iter()
        .map(|s| format!("step {} ({})", s.index + 1, s.instance.label()))
        .collect();
    let final_paths = trace
        .final_set
        .iter()
        .map(|path| FinalPathReport {
            path: path.clone(),
            links: path
                .nodes()
                .windows(2)
                .map(|pair| LinkReport {
                    src: pair[0].clone(),
                    dst: pair[1].clone(),
                    survived_steps: step_labels.clone(),
                })
                .collect(),
        })
        .collect();
    Explanation {
        topology_label: trace.topology_label.clone(),
        intent: trace.intent.source().to_string(),
        chain: trace.structure.chain.labels(),
        steps: trace
            .steps
            .iter()
            .map(|s| ExplainStep {
                index: s.index,
                constraint: s.instance.label(),
                before_count: s.before.len(),
                survivor_count: s.survivors.len(),
                eliminated_count: s.eliminated.len(),
                eliminations: s.eliminated.clone(),
            })
            .collect(),
        final_paths,
    }
}

impl Explanation {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("explanation serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ExecError> {
        serde_json::from_str(text).map_err(|e| ExecError::Parse(e.to_string()))
    }

    /// Plain-text rendering with up to `sample` eliminations per step.
    pub fn to_text(&self, sample: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "intent: {}", self.intent);
        let _ = writeln!(out, "topology: {}", self.topology_label);
        let _ = writeln!(out, "chain: {}", self.chain.join(" -> "));
        for step in &self.steps {
            let _ = writeln!(
                out,
                "\nstep {}: {} ({} -> {} candidates)",
                step.index + 1,
                step.constraint,
                step.before_count,
                step.survivor_count
            );
            if step.eliminations.is_empty() {
                let _ = writeln!(out, "  no candidate was eliminated at this step");
                continue;
            }
            for elimination in step.eliminations.iter().take(sample) {
                let _ = writeln!(out, "  - {}: {}", elimination.path, elimination.reason);
            }
            let hidden = step.eliminations.len().saturating_sub(sample);
            if hidden > 0 {
                let _ = writeln!(out, "  ... and {hidden} more");
            }
        }
        let _ = writeln!(out, "\nselected path(s):");
        for report in &self.final_paths {
            let _ = writeln!(out, "  {}", report.path);
            for link in &report.links {
                let _ = writeln!(
                    out,
                    "    link {}->{}: survived {}",
                    link.src,
                    link.dst,
                    link.survived_steps.join(", ")
                );
            }
        }
        out
    }
}

/// Per-node forwarding record. Replaying the rules of one path from the
/// intent's start node reconstructs that path exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub node: NodeId,
    pub match_src: NodeId,
    pub match_dst: NodeId,
    pub forward_to: NodeId,
}

/// Exports one rule per non-terminal node of a connected simple path.
pub fn export_flow_rules(
    path: &Path,
    t: &Topology,
    intent: &Intent,
) -> Result<Vec<FlowRule>, ExecError> {
    let facts = path_predicates(t, path);
    if !facts.is_connected {
        return Err(ExecError::InvalidPath(format!("{path} is not connected on `{}`", t.label())));
    }
    if !facts.is_simple {
        return Err(ExecError::InvalidPath(format!("{path} revisits a node")));
    }
    if path.nodes().len() > 1
        && (path.first() != intent.start() || path.last() != intent.dest())
    {
        return Err(ExecError::InvalidPath(format!(
            "{path} does not run between the intent endpoints {} and {}",
            intent.start(),
            intent.dest()
        )));
    }
    Ok(path
        .nodes()
        .windows(2)
        .map(|pair| FlowRule {
            node: pair[0].clone(),
            match_src: intent.start().clone(),
            match_dst: intent.dest().clone(),
            forward_to: pair[1].clone(),
        })
        .collect())
}

/// Follows flow rules from `start` until `dest`; the reconstructed path.
pub fn replay_flow_rules(
    rules: &[FlowRule],
    start: &NodeId,
    dest: &NodeId,
) -> Result<Path, ExecError> {
    let mut nodes = vec![start.clone()];
    let mut current = start.clone();
    for _ in 0..=rules.len() {
        if current == *dest && nodes.len() > 1 {
            return Path::new(nodes).map_err(|e| ExecError::InvalidPath(e.to_string()));
        }
        match rules.iter().find(|r| r.node == current) {
            Some(rule) => {
                nodes.push(rule.forward_to.clone());
                current = rule.forward_to.clone();
            }
            None if current == *dest => {
                return Path::new(nodes).map_err(|e| ExecError::InvalidPath(e.to_string()))
            }
            None => {
                return Err(ExecError::InvalidPath(format!(
                    "no rule at {current} and the destination is not reached"
                )))
            }
        }
    }
    if current == *dest {
        Path::new(nodes).map_err(|e| ExecError::InvalidPath(e.to_string()))
    } else {
        Err(ExecError::InvalidPath("rule replay did not terminate at the destination".into()))
    }
}

/// Flow-rule file: one ruleset per selected path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRulesDoc {
    pub intent: String,
    pub rulesets: Vec<PathRules>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRules {
    pub path: Path,
    pub rules: Vec<FlowRule>,
}

/// Builds the flow-rule document for every selected path of a final set.
pub fn flow_rules_for_final(
    final_set: &PathSet,
    t: &Topology,
    intent: &Intent,
    config: Option<&RunConfig>,
) -> Result<FlowRulesDoc, ExecError> {
    let mut rulesets = Vec::new();
    for path in final_set.iter() {
        rulesets.push(PathRules { path: path.clone(), rules: export_flow_rules(path, t, intent)? });
    }
    Ok(FlowRulesDoc {
        intent: intent.source().to_string(),
        rulesets,
        config: config.cloned(),
    })
}

impl FlowRulesDoc {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("flow rule serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ExecError> {
        serde_json::from_str(text).map_err(|e| ExecError::Parse(e.to_string()))
    }
}
