//! Combines top-down arrangement priors with bottom-up likelihoods into a
//! posterior over ordered constraint chains, selects the MAP chain, and
//! updates beliefs after execution.
//!
//! Arrangements are linear and enumerated exhaustively (bags hold at most
//! eight instances), so the posterior is exact rather than searched.

use std::collections::BTreeMap;

use itertools::Itertools;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::executor::ExecutionTrace;
use crate::graph::{NodeId, PathSet};
use crate::intent::ConstraintInstance;
use crate::miner::{Category, ConstraintKind, LikelihoodModel, Scope, TemplateLibrary};
use crate::rational::{ratio_to_f64, render_ratio};

/// Exhaustive enumeration stays affordable up to this bag size.
pub const MAX_INSTANCES: usize = 8;

const PRIOR_WEIGHT_CAP: f64 = 10.0;
const PRIOR_GROWTH: f64 = 1.05;
const PRIOR_DECAY: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("instance bag holds {count} instances, above the enumeration bound of {max}")]
    TooManyInstances { count: usize, max: usize },
    #[error("instance bag is empty")]
    EmptyBag,
    #[error("trace does not belong to this structure: {0}")]
    TraceMismatch(String),
    #[error("target space is empty")]
    EmptyTarget,
    #[error("structure does not parse: {0}")]
    Parse(String),
}

/// Top-down belief about task structure: feasibility checks come before
/// optimization, and local-scope checks before global ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrangementPrior {
    pub feasibility_first_weight: f64,
    pub scope_order_weight: f64,
}

impl Default for ArrangementPrior {
    fn default() -> Self {
        ArrangementPrior { feasibility_first_weight: 4.0, scope_order_weight: 2.0 }
    }
}

impl ArrangementPrior {
    pub fn from_config(config: &RunConfig) -> Self {
        ArrangementPrior {
            feasibility_first_weight: config.feasibility_first_weight,
            scope_order_weight: config.scope_order_weight,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.feasibility_first_weight <= 0.0 || self.scope_order_weight <= 0.0 {
            return Err("prior weights must be positive".into());
        }
        Ok(())
    }

    /// Unnormalized log prior of a chain.
    pub fn log_weight(&self, chain: &[ConstraintInstance]) -> f64 {
        let f = if feasibility_first(chain) { 1.0 } else { 0.0 };
        self.feasibility_first_weight * f + self.scope_order_weight * local_first_fraction(chain)
    }

    fn after_outcome(&self, perfect_recall: bool) -> ArrangementPrior {
        let factor = if perfect_recall { PRIOR_GROWTH } else { PRIOR_DECAY };
        ArrangementPrior {
            feasibility_first_weight: (self.feasibility_first_weight * factor)
                .min(PRIOR_WEIGHT_CAP),
            scope_order_weight: self.scope_order_weight,
        }
    }
}

/// True when every feasibility instance precedes every optimization one.
pub fn feasibility_first(chain: &[ConstraintInstance]) -> bool {
    let first_opt = chain.iter().position(|i| i.kind().category() == Category::Optimization);
    match first_opt {
        Some(pos) => chain[pos..].iter().all(|i| i.kind().category() == Category::Optimization),
        None => true,
    }
}

/// Fraction of adjacent pairs that put a point- or adjacent-scope instance
/// directly before a global-scope one.
pub fn local_first_fraction(chain: &[ConstraintInstance]) -> f64 {
    if chain.len() < 2 {
        return 0.0;
    }
    let ordered = chain
        .windows(2)
        .filter(|pair| {
            matches!(pair[0].kind().scope(), Scope::Point | Scope::Adjacent)
                && pair[1].kind().scope() == Scope::Global
        })
        .count();
    ordered as f64 / (chain.len() - 1) as f64
}

/// An ordered chain of constraint instances; a permutation of the bag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Arrangement {
    pub chain: Vec<ConstraintInstance>,
}

impl Arrangement {
    pub fn labels(&self) -> Vec<String> {
        self.chain.iter().map(|i| i.label()).collect()
    }

    fn tie_key(&self) -> (Vec<&'static str>, Vec<Vec<NodeId>>, Vec<bool>) {
        (
            self.chain.iter().map(|i| i.kind().name()).collect(),
            self.chain.iter().map(|i| i.binding_values()).collect(),
            self.chain.iter().map(|i| i.negated).collect(),
        )
    }

    fn summed_score(&self) -> Rational64 {
        self.chain.iter().map(|i| i.score).sum()
    }
}

/// Normalized probabilities over every permutation of one instance bag.
#[derive(Debug, Clone)]
pub struct ArrangementPosterior {
    entries: Vec<(Arrangement, f64)>,
}

impl ArrangementPosterior {
    pub fn entries(&self) -> &[(Arrangement, f64)] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn probability_of(&self, chain: &[ConstraintInstance]) -> Option<f64> {
        self.entries.iter().find(|(a, _)| a.chain == chain).map(|(_, p)| *p)
    }
}

/// Enumerates every arrangement of the bag and scores it with
/// `Prior(arrangement) · Π score_i^(1/(i+1))`: earlier positions weigh the
/// likelihood more, encoding priority from high to low.
pub fn posterior_over_arrangements(
    instances: &[ConstraintInstance],
    prior: &ArrangementPrior,
) -> Result<ArrangementPosterior, StructureError> {
    if instances.is_empty() {
        return Err(StructureError::EmptyBag);
    }
    if instances.len() > MAX_INSTANCES {
        return Err(StructureError::TooManyInstances {
            count: instances.len(),
            max: MAX_INSTANCES,
        });
    }
    let mut bag = instances.to_vec();
    bag.sort_by(|a, b| {
        a.kind()
            .name()
            .cmp(b.kind().name())
            .then_with(|| a.binding_values().cmp(&b.binding_values()))
            .then_with(|| a.negated.cmp(&b.negated))
    });

    let mut entries: Vec<(Arrangement, f64)> = Vec::new();
    for perm in bag.iter().permutations(bag.len()) {
        let chain: Vec<ConstraintInstance> = perm.into_iter().cloned().collect();
        let mut mass = prior.log_weight(&chain).exp();
        for (position, instance) in chain.iter().enumerate() {
            mass *= ratio_to_f64(instance.score).powf(1.0 / (position as f64 + 1.0));
        }
        entries.push((Arrangement { chain }, mass));
    }
    let total: f64 = entries.iter().map(|(_, m)| m).sum();
    for (_, mass) in &mut entries {
        *mass /= total;
    }
    Ok(ArrangementPosterior { entries })
}

/// The learned chain with its posterior and the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalKnowledgeStructure {
    pub chain: Arrangement,
    pub posterior: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Per-instance likelihood scores, exact, in chain order.
    pub instance_scores: Vec<InstanceScore>,
    pub feasibility_first_weight: f64,
    pub scope_order_weight: f64,
    /// Prior components of the selected chain.
    pub feasibility_first: bool,
    pub local_scope_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub constraint: String,
    pub score: String,
}

/// Picks the argmax arrangement. Ties break on higher summed instance
/// score, then the lexicographic chain of kind names, then bindings.
pub fn map_structure(
    posterior: &ArrangementPosterior,
    prior: &ArrangementPrior,
) -> CausalKnowledgeStructure {
    let best = posterior
        .entries
        .iter()
        .max_by(|(a, pa), (b, pb)| {
            pa.total_cmp(pb)
                .then_with(|| a.summed_score().cmp(&b.summed_score()))
                .then_with(|| b.tie_key().cmp(&a.tie_key()))
        })
        .expect("posterior is never empty");
    let (arrangement, probability) = best;
    CausalKnowledgeStructure {
        chain: arrangement.clone(),
        posterior: *probability,
        provenance: Provenance {
            instance_scores: arrangement
                .chain
                .iter()
                .map(|i| InstanceScore { constraint: i.label(), score: render_ratio(i.score) })
                .collect(),
            feasibility_first_weight: prior.feasibility_first_weight,
            scope_order_weight: prior.scope_order_weight,
            feasibility_first: feasibility_first(&arrangement.chain),
            local_scope_fraction: local_first_fraction(&arrangement.chain),
        },
    }
}

/// Convenience composition: posterior then argmax.
pub fn learn_structure(
    instances: &[ConstraintInstance],
    prior: &ArrangementPrior,
) -> Result<CausalKnowledgeStructure, StructureError> {
    let posterior = posterior_over_arrangements(instances, prior)?;
    Ok(map_structure(&posterior, prior))
}

#[derive(Debug, Serialize, Deserialize)]
struct StructureDoc {
    chain: Vec<ConstraintInstance>,
    posterior: f64,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<RunConfig>,
}

impl CausalKnowledgeStructure {
    pub fn to_json(&self, config: Option<&RunConfig>) -> String {
        let doc = StructureDoc {
            chain: self.chain.chain.clone(),
            posterior: self.posterior,
            provenance: self.provenance.clone(),
            config: config.cloned(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("structure serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, StructureError> {
        let doc: StructureDoc =
            serde_json::from_str(text).map_err(|e| StructureError::Parse(e.to_string()))?;
        for instance in &doc.chain {
            instance.validate().map_err(StructureError::Parse)?;
        }
        Ok(CausalKnowledgeStructure {
            chain: Arrangement { chain: doc.chain },
            posterior: doc.posterior,
            provenance: doc.provenance,
        })
    }
}

/// The mutable belief store: per-template likelihood models plus the
/// arrangement prior. Updates are single-writer by contract.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub models: BTreeMap<ConstraintKind, LikelihoodModel>,
    pub prior: ArrangementPrior,
}

impl BeliefState {
    pub fn from_library(library: &TemplateLibrary, prior: ArrangementPrior) -> Self {
        let models = library
            .entries()
            .iter()
            .map(|m| (m.template.kind, m.clone()))
            .collect();
        BeliefState { models, prior }
    }
}

/// Folds an execution outcome back into the beliefs.
///
/// Target paths a step keeps are causal-event satisfactions and feed the
/// selected side of that instance's model; target paths it eliminates are
/// false eliminations and feed the discarded side. A run that lost recall
/// shakes confidence in the structure prior; a perfect one reinforces it,
/// capped.
pub fn update_beliefs(
    structure: &CausalKnowledgeStructure,
    trace: &ExecutionTrace,
    target: &PathSet,
    beliefs: &BeliefState,
) -> Result<BeliefState, StructureError> {
    if trace.structure.chain != structure.chain {
        return Err(StructureError::TraceMismatch(
            "trace was produced by a different chain".into(),
        ));
    }
    if trace.steps.len() != structure.chain.chain.len() {
        return Err(StructureError::TraceMismatch(format!(
            "trace has {} steps for {} instances",
            trace.steps.len(),
            structure.chain.chain.len()
        )));
    }
    if target.is_empty() {
        return Err(StructureError::EmptyTarget);
    }

    let mut models = beliefs.models.clone();
    for step in &trace.steps {
        if step.instance.negated {
            // The exclusion variant inverts FixedNode satisfaction, so its
            // outcomes cannot feed the plain model's counts.
            continue;
        }
        let kind = step.instance.kind();
        let model = models.get_mut(&kind).ok_or_else(|| {
            StructureError::TraceMismatch(format!("no likelihood model for `{}`", kind.name()))
        })?;
        let kept_target = step.survivors.intersection_size(target) as u64;
        let lost_target = step.before.intersection_size(target) as u64 - kept_target;
        model.sel_sat += kept_target;
        model.sel_tot += kept_target;
        model.dis_sat += lost_target;
        model.dis_tot += lost_target;
    }

    let kept = trace.final_set.intersection_size(target);
    let perfect_recall = kept == target.len();
    Ok(BeliefState { models, prior: beliefs.prior.after_outcome(perfect_recall) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::ConstraintTemplate;
    use std::collections::BTreeMap;

    fn instance(kind: ConstraintKind, score: Rational64) -> ConstraintInstance {
        let mut bindings = BTreeMap::new();
        match kind {
            ConstraintKind::Endpoints => {
                bindings.insert("start".into(), NodeId::new("A").unwrap());
                bindings.insert("dest".into(), NodeId::new("D").unwrap());
            }
            ConstraintKind::FixedNode => {
                bindings.insert("node".into(), NodeId::new("B").unwrap());
            }
            _ => {}
        }
        ConstraintInstance {
            template: ConstraintTemplate::new(kind),
            bindings,
            negated: false,
            score,
        }
    }

    fn case_study_bag() -> Vec<ConstraintInstance> {
        vec![
            instance(ConstraintKind::Connectivity, Rational64::new(91, 100)),
            instance(ConstraintKind::LoopFree, Rational64::new(90, 100)),
            instance(ConstraintKind::Shortest, Rational64::new(85, 100)),
        ]
    }

    #[test]
    fn single_instance_has_probability_one() {
        let bag = vec![instance(ConstraintKind::Connectivity, Rational64::new(9, 10))];
        let posterior =
            posterior_over_arrangements(&bag, &ArrangementPrior::default()).unwrap();
        assert_eq!(posterior.entries().len(), 1);
        assert!((posterior.entries()[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn case_study_map_chain_is_connectivity_loopfree_shortest() {
        let structure =
            learn_structure(&case_study_bag(), &ArrangementPrior::default()).unwrap();
        let kinds: Vec<ConstraintKind> =
            structure.chain.chain.iter().map(|i| i.kind()).collect();
        assert_eq!(
            kinds,
            vec![ConstraintKind::Connectivity, ConstraintKind::LoopFree, ConstraintKind::Shortest]
        );
    }

    #[test]
    fn posterior_normalizes_for_every_bag_size() {
        for size in 1..=5 {
            let bag: Vec<ConstraintInstance> = (0..size)
                .map(|i| {
                    instance(
                        [
                            ConstraintKind::Connectivity,
                            ConstraintKind::LoopFree,
                            ConstraintKind::Endpoints,
                            ConstraintKind::Shortest,
                            ConstraintKind::FixedNode,
                        ][i],
                        Rational64::new(60 + i as i64 * 7, 100),
                    )
                })
                .collect();
            let posterior =
                posterior_over_arrangements(&bag, &ArrangementPrior::default()).unwrap();
            assert!((posterior.total_mass() - 1.0).abs() < 1e-9, "size {size}");
        }
    }

    #[test]
    fn oversized_bag_is_rejected() {
        let bag: Vec<ConstraintInstance> = (0..9)
            .map(|_| instance(ConstraintKind::Connectivity, Rational64::new(1, 2)))
            .collect();
        assert_eq!(
            posterior_over_arrangements(&bag, &ArrangementPrior::default()).unwrap_err(),
            StructureError::TooManyInstances { count: 9, max: 8 }
        );
        assert_eq!(
            posterior_over_arrangements(&[], &ArrangementPrior::default()).unwrap_err(),
            StructureError::EmptyBag
        );
    }

    #[test]
    fn scaling_scores_leaves_the_map_chain_unchanged() {
        let prior = ArrangementPrior::default();
        let bag = case_study_bag();
        let base = learn_structure(&bag, &prior).unwrap();
        let scaled: Vec<ConstraintInstance> = bag
            .iter()
            .map(|i| {
                let mut i = i.clone();
                i.score *= Rational64::from_integer(3);
                i
            })
            .collect();
        let rescored = learn_structure(&scaled, &prior).unwrap();
        let kinds = |s: &CausalKnowledgeStructure| {
            s.chain.chain.iter().map(|i| i.kind()).collect::<Vec<_>>()
        };
        assert_eq!(kinds(&base), kinds(&rescored));
    }

    #[test]
    fn identical_instances_tie_break_lexicographically() {
        // Equal scores and categories: both orders carry identical mass, so
        // the documented tie-break (kind-name chain) decides.
        let bag = vec![
            instance(ConstraintKind::LoopFree, Rational64::new(4, 5)),
            instance(ConstraintKind::Endpoints, Rational64::new(4, 5)),
        ];
        let posterior = posterior_over_arrangements(&bag, &ArrangementPrior::default()).unwrap();
        let masses: Vec<f64> = posterior.entries().iter().map(|(_, p)| *p).collect();
        assert!((masses[0] - masses[1]).abs() < 1e-12);
        let structure = map_structure(&posterior, &ArrangementPrior::default());
        let kinds: Vec<ConstraintKind> =
            structure.chain.chain.iter().map(|i| i.kind()).collect();
        assert_eq!(kinds, vec![ConstraintKind::Endpoints, ConstraintKind::LoopFree]);
    }

    #[test]
    fn optimization_before_feasibility_has_strictly_lower_prior() {
        let prior = ArrangementPrior::default();
        let bag = case_study_bag();
        let posterior = posterior_over_arrangements(&bag, &prior).unwrap();
        for (arrangement, _) in posterior.entries() {
            if !feasibility_first(&arrangement.chain) {
                let mut fixed: Vec<ConstraintInstance> = arrangement
                    .chain
                    .iter()
                    .filter(|i| i.kind().category() == Category::Feasibility)
                    .cloned()
                    .collect();
                fixed.extend(
                    arrangement
                        .chain
                        .iter()
                        .filter(|i| i.kind().category() == Category::Optimization)
                        .cloned(),
                );
                assert!(
                    prior.log_weight(&arrangement.chain) < prior.log_weight(&fixed),
                    "prior must prefer the feasibility-first counterpart"
                );
            }
        }
    }

    #[test]
    fn structure_document_round_trips() {
        let structure = learn_structure(&case_study_bag(), &ArrangementPrior::default()).unwrap();
        let json = structure.to_json(None);
        let back = CausalKnowledgeStructure::from_json(&json).unwrap();
        assert_eq!(structure.chain, back.chain);
        assert_eq!(structure.provenance, back.provenance);
    }

    mod belief_updates {
        use super::*;
        use crate::executor::execute;
        use crate::graph::{build_topology, oracle_target_space, Link, Topology};
        use crate::intent::{instantiate, parse_intent};
        use crate::miner::tests::library_with;

        fn triangle() -> Topology {
            let node = |n: &str| NodeId::new(n).unwrap();
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

        fn full_library() -> crate::miner::TemplateLibrary {
            library_with(&[
                ConstraintKind::Connectivity,
                ConstraintKind::Endpoints,
                ConstraintKind::FixedNode,
                ConstraintKind::LoopFree,
                ConstraintKind::Shortest,
            ])
        }

        #[test]
        fn perfect_trace_grows_sel_counts_and_prior() {
            let t = triangle();
            let intent = parse_intent("FIND PATH FROM A TO C").unwrap();
            let library = full_library();
            let bag = instantiate(&intent, &library).unwrap();
            let prior = ArrangementPrior::default();
            let structure = learn_structure(&bag, &prior).unwrap();
            let trace = execute(&structure, &t, &intent, 2, 1_000_000).unwrap();
            let target = oracle_target_space(&t, &intent, 2).unwrap();
            assert_eq!(trace.final_set, target);

            let beliefs = BeliefState::from_library(&library, prior);
            let updated = update_beliefs(&structure, &trace, &target, &beliefs).unwrap();
            for instance in &structure.chain.chain {
                let before = &beliefs.models[&instance.kind()];
                let after = &updated.models[&instance.kind()];
                assert!(after.sel_sat > before.sel_sat, "{}", instance.kind().name());
                assert_eq!(after.dis_sat, before.dis_sat);
            }
            assert!((updated.prior.feasibility_first_weight - 4.0 * 1.05).abs() < 1e-12);
        }

        #[test]
        fn false_elimination_grows_dis_counts_and_decays_prior() {
            let t = triangle();
            let intent = parse_intent("FIND PATH FROM A TO C").unwrap();
            let library = full_library();
            // A chain of just fixed-node(B) wrongly eliminates the direct
            // target path [A, C].
            let bag = instantiate(&parse_intent("FIND PATH FROM A TO C VIA B").unwrap(), &library)
                .unwrap();
            let fixed_only: Vec<ConstraintInstance> = bag
                .into_iter()
                .filter(|i| i.kind() == ConstraintKind::FixedNode)
                .collect();
            let prior = ArrangementPrior::default();
            let structure = learn_structure(&fixed_only, &prior).unwrap();
            let trace = execute(&structure, &t, &intent, 2, 1_000_000).unwrap();
            let target = oracle_target_space(&t, &intent, 2).unwrap();

            let beliefs = BeliefState::from_library(&library, prior);
            let updated = update_beliefs(&structure, &trace, &target, &beliefs).unwrap();
            let before = &beliefs.models[&ConstraintKind::FixedNode];
            let after = &updated.models[&ConstraintKind::FixedNode];
            assert!(after.dis_sat > before.dis_sat);
            assert!((updated.prior.feasibility_first_weight - 4.0 * 0.9).abs() < 1e-12);
        }

        #[test]
        fn repeated_perfect_traces_saturate_the_prior_cap() {
            let t = triangle();
            let intent = parse_intent("FIND PATH FROM A TO C").unwrap();
            let library = full_library();
            let bag = instantiate(&intent, &library).unwrap();
            let prior = ArrangementPrior::default();
            let structure = learn_structure(&bag, &prior).unwrap();
            let trace = execute(&structure, &t, &intent, 2, 1_000_000).unwrap();
            let target = oracle_target_space(&t, &intent, 2).unwrap();

            let mut beliefs = BeliefState::from_library(&library, prior);
            for _ in 0..100 {
                beliefs = update_beliefs(&structure, &trace, &target, &beliefs).unwrap();
                assert!(beliefs.prior.feasibility_first_weight <= 10.0);
            }
            assert_eq!(beliefs.prior.feasibility_first_weight, 10.0);
        }

        #[test]
        fn foreign_trace_is_a_mismatch() {
            let t = triangle();
            let library = full_library();
            let prior = ArrangementPrior::default();
            let intent_a = parse_intent("FIND PATH FROM A TO C").unwrap();
            let intent_b = parse_intent("FIND PATH FROM A TO B").unwrap();
            let structure_a =
                learn_structure(&instantiate(&intent_a, &library).unwrap(), &prior).unwrap();
            let structure_b =
                learn_structure(&instantiate(&intent_b, &library).unwrap(), &prior).unwrap();
            let trace_b = execute(&structure_b, &t, &intent_b, 2, 1_000_000).unwrap();
            let target = oracle_target_space(&t, &intent_b, 2).unwrap();
            let beliefs = BeliefState::from_library(&library, prior);
            assert!(matches!(
                update_beliefs(&structure_a, &trace_b, &target, &beliefs),
                Err(StructureError::TraceMismatch(_))
            ));
            assert_eq!(
                update_beliefs(&structure_b, &trace_b, &PathSet::new(), &beliefs).unwrap_err(),
                StructureError::EmptyTarget
            );
        }
    }
}
