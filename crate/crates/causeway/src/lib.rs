//! Causeway learns ordered, environment-invariant constraint chains from
//! demonstrations of network path selection, executes them as stepwise
//! filters on new topologies under operator intents, and explains every
//! decision step by step with per-step precision/recall.
//!
//! Pipeline: demonstrations are mined for salient phenomena, each surviving
//! constraint template gets a likelihood learned from selected-versus-
//! discarded satisfaction counts, an intent binds templates to concrete
//! nodes, a posterior over chain orderings picks the MAP arrangement, and
//! the executor applies the chain to the enumerated solution space while
//! recording why each candidate fell out.
//!
//! The `parallel` feature (default) evaluates large candidate batches on a
//! rayon pool; disabling it falls back to the identical sequential path.

pub mod batch;
pub mod config;
pub mod demo;
pub mod executor;
pub mod graph;
pub mod intent;
pub mod miner;
pub mod rational;
pub mod structure;

pub use config::RunConfig;
pub use demo::{
    generate_demonstrations, load_demonstrations, serialize_demonstrations, DemonstrationSet,
    PolicySpec, PracticeRecord,
};
pub use executor::{
    compute_metrics, execute, explain, export_flow_rules, metrics_to_csv, replay_flow_rules,
    ExecutionTrace, Explanation, FilterStep, FlowRule, StepMetrics,
};
pub use graph::{
    build_topology, enumerate_solution_space, oracle_target_space, path_predicates, Link, NodeId,
    Path, PathSet, Topology, Weight,
};
pub use intent::{instantiate, parse_intent, ConstraintInstance, Intent, Objective};
pub use miner::{
    detect_adjacent_phenomena, detect_global_phenomena, detect_point_phenomena,
    estimate_likelihood, mine, ConstraintKind, ConstraintTemplate, LikelihoodModel,
    TemplateLibrary,
};
pub use structure::{
    learn_structure, map_structure, posterior_over_arrangements, update_beliefs, Arrangement,
    ArrangementPrior, BeliefState, CausalKnowledgeStructure,
};
