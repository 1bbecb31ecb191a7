//! `causeway` — generate demonstration corpora, mine constraint templates,
//! plan paths with step-by-step explanations, and evaluate per-step P/R.
//!
//! Exit codes: 0 success, 2 validation or input error, 3 internal
//! invariant breach.

use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use causeway::executor::{
    compute_metrics, execute, explain, flow_rules_for_final, metrics_to_csv, step_predicate_holds,
    EXPLAIN_SAMPLE,
};
use causeway::graph::oracle_target_space_with_ceiling;
use causeway::intent::{instantiate, parse_intent};
use causeway::miner::{mine, TemplateLibrary};
use causeway::rational::parse_ratio;
use causeway::structure::{learn_structure, ArrangementPrior, CausalKnowledgeStructure};
use causeway::{
    generate_demonstrations, load_demonstrations, serialize_demonstrations, NodeId, PolicySpec,
    RunConfig, Topology,
};

#[derive(Parser)]
#[command(name = "causeway", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a demonstration corpus on a topology.
    Gen {
        /// Topology document (JSON).
        #[arg(long)]
        topology: PathBuf,
        /// Demonstrated practice: `shortest` or `via:<node>`.
        #[arg(long, default_value = "shortest")]
        policy: String,
        /// Number of records to generate.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Discarded paths per record.
        #[arg(long)]
        discard_size: Option<usize>,
        #[arg(long)]
        max_hops: Option<usize>,
        /// Candidate ceiling for enumeration.
        #[arg(long)]
        ceiling: Option<u64>,
        /// Partial RunConfig document; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output corpus file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine constraint templates from a corpus.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        /// Likelihood-score threshold, exact (decimal or n/d).
        #[arg(long)]
        tau: Option<String>,
        #[arg(long)]
        smoothing: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output template-library file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a structure for an intent and execute it with explanations.
    Plan {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        intent: String,
        /// Execute a saved chain instead of learning one (transfer mode).
        #[arg(long)]
        structure: Option<PathBuf>,
        #[arg(long)]
        max_hops: Option<usize>,
        #[arg(long)]
        ceiling: Option<u64>,
        /// Prior weight for feasibility-before-optimization.
        #[arg(long)]
        prior_feasibility: Option<f64>,
        /// Prior weight for local-before-global scope ordering.
        #[arg(long)]
        prior_scope: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for structure, flow-rule, and explanation files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Execute a saved structure and emit the per-step metrics CSV.
    Eval {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        intent: String,
        #[arg(long)]
        max_hops: Option<usize>,
        #[arg(long)]
        ceiling: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Bad input or configuration; exit 2.
    Validation(String),
    /// A library invariant failed to hold on produced output; exit 3.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal invariant breach: {m}"),
        }
    }
}

fn validation(err: impl fmt::Display) -> CliError {
    CliError::Validation(err.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(2),
                CliError::Internal(_) => ExitCode::from(3),
            }
        }
    }
}

fn read_file(path: &FsPath) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &FsPath, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_topology(path: &FsPath) -> Result<Topology, CliError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Flags > config file > defaults, echoed into every output.
#[allow(clippy::too_many_arguments)]
fn build_config(
    config_path: Option<&PathBuf>,
    seed: Option<u64>,
    discard_size: Option<usize>,
    max_hops: Option<usize>,
    ceiling: Option<u64>,
    tau: Option<&String>,
    smoothing: Option<&String>,
    prior_feasibility: Option<f64>,
    prior_scope: Option<f64>,
    out_dir: Option<&PathBuf>,
) -> Result<RunConfig, CliError> {
    let mut config = match config_path {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(size) = discard_size {
        config.discard_size = size;
    }
    if let Some(hops) = max_hops {
        config.max_hops = Some(hops);
    }
    if let Some(ceiling) = ceiling {
        config.candidate_ceiling = ceiling;
    }
    if let Some(tau) = tau {
        config.tau = parse_ratio(tau)
            .ok_or_else(|| CliError::Validation(format!("invalid tau `{tau}`")))?;
    }
    if let Some(smoothing) = smoothing {
        config.smoothing = parse_ratio(smoothing)
            .ok_or_else(|| CliError::Validation(format!("invalid smoothing `{smoothing}`")))?;
    }
    if let Some(w) = prior_feasibility {
        config.feasibility_first_weight = w;
    }
    if let Some(w) = prior_scope {
        config.scope_order_weight = w;
    }
    if let Some(dir) = out_dir {
        config.out_dir = Some(dir.display().to_string());
    }
    config.validate().map_err(CliError::Validation)?;
    Ok(config)
}

fn parse_policy(text: &str) -> Result<PolicySpec, CliError> {
    if text == "shortest" {
        return Ok(PolicySpec::default());
    }
    if let Some(node) = text.strip_prefix("via:") {
        let node = NodeId::new(node).map_err(validation)?;
        return Ok(PolicySpec { via: Some(node) });
    }
    Err(CliError::Validation(format!(
        "unknown policy `{text}`; expected `shortest` or `via:<node>`"
    )))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Commands::Gen { topology, policy, n, seed, discard_size, max_hops, ceiling, config, out } => {
            let cfg = build_config(
                config.as_ref(),
                seed,
                discard_size,
                max_hops,
                ceiling,
                None,
                None,
                None,
                None,
                None,
            )?;
            let t = load_topology(&topology)?;
            let policy = parse_policy(&policy)?;
            let ds = generate_demonstrations(&t, &policy, n, cfg.seed, &cfg).map_err(validation)?;
            write_file(&out, &serialize_demonstrations(&ds, Some(&cfg)))?;
            println!("wrote {} records to {}", ds.records().len(), out.display());
            Ok(())
        }
        Commands::Mine { corpus, tau, smoothing, config, out } => {
            let cfg = build_config(
                config.as_ref(),
                None,
                None,
                None,
                None,
                tau.as_ref(),
                smoothing.as_ref(),
                None,
                None,
                None,
            )?;
            let ds = load_demonstrations(&read_file(&corpus)?).map_err(validation)?;
            let mined = mine(&ds, cfg.tau, cfg.smoothing).map_err(validation)?;
            if mined.is_empty() {
                eprintln!(
                    "warning: no template reached tau = {}; the library is empty",
                    causeway::rational::render_ratio(cfg.tau)
                );
            }
            let library = TemplateLibrary::new(mined, cfg.tau, cfg.smoothing);
            write_file(&out, &library.to_json(Some(&cfg)))?;
            let kinds: Vec<&str> = library.kinds().iter().map(|k| k.name()).collect();
            println!("mined [{}] into {}", kinds.join(", "), out.display());
            Ok(())
        }
        Commands::Plan {
            topology,
            library,
            intent,
            structure,
            max_hops,
            ceiling,
            prior_feasibility,
            prior_scope,
            format,
            config,
            out_dir,
        } => {
            let cfg = build_config(
                config.as_ref(),
                None,
                None,
                max_hops,
                ceiling,
                None,
                None,
                prior_feasibility,
                prior_scope,
                Some(&out_dir),
            )?;
            let t = load_topology(&topology)?;
            let library = TemplateLibrary::from_json(&read_file(&library)?).map_err(validation)?;
            let intent = parse_intent(&intent).map_err(validation)?;

            let learned = match structure {
                Some(path) => {
                    CausalKnowledgeStructure::from_json(&read_file(&path)?).map_err(validation)?
                }
                None => {
                    let bag = instantiate(&intent, &library).map_err(validation)?;
                    let prior = ArrangementPrior::from_config(&cfg);
                    learn_structure(&bag, &prior).map_err(validation)?
                }
            };

            let hops = cfg.effective_max_hops(&t);
            let trace =
                execute(&learned, &t, &intent, hops, cfg.candidate_ceiling).map_err(validation)?;

            // Soundness gate on our own output: every recorded elimination
            // must genuinely violate its step's predicate.
            for step in &trace.steps {
                for elimination in &step.eliminated {
                    if step_predicate_holds(&t, step, &elimination.path) {
                        return Err(CliError::Internal(format!(
                            "step {} recorded `{}` as violating `{}`, but it does not",
                            step.index,
                            elimination.path,
                            step.instance.label()
                        )));
                    }
                }
            }

            let explanation = explain(&trace);
            let rules =
                flow_rules_for_final(&trace.final_set, &t, &intent, Some(&cfg)).map_err(validation)?;

            write_file(&out_dir.join("structure.json"), &learned.to_json(Some(&cfg)))?;
            write_file(&out_dir.join("flow_rules.json"), &rules.to_json())?;
            write_file(&out_dir.join("explanation.txt"), &explanation.to_text(EXPLAIN_SAMPLE))?;
            write_file(&out_dir.join("explanation.json"), &explanation.to_json())?;
            match format {
                Format::Text => print!("{}", explanation.to_text(EXPLAIN_SAMPLE)),
                Format::Machine => print!("{}", explanation.to_json()),
            }
            Ok(())
        }
        Commands::Eval { topology, structure, intent, max_hops, ceiling, config, out } => {
            let cfg = build_config(
                config.as_ref(),
                None,
                None,
                max_hops,
                ceiling,
                None,
                None,
                None,
                None,
                None,
            )?;
            let t = load_topology(&topology)?;
            let learned =
                CausalKnowledgeStructure::from_json(&read_file(&structure)?).map_err(validation)?;
            let intent = parse_intent(&intent).map_err(validation)?;
            let hops = cfg.effective_max_hops(&t);
            let trace =
                execute(&learned, &t, &intent, hops, cfg.candidate_ceiling).map_err(validation)?;
            let target = oracle_target_space_with_ceiling(&t, &intent, hops, cfg.candidate_ceiling)
                .map_err(validation)?;
            if target.is_empty() {
                return Err(CliError::Validation(
                    "the target space is empty: no path satisfies the intent".into(),
                ));
            }
            let metrics = compute_metrics(&trace, &target).map_err(validation)?;
            let csv = metrics_to_csv(&metrics, Some(&cfg));
            write_file(&out, &csv)?;
            print!("{csv}");
            Ok(())
        }
    }
}
