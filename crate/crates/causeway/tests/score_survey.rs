//! Manual survey of mined scores across seeds; run with
//! `cargo test -p causeway --test score_survey -- --ignored --nocapture`.

use causeway::miner::{estimate_likelihood, ConstraintKind, ConstraintTemplate};
use causeway::{generate_demonstrations, NodeId, PolicySpec, RunConfig, Topology};

fn load_fixture(name: &str) -> Topology {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
#[ignore]
fn survey_scores_across_seeds() {
    let t1 = load_fixture("t1.json");
    let cfg = RunConfig::default();
    for policy in [PolicySpec::default(), PolicySpec { via: Some(NodeId::new("C").unwrap()) }] {
        println!("== policy via={:?} on {}", policy.via.as_ref().map(|n| n.to_string()), t1.label());
        for seed in 0..10u64 {
            let ds = generate_demonstrations(&t1, &policy, 20, seed, &cfg).unwrap();
            let mut line = format!("seed {seed}:");
            for kind in ConstraintKind::ALL {
                match estimate_likelihood(ConstraintTemplate::new(kind), &ds, cfg.smoothing) {
                    Ok(m) => {
                        let score = *m.score().numer() as f64 / *m.score().denom() as f64;
                        line.push_str(&format!("  {}={:.3}", kind.name(), score));
                    }
                    Err(_) => line.push_str(&format!("  {}=n/a", kind.name())),
                }
            }
            println!("{line}");
        }
    }
}
