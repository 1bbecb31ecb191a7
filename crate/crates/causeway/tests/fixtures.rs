//! Bundled fixture handling: the training/transfer topologies and the
//! 20-record demonstration corpus used across the test suites.
//!
//! `regenerate_fixture_corpus` rebuilds the committed corpus file; run it
//! explicitly after changing the generator:
//! `cargo test -p causeway --test fixtures -- --ignored regenerate`.

use std::path::PathBuf;

use causeway::{
    generate_demonstrations, load_demonstrations, serialize_demonstrations, PolicySpec, RunConfig,
    Topology,
};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load_topology(name: &str) -> Topology {
    let raw = std::fs::read_to_string(fixtures_dir().join(name)).unwrap();
    serde_json::from_str(&raw).unwrap()
}

fn build_fixture_corpus() -> String {
    let t1 = load_topology("t1.json");
    let t2 = load_topology("t2.json");
    let cfg = RunConfig::default();
    let on_t1 = generate_demonstrations(&t1, &PolicySpec::default(), 10, 7, &cfg).unwrap();
    let on_t2 = generate_demonstrations(&t2, &PolicySpec::default(), 10, 8, &cfg).unwrap();
    let merged = on_t1.merge(on_t2).unwrap();
    serialize_demonstrations(&merged, None)
}

#[test]
#[ignore]
fn regenerate_fixture_corpus() {
    std::fs::write(fixtures_dir().join("corpus.json"), build_fixture_corpus()).unwrap();
}

#[test]
fn fixture_corpus_matches_the_generator() {
    let committed = std::fs::read_to_string(fixtures_dir().join("corpus.json")).unwrap();
    assert_eq!(committed, build_fixture_corpus(), "fixture corpus drifted; regenerate it");
}

#[test]
fn fixture_corpus_holds_twenty_records_on_two_topologies() {
    let raw = std::fs::read_to_string(fixtures_dir().join("corpus.json")).unwrap();
    let ds = load_demonstrations(&raw).unwrap();
    assert_eq!(ds.records().len(), 20);
    assert_eq!(ds.topologies().len(), 2);

    // Independent line-oriented scan: one `"topology_label"` key per record
    // and one bare `"label"` key per topology document.
    let record_lines =
        raw.lines().filter(|l| l.trim_start().starts_with("\"topology_label\"")).count();
    let label_lines = raw.lines().filter(|l| l.trim_start().starts_with("\"label\"")).count();
    assert_eq!(record_lines, 20);
    assert_eq!(label_lines, 2);
}

#[test]
fn fixture_topologies_have_the_documented_shape() {
    let t1 = load_topology("t1.json");
    assert_eq!(t1.nodes().len(), 5);
    assert_eq!(t1.links().len(), 6);
    let t2 = load_topology("t2.json");
    assert_eq!(t2.nodes().len(), 6);
    assert_eq!(t2.links().len(), 7);
}

#[test]
fn fixture_corpus_round_trips() {
    let raw = std::fs::read_to_string(fixtures_dir().join("corpus.json")).unwrap();
    let ds = load_demonstrations(&raw).unwrap();
    let again = load_demonstrations(&serialize_demonstrations(&ds, None)).unwrap();
    assert_eq!(ds, again);
}
