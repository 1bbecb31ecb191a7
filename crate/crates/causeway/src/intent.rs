//! Operator intents: a small formal DSL, entity recognition, and the
//! mapping from recognized entities to placeholder constraint templates.
//!
//! Grammar:
//!
//! ```text
//! FIND PATH FROM <node> TO <node> (VIA <node>)* (AVOID <node>)* (OBJECTIVE (SHORTEST|ANY))?
//! ```
//!
//! The objective defaults to SHORTEST. AVOID is an extension beyond the
//! usual FROM/TO/VIA shape and is realized as node exclusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Rational64;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::NodeId;
use crate::miner::{ConstraintKind, ConstraintTemplate, TemplateLibrary};
use crate::rational::ratio_serde;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntentError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("conflicting entities: {0}")]
    ConflictingEntities(String),
    #[error("the template library is empty")]
    EmptyLibrary,
    #[error("library is missing the mandatory `{0}` template")]
    MissingTemplate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Objective {
    Shortest,
    Any,
}

/// A parsed operator intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    source: String,
    start: NodeId,
    dest: NodeId,
    via: Vec<NodeId>,
    avoid: BTreeSet<NodeId>,
    objective: Objective,
}

impl Intent {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn start(&self) -> &NodeId {
        &self.start
    }

    pub fn dest(&self) -> &NodeId {
        &self.dest
    }

    /// VIA nodes in mention order, deduplicated.
    pub fn via(&self) -> &[NodeId] {
        &self.via
    }

    pub fn avoid(&self) -> &BTreeSet<NodeId> {
        &self.avoid
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn wants_shortest(&self) -> bool {
        self.objective == Objective::Shortest
    }

    /// Every node the intent mentions.
    pub fn referenced_nodes(&self) -> impl Iterator<Item = &NodeId> {
        [&self.start, &self.dest]
            .into_iter()
            .chain(self.via.iter())
            .chain(self.avoid.iter())
    }

    /// Canonical text form; `parse_intent(render(i)) == i` up to source text.
    pub fn render(&self) -> String {
        let mut out = format!("FIND PATH FROM {} TO {}", self.start, self.dest);
        for node in &self.via {
            out.push_str(&format!(" VIA {node}"));
        }
        for node in &self.avoid {
            out.push_str(&format!(" AVOID {node}"));
        }
        if self.objective == Objective::Any {
            out.push_str(" OBJECTIVE ANY");
        }
        out
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Intent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Intent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        parse_intent(&raw).map_err(D::Error::custom)
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    end: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    items.push((s, &text[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            items.push((s, &text[s..]));
        }
        Tokens { items, pos: 0, end: text.len() }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.items.get(self.pos).copied();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), IntentError> {
        match self.next() {
            Some((_, tok)) if tok == keyword => Ok(()),
            Some((offset, tok)) => Err(IntentError::Syntax {
                offset,
                message: format!("expected `{keyword}`, found `{tok}`"),
            }),
            None => Err(IntentError::Syntax {
                offset: self.end,
                message: format!("expected `{keyword}`, found end of input"),
            }),
        }
    }

    fn expect_node(&mut self, role: &str) -> Result<NodeId, IntentError> {
        match self.next() {
            Some((offset, tok)) => NodeId::new(tok).map_err(|_| IntentError::Syntax {
                offset,
                message: format!("expected a {role} node name, found `{tok}`"),
            }),
            None => Err(IntentError::Syntax {
                offset: self.end,
                message: format!("expected a {role} node name, found end of input"),
            }),
        }
    }
}

/// Parses one intent line.
pub fn parse_intent(text: &str) -> Result<Intent, IntentError> {
    let mut tokens = Tokens::new(text);
    tokens.expect_keyword("FIND")?;
    tokens.expect_keyword("PATH")?;
    tokens.expect_keyword("FROM")?;
    let start = tokens.expect_node("start")?;
    tokens.expect_keyword("TO")?;
    let dest = tokens.expect_node("destination")?;

    let mut via = Vec::new();
    while matches!(tokens.peek(), Some((_, "VIA"))) {
        tokens.next();
        let node = tokens.expect_node("via")?;
        if !via.contains(&node) {
            via.push(node);
        }
    }
    let mut avoid = BTreeSet::new();
    while matches!(tokens.peek(), Some((_, "AVOID"))) {
        tokens.next();
        avoid.insert(tokens.expect_node("avoid")?);
    }
    let mut objective = Objective::Shortest;
    if matches!(tokens.peek(), Some((_, "OBJECTIVE"))) {
        tokens.next();
        objective = match tokens.next() {
            Some((_, "SHORTEST")) => Objective::Shortest,
            Some((_, "ANY")) => Objective::Any,
            Some((offset, tok)) => {
                return Err(IntentError::Syntax {
                    offset,
                    message: format!("expected `SHORTEST` or `ANY`, found `{tok}`"),
                })
            }
            None => {
                return Err(IntentError::Syntax {
                    offset: tokens.end,
                    message: "expected `SHORTEST` or `ANY`, found end of input".into(),
                })
            }
        };
    }
    if let Some((offset, tok)) = tokens.peek() {
        return Err(IntentError::Syntax {
            offset,
            message: format!("unexpected trailing token `{tok}`"),
        });
    }

    if start == dest {
        return Err(IntentError::ConflictingEntities(format!(
            "start and destination are both `{start}`"
        )));
    }
    if avoid.contains(&start) || avoid.contains(&dest) {
        return Err(IntentError::ConflictingEntities(
            "an endpoint also appears under AVOID".into(),
        ));
    }
    if let Some(node) = via.iter().find(|n| avoid.contains(*n)) {
        return Err(IntentError::ConflictingEntities(format!(
            "node `{node}` appears under both VIA and AVOID"
        )));
    }

    Ok(Intent { source: text.to_string(), start, dest, via, avoid, objective })
}

/// A constraint template with its placeholders bound to environment
/// entities from an intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintInstance {
    pub template: ConstraintTemplate,
    /// Placeholder name to bound node; covers exactly the template's
    /// placeholders.
    pub bindings: BTreeMap<String, NodeId>,
    /// True for the AVOID-derived exclusion variant of FixedNode.
    #[serde(default)]
    pub negated: bool,
    #[serde(with = "ratio_serde")]
    pub score: Rational64,
}

impl ConstraintInstance {
    fn unbound(template: ConstraintTemplate, score: Rational64) -> Self {
        ConstraintInstance { template, bindings: BTreeMap::new(), negated: false, score }
    }

    pub fn kind(&self) -> ConstraintKind {
        self.template.kind
    }

    /// Display label, e.g. `fixed-node(node=B)` or `avoid-node(node=X)`.
    /// Comma-free so the label can sit in a CSV column unquoted.
    pub fn label(&self) -> String {
        let name = if self.negated { "avoid-node" } else { self.kind().name() };
        if self.bindings.is_empty() {
            name.to_string()
        } else {
            let bound: Vec<String> = self
                .template
                .kind
                .placeholders()
                .iter()
                .filter_map(|p| self.bindings.get(*p).map(|v| format!("{p}={v}")))
                .collect();
            format!("{}({})", name, bound.join(";"))
        }
    }

    /// Bound nodes in placeholder order, used by tie-breaks.
    pub fn binding_values(&self) -> Vec<NodeId> {
        self.bindings.values().cloned().collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        let expected = self.template.kind.placeholders();
        if self.bindings.len() != expected.len()
            || !expected.iter().all(|p| self.bindings.contains_key(*p))
        {
            return Err(format!(
                "instance of `{}` must bind exactly {:?}",
                self.kind().name(),
                expected
            ));
        }
        if self.negated && self.kind() != ConstraintKind::FixedNode {
            return Err("only fixed-node instances can be negated".into());
        }
        Ok(())
    }
}

/// Maps intent entities onto library templates and binds their placeholders.
///
/// Returned instances form an unordered bag; arranging them into a chain is
/// the structure module's job.
pub fn instantiate(
    intent: &Intent,
    library: &TemplateLibrary,
) -> Result<Vec<ConstraintInstance>, IntentError> {
    if library.is_empty() {
        return Err(IntentError::EmptyLibrary);
    }
    let score_of = |kind: ConstraintKind| library.get(kind).map(|m| m.score());

    // The PATH entity demands connectivity, and FROM/TO demand endpoints.
    let connectivity = score_of(ConstraintKind::Connectivity)
        .ok_or(IntentError::MissingTemplate("connectivity"))?;
    let endpoints =
        score_of(ConstraintKind::Endpoints).ok_or(IntentError::MissingTemplate("endpoints"))?;

    let mut out = Vec::new();
    out.push(ConstraintInstance::unbound(
        ConstraintTemplate::new(ConstraintKind::Connectivity),
        connectivity,
    ));
    let mut endpoint_instance = ConstraintInstance::unbound(
        ConstraintTemplate::new(ConstraintKind::Endpoints),
        endpoints,
    );
    endpoint_instance.bindings.insert("start".into(), intent.start().clone());
    endpoint_instance.bindings.insert("dest".into(), intent.dest().clone());
    out.push(endpoint_instance);

    if let Some(score) = score_of(ConstraintKind::LoopFree) {
        out.push(ConstraintInstance::unbound(
            ConstraintTemplate::new(ConstraintKind::LoopFree),
            score,
        ));
    }
    if let Some(score) = score_of(ConstraintKind::FixedNode) {
        for node in intent.via() {
            let mut inst = ConstraintInstance::unbound(
                ConstraintTemplate::new(ConstraintKind::FixedNode),
                score,
            );
            inst.bindings.insert("node".into(), node.clone());
            out.push(inst);
        }
        for node in intent.avoid() {
            let mut inst = ConstraintInstance::unbound(
                ConstraintTemplate::new(ConstraintKind::FixedNode),
                score,
            );
            inst.bindings.insert("node".into(), node.clone());
            inst.negated = true;
            out.push(inst);
        }
    }
    if intent.wants_shortest() {
        if let Some(score) = score_of(ConstraintKind::Shortest) {
            out.push(ConstraintInstance::unbound(
                ConstraintTemplate::new(ConstraintKind::Shortest),
                score,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::tests::library_with;

    fn node(name: &str) -> NodeId {
        NodeId::new(name).unwrap()
    }

    #[test]
    fn parses_the_via_example() {
        let intent = parse_intent("FIND PATH FROM A TO D VIA B").unwrap();
        assert_eq!(intent.start(), &node("A"));
        assert_eq!(intent.dest(), &node("D"));
        assert_eq!(intent.via(), &[node("B")]);
        assert!(intent.avoid().is_empty());
        assert_eq!(intent.objective(), Objective::Shortest);
    }

    #[test]
    fn objective_defaults_to_shortest() {
        let intent = parse_intent("FIND PATH FROM A TO E").unwrap();
        assert_eq!(intent.objective(), Objective::Shortest);
        assert!(intent.via().is_empty());
    }

    #[test]
    fn degenerate_endpoints_conflict() {
        let err = parse_intent("FIND PATH FROM A TO A").unwrap_err();
        assert!(matches!(err, IntentError::ConflictingEntities(_)));
    }

    #[test]
    fn avoid_conflicts_are_rejected() {
        assert!(matches!(
            parse_intent("FIND PATH FROM A TO B AVOID A").unwrap_err(),
            IntentError::ConflictingEntities(_)
        ));
        assert!(matches!(
            parse_intent("FIND PATH FROM A TO B VIA C AVOID C").unwrap_err(),
            IntentError::ConflictingEntities(_)
        ));
    }

    #[test]
    fn syntax_errors_carry_byte_offsets() {
        let err = parse_intent("FIND ROUTE FROM A TO B").unwrap_err();
        assert_eq!(err, IntentError::Syntax { offset: 5, message: "expected `PATH`, found `ROUTE`".into() });
        let err = parse_intent("FIND PATH FROM A TO").unwrap_err();
        assert!(matches!(err, IntentError::Syntax { offset: 19, .. }));
    }

    #[test]
    fn render_parse_round_trip() {
        for text in [
            "FIND PATH FROM A TO D VIA B",
            "FIND PATH FROM A TO D VIA B VIA C AVOID X OBJECTIVE ANY",
            "FIND PATH FROM n1 TO n2",
        ] {
            let intent = parse_intent(text).unwrap();
            let back = parse_intent(&intent.render()).unwrap();
            assert_eq!(back.start(), intent.start());
            assert_eq!(back.dest(), intent.dest());
            assert_eq!(back.via(), intent.via());
            assert_eq!(back.avoid(), intent.avoid());
            assert_eq!(back.objective(), intent.objective());
        }
    }

    #[test]
    fn fig3_intent_with_proof_of_concept_library_yields_four_instances() {
        // Library holding the four feasibility templates, no Shortest.
        let library = library_with(&[
            ConstraintKind::Connectivity,
            ConstraintKind::LoopFree,
            ConstraintKind::Endpoints,
            ConstraintKind::FixedNode,
        ]);
        let intent = parse_intent("FIND PATH FROM A TO D VIA B").unwrap();
        let bag = instantiate(&intent, &library).unwrap();
        let mut kinds: Vec<&str> =
            bag.iter().map(|i| i.template.kind.name()).collect();
        kinds.sort();
        assert_eq!(kinds, vec!["connectivity", "endpoints", "fixed-node", "loop-free"]);
        let fixed = bag.iter().find(|i| i.kind() == ConstraintKind::FixedNode).unwrap();
        assert_eq!(fixed.bindings.get("node"), Some(&node("B")));
        let ends = bag.iter().find(|i| i.kind() == ConstraintKind::Endpoints).unwrap();
        assert_eq!(ends.bindings.get("start"), Some(&node("A")));
        assert_eq!(ends.bindings.get("dest"), Some(&node("D")));
    }

    #[test]
    fn objective_any_suppresses_shortest() {
        let library = library_with(&[
            ConstraintKind::Connectivity,
            ConstraintKind::LoopFree,
            ConstraintKind::Endpoints,
            ConstraintKind::Shortest,
        ]);
        let intent = parse_intent("FIND PATH FROM A TO D OBJECTIVE ANY").unwrap();
        let bag = instantiate(&intent, &library).unwrap();
        assert!(bag.iter().all(|i| i.kind() != ConstraintKind::Shortest));
        let with_default = parse_intent("FIND PATH FROM A TO D").unwrap();
        let bag = instantiate(&with_default, &library).unwrap();
        assert!(bag.iter().any(|i| i.kind() == ConstraintKind::Shortest));
    }

    #[test]
    fn missing_mandatory_template_is_an_error() {
        let library = library_with(&[ConstraintKind::LoopFree, ConstraintKind::Endpoints]);
        let intent = parse_intent("FIND PATH FROM A TO D").unwrap();
        assert_eq!(
            instantiate(&intent, &library).unwrap_err(),
            IntentError::MissingTemplate("connectivity")
        );
    }

    #[test]
    fn avoid_binds_a_negated_fixed_node() {
        let library = library_with(&[
            ConstraintKind::Connectivity,
            ConstraintKind::Endpoints,
            ConstraintKind::FixedNode,
        ]);
        let intent = parse_intent("FIND PATH FROM A TO D AVOID X").unwrap();
        let bag = instantiate(&intent, &library).unwrap();
        let excl = bag.iter().find(|i| i.negated).unwrap();
        assert_eq!(excl.kind(), ConstraintKind::FixedNode);
        assert_eq!(excl.bindings.get("node"), Some(&node("X")));
        assert_eq!(excl.label(), "avoid-node(node=X)");
    }

    #[test]
    fn every_instance_binds_exactly_its_placeholders() {
        let library = library_with(&[
            ConstraintKind::Connectivity,
            ConstraintKind::LoopFree,
            ConstraintKind::Endpoints,
            ConstraintKind::FixedNode,
            ConstraintKind::Shortest,
        ]);
        let intent = parse_intent("FIND PATH FROM A TO D VIA B VIA C AVOID X").unwrap();
        for inst in instantiate(&intent, &library).unwrap() {
            inst.validate().unwrap();
        }
    }
}
