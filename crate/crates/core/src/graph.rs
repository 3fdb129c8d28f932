//! Typed policy graph built from computed Pars.
//!
//! Nodes are principals (P), categories (C), actions (A) and resources (R).
//! Each Par contributes the path `P -PC-> C (-CC-> C)* -CA-> A -AR-> R`.
//! CC edges always point from child to parent, whichever way the Par's
//! chain runs. Only AR edges carry a grant or deny sign.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    P,
    C,
    A,
    R,
}

impl NodeType {
    pub fn of(kind: EntityKind) -> Option<NodeType> {
        match kind {
            EntityKind::Principal => Some(NodeType::P),
            EntityKind::Category => Some(NodeType::C),
            EntityKind::Action => Some(NodeType::A),
            EntityKind::Resource => Some(NodeType::R),
            EntityKind::Site => None,
        }
    }

    fn letter(self) -> char {
        match self {
            NodeType::P => 'P',
            NodeType::C => 'C',
            NodeType::A => 'A',
            NodeType::R => 'R',
        }
    }
}

/// Edge type as the pair of endpoint node types, e.g. `PC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType(pub NodeType, pub NodeType);

impl EdgeType {
    pub const PC: EdgeType = EdgeType(NodeType::P, NodeType::C);
    pub const CC: EdgeType = EdgeType(NodeType::C, NodeType::C);
    pub const CA: EdgeType = EdgeType(NodeType::C, NodeType::A);
    pub const AR: EdgeType = EdgeType(NodeType::A, NodeType::R);
    pub const ALLOWED: [EdgeType; 4] = [Self::PC, Self::CC, Self::CA, Self::AR];
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0.letter(), self.1.letter())
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let letter = |c| match c {
            'P' => Ok(NodeType::P),
            'C' => Ok(NodeType::C),
            'A' => Ok(NodeType::A),
            'R' => Ok(NodeType::R),
            other => Err(format!("unknown node type `{other}`")),
        };
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Ok(EdgeType(letter(a)?, letter(b)?)),
            _ => Err(format!("edge type must be two letters, got `{s}`")),
        }
    }
}

impl Serialize for EdgeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EdgeType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSign {
    Grant,
    Deny,
    Neutral,
}

impl From<Sign> for EdgeSign {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Grant => EdgeSign::Grant,
            Sign::Deny => EdgeSign::Deny,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Node {
    /// `"<type>:<entity id>"`, unique per entity.
    pub id: String,
    pub label: String,
    pub node_type: NodeType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Link {
    pub source: String,
    pub target: String,
    pub edge_type: EdgeType,
    pub sign: EdgeSign,
}

/// The node-link document: both arrays sorted, so equal graphs serialize
/// to equal bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyGraph {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
}

pub fn node_id(kind: NodeType, id: &EntityId) -> String {
    format!("{}:{}", kind.letter(), id)
}

struct Builder<'r> {
    registry: &'r Registry,
    nodes: BTreeMap<String, Node>,
    links: BTreeSet<Link>,
}

impl Builder<'_> {
    fn node(&mut self, kind: EntityKind, id: &EntityId) -> String {
        let ty = NodeType::of(kind).expect("graph entities are P, C, A or R");
        let nid = node_id(ty, id);
        if !self.nodes.contains_key(&nid) {
            let label = self.registry.name(kind, id).unwrap_or(id.as_str()).to_string();
            self.nodes.insert(nid.clone(), Node { id: nid.clone(), label, node_type: ty });
        }
        nid
    }

    fn link(&mut self, source: String, target: String, edge_type: EdgeType, sign: EdgeSign) {
        self.links.insert(Link { source, target, edge_type, sign });
    }
}

/// Graph of a Par set; entities shared between Pars become one node.
pub fn build_graph<'p>(pars: impl IntoIterator<Item = &'p Par>, registry: &Registry) -> PolicyGraph {
    let mut b = Builder { registry, nodes: BTreeMap::new(), links: BTreeSet::new() };
    for par in pars {
        let (Some(first), Some(last)) = (par.chain.first(), par.chain.last()) else {
            continue;
        };
        let p = b.node(EntityKind::Principal, &par.principal);
        let c0 = b.node(EntityKind::Category, first);
        b.link(p, c0, EdgeType::PC, EdgeSign::Neutral);
        for w in par.chain.windows(2) {
            let (child, parent) = match par.sign {
                Sign::Grant => (&w[0], &w[1]),
                Sign::Deny => (&w[1], &w[0]),
            };
            let child = b.node(EntityKind::Category, child);
            let parent = b.node(EntityKind::Category, parent);
            b.link(child, parent, EdgeType::CC, EdgeSign::Neutral);
        }
        let cn = b.node(EntityKind::Category, last);
        let a = b.node(EntityKind::Action, &par.permission.action);
        let r = b.node(EntityKind::Resource, &par.permission.resource);
        b.link(cn, a.clone(), EdgeType::CA, EdgeSign::Neutral);
        b.link(a, r, EdgeType::AR, par.sign.into());
    }
    PolicyGraph { nodes: b.nodes.into_values().collect(), links: b.links.into_iter().collect() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub link: Link,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} -> {}: {}", self.link.edge_type, self.link.source, self.link.target, self.reason)
    }
}

/// Every link must be PC, CC, CA or AR, match its endpoints' node types in
/// either direction, join two distinct existing nodes, and carry a sign only
/// if it is AR.
pub fn check_well_typed(g: &PolicyGraph) -> Result<(), Vec<Violation>> {
    let mut types = BTreeMap::new();
    let mut violations = Vec::new();
    for n in &g.nodes {
        if types.insert(n.id.as_str(), n.node_type).is_some() {
            violations.push(Violation {
                link: Link { source: n.id.clone(), target: n.id.clone(), edge_type: EdgeType::CC, sign: EdgeSign::Neutral },
                reason: "duplicate node id".into(),
            });
        }
    }
    for l in &g.links {
        let mut fail = |reason: String| violations.push(Violation { link: l.clone(), reason });
        if !EdgeType::ALLOWED.contains(&l.edge_type) {
            fail(format!("edge type {} is not allowed", l.edge_type));
            continue;
        }
        if l.source == l.target {
            fail("self edge".into());
        }
        match (types.get(l.source.as_str()), types.get(l.target.as_str())) {
            (Some(&s), Some(&t)) => {
                if EdgeType(s, t) != l.edge_type && EdgeType(t, s) != l.edge_type {
                    fail(format!("endpoints are {}", EdgeType(s, t)));
                }
            }
            _ => fail("dangling endpoint".into()),
        }
        let signed = l.sign != EdgeSign::Neutral;
        if signed != (l.edge_type == EdgeType::AR) {
            fail(format!("sign {:?} on a {} edge", l.sign, l.edge_type));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Whether the graph holds the full PC·CC*·CA·AR path for `par`.
pub fn has_path(g: &PolicyGraph, par: &Par) -> bool {
    let links: BTreeSet<(&str, &str, EdgeType, EdgeSign)> = g
        .links
        .iter()
        .map(|l| (l.source.as_str(), l.target.as_str(), l.edge_type, l.sign))
        .collect();
    let has = |s: &str, t: &str, ty, sign| links.contains(&(s, t, ty, sign));
    let (Some(first), Some(last)) = (par.chain.first(), par.chain.last()) else {
        return false;
    };
    let c = |id| node_id(NodeType::C, id);
    let a = node_id(NodeType::A, &par.permission.action);
    if !has(&node_id(NodeType::P, &par.principal), &c(first), EdgeType::PC, EdgeSign::Neutral) {
        return false;
    }
    for w in par.chain.windows(2) {
        let (child, parent) = match par.sign {
            Sign::Grant => (&w[0], &w[1]),
            Sign::Deny => (&w[1], &w[0]),
        };
        if !has(&c(child), &c(parent), EdgeType::CC, EdgeSign::Neutral) {
            return false;
        }
    }
    has(&c(last), &a, EdgeType::CA, EdgeSign::Neutral)
        && has(&a, &node_id(NodeType::R, &par.permission.resource), EdgeType::AR, par.sign.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    NodeLink,
    Dot,
}

impl FromStr for GraphFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node-link" | "json" => Ok(GraphFormat::NodeLink),
            "dot" => Ok(GraphFormat::Dot),
            other => Err(format!("unknown graph format `{other}` (expected node-link or dot)")),
        }
    }
}

pub fn export_graph(g: &PolicyGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::NodeLink => {
            let mut s = serde_json::to_string_pretty(g).expect("graph serializes");
            s.push('\n');
            s
        }
        GraphFormat::Dot => to_dot(g),
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(g: &PolicyGraph) -> String {
    let mut out = String::from("digraph policy {\n    rankdir=LR;\n    node [style=filled];\n");
    for n in &g.nodes {
        let (shape, color) = match n.node_type {
            NodeType::P => ("ellipse", "#8ecae6"),
            NodeType::C => ("box", "#ffd166"),
            NodeType::A => ("diamond", "#b5e48c"),
            NodeType::R => ("note", "#d9d9d9"),
        };
        let _ = writeln!(
            out,
            "    {} [label={}, shape={shape}, fillcolor=\"{color}\"];",
            dot_quote(&n.id),
            dot_quote(&n.label)
        );
    }
    for l in &g.links {
        let style = match l.sign {
            EdgeSign::Grant => ", color=\"#2a9d8f\"",
            EdgeSign::Deny => ", color=\"#d62828\", style=dashed, penwidth=2",
            EdgeSign::Neutral => "",
        };
        let _ = writeln!(
            out,
            "    {} -> {} [label=\"{}\"{style}];",
            dot_quote(&l.source),
            dot_quote(&l.target),
            l.edge_type
        );
    }
    out.push_str("}\n");
    out
}
