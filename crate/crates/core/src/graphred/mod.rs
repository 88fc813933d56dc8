//! Greedy causal-graph reduction: collapsing strongly connected components,
//! merging parallel chains and shortening input-to-output paths, each step
//! accepted under a validation-loss rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, GraphFile, GraphNode, NodeRole, GRAPH_SCHEMA};

mod reduce;

pub use reduce::{
    reduce, AuditEntry, CachedEvaluator, Evaluator, MnodeEvaluator, Phase, ReduceConfig, Reduction, ScriptedEvaluator,
};

/// Directed graph over named nodes, stored canonically (sorted names and
/// edges) so equal graphs compare and hash equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    nodes: BTreeMap<String, NodeRole>,
    edges: BTreeSet<(String, String)>,
}

/// One candidate transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionStep {
    CollapseScc { nodes: Vec<String> },
    MergePaths { paths: Vec<Vec<String>> },
    ShortenPath { path: Vec<String>, node: String },
}

impl std::fmt::Display for ReductionStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReductionStep::CollapseScc { nodes } => write!(f, "collapse {{{}}}", nodes.join(", ")),
            ReductionStep::MergePaths { paths } => {
                let p: Vec<String> = paths.iter().map(|p| p.join("->")).collect();
                write!(f, "merge [{}]", p.join(" | "))
            }
            ReductionStep::ShortenPath { path, node } => write!(f, "shorten {} drop {node}", path.join("->")),
        }
    }
}

impl DiGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = (String, NodeRole)>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, r) in nodes {
            if map.insert(n.clone(), r).is_some() {
                return Err(Error::Schema(format!("duplicate node '{n}'")));
            }
        }
        let g = Self { nodes: map, edges: edges.into_iter().collect() };
        g.validate()?;
        Ok(g)
    }

    /// Shorthand for fixtures: `inputs`, `states` and one `output` name.
    pub fn build(inputs: &[&str], states: &[&str], output: &str, edges: &[(&str, &str)]) -> Result<Self> {
        let nodes = inputs
            .iter()
            .map(|n| (n.to_string(), NodeRole::Input))
            .chain(states.iter().map(|n| (n.to_string(), NodeRole::State)))
            .chain(std::iter::once((output.to_string(), NodeRole::Output)));
        Self::new(nodes, edges.iter().map(|(a, b)| (a.to_string(), b.to_string())))
    }

    pub fn validate(&self) -> Result<()> {
        let outputs = self.nodes.values().filter(|r| **r == NodeRole::Output).count();
        if outputs != 1 {
            return Err(Error::Schema(format!("graph needs exactly one output node, found {outputs}")));
        }
        for (a, b) in &self.edges {
            for n in [a, b] {
                if !self.nodes.contains_key(n) {
                    return Err(Error::Schema(format!("edge endpoint '{n}' is not a node")));
                }
            }
            if self.nodes[b] == NodeRole::Input {
                return Err(Error::Schema(format!("input '{b}' has an in-edge from '{a}'")));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, NodeRole)> {
        self.nodes.iter().map(|(n, r)| (n.as_str(), *r))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_node(&self, n: &str) -> bool {
        self.nodes.contains_key(n)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&(a.to_string(), b.to_string()))
    }

    pub fn role(&self, n: &str) -> Option<NodeRole> {
        self.nodes.get(n).copied()
    }

    pub fn output(&self) -> &str {
        self.nodes.iter().find(|(_, r)| **r == NodeRole::Output).map(|(n, _)| n.as_str()).expect("validated")
    }

    pub fn inputs(&self) -> Vec<&str> {
        self.nodes.iter().filter(|(_, r)| **r == NodeRole::Input).map(|(n, _)| n.as_str()).collect()
    }

    /// Successors other than the node itself.
    fn succ(&self, n: &str) -> Vec<&str> {
        self.edges.iter().filter(|(a, b)| a == n && b != n).map(|(_, b)| b.as_str()).collect()
    }

    /// Predecessors other than the node itself.
    fn pred(&self, n: &str) -> Vec<&str> {
        self.edges.iter().filter(|(a, b)| b == n && a != n).map(|(a, _)| a.as_str()).collect()
    }

    fn remove_node(&mut self, n: &str) {
        self.nodes.remove(n);
        self.edges.retain(|(a, b)| a != n && b != n);
    }

    /// Nodes reachable from `start` along edges.
    fn reachable(&self, start: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([start.to_string()]);
        let mut stack = vec![start.to_string()];
        while let Some(n) = stack.pop() {
            for s in self.succ(&n) {
                if seen.insert(s.to_string()) {
                    stack.push(s.to_string());
                }
            }
        }
        seen
    }

    /// Inputs with a directed path to the output.
    pub fn connected_inputs(&self) -> BTreeSet<String> {
        let out = self.output();
        self.inputs().into_iter().filter(|i| self.reachable(i).contains(out)).map(String::from).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn canonical_hash(&self) -> String {
        let s = serde_json::to_string(&self.to_file()).expect("graph serializes");
        hex::encode(Sha256::digest(s.as_bytes()))
    }

    /// File form with nodes and edges in canonical order.
    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            schema: GRAPH_SCHEMA.into(),
            nodes: self.nodes.iter().map(|(n, r)| GraphNode { name: n.clone(), role: *r }).collect(),
            edges: self.edges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            metadata: None,
        }
    }

    pub fn from_file(f: &GraphFile) -> Result<Self> {
        if f.schema != GRAPH_SCHEMA {
            return Err(Error::Schema(format!("expected graph schema {GRAPH_SCHEMA}, got '{}'", f.schema)));
        }
        let g = Self::new(
            f.nodes.iter().map(|n| (n.name.clone(), n.role)),
            f.edges.iter().map(|[a, b]| (a.clone(), b.clone())),
        )?;
        if g.edges.len() != f.edges.len() {
            return Err(Error::Schema("graph file lists an edge twice".into()));
        }
        Ok(g)
    }

    pub fn from_causal(c: &CausalGraph) -> Result<Self> {
        Self::from_file(&c.to_file())
    }

    /// Mask graph for a model whose data columns are `input_names`. States
    /// keep canonical order; data inputs absent from the graph get no edges.
    pub fn to_causal(&self, input_names: &[String]) -> Result<CausalGraph> {
        for i in self.inputs() {
            if !input_names.iter().any(|n| n == i) {
                return Err(Error::Schema(format!("graph input '{i}' is not a data column")));
            }
        }
        let states: Vec<String> =
            self.nodes.iter().filter(|(_, r)| **r != NodeRole::Input).map(|(n, _)| n.clone()).collect();
        let si = |n: &str| states.iter().position(|s| s == n);
        let xi = |n: &str| input_names.iter().position(|s| s == n);
        let mut a_s = vec![vec![false; states.len()]; states.len()];
        let mut a_x = vec![vec![false; input_names.len()]; states.len()];
        for (a, b) in &self.edges {
            let i = si(b).expect("validated");
            match si(a) {
                Some(j) => a_s[i][j] = true,
                None => a_x[i][xi(a).expect("checked above")] = true,
            }
        }
        let out = si(self.output()).expect("validated");
        CausalGraph::new(states, input_names.to_vec(), a_s, a_x, out)
    }
}

/// Maximal strongly connected components, each sorted, listed in order of
/// their smallest member. Singletons without a self-loop are left out.
pub fn find_sccs(g: &DiGraph) -> Vec<Vec<String>> {
    let mut pg = petgraph::graph::DiGraph::<&str, ()>::new();
    let idx: BTreeMap<&str, _> = g.nodes.keys().map(|n| (n.as_str(), pg.add_node(n.as_str()))).collect();
    for (a, b) in &g.edges {
        pg.add_edge(idx[a.as_str()], idx[b.as_str()], ());
    }
    let mut out: Vec<Vec<String>> = petgraph::algo::tarjan_scc(&pg)
        .into_iter()
        .map(|c| {
            let mut names: Vec<String> = c.into_iter().map(|i| pg[i].to_string()).collect();
            names.sort();
            names
        })
        .filter(|c| c.len() > 1 || g.has_edge(&c[0], &c[0]))
        .collect();
    out.sort();
    out
}

/// Name of the node replacing a collapsed component.
pub fn collapsed_name(scc: &[String]) -> String {
    scc.join("+")
}

/// Replaces `scc` by one self-looped node carrying its external edges. The
/// node is the output if the output was inside.
pub fn collapse_scc(g: &DiGraph, scc: &[String]) -> Result<DiGraph> {
    let mut members: Vec<String> = scc.to_vec();
    members.sort();
    members.dedup();
    if members.is_empty() || !find_sccs(g).contains(&members) {
        return Err(Error::Contract(format!("{{{}}} is not a strongly connected component", members.join(", "))));
    }
    if members.len() == 1 {
        return Ok(g.clone());
    }
    let inside: BTreeSet<&str> = members.iter().map(String::as_str).collect();
    let name = collapsed_name(&members);
    if g.has_node(&name) {
        return Err(Error::Contract(format!("collapsed name '{name}' already in use")));
    }
    let role = if inside.contains(g.output()) { NodeRole::Output } else { NodeRole::State };
    let mut out = g.clone();
    for m in &members {
        out.remove_node(m);
    }
    out.nodes.insert(name.clone(), role);
    out.edges.insert((name.clone(), name.clone()));
    for (a, b) in &g.edges {
        match (inside.contains(a.as_str()), inside.contains(b.as_str())) {
            (true, false) => {
                out.edges.insert((name.clone(), b.clone()));
            }
            (false, true) => {
                out.edges.insert((a.clone(), name.clone()));
            }
            _ => {}
        }
    }
    out.validate().map_err(|e| Error::Internal(format!("collapse produced an invalid graph: {e}")))?;
    Ok(out)
}

/// Chains leaving `s`: `s -> v1 -> .. -> vk -> t` where every `vi` is a
/// state with exactly one predecessor and one successor (self-loops aside).
fn chains_from(g: &DiGraph, s: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for first in g.succ(s) {
        let mut path = vec![s.to_string()];
        let mut cur = first;
        loop {
            path.push(cur.to_string());
            let internal = g.role(cur) == Some(NodeRole::State) && g.pred(cur).len() == 1 && g.succ(cur).len() == 1;
            if !internal || cur == s {
                break;
            }
            cur = g.succ(cur)[0];
        }
        if path.last().map(String::as_str) != Some(s) {
            out.push(path);
        }
    }
    out
}

/// Groups of two or more chains sharing source and destination, in
/// canonical order.
pub fn merge_candidates(g: &DiGraph) -> Vec<Vec<Vec<String>>> {
    let mut groups: BTreeMap<(String, String), Vec<Vec<String>>> = BTreeMap::new();
    for s in g.nodes.keys() {
        for c in chains_from(g, s) {
            let key = (c[0].clone(), c.last().expect("non-empty").clone());
            groups.entry(key).or_default().push(c);
        }
    }
    groups
        .into_values()
        .filter(|v| v.len() > 1)
        .map(|mut v| {
            v.sort();
            v
        })
        .collect()
}

fn valid_chain_group(g: &DiGraph, paths: &[Vec<String>]) -> bool {
    if paths.len() < 2 || paths.iter().any(|p| p.len() < 2) {
        return false;
    }
    let (s, t) = (&paths[0][0], paths[0].last().expect("non-empty"));
    let mut seen = BTreeSet::new();
    for p in paths {
        if &p[0] != s || p.last().expect("non-empty") != t {
            return false;
        }
        if p.windows(2).any(|w| !g.has_edge(&w[0], &w[1])) {
            return false;
        }
        for v in &p[1..p.len() - 1] {
            let ok = g.role(v) == Some(NodeRole::State) && g.pred(v).len() == 1 && g.succ(v).len() == 1;
            if !ok || !seen.insert(v.clone()) {
                return false;
            }
        }
    }
    // at most one direct edge
    paths.iter().filter(|p| p.len() == 2).count() <= 1
}

/// Index of the path kept by a merge: the longest, ties going to the
/// lexicographically smallest node sequence.
pub fn kept_path(paths: &[Vec<String>]) -> usize {
    let mut best = 0;
    for (i, p) in paths.iter().enumerate() {
        let b = &paths[best];
        if p.len() > b.len() || (p.len() == b.len() && p < b) {
            best = i;
        }
    }
    best
}

/// Keeps only the longest chain of the group. Returns `None` when the
/// group does not satisfy the chain preconditions or is a single path.
pub fn merge_paths(g: &DiGraph, paths: &[Vec<String>]) -> Option<DiGraph> {
    if paths.len() < 2 || !valid_chain_group(g, paths) {
        return None;
    }
    let keep = kept_path(paths);
    let mut out = g.clone();
    for (i, p) in paths.iter().enumerate() {
        if i == keep {
            continue;
        }
        if p.len() == 2 {
            out.edges.remove(&(p[0].clone(), p[1].clone()));
        } else {
            for v in &p[1..p.len() - 1] {
                out.remove_node(v);
            }
        }
    }
    Some(out)
}

/// Nodes removable by shortening, each with its local path
/// `[pred, node, succ]`: states (not the output) with one predecessor and
/// one successor that lie on some input-to-output path.
pub fn shorten_candidates(g: &DiGraph) -> Vec<(Vec<String>, String)> {
    let out_node = g.output();
    let from_inputs: BTreeSet<String> = g.inputs().into_iter().flat_map(|i| g.reachable(i)).collect();
    let mut out = Vec::new();
    for (v, role) in &g.nodes {
        if *role != NodeRole::State || !from_inputs.contains(v) {
            continue;
        }
        let (p, s) = (g.pred(v), g.succ(v));
        if p.len() != 1 || s.len() != 1 || p[0] == s[0] {
            continue;
        }
        if !g.reachable(v).contains(out_node) {
            continue;
        }
        out.push((vec![p[0].to_string(), v.clone(), s[0].to_string()], v.clone()));
    }
    out
}

/// Removes `node` from `path`, joining its neighbours on the path. `None`
/// when `node` is not an interior path node with a single predecessor and
/// successor.
pub fn shorten_path(g: &DiGraph, path: &[String], node: &str) -> Option<DiGraph> {
    let k = path.iter().position(|n| n == node)?;
    if k == 0 || k + 1 >= path.len() || path.windows(2).any(|w| !g.has_edge(&w[0], &w[1])) {
        return None;
    }
    if g.role(node) != Some(NodeRole::State) {
        return None;
    }
    let (p, s) = (&path[k - 1], &path[k + 1]);
    if g.pred(node) != [p.as_str()] || g.succ(node) != [s.as_str()] || p == s {
        return None;
    }
    let mut out = g.clone();
    out.remove_node(node);
    out.edges.insert((p.clone(), s.clone()));
    Some(out)
}
