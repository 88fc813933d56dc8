//! Boolean state/input adjacency shared by the mechanistic simulators, the
//! masked neural fields and graph reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAPH_SCHEMA: &str = "h2ncm-graph/1";

/// `a_s[i][j]` is true when state `j` enters the derivative of state `i`;
/// `a_x[i][k]` likewise for input `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub a_s: Vec<Vec<bool>>,
    pub a_x: Vec<Vec<bool>>,
    pub output_state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Input,
    State,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub name: String,
    pub role: NodeRole,
}

/// On-disk graph: nodes in order, edges as `[from, to]` name pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub schema: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl CausalGraph {
    pub fn new(
        state_names: Vec<String>,
        input_names: Vec<String>,
        a_s: Vec<Vec<bool>>,
        a_x: Vec<Vec<bool>>,
        output_state: usize,
    ) -> Result<Self> {
        let g = Self { state_names, input_names, a_s, a_x, output_state };
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph from `(state, parent states, parent inputs)` lists.
    pub fn from_parents(
        state_names: &[&str],
        input_names: &[&str],
        parents: &[(&str, &[&str], &[&str])],
        output: &str,
    ) -> Result<Self> {
        let si = |n: &str| {
            state_names.iter().position(|s| *s == n).ok_or_else(|| Error::Config(format!("unknown state '{n}'")))
        };
        let xi = |n: &str| {
            input_names.iter().position(|s| *s == n).ok_or_else(|| Error::Config(format!("unknown input '{n}'")))
        };
        let ns = state_names.len();
        let mut a_s = vec![vec![false; ns]; ns];
        let mut a_x = vec![vec![false; input_names.len()]; ns];
        for (state, ps, px) in parents {
            let i = si(state)?;
            for p in *ps {
                a_s[i][si(p)?] = true;
            }
            for p in *px {
                a_x[i][xi(p)?] = true;
            }
        }
        Self::new(
            state_names.iter().map(|s| s.to_string()).collect(),
            input_names.iter().map(|s| s.to_string()).collect(),
            a_s,
            a_x,
            si(output)?,
        )
    }

    /// Every state depends on every state and input.
    pub fn dense(n_states: usize, n_inputs: usize) -> Self {
        Self {
            state_names: names("s", n_states),
            input_names: names("x", n_inputs),
            a_s: vec![vec![true; n_states]; n_states],
            a_x: vec![vec![true; n_inputs]; n_states],
            output_state: 0,
        }
    }

    /// The one-state synthetic system `y <- {y, x1, x2}`.
    pub fn synthetic() -> Self {
        Self {
            state_names: vec!["y".into()],
            input_names: vec!["x1".into(), "x2".into()],
            a_s: vec![vec![true]],
            a_x: vec![vec![true, true]],
            output_state: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::Config("graph has no states".into()));
        }
        if self.output_state >= n {
            return Err(Error::Config(format!("output state {} out of range", self.output_state)));
        }
        if self.a_s.len() != n || self.a_s.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("state adjacency must be {n}x{n}")));
        }
        if self.a_x.len() != n || self.a_x.iter().any(|r| r.len() != self.n_inputs()) {
            return Err(Error::Config(format!("input adjacency must be {n}x{}", self.n_inputs())));
        }
        Ok(())
    }

    /// Parent states and inputs of state `i`, in index order.
    pub fn parents(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let s = (0..self.n_states()).filter(|&j| self.a_s[i][j]).collect();
        let x = (0..self.n_inputs()).filter(|&k| self.a_x[i][k]).collect();
        (s, x)
    }

    /// Inputs with no directed path to the output state.
    pub fn unreachable_inputs(&self) -> Vec<usize> {
        // states that can reach the output, walking edges backwards
        let n = self.n_states();
        let mut reach = vec![false; n];
        let mut stack = vec![self.output_state];
        reach[self.output_state] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if self.a_s[i][j] && !reach[j] {
                    reach[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..self.n_inputs()).filter(|&k| !(0..n).any(|i| reach[i] && self.a_x[i][k])).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.a_s.iter().chain(&self.a_x).flatten().filter(|&&b| b).count()
    }

    pub fn to_file(&self) -> GraphFile {
        let mut nodes: Vec<GraphNode> =
            self.input_names.iter().map(|n| GraphNode { name: n.clone(), role: NodeRole::Input }).collect();
        for (i, n) in self.state_names.iter().enumerate() {
            let role = if i == self.output_state { NodeRole::Output } else { NodeRole::State };
            nodes.push(GraphNode { name: n.clone(), role });
        }
        let mut edges = Vec::new();
        for i in 0..self.n_states() {
            for k in 0..self.n_inputs() {
                if self.a_x[i][k] {
                    edges.push([self.input_names[k].clone(), self.state_names[i].clone()]);
                }
            }
            for j in 0..self.n_states() {
                if self.a_s[i][j] {
                    edges.push([self.state_names[j].clone(), self.state_names[i].clone()]);
                }
            }
        }
        GraphFile { schema: GRAPH_SCHEMA.into(), nodes, edges, metadata: None }
    }

    pub fn from_file(f: &GraphFile) -> Result<Self> {
        if f.schema != GRAPH_SCHEMA {
            return Err(Error::Schema(format!("expected graph schema {GRAPH_SCHEMA}, got '{}'", f.schema)));
        }
        let inputs: Vec<&GraphNode> = f.nodes.iter().filter(|n| n.role == NodeRole::Input).collect();
        let states: Vec<&GraphNode> = f.nodes.iter().filter(|n| n.role != NodeRole::Input).collect();
        let outputs: Vec<usize> =
            states.iter().enumerate().filter(|(_, n)| n.role == NodeRole::Output).map(|(i, _)| i).collect();
        if outputs.len() != 1 {
            return Err(Error::Schema(format!("graph needs exactly one output node, found {}", outputs.len())));
        }
        let si = |n: &str| states.iter().position(|s| s.name == n);
        let xi = |n: &str| inputs.iter().position(|s| s.name == n);
        let mut a_s = vec![vec![false; states.len()]; states.len()];
        let mut a_x = vec![vec![false; inputs.len()]; states.len()];
        for [from, to] in &f.edges {
            let i = si(to).ok_or_else(|| Error::Schema(format!("edge target '{to}' is not a state")))?;
            if let Some(j) = si(from) {
                a_s[i][j] = true;
            } else if let Some(k) = xi(from) {
                a_x[i][k] = true;
            } else {
                return Err(Error::Schema(format!("edge source '{from}' is not a node")));
            }
        }
        Self::new(
            states.iter().map(|n| n.name.clone()).collect(),
            inputs.iter().map(|n| n.name.clone()).collect(),
            a_s,
            a_x,
            outputs[0],
        )
    }
}
