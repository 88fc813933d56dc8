use super::{FULL_STATES, REDUCED_STATES};
use crate::graph::{CausalGraph, GraphFile, GraphNode, NodeRole};

/// Data input order for glucose data sets.
pub const UVA_INPUTS: [&str; 4] = ["insulin", "carbs", "hr", "steps"];

#[derive(Debug, Clone)]
pub struct UvaGraphs {
    pub full: CausalGraph,
    pub reduced: CausalGraph,
}

type Parents = (&'static str, &'static [&'static str], &'static [&'static str]);

const REDUCED_PARENTS: [Parents; 9] = [
    ("G_p", &["G_p", "G_t", "Q_gut", "X_L"], &[]),
    ("G_t", &["G_p", "G_t", "X"], &[]),
    ("I_p", &["I_p", "I_l"], &["insulin"]),
    ("I_l", &["I_p", "I_l"], &[]),
    ("Q_sto1", &["Q_sto1"], &["carbs"]),
    ("Q_sto2", &["Q_sto1", "Q_sto2"], &[]),
    ("Q_gut", &["Q_sto1", "Q_sto2", "Q_gut"], &[]),
    ("X_L", &["X_L", "I_p"], &[]),
    ("X", &["X", "I_p"], &[]),
];

const G_P_PARENTS: &[&str] = &["G_p", "G_t", "Q_gut", "X_L", "X_H"];

const FULL_PARENTS: [Parents; 20] = [
    ("G_p", G_P_PARENTS, &[]),
    ("G_t", &["G_p", "G_t", "X"], &[]),
    ("I_p", &["I_p", "I_l", "I_sc1", "I_sc2"], &[]),
    ("I_l", &["I_p", "I_l"], &[]),
    ("Q_sto1", &["Q_sto1"], &["carbs"]),
    ("Q_sto2", &["Q_sto1", "Q_sto2"], &[]),
    ("Q_gut", &["Q_sto1", "Q_sto2", "Q_gut"], &[]),
    ("X_L", &["X_L", "I_r"], &[]),
    ("I_r", &["I_r", "I_p"], &[]),
    ("X_H", &["X_H", "Hg"], &[]),
    ("X", &["X", "I_p"], &[]),
    ("E_acc", &["G_p"], &[]),
    ("I_sc1", &["I_sc1"], &["insulin"]),
    ("I_sc2", &["I_sc1", "I_sc2"], &[]),
    ("G_s", &["G_s", "G_p"], &[]),
    ("Hg", &["Hg", "SR_s", "SR_d", "H_sc2"], &[]),
    ("SR_s", &["SR_s", "G_p", "I_p"], &[]),
    // the derivative of G enters, so SR_d inherits the parents of G_p
    ("SR_d", G_P_PARENTS, &[]),
    ("H_sc1", &["H_sc1"], &[]),
    ("H_sc2", &["H_sc1", "H_sc2"], &[]),
];

/// Dependency graphs of both UVA models. Heart rate and steps are input
/// nodes with no edges.
pub fn uva_graphs() -> UvaGraphs {
    UvaGraphs {
        full: CausalGraph::from_parents(&FULL_STATES, &UVA_INPUTS, &FULL_PARENTS, "G_p").expect("static graph"),
        reduced: CausalGraph::from_parents(&REDUCED_STATES, &UVA_INPUTS, &REDUCED_PARENTS, "G_p")
            .expect("static graph"),
    }
}

/// Starting graph for graph reduction: the full model plus two activity
/// states `Y` (short-term) and `Z` (long-term) driven by heart rate and
/// steps. The activity edges are reconstructed, not taken from printed
/// equations, and are marked as such in the metadata.
pub fn activity_start_graph() -> GraphFile {
    let mut f = uva_graphs().full.to_file();
    let pos = f.nodes.iter().position(|n| n.role != NodeRole::Input).unwrap_or(f.nodes.len());
    for (k, name) in ["Y", "Z"].iter().enumerate() {
        f.nodes.insert(pos + k, GraphNode { name: (*name).into(), role: NodeRole::State });
    }
    let reconstructed: Vec<[String; 2]> =
        [("hr", "Y"), ("steps", "Y"), ("Y", "Y"), ("Y", "Z"), ("Z", "Z"), ("Y", "G_t"), ("Z", "X"), ("Y", "G_p")]
            .iter()
            .map(|(a, b)| [a.to_string(), b.to_string()])
            .collect();
    f.edges.extend(reconstructed.iter().cloned());
    f.metadata = Some(serde_json::json!({
        "source": "UVA/Padova S2013 equation dependencies plus physical-activity placeholder states",
        "reconstructed_edges": reconstructed,
    }));
    f
}
