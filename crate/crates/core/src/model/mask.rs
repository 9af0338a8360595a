use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use super::{ModelError, Result};
use crate::granger::CausalHypergraph;
use crate::node::{LaggedNode, SeriesKey};

/// Sparse boolean attention mask: for each row, the sorted columns it may
/// attend to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: Vec<Vec<usize>>,
}

impl MaskMatrix {
    pub fn full(n: usize) -> Self {
        Self { rows: vec![(0..n).collect(); n] }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.allowed(i, j)).collect()).collect()
    }
}

/// Parent positions of each window node under `graph`. Hyperedge endpoints
/// missing from the window are dropped with a warning.
fn parent_positions(graph: &CausalHypergraph, nodes: &[LaggedNode]) -> Vec<Vec<usize>> {
    let pos: BTreeMap<&LaggedNode, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut out = vec![Vec::new(); nodes.len()];
    for h in &graph.hyperedges {
        let Some(&ti) = pos.get(&h.target) else {
            warn!("csht-model: target {} is not in the node window; hyperedge dropped", h.target);
            continue;
        };
        for p in &h.parents {
            match pos.get(p) {
                Some(&pj) => out[ti].push(pj),
                None => warn!("csht-model: parent {p} of {} is not in the node window; dropped", h.target),
            }
        }
        out[ti].sort_unstable();
        out[ti].dedup();
    }
    out
}

/// `allowed(i, j)` iff `j` is a parent of `i` or `j = i`; every entry is
/// allowed when `use_causal_mask` is false.
pub fn build_mask(graph: &CausalHypergraph, nodes: &[LaggedNode], use_causal_mask: bool) -> Result<MaskMatrix> {
    if nodes.is_empty() {
        return Err(ModelError::EmptyWindow);
    }
    if !use_causal_mask {
        return Ok(MaskMatrix::full(nodes.len()));
    }
    let rows = parent_positions(graph, nodes)
        .into_iter()
        .enumerate()
        .map(|(i, mut ps)| {
            if let Err(at) = ps.binary_search(&i) {
                ps.insert(at, i);
            }
            ps
        })
        .collect();
    Ok(MaskMatrix { rows })
}

/// Token layout and masks for one hypergraph.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPlan {
    /// Lag-0 targets in asset order, then the sorted parent nodes.
    pub tokens: Vec<LaggedNode>,
    pub n_targets: usize,
    pub mask: MaskMatrix,
    /// Graph-sanctioned parents per row, independent of the mask switch.
    pub sanctioned: Vec<Vec<usize>>,
}

/// Lays out the tokens for `graph` over `assets`. Parents whose series is not
/// in `available` are dropped with a warning.
pub fn plan_window(
    graph: &CausalHypergraph,
    assets: &[String],
    available: &BTreeSet<SeriesKey>,
    use_causal_mask: bool,
) -> Result<WindowPlan> {
    let mut tokens: Vec<LaggedNode> = assets.iter().map(|a| LaggedNode::target(a.clone())).collect();
    let mut parents = BTreeSet::new();
    for h in &graph.hyperedges {
        for p in &h.parents {
            if available.contains(&p.series_key()) {
                parents.insert(p.clone());
            } else {
                warn!("csht-model: parent {p} has no series in the panel; dropped");
            }
        }
    }
    tokens.extend(parents);
    let mask = build_mask(graph, &tokens, use_causal_mask)?;
    let sanctioned = parent_positions(graph, &tokens);
    Ok(WindowPlan { n_targets: assets.len(), tokens, mask, sanctioned })
}
