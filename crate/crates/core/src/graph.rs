//! Evidence reasoning graphs.
//!
//! A graph is complete with self-loops, so the edge set is implied by the
//! node list and never stored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ElementId, Label};
use crate::embedding::{EmbeddingError, EmbeddingProvider};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot build a graph without nodes")]
    Empty,
    #[error("node {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: ElementId,
    pub sequence: String,
    pub features: Vec<f64>,
    /// Whether the node is gold evidence; `None` when gold is unknown.
    #[serde(default)]
    pub gold: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceGraph {
    pub claim_id: u64,
    pub nodes: Vec<GraphNode>,
    #[serde(default)]
    pub label: Option<Label>,
}

impl EvidenceGraph {
    /// Checks the non-empty and shared-dimension invariants.
    pub fn new(claim_id: u64, nodes: Vec<GraphNode>, label: Option<Label>) -> Result<Self, GraphError> {
        let expected = nodes.first().ok_or(GraphError::Empty)?.features.len();
        for (index, n) in nodes.iter().enumerate() {
            if n.features.len() != expected {
                return Err(GraphError::Dimension {
                    index,
                    expected,
                    found: n.features.len(),
                });
            }
        }
        Ok(Self {
            claim_id,
            nodes,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.features.len())
    }

    /// Logical edge count, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.nodes.len() * self.nodes.len()
    }

    /// Per-node gold flags, if every node carries one.
    pub fn gold_flags(&self) -> Option<Vec<bool>> {
        self.nodes.iter().map(|n| n.gold).collect()
    }

    /// Reorder nodes; `order[k]` is the old index of the new k-th node.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            claim_id: self.claim_id,
            nodes: order.iter().map(|&i| self.nodes[i].clone()).collect(),
            label: self.label,
        }
    }
}

/// Build a graph whose node features are `provider.encode_pair(claim, sequence)`.
/// Node order follows `selected`; gold flags mark ids present in `gold`.
pub fn build_graph(
    claim_id: u64,
    claim: &str,
    selected: &[(ElementId, String)],
    provider: &dyn EmbeddingProvider,
    gold: Option<&[ElementId]>,
    label: Option<Label>,
) -> Result<EvidenceGraph, GraphError> {
    if selected.is_empty() {
        return Err(GraphError::Empty);
    }
    let nodes = selected
        .iter()
        .map(|(id, sequence)| {
            Ok(GraphNode {
                id: id.clone(),
                sequence: sequence.clone(),
                features: provider.encode_pair(claim, sequence)?.into_inner(),
                gold: gold.map(|g| g.contains(id)),
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    EvidenceGraph::new(claim_id, nodes, label)
}

/// Each node's neighbourhood: every node, itself included.
pub fn neighborhoods(g: &EvidenceGraph) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..g.len()).collect();
    vec![all; g.len()]
}

/// Debug view of a graph: ids, gold flags and feature norms.
#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub claim_id: u64,
    pub label: Option<Label>,
    pub nodes: Vec<NodeSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSummary {
    pub id: ElementId,
    pub gold: bool,
    pub feature_norm: f64,
}

impl From<&EvidenceGraph> for GraphSummary {
    fn from(g: &EvidenceGraph) -> Self {
        Self {
            claim_id: g.claim_id,
            label: g.label,
            nodes: g
                .nodes
                .iter()
                .map(|n| NodeSummary {
                    id: n.id.clone(),
                    gold: n.gold.unwrap_or(false),
                    feature_norm: n.features.iter().map(|x| x * x).sum::<f64>().sqrt(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashProvider;

    fn selection(n: usize) -> Vec<(ElementId, String)> {
        (0..n)
            .map(|i| (ElementId::sentence("P", i), format!("evidence number {i}")))
            .collect()
    }

    #[test]
    fn edge_counts() {
        let p = HashProvider::new(32, 0);
        let g = build_graph(1, "claim", &selection(1), &p, None, None).unwrap();
        assert_eq!(g.edge_count(), 1);
        let g = build_graph(1, "claim", &selection(5), &p, None, None).unwrap();
        assert_eq!(g.edge_count(), 25);
        assert!(build_graph(1, "claim", &[], &p, None, None).is_err());
    }

    #[test]
    fn identical_pairs_identical_features() {
        let p = HashProvider::new(32, 0);
        let sel = vec![
            (ElementId::sentence("P", 0), "same".to_string()),
            (ElementId::sentence("P", 1), "same".to_string()),
        ];
        let gold = [ElementId::sentence("P", 1)];
        let g = build_graph(1, "claim", &sel, &p, Some(&gold), None).unwrap();
        assert_eq!(g.nodes[0].features, g.nodes[1].features);
        assert_eq!(g.gold_flags(), Some(vec![false, true]));
        let again = build_graph(1, "claim", &sel, &p, Some(&gold), None).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn neighborhoods_are_complete() {
        let p = HashProvider::new(8, 0);
        let g = build_graph(1, "c", &selection(3), &p, None, None).unwrap();
        assert_eq!(neighborhoods(&g), vec![vec![0, 1, 2]; 3]);
        let g1 = build_graph(1, "c", &selection(1), &p, None, None).unwrap();
        assert_eq!(neighborhoods(&g1), vec![vec![0]]);

        // permuting nodes permutes neighbourhoods consistently: node k of the
        // permuted graph sees exactly the ids node order[k] saw before
        let order = [2, 0, 1];
        let pg = g.permuted(&order);
        let before = neighborhoods(&g);
        let after = neighborhoods(&pg);
        for (k, &old) in order.iter().enumerate() {
            let mut ids_after: Vec<_> = after[k].iter().map(|&j| pg.nodes[j].id.clone()).collect();
            let mut ids_before: Vec<_> = before[old].iter().map(|&j| g.nodes[j].id.clone()).collect();
            ids_after.sort();
            ids_before.sort();
            assert_eq!(ids_after, ids_before);
        }
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let node = |d: usize| GraphNode {
            id: ElementId::sentence("P", 0),
            sequence: String::new(),
            features: vec![0.0; d],
            gold: None,
        };
        assert!(matches!(
            EvidenceGraph::new(0, vec![node(3), node(4)], None),
            Err(GraphError::Dimension { index: 1, .. })
        ));
    }
}
