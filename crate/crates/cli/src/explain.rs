use std::fmt;

use evigraph::corpus::{ElementId, Label};
use evigraph::graph::EvidenceGraph;
use evigraph::reasoner::{ReasonerError, ReasonerModel};
use serde::Serialize;

/// One candidate evidence node of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainRow {
    pub id: ElementId,
    /// Pool softmax weight.
    pub gate_weight: f64,
    /// Mean incoming first-layer attention.
    pub attention_mass: f64,
    pub gold: bool,
}

impl ExplainRow {
    /// `id (0.1794)`, the gate weight to four places.
    pub fn label(&self) -> String {
        format!("{} ({:.4})", self.id, self.gate_weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainReport {
    pub claim_id: u64,
    pub predicted: Label,
    pub distribution: [f64; 3],
    /// Sorted by gate weight, descending; ties by id.
    pub rows: Vec<ExplainRow>,
}

pub fn explain_graph(model: &ReasonerModel, g: &EvidenceGraph) -> Result<ExplainReport, ReasonerError> {
    let out = model.predict_veracity(g)?;
    let mut rows: Vec<ExplainRow> = g
        .nodes
        .iter()
        .zip(out.gate_weights.iter().zip(&out.attention_mass))
        .map(|(n, (&gate_weight, &attention_mass))| ExplainRow {
            id: n.id.clone(),
            gate_weight,
            attention_mass,
            gold: n.gold.unwrap_or(false),
        })
        .collect();
    rows.sort_by(|a, b| b.gate_weight.total_cmp(&a.gate_weight).then_with(|| a.id.cmp(&b.id)));
    Ok(ExplainReport {
        claim_id: g.claim_id,
        predicted: out.label(),
        distribution: out.distribution,
        rows,
    })
}

impl fmt::Display for ExplainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.distribution;
        writeln!(
            f,
            "claim {}: {} (SUPPORTS {:.4}, REFUTES {:.4}, NOT ENOUGH INFO {:.4})",
            self.claim_id,
            self.predicted.as_str(),
            d[0],
            d[1],
            d[2]
        )?;
        let labels: Vec<String> = self.rows.iter().map(ExplainRow::label).collect();
        let width = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).max("pool gate weight".len());
        writeln!(f, "  {:<width$}  first-layer attention", "pool gate weight")?;
        for (row, label) in self.rows.iter().zip(&labels) {
            let mark = if row.gold { "  gold" } else { "" };
            writeln!(f, "  {label:<width$}  {:.4}{mark}", row.attention_mass)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evigraph::graph::GraphNode;
    use evigraph::reasoner::{Mode, ModelConfig};

    fn model() -> ReasonerModel {
        let config = ModelConfig {
            mode: Mode::Stl,
            input_dim: 4,
            hidden: 3,
            head_hidden: 3,
            ..ModelConfig::default()
        };
        ReasonerModel::new(config, 1)
    }

    fn node(i: usize, f: [f64; 4], gold: bool) -> GraphNode {
        GraphNode {
            id: ElementId::cell("Scomadi", 0, i, 1),
            sequence: String::new(),
            features: f.to_vec(),
            gold: Some(gold),
        }
    }

    #[test]
    fn single_node_has_weight_one() {
        let g = EvidenceGraph::new(1, vec![node(0, [0.3, -0.2, 0.1, 0.5], true)], None).unwrap();
        let r = explain_graph(&model(), &g).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].gate_weight, 1.0);
        assert_eq!(r.rows[0].label(), "Scomadi_cell_0_0_1 (1.0000)");
    }

    #[test]
    fn rows_sorted_and_weights_sum_to_one() {
        let nodes = (0..5)
            .map(|i| node(i, [i as f64 * 0.4, 1.0 - i as f64 * 0.3, (i % 2) as f64, -0.2 * i as f64], i == 2))
            .collect();
        let g = EvidenceGraph::new(2, nodes, None).unwrap();
        let r = explain_graph(&model(), &g).unwrap();
        let total: f64 = r.rows.iter().map(|x| x.gate_weight).sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(r.rows.windows(2).all(|w| w[0].gate_weight >= w[1].gate_weight));
        assert_eq!(r.rows.iter().filter(|x| x.gold).count(), 1);
        let text = r.to_string();
        assert!(text.contains("gold"));
        assert_eq!(text.lines().count(), 2 + 5);
    }
}
