use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, EvidenceHead, GatCache, GatLayer, GlobalAttentionPool, PoolCache, VeracityHead};
use super::matrix::{bce_with_logit, log_sum_exp, sigmoid, softmax, Matrix};
use super::ReasonerError;
use crate::corpus::Label;
use crate::graph::EvidenceGraph;

const CLASSES: usize = 3;
/// Graphs per gradient-accumulation chunk; fixed so results do not depend
/// on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stl,
    Mtl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stl => "stl",
            Mode::Mtl => "mtl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub input_dim: usize,
    pub hidden: usize,
    pub gat_layers: usize,
    pub head_hidden: usize,
    pub evidence_hidden: usize,
    pub slope: f64,
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Stl,
            input_dim: 1024,
            hidden: 128,
            gat_layers: 2,
            head_hidden: 128,
            evidence_hidden: 64,
            slope: 0.2,
            lambda: 0.5,
        }
    }
}

impl ModelConfig {
    /// Width of the combined node representation `h`.
    pub fn node_dim(&self) -> usize {
        match self.mode {
            Mode::Stl => self.hidden,
            Mode::Mtl => 2 * self.hidden,
        }
    }
}

/// GAT branches, attention pool, veracity head and, in multi-task mode,
/// the per-node evidence head.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerModel {
    pub config: ModelConfig,
    pub branches: Vec<Vec<GatLayer>>,
    pub pool: GlobalAttentionPool,
    pub veracity: VeracityHead,
    pub evidence: Option<EvidenceHead>,
}

/// Loss components for a batch. In single-task mode `evidence` is zero
/// and `joint == label`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub joint: f64,
    pub label: f64,
    pub evidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VeracityOutput {
    pub distribution: [f64; CLASSES],
    /// Pool softmax weight per node.
    pub gate_weights: Vec<f64>,
    /// Mean incoming first-layer attention per node, averaged over branches.
    pub attention_mass: Vec<f64>,
}

impl VeracityOutput {
    pub fn label(&self) -> Label {
        let mut best = 0;
        for k in 1..CLASSES {
            if self.distribution[k] > self.distribution[best] {
                best = k;
            }
        }
        Label::ALL[best]
    }
}

struct Forward {
    branches: Vec<Vec<GatCache>>,
    h: Matrix,
    pool: PoolCache,
    pooled: Matrix,
    projected: Matrix,
    hidden: Matrix,
    logits: Vec<f64>,
    evidence: Option<(Matrix, Matrix)>,
}

impl ReasonerModel {
    /// Xavier-uniform matrices and zero biases from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_branches = match config.mode {
            Mode::Stl => 1,
            Mode::Mtl => 2,
        };
        let branches = (0..n_branches)
            .map(|_| {
                (0..config.gat_layers.max(1))
                    .map(|l| {
                        let d_in = if l == 0 { config.input_dim } else { config.hidden };
                        GatLayer::new(d_in, config.hidden, config.slope, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let d = config.node_dim();
        let pool = GlobalAttentionPool::new(d, &mut rng);
        let veracity = VeracityHead::new(d, config.head_hidden, CLASSES, &mut rng);
        let evidence = match config.mode {
            Mode::Stl => None,
            Mode::Mtl => Some(EvidenceHead::new(d, config.evidence_hidden, &mut rng)),
        };
        Self {
            config,
            branches,
            pool,
            veracity,
            evidence,
        }
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (b, layers) in self.branches.iter().enumerate() {
            for (l, layer) in layers.iter().enumerate() {
                out.push((format!("branch{b}.gat{l}.weight"), &layer.weight));
                out.push((format!("branch{b}.gat{l}.attention"), &layer.attention));
            }
        }
        out.push(("pool.gate_weight".into(), &self.pool.gate_weight));
        out.push(("pool.gate_bias".into(), &self.pool.gate_bias));
        out.push(("pool.feature_weight".into(), &self.pool.feature_weight));
        out.push(("pool.feature_bias".into(), &self.pool.feature_bias));
        push_dense(&mut out, "veracity.projection", &self.veracity.projection);
        push_dense(&mut out, "veracity.hidden", &self.veracity.hidden);
        push_dense(&mut out, "veracity.output", &self.veracity.output);
        if let Some(e) = &self.evidence {
            push_dense(&mut out, "evidence.hidden", &e.hidden);
            push_dense(&mut out, "evidence.output", &e.output);
        }
        out
    }

    /// Mutable tensors in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for layers in self.branches.iter_mut() {
            for layer in layers.iter_mut() {
                out.push(&mut layer.weight);
                out.push(&mut layer.attention);
            }
        }
        out.push(&mut self.pool.gate_weight);
        out.push(&mut self.pool.gate_bias);
        out.push(&mut self.pool.feature_weight);
        out.push(&mut self.pool.feature_bias);
        for dense in [
            &mut self.veracity.projection,
            &mut self.veracity.hidden,
            &mut self.veracity.output,
        ] {
            out.push(&mut dense.weight);
            out.push(&mut dense.bias);
        }
        if let Some(e) = &mut self.evidence {
            out.push(&mut e.hidden.weight);
            out.push(&mut e.hidden.bias);
            out.push(&mut e.output.weight);
            out.push(&mut e.output.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, m)| m.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count(), "flat parameter length");
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Same shapes, all zeros; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            branches: self
                .branches
                .iter()
                .map(|layers| layers.iter().map(GatLayer::zeros_like).collect())
                .collect(),
            pool: self.pool.zeros_like(),
            veracity: self.veracity.zeros_like(),
            evidence: self.evidence.as_ref().map(EvidenceHead::zeros_like),
        }
    }

    pub fn add_assign(&mut self, other: &ReasonerModel) {
        let others = other.tensors();
        for (m, (_, o)) in self.tensors_mut().into_iter().zip(others) {
            m.add_assign(o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    fn input_matrix(&self, g: &EvidenceGraph) -> Result<Matrix, ReasonerError> {
        if g.is_empty() {
            return Err(ReasonerError::EmptyGraph { claim_id: g.claim_id });
        }
        let found = g.feature_dim();
        if found != self.config.input_dim {
            return Err(ReasonerError::Dimension {
                expected: self.config.input_dim,
                found,
            });
        }
        let data = g.nodes.iter().flat_map(|n| n.features.iter().copied()).collect();
        Ok(Matrix::from_vec(g.len(), found, data))
    }

    fn forward(&self, x: &Matrix) -> Forward {
        let mut caches = Vec::with_capacity(self.branches.len());
        let mut h: Option<Matrix> = None;
        for layers in &self.branches {
            let mut branch = Vec::with_capacity(layers.len());
            let mut current = x.clone();
            for layer in layers {
                let cache = layer.forward(&current);
                current = cache.output.clone();
                branch.push(cache);
            }
            h = Some(match h {
                None => current,
                Some(prev) => prev.hconcat(&current),
            });
            caches.push(branch);
        }
        let h = h.expect("at least one branch");
        let pool = self.pool.forward(&h);
        let pooled = Matrix::from_vec(1, pool.output.len(), pool.output.clone());
        let projected = self.veracity.projection.forward(&pooled);
        let hidden = self.veracity.hidden.forward(&projected);
        let logits = self.veracity.output.forward(&hidden).data().to_vec();
        let evidence = self.evidence.as_ref().map(|head| {
            let hid = head.hidden.forward(&h);
            let out = head.output.forward(&hid);
            (hid, out)
        });
        Forward {
            branches: caches,
            h,
            pool,
            pooled,
            projected,
            hidden,
            logits,
            evidence,
        }
    }

    /// Accumulate gradients for one graph given loss derivatives with respect
    /// to the veracity logits and the per-node evidence logits.
    fn backward(&self, f: &Forward, d_logits: &[f64], d_evidence: Option<&Matrix>, grad: &mut ReasonerModel) {
        let v = &self.veracity;
        let gv = &mut grad.veracity;
        let d_out = Matrix::from_vec(1, CLASSES, d_logits.to_vec());
        let out = Matrix::from_vec(1, CLASSES, f.logits.clone());
        let d_hidden = v.output.backward(&f.hidden, &out, &d_out, &mut gv.output);
        let d_projected = v.hidden.backward(&f.projected, &f.hidden, &d_hidden, &mut gv.hidden);
        let d_pooled = v.projection.backward(&f.pooled, &f.projected, &d_projected, &mut gv.projection);
        let mut d_h = self.pool.backward(&f.pool, d_pooled.data(), &mut grad.pool);

        if let (Some(head), Some(d_ev), Some((hid, out))) = (&self.evidence, d_evidence, &f.evidence) {
            let gh = grad.evidence.as_mut().expect("gradient buffer has an evidence head");
            let d_hid = head.output.backward(hid, out, d_ev, &mut gh.output);
            let d_from_head = head.hidden.backward(&f.h, hid, &d_hid, &mut gh.hidden);
            d_h.add_assign(&d_from_head);
        }

        let width = self.config.hidden;
        for (b, layers) in self.branches.iter().enumerate() {
            let mut d = d_h.col_slice(b * width, width);
            for (l, layer) in layers.iter().enumerate().rev() {
                let cache = &f.branches[b][l];
                d = layer.backward(cache, &d, &mut grad.branches[b][l]);
            }
        }
    }

    pub fn predict_veracity(&self, g: &EvidenceGraph) -> Result<VeracityOutput, ReasonerError> {
        let x = self.input_matrix(g)?;
        let f = self.forward(&x);
        let p = softmax(&f.logits);
        let n = g.len();
        let mut mass = vec![0.0; n];
        for branch in &f.branches {
            let alpha = &branch[0].alpha;
            for i in 0..n {
                for (m, &a) in mass.iter_mut().zip(alpha.row(i)) {
                    *m += a;
                }
            }
        }
        let scale = (n * f.branches.len()) as f64;
        mass.iter_mut().for_each(|m| *m /= scale);
        Ok(VeracityOutput {
            distribution: [p[0], p[1], p[2]],
            gate_weights: f.pool.gate,
            attention_mass: mass,
        })
    }

    /// Per-node evidence probability; multi-task models only.
    pub fn predict_evidence_nodes(&self, g: &EvidenceGraph) -> Result<Vec<f64>, ReasonerError> {
        if self.evidence.is_none() {
            return Err(ReasonerError::NotMultiTask);
        }
        let x = self.input_matrix(g)?;
        let f = self.forward(&x);
        let (_, logits) = f.evidence.expect("evidence head present");
        Ok(logits.data().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Mean categorical cross-entropy over the batch.
    pub fn loss_stl(&self, batch: &[&EvidenceGraph]) -> Result<f64, ReasonerError> {
        Ok(self.evaluate(batch, 0.0, false)?.0.label)
    }

    /// `λ L_evidence + L_label` with the configured λ.
    pub fn loss_mtl(&self, batch: &[&EvidenceGraph]) -> Result<LossParts, ReasonerError> {
        self.loss_mtl_with(batch, self.config.lambda)
    }

    pub fn loss_mtl_with(&self, batch: &[&EvidenceGraph], lambda: f64) -> Result<LossParts, ReasonerError> {
        if self.evidence.is_none() {
            return Err(ReasonerError::NotMultiTask);
        }
        Ok(self.evaluate(batch, lambda, false)?.0)
    }

    /// Loss for the model's own mode and its gradient.
    pub fn loss_and_grad(&self, batch: &[&EvidenceGraph]) -> Result<(LossParts, ReasonerModel), ReasonerError> {
        let (parts, grad) = self.evaluate(batch, self.config.lambda, true)?;
        Ok((parts, grad.expect("gradient requested")))
    }

    fn evaluate(
        &self,
        batch: &[&EvidenceGraph],
        lambda: f64,
        with_grad: bool,
    ) -> Result<(LossParts, Option<ReasonerModel>), ReasonerError> {
        if batch.is_empty() {
            return Err(ReasonerError::EmptyBatch);
        }
        let mtl = self.evidence.is_some();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut total_nodes = 0;
        for g in batch {
            let label = g.label.ok_or(ReasonerError::Unlabeled { claim_id: g.claim_id })?;
            let gold = if mtl {
                let flags = g.gold_flags().ok_or(ReasonerError::MissingGold { claim_id: g.claim_id })?;
                Some(flags)
            } else {
                None
            };
            total_nodes += g.len();
            inputs.push((self.input_matrix(g)?, label, gold));
        }
        let label_scale = 1.0 / batch.len() as f64;
        let node_scale = 1.0 / total_nodes as f64;

        let chunk_results: Vec<(f64, f64, Option<ReasonerModel>)> = inputs
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = with_grad.then(|| self.zeros_like());
                let (mut label_sum, mut evidence_sum) = (0.0, 0.0);
                for (x, label, gold) in chunk {
                    let f = self.forward(x);
                    let target = label.index();
                    label_sum += log_sum_exp(&f.logits) - f.logits[target];
                    let mut d_evidence = None;
                    if let (Some(flags), Some((_, logits))) = (gold, &f.evidence) {
                        let mut d = Matrix::zeros(flags.len(), 1);
                        for (k, &is_gold) in flags.iter().enumerate() {
                            let z = logits.get(k, 0);
                            let y = if is_gold { 1.0 } else { 0.0 };
                            evidence_sum += bce_with_logit(z, y);
                            d.set(k, 0, lambda * node_scale * (sigmoid(z) - y));
                        }
                        d_evidence = Some(d);
                    }
                    if let Some(grad) = grad.as_mut() {
                        let p = softmax(&f.logits);
                        let d_logits: Vec<f64> = p
                            .iter()
                            .enumerate()
                            .map(|(k, &pk)| label_scale * (pk - if k == target { 1.0 } else { 0.0 }))
                            .collect();
                        self.backward(&f, &d_logits, d_evidence.as_ref(), grad);
                    }
                }
                (label_sum, evidence_sum, grad)
            })
            .collect();

        let mut label = 0.0;
        let mut evidence = 0.0;
        let mut grad: Option<ReasonerModel> = None;
        for (l, e, g) in chunk_results {
            label += l;
            evidence += e;
            if let Some(g) = g {
                match grad.as_mut() {
                    None => grad = Some(g),
                    Some(acc) => acc.add_assign(&g),
                }
            }
        }
        label *= label_scale;
        evidence *= node_scale;
        let joint = if mtl { lambda * evidence + label } else { label };
        Ok((LossParts { joint, label, evidence }, grad))
    }
}

fn push_dense<'a>(out: &mut Vec<(String, &'a Matrix)>, prefix: &str, dense: &'a Dense) {
    out.push((format!("{prefix}.weight"), &dense.weight));
    out.push((format!("{prefix}.bias"), &dense.bias));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ElementId;
    use crate::graph::GraphNode;
    use rand::Rng;

    pub(crate) fn random_graph(n: usize, d: usize, label: Label, rng: &mut ChaCha8Rng) -> EvidenceGraph {
        let nodes = (0..n)
            .map(|i| GraphNode {
                id: ElementId::sentence("P", i),
                sequence: format!("s{i}"),
                features: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                gold: Some(rng.gen_bool(0.4)),
            })
            .collect();
        EvidenceGraph::new(7, nodes, Some(label)).unwrap()
    }

    fn small(mode: Mode) -> ModelConfig {
        ModelConfig {
            mode,
            input_dim: 6,
            hidden: 4,
            head_hidden: 5,
            evidence_hidden: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_head_gives_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ReasonerModel::new(small(Mode::Stl), 1);
        m.veracity.zero_output();
        let g = random_graph(4, 6, Label::Supports, &mut rng);
        let out = m.predict_veracity(&g).unwrap();
        for p in out.distribution {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((m.loss_stl(&[&g]).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stl_loss_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ReasonerModel::new(small(Mode::Stl), 2);
        let gs = [
            random_graph(3, 6, Label::Supports, &mut rng),
            random_graph(5, 6, Label::NotEnoughInfo, &mut rng),
        ];
        let mut expect = 0.0;
        for g in &gs {
            let p = m.predict_veracity(g).unwrap().distribution;
            expect -= p[g.label.unwrap().index()].ln();
        }
        expect /= 2.0;
        let got = m.loss_stl(&[&gs[0], &gs[1]]).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn mtl_loss_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ReasonerModel::new(small(Mode::Mtl), 3);
        let gs = [
            random_graph(3, 6, Label::Refutes, &mut rng),
            random_graph(4, 6, Label::Supports, &mut rng),
        ];
        let mut label = 0.0;
        let mut bce = 0.0;
        let mut nodes = 0.0;
        for g in &gs {
            let p = m.predict_veracity(g).unwrap().distribution;
            label -= p[g.label.unwrap().index()].ln();
            let q = m.predict_evidence_nodes(g).unwrap();
            for (qk, gold) in q.iter().zip(g.gold_flags().unwrap()) {
                bce -= if gold { qk.ln() } else { (1.0 - qk).ln() };
                nodes += 1.0;
            }
        }
        let expect = 0.5 * bce / nodes + label / 2.0;
        let got = m.loss_mtl(&[&gs[0], &gs[1]]).unwrap();
        assert!((got.joint - expect).abs() < 1e-12);

        let l0 = m.loss_mtl_with(&[&gs[0], &gs[1]], 0.0).unwrap();
        assert_eq!(l0.joint, l0.label);
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stl = ReasonerModel::new(small(Mode::Stl), 0);
        let mtl = ReasonerModel::new(small(Mode::Mtl), 0);
        let mut g = random_graph(3, 6, Label::Supports, &mut rng);
        assert!(matches!(stl.predict_evidence_nodes(&g), Err(ReasonerError::NotMultiTask)));
        assert!(matches!(stl.loss_stl(&[]), Err(ReasonerError::EmptyBatch)));
        let wide = random_graph(2, 9, Label::Supports, &mut rng);
        assert!(matches!(stl.predict_veracity(&wide), Err(ReasonerError::Dimension { .. })));
        g.nodes[1].gold = None;
        assert!(matches!(mtl.loss_mtl(&[&g]), Err(ReasonerError::MissingGold { .. })));
        g.label = None;
        assert!(matches!(stl.loss_stl(&[&g]), Err(ReasonerError::Unlabeled { .. })));
    }

    #[test]
    fn flatten_round_trip() {
        let m = ReasonerModel::new(small(Mode::Mtl), 9);
        let flat = m.flatten();
        let mut other = m.zeros_like();
        other.unflatten(&flat);
        assert_eq!(other, m);
        assert_eq!(m.tensors().len(), m.clone().tensors_mut().len());
    }

    #[test]
    fn evidence_probabilities_are_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = ReasonerModel::new(small(Mode::Mtl), 4);
        let g = random_graph(5, 6, Label::Supports, &mut rng);
        let order = [3, 1, 4, 0, 2];
        let p = m.predict_evidence_nodes(&g).unwrap();
        let q = m.predict_evidence_nodes(&g.permuted(&order)).unwrap();
        for (k, &old) in order.iter().enumerate() {
            assert!((q[k] - p[old]).abs() < 1e-12);
        }
    }
}
