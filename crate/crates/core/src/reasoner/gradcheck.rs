use super::dd::Dd;
use super::layers::Dense;
use super::matrix::Matrix;
use super::model::ReasonerModel;
use crate::graph::EvidenceGraph;

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]);
    fn loss(&self) -> f64;
    fn gradient(&self) -> Vec<f64>;

    /// `(L(θ + ε e_k) − L(θ − ε e_k)) / 2ε`, leaving parameters unchanged.
    fn central_difference(&mut self, k: usize, epsilon: f64) -> f64 {
        let mut params = self.parameters();
        let orig = params[k];
        params[k] = orig + epsilon;
        self.set_parameters(&params);
        let up = self.loss();
        params[k] = orig - epsilon;
        self.set_parameters(&params);
        let down = self.loss();
        params[k] = orig;
        self.set_parameters(&params);
        (up - down) / (2.0 * epsilon)
    }
}

/// Max over parameters of `|a − n| / max(1e-8, |a| + |n|)`, where `n` is the
/// central difference with step `epsilon`.
pub fn grad_check(objective: &mut dyn Objective, epsilon: f64) -> f64 {
    let analytic = objective.gradient();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let numeric = objective.central_difference(k, epsilon);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// The model's training loss on a fixed batch. Analytic gradients come from
/// the model's backward pass; finite differences evaluate an independent
/// double-double forward pass so that rounding in the loss (about 1e-16)
/// does not swamp gradients near 1e-8.
pub struct ModelObjective<'a> {
    pub model: ReasonerModel,
    pub batch: Vec<&'a EvidenceGraph>,
}

impl Objective for ModelObjective<'_> {
    fn parameters(&self) -> Vec<f64> {
        self.model.flatten()
    }

    fn set_parameters(&mut self, params: &[f64]) {
        self.model.unflatten(params);
    }

    fn loss(&self) -> f64 {
        reference_loss(&self.model, &self.batch).hi
    }

    fn gradient(&self) -> Vec<f64> {
        let (_, grad) = self.model.loss_and_grad(&self.batch).expect("batch valid for the model");
        grad.flatten()
    }

    fn central_difference(&mut self, k: usize, epsilon: f64) -> f64 {
        let mut params = self.parameters();
        let orig = params[k];
        params[k] = orig + epsilon;
        self.set_parameters(&params);
        let up = reference_loss(&self.model, &self.batch);
        params[k] = orig - epsilon;
        self.set_parameters(&params);
        let down = reference_loss(&self.model, &self.batch);
        params[k] = orig;
        self.set_parameters(&params);
        // the step actually applied, which may differ from epsilon by rounding
        let step = Dd::from(orig + epsilon) - Dd::from(orig - epsilon);
        ((up - down) / step).hi
    }
}

/// Gradient check of the model's loss on one graph.
pub fn grad_check_model(model: &ReasonerModel, g: &EvidenceGraph, epsilon: f64) -> f64 {
    let mut objective = ModelObjective {
        model: model.clone(),
        batch: vec![g],
    };
    grad_check(&mut objective, epsilon)
}

type DdMatrix = Vec<Vec<Dd>>;

fn dd(x: f64) -> Dd {
    Dd::from(x)
}

fn dd_matrix(m: &Matrix) -> DdMatrix {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&x| dd(x)).collect()).collect()
}

fn dd_elu(x: Dd) -> Dd {
    if x.is_positive() {
        x
    } else {
        x.exp_m1()
    }
}

fn dd_softmax(xs: &[Dd]) -> Vec<Dd> {
    let m = xs.iter().copied().fold(xs[0], Dd::max);
    let e: Vec<Dd> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s = e.iter().fold(dd(0.0), |a, &b| a + b);
    e.into_iter().map(|x| x / s).collect()
}

/// `x · W + b` for one row, with optional ELU.
fn dd_dense(x: &[Dd], layer: &Dense) -> Vec<Dd> {
    (0..layer.weight.cols())
        .map(|o| {
            let mut acc = dd(layer.bias.get(0, o));
            for (k, &xk) in x.iter().enumerate() {
                acc += xk * layer.weight.get(k, o);
            }
            if layer.elu {
                dd_elu(acc)
            } else {
                acc
            }
        })
        .collect()
}

/// Batch loss in double-double, written as plain per-node loops.
pub(crate) fn reference_loss(model: &ReasonerModel, batch: &[&EvidenceGraph]) -> Dd {
    let mut label_total = dd(0.0);
    let mut evidence_total = dd(0.0);
    let mut node_count = 0usize;
    for g in batch {
        let n = g.len();
        let x: DdMatrix = g.nodes.iter().map(|node| node.features.iter().map(|&v| dd(v)).collect()).collect();
        let mut h: DdMatrix = vec![Vec::new(); n];
        for layers in &model.branches {
            let mut cur = x.clone();
            for layer in layers {
                let w = dd_matrix(&layer.weight);
                let d_out = layer.weight.cols();
                let a = layer.attention.data();
                let z: DdMatrix = cur
                    .iter()
                    .map(|row| {
                        (0..d_out)
                            .map(|o| row.iter().zip(&w).fold(dd(0.0), |acc, (&xk, wk)| acc + xk * wk[o]))
                            .collect()
                    })
                    .collect();
                let mut next = Vec::with_capacity(n);
                for i in 0..n {
                    let logits: Vec<Dd> = (0..n)
                        .map(|j| {
                            let mut e = dd(0.0);
                            for o in 0..d_out {
                                e += z[i][o] * a[o] + z[j][o] * a[d_out + o];
                            }
                            if e.is_positive() {
                                e
                            } else {
                                e * layer.slope
                            }
                        })
                        .collect();
                    let alpha = dd_softmax(&logits);
                    let out: Vec<Dd> = (0..d_out)
                        .map(|o| dd_elu((0..n).fold(dd(0.0), |acc, j| acc + alpha[j] * z[j][o])))
                        .collect();
                    next.push(out);
                }
                cur = next;
            }
            for (hi, ci) in h.iter_mut().zip(cur) {
                hi.extend(ci);
            }
        }

        let pool = &model.pool;
        let d = pool.dim();
        let gate_logits: Vec<Dd> = h
            .iter()
            .map(|row| {
                (0..d).fold(dd(pool.gate_bias.get(0, 0)), |acc, k| acc + row[k] * pool.gate_weight.get(k, 0))
            })
            .collect();
        let gate = dd_softmax(&gate_logits);
        let mut pooled = vec![dd(0.0); d];
        for (row, &w) in h.iter().zip(&gate) {
            for (o, p) in pooled.iter_mut().enumerate() {
                let t = (0..d).fold(dd(pool.feature_bias.get(0, o)), |acc, k| {
                    acc + row[k] * pool.feature_weight.get(k, o)
                });
                *p += w * t;
            }
        }

        let v = &model.veracity;
        let logits = dd_dense(&dd_dense(&dd_dense(&pooled, &v.projection), &v.hidden), &v.output);
        let target = g.label.expect("labelled graph").index();
        let m = logits.iter().copied().fold(logits[0], Dd::max);
        let lse = m + logits.iter().fold(dd(0.0), |acc, &l| acc + (l - m).exp()).ln();
        label_total += lse - logits[target];

        if let Some(head) = &model.evidence {
            let flags = g.gold_flags().expect("gold flags");
            for (row, gold) in h.iter().zip(flags) {
                let z = dd_dense(&dd_dense(row, &head.hidden), &head.output)[0];
                let y = if gold { 1.0 } else { 0.0 };
                let pos = if z.is_positive() { z } else { dd(0.0) };
                evidence_total += pos - z * y + ((-z.abs()).exp() + 1.0).ln();
                node_count += 1;
            }
        }
    }
    let label = label_total / batch.len() as f64;
    if model.evidence.is_some() {
        label + evidence_total / node_count as f64 * model.config.lambda
    } else {
        label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ElementId, Label};
    use crate::graph::GraphNode;
    use crate::reasoner::{Mode, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `L(w) = Σ c_k w_k + b`
    struct Affine {
        w: Vec<f64>,
        c: Vec<f64>,
    }

    impl Objective for Affine {
        fn parameters(&self) -> Vec<f64> {
            self.w.clone()
        }
        fn set_parameters(&mut self, p: &[f64]) {
            self.w.copy_from_slice(p);
        }
        fn loss(&self) -> f64 {
            self.w.iter().zip(&self.c).map(|(w, c)| w * c).sum::<f64>() + 0.25
        }
        fn gradient(&self) -> Vec<f64> {
            self.c.clone()
        }
    }

    #[test]
    fn affine_is_exact() {
        let mut a = Affine {
            w: vec![0.5, -1.0, 2.0],
            c: vec![1.5, -0.25, 3.0],
        };
        assert!(grad_check(&mut a, 1e-5) <= 1e-9);
        assert_eq!(a.w, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        struct Bad;
        impl Objective for Bad {
            fn parameters(&self) -> Vec<f64> {
                vec![1.0]
            }
            fn set_parameters(&mut self, _: &[f64]) {}
            fn loss(&self) -> f64 {
                0.0
            }
            fn gradient(&self) -> Vec<f64> {
                vec![1.0]
            }
        }
        assert!(grad_check(&mut Bad, 1e-5) > 0.5);
    }

    #[test]
    fn reference_forward_agrees_with_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for mode in [Mode::Stl, Mode::Mtl] {
            let config = ModelConfig {
                mode,
                input_dim: 5,
                hidden: 4,
                head_hidden: 3,
                evidence_hidden: 3,
                ..ModelConfig::default()
            };
            let model = ReasonerModel::new(config, 5);
            let graphs: Vec<EvidenceGraph> = (0..3)
                .map(|c| {
                    let nodes = (0..c + 2)
                        .map(|i| GraphNode {
                            id: ElementId::sentence("P", i),
                            sequence: String::new(),
                            features: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                            gold: Some(i % 2 == 0),
                        })
                        .collect();
                    EvidenceGraph::new(c as u64, nodes, Some(Label::ALL[c])).unwrap()
                })
                .collect();
            let batch: Vec<&EvidenceGraph> = graphs.iter().collect();
            let (fast, _) = model.loss_and_grad(&batch).unwrap();
            let slow = reference_loss(&model, &batch).hi;
            assert!((fast.joint - slow).abs() < 1e-12, "{mode:?}: {} vs {slow}", fast.joint);
        }
    }
}
