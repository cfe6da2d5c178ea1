use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LossParts, Mode, ModelConfig, ReasonerModel};
use super::ReasonerError;
use crate::graph::EvidenceGraph;

/// Node probability at or above which a node counts as selected evidence.
pub const EVIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
    pub mode: Mode,
    pub hidden_size: usize,
    pub input_dim: usize,
    pub lambda: f64,
    /// Fraction of graphs held out for checkpoint selection.
    pub held_out_fraction: f64,
    /// Steps between held-out evaluations.
    pub eval_interval: usize,
    pub weight_decay: f64,
    /// Dropout rate on node input features.
    pub input_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 64,
            steps: 20_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rng_seed: 0,
            mode: Mode::Stl,
            hidden_size: 128,
            input_dim: 1024,
            lambda: 0.5,
            held_out_fraction: 0.05,
            eval_interval: 500,
            weight_decay: 0.0,
            input_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        let bad = |what: &str| Err(ReasonerError::Config(what.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if self.batch_size == 0 || self.hidden_size == 0 || self.input_dim == 0 || self.eval_interval == 0 {
            return bad("batch_size, hidden_size, input_dim and eval_interval must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.held_out_fraction) || !(0.0..1.0).contains(&self.input_dropout) {
            return bad("held_out_fraction must lie in [0, 1] and input_dropout in [0, 1)");
        }
        if self.lambda < 0.0 || self.weight_decay < 0.0 {
            return bad("lambda and weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Model shape implied by this config, other sizes at their defaults.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            input_dim: self.input_dim,
            hidden: self.hidden_size,
            lambda: self.lambda,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeldOutMetrics {
    pub loss: LossParts,
    pub accuracy: f64,
    /// Fraction of gold nodes with probability ≥ 0.5 (multi-task only).
    pub evidence_recall: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossParts,
    pub held_out: Option<HeldOutMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters chosen by held-out checkpoint selection.
    pub model: ReasonerModel,
    pub selected_step: usize,
    pub log: Vec<StepRecord>,
}

/// Label accuracy and, for multi-task models, gold-node recall.
pub fn evaluate_graphs(model: &ReasonerModel, graphs: &[&EvidenceGraph]) -> Result<HeldOutMetrics, ReasonerError> {
    let loss = match model.mode() {
        Mode::Stl => {
            let label = model.loss_stl(graphs)?;
            LossParts {
                joint: label,
                label,
                evidence: 0.0,
            }
        }
        Mode::Mtl => model.loss_mtl(graphs)?,
    };
    let mut correct = 0;
    let (mut hit, mut gold_total) = (0usize, 0usize);
    for g in graphs {
        if Some(model.predict_veracity(g)?.label()) == g.label {
            correct += 1;
        }
        if model.mode() == Mode::Mtl {
            let probs = model.predict_evidence_nodes(g)?;
            let flags = g.gold_flags().ok_or(ReasonerError::MissingGold { claim_id: g.claim_id })?;
            for (p, gold) in probs.iter().zip(flags) {
                if gold {
                    gold_total += 1;
                    if *p >= EVIDENCE_THRESHOLD {
                        hit += 1;
                    }
                }
            }
        }
    }
    let evidence_recall = (model.mode() == Mode::Mtl).then(|| {
        if gold_total == 0 {
            1.0
        } else {
            hit as f64 / gold_total as f64
        }
    });
    Ok(HeldOutMetrics {
        loss,
        accuracy: correct as f64 / graphs.len() as f64,
        evidence_recall,
    })
}

/// True when `candidate` beats `best` under the mode's selection rule:
/// lowest label loss for single-task, highest evidence recall (then lowest
/// joint loss) for multi-task.
fn improves(mode: Mode, candidate: &HeldOutMetrics, best: Option<&HeldOutMetrics>) -> bool {
    let Some(best) = best else { return true };
    match mode {
        Mode::Stl => candidate.loss.label < best.loss.label,
        Mode::Mtl => {
            let (c, b) = (candidate.evidence_recall.unwrap_or(0.0), best.evidence_recall.unwrap_or(0.0));
            c > b || (c == b && candidate.loss.joint < best.loss.joint)
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k] + cfg.weight_decay * params[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

fn dropped(g: &EvidenceGraph, rate: f64, rng: &mut ChaCha8Rng) -> EvidenceGraph {
    let keep = 1.0 - rate;
    let mut out = g.clone();
    for node in &mut out.nodes {
        for x in &mut node.features {
            *x = if rng.gen_bool(keep) { *x / keep } else { 0.0 };
        }
    }
    out
}

/// Adam on shuffled minibatches with held-out checkpoint selection.
/// Deterministic for a given `cfg.rng_seed`.
pub fn train(model: ReasonerModel, graphs: &[EvidenceGraph], cfg: &TrainConfig) -> Result<TrainOutcome, ReasonerError> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(ReasonerError::EmptyDataset);
    }
    if model.mode() != cfg.mode {
        return Err(ReasonerError::Config(format!(
            "model mode {} differs from training mode {}",
            model.mode().as_str(),
            cfg.mode.as_str()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(&mut rng);
    let n_held = ((graphs.len() as f64 * cfg.held_out_fraction).floor() as usize).min(graphs.len() - 1);
    let (held_idx, train_idx) = order.split_at(n_held);
    let train_set: Vec<&EvidenceGraph> = train_idx.iter().map(|&i| &graphs[i]).collect();
    let held_out: Vec<&EvidenceGraph> = if held_idx.is_empty() {
        train_set.clone()
    } else {
        held_idx.iter().map(|&i| &graphs[i]).collect()
    };

    let mut model = model;
    let mut params = model.flatten();
    let mut adam = Adam::new(params.len());
    let mut log = Vec::with_capacity(cfg.steps);
    let mut best: Option<(HeldOutMetrics, usize, Vec<f64>)> = None;
    let mut epoch: Vec<usize> = Vec::new();
    let mut cursor = 0;

    for step in 1..=cfg.steps {
        let mut batch_idx = Vec::with_capacity(cfg.batch_size);
        while batch_idx.len() < cfg.batch_size.min(train_set.len()) {
            if cursor == epoch.len() {
                epoch = (0..train_set.len()).collect();
                epoch.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(epoch[cursor]);
            cursor += 1;
        }
        let (loss, grad) = if cfg.input_dropout > 0.0 {
            let owned: Vec<EvidenceGraph> = batch_idx
                .iter()
                .map(|&i| dropped(train_set[i], cfg.input_dropout, &mut rng))
                .collect();
            let batch: Vec<&EvidenceGraph> = owned.iter().collect();
            model.loss_and_grad(&batch)?
        } else {
            let batch: Vec<&EvidenceGraph> = batch_idx.iter().map(|&i| train_set[i]).collect();
            model.loss_and_grad(&batch)?
        };
        adam.step(&mut params, &grad.flatten(), cfg);
        model.unflatten(&params);

        let held = if step % cfg.eval_interval == 0 || step == cfg.steps {
            let metrics = evaluate_graphs(&model, &held_out)?;
            if improves(cfg.mode, &metrics, best.as_ref().map(|b| &b.0)) {
                best = Some((metrics, step, params.clone()));
            }
            Some(metrics)
        } else {
            None
        };
        log.push(StepRecord {
            step,
            loss,
            held_out: held,
        });
    }

    let selected_step = match best {
        Some((_, step, p)) => {
            model.unflatten(&p);
            step
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        selected_step,
        log,
    })
}

/// Step log as CSV; held-out columns are empty on steps without evaluation.
pub fn write_log_csv<W: Write>(log: &[StepRecord], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "step,loss,label_loss,evidence_loss,held_out_loss,held_out_accuracy,held_out_evidence_recall"
    )?;
    for r in log {
        write!(out, "{},{},{},{}", r.step, r.loss.joint, r.loss.label, r.loss.evidence)?;
        match &r.held_out {
            Some(h) => {
                let recall = h.evidence_recall.map(|x| x.to_string()).unwrap_or_default();
                writeln!(out, ",{},{},{}", h.loss.joint, h.accuracy, recall)?;
            }
            None => writeln!(out, ",,,")?,
        }
    }
    Ok(())
}
