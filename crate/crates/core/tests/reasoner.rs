use evigraph::corpus::{ElementId, Label};
use evigraph::graph::{EvidenceGraph, GraphNode};
use evigraph::reasoner::{grad_check_model, Mode, ModelConfig, ReasonerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, d: usize, rng: &mut ChaCha8Rng) -> EvidenceGraph {
    let nodes = (0..n)
        .map(|i| GraphNode {
            id: ElementId::sentence("Page", i),
            sequence: format!("node {i}"),
            features: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            gold: Some(rng.gen_bool(0.5)),
        })
        .collect();
    EvidenceGraph::new(0, nodes, Some(Label::ALL[rng.gen_range(0..3)])).unwrap()
}

fn config(mode: Mode) -> ModelConfig {
    ModelConfig {
        mode,
        input_dim: 8,
        hidden: 6,
        head_hidden: 5,
        evidence_hidden: 4,
        ..ModelConfig::default()
    }
}

#[test]
fn gradients_match_finite_differences() {
    for mode in [Mode::Stl, Mode::Mtl] {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let model = ReasonerModel::new(config(mode), seed);
            let g = random_graph(5, 8, &mut rng);
            let err = grad_check_model(&model, &g, 1e-5);
            println!("{mode:?} seed {seed}: {err:e}");
            assert!(err <= 1e-4, "{mode:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn gradients_hold_up_to_eight_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [1, 2, 8] {
        for mode in [Mode::Stl, Mode::Mtl] {
            let model = ReasonerModel::new(config(mode), n as u64);
            let g = random_graph(n, 8, &mut rng);
            assert!(grad_check_model(&model, &g, 1e-5) <= 1e-4);
        }
    }
}

#[test]
fn distributions_normalized_and_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let mode = if trial % 2 == 0 { Mode::Stl } else { Mode::Mtl };
        let model = ReasonerModel::new(config(mode), trial);
        let n = rng.gen_range(1..=8);
        let g = random_graph(n, 8, &mut rng);
        let out = model.predict_veracity(&g).unwrap();
        assert!((out.distribution.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!((out.gate_weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!((out.attention_mass.iter().sum::<f64>() - 1.0).abs() <= 1e-9);

        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let permuted = model.predict_veracity(&g.permuted(&order)).unwrap();
        for k in 0..3 {
            assert!((permuted.distribution[k] - out.distribution[k]).abs() <= 1e-9);
        }
        for (k, &old) in order.iter().enumerate() {
            assert!((permuted.gate_weights[k] - out.gate_weights[old]).abs() <= 1e-9);
        }
    }
}

#[test]
fn joint_loss_is_affine_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = ReasonerModel::new(config(Mode::Mtl), 4);
    let graphs: Vec<EvidenceGraph> = (0..3).map(|_| random_graph(5, 8, &mut rng)).collect();
    let batch: Vec<&EvidenceGraph> = graphs.iter().collect();
    let at = |l: f64| model.loss_mtl_with(&batch, l).unwrap();
    let (l0, l5, l1) = (at(0.0), at(0.5), at(1.0));
    assert_eq!(l0.joint, l0.label);
    assert!((l5.joint - (l0.joint + 0.5 * l0.evidence)).abs() <= 1e-12);
    assert!((l1.joint - (l0.joint + l0.evidence)).abs() <= 1e-12);
    assert!((l1.joint - l5.joint - 0.5 * l5.evidence).abs() <= 1e-12);
}
