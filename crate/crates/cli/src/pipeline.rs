//! Pipeline stages. Every stage reads its inputs from the configured input
//! files or from artifacts in the output directory and writes its own
//! artifacts there, so a stage rerun from disk matches the full run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use evigraph::corpus::{ingest_claims, ingest_corpus, ClaimRecord, CorpusError, ElementId, Label, PageStore};
use evigraph::corpus::corpus_census;
use evigraph::embedding::{load_precomputed, EmbeddingProvider, HashProvider};
use evigraph::evidence::{
    augment_nei, collect_items, score_evidence, select_test_mtl_capped, select_test_stl_capped, select_train_nodes,
    AugmentationConfig, EntityLexicon, EvidenceError,
};
use evigraph::graph::{build_graph, EvidenceGraph};
use evigraph::linearizer::linearize;
use evigraph::metrics::{enforce_limits, evaluate as score, MetricsReport, Prediction};
use evigraph::reasoner::{
    load_checkpoint, save_checkpoint, train as fit, write_log_csv, Mode, ReasonerError, ReasonerModel,
    EVIDENCE_THRESHOLD,
};
use evigraph::retrieval::{build_index, candidate_pages, rank_pages, LocalTitleSearch};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ProviderSpec};
use crate::error::PipelineError;
use crate::explain::{explain_graph, ExplainReport};

pub const CENSUS: &str = "census.json";
pub const LINEARIZED: &str = "linearized.jsonl";
pub const TRAIN_CLAIMS: &str = "train_claims.jsonl";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const METRICS: &str = "metrics.json";

/// Number of co-occurring pairs kept in the census.
const CENSUS_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn retrieval(self) -> String {
        format!("retrieval_{}.jsonl", self.as_str())
    }

    pub fn selection(self) -> String {
        format!("selection_{}.jsonl", self.as_str())
    }

    pub fn graphs(self) -> String {
        format!("graphs_{}.jsonl", self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedRecord {
    pub id: ElementId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPage {
    pub page: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub id: u64,
    pub pages: Vec<RankedPage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedNode {
    pub id: ElementId,
    pub sequence: String,
    /// Mean cosine to the claim; absent for gold items outside the ranking.
    #[serde(default)]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub id: u64,
    pub nodes: Vec<SelectedNode>,
}

/// Outputs of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub predictions: Vec<Prediction>,
    pub metrics: MetricsReport,
    pub selected_step: u64,
}

fn artifact(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn open(path: &Path, stage: &'static str) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::config(stage, format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path, stage: &'static str) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::runtime(stage, format!("cannot write {}: {e}", path.display())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<Vec<T>, PipelineError> {
    let mut out = Vec::new();
    for (n, line) in open(path, stage)?.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| PipelineError::data(stage, format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T], stage: &'static str) -> Result<(), PipelineError> {
    let mut w = create(path, stage)?;
    let io = |e: std::io::Error| PipelineError::runtime(stage, format!("{}: {e}", path.display()));
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PipelineError::runtime(stage, e))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> Result<(), PipelineError> {
    let mut w = create(path, stage)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PipelineError::runtime(stage, e))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))
}

fn corpus_error(stage: &'static str, path: &Path, e: CorpusError) -> PipelineError {
    PipelineError::data(stage, format!("{}: {e}", path.display()))
}

pub fn load_store(cfg: &PipelineConfig, stage: &'static str) -> Result<PageStore, PipelineError> {
    ingest_corpus(open(&cfg.corpus, stage)?).map_err(|e| corpus_error(stage, &cfg.corpus, e))
}

pub fn load_claims(path: &Path, store: &PageStore, stage: &'static str) -> Result<Vec<ClaimRecord>, PipelineError> {
    ingest_claims(open(path, stage)?, store).map_err(|e| corpus_error(stage, path, e))
}

fn split_claims(
    cfg: &PipelineConfig,
    store: &PageStore,
    split: Split,
    stage: &'static str,
) -> Result<Vec<ClaimRecord>, PipelineError> {
    match split {
        Split::Train => load_claims(&artifact(cfg, TRAIN_CLAIMS), store, stage),
        Split::Test => load_claims(cfg.test_claims_path(), store, stage),
    }
}

/// The pair provider behind node features and the scorers behind evidence
/// ranking.
pub struct Providers {
    pub pair: Box<dyn EmbeddingProvider>,
    pub scorers: Vec<Box<dyn EmbeddingProvider>>,
}

impl Providers {
    pub fn from_config(cfg: &PipelineConfig, stage: &'static str) -> Result<Self, PipelineError> {
        match &cfg.provider {
            ProviderSpec::Hash {
                dim,
                pair_seed,
                score_seeds,
            } => Ok(Self {
                pair: Box::new(HashProvider::new(*dim, *pair_seed)),
                scorers: score_seeds
                    .iter()
                    .map(|&s| Box::new(HashProvider::new(*dim, s)) as Box<dyn EmbeddingProvider>)
                    .collect(),
            }),
            ProviderSpec::Vectors {
                dim,
                pair_file,
                score_files,
            } => {
                let load = |p: &PathBuf| {
                    load_precomputed(p, Some(*dim))
                        .map(|v| Box::new(v) as Box<dyn EmbeddingProvider>)
                        .map_err(|e| PipelineError::data(stage, format!("{}: {e}", p.display())))
                };
                Ok(Self {
                    pair: load(pair_file)?,
                    scorers: score_files.iter().map(load).collect::<Result<_, _>>()?,
                })
            }
        }
    }

    fn scorer_refs(&self) -> Vec<&dyn EmbeddingProvider> {
        self.scorers.iter().map(|p| p.as_ref()).collect()
    }
}

/// Validate the corpus and claim files and write the evidence-type census.
pub fn ingest(cfg: &PipelineConfig) -> Result<evigraph::corpus::CensusReport, PipelineError> {
    const STAGE: &str = "ingest";
    let store = load_store(cfg, STAGE)?;
    let claims = load_claims(&cfg.claims, &store, STAGE)?;
    if cfg.test_claims.is_some() {
        load_claims(cfg.test_claims_path(), &store, STAGE)?;
    }
    let census = corpus_census(&store, &claims, CENSUS_PAIRS);
    write_json(&artifact(cfg, CENSUS), &census, STAGE)?;
    Ok(census)
}

/// Every element of one page, or of the whole store, with its sequence.
pub fn linearize_records(store: &PageStore, page: Option<&str>) -> Result<Vec<LinearizedRecord>, String> {
    let pages: Vec<_> = match page {
        Some(p) => vec![store.page(p).ok_or_else(|| format!("unknown page {p:?}"))?],
        None => store.pages().iter().collect(),
    };
    Ok(pages
        .into_iter()
        .flat_map(|p| evigraph::linearizer::linearize_page(store, p))
        .map(|(id, text)| LinearizedRecord { id, text })
        .collect())
}

pub fn linearize_stage(cfg: &PipelineConfig) -> Result<usize, PipelineError> {
    const STAGE: &str = "linearize";
    let store = load_store(cfg, STAGE)?;
    let records = linearize_records(&store, None).map_err(|e| PipelineError::data(STAGE, e))?;
    write_jsonl(&artifact(cfg, LINEARIZED), &records, STAGE)?;
    Ok(records.len())
}

/// Training claims plus the configured NEI augmentations.
pub fn augment(cfg: &PipelineConfig) -> Result<Vec<ClaimRecord>, PipelineError> {
    const STAGE: &str = "augment";
    let store = load_store(cfg, STAGE)?;
    let claims = load_claims(&cfg.claims, &store, STAGE)?;
    let entity_lexicon = match &cfg.augmentation.lexicon {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::config(STAGE, format!("{}: {e}", p.display())))?;
            EntityLexicon::parse(&text).map_err(|e| PipelineError::data(STAGE, format!("{}: {e}", p.display())))?
        }
        None => EntityLexicon::bundled(),
    };
    let aug = AugmentationConfig {
        n_reduction: cfg.augmentation.reduction,
        n_mutation: cfg.augmentation.mutation,
        rng_seed: cfg.augmentation.seed,
        entity_lexicon,
    };
    let out = augment_nei(&claims, &aug).map_err(|e| PipelineError::data(STAGE, e))?;
    write_jsonl(&artifact(cfg, TRAIN_CLAIMS), &out, STAGE)?;
    Ok(out)
}

/// Candidate pages per claim, ranked by TF-IDF cosine, top `retrieval_k`.
pub fn retrieve(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "retrieve";
    let store = load_store(cfg, STAGE)?;
    let index = build_index(&store);
    let client = LocalTitleSearch::new(&store);
    for split in Split::ALL {
        let claims = split_claims(cfg, &store, split, STAGE)?;
        let records = claims
            .par_iter()
            .map(|c| {
                let cands = candidate_pages(&index, &client, &c.claim);
                let ranked = rank_pages(&index, &c.claim, &cands.pages, cfg.retrieval_k)
                    .map_err(|e| PipelineError::config(STAGE, e))?;
                Ok(RetrievalRecord {
                    id: c.claim_id,
                    pages: ranked.into_iter().map(|(page, score)| RankedPage { page, score }).collect(),
                    client_error: cands.client_error,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        write_jsonl(&artifact(cfg, &split.retrieval()), &records, STAGE)?;
    }
    Ok(())
}

fn by_id<'a, T>(
    claims: &'a [ClaimRecord],
    records: &'a [T],
    id: impl Fn(&T) -> u64,
    stage: &'static str,
    what: &str,
) -> Result<Vec<(&'a ClaimRecord, &'a T)>, PipelineError> {
    if claims.len() != records.len() {
        return Err(PipelineError::data(
            stage,
            format!("{what} has {} records for {} claims; rerun the earlier stages", records.len(), claims.len()),
        ));
    }
    claims
        .iter()
        .zip(records)
        .map(|(c, r)| {
            if c.claim_id == id(r) {
                Ok((c, r))
            } else {
                Err(PipelineError::data(
                    stage,
                    format!("{what}: record for claim {} where claim {} was expected", id(r), c.claim_id),
                ))
            }
        })
        .collect()
}

/// Score evidence from the retrieved pages and pick graph nodes: the
/// train-time rule-set for training claims, the mode's test-time caps
/// otherwise. A training claim with no possible node gets an empty record.
pub fn select(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "select";
    let store = load_store(cfg, STAGE)?;
    let providers = Providers::from_config(cfg, STAGE)?;
    let scorers = providers.scorer_refs();
    for split in Split::ALL {
        let claims = split_claims(cfg, &store, split, STAGE)?;
        let retrieved: Vec<RetrievalRecord> = read_jsonl(&artifact(cfg, &split.retrieval()), STAGE)?;
        let pairs = by_id(&claims, &retrieved, |r| r.id, STAGE, "retrieval")?;
        let records = pairs
            .par_iter()
            .map(|(claim, r)| {
                let items = collect_items(&store, r.pages.iter().map(|p| p.page.as_str()));
                let ranked = score_evidence(&scorers, &claim.claim, &items).map_err(|e| PipelineError::data(STAGE, e))?;
                let nodes = match split {
                    Split::Train => match select_train_nodes(&claim.evidence_union(), &ranked) {
                        Ok(ids) => ids
                            .into_iter()
                            .map(|id| match ranked.iter().find(|e| e.id == id) {
                                Some(e) => Ok(SelectedNode {
                                    id,
                                    sequence: e.sequence.clone(),
                                    score: Some(e.score),
                                }),
                                None => {
                                    let sequence = linearize(&store, &id).map_err(|e| PipelineError::data(STAGE, e))?;
                                    Ok(SelectedNode { id, sequence, score: None })
                                }
                            })
                            .collect::<Result<Vec<_>, PipelineError>>()?,
                        Err(EvidenceError::EmptyNodeSet) => Vec::new(),
                        Err(e) => return Err(PipelineError::data(STAGE, e)),
                    },
                    Split::Test => {
                        let chosen = match cfg.mode {
                            Mode::Stl => select_test_stl_capped(&ranked, cfg.max_cells, cfg.max_sentences),
                            Mode::Mtl => select_test_mtl_capped(&ranked, cfg.mtl_nodes),
                        };
                        chosen
                            .into_iter()
                            .map(|e| SelectedNode {
                                id: e.id,
                                sequence: e.sequence,
                                score: Some(e.score),
                            })
                            .collect()
                    }
                };
                Ok(SelectionRecord { id: claim.claim_id, nodes })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        write_jsonl(&artifact(cfg, &split.selection()), &records, STAGE)?;
    }
    Ok(())
}

/// Encode selected nodes as claim–evidence pairs. Claims without nodes get
/// no graph.
pub fn build_graphs(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "build-graphs";
    let store = load_store(cfg, STAGE)?;
    let providers = Providers::from_config(cfg, STAGE)?;
    for split in Split::ALL {
        let claims = split_claims(cfg, &store, split, STAGE)?;
        let selected: Vec<SelectionRecord> = read_jsonl(&artifact(cfg, &split.selection()), STAGE)?;
        let pairs = by_id(&claims, &selected, |r| r.id, STAGE, "selection")?;
        let graphs = pairs
            .par_iter()
            .filter(|(_, s)| !s.nodes.is_empty())
            .map(|(claim, s)| {
                let nodes: Vec<(ElementId, String)> =
                    s.nodes.iter().map(|n| (n.id.clone(), n.sequence.clone())).collect();
                let gold = claim.evidence_union();
                build_graph(
                    claim.claim_id,
                    &claim.claim,
                    &nodes,
                    providers.pair.as_ref(),
                    Some(&gold),
                    Some(claim.label),
                )
                .map_err(|e| PipelineError::data(STAGE, format!("claim {}: {e}", claim.claim_id)))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        write_jsonl(&artifact(cfg, &split.graphs()), &graphs, STAGE)?;
    }
    Ok(())
}

fn reasoner_error(stage: &'static str, e: ReasonerError) -> PipelineError {
    match e {
        ReasonerError::Config(_) => PipelineError::config(stage, e),
        ReasonerError::Dimension { .. }
        | ReasonerError::EmptyGraph { .. }
        | ReasonerError::EmptyDataset
        | ReasonerError::Unlabeled { .. }
        | ReasonerError::MissingGold { .. }
        | ReasonerError::Checkpoint(_) => PipelineError::data(stage, e),
        _ => PipelineError::runtime(stage, e),
    }
}

/// Train on the training graphs; writes the selected checkpoint and the
/// step log. Returns the selected step.
pub fn train(cfg: &PipelineConfig) -> Result<u64, PipelineError> {
    const STAGE: &str = "train";
    let graphs: Vec<EvidenceGraph> = read_jsonl(&artifact(cfg, &Split::Train.graphs()), STAGE)?;
    let model = ReasonerModel::new(cfg.train.model_config(), cfg.train.rng_seed);
    let outcome = fit(model, &graphs, &cfg.train).map_err(|e| reasoner_error(STAGE, e))?;
    let step = outcome.selected_step as u64;
    save_checkpoint(&outcome.model, step, &artifact(cfg, CHECKPOINT)).map_err(|e| reasoner_error(STAGE, e))?;
    let mut log = create(&artifact(cfg, TRAIN_LOG), STAGE)?;
    write_log_csv(&outcome.log, &mut log)
        .and_then(|_| log.flush())
        .map_err(|e| PipelineError::runtime(STAGE, e))?;
    Ok(step)
}

fn load_model(cfg: &PipelineConfig, stage: &'static str) -> Result<(ReasonerModel, u64), PipelineError> {
    let path = artifact(cfg, CHECKPOINT);
    if !path.is_file() {
        return Err(PipelineError::config(stage, format!("no checkpoint at {}; run train first", path.display())));
    }
    let (model, step) = load_checkpoint(&path).map_err(|e| reasoner_error(stage, e))?;
    if model.mode() != cfg.mode {
        return Err(PipelineError::config(
            stage,
            format!("checkpoint is {} but the config asks for {}", model.mode().as_str(), cfg.mode.as_str()),
        ));
    }
    Ok((model, step))
}

/// Label and evidence for one graph. Single-task evidence is the selected
/// node set; multi-task evidence is every node at or above the threshold.
/// Both are capped to the scorer's limits.
pub fn predict_graph(model: &ReasonerModel, g: &EvidenceGraph) -> Result<Prediction, ReasonerError> {
    let label = model.predict_veracity(g)?.label();
    let scored: Vec<(ElementId, f64)> = match model.mode() {
        // nodes are in ranked order; keep it
        Mode::Stl => g.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), -(i as f64))).collect(),
        Mode::Mtl => g
            .nodes
            .iter()
            .zip(model.predict_evidence_nodes(g)?)
            .filter(|(_, p)| *p >= EVIDENCE_THRESHOLD)
            .map(|(n, p)| (n.id.clone(), p))
            .collect(),
    };
    Ok(Prediction {
        claim_id: g.claim_id,
        label,
        evidence: enforce_limits(&scored),
    })
}

/// One prediction per test claim, ordered by claim id. A claim with no
/// graph is predicted NOT ENOUGH INFO with no evidence.
pub fn predict(cfg: &PipelineConfig) -> Result<Vec<Prediction>, PipelineError> {
    const STAGE: &str = "predict";
    let store = load_store(cfg, STAGE)?;
    let (model, _) = load_model(cfg, STAGE)?;
    let claims = split_claims(cfg, &store, Split::Test, STAGE)?;
    let graphs: Vec<EvidenceGraph> = read_jsonl(&artifact(cfg, &Split::Test.graphs()), STAGE)?;
    let mut ids: Vec<u64> = claims.iter().map(|c| c.claim_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut preds = ids
        .par_iter()
        .map(|&id| match graphs.iter().find(|g| g.claim_id == id) {
            Some(g) => predict_graph(&model, g).map_err(|e| reasoner_error(STAGE, e)),
            None => Ok(Prediction {
                claim_id: id,
                label: Label::NotEnoughInfo,
                evidence: Vec::new(),
            }),
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    preds.sort_by_key(|p| p.claim_id);
    write_jsonl(&artifact(cfg, PREDICTIONS), &preds, STAGE)?;
    Ok(preds)
}

/// Score the predictions against the test claims.
pub fn evaluate(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    const STAGE: &str = "evaluate";
    let store = load_store(cfg, STAGE)?;
    let claims = split_claims(cfg, &store, Split::Test, STAGE)?;
    let preds: Vec<Prediction> = read_jsonl(&artifact(cfg, PREDICTIONS), STAGE)?;
    let report = score(&preds, &claims).map_err(|e| PipelineError::data(STAGE, e))?;
    write_json(&artifact(cfg, METRICS), &report, STAGE)?;
    Ok(report)
}

/// Interpretability report for one claim's graph.
pub fn explain(cfg: &PipelineConfig, claim_id: u64, split: Split) -> Result<ExplainReport, PipelineError> {
    const STAGE: &str = "explain";
    let (model, _) = load_model(cfg, STAGE)?;
    let graphs: Vec<EvidenceGraph> = read_jsonl(&artifact(cfg, &split.graphs()), STAGE)?;
    let g = graphs
        .iter()
        .find(|g| g.claim_id == claim_id)
        .ok_or_else(|| PipelineError::data(STAGE, format!("no {} graph for claim {claim_id}", split.as_str())))?;
    explain_graph(&model, g).map_err(|e| reasoner_error(STAGE, e))
}

/// All stages in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    ingest(cfg)?;
    linearize_stage(cfg)?;
    augment(cfg)?;
    retrieve(cfg)?;
    select(cfg)?;
    build_graphs(cfg)?;
    let selected_step = train(cfg)?;
    let predictions = predict(cfg)?;
    let metrics = evaluate(cfg)?;
    Ok(RunSummary {
        predictions,
        metrics,
        selected_step,
    })
}
