//! Evidence scoring and node selection, plus NEI augmentation.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClaimRecord, ElementId, ElementKind, Label, PageStore};
use crate::embedding::{cosine, EmbeddingError, EmbeddingProvider};
use crate::linearizer::linearize;

/// Test-time cap on tabular evidence (cells) per claim.
pub const MAX_CELLS: usize = 25;
/// Test-time cap on sentences and captions per claim.
pub const MAX_SENTENCES: usize = 5;
/// Test-time node count for the multi-task model.
pub const MTL_NODES: usize = 35;
/// Extra candidates added to single-item gold sets at train time.
pub const SINGLE_GOLD_EXTRA: usize = 4;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("no gold evidence and no ranked candidates: the graph would be empty")]
    EmptyNodeSet,
    #[error("need {needed} {strategy} examples but no source claim qualifies")]
    InsufficientSources { strategy: &'static str, needed: usize },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

/// A candidate element with its raw and linearized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceItem {
    pub id: ElementId,
    pub text: String,
    pub sequence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvidence {
    pub id: ElementId,
    pub sequence: String,
    pub score: f64,
}

/// Every element of the given pages, linearized, in canonical order.
/// Unknown pages are skipped.
pub fn collect_items<'a>(
    store: &PageStore,
    pages: impl IntoIterator<Item = &'a str>,
) -> Vec<EvidenceItem> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for page_id in pages {
        if !seen.insert(page_id) {
            continue;
        }
        let Some(page) = store.page(page_id) else {
            continue;
        };
        for id in page.element_ids() {
            let el = store.resolve(&id).expect("enumerated ids resolve");
            let text = el.text.to_string();
            let sequence = linearize(store, &id).expect("enumerated ids resolve");
            out.push(EvidenceItem { id, text, sequence });
        }
    }
    out
}

/// Sort descending by score, ties by canonical id.
pub fn sort_ranked(items: &mut [ScoredEvidence]) {
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
}

/// Mean cosine between claim and evidence sequence over all providers.
/// Items with empty raw text are dropped.
pub fn score_evidence(
    providers: &[&dyn EmbeddingProvider],
    claim: &str,
    items: &[EvidenceItem],
) -> Result<Vec<ScoredEvidence>, EvidenceError> {
    if providers.is_empty() {
        return Ok(Vec::new());
    }
    let claim_vecs = providers
        .iter()
        .map(|p| p.encode_text(claim))
        .collect::<Result<Vec<_>, _>>()?;
    let mut scored = items
        .par_iter()
        .filter(|it| !it.text.trim().is_empty())
        .map(|it| {
            let mut total = 0.0;
            for (p, c) in providers.iter().zip(&claim_vecs) {
                total += cosine(c, &p.encode_text(&it.sequence)?)?;
            }
            Ok(ScoredEvidence {
                id: it.id.clone(),
                sequence: it.sequence.clone(),
                score: total / providers.len() as f64,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    sort_ranked(&mut scored);
    Ok(scored)
}

/// Single-task test-time nodes: drop header cells and list items, then keep
/// the best [`MAX_CELLS`] cells and [`MAX_SENTENCES`] sentences/captions.
/// Output keeps ranked order.
pub fn select_test_stl(ranked: &[ScoredEvidence]) -> Vec<ScoredEvidence> {
    select_test_stl_capped(ranked, MAX_CELLS, MAX_SENTENCES)
}

/// [`select_test_stl`] with explicit caps.
pub fn select_test_stl_capped(
    ranked: &[ScoredEvidence],
    max_cells: usize,
    max_sentences: usize,
) -> Vec<ScoredEvidence> {
    let (mut cells, mut texts) = (0, 0);
    ranked
        .iter()
        .filter(|e| match e.id.kind() {
            ElementKind::Cell if cells < max_cells => {
                cells += 1;
                true
            }
            ElementKind::Sentence | ElementKind::TableCaption if texts < max_sentences => {
                texts += 1;
                true
            }
            _ => false,
        })
        .cloned()
        .collect()
}

/// Multi-task test-time nodes: the top [`MTL_NODES`] of any kind.
pub fn select_test_mtl(ranked: &[ScoredEvidence]) -> Vec<ScoredEvidence> {
    select_test_mtl_capped(ranked, MTL_NODES)
}

/// [`select_test_mtl`] with an explicit node count.
pub fn select_test_mtl_capped(ranked: &[ScoredEvidence], nodes: usize) -> Vec<ScoredEvidence> {
    ranked.iter().take(nodes).cloned().collect()
}

/// Training nodes: all gold items, plus the top four candidates when the
/// gold set has at most one item, or the top `|gold|` candidates otherwise.
pub fn select_train_nodes(
    gold: &[ElementId],
    ranked: &[ScoredEvidence],
) -> Result<Vec<ElementId>, EvidenceError> {
    let mut out: Vec<ElementId> = Vec::new();
    for g in gold {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    let extra = if out.len() <= 1 {
        SINGLE_GOLD_EXTRA
    } else {
        out.len()
    };
    for e in ranked.iter().take(extra) {
        if !out.contains(&e.id) {
            out.push(e.id.clone());
        }
    }
    if out.is_empty() {
        return Err(EvidenceError::EmptyNodeSet);
    }
    Ok(out)
}

/// Surface-form substitutions used for claim mutation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityLexicon {
    pub entries: Vec<(String, String)>,
}

const DEFAULT_LEXICON: &str = include_str!("../data/entity_lexicon_v1.tsv");

impl EntityLexicon {
    /// Tab-separated `surface<TAB>replacement` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EvidenceError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (from, to) = line.split_once('\t').ok_or(EvidenceError::Lexicon {
                line: n + 1,
                message: "expected two tab-separated fields".into(),
            })?;
            if from.is_empty() || to.is_empty() || from == to {
                return Err(EvidenceError::Lexicon {
                    line: n + 1,
                    message: "empty or identity substitution".into(),
                });
            }
            entries.push((from.to_string(), to.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well formed")
    }

    /// Whole-word occurrences as (entry index, byte offset), by offset.
    fn occurrences(&self, claim: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (e, (from, _)) in self.entries.iter().enumerate() {
            for (pos, _) in claim.match_indices(from.as_str()) {
                let before = claim[..pos].chars().next_back();
                let after = claim[pos + from.len()..].chars().next();
                let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
                if boundary(before) && boundary(after) {
                    out.push((e, pos));
                }
            }
        }
        out.sort_by_key(|&(e, pos)| (pos, e));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationConfig {
    pub n_reduction: usize,
    pub n_mutation: usize,
    pub rng_seed: u64,
    pub entity_lexicon: EntityLexicon,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            n_reduction: 15_000,
            n_mutation: 5_946,
            rng_seed: 0,
            entity_lexicon: EntityLexicon::bundled(),
        }
    }
}

fn is_verdict(label: Label) -> bool {
    matches!(label, Label::Supports | Label::Refutes)
}

fn distinct(set: &[ElementId]) -> Vec<ElementId> {
    let mut out: Vec<ElementId> = Vec::new();
    for id in set {
        if !out.contains(id) {
            out.push(id.clone());
        }
    }
    out
}

/// Append `n_reduction` evidence-reduction and `n_mutation` claim-mutation
/// NEI records to `claims`. Sources are SUPPORTS/REFUTES claims sampled with
/// replacement from one seeded stream; new ids continue after the largest
/// existing id.
pub fn augment_nei(
    claims: &[ClaimRecord],
    cfg: &AugmentationConfig,
) -> Result<Vec<ClaimRecord>, EvidenceError> {
    let mut out = claims.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut next_id = claims.iter().map(|c| c.claim_id + 1).max().unwrap_or(0);

    // (claim index, evidence set with >= 2 distinct items)
    let reducible: Vec<(usize, Vec<ElementId>)> = claims
        .iter()
        .enumerate()
        .filter(|(_, c)| is_verdict(c.label))
        .flat_map(|(i, c)| {
            c.evidence_sets
                .iter()
                .map(|s| distinct(s))
                .filter(|s| s.len() >= 2)
                .map(move |s| (i, s))
        })
        .collect();
    if cfg.n_reduction > 0 && reducible.is_empty() {
        return Err(EvidenceError::InsufficientSources {
            strategy: "evidence-reduction",
            needed: cfg.n_reduction,
        });
    }
    for _ in 0..cfg.n_reduction {
        let (src, set) = &reducible[rng.gen_range(0..reducible.len())];
        let keep = rng.gen_range(1..set.len());
        let mut kept: Vec<usize> = sample(&mut rng, set.len(), keep).into_vec();
        kept.sort_unstable();
        out.push(ClaimRecord {
            claim_id: next_id,
            claim: claims[*src].claim.clone(),
            label: Label::NotEnoughInfo,
            evidence_sets: vec![kept.into_iter().map(|i| set[i].clone()).collect()],
        });
        next_id += 1;
    }

    let mutable: Vec<(usize, Vec<(usize, usize)>)> = claims
        .iter()
        .enumerate()
        .filter(|(_, c)| is_verdict(c.label))
        .map(|(i, c)| (i, cfg.entity_lexicon.occurrences(&c.claim)))
        .filter(|(_, occ)| !occ.is_empty())
        .collect();
    if cfg.n_mutation > 0 && mutable.is_empty() {
        return Err(EvidenceError::InsufficientSources {
            strategy: "claim-mutation",
            needed: cfg.n_mutation,
        });
    }
    for _ in 0..cfg.n_mutation {
        let (src, occ) = &mutable[rng.gen_range(0..mutable.len())];
        let (entry, pos) = occ[rng.gen_range(0..occ.len())];
        let (from, to) = &cfg.entity_lexicon.entries[entry];
        let text = &claims[*src].claim;
        let mutated = format!("{}{}{}", &text[..pos], to, &text[pos + from.len()..]);
        out.push(ClaimRecord {
            claim_id: next_id,
            claim: mutated,
            label: Label::NotEnoughInfo,
            evidence_sets: claims[*src].evidence_sets.clone(),
        });
        next_id += 1;
    }
    Ok(out)
}
