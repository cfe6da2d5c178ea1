use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::id::{ElementId, ElementKind};
use super::store::{ClaimRecord, PageStore};
use crate::corpus::table::TableKind;
use crate::linearizer::classify_table;

/// How often each evidence type occurs across gold evidence sets, plus the
/// most frequent co-occurring element pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub evidence_sets: usize,
    pub sentences: f64,
    pub all_tables: f64,
    pub infoboxes: f64,
    pub general_tables: f64,
    pub list_items: f64,
    /// Pairs counted inside individual evidence sets.
    pub pairs_within_sets: Vec<PairCount>,
    /// Pairs counted inside the union of a claim's evidence sets.
    pub pairs_within_claims: Vec<PairCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairCount {
    pub first: String,
    pub second: String,
    pub count: usize,
}

#[derive(Default)]
struct TypeFlags {
    sentence: bool,
    table: bool,
    infobox: bool,
    general: bool,
    item: bool,
}

/// Evidence-type prevalence and co-occurrence counts. Pairs are keyed by
/// the page-independent local form (`sentence_0`, `cell_0_2_1`) and
/// `top_pairs` bounds each pair list.
pub fn corpus_census(store: &PageStore, claims: &[ClaimRecord], top_pairs: usize) -> CensusReport {
    let mut n_sets = 0usize;
    let mut counts = [0usize; 5];
    let mut set_pairs: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut claim_pairs: BTreeMap<(String, String), usize> = BTreeMap::new();

    for claim in claims {
        for set in &claim.evidence_sets {
            n_sets += 1;
            let mut flags = TypeFlags::default();
            for id in set {
                mark(store, id, &mut flags);
            }
            for (slot, hit) in counts.iter_mut().zip([
                flags.sentence,
                flags.table,
                flags.infobox,
                flags.general,
                flags.item,
            ]) {
                *slot += usize::from(hit);
            }
            count_pairs(set.iter(), &mut set_pairs);
        }
        count_pairs(claim.evidence_union().iter(), &mut claim_pairs);
    }

    let frac = |c: usize| if n_sets == 0 { 0.0 } else { c as f64 / n_sets as f64 };
    CensusReport {
        evidence_sets: n_sets,
        sentences: frac(counts[0]),
        all_tables: frac(counts[1]),
        infoboxes: frac(counts[2]),
        general_tables: frac(counts[3]),
        list_items: frac(counts[4]),
        pairs_within_sets: top(set_pairs, top_pairs),
        pairs_within_claims: top(claim_pairs, top_pairs),
    }
}

fn mark(store: &PageStore, id: &ElementId, flags: &mut TypeFlags) {
    match id.kind() {
        ElementKind::Sentence => flags.sentence = true,
        ElementKind::Item => flags.item = true,
        ElementKind::Cell | ElementKind::HeaderCell | ElementKind::TableCaption => {
            flags.table = true;
            let table = store
                .page(id.page())
                .and_then(|p| p.tables.get(id.indices()[0]));
            match table.map(classify_table) {
                Some(TableKind::Infobox) => flags.infobox = true,
                Some(TableKind::General) => flags.general = true,
                None => {}
            }
        }
    }
}

fn count_pairs<'a>(
    ids: impl Iterator<Item = &'a ElementId>,
    into: &mut BTreeMap<(String, String), usize>,
) {
    let locals: BTreeSet<String> = ids.map(ElementId::local_form).collect();
    let locals: Vec<&String> = locals.iter().collect();
    for (i, a) in locals.iter().enumerate() {
        for b in &locals[i + 1..] {
            *into.entry(((*a).clone(), (*b).clone())).or_default() += 1;
        }
    }
}

fn top(pairs: BTreeMap<(String, String), usize>, n: usize) -> Vec<PairCount> {
    let mut v: Vec<PairCount> = pairs
        .into_iter()
        .map(|((first, second), count)| PairCount {
            first,
            second,
            count,
        })
        .collect();
    // BTreeMap order already breaks ties lexicographically; sort is stable
    v.sort_by(|a, b| b.count.cmp(&a.count));
    v.truncate(n);
    v
}
