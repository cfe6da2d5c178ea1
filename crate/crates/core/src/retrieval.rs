//! Document retrieval: query-term extraction, candidate generation from a
//! search client plus a title index, and TF-IDF cosine reranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::corpus::PageStore;
use crate::linearizer::linearize;
use crate::text::{content_tokens, is_stopword, normalize_title, tokens};

/// Pages kept per claim at test time.
pub const DEFAULT_K: usize = 7;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("recall@k over an empty claim set")]
    EmptyClaimSet,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{ranked} ranked lists for {gold} gold sets")]
    LengthMismatch { ranked: usize, gold: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("search client failed: {0}")]
pub struct SearchError(pub String);

/// Anything that turns query terms into candidate page titles.
pub trait SearchClient: Send + Sync {
    fn query(&self, terms: &[String]) -> Result<Vec<String>, SearchError>;
}

struct Word<'a> {
    text: &'a str,
    start: usize,
    /// Only whitespace separates this word from the previous one.
    joined: bool,
    sentence_initial: bool,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

fn split_words(claim: &str) -> Vec<Word<'_>> {
    let mut words = Vec::new();
    let chars: Vec<(usize, char)> = claim.char_indices().collect();
    let mut i = 0;
    let mut prev_end = 0;
    while i < chars.len() {
        if !is_word_char(chars[i].1) {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if is_word_char(c) {
                j += 1;
            } else if is_joiner(c) && j + 1 < chars.len() && is_word_char(chars[j + 1].1) {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(claim.len(), |&(b, _)| b);
        let gap = &claim[prev_end..start];
        words.push(Word {
            text: &claim[start..end],
            start,
            joined: !words.is_empty() && gap.chars().all(char::is_whitespace),
            sentence_initial: words.is_empty() || gap.contains(['.', '!', '?']),
        });
        prev_end = end;
        i = j;
    }
    words
}

fn quoted_spans(claim: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, char)> = None;
    for (i, c) in claim.char_indices() {
        match (open, c) {
            (None, '"' | '\u{201c}') => open = Some((i + c.len_utf8(), c)),
            (Some((s, '"')), '"') | (Some((s, '\u{201c}')), '\u{201d}') => {
                spans.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    spans
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

fn is_year(word: &str) -> bool {
    word.len() == 4 && word.bytes().all(|b| b.is_ascii_digit())
}

/// Entity-like spans and content words of a claim, in claim order,
/// de-duplicated: quoted spans, runs of two or more capitalized words,
/// single capitalized words not at a sentence start, four-digit years, and
/// the remaining non-stopword words.
pub fn extract_query_terms(claim: &str) -> Vec<String> {
    let words = split_words(claim);
    let quotes = quoted_spans(claim);
    let mut terms: Vec<String> = Vec::new();
    let mut push = |t: String| {
        if !t.is_empty() && !terms.contains(&t) {
            terms.push(t);
        }
    };

    let quote_of = |pos: usize| quotes.iter().position(|&(s, e)| pos >= s && pos < e);
    let mut emitted_quotes = vec![false; quotes.len()];
    let mut i = 0;
    while i < words.len() {
        let w = &words[i];
        if let Some(q) = quote_of(w.start) {
            if !emitted_quotes[q] {
                emitted_quotes[q] = true;
                let (s, e) = quotes[q];
                push(claim[s..e].trim().to_string());
            }
            i += 1;
            continue;
        }
        if is_year(w.text) {
            push(w.text.to_string());
            i += 1;
            continue;
        }
        if is_capitalized(w.text) {
            let mut j = i + 1;
            while j < words.len()
                && words[j].joined
                && is_capitalized(words[j].text)
                && quote_of(words[j].start).is_none()
            {
                j += 1;
            }
            if j - i >= 2 {
                let span: Vec<&str> = words[i..j].iter().map(|w| w.text).collect();
                push(span.join(" "));
                i = j;
                continue;
            }
            if !w.sentence_initial {
                push(w.text.to_string());
                i += 1;
                continue;
            }
        }
        if !is_stopword(w.text) {
            push(w.text.to_string());
        }
        i += 1;
    }
    terms
}

type Sparse = Vec<(usize, f64)>;

/// TF-IDF index over whole pages plus a normalized-title lookup.
#[derive(Debug, Clone, Default)]
pub struct DocIndex {
    page_ids: Vec<String>,
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    doc_vectors: Vec<Sparse>,
    title_index: HashMap<String, String>,
    position: HashMap<String, usize>,
}

impl DocIndex {
    pub fn len(&self) -> usize {
        self.page_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.page_ids.is_empty()
    }

    pub fn page_ids(&self) -> &[String] {
        &self.page_ids
    }

    /// Dimension of a term, if indexed.
    pub fn term_dim(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_dim(term).map(|d| self.idf[d])
    }

    /// Sparse document vector, sorted by dimension.
    pub fn doc_vector(&self, page_id: &str) -> Option<&[(usize, f64)]> {
        self.position
            .get(page_id)
            .map(|&i| self.doc_vectors[i].as_slice())
    }

    pub fn title_lookup(&self, term: &str) -> Option<&str> {
        self.title_index
            .get(&normalize_title(term))
            .map(String::as_str)
    }

    /// TF-IDF vector of free text against this index; unknown terms drop out.
    pub fn query_vector(&self, text: &str) -> Sparse {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in content_tokens(text) {
            if let Some(&d) = self.vocabulary.get(&t) {
                *counts.entry(d).or_default() += 1.0;
            }
        }
        counts
            .into_iter()
            .map(|(d, tf)| (d, tf * self.idf[d]))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }
}

/// Text indexed for a page: raw sentences and captions, linearized cells
/// and list items.
pub fn page_text(store: &PageStore, page_id: &str) -> String {
    let Some(page) = store.page(page_id) else {
        return String::new();
    };
    let mut parts: Vec<String> = page.sentences.clone();
    for table in &page.tables {
        if let Some(c) = &table.caption {
            parts.push(c.clone());
        }
    }
    for id in page.element_ids() {
        if id.kind().is_tabular() {
            parts.push(linearize(store, &id).expect("enumerated ids resolve"));
        }
    }
    parts.join("\n")
}

pub fn build_index(store: &PageStore) -> DocIndex {
    let docs: Vec<Vec<String>> = store
        .pages()
        .iter()
        .map(|p| content_tokens(&page_text(store, &p.page_id)))
        .collect();

    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &docs {
        let uniq: BTreeSet<&String> = doc.iter().collect();
        for t in uniq {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let vocabulary: BTreeMap<String, usize> =
        df.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let idf: Vec<f64> = df.values().map(|&d| (n / d as f64).ln()).collect();

    let doc_vectors = docs
        .iter()
        .map(|doc| {
            let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
            for t in doc {
                *tf.entry(vocabulary[t]).or_default() += 1.0;
            }
            tf.into_iter().map(|(d, c)| (d, c * idf[d])).collect()
        })
        .collect();

    let page_ids: Vec<String> = store.pages().iter().map(|p| p.page_id.clone()).collect();
    let mut title_index = HashMap::new();
    for id in &page_ids {
        // first page wins when two titles normalize identically
        title_index
            .entry(normalize_title(id))
            .or_insert_with(|| id.clone());
    }
    let position = page_ids
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect();
    DocIndex {
        page_ids,
        vocabulary,
        idf,
        doc_vectors,
        title_index,
        position,
    }
}

/// Cosine of two sparse vectors sorted by dimension.
pub fn sparse_cosine(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let norm = |v: &[(usize, f64)]| v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (na * nb)).min(1.0)
}

/// Title search over the local store. A term matches a title when its
/// normalized tokens occur contiguously in the normalized title.
#[derive(Debug, Clone)]
pub struct LocalTitleSearch {
    titles: Vec<(String, Vec<String>)>,
    pub max_hits_per_term: usize,
}

impl LocalTitleSearch {
    pub fn new(store: &PageStore) -> Self {
        let mut titles: Vec<(String, Vec<String>)> = store
            .pages()
            .iter()
            .map(|p| (p.page_id.clone(), tokens(&p.page_id)))
            .collect();
        titles.sort();
        Self {
            titles,
            max_hits_per_term: 10,
        }
    }
}

impl SearchClient for LocalTitleSearch {
    fn query(&self, terms: &[String]) -> Result<Vec<String>, SearchError> {
        let mut out = Vec::new();
        for term in terms {
            let needle = tokens(term);
            if needle.is_empty() || needle.iter().all(|t| is_stopword(t)) {
                continue;
            }
            let hits = self
                .titles
                .iter()
                .filter(|(_, toks)| toks.windows(needle.len()).any(|w| w == needle.as_slice()))
                .take(self.max_hits_per_term);
            for (title, _) in hits {
                if !out.contains(title) {
                    out.push(title.clone());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub pages: BTreeSet<String>,
    /// Set when the search client failed and only title-index hits were used.
    pub client_error: Option<String>,
}

/// Union of search-client results that exist in the index and direct
/// title-index hits for the claim's query terms.
pub fn candidate_pages(index: &DocIndex, client: &dyn SearchClient, claim: &str) -> Candidates {
    let terms = extract_query_terms(claim);
    let mut out = Candidates::default();
    match client.query(&terms) {
        Ok(titles) => {
            out.pages.extend(
                titles
                    .into_iter()
                    .filter(|t| index.position.contains_key(t)),
            );
        }
        Err(e) => out.client_error = Some(e.0),
    }
    for t in &terms {
        if let Some(page) = index.title_lookup(t) {
            out.pages.insert(page.to_string());
        }
    }
    out
}

/// Top `k` candidates by TF-IDF cosine to the claim, ties by page id.
pub fn rank_pages<'a>(
    index: &DocIndex,
    claim: &str,
    candidates: impl IntoIterator<Item = &'a String>,
    k: usize,
) -> Result<Vec<(String, f64)>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let q = index.query_vector(claim);
    let uniq: BTreeSet<&String> = candidates.into_iter().collect();
    let mut scored: Vec<(String, f64)> = uniq
        .into_iter()
        .filter_map(|p| {
            index
                .doc_vector(p)
                .map(|d| (p.clone(), sparse_cosine(&q, d)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Fraction of claims whose gold pages all appear in the first `k` ranked
/// pages. A claim without gold pages counts as covered.
pub fn recall_at_k(
    ranked: &[Vec<String>],
    gold: &[Vec<String>],
    k: usize,
) -> Result<f64, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if ranked.len() != gold.len() {
        return Err(RetrievalError::LengthMismatch {
            ranked: ranked.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(RetrievalError::EmptyClaimSet);
    }
    let hits = ranked
        .iter()
        .zip(gold)
        .filter(|(r, g)| {
            let top = &r[..r.len().min(k)];
            g.iter().all(|p| top.contains(p))
        })
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Page, PageRecord};

    fn store(pages: &[(&str, &str)]) -> PageStore {
        PageStore::from_pages(pages.iter().map(|(id, text)| {
            Page::from_record(PageRecord {
                page_id: id.to_string(),
                sentences: vec![text.to_string()],
                tables: vec![],
                lists: vec![],
            })
            .unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn terms_for_simple_claim() {
        assert_eq!(
            extract_query_terms("Barbora Krejčíková plays tennis."),
            ["Barbora Krejčíková", "plays", "tennis"]
        );
        assert!(extract_query_terms("").is_empty());
    }

    #[test]
    fn terms_for_sky_blue_claim() {
        let t = extract_query_terms(
            "2014 Sky Blue FC season number 18 Lindsi Cutshall (born October 18, 1990) played the FW position.",
        );
        for want in ["2014", "Sky Blue FC", "Lindsi Cutshall", "1990", "October", "FW"] {
            assert!(t.contains(&want.to_string()), "{want} missing from {t:?}");
        }
        assert!(!t.contains(&"the".to_string()));
    }

    #[test]
    fn quoted_spans_and_sentence_starts() {
        let t = extract_query_terms("In 2019, Scomadi released \"the big one\" again.");
        assert_eq!(t, ["2019", "Scomadi", "released", "the big one"]);
        // a lone capitalized first word is an ordinary content word
        assert_eq!(extract_query_terms("Tennis is fun"), ["Tennis", "fun"]);
    }

    #[test]
    fn empty_index() {
        let idx = build_index(&PageStore::new());
        assert!(idx.is_empty());
    }

    #[test]
    fn orthogonal_one_term_pages() {
        let idx = build_index(&store(&[("A", "apple"), ("B", "banana")]));
        let a = idx.doc_vector("A").unwrap();
        let b = idx.doc_vector("B").unwrap();
        assert_eq!(sparse_cosine(a, b), 0.0);
    }

    #[test]
    fn weights_match_hand_tfidf() {
        // docs: "x x y", "y z", "z"; N = 3
        let idx = build_index(&store(&[("D1", "x x y"), ("D2", "y z"), ("D3", "z")]));
        let ln = |v: f64| v.ln();
        let w = |page: &str, term: &str| {
            let d = idx.term_dim(term).unwrap();
            idx.doc_vector(page)
                .unwrap()
                .iter()
                .find(|(k, _)| *k == d)
                .map_or(0.0, |(_, w)| *w)
        };
        assert!((w("D1", "x") - 2.0 * ln(3.0)).abs() < 1e-15);
        assert!((w("D1", "y") - ln(1.5)).abs() < 1e-15);
        assert!((w("D2", "z") - ln(1.5)).abs() < 1e-15);
        assert_eq!(w("D3", "x"), 0.0);
    }

    #[test]
    fn self_similarity_ranks_first() {
        let idx = build_index(&store(&[
            ("A", "red apples grow on trees"),
            ("B", "bananas are yellow"),
            ("C", "trees in the forest"),
        ]));
        let cands: Vec<String> = idx.page_ids().to_vec();
        let r = rank_pages(&idx, "red apples grow on trees", &cands, 7).unwrap();
        assert_eq!(r[0].0, "A");
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(r.len(), 3);
        let one = rank_pages(&idx, "zzz", &cands[1..2], 5).unwrap();
        assert_eq!(one, vec![("B".to_string(), 0.0)]);
        assert!(rank_pages(&idx, "x", &cands, 0).is_err());
    }

    struct Fixed(Result<Vec<String>, SearchError>);

    impl SearchClient for Fixed {
        fn query(&self, _: &[String]) -> Result<Vec<String>, SearchError> {
            self.0.clone()
        }
    }

    #[test]
    fn candidates_use_title_fallback_and_filter_client() {
        let idx = build_index(&store(&[("Lars Hjorth", "a person"), ("Other", "text")]));
        let c = candidate_pages(
            &idx,
            &Fixed(Ok(vec!["Not In Dump".into()])),
            "Lars Hjorth was born in Denmark.",
        );
        assert_eq!(c.pages.iter().collect::<Vec<_>>(), ["Lars Hjorth"]);
        assert!(c.client_error.is_none());

        let c = candidate_pages(&idx, &Fixed(Err(SearchError("down".into()))), "Lars Hjorth");
        assert_eq!(c.pages.len(), 1);
        assert_eq!(c.client_error.as_deref(), Some("down"));

        let c = candidate_pages(&idx, &Fixed(Ok(vec![])), "nothing matches here");
        assert!(c.pages.is_empty());
    }

    #[test]
    fn local_search_matches_title_phrases() {
        let s = store(&[
            ("Sky Blue FC", "club"),
            ("2015 Sky Blue FC season", "season"),
            ("Blue Whale", "animal"),
        ]);
        let client = LocalTitleSearch::new(&s);
        let hits = client.query(&["Sky Blue FC".to_string()]).unwrap();
        assert_eq!(hits, ["2015 Sky Blue FC season", "Sky Blue FC"]);
        assert!(client.query(&["the".to_string()]).unwrap().is_empty());
    }

    #[test]
    fn recall_examples() {
        let g = vec![vec!["A".to_string()], vec!["B".to_string()]];
        let r = vec![
            vec!["A".to_string(), "C".to_string()],
            vec!["B".to_string(), "D".to_string()],
        ];
        assert_eq!(recall_at_k(&r, &g, 1).unwrap(), 1.0);
        let miss = vec![vec!["X".to_string()], vec!["Y".to_string()]];
        assert_eq!(recall_at_k(&miss, &g, 7).unwrap(), 0.0);
        assert!(matches!(
            recall_at_k(&[], &[], 3),
            Err(RetrievalError::EmptyClaimSet)
        ));

        // 10 claims, 9 with gold inside the top 3
        let mut ranked = Vec::new();
        let mut gold = Vec::new();
        for i in 0..10 {
            let pos = if i == 9 { 5 } else { i % 3 };
            let list: Vec<String> = (0..7).map(|j| format!("p{i}_{j}")).collect();
            gold.push(vec![list[pos].clone()]);
            ranked.push(list);
        }
        assert!((recall_at_k(&ranked, &gold, 3).unwrap() - 0.9).abs() < 1e-15);
    }
}
