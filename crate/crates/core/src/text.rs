//! Shared tokenization.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Version tag of the bundled stopword list.
pub const STOPWORDS_VERSION: &str = "en-v1";

const STOPWORDS_RAW: &str = include_str!("../data/stopwords_en_v1.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token.to_lowercase().as_str())
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// [`tokens`] minus stopwords.
pub fn content_tokens(text: &str) -> Vec<String> {
    let stop = stopwords();
    tokens(text)
        .into_iter()
        .filter(|t| !stop.contains(t.as_str()))
        .collect()
}

/// Title normalization shared by the title index and the local search
/// client: lowercase tokens joined by single spaces, underscores treated as
/// spaces.
pub fn normalize_title(title: &str) -> String {
    tokens(title).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_has_120_entries() {
        assert_eq!(stopwords().len(), 120);
    }

    #[test]
    fn tokenizes_unicode_and_digits() {
        assert_eq!(
            tokens("Barbora Krejčíková, No. 65 (2020)"),
            ["barbora", "krejčíková", "no", "65", "2020"]
        );
        assert_eq!(content_tokens("The cat of the year"), ["cat", "year"]);
        assert_eq!(normalize_title("Park_Sang-in"), "park sang in");
    }
}
