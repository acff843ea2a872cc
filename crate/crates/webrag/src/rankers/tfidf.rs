//! Self-contained lexical scoring.
//!
//! Weights follow the smooth-idf convention: for a corpus of `n` documents
//! where token `t` appears in `df` of them,
//!
//! ```text
//! weight(t, d) = tf(t, d) * (ln((1 + n) / (1 + df)) + 1)
//! ```
//!
//! with raw-count `tf`, and every document vector L2-normalized afterwards.
//! Queries are vectorized with the same idf table (out-of-vocabulary tokens
//! ignored) and normalized, so scores are cosines in `[0, 1]`.

use std::collections::BTreeMap;

use super::RankError;
use crate::segmenter::Segment;

/// Lowercases and splits into maximal runs of alphanumeric characters,
/// dropping single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|token| token.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Immutable per-corpus index: vocabulary, document frequencies, and
/// L2-normalized sparse document vectors.
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    vocabulary: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    /// Per document: (term column, weight) pairs sorted by column.
    doc_vectors: Vec<Vec<(usize, f64)>>,
}

impl TfidfIndex {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    fn idf(&self, term_col: usize) -> f64 {
        let n = self.n_docs as f64;
        let df = self.doc_freq[term_col] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Builds the index over the segments' texts.
pub fn build_tfidf_index(segments: &[Segment]) -> Result<TfidfIndex, RankError> {
    if segments.is_empty() {
        return Err(RankError::EmptyCorpus);
    }

    let token_lists: Vec<Vec<String>> =
        segments.iter().map(|s| tokenize(&s.text)).collect();

    let mut vocabulary = BTreeMap::new();
    for tokens in &token_lists {
        for token in tokens {
            let next = vocabulary.len();
            vocabulary.entry(token.clone()).or_insert(next);
        }
    }

    let mut doc_freq = vec![0usize; vocabulary.len()];
    let mut term_counts: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(token_lists.len());
    for tokens in &token_lists {
        let mut counts = BTreeMap::new();
        for token in tokens {
            *counts.entry(vocabulary[token]).or_insert(0) += 1;
        }
        for &col in counts.keys() {
            doc_freq[col] += 1;
        }
        term_counts.push(counts);
    }

    let mut index = TfidfIndex {
        vocabulary,
        doc_freq,
        n_docs: segments.len(),
        doc_vectors: Vec::with_capacity(segments.len()),
    };
    for counts in term_counts {
        let mut vector: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(col, tf)| (col, tf as f64 * index.idf(col)))
            .collect();
        l2_normalize(&mut vector);
        index.doc_vectors.push(vector);
    }
    Ok(index)
}

/// Cosine of the query against every document, in corpus order. A query
/// sharing no vocabulary scores zero everywhere.
pub fn score_tfidf(index: &TfidfIndex, question: &str) -> Vec<f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for token in tokenize(question) {
        if let Some(&col) = index.vocabulary.get(&token) {
            *counts.entry(col).or_insert(0) += 1;
        }
    }
    let mut query: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(col, tf)| (col, tf as f64 * index.idf(col)))
        .collect();
    l2_normalize(&mut query);

    index
        .doc_vectors
        .iter()
        .map(|doc| sparse_dot(&query, doc))
        .collect()
}

fn l2_normalize(vector: &mut [(usize, f64)]) {
    let norm = vector.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in vector.iter_mut() {
            *w /= norm;
        }
    }
}

/// Dot product of two column-sorted sparse vectors.
fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let mut dot = 0.0;
    let (mut i, mut j) = (0, 0);
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
    dot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankers::tests::seg;
    use proptest::prelude::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("Hello, World"), vec!["hello", "world"]);
    }

    #[test]
    fn tokenize_drops_single_char_tokens() {
        assert!(tokenize("a I x").is_empty());
    }

    #[test]
    fn tokenize_splits_on_apostrophes_and_keeps_digits() {
        assert_eq!(tokenize("AAPL's 2024 price"), vec!["aapl", "2024", "price"]);
    }

    #[test]
    fn single_token_doc_normalizes_to_unit() {
        let segments = vec![seg("cat cat")];
        let index = build_tfidf_index(&segments).unwrap();
        assert_eq!(index.vocabulary_len(), 1);
        assert!((index.doc_vectors[0][0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idf_matches_hand_computation() {
        let segments = vec![seg("cat"), seg("dog")];
        let index = build_tfidf_index(&segments).unwrap();
        let expected = (3.0f64 / 2.0).ln() + 1.0;
        assert!((index.idf(0) - expected).abs() < 1e-9);
        assert!((expected - 1.405465).abs() < 1e-6);
    }

    #[test]
    fn idf_ratio_for_common_vs_rare_token() {
        // 10 docs; "common" in all, "rare" in one
        let mut segments: Vec<_> = (0..9).map(|_| seg("common")).collect();
        segments.push(seg("common rare"));
        let index = build_tfidf_index(&segments).unwrap();
        let common_col = index.vocabulary["common"];
        let rare_col = index.vocabulary["rare"];
        let ratio = index.idf(common_col) / index.idf(rare_col);
        let expected = ((11.0f64 / 11.0).ln() + 1.0) / ((11.0f64 / 2.0).ln() + 1.0);
        assert!((ratio - expected).abs() < 1e-9);
        assert!((expected - 1.0 / 2.7047).abs() < 1e-4);
    }

    #[test]
    fn identical_text_scores_one() {
        let segments = vec![seg("the cat sat"), seg("a dog barked loudly")];
        let index = build_tfidf_index(&segments).unwrap();
        let scores = score_tfidf(&index, "the cat sat");
        assert!((scores[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_query_scores_zero() {
        let segments = vec![seg("cat sat"), seg("dog ran")];
        let index = build_tfidf_index(&segments).unwrap();
        let scores = score_tfidf(&index, "unrelated words entirely");
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_tfidf_index(&[]), Err(RankError::EmptyCorpus)));
    }

    /// Dense brute-force cosine of the documented formula, used as the
    /// oracle for the sparse pipeline.
    pub(crate) fn brute_force_scores(texts: &[String], question: &str) -> Vec<f64> {
        let n = texts.len();
        let mut vocab: Vec<String> = Vec::new();
        let token_lists: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        for tokens in &token_lists {
            for tok in tokens {
                if !vocab.contains(tok) {
                    vocab.push(tok.clone());
                }
            }
        }
        let df: Vec<f64> = vocab
            .iter()
            .map(|term| token_lists.iter().filter(|ts| ts.contains(term)).count() as f64)
            .collect();
        let idf: Vec<f64> =
            df.iter().map(|d| ((1.0 + n as f64) / (1.0 + d)).ln() + 1.0).collect();

        let densify = |tokens: &[String]| -> Vec<f64> {
            let mut v: Vec<f64> = vocab
                .iter()
                .enumerate()
                .map(|(col, term)| {
                    let tf = tokens.iter().filter(|t| *t == term).count() as f64;
                    tf * idf[col]
                })
                .collect();
            let norm = v.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for w in &mut v {
                    *w /= norm;
                }
            }
            v
        };

        let query = densify(&tokenize(question));
        token_lists
            .iter()
            .map(|tokens| {
                let doc = densify(tokens);
                query.iter().zip(&doc).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    #[test]
    fn partial_overlap_matches_brute_force() {
        let texts = vec![
            "red fox den in the woods".to_string(),
            "blue sea and sky".to_string(),
            "the fox jumped over the sea".to_string(),
        ];
        let segments: Vec<_> = texts.iter().map(|t| seg(t)).collect();
        let index = build_tfidf_index(&segments).unwrap();
        let fast = score_tfidf(&index, "fox by the sea");
        let slow = brute_force_scores(&texts, "fox by the sea");
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn sparse_equals_brute_force_on_random_corpora(
            texts in prop::collection::vec("[a-f]{2,5}( [a-f]{2,5}){0,12}", 1..20),
            query in "[a-f]{2,5}( [a-f]{2,5}){0,6}",
        ) {
            let segments: Vec<_> = texts.iter().map(|t| seg(t)).collect();
            let index = build_tfidf_index(&segments).unwrap();
            let fast = score_tfidf(&index, &query);
            let slow = brute_force_scores(&texts, &query);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
