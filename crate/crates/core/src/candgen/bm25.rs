use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{gen_pop, top_m, CandGenError, CandidateSet, PopularityTable, Provenance};
use crate::corpus::{Catalog, EvalInstance};
use crate::text::tokenize;
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Inverted index over item titles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    /// term -> (document, term frequency), documents ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_ids: Vec<ItemId>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn build(catalog: &Catalog) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(catalog.len());
        let mut doc_lengths = Vec::with_capacity(catalog.len());
        for (doc, item) in catalog.iter().enumerate() {
            let tokens = tokenize(&item.title);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, f) in tf {
                postings.entry(term).or_default().push((doc as u32, f));
            }
            doc_ids.push(item.id.clone());
            doc_lengths.push(tokens.len() as u32);
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        Bm25Index {
            postings,
            doc_ids,
            doc_lengths,
            avgdl,
        }
    }

    /// Number of indexed documents.
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[ItemId] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of every document for `query`, indexed like
    /// [`doc_ids`](Self::doc_ids). Each query token contributes once per
    /// occurrence, so terms repeated across history titles weigh more.
    pub fn score(&self, query: &[String], params: Bm25Params) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        let mut idf_cache: HashMap<&str, f64> = HashMap::new();
        for term in query {
            let Some(list) = self.postings.get(term.as_str()) else {
                continue;
            };
            let idf = *idf_cache.entry(term.as_str()).or_insert_with(|| self.idf(term));
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[doc as usize]);
                let norm = params.k1 * (1.0 - params.b + params.b * len / self.avgdl);
                scores[doc as usize] += idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }
        scores
    }

    /// Concatenated title tokens of `items`, in order.
    pub fn query_for(catalog: &Catalog, items: &[ItemId]) -> Vec<String> {
        items
            .iter()
            .filter_map(|id| catalog.title(id))
            .flat_map(tokenize)
            .collect()
    }
}

/// Top-`m` items by BM25 similarity between their titles and the user's
/// history titles, excluding history items. An empty query falls back to
/// popularity.
pub fn gen_bm25(
    index: &Bm25Index,
    catalog: &Catalog,
    pop: &PopularityTable,
    instance: &EvalInstance,
    m: usize,
    params: Bm25Params,
) -> Result<CandidateSet, CandGenError> {
    let query = Bm25Index::query_for(catalog, &instance.prefix.items);
    if query.is_empty() {
        log::warn!("bm25: empty query for user {}, using popularity", instance.user);
        return gen_pop(pop, instance, m);
    }
    let scores = index.score(&query, params);
    let history: HashSet<&ItemId> = instance.prefix.items.iter().collect();
    let ranked = top_m(
        index.doc_ids.iter().zip(scores.iter().copied()),
        m,
        |id| history.contains(id),
    );
    if ranked.len() < m {
        return Err(CandGenError::InsufficientItems {
            needed: m,
            available: ranked.len(),
        });
    }
    let items: Vec<ItemId> = ranked.into_iter().map(|(id, _)| id).collect();
    let sources = vec![Provenance::Bm25; items.len()];
    CandidateSet::new(
        instance.user.clone(),
        items,
        sources,
        Some(&instance.ground_truth),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserHistory;
    use proptest::prelude::*;

    fn catalog(titles: &[&str]) -> Catalog {
        Catalog::from_titles(
            titles
                .iter()
                .enumerate()
                .map(|(i, &t)| (ItemId::new(format!("d{i}")), t)),
        )
        .unwrap()
    }

    fn q(s: &str) -> Vec<String> {
        tokenize(s)
    }

    /// Direct transcription of the scoring formula, recounting everything
    /// from raw titles.
    fn brute_force(titles: &[&str], query: &[String], k1: f64, b: f64) -> Vec<f64> {
        let docs: Vec<Vec<String>> = titles.iter().map(|t| tokenize(t)).collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
        docs.iter()
            .map(|d| {
                query
                    .iter()
                    .map(|t| {
                        let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                        let tf = d.iter().filter(|x| *x == t).count() as f64;
                        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl))
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn toy_corpus_matches_brute_force() {
        let titles = ["red apple pie", "green apple", "blue sky apple apple"];
        let idx = Bm25Index::build(&catalog(&titles));
        assert_eq!(idx.len(), 3);
        assert!((idx.avgdl() - 3.0).abs() < 1e-12);
        for query in ["apple", "red sky", "apple pie pie", "nothing"] {
            let got = idx.score(&q(query), Bm25Params::default());
            let want = brute_force(&titles, &q(query), 1.2, 0.75);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "{query}: {g} vs {w}");
            }
        }
    }

    fn instance(history: &[&str]) -> EvalInstance {
        EvalInstance {
            user: "u".into(),
            prefix: UserHistory {
                user: "u".into(),
                items: history.iter().map(|&s| s.into()).collect(),
                timestamps: vec![0; history.len()],
            },
            ground_truth: "d9".into(),
        }
    }

    #[test]
    fn single_matching_document_ranks_first() {
        let c = catalog(&["zebra crossing", "lion king", "tiger", "whale song", "zebra"]);
        let idx = Bm25Index::build(&c);
        let pop = PopularityTable::from_training(&c, &[]);
        // history item d4 ("zebra") is excluded, leaving d0 as the only match
        let s = gen_bm25(&idx, &c, &pop, &instance(&["d4"]), 3, Bm25Params::default()).unwrap();
        assert_eq!(s.items()[0].as_str(), "d0");
        // the rest score 0 and fall back to id order
        assert_eq!(s.items()[1].as_str(), "d1");
        assert_eq!(s.items()[2].as_str(), "d2");
    }

    #[test]
    fn no_shared_tokens_gives_id_order_and_empty_query_uses_pop() {
        let c = Catalog::from_titles([
            (ItemId::from("b"), "alpha"),
            (ItemId::from("a"), "beta"),
            (ItemId::from("c"), "gamma"),
            (ItemId::from("h"), "omega"),
            (ItemId::from("e"), "---"),
        ])
        .unwrap();
        let idx = Bm25Index::build(&c);
        let pop = PopularityTable::from_counts(
            [("c", 5u64), ("a", 1), ("b", 0), ("h", 0), ("e", 9)]
                .into_iter()
                .map(|(k, v)| (k.into(), v))
                .collect(),
        );
        let s = gen_bm25(&idx, &c, &pop, &instance(&["h"]), 3, Bm25Params::default()).unwrap();
        let ids: Vec<&str> = s.items().iter().map(ItemId::as_str).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        // "---" tokenises to nothing: popularity order instead
        let s = gen_bm25(&idx, &c, &pop, &instance(&["e"]), 2, Bm25Params::default()).unwrap();
        let ids: Vec<&str> = s.items().iter().map(ItemId::as_str).collect();
        assert_eq!(ids, ["c", "a"]);
        assert!(s.sources().iter().all(|&p| p == Provenance::Pop));
    }

    proptest! {
        #[test]
        fn more_term_occurrences_never_lower_the_score(
            base in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..6),
            others in prop::collection::vec(
                prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..6), 1..5),
            extra in 1usize..4,
        ) {
            let mut titles: Vec<String> = vec![base.join(" ")];
            titles.extend(others.iter().map(|o| o.join(" ")));
            let mut boosted = titles.clone();
            for _ in 0..extra {
                boosted[0].push_str(" a");
            }
            let query = q("a");
            let refs: Vec<&str> = titles.iter().map(String::as_str).collect();
            let brefs: Vec<&str> = boosted.iter().map(String::as_str).collect();
            let before = Bm25Index::build(&catalog(&refs)).score(&query, Bm25Params::default())[0];
            let after = Bm25Index::build(&catalog(&brefs)).score(&query, Bm25Params::default())[0];
            prop_assert!(after + 1e-12 >= before, "{after} < {before}");
        }
    }
}
