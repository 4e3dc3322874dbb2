//! Synthetic topical corpora for simulation experiments and tests.
//!
//! Items belong to latent topics and carry titles built from topic words, so
//! title-token overlap with a user's history is informative. Users drift
//! between topics over time, which makes recent interactions more predictive
//! of the next one than old ones. Item choice within a topic is Zipf-skewed,
//! giving a long-tailed popularity distribution.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Catalog, CorpusError, Interaction, LoadedCorpus};
use crate::seed::{self, Part};
use crate::{ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    /// Topic words per title (plus one unique code word).
    pub title_words: usize,
    pub min_history: usize,
    pub max_history: usize,
    /// Per-step probability of switching to another topic.
    pub switch_prob: f64,
    /// Zipf exponent for item choice within a topic.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 1000,
            items: 1200,
            topics: 12,
            words_per_topic: 8,
            title_words: 2,
            min_history: 8,
            max_history: 60,
            switch_prob: 0.2,
            zipf_exponent: 1.0,
            seed: 7,
        }
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables(mut n: usize, count: usize, out: &mut String) {
    for _ in 0..count {
        let c = CONSONANTS[n % CONSONANTS.len()];
        n /= CONSONANTS.len();
        let v = VOWELS[n % VOWELS.len()];
        n /= VOWELS.len();
        out.push(c as char);
        out.push(v as char);
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn topic_word(index: usize) -> String {
    let mut w = String::new();
    syllables(index, 3, &mut w);
    w
}

fn code_word(index: usize) -> String {
    // 'h' and 'y' never occur in topic words, so code words cannot collide
    let mut w = String::from("hy");
    let _ = write!(w, "{}", base26(index));
    w
}

fn base26(mut n: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Generates a corpus. Item `i` has id `"{i+1}"` and topic `i % topics`.
pub fn generate(spec: &SyntheticSpec) -> LoadedCorpus {
    assert!(spec.topics >= 2, "synthetic corpus needs at least two topics");
    assert!(spec.items >= spec.topics, "fewer items than topics");
    assert!(spec.words_per_topic >= spec.title_words.max(1));
    assert!(spec.min_history >= 2 && spec.max_history >= spec.min_history);

    let mut rng = seed::rng_for(spec.seed, &["synthetic".into(), "titles".into()]);
    let vocab: Vec<Vec<String>> = (0..spec.topics)
        .map(|t| {
            (0..spec.words_per_topic)
                .map(|k| topic_word(t * spec.words_per_topic + k + 1))
                .collect()
        })
        .collect();

    let mut catalog = Catalog::new();
    let mut by_topic: Vec<Vec<ItemId>> = vec![Vec::new(); spec.topics];
    for i in 0..spec.items {
        let topic = i % spec.topics;
        let words = &vocab[topic];
        let mut picked: Vec<usize> = Vec::with_capacity(spec.title_words);
        while picked.len() < spec.title_words {
            let w = rng.random_range(0..words.len());
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
        let mut title: Vec<String> = picked.iter().map(|&w| capitalize(&words[w])).collect();
        title.push(capitalize(&code_word(i)));
        let id = ItemId::new((i + 1).to_string());
        catalog
            .insert(id.clone(), title.join(" "))
            .expect("synthetic ids are unique and titles non-empty");
        by_topic[topic].push(id);
    }

    let zipf = |n: usize| -> WeightedIndex<f64> {
        WeightedIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent)))
            .expect("positive weights")
    };
    let item_dists: Vec<WeightedIndex<f64>> = by_topic.iter().map(|v| zipf(v.len())).collect();
    let topic_dist = zipf(spec.topics);

    let mut interactions = Vec::new();
    for u in 0..spec.users {
        let mut rng = seed::rng_for(spec.seed, &["synthetic".into(), Part::Num(u as u64)]);
        let user = UserId::new((u + 1).to_string());
        let len = rng.random_range(spec.min_history..=spec.max_history);
        let mut topic = topic_dist.sample(&mut rng);
        let mut seen: Vec<&ItemId> = Vec::with_capacity(len);
        let mut ts: i64 = 978_300_000 + rng.random_range(0..1_000_000);
        for step in 0..len {
            if step > 0 && rng.random_bool(spec.switch_prob) {
                let mut next = topic_dist.sample(&mut rng);
                while next == topic {
                    next = topic_dist.sample(&mut rng);
                }
                topic = next;
            }
            let pool = &by_topic[topic];
            let mut item = &pool[item_dists[topic].sample(&mut rng)];
            for _ in 0..8 {
                if !seen.contains(&item) {
                    break;
                }
                item = &pool[item_dists[topic].sample(&mut rng)];
            }
            seen.push(item);
            if step > 0 && !rng.random_bool(0.1) {
                ts += rng.random_range(1..5000);
            }
            interactions.push(Interaction {
                user: user.clone(),
                item: item.clone(),
                timestamp: ts,
            });
        }
    }

    // keep only items somebody interacted with, like a real dump
    let used: std::collections::HashSet<ItemId> =
        interactions.iter().map(|x| x.item.clone()).collect();
    catalog.retain(|item| used.contains(&item.id));

    LoadedCorpus {
        catalog,
        interactions,
        skipped_records: 0,
        dropped_untitled: 0,
    }
}

/// Writes a corpus as MovieLens-1M style `ratings.dat` / `movies.dat`.
pub fn write_ml1m(dir: &Path, corpus: &LoadedCorpus) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let movies = dir.join("movies.dat");
    let write_movies = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(&movies)?);
        for item in corpus.catalog.iter() {
            writeln!(w, "{}::{} (2000)::Drama", item.id, item.title)?;
        }
        w.flush()
    };
    write_movies().map_err(|e| CorpusError::io(&movies, e))?;
    let ratings = dir.join("ratings.dat");
    let write_ratings = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(&ratings)?);
        for x in &corpus.interactions {
            writeln!(w, "{}::{}::4::{}", x.user, x.item, x.timestamp)?;
        }
        w.flush()
    };
    write_ratings().map_err(|e| CorpusError::io(&ratings, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn deterministic_and_well_formed() {
        let spec = SyntheticSpec {
            users: 50,
            items: 120,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.interactions, b.interactions);
        assert!(a.catalog.len() <= 120);
        for x in &a.interactions {
            assert!(a.catalog.contains(&x.item));
        }
        let titles: std::collections::HashSet<String> =
            a.catalog.iter().map(|i| crate::text::normalize(&i.title)).collect();
        assert_eq!(titles.len(), a.catalog.len(), "normalised titles are unique");
        let first = a.catalog.iter().next().unwrap();
        assert_eq!(tokenize(&first.title).len(), spec.title_words + 1);
    }

    #[test]
    fn ml1m_round_trip() {
        let spec = SyntheticSpec {
            users: 20,
            items: 60,
            ..SyntheticSpec::default()
        };
        let corpus = generate(&spec);
        let dir = tempfile::tempdir().unwrap();
        write_ml1m(dir.path(), &corpus).unwrap();
        let loaded =
            super::super::load_ml1m(&dir.path().join("ratings.dat"), &dir.path().join("movies.dat"))
                .unwrap();
        assert_eq!(loaded.interactions, corpus.interactions);
        assert_eq!(loaded.catalog.len(), corpus.catalog.len());
        let id = corpus.catalog.ids().next().unwrap();
        assert_eq!(loaded.catalog.title(id), corpus.catalog.title(id));
    }
}
