//! Amazon review dumps (one JSON object per line).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Catalog, CorpusError, Interaction, LoadedCorpus};
use crate::{ItemId, UserId};

#[derive(Deserialize)]
struct Review {
    #[serde(rename = "reviewerID")]
    reviewer: String,
    asin: String,
    #[serde(rename = "unixReviewTime")]
    time: i64,
}

#[derive(Deserialize)]
struct Meta {
    asin: String,
    #[serde(default)]
    title: Option<String>,
}

/// Loads a review file (`reviewerID`, `asin`, `unixReviewTime`) and its
/// metadata file (`asin`, `title`).
///
/// Unparsable lines in either file are skipped and counted. Reviews whose
/// item has no non-blank title are dropped and counted. Titles are kept
/// verbatim (HTML entities included).
pub fn load_amazon(reviews_path: &Path, meta_path: &Path) -> Result<LoadedCorpus, CorpusError> {
    let meta_text = fs::read_to_string(meta_path).map_err(|e| CorpusError::io(meta_path, e))?;
    let reviews_text =
        fs::read_to_string(reviews_path).map_err(|e| CorpusError::io(reviews_path, e))?;

    let mut skipped = 0usize;
    let mut titles: HashMap<String, String> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for line in meta_text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Meta>(line) {
            Ok(meta) => {
                let Some(title) = meta.title.filter(|t| !t.trim().is_empty()) else {
                    continue;
                };
                if !titles.contains_key(&meta.asin) {
                    order.push(meta.asin.clone());
                    titles.insert(meta.asin, title);
                }
            }
            Err(_) => skipped += 1,
        }
    }

    let mut interactions = Vec::new();
    let mut dropped = 0usize;
    let mut reviewed: HashSet<String> = HashSet::new();
    for line in reviews_text.lines().filter(|l| !l.trim().is_empty()) {
        let review = match serde_json::from_str::<Review>(line) {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if !titles.contains_key(&review.asin) {
            dropped += 1;
            continue;
        }
        reviewed.insert(review.asin.clone());
        interactions.push(Interaction {
            user: UserId::new(review.reviewer),
            item: ItemId::new(review.asin),
            timestamp: review.time,
        });
    }
    if skipped > 0 {
        log::warn!("amazon: skipped {skipped} unparsable records");
    }
    if dropped > 0 {
        log::warn!("amazon: dropped {dropped} reviews of items without a title");
    }

    let mut catalog = Catalog::new();
    for asin in order {
        if reviewed.contains(&asin) {
            let title = titles.remove(&asin).expect("title recorded");
            catalog.insert(ItemId::new(asin), title)?;
        }
    }
    Ok(LoadedCorpus {
        catalog,
        interactions,
        skipped_records: skipped,
        dropped_untitled: dropped,
    })
}
