use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{render_answer, Completer, CompletionRequest, LlmError};
use crate::candgen::PopularityTable;
use crate::corpus::Catalog;
use crate::grounding::kmp_find;
use crate::promptkit::{OutputMode, PromptBundle, StrategyKind};
use crate::seed::{self, Part};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimLlmParams {
    /// Weight on token similarity to the history.
    pub w_hist: f64,
    /// Weight on normalized training popularity.
    pub w_pop: f64,
    /// Weight on the position prior `1 - s / (m - 1)`.
    pub w_pos: f64,
    pub noise_sigma: f64,
    /// Per-line probability of answering with a made-up item.
    pub halluc_rate: f64,
    /// How strongly recency-aware prompts down-weight older history items.
    pub order_sensitivity: f64,
    pub seed: u64,
}

impl Default for SimLlmParams {
    fn default() -> Self {
        SimLlmParams {
            w_hist: 1.0,
            w_pop: 0.0,
            w_pos: 0.0,
            noise_sigma: 0.0,
            halluc_rate: 0.0,
            order_sensitivity: 0.0,
            seed: 0,
        }
    }
}

impl SimLlmParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        let weights = [self.w_hist, self.w_pop, self.w_pos, self.noise_sigma];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LlmError::Config("simulator weights must be finite".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(LlmError::Config("noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.halluc_rate) {
            return Err(LlmError::Config("halluc_rate must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.order_sensitivity) {
            return Err(LlmError::Config("order_sensitivity must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Deterministic stand-in for an LLM ranker.
///
/// Each candidate at slot `s` scores
/// `w_hist * J + w_pop * pop + w_pos * (1 - s / (m - 1)) + noise`, where `J`
/// is the weighted Jaccard similarity between the candidate's title tokens
/// and the history's tokens. History item `j` of `n` carries weight
/// `1 - order_sensitivity * (1 - (j + 1) / n)` under recency-focused and
/// in-context prompts and weight 1 under sequential prompts; a token takes
/// the largest weight of any history item containing it.
///
/// Noise depends only on the seed, the history and the item, never on the
/// slot, so re-arranging the same candidates changes nothing but the
/// position term.
pub struct SimLlm {
    params: SimLlmParams,
    catalog: Arc<Catalog>,
    popularity: Arc<PopularityTable>,
    identity: String,
}

impl SimLlm {
    /// `data_tag` should identify the corpus the popularity table came from;
    /// it becomes part of the cache identity.
    pub fn new(
        params: SimLlmParams,
        catalog: Arc<Catalog>,
        popularity: Arc<PopularityTable>,
        data_tag: &str,
    ) -> Result<Self, LlmError> {
        params.validate()?;
        let identity = format!(
            "sim:{}:{data_tag}",
            serde_json::to_string(&params).expect("params serialize")
        );
        Ok(SimLlm {
            params,
            catalog,
            popularity,
            identity,
        })
    }

    pub fn params(&self) -> &SimLlmParams {
        &self.params
    }

    fn history_weights(&self, bundle: &PromptBundle) -> HashMap<String, f64> {
        let n = bundle.history.len();
        let recency = match bundle.strategy {
            StrategyKind::Sequential => 0.0,
            StrategyKind::RecencyFocused | StrategyKind::Icl => self.params.order_sensitivity,
        };
        let mut weights: HashMap<String, f64> = HashMap::new();
        for (j, id) in bundle.history.iter().enumerate() {
            let w = 1.0 - recency * (1.0 - (j + 1) as f64 / n as f64);
            for tok in tokenize(self.catalog.title(id).unwrap_or_default()) {
                let e = weights.entry(tok).or_insert(0.0);
                if w > *e {
                    *e = w;
                }
            }
        }
        weights
    }

    fn history_hash(&self, bundle: &PromptBundle) -> u64 {
        let parts: Vec<Part> = bundle.history.iter().map(|id| Part::Str(id.as_str())).collect();
        seed::derive(self.params.seed, &parts)
    }

    /// Weighted Jaccard of each candidate's tokens against the history tokens.
    pub fn history_similarity(&self, bundle: &PromptBundle) -> Vec<f64> {
        let hist = self.history_weights(bundle);
        let hist_total: f64 = hist.values().sum();
        bundle
            .candidate_slots
            .iter()
            .map(|c| {
                let mut toks = tokenize(&c.title);
                toks.sort();
                toks.dedup();
                // sum of min over the union is the shared weight; sum of
                // max is every history weight plus (1 - w) per shared token
                let (mut inter, mut extra) = (0.0, 0.0);
                for t in &toks {
                    match hist.get(t) {
                        Some(&w) => {
                            inter += w;
                            extra += 1.0 - w;
                        }
                        None => extra += 1.0,
                    }
                }
                let union = hist_total + extra;
                if union > 0.0 {
                    inter / union
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Score of each slot.
    pub fn scores(&self, bundle: &PromptBundle) -> Vec<f64> {
        let p = &self.params;
        let m = bundle.m();
        let sims = if p.w_hist != 0.0 {
            self.history_similarity(bundle)
        } else {
            vec![0.0; m]
        };
        // rescaled so the best match in the prompt scores 1, on the same
        // footing as the popularity and position terms
        let best = sims.iter().copied().fold(0.0, f64::max);
        let hhash = self.history_hash(bundle);
        bundle
            .candidate_slots
            .iter()
            .zip(&sims)
            .map(|(c, &sim)| {
                let mut score = 0.0;
                if best > 0.0 {
                    score += p.w_hist * sim / best;
                }
                if p.w_pop != 0.0 {
                    score += p.w_pop * self.popularity.normalized(&c.item);
                }
                if p.w_pos != 0.0 {
                    score += p.w_pos * (1.0 - c.slot as f64 / (m - 1).max(1) as f64);
                }
                if p.noise_sigma > 0.0 {
                    let mut rng = seed::rng_for(
                        hhash,
                        &[Part::Str("noise"), Part::Str(c.item.as_str())],
                    );
                    let z: f64 = StandardNormal.sample(&mut rng);
                    score += p.noise_sigma * z;
                }
                score
            })
            .collect()
    }

    /// Slots by descending score, ties by slot.
    pub fn intended_order(&self, bundle: &PromptBundle) -> Vec<usize> {
        let scores = self.scores(bundle);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order
    }

    fn made_up_line(&self, bundle: &PromptBundle, rank: usize, rng: &mut seed::Rng) -> String {
        let m = bundle.m();
        match bundle.output_mode {
            OutputMode::Index => (m + rng.random_range(0..100usize)).to_string(),
            OutputMode::Title => {
                let cand: Vec<Vec<String>> = bundle.titles().map(tokenize).collect();
                loop {
                    let word: String = (0..8)
                        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
                        .collect();
                    let line = format!("{}. Untold {word}", rank + 1);
                    let toks = tokenize(&line);
                    let clash = cand
                        .iter()
                        .any(|c| !c.is_empty() && kmp_find(c.as_slice(), toks.as_slice()).is_some());
                    if !clash {
                        return line;
                    }
                }
            }
        }
    }
}

impl Completer for SimLlm {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError> {
        let bundle = req.bundle;
        let order = self.intended_order(bundle);
        let mut lines = render_answer(bundle, &order);
        if self.params.halluc_rate > 0.0 {
            let mut rng = seed::rng_for(
                self.params.seed,
                &[Part::Str("halluc"), Part::Str(&bundle.text), Part::from(req.attempt)],
            );
            for rank in 0..lines.len() {
                if rng.random_bool(self.params.halluc_rate) {
                    lines[rank] = self.made_up_line(bundle, rank, &mut rng);
                }
            }
        }
        Ok(lines.join("\n"))
    }

    fn cache_identity(&self) -> String {
        self.identity.clone()
    }
}
