use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{top_m, CandGenError, CandidateSet, Provenance};
use crate::corpus::{Catalog, EvalInstance, UserHistory};
use crate::seed::{self, Part};
use crate::{ItemId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprParams {
    pub dim: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Standard deviation of the normal initialisation.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams {
            dim: 64,
            learning_rate: 0.01,
            reg: 1e-4,
            epochs: 50,
            init_std: 0.1,
            seed: 42,
        }
    }
}

/// Matrix factorisation model: `score(u, i) = p_u . q_i + b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub dim: usize,
    /// Sorted, so lookups can binary search.
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    item_bias: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean `-ln sigmoid(x_uij)` over each epoch's sampled triples, measured
    /// before each update.
    pub epoch_loss: Vec<f64>,
    pub triples_per_epoch: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MfModel {
    fn user_index(&self, user: &UserId) -> Option<usize> {
        self.users.binary_search(user).ok()
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn item_bias(&self) -> &[f64] {
        &self.item_bias
    }

    pub fn item_bias_mut(&mut self) -> &mut [f64] {
        &mut self.item_bias
    }

    fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    fn item_row(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    /// Score of every item for `user`, indexed like [`items`](Self::items).
    /// Unknown users get a zero factor vector, i.e. bias only.
    pub fn scores(&self, user: &UserId) -> Vec<f64> {
        let u = self.user_index(user);
        (0..self.items.len())
            .map(|i| {
                let f = u.map_or(0.0, |u| dot(self.user_row(u), self.item_row(i)));
                f + self.item_bias[i]
            })
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .chain(&self.item_bias)
            .all(|x| x.is_finite())
    }
}

/// Trains BPR-MF by SGD on `ln sigmoid(x_uij) - reg * |theta|^2`.
///
/// Each epoch visits every training interaction once in shuffled order and
/// pairs it with one negative drawn uniformly from catalog items the user
/// never interacted with.
pub fn train_bprmf(
    catalog: &Catalog,
    training: &[UserHistory],
    params: &BprParams,
) -> Result<(MfModel, TrainLog), CandGenError> {
    let n_items = catalog.len();
    let d = params.dim;
    let mut users: Vec<UserId> = training.iter().map(|h| h.user.clone()).collect();
    users.sort();
    users.dedup();

    // (user index, positive item index) pairs and each user's item set
    let mut seen: Vec<HashSet<usize>> = vec![HashSet::new(); users.len()];
    let mut pairs = Vec::new();
    for h in training {
        let u = users.binary_search(&h.user).expect("user collected above");
        for id in &h.items {
            if let Some(i) = catalog.position(id) {
                seen[u].insert(i);
                pairs.push((u, i));
            }
        }
    }
    if pairs.is_empty() {
        return Err(CandGenError::EmptyTraining);
    }

    let init = Normal::new(0.0, params.init_std).map_err(|_| CandGenError::Format {
        path: "bpr".into(),
        message: format!("invalid init_std {}", params.init_std),
    })?;
    let mut init_rng = seed::rng_for(params.seed, &[Part::Str("bpr-init")]);
    let mut model = MfModel {
        dim: d,
        users,
        items: catalog.ids().cloned().collect(),
        user_factors: Vec::new(),
        item_factors: Vec::new(),
        item_bias: vec![0.0; n_items],
    };
    model.user_factors = (0..model.users.len() * d)
        .map(|_| init.sample(&mut init_rng))
        .collect();
    model.item_factors = (0..n_items * d).map(|_| init.sample(&mut init_rng)).collect();

    let lr = params.learning_rate;
    let reg = params.reg;
    let mut log = TrainLog {
        epoch_loss: Vec::with_capacity(params.epochs),
        triples_per_epoch: 0,
    };
    let mut diff = vec![0.0; d];
    for epoch in 0..params.epochs {
        let mut rng = seed::rng_for(params.seed, &[Part::Str("bpr-epoch"), Part::from(epoch)]);
        let mut order = pairs.clone();
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut count = 0usize;
        for &(u, i) in &order {
            if seen[u].len() >= n_items {
                continue;
            }
            let j = loop {
                let j = rng.random_range(0..n_items);
                if !seen[u].contains(&j) {
                    break j;
                }
            };
            let (pu, qi, qj) = (u * d, i * d, j * d);
            for k in 0..d {
                diff[k] = model.item_factors[qi + k] - model.item_factors[qj + k];
            }
            let x = dot(&model.user_factors[pu..pu + d], &diff) + model.item_bias[i]
                - model.item_bias[j];
            loss += -sigmoid(x).ln();
            count += 1;
            let g = sigmoid(-x);
            for k in 0..d {
                let p = model.user_factors[pu + k];
                model.user_factors[pu + k] += lr * (g * diff[k] - reg * p);
                model.item_factors[qi + k] += lr * (g * p - reg * model.item_factors[qi + k]);
                model.item_factors[qj + k] += lr * (-g * p - reg * model.item_factors[qj + k]);
            }
            model.item_bias[i] += lr * (g - reg * model.item_bias[i]);
            model.item_bias[j] += lr * (-g - reg * model.item_bias[j]);
        }
        if !loss.is_finite() || !model.is_finite() {
            return Err(CandGenError::Diverged {
                epoch,
                learning_rate: lr,
            });
        }
        log.triples_per_epoch = count;
        log.epoch_loss.push(if count == 0 { 0.0 } else { loss / count as f64 });
        log::debug!("bpr epoch {epoch}: loss {:.5}", log.epoch_loss[epoch]);
    }
    Ok((model, log))
}

/// Top-`m` items by model score, excluding the user's prefix.
pub fn gen_bprmf(
    model: &MfModel,
    instance: &EvalInstance,
    m: usize,
) -> Result<CandidateSet, CandGenError> {
    let scores = model.scores(&instance.user);
    let history: HashSet<&ItemId> = instance.prefix.items.iter().collect();
    let ranked = top_m(model.items.iter().zip(scores), m, |id| history.contains(id));
    if ranked.len() < m {
        return Err(CandGenError::InsufficientItems {
            needed: m,
            available: ranked.len(),
        });
    }
    let items: Vec<ItemId> = ranked.into_iter().map(|(id, _)| id).collect();
    let sources = vec![Provenance::Bprmf; items.len()];
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

    fn catalog(n: usize) -> Catalog {
        Catalog::from_titles((0..n).map(|i| (ItemId::new(format!("i{i}")), format!("T{i}")))).unwrap()
    }

    fn history(user: &str, items: &[usize]) -> UserHistory {
        UserHistory {
            user: user.into(),
            items: items.iter().map(|i| ItemId::new(format!("i{i}"))).collect(),
            timestamps: (0..items.len() as i64).collect(),
        }
    }

    fn instance(user: &str, items: &[usize], gt: usize) -> EvalInstance {
        EvalInstance {
            user: user.into(),
            prefix: history(user, items),
            ground_truth: ItemId::new(format!("i{gt}")),
        }
    }

    #[test]
    fn zero_init_first_epoch_loss_is_ln2() {
        let params = BprParams {
            dim: 4,
            init_std: 0.0,
            learning_rate: 0.0,
            epochs: 1,
            ..BprParams::default()
        };
        let (_, log) = train_bprmf(&catalog(6), &[history("a", &[0, 1]), history("b", &[2])], &params).unwrap();
        assert!((log.epoch_loss[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(log.triples_per_epoch, 3);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let training = [history("a", &[0, 1, 2]), history("b", &[3, 4])];
        let p0 = BprParams {
            dim: 3,
            epochs: 0,
            ..BprParams::default()
        };
        let p5 = BprParams {
            epochs: 5,
            learning_rate: 0.0,
            ..p0
        };
        let (m0, _) = train_bprmf(&catalog(8), &training, &p0).unwrap();
        let (m5, log) = train_bprmf(&catalog(8), &training, &p5).unwrap();
        assert_eq!(m0, m5);
        assert_eq!(log.epoch_loss.len(), 5);
    }

    #[test]
    fn shifting_all_biases_keeps_the_ranking() {
        let training = [history("a", &[0, 1, 2]), history("b", &[3, 4, 0])];
        let params = BprParams {
            dim: 4,
            epochs: 5,
            ..BprParams::default()
        };
        let (mut model, _) = train_bprmf(&catalog(10), &training, &params).unwrap();
        let inst = instance("a", &[0], 1);
        let before = gen_bprmf(&model, &inst, 5).unwrap();
        for b in model.item_bias_mut() {
            *b += 3.5;
        }
        assert_eq!(gen_bprmf(&model, &inst, 5).unwrap(), before);
    }

    #[test]
    fn divergence_is_reported() {
        let training = [history("a", &[0, 1, 2]), history("b", &[3, 4, 0])];
        let params = BprParams {
            dim: 4,
            learning_rate: 1e200,
            epochs: 3,
            ..BprParams::default()
        };
        assert!(matches!(
            train_bprmf(&catalog(10), &training, &params),
            Err(CandGenError::Diverged { epoch: 0, .. })
        ));
        assert!(matches!(
            train_bprmf(&catalog(3), &[], &BprParams::default()),
            Err(CandGenError::EmptyTraining)
        ));
    }

    #[test]
    fn learns_block_structure_on_a_tiny_corpus() {
        // two communities: users 0..6 use items 0..6, users 6..12 use 6..12;
        // each user holds out one in-community item
        let mut training = Vec::new();
        let mut held = Vec::new();
        for u in 0..12usize {
            let base = if u < 6 { 0 } else { 6 };
            let out = base + u % 6;
            let items: Vec<usize> = (base..base + 6).filter(|&i| i != out).collect();
            training.push(history(&format!("u{u}"), &items));
            held.push((format!("u{u}"), items, out));
        }
        let params = BprParams {
            dim: 8,
            learning_rate: 0.05,
            epochs: 200,
            ..BprParams::default()
        };
        let (model, log) = train_bprmf(&catalog(12), &training, &params).unwrap();
        assert!(log.epoch_loss.last().unwrap() < &log.epoch_loss[0]);
        let hits = held
            .iter()
            .filter(|(u, items, out)| {
                let s = gen_bprmf(&model, &instance(u, items, *out), 7).unwrap();
                s.gt_slot() == Some(0)
            })
            .count();
        assert!(hits * 3 >= held.len() * 2, "{hits}/{}", held.len());
    }

    #[test]
    fn ranking_matches_argsort_of_scores() {
        let training = [history("a", &[0, 1, 2, 5]), history("b", &[3, 4, 0, 7])];
        let (model, _) = train_bprmf(&catalog(10), &training, &BprParams { epochs: 3, ..BprParams::default() }).unwrap();
        let inst = instance("b", &[3, 4], 0);
        let got = gen_bprmf(&model, &inst, 8).unwrap();
        let scores = model.scores(&"b".into());
        let mut idx: Vec<usize> = (0..10).filter(|&i| i != 3 && i != 4).collect();
        idx.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap().then(x.cmp(&y)));
        let want: Vec<ItemId> = idx.iter().map(|i| ItemId::new(format!("i{i}"))).collect();
        assert_eq!(got.items(), &want[..]);
    }
}
