use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Catalog, UserHistory};
use crate::seed;
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    NoHistory,
    FakeHistory,
    RandomOrder,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoHistory => "no_history",
            Ablation::FakeHistory => "fake_history",
            Ablation::RandomOrder => "random_order",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Ablation::None,
            "no_history" => Ablation::NoHistory,
            "fake_history" => Ablation::FakeHistory,
            "random_order" => Ablation::RandomOrder,
            other => return Err(format!("unknown ablation {other:?}")),
        })
    }
}

/// Perturbed copy of a history prefix.
///
/// `FakeHistory` replaces every item with a uniform draw from the catalog
/// (distinct draws when the catalog is large enough); timestamps are kept.
pub fn make_ablation(
    prefix: &UserHistory,
    variant: Ablation,
    catalog: &Catalog,
    seed: u64,
) -> UserHistory {
    let mut out = prefix.clone();
    let mut rng = seed::rng(seed);
    match variant {
        Ablation::None => {}
        Ablation::NoHistory => {
            out.items.clear();
            out.timestamps.clear();
        }
        Ablation::RandomOrder => out.items.shuffle(&mut rng),
        Ablation::FakeHistory => {
            let ids: Vec<&ItemId> = catalog.ids().collect();
            let n = prefix.items.len();
            out.items = if ids.is_empty() {
                Vec::new()
            } else if n <= ids.len() {
                index::sample(&mut rng, ids.len(), n)
                    .into_iter()
                    .map(|i| ids[i].clone())
                    .collect()
            } else {
                (0..n)
                    .map(|_| ids[rng.random_range(0..ids.len())].clone())
                    .collect()
            };
            out.timestamps.truncate(out.items.len());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(n: usize) -> Catalog {
        Catalog::from_titles((0..n).map(|i| (ItemId::new(format!("i{i}")), format!("T{i}")))).unwrap()
    }

    fn prefix(n: usize) -> UserHistory {
        UserHistory {
            user: "u".into(),
            items: (0..n).map(|i| ItemId::new(format!("i{i}"))).collect(),
            timestamps: (0..n as i64).collect(),
        }
    }

    #[test]
    fn variants() {
        let c = catalog(100);
        let p = prefix(10);
        assert_eq!(make_ablation(&p, Ablation::None, &c, 1), p);
        assert!(make_ablation(&p, Ablation::NoHistory, &c, 1).items.is_empty());
        let a = make_ablation(&p, Ablation::RandomOrder, &c, 9);
        assert_eq!(a, make_ablation(&p, Ablation::RandomOrder, &c, 9));
        let mut sorted = a.items.clone();
        sorted.sort();
        let mut orig = p.items.clone();
        orig.sort();
        assert_eq!(sorted, orig);
        assert_eq!(a.timestamps, p.timestamps);
        for s in ["none", "no_history", "fake_history", "random_order"] {
            assert_eq!(s.parse::<Ablation>().unwrap().as_str(), s);
        }
    }

    #[test]
    fn fake_history_overlap_matches_hypergeometric_mean() {
        // 5 distinct draws out of 200 items: each original item is hit with
        // probability 5/200, so the expected overlap is 5 * 5 / 200 = 0.125
        let c = catalog(200);
        let p = prefix(5);
        let trials = 4000u64;
        let mut overlap = 0usize;
        for s in 0..trials {
            let f = make_ablation(&p, Ablation::FakeHistory, &c, s);
            assert_eq!(f.items.len(), 5);
            overlap += f.items.iter().filter(|i| p.items.contains(i)).count();
        }
        let mean = overlap as f64 / trials as f64;
        // variance per trial is below 0.125, so 4 sd over 4000 trials < 0.023
        assert!((mean - 0.125).abs() < 0.023, "{mean}");
        // tiny catalog: draws repeat instead of failing
        assert_eq!(make_ablation(&prefix(5), Ablation::FakeHistory, &catalog(2), 3).items.len(), 5);
    }
}
