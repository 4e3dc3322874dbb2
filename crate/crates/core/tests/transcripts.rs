//! Golden prompts rebuilt from the recorded history and candidate titles,
//! and the recorded answers parsed back to ground-truth ranks.

use std::path::PathBuf;

use llmrank::candgen::{CandidateSet, Provenance};
use llmrank::corpus::{Catalog, UserHistory};
use llmrank::grounding::parse_output;
use llmrank::promptkit::{build_prompt, OutputMode, PromptBundle, PromptStrategy, StrategyKind, Templates};
use llmrank::ItemId;
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    domain: String,
    strategy: StrategyKind,
    output_mode: OutputMode,
    history: Vec<String>,
    candidates: Vec<String>,
    ground_truth_slot: usize,
    ground_truth_title: String,
    expected_rank: usize,
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts")
}

fn build(name: &str) -> (Fixture, PromptBundle, Vec<ItemId>, Vec<ItemId>) {
    let raw = std::fs::read_to_string(dir().join(format!("{name}.json"))).unwrap();
    let fx: Fixture = serde_json::from_str(&raw).unwrap();

    let mut catalog = Catalog::new();
    let hist: Vec<ItemId> = (0..fx.history.len()).map(|i| ItemId::new(format!("h{i}"))).collect();
    let cands: Vec<ItemId> = (0..fx.candidates.len()).map(|i| ItemId::new(format!("c{i}"))).collect();
    for (id, t) in hist.iter().zip(&fx.history).chain(cands.iter().zip(&fx.candidates)) {
        catalog.insert(id.clone(), t.clone()).unwrap();
    }
    let prefix = UserHistory {
        user: "u".into(),
        items: hist.clone(),
        timestamps: (0..hist.len() as i64).collect(),
    };
    let gt = cands[fx.ground_truth_slot].clone();
    let set = CandidateSet::new(
        "u".into(),
        cands.clone(),
        vec![Provenance::Random; cands.len()],
        Some(&gt),
    )
    .unwrap();
    let strategy = PromptStrategy::new(fx.strategy, 50).unwrap();
    let bundle = build_prompt(
        &Templates::default(),
        &catalog,
        &prefix,
        &set,
        strategy,
        fx.output_mode,
        &fx.domain,
    )
    .unwrap();
    (fx, bundle, hist, cands)
}

fn check(name: &str) {
    let expected = std::fs::read_to_string(dir().join(format!("{name}.prompt.txt"))).unwrap();
    let (_, bundle, hist, cands) = build(name);
    assert_eq!(bundle.text, expected, "{name}");
    for (slot, c) in bundle.candidate_slots.iter().enumerate() {
        assert_eq!(c.item, cands[slot]);
    }
    assert_eq!(bundle.history, hist);
}

#[test]
fn movies_sequential_title() {
    check("a1");
}

#[test]
fn movies_recency_title() {
    check("a2");
}

#[test]
fn movies_icl_title() {
    check("a3");
}

#[test]
fn products_sequential_index() {
    check("b1");
}

#[test]
fn products_recency_index() {
    check("b2");
}

#[test]
fn products_icl_index() {
    check("b3");
}

fn parse(name: &str) {
    let (fx, bundle, _, cands) = build(name);
    let output = std::fs::read_to_string(dir().join(format!("{name}.output.txt"))).unwrap();
    let gt = &cands[fx.ground_truth_slot];
    assert_eq!(bundle.candidate_slots[fx.ground_truth_slot].title.trim(), fx.ground_truth_title);
    let ranking = parse_output(&output, &bundle, Some(gt));
    assert_eq!(ranking.gt_rank, Some(fx.expected_rank), "{name}");
    assert_eq!(ranking.items.len(), cands.len());
    assert_eq!(ranking.diagnostics.ooc_lines, 0, "{name}");
}

#[test]
fn parse_movies_sequential() {
    parse("a1");
}

#[test]
fn parse_movies_recency() {
    parse("a2");
}

#[test]
fn parse_movies_icl() {
    parse("a3");
}

#[test]
fn parse_products_sequential() {
    parse("b1");
}

#[test]
fn parse_products_recency() {
    parse("b2");
}

#[test]
fn parse_products_icl() {
    parse("b3");
}
