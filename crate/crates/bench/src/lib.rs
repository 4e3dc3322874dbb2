//! Shared fixtures for the criterion benches.

use std::collections::HashSet;
use std::sync::Arc;

use llmrank::candgen::{gen_random, PopularityTable, RandomOptions};
use llmrank::corpus::synthetic::{generate, SyntheticSpec};
use llmrank::corpus::{build_histories, kcore_filter, leave_one_out, training_histories};
use llmrank::llmclient::{Completer, CompletionRequest, SimLlm, SimLlmParams};
use llmrank::promptkit::{build_prompt, Templates};
use llmrank::{
    seed, CandidateSet, Catalog, EvalInstance, ItemId, OutputMode, PromptBundle, PromptStrategy, StrategyKind,
    UserHistory,
};

/// A small synthetic world with candidate sets, prompts and simulated
/// answers for the first `users` evaluation cases.
pub struct Fixture {
    pub catalog: Arc<Catalog>,
    pub training: Vec<UserHistory>,
    pub instances: Vec<EvalInstance>,
    pub sets: Vec<CandidateSet>,
    pub bundles: Vec<PromptBundle>,
    pub outputs: Vec<String>,
}

impl Fixture {
    pub fn new(users: usize, m: usize) -> Fixture {
        let loaded = generate(&SyntheticSpec::default());
        let interactions = kcore_filter(&loaded.interactions, 5).expect("kcore");
        let used: HashSet<&ItemId> = interactions.iter().map(|x| &x.item).collect();
        let mut catalog = loaded.catalog.clone();
        catalog.retain(|item| used.contains(&item.id));
        let split = leave_one_out(&build_histories(&interactions));
        let training = training_histories(&split.instances);
        catalog.assign_popularity(&training);
        let popularity = Arc::new(PopularityTable::from_training(&catalog, &training));
        let catalog = Arc::new(catalog);

        let instances: Vec<EvalInstance> = split.instances.into_iter().take(users).collect();
        let sets: Vec<CandidateSet> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                gen_random(&catalog, inst, RandomOptions::with_ground_truth(m), seed::derive(1, &[i.into()]))
                    .expect("candidates")
            })
            .collect();
        let templates = Templates::default();
        let strategy = PromptStrategy::new(StrategyKind::Sequential, 50).expect("strategy");
        let bundles: Vec<PromptBundle> = instances
            .iter()
            .zip(&sets)
            .map(|(inst, set)| {
                build_prompt(&templates, &catalog, &inst.prefix, set, strategy, OutputMode::Title, "movies")
                    .expect("prompt")
            })
            .collect();
        let sim = SimLlm::new(
            SimLlmParams {
                noise_sigma: 0.1,
                halluc_rate: 0.05,
                ..Default::default()
            },
            catalog.clone(),
            popularity,
            "bench",
        )
        .expect("sim");
        let outputs = bundles
            .iter()
            .map(|b| {
                sim.complete(&CompletionRequest {
                    bundle: b,
                    ground_truth: None,
                    attempt: 0,
                })
                .expect("sim completion")
            })
            .collect();
        Fixture {
            catalog,
            training,
            instances,
            sets,
            bundles,
            outputs,
        }
    }
}
