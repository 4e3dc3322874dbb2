use super::{render_answer, Completer, CompletionRequest, LlmError};

/// Perfect ranker: the ground truth first, then everything else in slot
/// order. Without a ground-truth candidate it answers in slot order.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLlm;

impl Completer for OracleLlm {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError> {
        let b = req.bundle;
        let gt = req.ground_truth.and_then(|g| b.slot_of(g));
        let mut order: Vec<usize> = gt.into_iter().collect();
        order.extend((0..b.m()).filter(|&s| Some(s) != gt));
        Ok(render_answer(b, &order).join("\n"))
    }

    fn cache_identity(&self) -> String {
        "oracle".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::parse_output;
    use crate::promptkit::{CandidateSlot, OutputMode, PromptBundle, StrategyKind};
    use crate::ItemId;

    fn bundle(mode: OutputMode) -> PromptBundle {
        PromptBundle {
            user: "u".into(),
            text: "p".into(),
            candidate_slots: ["Alpha", "Beta's", "Gamma"]
                .iter()
                .enumerate()
                .map(|(slot, t)| CandidateSlot {
                    slot,
                    item: ItemId::new(format!("c{slot}")),
                    title: t.to_string(),
                })
                .collect(),
            output_mode: mode,
            strategy: StrategyKind::Sequential,
            domain: "movies".into(),
            history: vec![],
        }
    }

    #[test]
    fn ground_truth_first_in_both_modes() {
        for mode in [OutputMode::Title, OutputMode::Index] {
            let b = bundle(mode);
            let gt = ItemId::from("c2");
            let req = CompletionRequest {
                bundle: &b,
                ground_truth: Some(&gt),
                attempt: 0,
            };
            let out = OracleLlm.complete(&req).unwrap();
            let r = parse_output(&out, &b, Some(&gt));
            assert_eq!(r.gt_rank, Some(0));
            assert_eq!(r.slots, [2, 0, 1]);
            let absent = ItemId::from("zz");
            let req = CompletionRequest {
                ground_truth: Some(&absent),
                ..req
            };
            let r = parse_output(&OracleLlm.complete(&req).unwrap(), &b, None);
            assert_eq!(r.slots, [0, 1, 2]);
        }
    }
}
