use serde::{Deserialize, Serialize};

use super::AnalysisReport;
use crate::llm_gateway::{ChatRequest, Gateway, GatewayError, TokenUsage};
use crate::prompts;
use crate::text::{count_tokens, truncate_tokens};

pub const DEFAULT_MERGE_BUDGET: usize = 8000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPoint {
    pub layer: usize,
    pub description: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question: String,
    #[serde(rename = "answer")]
    pub text: String,
    pub used_points: Vec<RankedPoint>,
    pub usage: TokenUsage,
}

/// All points, by score descending; ties go to the lower layer, then to
/// the earlier report position.
pub fn rank_points(reports: &[AnalysisReport]) -> Vec<RankedPoint> {
    let mut pool: Vec<(usize, RankedPoint)> = reports
        .iter()
        .flat_map(|r| {
            r.points.iter().map(move |p| RankedPoint { layer: r.layer, description: p.description.clone(), score: p.score })
        })
        .enumerate()
        .collect();
    pool.sort_by(|(ia, a), (ib, b)| {
        b.score.total_cmp(&a.score).then(a.layer.cmp(&b.layer)).then(ia.cmp(ib))
    });
    pool.into_iter().map(|(_, p)| p).collect()
}

fn report_line(n: usize, p: &RankedPoint) -> String {
    format!("Report {n} (layer {}, score {:.1}): {}", p.layer, p.score, p.description)
}

/// Takes ranked points while their rendered lines fit in `budget` tokens,
/// stopping at the first one that does not.
pub fn pack_points(ranked: &[RankedPoint], budget: usize) -> (Vec<RankedPoint>, String) {
    let mut used = Vec::new();
    let mut lines = Vec::new();
    let mut spent = 0;
    for p in ranked {
        let line = report_line(used.len() + 1, p);
        let cost = count_tokens(&line);
        if spent + cost > budget {
            break;
        }
        spent += cost;
        lines.push(line);
        used.push(p.clone());
    }
    (used, lines.join("\n"))
}

/// The merge prompt for the given question and reports. The question,
/// format text and packed reports together stay within `token_budget`.
pub fn merge_prompt(
    question: &str,
    reports: &[AnalysisReport],
    token_budget: usize,
    response_format: &str,
) -> (String, Vec<RankedPoint>) {
    let question = truncate_tokens(question, token_budget);
    let format = truncate_tokens(response_format, token_budget - count_tokens(question));
    let remaining = token_budget - count_tokens(question) - count_tokens(format);
    let (used, report_data) = pack_points(&rank_points(reports), remaining);
    let prompt = prompts::render(
        prompts::MERGE,
        &[("response_format", format), ("user_query", question), ("report_data", &report_data)],
    );
    (prompt, used)
}

/// Packs the ranked points and makes the single merge call. An empty pool
/// still calls the model.
pub fn merge_answer(
    gateway: &Gateway,
    question: &str,
    reports: &[AnalysisReport],
    token_budget: usize,
    response_format: &str,
) -> Result<Answer, GatewayError> {
    let (prompt, used_points) = merge_prompt(question, reports, token_budget, response_format);
    let response = gateway.chat(&ChatRequest::new(prompt)?)?;
    Ok(Answer { question: question.to_string(), text: response.text.trim().to_string(), used_points, usage: response.usage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query_engine::KeyPoint;
    use proptest::prelude::*;

    fn report(layer: usize, points: &[(&str, f64)]) -> AnalysisReport {
        AnalysisReport {
            layer,
            points: points.iter().map(|(d, s)| KeyPoint { description: d.to_string(), score: *s }).collect(),
        }
    }

    #[test]
    fn ties_prefer_lower_layer_then_order() {
        let reports = vec![report(2, &[("c", 50.0)]), report(0, &[("a", 50.0), ("b", 50.0)]), report(1, &[("d", 90.0)])];
        let order: Vec<String> = rank_points(&reports).into_iter().map(|p| p.description).collect();
        assert_eq!(order, vec!["d", "a", "b", "c"]);
    }

    #[test]
    fn budget_fitting_two_of_three() {
        let reports = vec![report(0, &[("alpha beta", 80.0), ("gamma delta", 40.0), ("eps zeta", 10.0)])];
        let ranked = rank_points(&reports);
        let two: usize = ranked[..2].iter().enumerate().map(|(i, p)| count_tokens(&report_line(i + 1, p))).sum();
        let (used, _) = pack_points(&ranked, two);
        let scores: Vec<f64> = used.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![80.0, 40.0]);
    }

    #[test]
    fn greedy_stops_at_first_misfit() {
        let long = "word ".repeat(50);
        let reports = vec![report(0, &[("short", 90.0), (&long, 60.0), ("tiny", 30.0)])];
        let (used, _) = pack_points(&rank_points(&reports), 20);
        assert_eq!(used.len(), 1);
    }

    fn arb_reports() -> impl Strategy<Value = Vec<AnalysisReport>> {
        prop::collection::vec(
            prop::collection::vec(("[a-z]{1,8}( [a-z]{1,8}){0,12}", 0.0f64..100.0), 0..6),
            1..4,
        )
        .prop_map(|layers| {
            layers
                .into_iter()
                .enumerate()
                .map(|(l, pts)| AnalysisReport {
                    layer: l,
                    points: pts.into_iter().map(|(d, s)| KeyPoint { description: d, score: s }).collect(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn prompt_within_budget(reports in arb_reports(), question in "[a-zA-Z ?]{1,200}", budget in 0usize..300) {
            let (prompt, used) = merge_prompt(&question, &reports, budget, prompts::DEFAULT_RESPONSE_FORMAT);
            let overhead = prompts::template_overhead(prompts::MERGE, &["response_format", "user_query", "report_data"]);
            prop_assert!(count_tokens(&prompt) <= budget + overhead);
            prop_assert!(used.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn used_is_ranked_prefix(reports in arb_reports(), budget in 0usize..200) {
            let ranked = rank_points(&reports);
            let (used, _) = pack_points(&ranked, budget);
            prop_assert_eq!(&ranked[..used.len()], &used[..]);
            // Any point left out scores no higher than every used one.
            if let (Some(last), Some(next)) = (used.last(), ranked.get(used.len())) {
                prop_assert!(next.score <= last.score);
            }
        }
    }
}
