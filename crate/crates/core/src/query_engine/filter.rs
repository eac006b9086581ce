use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RetrievalBundle;
use crate::llm_gateway::{strip_code_fence, ChatRequest, Gateway, GatewayError, TokenUsage};
use crate::prompts;
use crate::text::{collapse_whitespace, count_tokens, truncate_tokens};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub description: String,
    pub score: f64,
}

/// Scored key points drawn from one layer; may be empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub layer: usize,
    pub points: Vec<KeyPoint>,
}

fn score_of(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses a filter response; scores are clamped to `[0, 100]` and points
/// without a description are dropped.
pub fn parse_points(text: &str) -> Result<Vec<KeyPoint>, GatewayError> {
    let v: Value = serde_json::from_str(strip_code_fence(text))
        .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let list = match v.get("points") {
        Some(Value::Array(a)) => a,
        Some(Value::Null) | None => return Ok(Vec::new()),
        Some(_) => return Err(GatewayError::MalformedResponse("\"points\" is not a list".into())),
    };
    let mut points = Vec::new();
    for p in list {
        let description = collapse_whitespace(p.get("description").and_then(Value::as_str).unwrap_or(""));
        if description.is_empty() {
            continue;
        }
        let score = p.get("score").and_then(score_of).filter(|s| s.is_finite()).unwrap_or(0.0);
        points.push(KeyPoint { description, score: score.clamp(0.0, 100.0) });
    }
    Ok(points)
}

/// One filter call per layer context, run concurrently. A layer whose
/// response cannot be used yields an empty report. Returns the reports in
/// bundle order and the chat usage spent.
/// The filter prompt for one layer. Question and context together stay
/// within `budget` tokens; the context gives way first.
pub fn filter_prompt(question: &str, context: &str, budget: usize) -> String {
    let question = truncate_tokens(question, budget);
    let context = truncate_tokens(context, budget - count_tokens(question));
    prompts::render(prompts::FILTER, &[("user_query", question), ("context_data", context)])
}

pub fn filter_reports(
    gateway: &Gateway,
    question: &str,
    bundle: &RetrievalBundle,
    context_budget: usize,
) -> (Vec<AnalysisReport>, TokenUsage) {
    let results = gateway.fan_out(&bundle.per_layer, |ctx| {
        let prompt = filter_prompt(question, &ctx.context, context_budget);
        let response = ChatRequest::new(prompt).and_then(|r| gateway.chat(&r.json()))?;
        let points = parse_points(&response.text)?;
        Ok::<_, GatewayError>((points, response.usage))
    });
    let mut usage = TokenUsage::default();
    let reports = bundle
        .per_layer
        .iter()
        .zip(results)
        .map(|(ctx, r)| {
            let points = match r {
                Ok((points, u)) => {
                    usage += u;
                    points
                }
                Err(e) => {
                    log::warn!("filter on layer {} failed, using an empty report: {e}", ctx.layer);
                    Vec::new()
                }
            };
            AnalysisReport { layer: ctx.layer, points }
        })
        .collect();
    (reports, usage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_scores() {
        let p = parse_points(r#"{"points":[{"description":"a","score":150},{"description":"b","score":-3},{"description":"c","score":"42.5"}]}"#).unwrap();
        let scores: Vec<f64> = p.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![100.0, 0.0, 42.5]);
    }

    #[test]
    fn tolerates_fences_and_missing_fields() {
        let p = parse_points("```json\n{\"points\":[{\"description\":\"x\"},{\"score\":5}]}\n```").unwrap();
        assert_eq!(p, vec![KeyPoint { description: "x".into(), score: 0.0 }]);
        assert!(parse_points("{}").unwrap().is_empty());
        assert!(parse_points(r#"{"points": 3}"#).is_err());
    }
}
