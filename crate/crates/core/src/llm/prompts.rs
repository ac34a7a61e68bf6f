//! Prompt builders and response schemas for every agent call.

use serde_json::json;

use super::PromptStrategy;
use crate::ingest::PageRecord;
use crate::refine::SchemaSuggestion;
use crate::schema::{SchemaRegistry, UnmatchedHolding};

pub const CLUSTER_PROMPT_HEADER: &str =
    "Group the following schema suggestions into clusters of semantically equivalent \
     instrument classes.";

/// Detection prompt for the given strategy. The direct-schema strategy omits
/// any detection question and goes straight to extraction.
pub fn build_detection_prompt(
    strategy: PromptStrategy,
    page: &PageRecord,
    registry: &SchemaRegistry,
) -> String {
    match strategy {
        PromptStrategy::RawText => format!(
            "Is there a table present in the following text? Reply with 'yes' or 'no'.\n\n\
             Text:\n{}",
            page.raw_text
        ),
        PromptStrategy::StructuredCot => format!(
            "Analyze the following text and determine if it contains a portfolio table. \
             Provide your chain of thought and final decision in a structured output \
             response model that includes 'chain_of_thought' and 'has_portfolio_table' \
             fields.\n\nText:\n{}",
            page.raw_text
        ),
        PromptStrategy::FullSchema => format!(
            "Using the provided Portfolio JSON schema, analyze the following text and \
             if it can be extracted into that schema. Provide your chain of thought. \
             You will output a response model object including 'chain_of_thought', \
             'has_portfolio_table', and 'extracted portfolio'.\n\n\
             Schema:\n{}\n\nText:\n{}",
            serde_json::to_string_pretty(&registry.portfolio_json_schema())
                .expect("schema serializes"),
            page.raw_text
        ),
        PromptStrategy::DirectSchema => build_extraction_prompt(&page.raw_text),
    }
}

/// Extraction prompt: applies the portfolio schema to page text and asks for
/// a response object with a `portfolio` field.
pub fn build_extraction_prompt(page_text: &str) -> String {
    format!(
        "Extract a portfolio table from the following text following the Portfolio schema. \
         Return a response object with a 'portfolio' field.\n\nText:\n{page_text}"
    )
}

/// Schema-refinement prompt over one batch of unmatched holdings, optionally
/// carrying suggestions from prior batches.
pub fn build_recommender_prompt(
    registry: &SchemaRegistry,
    batch: &[UnmatchedHolding],
    batch_size: usize,
    previous: Option<&[SchemaSuggestion]>,
) -> String {
    let batch_json = serde_json::to_string_pretty(
        &batch
            .iter()
            .map(|h| h.description.as_str())
            .collect::<Vec<_>>(),
    )
    .expect("batch serializes");
    let previous_json = match previous {
        Some(items) if !items.is_empty() => {
            serde_json::to_string_pretty(items).expect("suggestions serialize")
        }
        _ => "None".to_string(),
    };
    format!(
        "You are a schema refinement assistant for financial tables. Your task is:\n\
         - Review a batch of {batch_size} unmatched financial holdings.\n\
         - Given the current schema (JSON below), propose new classes or modifications \
         so each holding can be classified.\n\
         - If a holding matches a previously suggested class, propose new optional fields \
         if needed.\n\
         - Return your schema suggestions as a list of SchemaSuggestion model objects.\n\n\
         Current Portfolio Schema:\n{schema}\n\n\
         Batch of unmatched holdings:\n{batch_json}\n\n\
         Previously seen suggestions (optional, from prior batches):\n{previous_json}\n\n\
         For each unique holding, propose:\n\
         - A new schema class, or a modification to an existing class (add or refine \
         fields).\n\
         - Specify all required and optional fields with type hints.\n\
         - If similar to an earlier suggestion, mark only new fields as optional.\n\
         - Provide a sample match (the original holding string).\n\
         - Output format: a JSON list of SchemaSuggestion objects with 'name', \
         'suggested_schema', and 'example' fields.",
        schema = serde_json::to_string_pretty(&registry.portfolio_json_schema())
            .expect("schema serializes"),
    )
}

/// Clustering prompt for aggregation step 2: groups deduplicated suggestions
/// into semantically equivalent clusters.
pub fn build_cluster_prompt(suggestions: &[SchemaSuggestion]) -> String {
    let listing: Vec<serde_json::Value> = suggestions
        .iter()
        .enumerate()
        .map(|(idx, s)| json!({ "index": idx, "name": s.name, "example": s.example }))
        .collect();
    format!(
        "{CLUSTER_PROMPT_HEADER} Two suggestions belong in one cluster when they describe \
         the same instrument type. Respond with JSON of the form \
         {{\"clusters\": [[0, 2], [1]]}} where every index appears in exactly one \
         cluster.\n\nSuggestions:\n{}",
        serde_json::to_string_pretty(&listing).expect("listing serializes")
    )
}

pub fn detection_response_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "chain_of_thought": { "type": "string" },
            "has_portfolio_table": { "type": "boolean" },
        },
        "required": ["chain_of_thought", "has_portfolio_table"],
    })
}

pub fn combined_detection_response_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "chain_of_thought": { "type": "string" },
            "has_portfolio_table": { "type": "boolean" },
            "portfolio": { "type": "object" },
        },
        "required": ["chain_of_thought", "has_portfolio_table"],
    })
}

/// Extraction responses are checked structurally only; the typed validation
/// happens in the schema module so failing rows can be demoted, not dropped.
pub fn extraction_response_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": { "portfolio": { "type": "object" } },
        "required": ["portfolio"],
    })
}

pub fn suggestion_response_schema() -> serde_json::Value {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "properties": {
                "name": { "type": "string" },
                "suggested_schema": { "type": "string" },
                "example": { "type": "string" },
            },
            "required": ["name", "suggested_schema", "example"],
        },
    })
}

pub fn cluster_response_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "clusters": {
                "type": "array",
                "items": { "type": "array", "items": { "type": "integer" } },
            },
        },
        "required": ["clusters"],
    })
}
