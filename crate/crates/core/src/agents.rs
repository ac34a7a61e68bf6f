//! Detector and Extractor agents plus fund-level merging.
//!
//! Detection is recall-first: pages whose backend calls exhaust are treated
//! as positive and flagged. Extraction demotes rows that fail validation to
//! unmatched entries instead of dropping them, so the refinement loop always
//! sees the material it needs.

use serde_json::Value;

use crate::ingest::PageRecord;
use crate::llm::{
    complete_structured, prompts, Backend, PromptStrategy, StructuredRequest,
};
use crate::schema::{
    validate_json_holding, FieldValue, PageRef, Portfolio, SchemaRegistry, UnmatchedHolding,
};

/// One page-level detection decision.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub doc_id: String,
    pub page_no: u32,
    pub strategy: PromptStrategy,
    pub has_portfolio_table: bool,
    /// Present iff the strategy produces reasoning (structured_cot,
    /// full_schema) and the call succeeded.
    pub chain_of_thought: Option<String>,
    /// Set when the backend was exhausted; such pages count as positive.
    pub error: Option<String>,
}

/// A merged per-fund portfolio with recomputed declared value.
#[derive(Debug, Clone)]
pub struct FundPortfolio {
    pub doc_id: String,
    pub fund_name: String,
    pub pages: Vec<u32>,
    pub portfolio: Portfolio,
    /// Sum of typed holdings' market values, thousands-normalized. Unmatched
    /// values are excluded: they are the unaccounted gap.
    pub declared_value: f64,
}

/// Case-folded, whitespace-collapsed, punctuation-stripped fund name used
/// for entity resolution and label joins.
pub fn normalize_fund_name(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Filesystem-safe slug for per-fund artifact names.
pub fn fund_slug(name: &str) -> String {
    let slug = normalize_fund_name(name).replace(' ', "-");
    if slug.is_empty() {
        "unnamed-fund".to_string()
    } else {
        slug
    }
}

fn page_ref(page: &PageRecord) -> PageRef {
    PageRef {
        doc_id: page.doc_id.clone(),
        page_no: page.page_no,
    }
}

/// Converts a backend `portfolio` object into a validated [`Portfolio`].
///
/// Rows are matched to classes via their plural key; unknown classes and
/// validation failures are demoted to unmatched entries, never dropped.
pub fn portfolio_from_response(
    portfolio_value: &Value,
    registry: &SchemaRegistry,
    source: &PageRef,
) -> Portfolio {
    let mut portfolio = Portfolio::default();
    let Some(obj) = portfolio_value.as_object() else {
        return portfolio;
    };
    portfolio.fund_name = obj
        .get("fund_name")
        .and_then(Value::as_str)
        .map(str::to_string)
        .filter(|s| !s.is_empty());
    portfolio.value_in_thousands = obj
        .get("value_in_thousands")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    for (key, rows_value) in obj {
        if key == "fund_name" || key == "value_in_thousands" {
            continue;
        }
        let Some(rows) = rows_value.as_array() else {
            continue;
        };
        for row in rows {
            let Some(row_obj) = row.as_object() else {
                continue;
            };
            let description = row_obj
                .get("description")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| row.to_string());
            let market_value = row_obj.get("market_value").and_then(Value::as_f64);
            let demoted_name = |class_name: Option<&str>| {
                row_obj
                    .get("instrument_type")
                    .and_then(Value::as_str)
                    .or(class_name)
                    .or_else(|| row_obj.get("name").and_then(Value::as_str))
                    .unwrap_or("Unknown")
                    .to_string()
            };
            if key == "other_instruments" {
                portfolio.other_instruments.push(UnmatchedHolding {
                    description,
                    name: row_obj
                        .get("name")
                        .and_then(Value::as_str)
                        .unwrap_or("Unknown")
                        .to_string(),
                    market_value,
                    source: source.clone(),
                });
                continue;
            }
            match registry.class_for_plural(key) {
                Some(class) => match validate_json_holding(row_obj, class, source) {
                    Ok(holding) => portfolio.holdings.push(holding),
                    Err(errors) => {
                        log::debug!("demoting {key} row: {errors}");
                        portfolio.other_instruments.push(UnmatchedHolding {
                            description,
                            name: demoted_name(Some(class.name.as_str())),
                            market_value,
                            source: source.clone(),
                        });
                    }
                },
                None => portfolio.other_instruments.push(UnmatchedHolding {
                    description,
                    name: demoted_name(None),
                    market_value,
                    source: source.clone(),
                }),
            }
        }
    }
    portfolio
}

fn yes_no_detect(
    page: &PageRecord,
    registry: &SchemaRegistry,
    backend: &dyn Backend,
) -> Result<bool, String> {
    let prompt = prompts::build_detection_prompt(PromptStrategy::RawText, page, registry);
    let mut current = prompt.clone();
    let mut last_error = String::new();
    for _ in 0..=crate::llm::DEFAULT_MAX_RETRIES {
        match backend.complete(&current) {
            Ok(raw) => {
                let answer = raw.trim().to_lowercase();
                if answer.starts_with("yes") {
                    return Ok(true);
                }
                if answer.starts_with("no") {
                    return Ok(false);
                }
                last_error = format!("expected yes/no, got {raw:?}");
                current = format!(
                    "{prompt}\n\nYour previous output failed validation: {last_error}. \
                     Reply with 'yes' or 'no' only."
                );
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(last_error)
}

/// Detects whether a page holds a portfolio table under the given strategy.
pub fn detect(
    page: &PageRecord,
    strategy: PromptStrategy,
    registry: &SchemaRegistry,
    backend: &dyn Backend,
) -> DetectionResult {
    detect_and_extract(page, strategy, registry, backend).0
}

/// Runs detection and, when the strategy yields one, returns the portfolio
/// from the same call. `full_schema` detects and extracts in a single
/// combined call; `direct_schema` extracts and derives the boolean from
/// whether any sub-model instantiated.
pub fn detect_and_extract(
    page: &PageRecord,
    strategy: PromptStrategy,
    registry: &SchemaRegistry,
    backend: &dyn Backend,
) -> (DetectionResult, Option<Portfolio>) {
    let mut result = DetectionResult {
        doc_id: page.doc_id.clone(),
        page_no: page.page_no,
        strategy,
        has_portfolio_table: false,
        chain_of_thought: None,
        error: None,
    };
    match strategy {
        PromptStrategy::RawText => match yes_no_detect(page, registry, backend) {
            Ok(answer) => result.has_portfolio_table = answer,
            Err(error) => {
                // Recall-first: failed detection counts as positive.
                result.has_portfolio_table = true;
                result.error = Some(error);
            }
        },
        PromptStrategy::StructuredCot => {
            let request = StructuredRequest::new(
                prompts::build_detection_prompt(strategy, page, registry),
                prompts::detection_response_schema(),
            );
            match complete_structured(backend, &request) {
                Ok(response) => match response.parsed {
                    Some(value) => {
                        result.has_portfolio_table = value["has_portfolio_table"]
                            .as_bool()
                            .unwrap_or(false);
                        result.chain_of_thought = value["chain_of_thought"]
                            .as_str()
                            .map(str::to_string);
                    }
                    None => {
                        result.has_portfolio_table = true;
                        result.error = Some(response.errors_seen.join("; "));
                    }
                },
                Err(e) => {
                    result.has_portfolio_table = true;
                    result.error = Some(e.to_string());
                }
            }
        }
        PromptStrategy::FullSchema => {
            let request = StructuredRequest::new(
                prompts::build_detection_prompt(strategy, page, registry),
                prompts::combined_detection_response_schema(),
            );
            match complete_structured(backend, &request) {
                Ok(response) => match response.parsed {
                    Some(value) => {
                        result.has_portfolio_table = value["has_portfolio_table"]
                            .as_bool()
                            .unwrap_or(false);
                        result.chain_of_thought = value["chain_of_thought"]
                            .as_str()
                            .map(str::to_string);
                        let portfolio = value.get("portfolio").map(|p| {
                            portfolio_from_response(p, registry, &page_ref(page))
                        });
                        return (result, portfolio);
                    }
                    None => {
                        result.has_portfolio_table = true;
                        result.error = Some(response.errors_seen.join("; "));
                    }
                },
                Err(e) => {
                    result.has_portfolio_table = true;
                    result.error = Some(e.to_string());
                }
            }
        }
        PromptStrategy::DirectSchema => {
            let portfolio = extract(page, registry, backend);
            result.has_portfolio_table = !portfolio.is_empty();
            if let Some(error) = &portfolio.error {
                result.has_portfolio_table = true;
                result.error = Some(error.clone());
            }
            return (result, Some(portfolio));
        }
    }
    (result, None)
}

/// Extracts a page into a validated portfolio. Backend exhaustion yields an
/// empty portfolio carrying an error annotation.
pub fn extract(page: &PageRecord, registry: &SchemaRegistry, backend: &dyn Backend) -> Portfolio {
    let request = StructuredRequest::new(
        prompts::build_extraction_prompt(&page.raw_text),
        prompts::extraction_response_schema(),
    );
    let source = page_ref(page);
    match complete_structured(backend, &request) {
        Ok(response) => match response.parsed {
            Some(value) => portfolio_from_response(&value["portfolio"], registry, &source),
            None => Portfolio {
                error: Some(format!(
                    "extraction failed validation after {} attempts: {}",
                    response.attempts,
                    response.errors_seen.join("; ")
                )),
                ..Portfolio::default()
            },
        },
        Err(e) => Portfolio {
            error: Some(e.to_string()),
            ..Portfolio::default()
        },
    }
}

fn scale_portfolio_values(portfolio: &mut Portfolio, factor: f64) {
    for holding in &mut portfolio.holdings {
        if let Some(FieldValue::Decimal(v)) = holding.values.get_mut("market_value") {
            *v *= factor;
        }
    }
    for other in &mut portfolio.other_instruments {
        if let Some(v) = &mut other.market_value {
            *v *= factor;
        }
    }
}

/// Merges consecutive positive pages into per-fund portfolios.
///
/// Inputs are re-sorted by `(doc_id, page_no)`, so worker completion order
/// never changes the result. Pages with `value_in_thousands` have their
/// market values scaled by 1000 before summation; the merged portfolio is
/// unit-normalized (`value_in_thousands` false). An empty fund name inherits
/// the previous page's; a non-empty conflicting name starts a new fund, as
/// does a page-number gap without a matching name.
pub fn merge_funds(pages: Vec<(String, u32, Portfolio)>) -> Vec<FundPortfolio> {
    let mut pages = pages;
    pages.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));

    struct Group {
        doc_id: String,
        display_name: String,
        norm_name: String,
        pages: Vec<u32>,
        portfolio: Portfolio,
    }

    impl Group {
        fn finish(self) -> FundPortfolio {
            let declared_value = self.portfolio.declared_total();
            FundPortfolio {
                doc_id: self.doc_id,
                fund_name: self.display_name,
                pages: self.pages,
                portfolio: self.portfolio,
                declared_value,
            }
        }
    }

    let mut funds = Vec::new();
    let mut current: Option<Group> = None;
    for (doc_id, page_no, mut portfolio) in pages {
        if portfolio.value_in_thousands {
            scale_portfolio_values(&mut portfolio, 1000.0);
            portfolio.value_in_thousands = false;
        }
        let page_name = portfolio.fund_name.clone().unwrap_or_default();
        let page_norm = normalize_fund_name(&page_name);
        let start_new = match &current {
            None => true,
            Some(group) => {
                if group.doc_id != doc_id {
                    true
                } else {
                    let last_page = *group.pages.last().expect("group has pages");
                    let adjacent = page_no == last_page + 1;
                    let names_match = !page_norm.is_empty() && page_norm == group.norm_name;
                    if adjacent {
                        // Conflicting non-empty names split; empty inherits.
                        !page_norm.is_empty()
                            && !group.norm_name.is_empty()
                            && page_norm != group.norm_name
                    } else {
                        // Gap: continue only when the fund name carries across it.
                        !names_match
                    }
                }
            }
        };
        if start_new {
            if let Some(group) = current.take() {
                funds.push(group.finish());
            }
            current = Some(Group {
                doc_id,
                display_name: page_name.clone(),
                norm_name: page_norm,
                pages: vec![page_no],
                portfolio,
            });
        } else {
            let group = current.as_mut().expect("group exists");
            if group.norm_name.is_empty() && !page_norm.is_empty() {
                group.display_name = page_name.clone();
                group.norm_name = page_norm;
            }
            group.pages.push(page_no);
            group.portfolio.holdings.extend(portfolio.holdings);
            group
                .portfolio
                .other_instruments
                .extend(portfolio.other_instruments);
            if group.portfolio.fund_name.is_none() {
                group.portfolio.fund_name = portfolio.fund_name;
            }
        }
    }
    if let Some(group) = current.take() {
        funds.push(group.finish());
    }
    funds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::normalize_page;
    use crate::llm::MockBackend;
    use crate::schema::initial_registry;

    fn holdings_page() -> PageRecord {
        normalize_page(
            "d",
            2,
            "Global Multi-Asset Fund\nGBP 4,700,000 | UK Treasury 0% 19/02/2024 | 4668 | 1.48",
        )
    }

    fn prose_page() -> PageRecord {
        normalize_page(
            "d",
            1,
            "The fund seeks long-term capital growth.\nThere were no changes to the board.",
        )
    }

    #[test]
    fn detection_across_strategies() {
        let registry = initial_registry();
        let backend = MockBackend;
        for strategy in PromptStrategy::ALL {
            let positive = detect(&holdings_page(), strategy, &registry, &backend);
            assert!(positive.has_portfolio_table, "{strategy} missed holdings page");
            let negative = detect(&prose_page(), strategy, &registry, &backend);
            assert!(!negative.has_portfolio_table, "{strategy} flagged prose page");
            let wants_cot = matches!(
                strategy,
                PromptStrategy::StructuredCot | PromptStrategy::FullSchema
            );
            assert_eq!(positive.chain_of_thought.is_some(), wants_cot);
        }
    }

    #[test]
    fn full_schema_returns_portfolio_from_combined_call() {
        let registry = initial_registry();
        let (result, portfolio) = detect_and_extract(
            &holdings_page(),
            PromptStrategy::FullSchema,
            &registry,
            &MockBackend,
        );
        assert!(result.has_portfolio_table);
        let portfolio = portfolio.expect("combined call returns portfolio");
        assert_eq!(portfolio.holdings.len(), 1);
        assert_eq!(portfolio.holdings[0].class_name, "Debt");
    }

    #[test]
    fn extract_demotes_unknown_classes() {
        let registry = initial_registry();
        let page = normalize_page("d", 3, "Bought EUR Sold USD at 0.93035372 11/06/2024 | (282,515)");
        let portfolio = extract(&page, &registry, &MockBackend);
        assert!(portfolio.holdings.is_empty());
        assert_eq!(portfolio.other_instruments.len(), 1);
        assert_eq!(portfolio.other_instruments[0].name, "Currency Forward");
    }

    #[test]
    fn extract_empty_page() {
        let registry = initial_registry();
        let page = normalize_page("d", 4, "");
        let portfolio = extract(&page, &registry, &MockBackend);
        assert!(portfolio.is_empty());
        assert!(portfolio.error.is_none());
    }

    #[test]
    fn partition_no_row_vanishes() {
        let registry = initial_registry();
        let page = normalize_page(
            "d",
            5,
            "UK Treasury 0% 19/02/2024 | 4668\n\
             Bought EUR Sold USD at 0.93035372 11/06/2024 | (282,515)\n\
             Cash at bank | 1,844,776",
        );
        let portfolio = extract(&page, &registry, &MockBackend);
        assert_eq!(
            portfolio.holdings.len() + portfolio.other_instruments.len(),
            3
        );
    }

    fn portfolio_with(fund: Option<&str>, thousands: bool, values: &[f64]) -> Portfolio {
        let registry = initial_registry();
        let rows: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("Issuer {i} 1% 19/02/2024 | {v}"))
            .collect();
        let mut text = String::new();
        if let Some(fund) = fund {
            text.push_str(&format!("Fund: {fund}\n"));
        }
        text.push_str(&rows.join("\n"));
        let mut portfolio = crate::llm::mock_extract(&text, &registry);
        portfolio.value_in_thousands = thousands;
        portfolio
    }

    #[test]
    fn merge_consecutive_pages_sums_values() {
        let funds = merge_funds(vec![
            ("d".into(), 3, portfolio_with(Some("Fund A"), false, &[100.0])),
            ("d".into(), 4, portfolio_with(Some("Fund A"), false, &[200.0])),
        ]);
        assert_eq!(funds.len(), 1);
        assert_eq!(funds[0].pages, vec![3, 4]);
        assert_eq!(funds[0].declared_value, 300.0);
    }

    #[test]
    fn thousands_pages_scale_before_summation() {
        let funds = merge_funds(vec![(
            "d".into(),
            2,
            portfolio_with(Some("Fund A"), true, &[4668.0]),
        )]);
        assert_eq!(funds[0].declared_value, 4_668_000.0);
        assert!(!funds[0].portfolio.value_in_thousands);
    }

    #[test]
    fn conflicting_names_split_funds() {
        let funds = merge_funds(vec![
            ("d".into(), 2, portfolio_with(Some("Fund A"), false, &[1.0])),
            ("d".into(), 3, portfolio_with(Some("Fund B"), false, &[2.0])),
        ]);
        assert_eq!(funds.len(), 2);
    }

    #[test]
    fn empty_name_inherits_previous_page() {
        let funds = merge_funds(vec![
            ("d".into(), 2, portfolio_with(Some("Fund A"), false, &[1.0])),
            ("d".into(), 3, portfolio_with(None, false, &[2.0])),
        ]);
        assert_eq!(funds.len(), 1);
        assert_eq!(funds[0].fund_name, "Fund A");
        assert_eq!(funds[0].declared_value, 3.0);
    }

    #[test]
    fn gap_splits_unless_name_matches() {
        let split = merge_funds(vec![
            ("d".into(), 2, portfolio_with(Some("Fund A"), false, &[1.0])),
            ("d".into(), 5, portfolio_with(None, false, &[2.0])),
        ]);
        assert_eq!(split.len(), 2);
        let merged = merge_funds(vec![
            ("d".into(), 2, portfolio_with(Some("Fund A"), false, &[1.0])),
            ("d".into(), 5, portfolio_with(Some("fund  a"), false, &[2.0])),
        ]);
        assert_eq!(merged.len(), 1);
    }

    #[test]
    fn merge_is_order_invariant() {
        let make = || {
            vec![
                ("d".into(), 3, portfolio_with(Some("Fund A"), false, &[100.0])),
                ("d".into(), 2, portfolio_with(Some("Fund A"), false, &[50.0])),
                ("e".into(), 1, portfolio_with(Some("Fund B"), false, &[7.0])),
            ]
        };
        let sorted = merge_funds(make());
        let mut shuffled = make();
        shuffled.reverse();
        let reversed = merge_funds(shuffled);
        assert_eq!(sorted.len(), reversed.len());
        for (a, b) in sorted.iter().zip(&reversed) {
            assert_eq!(a.doc_id, b.doc_id);
            assert_eq!(a.declared_value, b.declared_value);
            assert_eq!(a.pages, b.pages);
        }
    }

    #[test]
    fn unmatched_values_excluded_from_declared() {
        let registry = initial_registry();
        let portfolio = crate::llm::mock_extract(
            "Issuer 1% 19/02/2024 | 100\nCash at bank | 900",
            &registry,
        );
        let funds = merge_funds(vec![("d".into(), 2, portfolio)]);
        assert_eq!(funds[0].declared_value, 100.0);
    }

    #[test]
    fn fund_name_normalization() {
        assert_eq!(normalize_fund_name("  Global  Multi-Asset Fund "), "global multi asset fund");
        assert_eq!(fund_slug("Global Multi-Asset Fund"), "global-multi-asset-fund");
        assert_eq!(fund_slug(""), "unnamed-fund");
    }
}
