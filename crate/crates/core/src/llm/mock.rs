//! Deterministic rule-based backend standing in for the LLM.
//!
//! The mock answers every prompt kind the pipeline issues — detection,
//! extraction, schema suggestion, and suggestion clustering — from
//! line-oriented rules over the embedded page text. Byte-identical inputs
//! produce structurally identical outputs.

use std::collections::BTreeMap;

use regex::Regex;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::prompts::CLUSTER_PROMPT_HEADER;
use super::{Backend, BackendError};
use crate::schema::{
    currency_forward_schema_json, plural_key_for, validate_json_holding, PageRef, Portfolio,
    SchemaRegistry, UnmatchedHolding,
};

/// Suggestion budget per recommender call. A single call proposes classes
/// for the most prominent row groups in its batch, the way a bounded-context
/// model would, so rare classes in large batches go unsuggested.
pub const MAX_SUGGESTIONS_PER_CALL: usize = 8;

/// Row groups with at least this many examples in a batch get the canonical
/// class name; thinner evidence yields a decorated name variant.
const CANONICAL_MIN_ROWS: usize = 3;

const NAME_VARIANTS: [&str; 5] = ["", " Contract", " Instrument", " Holding", " Position"];

struct Patterns {
    currency_forward: Regex,
    debt: Regex,
    eln: Regex,
    eln_token: Regex,
    option_type: Regex,
    strike_date: Regex,
    underlying_index: Regex,
    underlying_traded: Regex,
    trailing_strike: Regex,
    future_token: Regex,
    month_year: Regex,
    trailing_date: Regex,
    fund_heading: Regex,
    series_marker: Regex,
}

fn patterns() -> &'static Patterns {
    use std::sync::OnceLock;
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let months = "January|February|March|April|May|June|July|August|September|October|\
                      November|December";
        Patterns {
            currency_forward: Regex::new(
                r"^Bought ([A-Z]{3}) Sold ([A-Z]{3}) at (\d+(?:\.\d+)?) (\d{2}/\d{2}/\d{4})$",
            )
            .expect("regex"),
            debt: Regex::new(r"^(.+?) (\d+(?:\.\d+)?)% (\d{2}/\d{2}/\d{4})$").expect("regex"),
            eln: Regex::new(r"^(\S+) \((.+)\) ELN (\d{2}/\d{2}/\d{4})").expect("regex"),
            eln_token: Regex::new(r"\bELN\b").expect("regex"),
            option_type: Regex::new(r"\b(Put|Call)\b").expect("regex"),
            strike_date: Regex::new(&format!(
                r"(\d+(?:\.\d+)?) ((?:{months}) \d{{4}}|\d{{2}}/\d{{2}}/\d{{4}})\s*$"
            ))
            .expect("regex"),
            underlying_index: Regex::new(r"^(.+?) (?:Put|Call) Option\b").expect("regex"),
            underlying_traded: Regex::new(r"^(?:Purchased |Written )?(?:Put|Call) (.+?) \d")
                .expect("regex"),
            trailing_strike: Regex::new(r"(\d+(?:\.\d+)?)\s*$").expect("regex"),
            future_token: Regex::new(r"(?i)\bfutures?\b").expect("regex"),
            month_year: Regex::new(&format!(r"(?:{months}) \d{{4}}")).expect("regex"),
            trailing_date: Regex::new(r"(\d{2}/\d{2}/\d{4})\+?\s*$").expect("regex"),
            fund_heading: Regex::new(r"^[A-Za-z][A-Za-z &'\-]{1,70} Fund$").expect("regex"),
            series_marker: Regex::new(r"^(.{2,60}?) #\d+$").expect("regex"),
        }
    })
}

/// One rule-classified row before validation: the class the rules assigned
/// plus the raw field map. `Other` marks rows no rule matched.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub class_name: String,
    pub fields: Map<String, Value>,
    pub description: String,
    pub market_value: Option<f64>,
}

/// Parsed page content: fund metadata plus candidate rows in page order.
#[derive(Debug, Clone, Default)]
pub struct PageCandidates {
    pub fund_name: Option<String>,
    pub value_in_thousands: bool,
    pub rows: Vec<CandidateRow>,
}

fn iso_date(text: &str) -> Option<String> {
    crate::schema::parse_date_text(text).map(|d| format!("{}T00:00:00", d.format("%Y-%m-%d")))
}

fn is_numeric_cell(cell: &str) -> bool {
    crate::schema::parse_decimal_text(cell).is_some()
}

/// Classifies a description cell into a typed candidate. Returns `None` for
/// rows no instrument rule matches.
pub(crate) fn classify_description(desc: &str) -> Option<(String, Map<String, Value>)> {
    let p = patterns();
    let mut fields = Map::new();
    if let Some(caps) = p.currency_forward.captures(desc) {
        fields.insert("currency_pair".into(), json!(format!("{}/{}", &caps[1], &caps[2])));
        fields.insert(
            "forward_rate".into(),
            json!(caps[3].parse::<f64>().expect("matched decimal")),
        );
        if let Some(date) = iso_date(&caps[4]) {
            fields.insert("settlement_date".into(), json!(date));
        }
        return Some(("Currency Forward".to_string(), fields));
    }
    if p.eln_token.is_match(desc) {
        if let Some(caps) = p.eln.captures(desc) {
            fields.insert("issuer".into(), json!(&caps[1]));
            fields.insert("product".into(), json!(&caps[2]));
            if let Some(date) = iso_date(&caps[3]) {
                fields.insert("maturity_date".into(), json!(date));
            }
        }
        return Some(("EquityLinkedNote".to_string(), fields));
    }
    if let Some(type_caps) = p.option_type.captures(desc) {
        fields.insert("option_type".into(), json!(&type_caps[1]));
        if let Some(caps) = p.strike_date.captures(desc) {
            fields.insert(
                "strike_price".into(),
                json!(caps[1].parse::<f64>().expect("matched decimal")),
            );
            if let Some(date) = iso_date(&caps[2]) {
                fields.insert("expiration_date".into(), json!(date));
            }
        } else if let Some(caps) = p.trailing_strike.captures(desc) {
            fields.insert(
                "strike_price".into(),
                json!(caps[1].parse::<f64>().expect("matched decimal")),
            );
        }
        let underlying = p
            .underlying_index
            .captures(desc)
            .or_else(|| p.underlying_traded.captures(desc))
            .map(|caps| caps[1].trim().to_string());
        if let Some(underlying) = underlying {
            fields.insert("underlying".into(), json!(underlying));
        }
        return Some(("Option".to_string(), fields));
    }
    if p.future_token.is_match(desc) {
        let expiry = p
            .trailing_date
            .captures(desc)
            .map(|caps| caps[1].to_string())
            .or_else(|| p.month_year.find(desc).map(|m| m.as_str().to_string()));
        if let Some(date) = expiry.as_deref().and_then(iso_date) {
            fields.insert("expiration_date".into(), json!(date));
        }
        return Some(("Future".to_string(), fields));
    }
    if let Some(caps) = p.debt.captures(desc) {
        fields.insert("issuer".into(), json!(caps[1].trim()));
        fields.insert(
            "coupon_rate".into(),
            json!(caps[2].parse::<f64>().expect("matched decimal")),
        );
        if let Some(date) = iso_date(&caps[3]) {
            fields.insert("maturity_date".into(), json!(date));
        }
        return Some(("Debt".to_string(), fields));
    }
    None
}

fn suggested_name_for(desc: &str) -> String {
    let p = patterns();
    if let Some(caps) = p.series_marker.captures(desc) {
        return caps[1].trim().to_string();
    }
    let lower = desc.to_ascii_lowercase();
    for (needle, name) in [
        ("cash", "Cash"),
        ("deposit", "Deposit"),
        ("receivable", "Receivable"),
        ("liabilit", "Liability"),
        ("payable", "Payable"),
        ("prepaid", "Prepaid Expense"),
        ("net other assets", "Net Assets"),
        ("net assets", "Net Assets"),
        ("total", "Subtotal"),
    ] {
        if lower.contains(needle) {
            return name.to_string();
        }
    }
    "Unclassified Asset".to_string()
}

fn literal_tag_for(class_name: &str) -> &str {
    match class_name {
        "EquityLinkedNote" => "Equity Linked Note",
        other => other,
    }
}

/// Builds a typed or `Other` candidate for one description plus numerics.
pub(crate) fn candidate_for(
    desc: &str,
    quantity: Option<f64>,
    market_value: Option<f64>,
) -> CandidateRow {
    match classify_description(desc) {
        Some((class_name, mut fields)) => {
            fields.insert("instrument_type".into(), json!(literal_tag_for(&class_name)));
            fields.insert("description".into(), json!(desc));
            if let Some(quantity) = quantity {
                fields.insert("quantity".into(), json!(quantity));
            }
            if let Some(mv) = market_value {
                fields.insert("market_value".into(), json!(mv));
            }
            CandidateRow {
                class_name,
                fields,
                description: desc.to_string(),
                market_value,
            }
        }
        None => {
            let mut fields = Map::new();
            fields.insert("description".into(), json!(desc));
            fields.insert("name".into(), json!(suggested_name_for(desc)));
            fields.insert("market_value".into(), match market_value {
                Some(mv) => json!(mv),
                None => Value::Null,
            });
            CandidateRow {
                class_name: "Other".to_string(),
                fields,
                description: desc.to_string(),
                market_value,
            }
        }
    }
}

fn classify_line(line: &str) -> Option<CandidateRow> {
    if line.contains('|') {
        let cells: Vec<&str> = line.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
        if cells.len() < 2 {
            return None;
        }
        let desc_idx = cells.iter().position(|c| !is_numeric_cell(c))?;
        let desc = cells[desc_idx];
        let before: Vec<f64> = cells[..desc_idx]
            .iter()
            .filter(|c| !c.ends_with('%'))
            .filter_map(|c| crate::schema::parse_decimal_text(c))
            .collect();
        let after: Vec<f64> = cells[desc_idx + 1..]
            .iter()
            .filter(|c| is_numeric_cell(c) && !c.ends_with('%'))
            .filter_map(|c| crate::schema::parse_decimal_text(c))
            .collect();
        let (quantity, market_value) = if !before.is_empty() {
            (Some(before[0]), after.first().copied())
        } else if after.len() == 1 {
            (None, Some(after[0]))
        } else if after.len() >= 2 {
            (Some(after[0]), Some(after[1]))
        } else {
            (None, None)
        };
        return Some(candidate_for(desc, quantity, market_value));
    }
    // Plain "description value" rows. Prose sentences end with punctuation
    // and never parse here.
    if line.ends_with('.') {
        return None;
    }
    let (desc, last) = line.rsplit_once(' ')?;
    let desc = desc.trim();
    if desc.is_empty() || !is_numeric_cell(last) {
        return None;
    }
    let digits = last.chars().filter(char::is_ascii_digit).count();
    if digits < 3 && !last.contains(',') && !last.contains('.') {
        return None;
    }
    if last.ends_with('%') {
        // Percentage-only tail: a subtotal-style line, not a market value.
        return Some(candidate_for(line.trim(), None, None));
    }
    let value = crate::schema::parse_decimal_text(last)?;
    Some(candidate_for(desc, None, Some(value)))
}

/// Scans a page for fund metadata and candidate holding rows.
pub fn page_candidates(page_text: &str) -> PageCandidates {
    let p = patterns();
    let mut out = PageCandidates::default();
    for line in page_text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.contains("in thousands") || line.contains("'000") {
            out.value_in_thousands = true;
            continue;
        }
        if out.fund_name.is_none() {
            if let Some(rest) = line.strip_prefix("Fund: ") {
                out.fund_name = Some(rest.trim().to_string());
                continue;
            }
            if p.fund_heading.is_match(line) {
                out.fund_name = Some(line.to_string());
                continue;
            }
        }
        if let Some(row) = classify_line(line) {
            out.rows.push(row);
        }
    }
    out
}

fn candidates_to_portfolio_json(candidates: &PageCandidates) -> Value {
    let mut grouped: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    for row in &candidates.rows {
        grouped
            .entry(plural_key_for(&row.class_name))
            .or_default()
            .push(Value::Object(row.fields.clone()));
    }
    let mut obj = Map::new();
    obj.insert("fund_name".into(), match &candidates.fund_name {
        Some(name) => json!(name),
        None => Value::Null,
    });
    obj.insert("value_in_thousands".into(), json!(candidates.value_in_thousands));
    for (key, rows) in grouped {
        obj.insert(key, Value::Array(rows));
    }
    obj.entry("other_instruments").or_insert_with(|| json!([]));
    Value::Object(obj)
}

/// Rule-based extraction: classifies every candidate row and validates it
/// against the registry. Rows whose class is unknown or fails validation
/// land in `other_instruments`; nothing is dropped.
pub fn mock_extract(page_text: &str, registry: &SchemaRegistry) -> Portfolio {
    let candidates = page_candidates(page_text);
    let source = PageRef {
        doc_id: String::new(),
        page_no: 0,
    };
    let mut portfolio = Portfolio {
        fund_name: candidates.fund_name.clone(),
        value_in_thousands: candidates.value_in_thousands,
        ..Portfolio::default()
    };
    for row in &candidates.rows {
        if row.class_name == "Other" {
            portfolio.other_instruments.push(UnmatchedHolding {
                description: row.description.clone(),
                name: row
                    .fields
                    .get("name")
                    .and_then(Value::as_str)
                    .unwrap_or("Unknown")
                    .to_string(),
                market_value: row.market_value,
                source: source.clone(),
            });
            continue;
        }
        match registry.class(&row.class_name) {
            Some(class) => match validate_json_holding(&row.fields, class, &source) {
                Ok(holding) => portfolio.holdings.push(holding),
                Err(_) => portfolio.other_instruments.push(UnmatchedHolding {
                    description: row.description.clone(),
                    name: row.class_name.clone(),
                    market_value: row.market_value,
                    source: source.clone(),
                }),
            },
            None => portfolio.other_instruments.push(UnmatchedHolding {
                description: row.description.clone(),
                name: row.class_name.clone(),
                market_value: row.market_value,
                source: source.clone(),
            }),
        }
    }
    portfolio
}

fn text_section(prompt: &str) -> &str {
    prompt
        .rsplit_once("\n\nText:\n")
        .map(|(_, text)| text)
        .unwrap_or("")
}

fn detection_thought(candidates: &PageCandidates) -> String {
    if candidates.rows.is_empty() {
        "No holding-like rows found on this page.".to_string()
    } else {
        format!(
            "Found {} candidate holding rows matching instrument patterns.",
            candidates.rows.len()
        )
    }
}

fn decorate(marker: &str, seed_text: &str) -> String {
    let digest = Sha256::digest(format!("{marker}\u{1f}{seed_text}").as_bytes());
    let variant = NAME_VARIANTS[digest[0] as usize % NAME_VARIANTS.len()];
    format!("{marker}{variant}")
}

fn generic_suggestion_schema(name: &str) -> Value {
    json!({
        "title": name,
        "type": "object",
        "properties": {
            "description": {
                "type": "string",
                "description": "Text of the instrument"
            },
            "market_value": {
                "anyOf": [ { "type": "number" }, { "type": "null" } ],
                "description": "Market value of the holding",
                "default": null
            },
            "instrument_type": {
                "type": "string",
                "const": name,
                "default": name
            }
        }
    })
}

fn marker_for(desc: &str) -> String {
    let p = patterns();
    if p.currency_forward.is_match(desc) {
        return "Currency Forward".to_string();
    }
    suggested_name_for(desc)
}

fn recommender_response(prompt: &str) -> String {
    let batch_section = prompt
        .split_once("Batch of unmatched holdings:\n")
        .map(|(_, rest)| rest)
        .and_then(|rest| rest.split_once("\n\nPreviously seen suggestions"))
        .map(|(batch, _)| batch)
        .unwrap_or("[]");
    let descriptions: Vec<String> =
        serde_json::from_str(batch_section).unwrap_or_default();
    // Group rows by class marker, preserving first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for desc in &descriptions {
        let marker = marker_for(desc);
        if !groups.contains_key(&marker) {
            order.push(marker.clone());
        }
        groups.entry(marker).or_default().push(desc);
    }
    let mut ranked: Vec<(usize, String)> = order
        .iter()
        .enumerate()
        .map(|(first_seen, marker)| (first_seen, marker.clone()))
        .collect();
    ranked.sort_by(|a, b| {
        let count_a = groups[&a.1].len();
        let count_b = groups[&b.1].len();
        count_b.cmp(&count_a).then(a.0.cmp(&b.0))
    });
    let mut suggestions = Vec::new();
    for (_, marker) in ranked.into_iter().take(MAX_SUGGESTIONS_PER_CALL) {
        let rows = &groups[&marker];
        let example = rows[0].to_string();
        let (name, schema) = if marker == "Currency Forward" {
            (marker.clone(), currency_forward_schema_json())
        } else if rows.len() >= CANONICAL_MIN_ROWS {
            (marker.clone(), generic_suggestion_schema(&marker))
        } else {
            let name = decorate(&marker, &example);
            let schema = generic_suggestion_schema(&name);
            (name, schema)
        };
        suggestions.push(json!({
            "name": name,
            "suggested_schema": schema.to_string(),
            "example": example,
        }));
    }
    Value::Array(suggestions).to_string()
}

fn name_tokens(name: &str) -> Vec<String> {
    // Split camelCase and non-alphanumerics: "CurrencyForward" -> currency forward.
    let mut spaced = String::with_capacity(name.len() + 8);
    let mut prev_lower = false;
    for ch in name.chars() {
        if ch.is_uppercase() && prev_lower {
            spaced.push(' ');
        }
        prev_lower = ch.is_lowercase();
        spaced.push(ch);
    }
    spaced
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn tokens_related(a: &[String], b: &[String]) -> bool {
    let set_a: std::collections::BTreeSet<&String> = a.iter().collect();
    let set_b: std::collections::BTreeSet<&String> = b.iter().collect();
    if set_a.is_empty() || set_b.is_empty() {
        return false;
    }
    if set_a.is_subset(&set_b) || set_b.is_subset(&set_a) {
        return true;
    }
    let intersection = set_a.intersection(&set_b).count();
    let union = set_a.union(&set_b).count();
    intersection as f64 / union as f64 >= 0.5
}

fn cluster_response(prompt: &str) -> String {
    let listing = prompt
        .split_once("Suggestions:\n")
        .map(|(_, rest)| rest)
        .unwrap_or("[]");
    let entries: Vec<Value> = serde_json::from_str(listing.trim()).unwrap_or_default();
    let tokens: Vec<Vec<String>> = entries
        .iter()
        .map(|e| name_tokens(e.get("name").and_then(Value::as_str).unwrap_or("")))
        .collect();
    let mut cluster_of: Vec<usize> = (0..tokens.len()).collect();
    fn root(cluster_of: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while cluster_of[i] != i {
            cluster_of[i] = cluster_of[cluster_of[i]];
            i = cluster_of[i];
        }
        i
    }
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len() {
            if tokens_related(&tokens[i], &tokens[j]) {
                let (ri, rj) = (root(&mut cluster_of, i), root(&mut cluster_of, j));
                if ri != rj {
                    cluster_of[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..tokens.len() {
        let r = root(&mut cluster_of, i);
        clusters.entry(r).or_default().push(i);
    }
    json!({ "clusters": clusters.into_values().collect::<Vec<_>>() }).to_string()
}

/// The stateless rule-based backend.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        if prompt.starts_with("Is there a table present") {
            let candidates = page_candidates(text_section(prompt));
            return Ok(if candidates.rows.is_empty() { "no" } else { "yes" }.to_string());
        }
        if prompt.starts_with("Analyze the following text") {
            let candidates = page_candidates(text_section(prompt));
            return Ok(json!({
                "chain_of_thought": detection_thought(&candidates),
                "has_portfolio_table": !candidates.rows.is_empty(),
            })
            .to_string());
        }
        if prompt.starts_with("Using the provided Portfolio JSON schema") {
            let candidates = page_candidates(text_section(prompt));
            return Ok(json!({
                "chain_of_thought": detection_thought(&candidates),
                "has_portfolio_table": !candidates.rows.is_empty(),
                "portfolio": candidates_to_portfolio_json(&candidates),
            })
            .to_string());
        }
        if prompt.starts_with("Extract a portfolio table") {
            let candidates = page_candidates(text_section(prompt));
            return Ok(json!({ "portfolio": candidates_to_portfolio_json(&candidates) }).to_string());
        }
        if prompt.starts_with("You are a schema refinement assistant") {
            return Ok(recommender_response(prompt));
        }
        if prompt.starts_with(CLUSTER_PROMPT_HEADER) {
            return Ok(cluster_response(prompt));
        }
        Err(BackendError(format!(
            "mock backend has no rule for prompt starting {:?}",
            prompt.chars().take(48).collect::<String>()
        )))
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{initial_registry, update_schema};
    use crate::refine::SchemaSuggestion;

    #[test]
    fn bond_row_classifies_as_debt() {
        let registry = initial_registry();
        let portfolio =
            mock_extract("GBP 4,700,000 | UK Treasury 0% 19/02/2024 | 4668 | 1.48", &registry);
        assert_eq!(portfolio.holdings.len(), 1);
        let holding = &portfolio.holdings[0];
        assert_eq!(holding.class_name, "Debt");
        let json = holding.to_json();
        assert_eq!(json["quantity"], json!(4_700_000.0));
        assert_eq!(json["market_value"], json!(4_668.0));
        assert_eq!(json["coupon_rate"], json!(0.0));
        assert_eq!(json["maturity_date"], json!("2024-02-19T00:00:00"));
        assert_eq!(json["issuer"], json!("UK Treasury"));
    }

    #[test]
    fn forward_rows_unmatched_under_v0_matched_under_v1() {
        let row = "Bought EUR Sold USD at 0.93035372 11/06/2024 | (282,515)";
        let v0 = initial_registry();
        let under_v0 = mock_extract(row, &v0);
        assert!(under_v0.holdings.is_empty());
        assert_eq!(under_v0.other_instruments.len(), 1);
        assert_eq!(under_v0.other_instruments[0].name, "Currency Forward");
        assert_eq!(under_v0.other_instruments[0].market_value, Some(-282_515.0));

        let suggestion = SchemaSuggestion {
            name: "Currency Forward".into(),
            suggested_schema: currency_forward_schema_json().to_string(),
            example: "Bought EUR Sold USD at 0.93035372 11/06/2024".into(),
        };
        let v1 = update_schema(&v0, &[suggestion]).registry;
        let under_v1 = mock_extract(row, &v1);
        assert_eq!(under_v1.holdings.len(), 1);
        let json = under_v1.holdings[0].to_json();
        assert_eq!(json["instrument_type"], json!("Currency Forward"));
        assert_eq!(json["currency_pair"], json!("EUR/USD"));
        assert_eq!(json["forward_rate"], json!(0.93035372));
        assert_eq!(json["settlement_date"], json!("2024-06-11T00:00:00"));
        assert_eq!(json["market_value"], json!(-282_515.0));
    }

    #[test]
    fn cash_row_lands_in_other() {
        let portfolio = mock_extract("Cash at bank | 1,844,776", &initial_registry());
        assert!(portfolio.holdings.is_empty());
        let other = &portfolio.other_instruments[0];
        assert_eq!(other.description, "Cash at bank");
        assert_eq!(other.market_value, Some(1_844_776.0));
        assert_eq!(other.name, "Cash");
    }

    #[test]
    fn option_row_fields() {
        let portfolio = mock_extract(
            "S&P 500 Index Put Option 4250 February 2024 | -27 | -13,000",
            &initial_registry(),
        );
        let json = portfolio.holdings[0].to_json();
        assert_eq!(portfolio.holdings[0].class_name, "Option");
        assert_eq!(json["strike_price"], json!(4250.0));
        assert_eq!(json["option_type"], json!("Put"));
        assert_eq!(json["quantity"], json!(-27.0));
        assert_eq!(json["market_value"], json!(-13_000.0));
        assert_eq!(json["expiration_date"], json!("2024-02-01T00:00:00"));
        assert_eq!(json["underlying"], json!("S&P 500 Index"));
    }

    #[test]
    fn plain_net_assets_line() {
        let portfolio = mock_extract("Net other assets 12016000", &initial_registry());
        let other = &portfolio.other_instruments[0];
        assert_eq!(other.description, "Net other assets");
        assert_eq!(other.market_value, Some(12_016_000.0));
    }

    #[test]
    fn subtotal_percent_line_keeps_full_text_no_value() {
        let portfolio = mock_extract("Total investments 99.92%", &initial_registry());
        let other = &portfolio.other_instruments[0];
        assert_eq!(other.description, "Total investments 99.92%");
        assert_eq!(other.market_value, None);
    }

    #[test]
    fn prose_page_has_no_candidates() {
        let text = "The fund seeks long-term capital growth.\n\
                    Investments are valued as of 31 December 2024.";
        assert!(page_candidates(text).rows.is_empty());
    }

    #[test]
    fn fund_heading_and_thousands_marker() {
        let candidates = page_candidates(
            "Euro Equity Fund\nMarket Value £'000\nUK Treasury 0% 19/02/2024 | 4668",
        );
        assert_eq!(candidates.fund_name.as_deref(), Some("Euro Equity Fund"));
        assert!(candidates.value_in_thousands);
        assert_eq!(candidates.rows.len(), 1);
    }

    #[test]
    fn mock_extract_is_deterministic() {
        let text = "Euro Equity Fund\nUK Treasury 0% 19/02/2024 | 4668\nCash at bank | 12";
        let registry = initial_registry();
        let a = mock_extract(text, &registry);
        let b = mock_extract(text, &registry);
        assert_eq!(a, b);
        assert_eq!(a.to_json_string(), b.to_json_string());
    }

    #[test]
    fn eln_row_fields() {
        let portfolio = mock_extract(
            "CITI (Focus Media Inf. Tech (A)) ELN 12/02/2026 | 711200 | 711451",
            &initial_registry(),
        );
        let json = portfolio.holdings[0].to_json();
        assert_eq!(portfolio.holdings[0].class_name, "EquityLinkedNote");
        assert_eq!(json["issuer"], json!("CITI"));
        assert_eq!(json["product"], json!("Focus Media Inf. Tech (A)"));
        assert_eq!(json["maturity_date"], json!("2026-02-12T00:00:00"));
        assert_eq!(json["instrument_type"], json!("Equity Linked Note"));
    }

    #[test]
    fn future_row_month_year_expiry() {
        let portfolio = mock_extract(
            "CBT US 10 Year Ultra Future March 2024 | 181 | 236000",
            &initial_registry(),
        );
        let json = portfolio.holdings[0].to_json();
        assert_eq!(portfolio.holdings[0].class_name, "Future");
        assert_eq!(json["expiration_date"], json!("2024-03-01T00:00:00"));
        assert_eq!(json["quantity"], json!(181.0));
    }
}
