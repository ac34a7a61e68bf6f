//! Text-to-typed-value coercion for schema fields.
//!
//! Numeric cells in filings carry thousands separators, currency symbols or
//! ISO codes, and parenthesized negatives; dates appear as DD/MM/YYYY,
//! ISO-8601, or "Month YYYY". Coercion strips the decoration and logs what it
//! stripped.

use chrono::NaiveDate;
use thiserror::Error;

use super::{FieldKind, FieldValue};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CoercionError {
    #[error("cannot coerce {text:?} to {kind}")]
    Unparseable { kind: String, text: String },
    #[error("literal mismatch: expected {expected:?}, got {got:?}")]
    LiteralMismatch { expected: String, got: String },
    #[error("empty value")]
    Empty,
}

/// Strips currency decoration from a numeric cell and parses it. Handles
/// `(x)` as negation, `,` separators, a leading currency symbol or ISO code,
/// a trailing `%`, and the Unicode minus sign.
pub fn parse_decimal_text(text: &str) -> Option<f64> {
    let mut t = text.trim().replace('\u{2212}', "-");
    let mut negate = false;
    if t.starts_with('(') && t.ends_with(')') {
        negate = true;
        t = t[1..t.len() - 1].trim().to_string();
    }
    if let Some(stripped) = t.strip_suffix('%') {
        t = stripped.trim_end().to_string();
    }
    let mut stripped_prefix = String::new();
    loop {
        let before = t.clone();
        t = t.trim_start().to_string();
        for symbol in ['$', '£', '€', '¥'] {
            if let Some(rest) = t.strip_prefix(symbol) {
                stripped_prefix.push(symbol);
                t = rest.to_string();
            }
        }
        // A leading 3-letter uppercase code followed by a space is a
        // currency code ("GBP 4,700,000").
        let bytes = t.as_bytes();
        if bytes.len() > 4
            && bytes[..3].iter().all(u8::is_ascii_uppercase)
            && bytes[3] == b' '
        {
            stripped_prefix.push_str(&t[..3]);
            t = t[4..].to_string();
        }
        if t == before {
            break;
        }
    }
    if !stripped_prefix.is_empty() {
        log::debug!("stripped currency prefix {stripped_prefix:?} from {text:?}");
    }
    let cleaned: String = t.chars().filter(|c| *c != ',').collect();
    let cleaned = cleaned.trim();
    if cleaned.is_empty() {
        return None;
    }
    cleaned
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| if negate { -v } else { v })
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Parses a calendar date. Accepted forms, in order: DD/MM/YYYY (preferred
/// for ambiguous day/month values), MM/DD/YYYY, ISO-8601 date or datetime,
/// and "Month YYYY" (first of month).
pub fn parse_date_text(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    let dmy = NaiveDate::parse_from_str(t, "%d/%m/%Y").ok();
    let mdy = NaiveDate::parse_from_str(t, "%m/%d/%Y").ok();
    if let Some(date) = dmy {
        if mdy.is_some() && mdy != dmy {
            log::debug!("ambiguous date {t:?}: using day-first reading {date}");
        }
        return Some(date);
    }
    if let Some(date) = mdy {
        return Some(date);
    }
    if let Ok(date) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Some(date);
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(t, "%Y-%m-%dT%H:%M:%S") {
        return Some(dt.date());
    }
    // "February 2024" style: first of month.
    let mut parts = t.split_whitespace();
    if let (Some(month_text), Some(year_text), None) = (parts.next(), parts.next(), parts.next()) {
        let month_lower = month_text.to_ascii_lowercase();
        let month = MONTHS.iter().position(|m| *m == month_lower)? as u32 + 1;
        let year: i32 = year_text.parse().ok()?;
        return NaiveDate::from_ymd_opt(year, month, 1);
    }
    None
}

/// Coerces one text value to the given field kind.
pub fn coerce_value(text: &str, kind: &FieldKind) -> Result<FieldValue, CoercionError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(CoercionError::Empty);
    }
    let unparseable = || CoercionError::Unparseable {
        kind: kind.kind_name().to_string(),
        text: trimmed.to_string(),
    };
    match kind {
        FieldKind::Text => Ok(FieldValue::Text(trimmed.to_string())),
        FieldKind::Decimal => parse_decimal_text(trimmed)
            .map(FieldValue::Decimal)
            .ok_or_else(unparseable),
        FieldKind::Integer => {
            let value = parse_decimal_text(trimmed).ok_or_else(unparseable)?;
            if value.fract() != 0.0 || value.abs() > i64::MAX as f64 {
                return Err(unparseable());
            }
            Ok(FieldValue::Integer(value as i64))
        }
        FieldKind::Boolean => match trimmed.to_ascii_lowercase().as_str() {
            "true" | "1" => Ok(FieldValue::Boolean(true)),
            "false" | "0" => Ok(FieldValue::Boolean(false)),
            _ => Err(unparseable()),
        },
        FieldKind::Date => parse_date_text(trimmed)
            .map(FieldValue::Date)
            .ok_or_else(unparseable),
        FieldKind::Literal(expected) => {
            if trimmed == expected {
                Ok(FieldValue::Text(trimmed.to_string()))
            } else {
                Err(CoercionError::LiteralMismatch {
                    expected: expected.clone(),
                    got: trimmed.to_string(),
                })
            }
        }
    }
}
