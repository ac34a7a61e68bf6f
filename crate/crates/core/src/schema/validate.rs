//! All-or-nothing holding validation against an instrument class.
//!
//! On failure every failing field is reported; partial coercion results are
//! discarded so the matched/unmatched partition stays crisp.

use std::collections::BTreeMap;
use std::fmt;

use super::coerce::{coerce_value, CoercionError};
use super::{FieldKind, FieldValue, Holding, InstrumentClass, PageRef};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldErrorReason {
    Missing,
    Type(String),
    LiteralMismatch { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub reason: FieldErrorReason,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            FieldErrorReason::Missing => write!(f, "{}: missing required field", self.field),
            FieldErrorReason::Type(detail) => write!(f, "{}: {detail}", self.field),
            FieldErrorReason::LiteralMismatch { expected, got } => {
                write!(f, "{}: expected literal {expected:?}, got {got:?}", self.field)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors {
    pub class_name: String,
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation failed: ", self.class_name)?;
        let rendered: Vec<String> = self.errors.iter().map(ToString::to_string).collect();
        write!(f, "{}", rendered.join("; "))
    }
}

fn coerce_json_value(
    value: &serde_json::Value,
    kind: &FieldKind,
) -> Result<Option<FieldValue>, String> {
    match value {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::String(s) => {
            if s.trim().is_empty() {
                return Ok(None);
            }
            match coerce_value(s, kind) {
                Ok(v) => Ok(Some(v)),
                Err(CoercionError::LiteralMismatch { expected, got }) => Err(format!(
                    "expected literal {expected:?}, got {got:?}"
                )),
                Err(e) => Err(e.to_string()),
            }
        }
        serde_json::Value::Number(n) => match kind {
            FieldKind::Decimal => n
                .as_f64()
                .filter(|v| v.is_finite())
                .map(|v| Some(FieldValue::Decimal(v)))
                .ok_or_else(|| "not a finite number".to_string()),
            FieldKind::Integer => n
                .as_i64()
                .map(|v| Some(FieldValue::Integer(v)))
                .ok_or_else(|| "not an integer".to_string()),
            FieldKind::Text => Ok(Some(FieldValue::Text(n.to_string()))),
            other => Err(format!("number not valid for {} field", other.kind_name())),
        },
        serde_json::Value::Bool(b) => match kind {
            FieldKind::Boolean => Ok(Some(FieldValue::Boolean(*b))),
            other => Err(format!("boolean not valid for {} field", other.kind_name())),
        },
        other => Err(format!("unsupported JSON value {other}")),
    }
}

/// Validates a raw JSON field map against an instrument class.
///
/// Unknown keys are ignored; the literal `instrument_type` is filled from the
/// class when absent. Returns either a fully coerced [`Holding`] or every
/// field failure — never a partial success.
pub fn validate_json_holding(
    raw: &serde_json::Map<String, serde_json::Value>,
    class: &InstrumentClass,
    source: &PageRef,
) -> Result<Holding, ValidationErrors> {
    let mut values = BTreeMap::new();
    let mut errors = Vec::new();
    for field in &class.fields {
        let provided = raw.get(&field.name);
        match provided {
            None | Some(serde_json::Value::Null) => {
                if let FieldKind::Literal(tag) = &field.kind {
                    values.insert(field.name.clone(), FieldValue::Text(tag.clone()));
                } else if !field.optional {
                    errors.push(FieldError {
                        field: field.name.clone(),
                        reason: FieldErrorReason::Missing,
                    });
                }
            }
            Some(value) => match coerce_json_value(value, &field.kind) {
                Ok(Some(coerced)) => {
                    if let FieldValue::Decimal(v) = coerced {
                        if !v.is_finite() {
                            errors.push(FieldError {
                                field: field.name.clone(),
                                reason: FieldErrorReason::Type("non-finite value".into()),
                            });
                            continue;
                        }
                    }
                    values.insert(field.name.clone(), coerced);
                }
                Ok(None) => {
                    if let FieldKind::Literal(tag) = &field.kind {
                        values.insert(field.name.clone(), FieldValue::Text(tag.clone()));
                    } else if !field.optional {
                        errors.push(FieldError {
                            field: field.name.clone(),
                            reason: FieldErrorReason::Missing,
                        });
                    }
                }
                Err(detail) => {
                    let reason = match &field.kind {
                        FieldKind::Literal(expected) => FieldErrorReason::LiteralMismatch {
                            expected: expected.clone(),
                            got: value.as_str().unwrap_or("").to_string(),
                        },
                        _ => FieldErrorReason::Type(detail),
                    };
                    errors.push(FieldError {
                        field: field.name.clone(),
                        reason,
                    });
                }
            },
        }
    }
    if errors.is_empty() {
        Ok(Holding {
            class_name: class.name.clone(),
            values,
            source: source.clone(),
        })
    } else {
        Err(ValidationErrors {
            class_name: class.name.clone(),
            errors,
        })
    }
}

/// Validates a raw text field map against an instrument class.
pub fn validate_holding(
    raw: &BTreeMap<String, String>,
    class: &InstrumentClass,
    source: &PageRef,
) -> Result<Holding, ValidationErrors> {
    let map: serde_json::Map<String, serde_json::Value> = raw
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect();
    validate_json_holding(&map, class, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::initial_registry;

    fn source() -> PageRef {
        PageRef {
            doc_id: "d".into(),
            page_no: 1,
        }
    }

    fn text_map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn bond_row_validates_as_debt() {
        let registry = initial_registry();
        let debt = registry.class("Debt").unwrap();
        let raw = text_map(&[
            ("description", "UK Treasury 0% 19/02/2024"),
            ("quantity", "4,700,000"),
            ("market_value", "4668"),
            ("coupon_rate", "0"),
            ("maturity_date", "19/02/2024"),
            ("issuer", "UK Treasury"),
        ]);
        let holding = validate_holding(&raw, debt, &source()).unwrap();
        assert_eq!(holding.values["quantity"], FieldValue::Decimal(4_700_000.0));
        assert_eq!(holding.values["market_value"], FieldValue::Decimal(4_668.0));
        assert_eq!(holding.values["coupon_rate"], FieldValue::Decimal(0.0));
        assert_eq!(
            holding.values["maturity_date"].to_json(),
            serde_json::json!("2024-02-19T00:00:00")
        );
        assert_eq!(
            holding.values["instrument_type"],
            FieldValue::Text("Debt".into())
        );
    }

    #[test]
    fn empty_map_validates_against_equity() {
        let registry = initial_registry();
        let equity = registry.class("Equity").unwrap();
        let holding = validate_holding(&BTreeMap::new(), equity, &source()).unwrap();
        assert_eq!(
            holding.values["instrument_type"],
            FieldValue::Text("Equity".into())
        );
        assert_eq!(holding.values.len(), 1);
    }

    #[test]
    fn literal_mismatch_is_reported() {
        let registry = initial_registry();
        let option = registry.class("Option").unwrap();
        let raw = text_map(&[("instrument_type", "Call")]);
        let errors = validate_holding(&raw, option, &source()).unwrap_err();
        assert_eq!(errors.errors.len(), 1);
        assert!(matches!(
            &errors.errors[0].reason,
            FieldErrorReason::LiteralMismatch { expected, .. } if expected == "Option"
        ));
    }

    #[test]
    fn all_failures_reported_together() {
        let registry = initial_registry();
        let other = registry.class("Other").unwrap();
        let raw = text_map(&[("market_value", "not a number")]);
        let errors = validate_holding(&raw, other, &source()).unwrap_err();
        let fields: Vec<&str> = errors.errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, vec!["description", "name", "market_value"]);
    }

    #[test]
    fn json_numbers_coerce_directly() {
        let registry = initial_registry();
        let option = registry.class("Option").unwrap();
        let mut raw = serde_json::Map::new();
        raw.insert("strike_price".into(), serde_json::json!(4250));
        raw.insert("quantity".into(), serde_json::json!(-27));
        raw.insert("option_type".into(), serde_json::json!("Put"));
        let holding = validate_json_holding(&raw, option, &source()).unwrap();
        assert_eq!(holding.values["strike_price"], FieldValue::Decimal(4250.0));
        assert_eq!(holding.values["quantity"], FieldValue::Decimal(-27.0));
    }
}
