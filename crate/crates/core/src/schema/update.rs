//! Applying selected schema suggestions to the registry.
//!
//! Suggestion schemas arrive as JSON class definitions (`title` /
//! `properties` / optional `required` array, with nullable fields encoded as
//! `anyOf` with null). New classes are added; repeat suggestions for an
//! existing suggested class merge new fields as optional. Initial classes are
//! never field-mutated.

use super::{ClassOrigin, FieldKind, FieldSpec, InstrumentClass, SchemaRegistry};
use crate::refine::SchemaSuggestion;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedSuggestion {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub registry: SchemaRegistry,
    pub rejected: Vec<RejectedSuggestion>,
    /// True when at least one class or field was actually added.
    pub changed: bool,
    pub added_classes: Vec<String>,
    pub extended_classes: Vec<String>,
}

fn field_kind_from_spec(spec: &serde_json::Value) -> Result<(FieldKind, bool), String> {
    // Nullable fields are encoded as anyOf [T, null].
    if let Some(any_of) = spec.get("anyOf").and_then(serde_json::Value::as_array) {
        let nullable = any_of
            .iter()
            .any(|v| v.get("type").and_then(serde_json::Value::as_str) == Some("null"));
        let inner = any_of
            .iter()
            .find(|v| v.get("type").and_then(serde_json::Value::as_str) != Some("null"))
            .ok_or_else(|| "anyOf contains no concrete type".to_string())?;
        let (kind, _) = field_kind_from_spec(inner)?;
        return Ok((kind, nullable));
    }
    if let Some(constant) = spec.get("const") {
        let tag = constant
            .as_str()
            .ok_or_else(|| "const must be a string".to_string())?;
        return Ok((FieldKind::Literal(tag.to_string()), true));
    }
    let type_name = spec
        .get("type")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| "field has no type".to_string())?;
    let kind = match type_name {
        "string" => match spec.get("format").and_then(serde_json::Value::as_str) {
            Some("date-time") | Some("date") => FieldKind::Date,
            _ => FieldKind::Text,
        },
        "number" => FieldKind::Decimal,
        "integer" => FieldKind::Integer,
        "boolean" => FieldKind::Boolean,
        other => return Err(format!("unsupported field type {other}")),
    };
    Ok((kind, spec.get("default").is_some()))
}

/// Parses a suggestion's JSON class definition into an [`InstrumentClass`].
///
/// Optionality: a field is required iff it is listed in `required`, or (when
/// no `required` array is present) it is neither nullable nor defaulted. A
/// literal `instrument_type` equal to the class name is injected when the
/// definition lacks one.
pub fn parse_class_definition(
    name: &str,
    schema_text: &str,
    iteration: u32,
) -> Result<InstrumentClass, String> {
    let trimmed = name.trim();
    if trimmed.is_empty() {
        return Err("empty class name".to_string());
    }
    if trimmed.len() > 120 {
        return Err("class name too long".to_string());
    }
    let value: serde_json::Value =
        serde_json::from_str(schema_text).map_err(|e| format!("invalid JSON: {e}"))?;
    let properties = value
        .get("properties")
        .and_then(serde_json::Value::as_object)
        .ok_or_else(|| "missing properties object".to_string())?;
    let required: Vec<&str> = value
        .get("required")
        .and_then(serde_json::Value::as_array)
        .map(|arr| arr.iter().filter_map(serde_json::Value::as_str).collect())
        .unwrap_or_default();
    let has_required_list = value.get("required").is_some();
    let mut fields = Vec::new();
    for (field_name, spec) in properties {
        let (kind, defaulted) = field_kind_from_spec(spec)
            .map_err(|e| format!("field {field_name}: {e}"))?;
        let optional = if matches!(kind, FieldKind::Literal(_)) {
            true
        } else if has_required_list {
            !required.contains(&field_name.as_str())
        } else {
            defaulted
        };
        fields.push(FieldSpec {
            name: field_name.clone(),
            kind,
            optional,
            description: spec
                .get("description")
                .and_then(serde_json::Value::as_str)
                .unwrap_or_default()
                .to_string(),
        });
    }
    if fields.is_empty() {
        return Err("class defines no fields".to_string());
    }
    if !fields.iter().any(|f| f.name == "instrument_type") {
        fields.push(FieldSpec::new(
            "instrument_type",
            FieldKind::Literal(trimmed.to_string()),
            true,
            "",
        ));
    }
    Ok(InstrumentClass {
        name: trimmed.to_string(),
        fields,
        origin: ClassOrigin::Suggested { iteration },
    })
}

/// Applies selected suggestions to the registry.
///
/// With a non-empty effective change set the version is incremented once and
/// a history entry lists the applied suggestion names. An empty or fully
/// rejected selection leaves the registry untouched.
pub fn update_schema(registry: &SchemaRegistry, selected: &[SchemaSuggestion]) -> UpdateOutcome {
    let mut next = registry.clone();
    let iteration = registry.version + 1;
    let mut rejected = Vec::new();
    let mut applied = Vec::new();
    let mut added_classes = Vec::new();
    let mut extended_classes = Vec::new();
    let mut changed = false;

    for suggestion in selected {
        let parsed = match parse_class_definition(&suggestion.name, &suggestion.suggested_schema, iteration)
        {
            Ok(class) => class,
            Err(reason) => {
                rejected.push(RejectedSuggestion {
                    name: suggestion.name.clone(),
                    reason,
                });
                continue;
            }
        };
        match next.classes.get_mut(&parsed.name) {
            None => {
                applied.push(suggestion.name.clone());
                added_classes.push(parsed.name.clone());
                changed = true;
                next.classes.insert(parsed.name.clone(), parsed);
            }
            Some(existing) => {
                if existing.origin == ClassOrigin::Initial {
                    rejected.push(RejectedSuggestion {
                        name: suggestion.name.clone(),
                        reason: "initial classes are never field-mutated".to_string(),
                    });
                    continue;
                }
                let mut extended = false;
                for mut field in parsed.fields {
                    match existing.field(&field.name) {
                        None => {
                            // Repeat suggestions only add new fields, marked optional.
                            field.optional = true;
                            existing.fields.push(field);
                            extended = true;
                        }
                        Some(current) => {
                            if current.kind != field.kind {
                                rejected.push(RejectedSuggestion {
                                    name: suggestion.name.clone(),
                                    reason: format!(
                                        "field {} conflicts: {} vs {}",
                                        field.name,
                                        current.kind.kind_name(),
                                        field.kind.kind_name()
                                    ),
                                });
                            }
                        }
                    }
                }
                if extended {
                    applied.push(suggestion.name.clone());
                    extended_classes.push(parsed.name.clone());
                    changed = true;
                }
            }
        }
    }

    if changed {
        next.version = iteration;
        next.history.push(super::HistoryEntry {
            version: iteration,
            applied,
        });
    }
    UpdateOutcome {
        registry: if changed { next } else { registry.clone() },
        rejected,
        changed,
        added_classes,
        extended_classes,
    }
}

/// The reconciled Currency Forward class definition used throughout tests and
/// by the rule-based suggestion backend.
pub fn currency_forward_schema_json() -> serde_json::Value {
    serde_json::json!({
        "title": "Currency Forward",
        "type": "object",
        "properties": {
            "description": {
                "type": "string",
                "title": "Description",
                "description": "Description or name of the currency forward"
            },
            "market_value": {
                "anyOf": [ { "type": "number" }, { "type": "null" } ],
                "title": "Market Value",
                "description": "Market value of the currency forward",
                "default": null
            },
            "instrument_type": {
                "type": "string",
                "title": "Instrument Type",
                "const": "Currency Forward",
                "default": "Currency Forward"
            },
            "currency_pair": {
                "anyOf": [ { "type": "string" }, { "type": "null" } ],
                "title": "Currency Pair",
                "description": "Currency pair involved in the forward contract",
                "default": null
            },
            "forward_rate": {
                "anyOf": [ { "type": "number" }, { "type": "null" } ],
                "title": "Forward Rate",
                "description": "Agreed forward rate",
                "default": null
            },
            "settlement_date": {
                "anyOf": [ { "type": "string", "format": "date-time" }, { "type": "null" } ],
                "title": "Settlement Date",
                "description": "Settlement date for the currency forward",
                "default": null
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::initial_registry;

    fn currency_forward_suggestion() -> SchemaSuggestion {
        SchemaSuggestion {
            name: "Currency Forward".to_string(),
            suggested_schema: currency_forward_schema_json().to_string(),
            example: "Bought EUR Sold USD at 0.93035372 11/06/2024".to_string(),
        }
    }

    #[test]
    fn currency_forward_suggestion_adds_class() {
        let v0 = initial_registry();
        let outcome = update_schema(&v0, &[currency_forward_suggestion()]);
        assert!(outcome.changed);
        let v1 = outcome.registry;
        assert_eq!(v1.version, 1);
        let class = v1.class("Currency Forward").unwrap();
        for field in ["currency_pair", "forward_rate", "settlement_date"] {
            let spec = class.field(field).unwrap();
            assert!(spec.optional, "{field} should be optional");
        }
        assert!(!class.field("description").unwrap().optional);
        assert_eq!(class.literal_tag(), Some("Currency Forward"));
        assert_eq!(v1.history.len(), 1);
        assert_eq!(v1.history[0].applied, vec!["Currency Forward"]);
        // Initial classes untouched
        assert_eq!(v1.class("Forward"), v0.class("Forward"));
    }

    #[test]
    fn reapplying_same_suggestion_is_idempotent() {
        let v0 = initial_registry();
        let v1 = update_schema(&v0, &[currency_forward_suggestion()]).registry;
        let outcome = update_schema(&v1, &[currency_forward_suggestion()]);
        // No new fields: no structural change, registry version unchanged.
        assert!(!outcome.changed);
        assert_eq!(outcome.registry.classes, v1.classes);
        assert_eq!(outcome.registry.version, v1.version);
    }

    #[test]
    fn variant_with_new_field_merges_as_optional() {
        let v0 = initial_registry();
        let v1 = update_schema(&v0, &[currency_forward_suggestion()]).registry;
        let mut schema = currency_forward_schema_json();
        schema["properties"]["counterparty"] = serde_json::json!({
            "type": "string",
            "description": "The name of the counterparty"
        });
        let variant = SchemaSuggestion {
            name: "Currency Forward".to_string(),
            suggested_schema: schema.to_string(),
            example: "Bought USD Sold GBP at 1.25473636 31/05/2024".to_string(),
        };
        let outcome = update_schema(&v1, &[variant]);
        assert!(outcome.changed);
        let v2 = outcome.registry;
        assert_eq!(v2.version, 2);
        let field = v2
            .class("Currency Forward")
            .unwrap()
            .field("counterparty")
            .unwrap();
        assert!(field.optional);
    }

    #[test]
    fn unparseable_schema_rejected_registry_unchanged() {
        let v0 = initial_registry();
        let bad = SchemaSuggestion {
            name: "Broken".to_string(),
            suggested_schema: "not json".to_string(),
            example: "x".to_string(),
        };
        let outcome = update_schema(&v0, &[bad]);
        assert!(!outcome.changed);
        assert_eq!(outcome.rejected.len(), 1);
        assert_eq!(outcome.registry, v0);
    }

    #[test]
    fn initial_classes_cannot_be_mutated() {
        let v0 = initial_registry();
        let poison = SchemaSuggestion {
            name: "Equity".to_string(),
            suggested_schema: serde_json::json!({
                "title": "Equity",
                "type": "object",
                "properties": { "venue": { "type": "string" } }
            })
            .to_string(),
            example: "x".to_string(),
        };
        let outcome = update_schema(&v0, &[poison]);
        assert!(!outcome.changed);
        assert_eq!(outcome.registry, v0);
        assert_eq!(outcome.rejected.len(), 1);
    }

    #[test]
    fn conflicting_field_kind_rejected() {
        let v0 = initial_registry();
        let v1 = update_schema(&v0, &[currency_forward_suggestion()]).registry;
        let mut schema = currency_forward_schema_json();
        schema["properties"]["forward_rate"] = serde_json::json!({
            "anyOf": [ { "type": "string" }, { "type": "null" } ],
            "default": null
        });
        let conflicting = SchemaSuggestion {
            name: "Currency Forward".to_string(),
            suggested_schema: schema.to_string(),
            example: "y".to_string(),
        };
        let outcome = update_schema(&v1, &[conflicting]);
        assert!(!outcome.changed);
        assert!(outcome
            .rejected
            .iter()
            .any(|r| r.reason.contains("forward_rate")));
        assert_eq!(
            outcome.registry.class("Currency Forward").unwrap().field("forward_rate").unwrap().kind,
            FieldKind::Decimal
        );
    }

    #[test]
    fn empty_selection_is_a_no_op() {
        let v0 = initial_registry();
        let outcome = update_schema(&v0, &[]);
        assert!(!outcome.changed);
        assert_eq!(outcome.registry, v0);
    }
}
