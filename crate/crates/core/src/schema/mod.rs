//! The dynamic instrument schema: typed field specs, the versioned registry,
//! value coercion, and the validation engine that partitions extractions into
//! typed holdings vs unmatched entries.
//!
//! The schema is data, not host-language types: classes live in a JSON
//! document so the refinement loop can extend them at runtime. Each registry
//! version is immutable; updates produce a new value.

mod coerce;
mod initial;
mod update;
mod validate;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coerce::{coerce_value, parse_date_text, parse_decimal_text, CoercionError};
pub use initial::initial_registry;
pub use update::{
    currency_forward_schema_json, parse_class_definition, update_schema, RejectedSuggestion,
    UpdateOutcome,
};
pub use validate::{
    validate_holding, validate_json_holding, FieldError, FieldErrorReason, ValidationErrors,
};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid registry JSON: {0}")]
    InvalidRegistry(String),
}

/// Field kind vocabulary. `Literal` carries exactly one constant value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Decimal,
    Integer,
    Boolean,
    Date,
    Literal(String),
}

impl FieldKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldKind::Text => "text",
            FieldKind::Decimal => "decimal",
            FieldKind::Integer => "integer",
            FieldKind::Boolean => "boolean",
            FieldKind::Date => "date",
            FieldKind::Literal(_) => "literal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub optional: bool,
    pub description: String,
}

impl FieldSpec {
    pub fn new(name: &str, kind: FieldKind, optional: bool, description: &str) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind,
            optional,
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassOrigin {
    Initial,
    Suggested { iteration: u32 },
}

/// One instrument class: a named set of typed fields. Every class carries a
/// literal `instrument_type` field whose constant is its stable tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentClass {
    pub name: String,
    pub fields: Vec<FieldSpec>,
    pub origin: ClassOrigin,
}

impl InstrumentClass {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// The constant carried by this class's `instrument_type` literal field.
    pub fn literal_tag(&self) -> Option<&str> {
        self.fields.iter().find_map(|f| match &f.kind {
            FieldKind::Literal(tag) if f.name == "instrument_type" => Some(tag.as_str()),
            _ => None,
        })
    }

    /// Key used for this class's holding list in portfolio JSON.
    pub fn plural_key(&self) -> String {
        plural_key_for(&self.name)
    }
}

/// Plural JSON key for a class name. Initial classes use the portfolio
/// model's exact keys; suggested classes get a snake_case naive plural.
pub fn plural_key_for(class_name: &str) -> String {
    match class_name {
        "Equity" => "equities".to_string(),
        "Option" => "options".to_string(),
        "Swap" => "swaps".to_string(),
        "Forward" => "forwards".to_string(),
        "Future" => "futures".to_string(),
        "Debt" => "debt".to_string(),
        "EquityLinkedNote" => "elns".to_string(),
        "Other" => "other_instruments".to_string(),
        other => {
            let mut slug: String = other
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() {
                        c.to_ascii_lowercase()
                    } else {
                        '_'
                    }
                })
                .collect::<String>()
                .split('_')
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join("_");
            if !slug.ends_with('s') {
                slug.push('s');
            }
            slug
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub version: u32,
    pub applied: Vec<String>,
}

/// The versioned schema: class set plus the suggestion names applied at each
/// version. Version 0 is the initial schema; `Other` is never removed.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaRegistry {
    pub version: u32,
    pub classes: BTreeMap<String, InstrumentClass>,
    pub history: Vec<HistoryEntry>,
}

impl SchemaRegistry {
    pub fn class(&self, name: &str) -> Option<&InstrumentClass> {
        self.classes.get(name)
    }

    pub fn class_for_plural(&self, key: &str) -> Option<&InstrumentClass> {
        self.classes.values().find(|c| c.plural_key() == key)
    }

    /// External registry JSON. Key order is deterministic (classes sorted by
    /// name, fields in declaration order).
    pub fn to_json(&self) -> serde_json::Value {
        let mut classes = serde_json::Map::new();
        for (name, class) in &self.classes {
            let fields: Vec<serde_json::Value> = class
                .fields
                .iter()
                .map(|f| {
                    let mut obj = serde_json::Map::new();
                    obj.insert("name".into(), f.name.clone().into());
                    obj.insert("kind".into(), f.kind.kind_name().into());
                    obj.insert("optional".into(), f.optional.into());
                    if let FieldKind::Literal(tag) = &f.kind {
                        obj.insert("const".into(), tag.clone().into());
                    }
                    obj.insert("description".into(), f.description.clone().into());
                    serde_json::Value::Object(obj)
                })
                .collect();
            let mut class_obj = serde_json::Map::new();
            class_obj.insert(
                "origin".into(),
                match &class.origin {
                    ClassOrigin::Initial => serde_json::Value::String("initial".into()),
                    ClassOrigin::Suggested { iteration } => {
                        serde_json::json!({ "suggested": { "iteration": iteration } })
                    }
                },
            );
            class_obj.insert("fields".into(), fields.into());
            classes.insert(name.clone(), serde_json::Value::Object(class_obj));
        }
        serde_json::json!({
            "version": self.version,
            "classes": classes,
            "history": self.history,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("registry serializes")
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SchemaError::InvalidRegistry(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| SchemaError::InvalidRegistry("missing version".into()))?
            as u32;
        let classes_obj = value
            .get("classes")
            .and_then(serde_json::Value::as_object)
            .ok_or_else(|| SchemaError::InvalidRegistry("missing classes".into()))?;
        let mut classes = BTreeMap::new();
        for (name, class_value) in classes_obj {
            let origin = match class_value.get("origin") {
                Some(serde_json::Value::String(s)) if s == "initial" => ClassOrigin::Initial,
                Some(other) => {
                    let iteration = other
                        .get("suggested")
                        .and_then(|s| s.get("iteration"))
                        .and_then(serde_json::Value::as_u64)
                        .ok_or_else(|| {
                            SchemaError::InvalidRegistry(format!("class {name}: bad origin"))
                        })? as u32;
                    ClassOrigin::Suggested { iteration }
                }
                None => ClassOrigin::Initial,
            };
            let fields_value = class_value
                .get("fields")
                .and_then(serde_json::Value::as_array)
                .ok_or_else(|| {
                    SchemaError::InvalidRegistry(format!("class {name}: missing fields"))
                })?;
            let mut fields = Vec::with_capacity(fields_value.len());
            for f in fields_value {
                let fname = f
                    .get("name")
                    .and_then(serde_json::Value::as_str)
                    .ok_or_else(|| {
                        SchemaError::InvalidRegistry(format!("class {name}: field missing name"))
                    })?;
                let kind_name = f
                    .get("kind")
                    .and_then(serde_json::Value::as_str)
                    .ok_or_else(|| {
                        SchemaError::InvalidRegistry(format!("field {fname}: missing kind"))
                    })?;
                let kind = match kind_name {
                    "text" => FieldKind::Text,
                    "decimal" => FieldKind::Decimal,
                    "integer" => FieldKind::Integer,
                    "boolean" => FieldKind::Boolean,
                    "date" => FieldKind::Date,
                    "literal" => {
                        let tag = f
                            .get("const")
                            .and_then(serde_json::Value::as_str)
                            .ok_or_else(|| {
                                SchemaError::InvalidRegistry(format!(
                                    "literal field {fname}: missing const"
                                ))
                            })?;
                        FieldKind::Literal(tag.to_string())
                    }
                    other => {
                        return Err(SchemaError::InvalidRegistry(format!(
                            "field {fname}: unknown kind {other}"
                        )))
                    }
                };
                fields.push(FieldSpec {
                    name: fname.to_string(),
                    kind,
                    optional: f
                        .get("optional")
                        .and_then(serde_json::Value::as_bool)
                        .unwrap_or(true),
                    description: f
                        .get("description")
                        .and_then(serde_json::Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                });
            }
            classes.insert(
                name.clone(),
                InstrumentClass {
                    name: name.clone(),
                    fields,
                    origin,
                },
            );
        }
        let history = value
            .get("history")
            .map(|h| {
                serde_json::from_value(h.clone())
                    .map_err(|e| SchemaError::InvalidRegistry(format!("bad history: {e}")))
            })
            .transpose()?
            .unwrap_or_default();
        Ok(SchemaRegistry {
            version,
            classes,
            history,
        })
    }

    /// JSON schema for a single instrument class, in the shape suggestion
    /// schemas use (`title` / `properties` / nullable `anyOf` members).
    pub fn class_json_schema(class: &InstrumentClass) -> serde_json::Value {
        let mut properties = serde_json::Map::new();
        for field in &class.fields {
            let base = match &field.kind {
                FieldKind::Text => serde_json::json!({ "type": "string" }),
                FieldKind::Decimal => serde_json::json!({ "type": "number" }),
                FieldKind::Integer => serde_json::json!({ "type": "integer" }),
                FieldKind::Boolean => serde_json::json!({ "type": "boolean" }),
                FieldKind::Date => serde_json::json!({ "type": "string", "format": "date-time" }),
                FieldKind::Literal(tag) => {
                    serde_json::json!({ "type": "string", "const": tag, "default": tag })
                }
            };
            let mut spec = if field.optional && !matches!(field.kind, FieldKind::Literal(_)) {
                serde_json::json!({ "anyOf": [base, { "type": "null" }], "default": null })
            } else {
                base
            };
            if !field.description.is_empty() {
                spec.as_object_mut()
                    .expect("schema object")
                    .insert("description".into(), field.description.clone().into());
            }
            properties.insert(field.name.clone(), spec);
        }
        let required: Vec<&str> = class
            .fields
            .iter()
            .filter(|f| !f.optional && !matches!(f.kind, FieldKind::Literal(_)))
            .map(|f| f.name.as_str())
            .collect();
        serde_json::json!({
            "title": class.name,
            "type": "object",
            "properties": properties,
            "required": required,
        })
    }

    /// JSON schema for the full portfolio envelope: fund metadata plus one
    /// array per instrument class, keyed by plural name.
    pub fn portfolio_json_schema(&self) -> serde_json::Value {
        let mut properties = serde_json::Map::new();
        properties.insert(
            "fund_name".into(),
            serde_json::json!({
                "anyOf": [{ "type": "string" }, { "type": "null" }],
                "description": "Name of the fund that the portfolio belongs to",
                "default": null,
            }),
        );
        properties.insert(
            "value_in_thousands".into(),
            serde_json::json!({
                "type": "boolean",
                "description": "True if the market value is based on thousands",
                "default": false,
            }),
        );
        for class in self.classes.values() {
            properties.insert(
                class.plural_key(),
                serde_json::json!({
                    "type": "array",
                    "items": Self::class_json_schema(class),
                }),
            );
        }
        serde_json::json!({
            "title": "Portfolio",
            "type": "object",
            "properties": properties,
        })
    }
}

/// Page provenance for a holding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageRef {
    pub doc_id: String,
    pub page_no: u32,
}

/// A typed field value produced by coercion.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Text(String),
    Decimal(f64),
    Integer(i64),
    Boolean(bool),
    Date(NaiveDate),
}

impl FieldValue {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            FieldValue::Text(s) => serde_json::Value::String(s.clone()),
            FieldValue::Decimal(d) => serde_json::json!(d),
            FieldValue::Integer(i) => serde_json::json!(i),
            FieldValue::Boolean(b) => serde_json::json!(b),
            FieldValue::Date(d) => {
                serde_json::Value::String(format!("{}T00:00:00", d.format("%Y-%m-%d")))
            }
        }
    }

    pub fn as_decimal(&self) -> Option<f64> {
        match self {
            FieldValue::Decimal(d) => Some(*d),
            FieldValue::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
}

/// A validated instrument instance: every value conforms to its field spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Holding {
    pub class_name: String,
    pub values: BTreeMap<String, FieldValue>,
    pub source: PageRef,
}

impl Holding {
    pub fn market_value(&self) -> Option<f64> {
        self.values.get("market_value").and_then(FieldValue::as_decimal)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for (name, value) in &self.values {
            obj.insert(name.clone(), value.to_json());
        }
        serde_json::Value::Object(obj)
    }
}

/// An extracted row the current schema cannot classify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedHolding {
    /// Text of the unknown instrument.
    pub description: String,
    /// Suggested classification of the description or type.
    pub name: String,
    pub market_value: Option<f64>,
    pub source: PageRef,
}

impl UnmatchedHolding {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "description": self.description,
            "name": self.name,
            "market_value": self.market_value,
        })
    }
}

/// Per-page or per-fund collection of typed holdings plus unmatched entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Portfolio {
    pub fund_name: Option<String>,
    pub value_in_thousands: bool,
    pub holdings: Vec<Holding>,
    pub other_instruments: Vec<UnmatchedHolding>,
    /// Set when the backend was exhausted and extraction fell back to an
    /// empty result; excluded from serialized output when absent.
    pub error: Option<String>,
}

impl Portfolio {
    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty() && self.other_instruments.is_empty()
    }

    /// Sum of typed holdings' market values. Unmatched values are excluded.
    pub fn declared_total(&self) -> f64 {
        self.holdings.iter().filter_map(Holding::market_value).sum()
    }

    /// Portfolio JSON keyed by class-plural names plus `other_instruments`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("fund_name".into(), match &self.fund_name {
            Some(name) => serde_json::Value::String(name.clone()),
            None => serde_json::Value::Null,
        });
        obj.insert("value_in_thousands".into(), self.value_in_thousands.into());
        let mut grouped: BTreeMap<String, Vec<serde_json::Value>> = BTreeMap::new();
        for holding in &self.holdings {
            grouped
                .entry(plural_key_for(&holding.class_name))
                .or_default()
                .push(holding.to_json());
        }
        for (key, rows) in grouped {
            obj.insert(key, rows.into());
        }
        obj.insert(
            "other_instruments".into(),
            self.other_instruments
                .iter()
                .map(UnmatchedHolding::to_json)
                .collect::<Vec<_>>()
                .into(),
        );
        if let Some(error) = &self.error {
            obj.insert("extraction_error".into(), error.clone().into());
        }
        serde_json::Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("portfolio serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plural_keys() {
        assert_eq!(plural_key_for("Equity"), "equities");
        assert_eq!(plural_key_for("Debt"), "debt");
        assert_eq!(plural_key_for("EquityLinkedNote"), "elns");
        assert_eq!(plural_key_for("Currency Forward"), "currency_forwards");
        assert_eq!(plural_key_for("Other"), "other_instruments");
    }

    #[test]
    fn registry_round_trip() {
        let registry = initial_registry();
        let text = registry.to_json_string();
        let parsed = SchemaRegistry::parse(&text).unwrap();
        assert_eq!(parsed, registry);
        // serialize(parse(s)) is structurally equal to parse(s)
        assert_eq!(parsed.to_json_string(), text);
    }

    #[test]
    fn date_values_serialize_as_midnight_datetimes() {
        let value = FieldValue::Date(NaiveDate::from_ymd_opt(2024, 6, 11).unwrap());
        assert_eq!(value.to_json(), serde_json::json!("2024-06-11T00:00:00"));
    }
}
