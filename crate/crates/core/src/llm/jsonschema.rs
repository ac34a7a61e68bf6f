//! Structural validation for the JSON-schema subset this pipeline emits:
//! `type`, `properties`, `required`, `items`, `anyOf`, `const`, and `enum`.

use serde_json::Value;

fn type_matches(value: &Value, type_name: &str) -> bool {
    match type_name {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.as_i64().is_some() || value.as_f64().is_some_and(|f| f.fract() == 0.0),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn validate_inner(value: &Value, schema: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema_obj) = schema.as_object() else {
        return;
    };
    if let Some(any_of) = schema_obj.get("anyOf").and_then(Value::as_array) {
        let matched = any_of.iter().any(|member| {
            let mut member_errors = Vec::new();
            validate_inner(value, member, path, &mut member_errors);
            member_errors.is_empty()
        });
        if !matched {
            errors.push(format!("{path}: matches no anyOf member"));
        }
        return;
    }
    if let Some(constant) = schema_obj.get("const") {
        if value != constant && !value.is_null() {
            errors.push(format!("{path}: expected constant {constant}"));
        }
        return;
    }
    if let Some(allowed) = schema_obj.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: not one of the allowed values"));
        }
        return;
    }
    if let Some(type_value) = schema_obj.get("type") {
        let names: Vec<&str> = match type_value {
            Value::String(s) => vec![s.as_str()],
            Value::Array(arr) => arr.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        if !names.is_empty() && !names.iter().any(|n| type_matches(value, n)) {
            errors.push(format!(
                "{path}: expected {}, got {}",
                names.join(" or "),
                json_type_name(value)
            ));
            return;
        }
    }
    if let Some(obj) = value.as_object() {
        if let Some(required) = schema_obj.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(name) {
                    errors.push(format!("{path}: missing required property {name}"));
                }
            }
        }
        if let Some(properties) = schema_obj.get("properties").and_then(Value::as_object) {
            for (name, child_schema) in properties {
                if let Some(child) = obj.get(name) {
                    validate_inner(child, child_schema, &format!("{path}.{name}"), errors);
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema_obj.get("items"), value.as_array()) {
        for (idx, child) in arr.iter().enumerate() {
            validate_inner(child, items, &format!("{path}[{idx}]"), errors);
        }
    }
}

fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Validates a value against the schema subset; returns every violation.
pub fn validate_against_schema(value: &Value, schema: &Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    validate_inner(value, schema, "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
