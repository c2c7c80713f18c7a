//! Validator for the JSON-schema subset used by response schemas.
//!
//! Supported keywords: `type` (string or list), `properties`, `required`,
//! `additionalProperties` (boolean, defaults to `false`), `items`, `enum`,
//! `minItems`, `maxItems`, `minimum`, `maximum`, `minLength`. Objects are
//! closed unless a schema says otherwise.

use serde_json::Value;

use crate::evidence::{Violation, ViolationKind};

pub fn validate(schema: &Value, value: &Value) -> Vec<Violation> {
    let mut out = Vec::new();
    check(schema, value, "", &mut out);
    out
}

fn type_matches(name: &str, value: &Value) -> bool {
    match name {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        "number" => value.is_number(),
        "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
        _ => false,
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn violation(path: &str, message: String) -> Violation {
    Violation::new(
        ViolationKind::Schema,
        if path.is_empty() { "/" } else { path },
        message,
    )
}

fn check(schema: &Value, value: &Value, path: &str, out: &mut Vec<Violation>) {
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(name) => type_matches(name, value),
            Value::Array(names) => names
                .iter()
                .filter_map(Value::as_str)
                .any(|n| type_matches(n, value)),
            _ => true,
        };
        if !ok {
            out.push(violation(path, format!("expected {ty}, found {}", type_name(value))));
            return;
        }
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            out.push(violation(path, format!("{value} is not one of {}", Value::Array(allowed.clone()))));
        }
    }

    if let Some(n) = value.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if n < min {
                out.push(violation(path, format!("{n} is below minimum {min}")));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if n > max {
                out.push(violation(path, format!("{n} is above maximum {max}")));
            }
        }
    }

    if let (Some(s), Some(min)) = (value.as_str(), schema.get("minLength").and_then(Value::as_u64)) {
        if (s.chars().count() as u64) < min {
            out.push(violation(path, format!("string shorter than {min}")));
        }
    }

    if let Value::Object(map) = value {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    out.push(violation(path, format!("missing required field `{key}`")));
                }
            }
        }
        let additional = schema.get("additionalProperties");
        for (key, child) in map {
            let child_path = format!("{path}/{key}");
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check(sub, child, &child_path, out),
                None => match additional {
                    Some(Value::Bool(true)) => {}
                    Some(sub @ Value::Object(_)) => check(sub, child, &child_path, out),
                    _ => out.push(violation(&child_path, format!("unknown field `{key}`"))),
                },
            }
        }
    }

    if let Value::Array(items) = value {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                out.push(violation(path, format!("expected at least {min} items, found {}", items.len())));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                out.push(violation(path, format!("expected at most {max} items, found {}", items.len())));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(item_schema, item, &format!("{path}/{i}"), out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> Value {
        json!({
            "type": "object",
            "required": ["relevant", "evidence"],
            "properties": {
                "relevant": {"type": "boolean"},
                "confidence": {"type": "string", "enum": ["low", "high"]},
                "evidence": {"type": "array", "items": {
                    "type": "object",
                    "required": ["quote"],
                    "properties": {"quote": {"type": "string", "minLength": 1}, "start": {"type": "integer", "minimum": 0}}
                }}
            }
        })
    }

    #[test]
    fn accepts_conforming_value() {
        let v = json!({"relevant": true, "confidence": "high", "evidence": [{"quote": "x", "start": 3}]});
        assert!(validate(&schema(), &v).is_empty());
    }

    #[test]
    fn reports_missing_unknown_and_enum_failures() {
        let v = json!({"relevant": "yes", "confidence": "medium", "extra": 1});
        let errs = validate(&schema(), &v);
        let text: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("missing required field `evidence`")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("unknown field `extra`")));
        assert!(text.iter().any(|t| t.contains("/relevant")));
        assert!(text.iter().any(|t| t.contains("medium")));
    }

    #[test]
    fn nested_items_are_checked() {
        let v = json!({"relevant": false, "evidence": [{"quote": ""}, {"quote": "a", "start": -1}]});
        let errs = validate(&schema(), &v);
        assert_eq!(errs.len(), 2);
        assert_eq!(errs[0].path, "/evidence/0/quote");
    }

    #[test]
    fn type_lists_and_open_objects() {
        let s = json!({"type": ["string", "null"]});
        assert!(validate(&s, &Value::Null).is_empty());
        assert!(!validate(&s, &json!(1)).is_empty());
        let open = json!({"type": "object", "additionalProperties": true});
        assert!(validate(&open, &json!({"a": 1})).is_empty());
    }
}
