//! Lenient extraction of JSON objects from model output.

use serde_json::Value;

use super::prompts::ExpectedOutput;
use crate::error::{Error, Result};

/// Parse a model response according to its expected output shape.
///
/// For `JsonObject`, the outermost `{...}` is located (ignoring any prose or
/// code fences around it). If strict parsing fails, raw line breaks inside
/// strings become single spaces and trailing commas are dropped before a
/// second attempt.
pub fn parse_structured(text: &str, schema: ExpectedOutput) -> Result<Value> {
    match schema {
        ExpectedOutput::FreeText => Ok(Value::String(text.trim().to_string())),
        ExpectedOutput::JsonObject => parse_object(text).ok_or_else(|| Error::StructuredParse {
            raw: text.to_string(),
        }),
    }
}

fn parse_object(text: &str) -> Option<Value> {
    let candidate = outermost_object(text)?;
    let parsed = serde_json::from_str::<Value>(candidate)
        .ok()
        .or_else(|| serde_json::from_str::<Value>(&repair(candidate)).ok())?;
    parsed.is_object().then_some(parsed)
}

/// Slice from the first `{` to its matching `}`, string-aware. Falls back
/// to the last `}` when braces do not balance.
fn outermost_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn repair(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    let mut after_break = false;
    for c in s.chars() {
        if in_str {
            if after_break && c == ' ' {
                continue;
            }
            after_break = false;
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_str = false;
                    out.push(c);
                }
                '\n' | '\r' | '\t' => {
                    // collapse the line break and any indentation after it
                    if !out.ends_with(' ') {
                        out.push(' ');
                    }
                    after_break = true;
                }
                _ => out.push(c),
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                out.push(c);
            }
            '}' | ']' => {
                let trimmed = out.trim_end().len();
                if out[..trimmed].ends_with(',') {
                    out.truncate(trimmed - 1);
                }
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}
