use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AudioChallengeError;
use crate::scoring::ChoiceLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOption {
    pub label: ChoiceLabel,
    pub text: String,
}

/// A five-choice question with its answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    /// Always five entries, labelled A to E in order.
    pub options: Vec<QaOption>,
    pub answer_key: ChoiceLabel,
}

impl QaItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        options: [&str; 5],
        answer_key: ChoiceLabel,
    ) -> Result<Self, String> {
        let item = Self {
            id: id.into(),
            question: question.into(),
            options: ChoiceLabel::ALL
                .iter()
                .zip(options)
                .map(|(&label, text)| QaOption { label, text: text.to_owned() })
                .collect(),
            answer_key,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        if self.options.len() != 5 {
            return Err(format!("expected 5 choices, found {}", self.options.len()));
        }
        for (opt, expected) in self.options.iter().zip(ChoiceLabel::ALL) {
            if opt.label != expected {
                return Err(format!("choice labels must be A-E in order, found {}", opt.label));
            }
        }
        Ok(())
    }

    pub fn option(&self, label: ChoiceLabel) -> &str {
        &self.options[label.index()].text
    }

    pub fn answer_text(&self) -> &str {
        self.option(self.answer_key)
    }
}

/// A record that was skipped while reading a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    /// 1-based line number.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct QaDataset {
    pub items: Vec<QaItem>,
    pub diagnostics: Vec<SchemaViolation>,
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

/// Collects `(label, text)` pairs from either choice layout.
fn choices(record: &Value) -> Result<Vec<(String, String)>, String> {
    let raw = record
        .get("question")
        .and_then(|q| q.get("choices"))
        .or_else(|| record.get("choices"))
        .ok_or("missing choices")?;
    match raw {
        Value::Array(list) => list
            .iter()
            .map(|c| match (str_field(c, "label"), str_field(c, "text")) {
                (Some(l), Some(t)) => Ok((l.to_owned(), t.to_owned())),
                _ => Err("choice without label or text".to_owned()),
            })
            .collect(),
        Value::Object(_) => {
            let labels = raw.get("label").and_then(Value::as_array).ok_or("choices.label is not a list")?;
            let texts = raw.get("text").and_then(Value::as_array).ok_or("choices.text is not a list")?;
            if labels.len() != texts.len() {
                return Err("choices.label and choices.text differ in length".into());
            }
            labels
                .iter()
                .zip(texts)
                .map(|(l, t)| match (l.as_str(), t.as_str()) {
                    (Some(l), Some(t)) => Ok((l.to_owned(), t.to_owned())),
                    _ => Err("non-string choice label or text".to_owned()),
                })
                .collect()
        }
        _ => Err("choices has an unexpected shape".into()),
    }
}

fn record_to_item(record: &Value, line: usize) -> Result<QaItem, String> {
    let question = match record.get("question") {
        Some(Value::String(s)) => s.clone(),
        Some(q @ Value::Object(_)) => str_field(q, "stem").ok_or("missing question.stem")?.to_owned(),
        _ => return Err("missing question".into()),
    };
    let mut pairs = choices(record)?;
    if pairs.len() != 5 {
        return Err(format!("expected 5 choices, found {}", pairs.len()));
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut options = Vec::with_capacity(5);
    for ((label, text), expected) in pairs.into_iter().zip(ChoiceLabel::ALL) {
        if label.parse::<ChoiceLabel>() != Ok(expected) {
            return Err(format!("choice labels must be exactly A-E, found {label:?}"));
        }
        options.push(QaOption { label: expected, text });
    }
    let key = str_field(record, "answerKey").or_else(|| str_field(record, "answer_key")).ok_or("missing answerKey")?;
    let answer_key = key.parse::<ChoiceLabel>().map_err(|_| format!("answer key {key:?} is not A-E"))?;
    let item = QaItem {
        id: str_field(record, "id").map(str::to_owned).unwrap_or_else(|| format!("line-{line}")),
        question,
        options,
        answer_key,
    };
    item.validate()?;
    Ok(item)
}

/// Reads line-delimited QA records.
///
/// Accepts the CommonsenseQA release layout
/// (`{"id", "question": {"stem", "choices": [{"label", "text"}]}, "answerKey"}`)
/// and the flattened layout
/// (`{"id", "question": "...", "choices": {"label": [...], "text": [...]}, "answerKey"}`).
/// Malformed records are skipped and reported; blank lines are ignored.
pub fn parse_qa_dataset<R: BufRead>(reader: R) -> Result<QaDataset, AudioChallengeError> {
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| AudioChallengeError::Dataset(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<Value>(&line)
            .map_err(|e| (None, format!("invalid JSON: {e}")))
            .and_then(|v| record_to_item(&v, line_no).map_err(|r| (str_field(&v, "id").map(str::to_owned), r)));
        match outcome {
            Ok(item) => items.push(item),
            Err((id, reason)) => {
                tracing::warn!(line = line_no, %reason, "skipping QA record");
                diagnostics.push(SchemaViolation { line: line_no, id, reason });
            }
        }
    }
    if items.is_empty() {
        return Err(AudioChallengeError::EmptyDataset { skipped: diagnostics.len() });
    }
    Ok(QaDataset { items, diagnostics })
}
