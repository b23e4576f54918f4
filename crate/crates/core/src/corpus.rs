//! Documents, analyst label specifications, and their on-disk formats.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whitespace tokens kept when a document is rendered for a model.
pub const TOKEN_BUDGET: usize = 450;

/// Placeholder replaced by the label text in a template.
pub const PLACEHOLDER: &str = "LABEL";

/// Template used when a spec does not set one: the bare label text.
pub const DEFAULT_TEMPLATE: &str = PLACEHOLDER;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl Document {
    /// The first [`TOKEN_BUDGET`] whitespace tokens, joined by single spaces.
    pub fn rendered_text(&self) -> String {
        truncate_tokens(&self.text, TOKEN_BUDGET)
    }
}

pub fn truncate_tokens(text: &str, budget: usize) -> String {
    text.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub id: String,
    pub name: String,
    /// Seed words or a longer description, joined to the name with " or ".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub description_terms: Vec<String>,
    /// Verified example documents standing in for the label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_doc_ids: Vec<String>,
    #[serde(default = "default_template")]
    pub template: String,
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

impl LabelSpec {
    pub fn named(id: impl Into<String>, name: impl Into<String>) -> Self {
        LabelSpec {
            id: id.into(),
            name: name.into(),
            description_terms: Vec::new(),
            seed_doc_ids: Vec::new(),
            template: default_template(),
        }
    }
}

/// Fill the template's placeholder with the label name, followed by any
/// description terms, all joined by " or ".
pub fn render_label(spec: &LabelSpec) -> Result<String> {
    if !spec.template.contains(PLACEHOLDER) {
        return Err(Error::config(format!(
            "template for label {:?} has no {PLACEHOLDER} placeholder",
            spec.id
        )));
    }
    let mut text = spec.name.clone();
    for term in &spec.description_terms {
        text.push_str(" or ");
        text.push_str(term);
    }
    Ok(spec.template.replace(PLACEHOLDER, &text))
}

/// Check label specs against each other and, when given, the corpus ids.
pub fn validate_labels(specs: &[LabelSpec], doc_ids: Option<&HashSet<&str>>) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::input("at least one label is required"));
    }
    let mut seen = HashSet::new();
    for spec in specs {
        if spec.id.is_empty() {
            return Err(Error::input("label id must be non-empty"));
        }
        if !seen.insert(spec.id.as_str()) {
            return Err(Error::input(format!("duplicate label id {:?}", spec.id)));
        }
        if spec.name.trim().is_empty() {
            return Err(Error::input(format!("label {:?} has an empty name", spec.id)));
        }
        if !spec.template.contains(PLACEHOLDER) {
            return Err(Error::config(format!(
                "template for label {:?} has no {PLACEHOLDER} placeholder",
                spec.id
            )));
        }
        if let Some(ids) = doc_ids {
            if let Some(missing) = spec.seed_doc_ids.iter().find(|d| !ids.contains(d.as_str())) {
                return Err(Error::input(format!(
                    "label {:?} references unknown seed document {missing:?}",
                    spec.id
                )));
            }
        }
    }
    Ok(())
}

/// Parse a JSONL corpus. Blank lines are skipped; ids must be unique.
pub fn parse_corpus(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            what: "corpus",
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Parse {
                what: "corpus",
                line: idx + 1,
                message: format!("duplicate document id {:?}", doc.id),
            });
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::input("corpus has no documents"));
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelSpec>> {
    let specs: Vec<LabelSpec> = serde_json::from_slice(&std::fs::read(path)?)?;
    validate_labels(&specs, None)?;
    Ok(specs)
}
