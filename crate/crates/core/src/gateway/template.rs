use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

pub type Bindings = BTreeMap<String, String>;

/// A versioned prompt with `{{name}}` placeholders and a closed response
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub version: String,
    pub system: String,
    pub user: String,
    #[serde(deserialize_with = "schema_from_str_or_table")]
    pub response_schema: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

fn schema_from_str_or_table<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Value, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        Text(String),
        Table(Value),
    }
    match Either::deserialize(d)? {
        Either::Text(s) => serde_json::from_str(&s).map_err(serde::de::Error::custom),
        Either::Table(v) => Ok(v),
    }
}

impl PromptTemplate {
    pub fn from_toml(src: &str) -> Result<Self> {
        let t: PromptTemplate = toml::from_str(src).map_err(|e| Error::parse("prompt template", e))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn validate(&self) -> Result<()> {
        if self.template_id.is_empty() || self.version.is_empty() {
            return Err(Error::Template("template_id and version are required".into()));
        }
        if !self.response_schema.is_object() {
            return Err(Error::Template(format!(
                "{}: response_schema must be a JSON object",
                self.template_id
            )));
        }
        Ok(())
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = PLACEHOLDER
            .captures_iter(&self.system)
            .chain(PLACEHOLDER.captures_iter(&self.user))
            .map(|c| c[1].to_string())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Substitutes every placeholder. Values are inserted verbatim and are
    /// not themselves scanned for placeholders.
    pub fn render(&self, bindings: &Bindings) -> Result<RenderedPrompt> {
        Ok(RenderedPrompt {
            system: self.render_text(&self.system, bindings)?,
            user: self.render_text(&self.user, bindings)?,
        })
    }

    fn render_text(&self, text: &str, bindings: &Bindings) -> Result<String> {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for caps in PLACEHOLDER.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let name = &caps[1];
            let value = bindings.get(name).ok_or_else(|| {
                Error::Template(format!(
                    "placeholder `{name}` in template `{}` is not bound",
                    self.template_id
                ))
            })?;
            out.push_str(&text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&text[last..]);
        Ok(out)
    }
}
