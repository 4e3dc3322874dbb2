use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PromptError;

/// Verb and noun pack for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainNouns {
    /// Past tense of the interaction ("watched").
    pub verb: String,
    pub noun: String,
    pub nouns: String,
    /// Phrase after "that I can" ("watch", "consider to purchase").
    pub next_action: String,
    /// Phrase after "I would like to".
    pub action: String,
    /// Phrase closing the ranking request.
    pub rank_basis: String,
    /// Phrase closing the in-context demonstration.
    pub icl_basis: String,
}

/// Prompt templates with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub history: String,
    pub candidates: String,
    pub icl_candidates: String,
    pub rank: String,
    pub recency: String,
    pub title_tail: String,
    pub index_tail: String,
    pub domains: BTreeMap<String, DomainNouns>,
}

const DEFAULT: &str = include_str!("../../templates/default.toml");

const NOUN_KEYS: [&str; 7] = [
    "verb",
    "noun",
    "nouns",
    "next_action",
    "action",
    "rank_basis",
    "icl_basis",
];

impl Default for Templates {
    fn default() -> Self {
        Templates::from_toml_str(DEFAULT).expect("bundled templates are valid")
    }
}

impl Templates {
    pub fn from_toml_str(s: &str) -> Result<Self, PromptError> {
        let t: Templates = toml::from_str(s).map_err(|e| PromptError::Template {
            name: "<file>".into(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let s = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&s)
    }

    pub fn domain(&self, name: &str) -> Result<&DomainNouns, PromptError> {
        self.domains
            .get(name)
            .ok_or_else(|| PromptError::UnknownDomain(name.to_string()))
    }

    fn validate(&self) -> Result<(), PromptError> {
        let checks: [(&str, &str, &[&str]); 7] = [
            ("history", &self.history, &["history"]),
            ("candidates", &self.candidates, &["m", "candidates"]),
            ("icl_candidates", &self.icl_candidates, &["m", "candidates", "demo"]),
            ("rank", &self.rank, &["m"]),
            ("recency", &self.recency, &["recent"]),
            ("title_tail", &self.title_tail, &[]),
            ("index_tail", &self.index_tail, &[]),
        ];
        for (name, text, extra) in checks {
            for key in placeholders(text).map_err(|message| PromptError::Template {
                name: name.into(),
                message,
            })? {
                if !NOUN_KEYS.contains(&key) && !extra.contains(&key) {
                    return Err(PromptError::Template {
                        name: name.into(),
                        message: format!("unknown placeholder {{{key}}}"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn placeholders(text: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err("unmatched '}'".into());
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unclosed '{'")?;
        let key = &after[..close];
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad placeholder {{{key}}}"));
        }
        out.push(key);
        rest = &after[close + 1..];
    }
    Ok(out)
}

/// Substitutes placeholders in one pass; substituted values are never
/// re-scanned.
pub(crate) fn fill(template: &str, nouns: &DomainNouns, vars: &[(&str, &str)]) -> String {
    let lookup = |key: &str| -> Option<&str> {
        let noun = match key {
            "verb" => Some(&nouns.verb),
            "noun" => Some(&nouns.noun),
            "nouns" => Some(&nouns.nouns),
            "next_action" => Some(&nouns.next_action),
            "action" => Some(&nouns.action),
            "rank_basis" => Some(&nouns.rank_basis),
            "icl_basis" => Some(&nouns.icl_basis),
            _ => None,
        };
        noun.map(String::as_str)
            .or_else(|| vars.iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
    };
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("validated template");
        let key = &after[..close];
        match lookup(key) {
            Some(v) => out.push_str(v),
            None => {
                out.push('{');
                out.push_str(key);
                out.push('}');
            }
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}
