//! Prompt templates: a system part and a user part separated by a
//! `=== user ===` line, with `{name}` placeholders.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{ChatMessage, Conversation, Role};

pub const PLACEHOLDERS: [&str; 6] = ["request", "description", "examples", "feedback", "net_summary", "count"];
const SEPARATOR: &str = "=== user ===";

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template '{name}': missing '{SEPARATOR}' line")]
    NoSeparator { name: String },
    #[error("template '{name}': unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { name: String, placeholder: String },
    #[error("template '{name}': stray brace at byte {offset}")]
    StrayBrace { name: String, offset: usize },
    #[error("template '{name}': placeholder {{{placeholder}}} is not bound")]
    Unbound { name: String, placeholder: String },
    #[error("cannot read template {path}: {detail}")]
    Read { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    system: Vec<Piece>,
    user: Vec<Piece>,
}

fn tokenize(name: &str, body: &str, base: usize) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    let mut pos = base;
    while let Some(i) = rest.find(['{', '}']) {
        text.push_str(&rest[..i]);
        let stray = || TemplateError::StrayBrace { name: name.to_string(), offset: pos + i };
        if rest.as_bytes()[i] == b'}' {
            return Err(stray());
        }
        let after = &rest[i + 1..];
        let close = after.find('}').ok_or_else(stray)?;
        let slot = &after[..close];
        if slot.is_empty() || !slot.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            return Err(stray());
        }
        if !PLACEHOLDERS.contains(&slot) {
            return Err(TemplateError::UnknownPlaceholder { name: name.to_string(), placeholder: slot.to_string() });
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(std::mem::take(&mut text)));
        }
        pieces.push(Piece::Slot(slot.to_string()));
        pos += i + close + 2;
        rest = &after[close + 1..];
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

fn render_pieces(name: &str, pieces: &[Piece], vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::new();
    for p in pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(s) => out.push_str(vars.get(s.as_str()).ok_or_else(|| TemplateError::Unbound {
                name: name.to_string(),
                placeholder: s.clone(),
            })?),
        }
    }
    Ok(out.trim().to_string())
}

impl PromptTemplate {
    pub fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let sep = text
            .match_indices(SEPARATOR)
            .find(|(i, _)| *i == 0 || text.as_bytes()[i - 1] == b'\n')
            .map(|(i, _)| i)
            .ok_or_else(|| TemplateError::NoSeparator { name: name.to_string() })?;
        let user_start = sep + SEPARATOR.len();
        Ok(Self {
            name: name.to_string(),
            system: tokenize(name, &text[..sep], 0)?,
            user: tokenize(name, &text[user_start..], user_start)?,
        })
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.system
            .iter()
            .chain(&self.user)
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<Conversation, TemplateError> {
        Ok(vec![
            ChatMessage::new(Role::System, render_pieces(&self.name, &self.system, vars)?),
            ChatMessage::new(Role::User, render_pieces(&self.name, &self.user, vars)?),
        ])
    }
}

const BUILTIN: [(&str, &str); 4] = [
    ("interpret", include_str!("../../templates/interpret.txt")),
    ("net", include_str!("../../templates/net.txt")),
    ("vehicles", include_str!("../../templates/vehicles.txt")),
    ("evaluate", include_str!("../../templates/evaluate.txt")),
];

#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub interpret: PromptTemplate,
    pub net: PromptTemplate,
    pub vehicles: PromptTemplate,
    pub evaluate: PromptTemplate,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::load(None).expect("built-in templates are valid")
    }

    /// Built-in templates, each replaced by `<dir>/<name>.txt` when present.
    pub fn load(dir: Option<&Path>) -> Result<Self, TemplateError> {
        let mut parsed = BTreeMap::new();
        for (name, text) in BUILTIN {
            let override_path = dir.map(|d| d.join(format!("{name}.txt"))).filter(|p| p.exists());
            let t = match override_path {
                Some(p) => {
                    let body = fs::read_to_string(&p)
                        .map_err(|e| TemplateError::Read { path: p.display().to_string(), detail: e.to_string() })?;
                    PromptTemplate::parse(name, &body)?
                }
                None => PromptTemplate::parse(name, text)?,
            };
            parsed.insert(name, t);
        }
        let mut take = |n: &str| parsed.remove(n).unwrap();
        Ok(Self { interpret: take("interpret"), net: take("net"), vehicles: take("vehicles"), evaluate: take("evaluate") })
    }

    pub fn all(&self) -> [&PromptTemplate; 4] {
        [&self.interpret, &self.net, &self.vehicles, &self.evaluate]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let t = PromptTemplate::parse("x", "You are X.\n=== user ===\nDo {request} {count} times.\n{feedback}").unwrap();
        assert_eq!(t.placeholders(), vec!["request", "count", "feedback"]);
        let vars = BTreeMap::from([("request", "it".to_string()), ("count", "3".into()), ("feedback", String::new())]);
        let conv = t.render(&vars).unwrap();
        assert_eq!(conv[0].content, "You are X.");
        assert_eq!(conv[1].content, "Do it 3 times.");
        let missing = BTreeMap::from([("request", "it".to_string())]);
        assert!(matches!(t.render(&missing), Err(TemplateError::Unbound { .. })));
    }

    #[test]
    fn hygiene_errors() {
        assert!(matches!(PromptTemplate::parse("x", "no separator"), Err(TemplateError::NoSeparator { .. })));
        assert!(matches!(
            PromptTemplate::parse("x", "s\n=== user ===\n{bogus}"),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
        assert!(matches!(PromptTemplate::parse("x", "s\n=== user ===\n{ a"), Err(TemplateError::StrayBrace { .. })));
        assert!(matches!(PromptTemplate::parse("x", "s}\n=== user ===\n"), Err(TemplateError::StrayBrace { .. })));
    }

    #[test]
    fn shipped_templates_render_clean() {
        let set = TemplateSet::builtin();
        let vars: BTreeMap<&str, String> = PLACEHOLDERS.iter().map(|p| (*p, format!("<{p} value>"))).collect();
        for t in set.all() {
            for m in t.render(&vars).unwrap() {
                for p in PLACEHOLDERS {
                    assert!(!m.content.contains(&format!("{{{p}}}")), "{} leaves {{{p}}}", t.name);
                }
                assert!(!m.content.is_empty());
            }
        }
    }

    #[test]
    fn directory_override() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("net.txt"), "Custom net agent\n=== user ===\n{description}").unwrap();
        let set = TemplateSet::load(Some(dir.path())).unwrap();
        assert_eq!(set.net.placeholders(), vec!["description"]);
        assert_eq!(set.interpret, TemplateSet::builtin().interpret);
    }
}
