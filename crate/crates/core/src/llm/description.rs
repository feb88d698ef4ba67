use serde::{Deserialize, Serialize};

use super::blocks::extract_single_block;
use crate::compiler::SceneType;
use crate::diag::Diagnostic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    /// The full response text, footer included.
    pub narrative: String,
    pub scene_type: SceneType,
    /// Road name and lane count, in footer order.
    pub lanes_by_road: Vec<(String, u32)>,
    pub vehicle_count: usize,
}

fn has_heading(text: &str, word: &str) -> bool {
    text.lines().any(|l| {
        let t = l.trim().trim_start_matches('#').trim().trim_matches('*').trim().trim_end_matches(':').trim();
        t.trim_matches('*').eq_ignore_ascii_case(word)
    })
}

fn footer_error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::format_error("scenario", msg)
}

/// Parses an interpreter response: "Description" and "Reasoning" headings
/// plus one ```scenario footer block.
pub fn parse_description(text: &str) -> Result<ScenarioDescription, Diagnostic> {
    for section in ["Description", "Reasoning"] {
        if !has_heading(text, section) {
            return Err(Diagnostic::format_error(
                section,
                format!("the response has no \"{section}\" section heading"),
            ));
        }
    }
    let footer = extract_single_block(text, "scenario")?;
    let mut scene = None;
    let mut lanes = None;
    let mut vehicles = None;
    for line in footer.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| footer_error(format!("footer line '{line}' in the scenario block is not 'key: value'")))?;
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "scene_type" => scene = Some(value.parse::<SceneType>().map_err(|e| footer_error(format!("scenario footer: {e}")))?),
            "lanes" => {
                let mut list = Vec::new();
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let parsed = item
                        .split_once('=')
                        .and_then(|(n, c)| Some((n.trim().to_string(), c.trim().parse::<u32>().ok()?)))
                        .filter(|(n, c)| !n.is_empty() && *c >= 1);
                    match parsed {
                        Some(p) => list.push(p),
                        None => return Err(footer_error(format!("scenario footer: lanes entry '{item}' is not Road=count"))),
                    }
                }
                lanes = Some(list);
            }
            "vehicles" => {
                vehicles = Some(
                    value
                        .parse::<usize>()
                        .ok()
                        .filter(|v| *v >= 1)
                        .ok_or_else(|| footer_error(format!("scenario footer: vehicles '{value}' must be a count >= 1")))?,
                )
            }
            other => return Err(footer_error(format!("scenario footer has unknown key '{other}'"))),
        }
    }
    Ok(ScenarioDescription {
        narrative: text.trim().to_string(),
        scene_type: scene.ok_or_else(|| footer_error("scenario footer is missing scene_type"))?,
        lanes_by_road: lanes.ok_or_else(|| footer_error("scenario footer is missing lanes"))?,
        vehicle_count: vehicles.ok_or_else(|| footer_error("scenario footer is missing vehicles"))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub reasoning: String,
}

pub fn parse_verdict(text: &str) -> Result<Verdict, Diagnostic> {
    let block = extract_single_block(text, "verdict")?;
    let body = block.trim();
    let (word, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
    let word = word.trim_matches(|c: char| !c.is_ascii_alphabetic());
    let passed = match word.to_ascii_uppercase().as_str() {
        "PASS" => true,
        "FAIL" => false,
        _ => {
            return Err(Diagnostic::format_error(
                "verdict",
                "the verdict block must start with PASS or FAIL",
            ))
        }
    };
    let reasoning = rest.trim().to_string();
    if !passed && reasoning.is_empty() {
        return Err(Diagnostic::format_error("verdict", "a FAIL verdict must explain what is wrong"));
    }
    Ok(Verdict { passed, reasoning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::DiagCode;

    const GOOD: &str = "### Description\nA fork.\n\n**Reasoning:**\n1. because\n```scenario\nscene_type: fork\nlanes: Main=2, Branch=1\nvehicles: 5\n```\n";

    #[test]
    fn parses_footer() {
        let d = parse_description(GOOD).unwrap();
        assert_eq!(d.scene_type, SceneType::Fork);
        assert_eq!(d.lanes_by_road, vec![("Main".to_string(), 2), ("Branch".to_string(), 1)]);
        assert_eq!(d.vehicle_count, 5);
    }

    #[test]
    fn missing_pieces() {
        let no_reasoning = GOOD.replace("**Reasoning:**", "Thoughts");
        let err = parse_description(&no_reasoning).unwrap_err();
        assert_eq!(err.code, DiagCode::FormatError);
        assert!(err.message.contains("Reasoning"));
        assert!(parse_description(&GOOD.replace("vehicles: 5", "vehicles: 0")).is_err());
        assert!(parse_description(&GOOD.replace("fork", "spiral")).is_err());
        assert!(parse_description("### Description\n### Reasoning\n").is_err());
    }

    #[test]
    fn verdicts() {
        assert!(parse_verdict("```verdict\nPASS\nfine\n```").unwrap().passed);
        let v = parse_verdict("ok\n```verdict\nFAIL: BVs never reach the junction\n```").unwrap();
        assert!(!v.passed);
        assert_eq!(v.reasoning, "BVs never reach the junction");
        assert_eq!(parse_verdict("maybe").unwrap_err().code, DiagCode::FormatError);
        assert!(parse_verdict("```verdict\nFAIL\n```").is_err());
    }
}
