use crate::diag::Diagnostic;

fn fence_tag(line: &str) -> Option<&str> {
    line.trim().strip_prefix("```").map(str::trim)
}

/// Contents of every fenced block labeled `tag`, in order. Other fences are
/// skipped over as a whole so their contents never leak into a match.
pub fn extract_tagged_blocks(text: &str, tag: &str) -> Result<Vec<String>, Diagnostic> {
    let mut out = Vec::new();
    let mut open: Option<(String, usize, Vec<&str>)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        match (&mut open, fence_tag(content)) {
            (None, Some(t)) => open = Some((t.to_string(), here, Vec::new())),
            (Some((t, _, lines)), Some("")) => {
                if t == tag {
                    out.push(lines.join("\n"));
                }
                open = None;
            }
            (Some((_, _, lines)), _) => lines.push(content),
            (None, None) => {}
        }
    }
    if let Some((t, at, _)) = open {
        if t == tag || t.is_empty() {
            return Err(Diagnostic::format_error(
                tag,
                format!("the ```{tag} block opened at byte {at} is never closed with ```"),
            ));
        }
    }
    Ok(out)
}

/// Exactly one block labeled `tag`.
pub fn extract_single_block(text: &str, tag: &str) -> Result<String, Diagnostic> {
    let mut blocks = extract_tagged_blocks(text, tag)?;
    match blocks.len() {
        1 => Ok(blocks.remove(0)),
        0 => Err(Diagnostic::format_error(tag, format!("the response contains no ```{tag} block; exactly one is required"))),
        n => Err(Diagnostic::format_error(tag, format!("the response contains {n} ```{tag} blocks; exactly one is required"))),
    }
}
