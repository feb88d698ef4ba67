use crate::diag::{DiagCode, Diagnostic};

pub fn corrective_instruction(code: DiagCode) -> &'static str {
    match code {
        DiagCode::UnknownNode => "declare the node or fix the edge endpoint",
        DiagCode::UnknownEdge => "use only edge ids that exist in the network",
        DiagCode::UnknownLane => "use a lane index smaller than the edge's lane count",
        DiagCode::DuplicateId => "give every node, edge and vehicle a unique id",
        DiagCode::BadAttribute => "replace the attribute value with a valid one",
        DiagCode::UnknownAttribute => "remove the attribute or use one of the allowed attributes",
        DiagCode::FormatError => "emit well-formed XML inside the labeled code block",
        DiagCode::Unreachable => "pick source and destination edges that are connected in the network",
        DiagCode::TooShort => "lengthen the edge by moving its end nodes further apart",
        DiagCode::CountMismatch => "emit exactly the requested number of vehicles, one of them of type AV",
    }
}

/// Numbered, one line per diagnostic, ready to paste into a prompt.
pub fn diagnostics_to_feedback(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .enumerate()
        .map(|(i, d)| {
            format!(
                "{}. {} '{}': {} Fix: {}.",
                i + 1,
                d.code,
                d.subject,
                d.message.trim_end_matches('.'),
                corrective_instruction(d.code)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
