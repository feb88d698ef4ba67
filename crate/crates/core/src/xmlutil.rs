//! Minimal XML document tree on top of quick-xml plus the shared number and
//! shape formatting rules used by every file format in this crate.

use quick_xml::events::Event;
use quick_xml::Reader;
use quick_xml::XmlVersion;

use crate::diag::Diagnostic;
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct XmlElement {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlElement>,
    pub text: String,
    /// Byte offset of the start tag in the source document.
    pub offset: u64,
}

impl XmlElement {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn open_element(e: &quick_xml::events::BytesStart<'_>, offset: u64) -> Result<XmlElement, Diagnostic> {
    let name = e.name().as_ref().to_string();
    let mut attrs = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| {
            Diagnostic::format_error(name.clone(), format!("malformed attribute in <{name}> at byte {offset}: {err}"))
        })?;
        let key = attr.key.as_ref().to_string();
        let value = attr
            .normalized_value(XmlVersion::Implicit1_0)
            .map_err(|err| {
                Diagnostic::format_error(key.clone(), format!("cannot decode attribute {key} in <{name}>: {err}"))
            })?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(XmlElement { name, attrs, children: Vec::new(), text: String::new(), offset })
}

/// Parses a complete document into its root element. Comments, declarations
/// and processing instructions are skipped.
pub fn parse_document(text: &str) -> Result<XmlElement, Diagnostic> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<XmlElement> = Vec::new();
    let mut root: Option<XmlElement> = None;
    loop {
        let offset = reader.buffer_position();
        let event = reader.read_event().map_err(|err| {
            Diagnostic::format_error(
                "document",
                format!("document is not well-formed XML near byte {}: {err}", reader.error_position()),
            )
        })?;
        match event {
            Event::Start(e) => stack.push(open_element(&e, offset)?),
            Event::Empty(e) => {
                let el = open_element(&e, offset)?;
                attach(&mut stack, &mut root, el)?;
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| Diagnostic::format_error("document", "document has an unmatched closing tag"))?;
                attach(&mut stack, &mut root, el)?;
            }
            Event::Text(t) => {
                let content = t.xml_content(XmlVersion::Implicit1_0);
                push_text(&mut stack, &content)?;
            }
            Event::CData(t) => {
                let content = t.into_inner().into_owned();
                push_text(&mut stack, &content)?;
            }
            Event::GeneralRef(r) => {
                let name = r.into_inner().into_owned();
                let resolved = match name.as_str() {
                    "amp" => "&",
                    "lt" => "<",
                    "gt" => ">",
                    "quot" => "\"",
                    "apos" => "'",
                    _ => "?",
                };
                push_text(&mut stack, resolved)?;
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(Diagnostic::format_error(
            open.name.clone(),
            format!("document ended before <{}> was closed", open.name),
        ));
    }
    root.ok_or_else(|| Diagnostic::format_error("document", "document contains no root element"))
}

fn attach(stack: &mut [XmlElement], root: &mut Option<XmlElement>, el: XmlElement) -> Result<(), Diagnostic> {
    if let Some(parent) = stack.last_mut() {
        parent.children.push(el);
        Ok(())
    } else if root.is_some() {
        Err(Diagnostic::format_error(el.name.clone(), format!("second root element <{}> in document", el.name)))
    } else {
        *root = Some(el);
        Ok(())
    }
}

fn push_text(stack: &mut [XmlElement], content: &str) -> Result<(), Diagnostic> {
    if content.trim().is_empty() {
        return Ok(());
    }
    match stack.last_mut() {
        Some(el) => {
            el.text.push_str(content);
            Ok(())
        }
        None => Err(Diagnostic::format_error(
            "document",
            format!("text outside the root element: {:?}", truncate(content, 40)),
        )),
    }
}

pub fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut out: String = s.chars().take(max).collect();
        out.push('…');
        out
    }
}

/// Two-decimal canonical number formatting (never prints `-0.00`).
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn format_shape(pts: &[Point]) -> String {
    pts.iter()
        .map(|p| format!("{},{}", fmt2(p.x), fmt2(p.y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses `"x,y x,y ..."`. Returns `None` for any malformed pair.
pub fn parse_shape(s: &str) -> Option<Vec<Point>> {
    let mut out = Vec::new();
    for pair in s.split_whitespace() {
        let mut it = pair.split(',');
        let x = it.next()?.trim().parse::<f64>().ok()?;
        let y = it.next()?.trim().parse::<f64>().ok()?;
        // a third component is elevation in SUMO files; ignored
        if it.clone().count() > 1 {
            return None;
        }
        if let Some(z) = it.next() {
            z.trim().parse::<f64>().ok()?;
        }
        let p = Point::new(x, y);
        if !p.is_finite() {
            return None;
        }
        out.push(p);
    }
    Some(out)
}

pub fn escape_attr(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Appends ` name="value"` with escaping.
pub fn push_attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    out.push_str(&escape_attr(value));
    out.push('"');
}

/// Identifier rule shared by all user-facing formats: nonempty, no
/// whitespace, no `#` or `:`.
pub fn check_identifier(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("identifier is empty".to_string());
    }
    if id.chars().any(char::is_whitespace) {
        return Err(format!("identifier '{id}' contains whitespace"));
    }
    if id.contains('#') {
        return Err(format!("identifier '{id}' contains a '#' character"));
    }
    if id.contains(':') {
        return Err(format!("identifier '{id}' contains a ':' character"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_skips_comments_and_decl() {
        let doc = "<?xml version=\"1.0\"?>\n<!-- c --><a x=\"1\"><b/><!-- d --><c y=\"&amp;\"/></a>";
        let root = parse_document(doc).unwrap();
        assert_eq!(root.name, "a");
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.children[1].attr("y"), Some("&"));
    }

    #[test]
    fn unclosed_is_format_error() {
        let err = parse_document("<a><b></a>").unwrap_err();
        assert_eq!(err.code, crate::diag::DiagCode::FormatError);
        assert!(parse_document("<a>").is_err());
        assert!(parse_document("").is_err());
    }

    #[test]
    fn two_decimal_formatting() {
        assert_eq!(fmt2(-0.001), "0.00");
        assert_eq!(fmt2(13.888_88), "13.89");
        assert_eq!(format_shape(&[Point::new(0.0, 0.0), Point::new(50.0, 10.0)]), "0.00,0.00 50.00,10.00");
    }

    #[test]
    fn shape_parsing() {
        assert_eq!(parse_shape("0,0 1.5,2").unwrap().len(), 2);
        assert_eq!(parse_shape("0,0,3 1,2,3").unwrap().len(), 2);
        assert!(parse_shape("0,0 1").is_none());
        assert!(parse_shape("a,b").is_none());
    }
}
