//! Bird's-eye SVG of a compiled network.

use std::fmt::Write as _;

use crate::geometry::{point_at, polyline_length, Point};
use crate::net::CompiledNetwork;
use crate::xmlutil::{escape_attr, fmt2};

const MARGIN: f64 = 20.0;

struct Frame {
    min_x: f64,
    max_y: f64,
}

impl Frame {
    fn x(&self, p: &Point) -> String {
        fmt2(p.x - self.min_x + MARGIN)
    }

    fn y(&self, p: &Point) -> String {
        fmt2(self.max_y - p.y + MARGIN)
    }

    fn points(&self, pts: &[Point]) -> String {
        pts.iter().map(|p| format!("{},{}", self.x(p), self.y(p))).collect::<Vec<_>>().join(" ")
    }
}

/// One polyline per lane, one polygon per junction (a circle for dead ends
/// without a shape) and one label per edge. Output depends only on `net`.
pub fn render_svg(net: &CompiledNetwork, lane_width: f64) -> String {
    let all: Vec<&Point> = net
        .edges
        .iter()
        .flat_map(|e| e.lanes.iter().flat_map(|l| l.shape.iter()))
        .chain(net.junctions.iter().flat_map(|j| j.shape.iter().chain(std::iter::once(&j.pos))))
        .collect();
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    if let Some(first) = all.first() {
        (min_x, min_y, max_x, max_y) = (first.x, first.y, first.x, first.y);
        for p in &all {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
    }
    let frame = Frame { min_x, max_y };
    let w = fmt2(max_x - min_x + 2.0 * MARGIN);
    let h = fmt2(max_y - min_y + 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "    <rect width=\"{w}\" height=\"{h}\" fill=\"#f4f4f0\"/>");
    out.push_str("    <g id=\"junctions\" fill=\"#9a9a9a\" stroke=\"none\">\n");
    for j in &net.junctions {
        if j.shape.is_empty() {
            let _ = writeln!(
                out,
                "        <circle id=\"{}\" cx=\"{}\" cy=\"{}\" r=\"{}\"/>",
                escape_attr(&j.id),
                frame.x(&j.pos),
                frame.y(&j.pos),
                fmt2(lane_width / 2.0)
            );
        } else {
            let _ =
                writeln!(out, "        <polygon id=\"{}\" points=\"{}\"/>", escape_attr(&j.id), frame.points(&j.shape));
        }
    }
    out.push_str("    </g>\n");
    let _ = writeln!(
        out,
        "    <g id=\"lanes\" fill=\"none\" stroke=\"#444444\" stroke-width=\"{}\" stroke-linecap=\"butt\">",
        fmt2(lane_width)
    );
    for e in &net.edges {
        for l in &e.lanes {
            let _ = writeln!(out, "        <polyline id=\"{}\" points=\"{}\"/>", escape_attr(&l.id), frame.points(&l.shape));
        }
    }
    out.push_str("    </g>\n");
    out.push_str("    <g id=\"labels\" font-family=\"sans-serif\" font-size=\"8\" fill=\"#b03030\" text-anchor=\"middle\">\n");
    for e in &net.edges {
        let Some(mid_lane) = e.lanes.get(e.lanes.len() / 2) else {
            continue;
        };
        let p = point_at(&mid_lane.shape, polyline_length(&mid_lane.shape) / 2.0);
        let _ = writeln!(out, "        <text x=\"{}\" y=\"{}\">{}</text>", frame.x(&p), frame.y(&p), escape_attr(&e.id));
    }
    out.push_str("    </g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, testnets::t_plan, CompileOptions};
    use crate::xmlutil::parse_document;

    #[test]
    fn element_census_matches_network() {
        let net = compile(&t_plan(), &CompileOptions::default()).unwrap();
        let svg = render_svg(&net, 3.2);
        let root = parse_document(&svg).unwrap();
        let group = |id: &str| root.children.iter().find(|c| c.attr("id") == Some(id)).unwrap();
        let lanes: usize = net.edges.iter().map(|e| e.lanes.len()).sum();
        assert_eq!(group("lanes").children.len(), lanes);
        assert!(group("lanes").children.iter().all(|c| c.name == "polyline"));
        let junctions = group("junctions");
        assert_eq!(junctions.children.len(), net.junctions.len());
        let polys = junctions.children.iter().filter(|c| c.name == "polygon").count();
        assert_eq!(polys, net.junctions.iter().filter(|j| !j.shape.is_empty()).count());
        assert_eq!(group("labels").children.len(), net.edges.len());
        assert_eq!(render_svg(&net, 3.2), svg);
    }

    #[test]
    fn y_axis_is_flipped() {
        let net = compile(&t_plan(), &CompileOptions::default()).unwrap();
        let root = parse_document(&render_svg(&net, 3.2)).unwrap();
        let cy = |id: &str| -> f64 {
            let el = root.children.iter().flat_map(|g| g.children.iter()).find(|c| c.attr("id") == Some(id)).unwrap();
            el.attr("cy").unwrap().parse().unwrap()
        };
        // "s" lies 100 m south of "e"
        assert!((cy("s") - cy("e") - 100.0).abs() < 1e-9);
    }
}
