//! Planar geometry helpers: headings, polyline offsets, hulls, chord tests.
//!
//! Headings are measured counter-clockwise from the +x axis in degrees, so a
//! positive heading change is a left turn.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    fn sub(&self, o: &Point) -> (f64, f64) {
        (self.x - o.x, self.y - o.y)
    }
}

/// Normalizes any angle into `[0, 360)`.
pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed difference `to - from` folded into `(-180, 180]`.
pub fn signed_delta_deg(from: f64, to: f64) -> f64 {
    let mut d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// Heading of the vector `a -> b`, in `[0, 360)`.
pub fn heading_deg(a: &Point, b: &Point) -> f64 {
    normalize_deg((b.y - a.y).atan2(b.x - a.x).to_degrees())
}

pub fn polyline_length(pts: &[Point]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Heading of the first non-degenerate segment.
pub fn start_heading(pts: &[Point]) -> Option<f64> {
    pts.windows(2)
        .find(|w| w[0].distance(&w[1]) > 1e-9)
        .map(|w| heading_deg(&w[0], &w[1]))
}

/// Heading of the last non-degenerate segment.
pub fn end_heading(pts: &[Point]) -> Option<f64> {
    pts.windows(2)
        .rev()
        .find(|w| w[0].distance(&w[1]) > 1e-9)
        .map(|w| heading_deg(&w[0], &w[1]))
}

/// Cumulative heading change of each segment relative to the first one,
/// unwrapped so that a gentle curve never jumps by 360.
pub fn relative_headings(pts: &[Point]) -> Vec<f64> {
    let headings: Vec<f64> = pts
        .windows(2)
        .filter(|w| w[0].distance(&w[1]) > 1e-9)
        .map(|w| heading_deg(&w[0], &w[1]))
        .collect();
    let mut out = Vec::with_capacity(headings.len());
    let mut acc = 0.0;
    for (i, h) in headings.iter().enumerate() {
        if i > 0 {
            acc += signed_delta_deg(headings[i - 1], *h);
        }
        out.push(acc);
    }
    out
}

fn right_normal(a: &Point, b: &Point) -> (f64, f64) {
    let (dx, dy) = b.sub(a);
    let len = dx.hypot(dy);
    if len <= 0.0 {
        (0.0, 0.0)
    } else {
        (dy / len, -dx / len)
    }
}

/// Offsets a polyline to the right of its direction of travel by `d` meters.
///
/// Interior vertices use a mitred join, so every output segment is parallel
/// to its source segment at exactly distance `d`.
pub fn offset_right(pts: &[Point], d: f64) -> Vec<Point> {
    let n = pts.len();
    if n < 2 {
        return pts.to_vec();
    }
    let normals: Vec<(f64, f64)> = pts.windows(2).map(|w| right_normal(&w[0], &w[1])).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (nx, ny) = if i == 0 {
            normals[0]
        } else if i == n - 1 {
            normals[n - 2]
        } else {
            let (ax, ay) = normals[i - 1];
            let (bx, by) = normals[i];
            let (sx, sy) = (ax + bx, ay + by);
            let slen = sx.hypot(sy);
            if slen < 1e-6 {
                (ax, ay)
            } else {
                let (mx, my) = (sx / slen, sy / slen);
                let cos_half = mx * ax + my * ay;
                (mx / cos_half, my / cos_half)
            }
        };
        out.push(Point::new(pts[i].x + nx * d, pts[i].y + ny * d));
    }
    out
}

/// Point at arc-length `s` along the polyline, clamped to its ends.
pub fn point_at(pts: &[Point], s: f64) -> Point {
    if pts.is_empty() {
        return Point::new(0.0, 0.0);
    }
    let mut remaining = s.max(0.0);
    for w in pts.windows(2) {
        let seg = w[0].distance(&w[1]);
        if remaining <= seg && seg > 0.0 {
            let t = remaining / seg;
            return Point::new(w[0].x + (w[1].x - w[0].x) * t, w[0].y + (w[1].y - w[0].y) * t);
        }
        remaining -= seg;
    }
    *pts.last().unwrap()
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull (counter-clockwise, closed: first point repeated at the end).
/// Fewer than three distinct points yield an empty polygon.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.iter().copied().filter(Point::is_finite).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
    if pts.len() < 3 {
        return Vec::new();
    }
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Vec::new();
    }
    let first = lower[0];
    lower.push(first);
    lower
}

fn on_segment(p: &Point, q: &Point, r: &Point) -> bool {
    q.x <= p.x.max(r.x) + 1e-9
        && q.x + 1e-9 >= p.x.min(r.x)
        && q.y <= p.y.max(r.y) + 1e-9
        && q.y + 1e-9 >= p.y.min(r.y)
}

/// Closed-segment intersection test (touching endpoints count).
pub fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    let eps = 1e-9;
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    (d1.abs() <= eps && on_segment(q1, p1, q2))
        || (d2.abs() <= eps && on_segment(q1, p2, q2))
        || (d3.abs() <= eps && on_segment(p1, q1, p2))
        || (d4.abs() <= eps && on_segment(p1, q2, p2))
}

/// Perpendicular distance from `p` to the infinite line through `a` and `b`.
pub fn distance_to_line(p: &Point, a: &Point, b: &Point) -> f64 {
    let len = a.distance(b);
    if len == 0.0 {
        return p.distance(a);
    }
    cross(a, b, p).abs() / len
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_delta_wraps() {
        assert_eq!(signed_delta_deg(0.0, 90.0), 90.0);
        assert_eq!(signed_delta_deg(0.0, 270.0), -90.0);
        assert_eq!(signed_delta_deg(0.0, 180.0), 180.0);
        assert_eq!(signed_delta_deg(350.0, 10.0), 20.0);
    }

    #[test]
    fn offset_of_bent_line_keeps_distance() {
        let line = vec![Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(90.0, 30.0)];
        let off = offset_right(&line, 4.8);
        for i in 0..2 {
            assert!((distance_to_line(&off[i], &line[i], &line[i + 1]) - 4.8).abs() < 1e-9);
            assert!((distance_to_line(&off[i + 1], &line[i], &line[i + 1]) - 4.8).abs() < 1e-9);
        }
        // right of an eastbound segment is south
        assert!(off[0].y < 0.0);
    }

    #[test]
    fn hull_is_closed_and_ccw() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(0.0, 4.0),
            Point::new(2.0, 2.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 5);
        assert_eq!(h.first(), h.last());
        assert!(convex_hull(&pts[..2]).is_empty());
    }

    #[test]
    fn crossing_chords() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 10.0);
        let c = Point::new(0.0, 10.0);
        let d = Point::new(10.0, 0.0);
        assert!(segments_intersect(&a, &b, &c, &d));
        assert!(!segments_intersect(&a, &c, &d, &b));
        assert!(segments_intersect(&a, &b, &b, &d));
    }
}
