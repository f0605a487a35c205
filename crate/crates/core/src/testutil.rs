use rand::Rng;
use std::f64::consts::PI;

use crate::geom::{rotation, ConvexPolygon, Point2};

/// Random strictly convex polygon: sorted angles on a random ellipse.
pub fn random_convex_polygon(rng: &mut impl Rng, n: usize, radius: f64) -> ConvexPolygon {
    loop {
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ax = radius * rng.gen_range(0.5..1.5);
        let by = radius * rng.gen_range(0.5..1.5);
        let rot = rng.gen_range(0.0..PI);
        let verts: Vec<Point2> =
            angles.iter().map(|t| rotation(rot) * Point2::new(ax * t.cos(), by * t.sin())).collect();
        if let Ok(p) = ConvexPolygon::new(verts) {
            return p;
        }
    }
}

/// Sutherland–Hodgman clip of a convex point loop by `{x : n·x ≤ offset}`.
pub fn clip_halfplane(pts: &[Point2], n: Point2, offset: f64) -> Vec<Point2> {
    let mut out = Vec::new();
    for i in 0..pts.len() {
        let p = pts[i];
        let q = pts[(i + 1) % pts.len()];
        let (dp, dq) = (n.dot(&p) - offset, n.dot(&q) - offset);
        if dp <= 0.0 {
            out.push(p);
        }
        if dp * dq < 0.0 {
            out.push(p + (q - p) * (dp / (dp - dq)));
        }
    }
    out
}

/// Jarvis march; collinear points dropped.
pub fn hull(pts: &[Point2]) -> ConvexPolygon {
    let start = (0..pts.len())
        .min_by(|&i, &j| pts[i].x.partial_cmp(&pts[j].x).unwrap().then(pts[i].y.partial_cmp(&pts[j].y).unwrap()))
        .unwrap();
    let mut out = vec![pts[start]];
    let mut cur = start;
    loop {
        let mut next = (cur + 1) % pts.len();
        for k in 0..pts.len() {
            let a = pts[next] - pts[cur];
            let b = pts[k] - pts[cur];
            let c = a.x * b.y - a.y * b.x;
            if c < 0.0 || (c == 0.0 && b.norm() > a.norm()) {
                next = k;
            }
        }
        if next == start {
            break;
        }
        out.push(pts[next]);
        cur = next;
    }
    ConvexPolygon::new(out).expect("hull of generic points")
}
