//! Brute-force reference geometry, independent of the library algorithms.

#![allow(dead_code)]

use colav::geom::{ConvexPolygon, Point2, Vec2};
use rand::Rng;
use std::f64::consts::PI;

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

fn edges(poly: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

/// Counter-clockwise polygon membership, boundary included.
pub fn contains(poly: &[Point2], p: Point2) -> bool {
    edges(poly).all(|(a, b)| cross(b - a, p - a) >= 0.0)
}

pub fn boundary_distance(poly: &[Point2], p: Point2) -> f64 {
    edges(poly).map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
}

pub fn point_sd(p: Point2, poly: &[Point2]) -> f64 {
    let d = boundary_distance(poly, p);
    if contains(poly, p) {
        -d
    } else {
        d
    }
}

fn outward_normals(poly: &[Point2]) -> Vec<Vec2> {
    edges(poly).map(|(a, b)| Vec2::new(b.y - a.y, a.x - b.x).normalize()).collect()
}

fn extent(poly: &[Point2], n: Vec2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(n.dot(v)), hi.max(n.dot(v))))
}

/// Smallest overlap over all edge normals of both polygons; positive exactly
/// when no separating axis exists.
pub fn sat_overlap(a: &[Point2], b: &[Point2]) -> f64 {
    outward_normals(a)
        .into_iter()
        .chain(outward_normals(b))
        .map(|n| {
            let (a0, a1) = extent(a, n);
            let (b0, b1) = extent(b, n);
            (a1 - b0).min(b1 - a0)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Signed distance of two convex polygons: exhaustive vertex-edge distances
/// when disjoint, separating-axis penetration depth when overlapping.
pub fn polygon_sd(a: &[Point2], b: &[Point2]) -> f64 {
    let overlap = sat_overlap(a, b);
    if overlap > 0.0 {
        return -overlap;
    }
    let ab = a.iter().map(|p| boundary_distance(b, *p)).fold(f64::INFINITY, f64::min);
    let ba = b.iter().map(|p| boundary_distance(a, *p)).fold(f64::INFINITY, f64::min);
    ab.min(ba)
}

/// Random strictly convex polygon around the origin, counter-clockwise.
pub fn random_polygon(rng: &mut impl Rng, n: usize, radius: f64) -> ConvexPolygon {
    loop {
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (ax, by) = (radius * rng.gen_range(0.4..1.6), radius * rng.gen_range(0.4..1.6));
        let (s, c) = rng.gen_range(0.0..PI).sin_cos();
        let verts = angles
            .iter()
            .map(|t| {
                let (x, y) = (ax * t.cos(), by * t.sin());
                Point2::new(c * x - s * y, s * x + c * y)
            })
            .collect();
        if let Ok(p) = ConvexPolygon::new(verts) {
            return p;
        }
    }
}

/// Vertices of `poly` placed at `(x, y, ψ)`.
pub fn placed(poly: &ConvexPolygon, x: f64, y: f64, heading: f64) -> Vec<Point2> {
    let (s, c) = heading.sin_cos();
    poly.vertices().iter().map(|v| Point2::new(x + c * v.x - s * v.y, y + s * v.x + c * v.y)).collect()
}
