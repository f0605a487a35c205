//! Signed distance between convex shapes: GJK for separated pairs, EPA for
//! penetrating pairs. Both report witness points so that pose gradients can be
//! formed analytically.
//!
//! Conventions: `A` is the moving shape (the vehicle), `B` the obstacle. The
//! result axis is the direction in which translating `A` increases the signed
//! distance; for separated shapes it points from `witness_b` to `witness_a`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{cross, perp, polygon_to_halfspaces, support_index, ConvexPolygon, Point2, Pose2, Vec2};

/// Anything with a support function.
pub trait SupportMap {
    /// A point of the shape maximising `dir·p`. `dir` is nonzero.
    fn support(&self, dir: Vec2) -> Point2;

    fn any_point(&self) -> Point2;

    /// Whether the shape has a face through `point` whose outward normal lies
    /// within `angle_tol` radians of `normal`.
    fn has_face(&self, _normal: Vec2, _point: Point2, _angle_tol: f64) -> bool {
        false
    }
}

impl SupportMap for ConvexPolygon {
    fn support(&self, dir: Vec2) -> Point2 {
        self.vertices()[support_index(self, dir).unwrap_or(0)]
    }

    fn any_point(&self) -> Point2 {
        self.vertices()[0]
    }

    fn has_face(&self, normal: Vec2, point: Point2, angle_tol: f64) -> bool {
        let n = normal.normalize();
        polygon_to_halfspaces(self).iter().enumerate().any(|(i, hs)| {
            let angle = cross(hs.normal, n).atan2(hs.normal.dot(&n)).abs();
            if angle > angle_tol {
                return false;
            }
            let (p, q) = self.edge(i);
            let e = q - p;
            let scale = 1.0 + p.norm().max(q.norm());
            let on_line = (hs.normal.dot(&point) - hs.offset).abs() <= 1e-9 * scale;
            let t = (point - p).dot(&e) / e.norm_squared();
            on_line && (-1e-9..=1.0 + 1e-9).contains(&t)
        })
    }
}

/// A single point viewed as a (degenerate) convex shape.
#[derive(Debug, Clone, Copy)]
pub struct PointShape(pub Point2);

impl SupportMap for PointShape {
    fn support(&self, _dir: Vec2) -> Point2 {
        self.0
    }

    fn any_point(&self) -> Point2 {
        self.0
    }
}

/// Configuration shared by GJK and EPA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdConfig {
    pub max_iterations: usize,
    /// Absolute distance tolerance, m.
    pub tolerance: f64,
    /// Angle within which two contact faces count as parallel, rad.
    pub degeneracy_angle: f64,
}

impl Default for SdConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-10, degeneracy_angle: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistanceResult {
    /// Distance if separated, minus the penetration depth otherwise.
    pub value: f64,
    pub witness_a: Point2,
    pub witness_b: Point2,
    /// Unit vector; moving `A` along it increases `value`.
    pub axis: Vec2,
    /// Closest features are parallel faces; the gradient is not unique.
    pub degenerate: bool,
}

/// Vertex of the Minkowski difference `A − B` with its two generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPoint {
    pub w: Vec2,
    pub a: Point2,
    pub b: Point2,
}

fn minkowski_support<A, B>(a: &A, b: &B, dir: Vec2) -> SupportPoint
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let pa = a.support(dir);
    let pb = b.support(-dir);
    SupportPoint { w: pa - pb, a: pa, b: pb }
}

/// Final GJK simplex, used to warm-start EPA.
#[derive(Debug, Clone, Default)]
pub struct Simplex {
    pub points: Vec<SupportPoint>,
}

#[derive(Debug, Clone)]
pub enum GjkOutcome {
    Separated(SignedDistanceResult),
    /// The shapes touch or overlap; the simplex encloses (or touches) the origin.
    Overlap(Simplex),
}

/// Closest point of a simplex to the origin. Returns the reduced simplex,
/// barycentric weights and the point. A triangle containing the origin is
/// returned whole.
fn closest_on_simplex(pts: &[SupportPoint]) -> (Vec<SupportPoint>, Vec<f64>, Vec2) {
    match pts.len() {
        1 => (pts.to_vec(), vec![1.0], pts[0].w),
        2 => closest_on_segment(pts[0], pts[1]),
        3 => {
            let (p0, p1, p2) = (pts[0].w, pts[1].w, pts[2].w);
            let area = cross(p1 - p0, p2 - p0);
            let scale = (p1 - p0).norm() * (p2 - p0).norm();
            if area.abs() > 1e-14 * scale {
                let l0 = cross(p1, p2) / area;
                let l1 = cross(p2, p0) / area;
                let l2 = cross(p0, p1) / area;
                if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                    return (pts.to_vec(), vec![l0, l1, l2], Vec2::zeros());
                }
            }
            let candidates = [
                closest_on_segment(pts[0], pts[1]),
                closest_on_segment(pts[1], pts[2]),
                closest_on_segment(pts[0], pts[2]),
            ];
            candidates.into_iter().min_by(|x, y| x.2.norm_squared().partial_cmp(&y.2.norm_squared()).unwrap()).unwrap()
        }
        n => unreachable!("simplex of size {n}"),
    }
}

fn closest_on_segment(p: SupportPoint, q: SupportPoint) -> (Vec<SupportPoint>, Vec<f64>, Vec2) {
    let e = q.w - p.w;
    let len2 = e.norm_squared();
    if len2 == 0.0 {
        return (vec![p], vec![1.0], p.w);
    }
    let t = (-p.w.dot(&e) / len2).clamp(0.0, 1.0);
    if t == 0.0 {
        (vec![p], vec![1.0], p.w)
    } else if t == 1.0 {
        (vec![q], vec![1.0], q.w)
    } else {
        (vec![p, q], vec![1.0 - t, t], p.w + e * t)
    }
}

fn witnesses(pts: &[SupportPoint], weights: &[f64]) -> (Point2, Point2) {
    let mut wa = Vec2::zeros();
    let mut wb = Vec2::zeros();
    for (p, &l) in pts.iter().zip(weights) {
        wa += p.a * l;
        wb += p.b * l;
    }
    (wa, wb)
}

/// GJK distance query.
pub fn gjk_distance<A, B>(a: &A, b: &B, cfg: &SdConfig) -> Result<GjkOutcome>
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let mut dir = a.any_point() - b.any_point();
    if dir.norm_squared() == 0.0 {
        dir = Vec2::new(1.0, 0.0);
    }
    let mut simplex = vec![minkowski_support(a, b, dir)];
    let mut weights = vec![1.0];
    let mut v = simplex[0].w;

    for _ in 0..cfg.max_iterations {
        let vn = v.norm();
        if vn <= cfg.tolerance {
            return Ok(GjkOutcome::Overlap(Simplex { points: simplex }));
        }
        let s = minkowski_support(a, b, -v);
        // |v| − (v·w)/|v| bounds the distance error from above
        let gap = vn - v.dot(&s.w) / vn;
        let duplicate = simplex.iter().any(|p| (p.w - s.w).norm() <= cfg.tolerance);
        if gap <= cfg.tolerance || duplicate {
            let (wa, wb) = witnesses(&simplex, &weights);
            return Ok(GjkOutcome::Separated(SignedDistanceResult {
                value: vn,
                witness_a: wa,
                witness_b: wb,
                axis: v / vn,
                degenerate: false,
            }));
        }
        simplex.push(s);
        let (reduced, w, closest) = closest_on_simplex(&simplex);
        if reduced.len() == 3 {
            return Ok(GjkOutcome::Overlap(Simplex { points: reduced }));
        }
        if closest.norm() >= vn {
            // no progress: floating-point stall at the optimum
            let (wa, wb) = witnesses(&simplex[..simplex.len() - 1], &weights);
            return Ok(GjkOutcome::Separated(SignedDistanceResult {
                value: vn,
                witness_a: wa,
                witness_b: wb,
                axis: v / vn,
                degenerate: false,
            }));
        }
        simplex = reduced;
        weights = w;
        v = closest;
    }
    Err(Error::NumericalFailure { routine: "gjk", iterations: cfg.max_iterations, best_bound: v.norm() })
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<SupportPoint>) -> Vec<SupportPoint> {
    pts.sort_by(|p, q| p.w.x.partial_cmp(&q.w.x).unwrap().then(p.w.y.partial_cmp(&q.w.y).unwrap()));
    pts.dedup_by(|p, q| p.w == q.w);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<SupportPoint> = Vec::new();
    for p in &pts {
        while lower.len() >= 2
            && cross(lower[lower.len() - 1].w - lower[lower.len() - 2].w, p.w - lower[lower.len() - 2].w) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<SupportPoint> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(upper[upper.len() - 1].w - upper[upper.len() - 2].w, p.w - upper[upper.len() - 2].w) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Outward unit normal of the CCW edge `p → q` and the signed distance of the
/// origin's projection onto its line (≥ 0 when the origin is inside).
fn edge_normal_distance(p: Vec2, q: Vec2) -> (Vec2, f64) {
    let e = q - p;
    let n = Vec2::new(e.y, -e.x) / e.norm();
    (n, n.dot(&p))
}

/// EPA penetration query. The shapes must touch or overlap.
pub fn epa_penetration<A, B>(a: &A, b: &B, simplex: &Simplex, cfg: &SdConfig) -> Result<SignedDistanceResult>
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let mut seed = simplex.points.clone();
    for k in 0..8 {
        let t = std::f64::consts::FRAC_PI_4 * k as f64;
        seed.push(minkowski_support(a, b, Vec2::new(t.cos(), t.sin())));
    }
    let mut poly = convex_hull(seed);
    if poly.len() < 3 {
        return Err(Error::ContractViolation("EPA needs a two-dimensional Minkowski difference".into()));
    }
    let scale = poly.iter().map(|p| p.w.norm()).fold(1.0, f64::max);
    for i in 0..poly.len() {
        let (_, d) = edge_normal_distance(poly[i].w, poly[(i + 1) % poly.len()].w);
        if d < -cfg.tolerance * scale {
            return Err(Error::ContractViolation("EPA called on shapes that do not overlap".into()));
        }
    }

    let mut best = f64::NAN;
    for _ in 0..cfg.max_iterations {
        let n = poly.len();
        let (i, normal, dist) = (0..n)
            .map(|i| {
                let (nrm, d) = edge_normal_distance(poly[i].w, poly[(i + 1) % n].w);
                (i, nrm, d)
            })
            .min_by(|x, y| x.2.partial_cmp(&y.2).unwrap())
            .unwrap();
        best = dist;
        let s = minkowski_support(a, b, normal);
        if normal.dot(&s.w) - dist <= cfg.tolerance || poly.iter().any(|p| (p.w - s.w).norm() <= cfg.tolerance) {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            let e = q.w - p.w;
            let t = (-p.w.dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            let (wa, wb) = witnesses(&[p, q], &[1.0 - t, t]);
            return Ok(SignedDistanceResult {
                value: -dist.max(0.0),
                witness_a: wa,
                witness_b: wb,
                axis: -normal,
                degenerate: false,
            });
        }
        poly.insert(i + 1, s);
    }
    Err(Error::NumericalFailure { routine: "epa", iterations: cfg.max_iterations, best_bound: -best })
}

/// Signed distance: GJK first, EPA when the shapes overlap.
pub fn signed_distance<A, B>(a: &A, b: &B, cfg: &SdConfig) -> Result<SignedDistanceResult>
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let mut res = match gjk_distance(a, b, cfg)? {
        GjkOutcome::Separated(r) => r,
        GjkOutcome::Overlap(s) => epa_penetration(a, b, &s, cfg)?,
    };
    res.degenerate = a.has_face(-res.axis, res.witness_a, cfg.degeneracy_angle)
        && b.has_face(res.axis, res.witness_b, cfg.degeneracy_angle);
    Ok(res)
}

/// Pose gradient of a signed distance, ordered (x, y, heading).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient {
    pub gradient: Vector3<f64>,
    /// Set when the closest features are parallel faces and the gradient is
    /// only one of many valid subgradients.
    pub degenerate: bool,
}

/// Gradient of `result.value` with respect to the pose of shape `A`, treating
/// the witness on `A` as a body-fixed point.
pub fn sd_gradient(result: &SignedDistanceResult, pose: &Pose2) -> PoseGradient {
    let lever = perp(result.witness_a - pose.position);
    PoseGradient {
        gradient: Vector3::new(result.axis.x, result.axis.y, result.axis.dot(&lever)),
        degenerate: result.degenerate,
    }
}
