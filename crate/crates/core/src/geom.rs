//! Planar primitives: points, poses, half-spaces, convex polygons and ellipses.
//!
//! All shapes live in the horizontal plane of a local north-east frame. Internally
//! the first coordinate is north and the second east; orientation terms such as
//! "counter-clockwise" refer to that coordinate order.

use nalgebra::{Matrix2, Matrix2x3, SymmetricEigen, Vector2, Vector3};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
/// Positions are plain vectors from the frame origin.
pub type Point2 = Vec2;

/// Minimum sine of the turning angle at a vertex for it to count as a strict
/// convex turn.
pub const CONVEXITY_TOLERANCE: f64 = 1e-12;

/// Rotate a vector by +90°.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
pub fn rotation(heading: f64) -> Matrix2<f64> {
    let (s, c) = heading.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub position: Point2,
    /// Heading in (−π, π].
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { position: Point2::new(x, y), heading: wrap_angle(heading) }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Map a body-frame point into the world frame.
    pub fn apply(&self, body: Point2) -> Point2 {
        self.position + rotation(self.heading) * body
    }
}

/// Closed half-space `{p : normal·p − offset ≤ 0}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec2, offset: f64) -> Result<Self> {
        if !(normal.x.is_finite() && normal.y.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite half-space".into()));
        }
        if (normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidGeometry(format!(
                "half-space normal must be a unit vector, got norm {}",
                normal.norm()
            )));
        }
        Ok(Self { normal, offset })
    }

    /// Half-space bounded by the line through `point` with the given (not
    /// necessarily unit) outward direction.
    pub fn through(point: Point2, outward: Vec2) -> Result<Self> {
        let len = outward.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidGeometry("zero half-space normal".into()));
        }
        let normal = outward / len;
        Ok(Self { normal, offset: normal.dot(&point) })
    }

    #[inline]
    pub fn contains(&self, p: Point2) -> bool {
        sd_point_halfspace(p, self) <= 0.0
    }
}

/// Exact signed distance from a point to a half-space; negative inside.
#[inline]
pub fn sd_point_halfspace(p: Point2, hs: &HalfSpace) -> f64 {
    hs.normal.dot(&p) - hs.offset
}

/// Strictly convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validate and wrap vertices that are already counter-clockwise.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        validate_vertices(&vertices)?;
        let area2 = signed_area2(&vertices);
        if area2 <= 0.0 {
            return Err(Error::InvalidGeometry("polygon vertices must be ordered counter-clockwise".into()));
        }
        check_strict_convexity(&vertices)?;
        Ok(Self { vertices })
    }

    /// Like [`ConvexPolygon::new`] but accepts clockwise input, reversing it.
    /// The flag reports whether a reversal happened.
    pub fn new_any_orientation(mut vertices: Vec<Point2>) -> Result<(Self, bool)> {
        validate_vertices(&vertices)?;
        let reversed = signed_area2(&vertices) < 0.0;
        if reversed {
            vertices.reverse();
        }
        Self::new(vertices).map(|p| (p, reversed))
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Self::new(xy.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1` (cyclically).
    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn centroid(&self) -> Point2 {
        // area-weighted
        let n = self.vertices.len();
        let mut c = Vec2::zeros();
        let mut a = 0.0;
        for i in 0..n {
            let (p, q) = self.edge(i);
            let w = cross(p, q);
            a += w;
            c += (p + q) * w;
        }
        c / (3.0 * a)
    }

    pub fn contains(&self, p: Point2) -> bool {
        polygon_to_halfspaces(self).iter().all(|h| h.contains(p))
    }

    pub fn translated(&self, t: Vec2) -> Self {
        Self { vertices: self.vertices.iter().map(|v| v + t).collect() }
    }
}

fn validate_vertices(vertices: &[Point2]) -> Result<()> {
    if vertices.len() < 3 {
        return Err(Error::InvalidGeometry(format!("polygon needs at least 3 vertices, got {}", vertices.len())));
    }
    if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
        return Err(Error::InvalidGeometry("non-finite polygon vertex".into()));
    }
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            if vertices[i] == vertices[j] {
                return Err(Error::InvalidGeometry(format!("repeated polygon vertex at indices {i} and {j}")));
            }
        }
    }
    Ok(())
}

fn signed_area2(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    (0..n).map(|i| cross(vertices[i], vertices[(i + 1) % n])).sum()
}

fn check_strict_convexity(vertices: &[Point2]) -> Result<()> {
    let n = vertices.len();
    let mut turning = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        let e1 = b - a;
        let e2 = c - b;
        let z = cross(e1, e2);
        let sine = z / (e1.norm() * e2.norm());
        if sine <= CONVEXITY_TOLERANCE {
            return Err(Error::InvalidGeometry(format!(
                "vertex {} is not a strict convex turn (sine {sine:e})",
                (i + 1) % n
            )));
        }
        turning += z.atan2(e1.dot(&e2));
    }
    // a star polygon turns left everywhere but winds more than once
    if (turning - 2.0 * PI).abs() > 1e-6 {
        return Err(Error::InvalidGeometry("polygon winds more than once around its interior".into()));
    }
    Ok(())
}

/// One outward half-space per edge; edge `i` gives half-space `i`.
pub fn polygon_to_halfspaces(poly: &ConvexPolygon) -> Vec<HalfSpace> {
    (0..poly.len())
        .map(|i| {
            let (p, q) = poly.edge(i);
            let e = q - p;
            let normal = Vec2::new(e.y, -e.x) / e.norm();
            HalfSpace { normal, offset: normal.dot(&p) }
        })
        .collect()
}

/// Index of a vertex maximising `direction·v`; ties go to the lowest index.
pub fn support_index(poly: &ConvexPolygon, direction: Vec2) -> Result<usize> {
    if direction.x == 0.0 && direction.y == 0.0 || !direction.norm().is_finite() {
        return Err(Error::InvalidArgument("support direction must be nonzero and finite".into()));
    }
    let mut best = 0;
    let mut best_val = direction.dot(&poly.vertices[0]);
    for (i, v) in poly.vertices.iter().enumerate().skip(1) {
        let val = direction.dot(v);
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    Ok(best)
}

pub fn support(poly: &ConvexPolygon, direction: Vec2) -> Result<Point2> {
    support_index(poly, direction).map(|i| poly.vertices[i])
}

/// Polygon placed at a pose, together with the pose derivatives of its
/// vertices and half-spaces. Jacobian columns are ordered (x, y, heading).
#[derive(Debug, Clone)]
pub struct PosedPolygon {
    pub pose: Pose2,
    pub polygon: ConvexPolygon,
    pub halfspaces: Vec<HalfSpace>,
}

impl PosedPolygon {
    pub fn vertex_jacobian(&self, i: usize) -> Matrix2x3<f64> {
        let r = perp(self.polygon.vertices[i] - self.pose.position);
        Matrix2x3::new(1.0, 0.0, r.x, 0.0, 1.0, r.y)
    }

    /// Derivative of a world-frame point rigidly attached to the body.
    pub fn material_point_jacobian(&self, world_point: Point2) -> Matrix2x3<f64> {
        let r = perp(world_point - self.pose.position);
        Matrix2x3::new(1.0, 0.0, r.x, 0.0, 1.0, r.y)
    }

    pub fn normal_jacobian(&self, i: usize) -> Matrix2x3<f64> {
        let dn = perp(self.halfspaces[i].normal);
        Matrix2x3::new(0.0, 0.0, dn.x, 0.0, 0.0, dn.y)
    }

    /// Gradient of half-space offset `i` with respect to the pose.
    pub fn offset_gradient(&self, i: usize) -> Vector3<f64> {
        let n = self.halfspaces[i].normal;
        Vector3::new(n.x, n.y, perp(n).dot(&self.pose.position))
    }
}

/// Rotate by the heading then translate. Orientation is preserved.
pub fn transform_polygon(poly: &ConvexPolygon, pose: &Pose2) -> PosedPolygon {
    let rot = rotation(pose.heading);
    let vertices: Vec<Point2> = poly.vertices.iter().map(|v| pose.position + rot * v).collect();
    let polygon = ConvexPolygon { vertices };
    let halfspaces = polygon_to_halfspaces(&polygon);
    PosedPolygon { pose: *pose, polygon, halfspaces }
}

/// Ellipse `{p : (p − center)ᵀ·shape·(p − center) ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point2,
    pub shape: Matrix2<f64>,
}

impl Ellipse {
    pub fn new(center: Point2, shape: Matrix2<f64>) -> Result<Self> {
        if !(center.iter().chain(shape.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidGeometry("non-finite ellipse".into()));
        }
        if (shape[(0, 1)] - shape[(1, 0)]).abs() > 1e-12 {
            return Err(Error::InvalidGeometry("ellipse shape must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(shape);
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidGeometry("ellipse shape must be positive definite".into()));
        }
        Ok(Self { center, shape })
    }

    /// Ellipse with semi-axes `a` (along `heading`) and `b`.
    pub fn from_axes(center: Point2, a: f64, b: f64, heading: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidGeometry("semi-axes must be positive".into()));
        }
        let r = rotation(heading);
        let d = Matrix2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b));
        let mut shape = r * d * r.transpose();
        let off = 0.5 * (shape[(0, 1)] + shape[(1, 0)]);
        shape[(0, 1)] = off;
        shape[(1, 0)] = off;
        Self::new(center, shape)
    }

    /// `n` boundary points at equally spaced polar angles about the center.
    pub fn outline(&self, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|k| {
                let d = rotation(2.0 * PI * k as f64 / n as f64) * Vec2::x();
                self.center + d / d.dot(&(self.shape * d)).sqrt()
            })
            .collect()
    }
}

/// Ellipse defining function; ≤ 1 exactly on the closed ellipse.
pub fn ellipse_defining(p: Point2, e: &Ellipse) -> f64 {
    let d = p - e.center;
    d.dot(&(e.shape * d))
}

pub fn ellipse_defining_gradient(p: Point2, e: &Ellipse) -> Vec2 {
    2.0 * e.shape * (p - e.center)
}
