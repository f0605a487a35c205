//! Signed-distance lower bounds from primitive decompositions.
//!
//! An obstacle is the intersection of its edge half-spaces, and so is the
//! vehicle. The signed distance from a point to the obstacle is bounded below
//! by the largest signed distance to any one half-space. For a posed vehicle
//! the bound is the largest of `K + L` closed-form terms: each obstacle
//! half-space against the whole vehicle and the whole obstacle against each
//! vehicle half-space. Both kinds reduce to a minimum over polygon vertices.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{
    perp, polygon_to_halfspaces, sd_point_halfspace, transform_polygon, ConvexPolygon, HalfSpace, Point2, Pose2,
    PosedPolygon, Vec2,
};

pub const DEFAULT_ALPHA: f64 = 20.0;
pub const DEFAULT_ALPHA_UNION: f64 = -20.0;

/// Relative tolerance under which two bound terms count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Obstacle polygon with its half-space decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveObstacle {
    polygon: ConvexPolygon,
    halfspaces: Vec<HalfSpace>,
}

impl PrimitiveObstacle {
    pub fn new(polygon: ConvexPolygon) -> Self {
        let halfspaces = polygon_to_halfspaces(&polygon);
        Self { polygon, halfspaces }
    }

    pub fn polygon(&self) -> &ConvexPolygon {
        &self.polygon
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }
}

/// Vehicle footprint in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VehiclePrimitives {
    body: ConvexPolygon,
}

impl VehiclePrimitives {
    pub fn new(body: ConvexPolygon) -> Self {
        Self { body }
    }

    pub fn body(&self) -> &ConvexPolygon {
        &self.body
    }

    pub fn len(&self) -> usize {
        self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    pub fn posed(&self, pose: &Pose2) -> PosedPolygon {
        transform_polygon(&self.body, pose)
    }
}

/// A bound value with its gradient, the index of the active term and whether
/// the active term is tied (the gradient is then one of several subgradients).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound<G> {
    pub value: f64,
    pub gradient: G,
    pub active: usize,
    pub tie: bool,
}

/// Index of the largest value (lowest index among ties) and whether it is tied.
pub fn hard_max(values: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let tol = TIE_TOLERANCE * (1.0 + values[best].abs());
    let tie = values.iter().enumerate().any(|(i, v)| i != best && values[best] - v <= tol);
    (best, tie)
}

/// Per-half-space terms of the point bound: signed distances and their point
/// gradients (the face normals).
pub fn point_terms(p: Point2, obs: &PrimitiveObstacle) -> Vec<(f64, Vec2)> {
    obs.halfspaces.iter().map(|hs| (sd_point_halfspace(p, hs), hs.normal)).collect()
}

/// Point bound `max_i sd(p, H_i)` with its gradient with respect to `p`.
pub fn lower_bound_point(p: Point2, obs: &PrimitiveObstacle) -> Bound<Vec2> {
    let terms = point_terms(p, obs);
    let values: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let (active, tie) = hard_max(&values);
    Bound { value: terms[active].0, gradient: terms[active].1, active, tie }
}

/// Index and value of `min_k f(pts[k])` and whether the minimum is tied.
fn min_vertex(pts: &[Point2], f: impl Fn(Point2) -> f64) -> (usize, f64, bool) {
    let vals: Vec<f64> = pts.iter().map(|&p| f(p)).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    let tol = TIE_TOLERANCE * (1.0 + vals[best].abs());
    let tie = vals.iter().enumerate().any(|(i, v)| i != best && v - vals[best] <= tol);
    (best, vals[best], tie)
}

/// `sd(0, O − H)` for a world-frame vehicle half-space `H`; `O − H` is itself a
/// half-space, which gives `min_o (n·o − offset)`.
pub fn minkdiff_obstacle_minus_vehicle_halfspace(obs: &ConvexPolygon, vhs: &HalfSpace) -> f64 {
    min_vertex(obs.vertices(), |o| vhs.normal.dot(&o) - vhs.offset).1
}

/// `sd(0, H − V)` for an obstacle half-space `H` and the posed vehicle `V`,
/// which is `min_v (n·v − offset)`.
pub fn minkdiff_obstacle_halfspace_minus_vehicle(ohs: &HalfSpace, vehicle: &ConvexPolygon) -> f64 {
    min_vertex(vehicle.vertices(), |v| ohs.normal.dot(&v) - ohs.offset).1
}

/// The `K + L` terms of the shape bound with pose gradients (x, y, ψ):
/// obstacle faces first, then vehicle faces. A term is tied when its inner
/// vertex minimum is attained twice (a face parallel to a face).
pub fn shape_terms(vehicle: &VehiclePrimitives, pose: &Pose2, obs: &PrimitiveObstacle) -> Vec<Bound<Vector3<f64>>> {
    let posed = vehicle.posed(pose);
    let verts = posed.polygon.vertices();
    let mut out = Vec::with_capacity(obs.len() + vehicle.len());
    for (i, hs) in obs.halfspaces.iter().enumerate() {
        let (k, value, tie) = min_vertex(verts, |v| hs.normal.dot(&v) - hs.offset);
        let lever = perp(verts[k] - pose.position);
        out.push(Bound {
            value,
            gradient: Vector3::new(hs.normal.x, hs.normal.y, hs.normal.dot(&lever)),
            active: i,
            tie,
        });
    }
    for (j, hs) in posed.halfspaces.iter().enumerate() {
        let (k, value, tie) = min_vertex(obs.polygon.vertices(), |o| hs.normal.dot(&o) - hs.offset);
        let rel = obs.polygon.vertices()[k] - pose.position;
        out.push(Bound {
            value,
            gradient: Vector3::new(-hs.normal.x, -hs.normal.y, perp(hs.normal).dot(&rel)),
            active: obs.len() + j,
            tie,
        });
    }
    out
}

/// Shape bound: hard maximum over [`shape_terms`].
pub fn lower_bound_shape(vehicle: &VehiclePrimitives, pose: &Pose2, obs: &PrimitiveObstacle) -> Bound<Vector3<f64>> {
    let terms = shape_terms(vehicle, pose, obs);
    let values: Vec<f64> = terms.iter().map(|t| t.value).collect();
    let (active, tie) = hard_max(&values);
    Bound { tie: tie || terms[active].tie, ..terms[active] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftPolicy {
    MaxOfInputs,
    MinOfInputs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LseConfig {
    pub alpha: f64,
    pub shift: ShiftPolicy,
}

impl LseConfig {
    /// Shift by the maximum for a smooth max (α > 0) and by the minimum for a
    /// smooth min (α < 0).
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("LSE sharpness must be finite and nonzero, got {alpha}")));
        }
        let shift = if alpha > 0.0 { ShiftPolicy::MaxOfInputs } else { ShiftPolicy::MinOfInputs };
        Ok(Self { alpha, shift })
    }
}

/// `(1/α)·log Σ exp(α(d_i − d0)) + d0` and its partial derivatives (softmax
/// weights, summing to 1).
pub fn lse(values: &[f64], cfg: &LseConfig) -> Result<(f64, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("LSE of an empty list".into()));
    }
    if cfg.alpha == 0.0 {
        return Err(Error::InvalidArgument("LSE sharpness must be nonzero".into()));
    }
    let d0 = match cfg.shift {
        ShiftPolicy::MaxOfInputs => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ShiftPolicy::MinOfInputs => values.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    let e: Vec<f64> = values.iter().map(|d| (cfg.alpha * (d - d0)).exp()).collect();
    let s: f64 = e.iter().sum();
    let value = s.ln() / cfg.alpha + d0;
    Ok((value, e.iter().map(|x| x / s).collect()))
}

/// Worst-case LSE error `log(m)/α`.
pub fn lse_error_bound(m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("LSE error bound needs α > 0, got {alpha}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("LSE error bound needs m ≥ 1".into()));
    }
    Ok((m as f64).ln() / alpha)
}

/// Smooth minimum over per-obstacle bounds; the result never exceeds the true
/// minimum. Returns the value and the weight of each input.
pub fn smooth_union_over_obstacles(values: &[f64], alpha_union: f64) -> Result<(f64, Vec<f64>)> {
    if !(alpha_union < 0.0) {
        return Err(Error::InvalidArgument(format!("obstacle union needs α < 0, got {alpha_union}")));
    }
    lse(values, &LseConfig::new(alpha_union)?)
}
