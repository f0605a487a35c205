//! Collision-avoidance constraint providers behind one interface.
//!
//! Every provider is sample-local: the rows at a sample depend only on that
//! sample's pose and on a fixed number of extra variables owned by that
//! sample (the dual multipliers). Inequalities follow `h ≤ 0`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::bound::{
    lower_bound_point, lower_bound_shape, lse, point_terms, shape_terms, smooth_union_over_obstacles, LseConfig,
    PrimitiveObstacle, VehiclePrimitives,
};
use crate::csg::{approx_union_with_gradient, evaluate_region, CsgRegion};
use crate::dual::{
    dual_counts, dual_point_residuals, dual_shape_residuals, init_point_duals, init_shape_duals, DualMode,
};
use crate::error::{Error, Result};
use crate::geom::{ellipse_defining, ellipse_defining_gradient, ConvexPolygon, Ellipse, Point2, Pose2};
use crate::sdist::{sd_gradient, signed_distance, PointShape, SdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Ellipsoidal,
    CsgClassic,
    CsgBoundHard,
    CsgBoundLse,
    Dual,
    DirectSd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Union,
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Body {
    Point,
    Shape,
}

impl Kind {
    pub const ALL: [Kind; 6] =
        [Kind::CsgBoundHard, Kind::CsgBoundLse, Kind::Ellipsoidal, Kind::CsgClassic, Kind::Dual, Kind::DirectSd];

    pub fn id(&self) -> &'static str {
        match self {
            Kind::Ellipsoidal => "ellipsoidal",
            Kind::CsgClassic => "csg-classic",
            Kind::CsgBoundHard => "csg-bound-hard",
            Kind::CsgBoundLse => "csg-bound-lse",
            Kind::Dual => "dual",
            Kind::DirectSd => "direct-sd",
        }
    }

    /// Whether the constraint rows are twice differentiable away from
    /// measure-zero sets, so that curvature may be used by the solver.
    pub fn is_smooth(&self) -> bool {
        matches!(self, Kind::Ellipsoidal | Kind::CsgClassic | Kind::CsgBoundLse | Kind::Dual)
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL.into_iter().find(|k| k.id() == s).ok_or_else(|| Error::Config(format!("unknown formulation `{s}`")))
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(Mode::Union),
            "separate" => Ok(Mode::Separate),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected union or separate)"))),
        }
    }
}

impl FromStr for Body {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Body::Point),
            "shape" => Ok(Body::Shape),
            _ => Err(Error::Config(format!("unknown body `{s}` (expected point or shape)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Union => "union",
            Mode::Separate => "separate",
        })
    }
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Body::Point => "point",
            Body::Shape => "shape",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FormulationKind {
    pub kind: Kind,
    pub mode: Mode,
    pub body: Body,
}

impl FormulationKind {
    pub fn new(kind: Kind, mode: Mode, body: Body) -> Result<Self> {
        let f = Self { kind, mode, body };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, Kind::Ellipsoidal | Kind::CsgClassic) && self.body == Body::Shape {
            return Err(Error::Config(format!("{} supports body=point only", self.kind.id())));
        }
        if self.kind == Kind::Dual && self.mode == Mode::Union {
            return Err(Error::Config("dual supports mode=separate only".into()));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.kind.id(), self.mode, self.body)
    }

    /// The benchmark matrix: nine point-body runs and six shape-body runs.
    pub fn table_matrix() -> Vec<FormulationKind> {
        use Body::*;
        use Kind::*;
        use Mode::*;
        let cells = [
            (CsgBoundHard, Union, Point),
            (CsgBoundHard, Separate, Point),
            (CsgBoundLse, Union, Point),
            (CsgBoundLse, Separate, Point),
            (Ellipsoidal, Separate, Point),
            (CsgClassic, Union, Point),
            (CsgClassic, Separate, Point),
            (Dual, Separate, Point),
            (DirectSd, Separate, Point),
            (CsgBoundHard, Union, Shape),
            (CsgBoundHard, Separate, Shape),
            (CsgBoundLse, Union, Shape),
            (CsgBoundLse, Separate, Shape),
            (Dual, Separate, Shape),
            (DirectSd, Separate, Shape),
        ];
        cells.iter().map(|&(k, m, b)| FormulationKind { kind: k, mode: m, body: b }).collect()
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// One obstacle in every representation used by the formulations. The
/// polygon is the true shape; the ellipse and CSG region enclose it.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub name: String,
    pub polygon: ConvexPolygon,
    pub ellipse: Option<Ellipse>,
    pub csg: Option<CsgRegion>,
    /// Required signed distance, m.
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulationSettings {
    pub alpha: f64,
    pub alpha_union: f64,
    pub p: u32,
    pub sd: SdConfig,
}

impl Default for FormulationSettings {
    fn default() -> Self {
        Self {
            alpha: crate::bound::DEFAULT_ALPHA,
            alpha_union: crate::bound::DEFAULT_ALPHA_UNION,
            p: crate::csg::DEFAULT_P,
            sd: SdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Equality,
    Inequality,
}

/// One constraint row at one sample, with derivatives with respect to the
/// sample pose (x, y, ψ) and the sample's extra variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    pub value: f64,
    pub grad_pose: Vector3<f64>,
    /// `(local extra index, derivative)`.
    pub grad_extra: Vec<(usize, f64)>,
    /// The gradient is one of several subgradients (tie or parallel faces).
    pub nonsmooth: bool,
}

impl LocalRow {
    fn pose_only(value: f64, grad_pose: Vector3<f64>, nonsmooth: bool) -> Self {
        Self { value, grad_pose, grad_extra: Vec::new(), nonsmooth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub obstacle_constraints: usize,
    pub extra_variables: usize,
}

/// Sparse rows over `[3S pose variables ⊕ S·E extra variables]`, where sample
/// `k` owns pose columns `3k..3k+3` and extra columns `3S + kE ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub values: Vec<f64>,
    pub jacobian: Vec<Vec<(usize, f64)>>,
    pub kinds: Vec<RowKind>,
    pub extra_variable_count: usize,
}

pub trait ConstraintProvider: Send + Sync {
    fn formulation(&self) -> FormulationKind;

    /// Row kinds at one sample, in evaluation order.
    fn row_kinds(&self) -> Vec<RowKind>;

    /// Extra variables per sample (all bounded below by 0).
    fn extra_per_sample(&self) -> usize;

    fn evaluate_sample(&self, pose: &Pose2, extra: &[f64]) -> Vec<LocalRow>;

    /// Starting values of the extra variables at a pose.
    fn initial_extra(&self, pose: &Pose2) -> Vec<f64>;

    fn counts(&self, samples: usize) -> Counts {
        Counts {
            obstacle_constraints: samples * self.row_kinds().len(),
            extra_variables: samples * self.extra_per_sample(),
        }
    }

    fn evaluate(&self, poses: &[Pose2], extra: &[f64]) -> ConstraintBlock {
        let s = poses.len();
        let e = self.extra_per_sample();
        let kinds_one = self.row_kinds();
        let mut block = ConstraintBlock {
            values: Vec::new(),
            jacobian: Vec::new(),
            kinds: Vec::new(),
            extra_variable_count: s * e,
        };
        for (k, pose) in poses.iter().enumerate() {
            let rows = self.evaluate_sample(pose, &extra[k * e..(k + 1) * e]);
            for (row, kind) in rows.into_iter().zip(&kinds_one) {
                let mut jac: Vec<(usize, f64)> = (0..3).map(|c| (3 * k + c, row.grad_pose[c])).collect();
                jac.extend(row.grad_extra.iter().map(|&(i, v)| (3 * s + k * e + i, v)));
                block.values.push(row.value);
                block.jacobian.push(jac);
                block.kinds.push(*kind);
            }
        }
        block
    }
}

/// Combine per-obstacle margins `m_i ≥ 0` (with pose gradients) into rows.
/// Separate mode gives one row `−m_i ≤ 0` each; union mode one row.
fn margin_rows(margins: Vec<(f64, Vector3<f64>, bool)>, mode: Mode, union: UnionRule) -> Vec<LocalRow> {
    match mode {
        Mode::Separate => margins.into_iter().map(|(m, g, ns)| LocalRow::pose_only(-m, -g, ns)).collect(),
        Mode::Union => {
            let values: Vec<f64> = margins.iter().map(|m| m.0).collect();
            match union {
                UnionRule::HardMin => {
                    let mut best = 0;
                    for (i, v) in values.iter().enumerate() {
                        if *v < values[best] {
                            best = i;
                        }
                    }
                    let tie = values
                        .iter()
                        .enumerate()
                        .any(|(i, v)| i != best && (v - values[best]).abs() <= 1e-12 * (1.0 + v.abs()));
                    let (m, g, ns) = margins[best];
                    vec![LocalRow::pose_only(-m, -g, ns || tie)]
                }
                UnionRule::SmoothMin(alpha_union) => {
                    let (v, w) = smooth_union_over_obstacles(&values, alpha_union).expect("negative union sharpness");
                    let g = margins.iter().zip(&w).fold(Vector3::zeros(), |acc, (m, wi)| acc + m.1 * *wi);
                    vec![LocalRow::pose_only(-v, -g, margins.iter().any(|m| m.2))]
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum UnionRule {
    HardMin,
    SmoothMin(f64),
}

struct EllipsoidalProvider {
    f: FormulationKind,
    ellipses: Vec<Ellipse>,
    p: u32,
}

impl ConstraintProvider for EllipsoidalProvider {
    fn formulation(&self) -> FormulationKind {
        self.f
    }

    fn row_kinds(&self) -> Vec<RowKind> {
        let n = if self.f.mode == Mode::Union { 1 } else { self.ellipses.len() };
        vec![RowKind::Inequality; n]
    }

    fn extra_per_sample(&self) -> usize {
        0
    }

    fn evaluate_sample(&self, pose: &Pose2, _extra: &[f64]) -> Vec<LocalRow> {
        let p = pose.position;
        let evals: Vec<(f64, Point2)> =
            self.ellipses.iter().map(|e| (ellipse_defining(p, e), ellipse_defining_gradient(p, e))).collect();
        defining_rows(evals, self.f.mode, self.p)
    }

    fn initial_extra(&self, _pose: &Pose2) -> Vec<f64> {
        Vec::new()
    }
}

/// Rows `1 − f ≤ 0` for defining functions, separately or under the smooth
/// union.
fn defining_rows(evals: Vec<(f64, Point2)>, mode: Mode, p: u32) -> Vec<LocalRow> {
    let row = |v: f64, g: Point2| LocalRow::pose_only(1.0 - v, Vector3::new(-g.x, -g.y, 0.0), false);
    match mode {
        Mode::Separate => evals.into_iter().map(|(v, g)| row(v, g)).collect(),
        Mode::Union => {
            let values: Vec<f64> = evals.iter().map(|e| e.0).collect();
            let (v, w) = approx_union_with_gradient(&values, p).expect("non-negative defining functions");
            let g = evals.iter().zip(&w).fold(Point2::zeros(), |acc, (e, wi)| acc + e.1 * *wi);
            vec![row(v, g)]
        }
    }
}

struct CsgClassicProvider {
    f: FormulationKind,
    regions: Vec<CsgRegion>,
    p: u32,
}

impl ConstraintProvider for CsgClassicProvider {
    fn formulation(&self) -> FormulationKind {
        self.f
    }

    fn row_kinds(&self) -> Vec<RowKind> {
        let n = if self.f.mode == Mode::Union { 1 } else { self.regions.len() };
        vec![RowKind::Inequality; n]
    }

    fn extra_per_sample(&self) -> usize {
        0
    }

    fn evaluate_sample(&self, pose: &Pose2, _extra: &[f64]) -> Vec<LocalRow> {
        let evals = self.regions.iter().map(|r| evaluate_region(r, pose.position)).collect();
        defining_rows(evals, self.f.mode, self.p)
    }

    fn initial_extra(&self, _pose: &Pose2) -> Vec<f64> {
        Vec::new()
    }
}

struct BoundProvider {
    f: FormulationKind,
    obstacles: Vec<PrimitiveObstacle>,
    clearances: Vec<f64>,
    vehicle: VehiclePrimitives,
    lse: Option<(LseConfig, f64)>,
}

impl BoundProvider {
    fn margin(&self, i: usize, pose: &Pose2) -> (f64, Vector3<f64>, bool) {
        let obs = &self.obstacles[i];
        let d = self.clearances[i];
        match (self.f.body, self.lse) {
            (Body::Point, None) => {
                let b = lower_bound_point(pose.position, obs);
                (b.value - d, Vector3::new(b.gradient.x, b.gradient.y, 0.0), b.tie)
            }
            (Body::Shape, None) => {
                let b = lower_bound_shape(&self.vehicle, pose, obs);
                (b.value - d, b.gradient, b.tie)
            }
            (Body::Point, Some((cfg, _))) => {
                let terms = point_terms(pose.position, obs);
                let values: Vec<f64> = terms.iter().map(|t| t.0).collect();
                let (v, w) = lse(&values, &cfg).expect("validated sharpness");
                let g = terms.iter().zip(&w).fold(Point2::zeros(), |acc, (t, wi)| acc + t.1 * *wi);
                (v - d, Vector3::new(g.x, g.y, 0.0), false)
            }
            (Body::Shape, Some((cfg, _))) => {
                let terms = shape_terms(&self.vehicle, pose, obs);
                let values: Vec<f64> = terms.iter().map(|t| t.value).collect();
                let (v, w) = lse(&values, &cfg).expect("validated sharpness");
                let g = terms.iter().zip(&w).fold(Vector3::zeros(), |acc, (t, wi)| acc + t.gradient * *wi);
                // inner vertex minima are still hard
                let ns = terms.iter().zip(&w).any(|(t, wi)| t.tie && *wi > 1e-8);
                (v - d, g, ns)
            }
        }
    }
}

impl ConstraintProvider for BoundProvider {
    fn formulation(&self) -> FormulationKind {
        self.f
    }

    fn row_kinds(&self) -> Vec<RowKind> {
        let n = if self.f.mode == Mode::Union { 1 } else { self.obstacles.len() };
        vec![RowKind::Inequality; n]
    }

    fn extra_per_sample(&self) -> usize {
        0
    }

    fn evaluate_sample(&self, pose: &Pose2, _extra: &[f64]) -> Vec<LocalRow> {
        let margins = (0..self.obstacles.len()).map(|i| self.margin(i, pose)).collect();
        let rule = match self.lse {
            Some((_, au)) => UnionRule::SmoothMin(au),
            None => UnionRule::HardMin,
        };
        margin_rows(margins, self.f.mode, rule)
    }

    fn initial_extra(&self, _pose: &Pose2) -> Vec<f64> {
        Vec::new()
    }
}

struct DirectSdProvider {
    f: FormulationKind,
    obstacles: Vec<ConvexPolygon>,
    clearances: Vec<f64>,
    vehicle: VehiclePrimitives,
    sd: SdConfig,
}

impl DirectSdProvider {
    fn margin(&self, i: usize, pose: &Pose2) -> (f64, Vector3<f64>, bool) {
        let obs = &self.obstacles[i];
        let d = self.clearances[i];
        match self.f.body {
            Body::Point => {
                let r = signed_distance(&PointShape(pose.position), obs, &self.sd).expect("signed distance");
                (r.value - d, Vector3::new(r.axis.x, r.axis.y, 0.0), false)
            }
            Body::Shape => {
                let posed = self.vehicle.posed(pose);
                let r = signed_distance(&posed.polygon, obs, &self.sd).expect("signed distance");
                let g = sd_gradient(&r, pose);
                (r.value - d, g.gradient, g.degenerate)
            }
        }
    }
}

impl ConstraintProvider for DirectSdProvider {
    fn formulation(&self) -> FormulationKind {
        self.f
    }

    fn row_kinds(&self) -> Vec<RowKind> {
        let n = if self.f.mode == Mode::Union { 1 } else { self.obstacles.len() };
        vec![RowKind::Inequality; n]
    }

    fn extra_per_sample(&self) -> usize {
        0
    }

    fn evaluate_sample(&self, pose: &Pose2, _extra: &[f64]) -> Vec<LocalRow> {
        let margins = (0..self.obstacles.len()).map(|i| self.margin(i, pose)).collect();
        margin_rows(margins, self.f.mode, UnionRule::HardMin)
    }

    fn initial_extra(&self, _pose: &Pose2) -> Vec<f64> {
        Vec::new()
    }
}

/// Dual rows per obstacle: point mode (inequality, norm); shape mode
/// (inequality, equality x, equality y, norm). Extra variables per sample are
/// all `μ` blocks followed, in shape mode, by one `λ` block per obstacle.
struct DualProvider {
    f: FormulationKind,
    obstacles: Vec<PrimitiveObstacle>,
    clearances: Vec<f64>,
    vehicle: VehiclePrimitives,
    mu_offsets: Vec<usize>,
    sd: SdConfig,
}

impl DualProvider {
    fn mu_total(&self) -> usize {
        self.obstacles.iter().map(|o| o.len()).sum()
    }

    fn lambda_offset(&self, i: usize) -> usize {
        self.mu_total() + i * self.vehicle.len()
    }
}

impl ConstraintProvider for DualProvider {
    fn formulation(&self) -> FormulationKind {
        self.f
    }

    fn row_kinds(&self) -> Vec<RowKind> {
        use RowKind::*;
        let per: &[RowKind] = match self.f.body {
            Body::Point => &[Inequality, Equality],
            Body::Shape => &[Inequality, Equality, Equality, Equality],
        };
        per.iter().cycle().take(per.len() * self.obstacles.len()).cloned().collect()
    }

    fn extra_per_sample(&self) -> usize {
        match self.f.body {
            Body::Point => self.mu_total(),
            Body::Shape => self.mu_total() + self.obstacles.len() * self.vehicle.len(),
        }
    }

    fn counts(&self, samples: usize) -> Counts {
        let faces: Vec<usize> = self.obstacles.iter().map(|o| o.len()).collect();
        let mode = if self.f.body == Body::Point { DualMode::Point } else { DualMode::Shape };
        let c = dual_counts(samples, &faces, self.vehicle.len(), mode);
        Counts { obstacle_constraints: c.obstacle_constraints(), extra_variables: c.dual_variables }
    }

    fn evaluate_sample(&self, pose: &Pose2, extra: &[f64]) -> Vec<LocalRow> {
        let mut rows = Vec::new();
        for (i, obs) in self.obstacles.iter().enumerate() {
            let mo = self.mu_offsets[i];
            let mu = &extra[mo..mo + obs.len()];
            let indexed = |off: usize, d: &[f64]| d.iter().enumerate().map(|(j, v)| (off + j, *v)).collect::<Vec<_>>();
            match self.f.body {
                Body::Point => {
                    let r = dual_point_residuals(pose.position, obs, mu, self.clearances[i]).expect("dual sizes");
                    rows.push(LocalRow {
                        value: r.inequality,
                        grad_pose: Vector3::new(r.d_inequality_dp.x, r.d_inequality_dp.y, 0.0),
                        grad_extra: indexed(mo, &r.d_inequality_dmu),
                        nonsmooth: false,
                    });
                    rows.push(LocalRow {
                        value: r.norm,
                        grad_pose: Vector3::zeros(),
                        grad_extra: indexed(mo, &r.d_norm_dmu),
                        nonsmooth: r.singular,
                    });
                }
                Body::Shape => {
                    let lo = self.lambda_offset(i);
                    let lambda = &extra[lo..lo + self.vehicle.len()];
                    let r = dual_shape_residuals(pose, &self.vehicle, obs, mu, lambda, self.clearances[i])
                        .expect("dual sizes");
                    let mut g = indexed(mo, &r.d_inequality_dmu);
                    g.extend(indexed(lo, &r.d_inequality_dlambda));
                    rows.push(LocalRow {
                        value: r.inequality,
                        grad_pose: r.d_inequality_dpose,
                        grad_extra: g,
                        nonsmooth: false,
                    });
                    for c in 0..2 {
                        let mut g: Vec<(usize, f64)> =
                            r.d_equality_dmu.iter().enumerate().map(|(j, v)| (mo + j, v[c])).collect();
                        g.extend(r.d_equality_dlambda.iter().enumerate().map(|(j, v)| (lo + j, v[c])));
                        rows.push(LocalRow {
                            value: r.equality[c],
                            grad_pose: r.d_equality_dpose.row(c).transpose(),
                            grad_extra: g,
                            nonsmooth: false,
                        });
                    }
                    rows.push(LocalRow {
                        value: r.norm,
                        grad_pose: Vector3::zeros(),
                        grad_extra: indexed(mo, &r.d_norm_dmu),
                        nonsmooth: r.singular,
                    });
                }
            }
        }
        rows
    }

    fn initial_extra(&self, pose: &Pose2) -> Vec<f64> {
        let mut out = vec![0.0; self.extra_per_sample()];
        for (i, obs) in self.obstacles.iter().enumerate() {
            let mo = self.mu_offsets[i];
            match self.f.body {
                Body::Point => {
                    let r =
                        signed_distance(&PointShape(pose.position), obs.polygon(), &self.sd).expect("signed distance");
                    out[mo..mo + obs.len()].copy_from_slice(&init_point_duals(obs, &r));
                }
                Body::Shape => {
                    let posed = self.vehicle.posed(pose);
                    let r = signed_distance(&posed.polygon, obs.polygon(), &self.sd).expect("signed distance");
                    let (mu, lambda) = init_shape_duals(obs, &self.vehicle, pose, &r);
                    out[mo..mo + obs.len()].copy_from_slice(&mu);
                    let lo = self.lambda_offset(i);
                    out[lo..lo + self.vehicle.len()].copy_from_slice(&lambda);
                }
            }
        }
        out
    }
}

/// Build the provider for a formulation over the given obstacles and vehicle
/// footprint.
pub fn build_provider(
    f: FormulationKind,
    obstacles: &[Obstacle],
    footprint: &ConvexPolygon,
    settings: &FormulationSettings,
) -> Result<Box<dyn ConstraintProvider>> {
    f.validate()?;
    if obstacles.is_empty() {
        return Err(Error::Config("at least one obstacle is required".into()));
    }
    let clearances: Vec<f64> = obstacles.iter().map(|o| o.clearance).collect();
    let vehicle = VehiclePrimitives::new(footprint.clone());
    let prims: Vec<PrimitiveObstacle> = obstacles.iter().map(|o| PrimitiveObstacle::new(o.polygon.clone())).collect();
    Ok(match f.kind {
        Kind::Ellipsoidal => {
            let ellipses = obstacles
                .iter()
                .map(|o| {
                    o.ellipse.ok_or_else(|| Error::Config(format!("obstacle `{}` has no enclosing ellipse", o.name)))
                })
                .collect::<Result<_>>()?;
            Box::new(EllipsoidalProvider { f, ellipses, p: settings.p })
        }
        Kind::CsgClassic => {
            let regions = obstacles
                .iter()
                .map(|o| o.csg.clone().ok_or_else(|| Error::Config(format!("obstacle `{}` has no CSG region", o.name))))
                .collect::<Result<_>>()?;
            Box::new(CsgClassicProvider { f, regions, p: settings.p })
        }
        Kind::CsgBoundHard => Box::new(BoundProvider { f, obstacles: prims, clearances, vehicle, lse: None }),
        Kind::CsgBoundLse => {
            let cfg = LseConfig::new(settings.alpha)?;
            if !(settings.alpha > 0.0 && settings.alpha_union < 0.0) {
                return Err(Error::Config("csg-bound-lse needs alpha > 0 and alpha_union < 0".into()));
            }
            Box::new(BoundProvider { f, obstacles: prims, clearances, vehicle, lse: Some((cfg, settings.alpha_union)) })
        }
        Kind::Dual => {
            let mut mu_offsets = Vec::new();
            let mut acc = 0;
            for p in &prims {
                mu_offsets.push(acc);
                acc += p.len();
            }
            Box::new(DualProvider { f, obstacles: prims, clearances, vehicle, mu_offsets, sd: settings.sd })
        }
        Kind::DirectSd => Box::new(DirectSdProvider {
            f,
            obstacles: obstacles.iter().map(|o| o.polygon.clone()).collect(),
            clearances,
            vehicle,
            sd: settings.sd,
        }),
    })
}

/// Largest shortfall `d_min − sd` over samples and obstacles, clamped at 0,
/// measured against the true polygons.
pub fn audit_violation(
    poses: &[Pose2],
    obstacles: &[Obstacle],
    footprint: &ConvexPolygon,
    body: Body,
    sd: &SdConfig,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for pose in poses {
        for o in obstacles {
            let value = match body {
                Body::Point => signed_distance(&PointShape(pose.position), &o.polygon, sd)?.value,
                Body::Shape => {
                    signed_distance(&crate::geom::transform_polygon(footprint, pose).polygon, &o.polygon, sd)?.value
                }
            };
            worst = worst.max(o.clearance - value);
        }
    }
    Ok(worst)
}

/// Largest per-obstacle term count of the smoothed bound, the `m` in the
/// worst-case smoothing error `log(m)/α`.
pub fn lse_term_count(obstacles: &[Obstacle], footprint: &ConvexPolygon, body: Body) -> usize {
    let extra = if body == Body::Shape { footprint.len() } else { 0 };
    obstacles.iter().map(|o| o.polygon.len() + extra).max().unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csg::CsgNode;
    use crate::geom::Vec2;
    use crate::vessel::VesselParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three hexagons with enclosing ellipses and rounded rectangles.
    pub(crate) fn hexagon_obstacles() -> Vec<Obstacle> {
        [(4.0, 0.0, 1.0), (-1.0, -5.0, 1.4), (-4.0, 3.0, 0.8)]
            .iter()
            .enumerate()
            .map(|(i, &(cx, cy, r))| {
                let verts: Vec<(f64, f64)> = (0..6)
                    .map(|k| {
                        let t = std::f64::consts::PI / 3.0 * k as f64 + 0.2;
                        (cx + r * t.cos(), cy + 0.7 * r * t.sin())
                    })
                    .collect();
                let c = Point2::new(cx, cy);
                Obstacle {
                    name: format!("hex{i}"),
                    polygon: ConvexPolygon::from_xy(&verts).unwrap(),
                    ellipse: Some(Ellipse::from_axes(c, 1.3 * r, 1.3 * 0.7 * r, 0.0).unwrap()),
                    csg: Some(CsgRegion::new(CsgNode::rounded_rectangle(c, 1.1 * r, 1.1 * 0.7 * r, 0.0, 4)).unwrap()),
                    clearance: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(FormulationKind::new(Kind::Ellipsoidal, Mode::Separate, Body::Shape).is_err());
        assert!(FormulationKind::new(Kind::CsgClassic, Mode::Union, Body::Shape).is_err());
        assert!(FormulationKind::new(Kind::Dual, Mode::Union, Body::Point).is_err());
        let msg = FormulationKind::new(Kind::Dual, Mode::Union, Body::Shape).unwrap_err().to_string();
        assert!(msg.contains("separate"));
    }

    #[test]
    fn counts_follow_the_table() {
        let obs = hexagon_obstacles();
        let fp = VesselParams::default().footprint;
        let s = FormulationSettings::default();
        let count = |k, m, b| build_provider(FormulationKind::new(k, m, b).unwrap(), &obs, &fp, &s).unwrap().counts(61);
        assert_eq!(count(Kind::Ellipsoidal, Mode::Separate, Body::Point).obstacle_constraints, 183);
        assert_eq!(count(Kind::CsgBoundHard, Mode::Union, Body::Point).obstacle_constraints, 61);
        assert_eq!(count(Kind::DirectSd, Mode::Separate, Body::Shape).obstacle_constraints, 183);
        assert_eq!(count(Kind::CsgClassic, Mode::Separate, Body::Point).obstacle_constraints, 183);
        let dp = count(Kind::Dual, Mode::Separate, Body::Point);
        assert_eq!((dp.obstacle_constraints, dp.extra_variables), (366, 1098));
        let ds = count(Kind::Dual, Mode::Separate, Body::Shape);
        assert_eq!((ds.obstacle_constraints, ds.extra_variables), (732, 2013));
        // provider row layout agrees with the count formulas
        for f in FormulationKind::table_matrix() {
            let p = build_provider(f, &obs, &fp, &s).unwrap();
            let c = p.counts(61);
            assert_eq!(c.obstacle_constraints, 61 * p.row_kinds().len(), "{f}");
            assert_eq!(c.extra_variables, 61 * p.extra_per_sample(), "{f}");
        }
    }

    #[test]
    fn audit_examples() {
        let obs = hexagon_obstacles();
        let fp = VesselParams::default().footprint;
        let cfg = SdConfig::default();
        let far = [Pose2::new(10.0, 10.0, 0.0), Pose2::new(12.0, 9.0, 1.0)];
        assert_eq!(audit_violation(&far, &obs, &fp, Body::Shape, &cfg).unwrap(), 0.0);
        // a point 0.03 m inside the first obstacle's rightmost face region
        let poly = &obs[0].polygon;
        let hs = crate::geom::polygon_to_halfspaces(poly);
        let (a, b) = poly.edge(0);
        let mid = (a + b) / 2.0 - hs[0].normal * 0.03;
        let v = audit_violation(&[Pose2::new(mid.x, mid.y, 0.0)], &obs, &fp, Body::Point, &cfg).unwrap();
        assert!((v - 0.03).abs() < 1e-12);
    }

    /// Every provider's rows match central differences in pose and extras.
    #[test]
    fn provider_jacobians_match_finite_differences() {
        let obs = hexagon_obstacles();
        let fp = VesselParams::default().footprint;
        let s = FormulationSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let h = 1e-6;
        for f in FormulationKind::table_matrix() {
            let p = build_provider(f, &obs, &fp, &s).unwrap();
            let e = p.extra_per_sample();
            let mut checked = 0;
            while checked < 50 {
                let pose = Pose2::new(rng.gen_range(-7.0..7.0), rng.gen_range(-8.0..6.0), rng.gen_range(-3.0..3.0));
                let extra: Vec<f64> = (0..e).map(|_| rng.gen_range(0.0..1.0)).collect();
                let rows = p.evaluate_sample(&pose, &extra);
                if rows.iter().any(|r| r.nonsmooth) {
                    continue;
                }
                let q = [pose.position.x, pose.position.y, pose.heading];
                let at = |q: [f64; 3], x: &[f64]| {
                    p.evaluate_sample(&Pose2 { position: Vec2::new(q[0], q[1]), heading: q[2] }, x)
                };
                let mut fds = Vec::new();
                let mut consistent = true;
                for k in 0..3 {
                    let (mut qp, mut qm) = (q, q);
                    qp[k] += h;
                    qm[k] -= h;
                    let (a, b) = (at(qp, &extra), at(qm, &extra));
                    let (mut q2p, mut q2m) = (q, q);
                    q2p[k] += 10.0 * h;
                    q2m[k] -= 10.0 * h;
                    let (a2, b2) = (at(q2p, &extra), at(q2m, &extra));
                    for r in 0..rows.len() {
                        let fd = (a[r].value - b[r].value) / (2.0 * h);
                        let fd2 = (a2[r].value - b2[r].value) / (20.0 * h);
                        // a switch of active piece inside the stencil
                        consistent &= (fd - fd2).abs() < 1e-4 * fd.abs().max(1.0);
                        fds.push((r, k, fd));
                    }
                }
                if !consistent {
                    continue;
                }
                for (r, k, fd) in fds {
                    let an = rows[r].grad_pose[k];
                    assert!((fd - an).abs() / an.abs().max(1.0) < 1e-5, "{f} row {r} pose {k}: {fd} vs {an}");
                }
                for j in 0..e {
                    let (mut xp, mut xm) = (extra.clone(), extra.clone());
                    xp[j] += h;
                    xm[j] -= h;
                    let (a, b) = (p.evaluate_sample(&pose, &xp), p.evaluate_sample(&pose, &xm));
                    for r in 0..rows.len() {
                        let fd = (a[r].value - b[r].value) / (2.0 * h);
                        let an: f64 = rows[r].grad_extra.iter().filter(|(i, _)| *i == j).map(|(_, v)| v).sum();
                        assert!((fd - an).abs() / an.abs().max(1.0) < 1e-5, "{f} row {r} extra {j}");
                    }
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn hard_bound_satisfaction_implies_zero_audit() {
        let obs = hexagon_obstacles();
        let fp = VesselParams::default().footprint;
        let s = FormulationSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for body in [Body::Point, Body::Shape] {
            let p =
                build_provider(FormulationKind::new(Kind::CsgBoundHard, Mode::Separate, body).unwrap(), &obs, &fp, &s)
                    .unwrap();
            for _ in 0..2000 {
                let pose = Pose2::new(rng.gen_range(-7.0..7.0), rng.gen_range(-8.0..6.0), rng.gen_range(-3.0..3.0));
                if p.evaluate_sample(&pose, &[]).iter().all(|r| r.value <= 0.0) {
                    assert_eq!(audit_violation(&[pose], &obs, &fp, body, &s.sd).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn initial_duals_are_feasible_certificates() {
        let obs = hexagon_obstacles();
        let fp = VesselParams::default().footprint;
        let s = FormulationSettings::default();
        for body in [Body::Point, Body::Shape] {
            let p =
                build_provider(FormulationKind::new(Kind::Dual, Mode::Separate, body).unwrap(), &obs, &fp, &s).unwrap();
            let pose = Pose2::new(0.5, 0.3, 0.4);
            let x = p.initial_extra(&pose);
            let rows = p.evaluate_sample(&pose, &x);
            for (r, kind) in rows.iter().zip(p.row_kinds()) {
                if kind == RowKind::Equality {
                    assert!(r.value.abs() < 1e-9);
                }
            }
        }
    }
}
