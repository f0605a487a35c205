//! Scenario files: JSON, schema version 1.
//!
//! Angles are given in degrees in the file and held in radians in memory.
//! Points are `[north, east]` in metres.

use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::csg::{CsgNode, CsgRegion, DEFAULT_P};
use crate::error::{Error, Result};
use crate::formulations::{FormulationSettings, Obstacle};
use crate::geom::{ConvexPolygon, Ellipse, Point2, Vec2};
use crate::nlp::solver::SolverOptions;
use crate::sdist::SdConfig;
use crate::vessel::{VesselParams, VesselState};

pub const SCHEMA_VERSION: u32 = 1;

/// The bundled harbour scenario.
pub const KIEL_HARBOR_JSON: &str = include_str!("../scenarios/kiel-harbor.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Horizon, s.
    pub t_e: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub start: StateSpec,
    pub goal: StateSpec,
    #[serde(default)]
    pub vessel: VesselSpec,
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub formulation: FormulationSpec,
    #[serde(default)]
    pub spline: SplineSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    61
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub north: f64,
    pub east: f64,
    pub heading_deg: f64,
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub v: f64,
    /// Yaw rate, deg/s.
    #[serde(default)]
    pub r_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselSpec {
    pub inertia: [[f64; 3]; 3],
    pub linear_damping: [[f64; 3]; 3],
    pub nonlinear_damping: [f64; 3],
    pub tau_u_max: f64,
    pub tau_r_max: f64,
    pub tau_u_rate_max: f64,
    pub tau_r_rate_max: f64,
    pub length: f64,
    pub width: f64,
    /// Body frame `[forward, starboard]`.
    pub footprint: Vec<[f64; 2]>,
}

fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

impl Default for VesselSpec {
    fn default() -> Self {
        let p = VesselParams::default();
        Self {
            inertia: matrix_rows(&p.inertia),
            linear_damping: matrix_rows(&p.linear_damping),
            nonlinear_damping: p.nonlinear_damping.into(),
            tau_u_max: p.tau_u_max,
            tau_r_max: p.tau_r_max,
            tau_u_rate_max: p.tau_u_rate_max,
            tau_r_rate_max: p.tau_r_rate_max,
            length: p.length,
            width: p.width,
            footprint: p.footprint.vertices().iter().map(|v| [v.x, v.y]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipse: Option<EllipseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csg: Option<CsgSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CsgSpec {
    Ellipse(EllipseSpec),
    Slab {
        normal: [f64; 2],
        center: [f64; 2],
        half_width: f64,
    },
    RoundedRectangle {
        center: [f64; 2],
        half_length: f64,
        half_width: f64,
        #[serde(default)]
        heading_deg: f64,
        #[serde(default = "default_p")]
        p: u32,
    },
    Intersection {
        #[serde(default = "default_p")]
        p: u32,
        children: Vec<CsgSpec>,
    },
    Union {
        #[serde(default = "default_p")]
        p: u32,
        children: Vec<CsgSpec>,
    },
}

fn default_p() -> u32 {
    DEFAULT_P
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormulationSpec {
    pub alpha: f64,
    pub alpha_union: f64,
    pub p: u32,
    /// Required signed distance to every obstacle, m.
    pub d_min: f64,
}

impl Default for FormulationSpec {
    fn default() -> Self {
        let s = FormulationSettings::default();
        Self { alpha: s.alpha, alpha_union: s.alpha_union, p: s.p, d_min: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSpec {
    pub degree: usize,
    /// Per flat channel.
    pub coefficients: usize,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self { degree: 3, coefficients: 63 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Cell edge, m.
    pub cell: f64,
    /// Free border around start, goal and obstacles, m.
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cell: 0.25, margin: 2.0 }
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub vessel: VesselParams,
    pub obstacles: Vec<Obstacle>,
    pub start: VesselState,
    pub goal: VesselState,
    pub t_e: f64,
    pub samples: usize,
    pub settings: FormulationSettings,
    pub spline: SplineSpec,
    pub grid: GridSpec,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Non-fatal fixes applied while loading.
    pub warnings: Vec<String>,
    /// The file with every default filled in.
    pub resolved: ScenarioFile,
}

fn to_state(s: &StateSpec) -> VesselState {
    VesselState {
        eta: Vector3::new(s.north, s.east, s.heading_deg.to_radians()),
        nu: Vector3::new(s.u, s.v, s.r_deg.to_radians()),
    }
}

fn point(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn ellipse(e: &EllipseSpec) -> Result<Ellipse> {
    Ellipse::from_axes(point(e.center), e.semi_axes[0], e.semi_axes[1], e.heading_deg.to_radians())
}

fn csg_node(spec: &CsgSpec) -> Result<CsgNode> {
    Ok(match spec {
        CsgSpec::Ellipse(e) => CsgNode::Ellipse(ellipse(e)?),
        CsgSpec::Slab { normal, center, half_width } => {
            let n = Vec2::new(normal[0], normal[1]);
            if !(n.norm() > 0.0) {
                return Err(Error::InvalidGeometry("slab normal must be nonzero".into()));
            }
            CsgNode::Slab { normal: n.normalize(), center: point(*center), half_width: *half_width }
        }
        CsgSpec::RoundedRectangle { center, half_length, half_width, heading_deg, p } => {
            if !(*half_length > 0.0 && *half_width > 0.0) {
                return Err(Error::InvalidGeometry("rounded rectangle extents must be positive".into()));
            }
            CsgNode::rounded_rectangle(point(*center), *half_length, *half_width, heading_deg.to_radians(), *p)
        }
        CsgSpec::Intersection { p, children } => {
            CsgNode::Intersection { p: *p, children: children.iter().map(csg_node).collect::<Result<_>>()? }
        }
        CsgSpec::Union { p, children } => {
            CsgNode::Union { p: *p, children: children.iter().map(csg_node).collect::<Result<_>>()? }
        }
    })
}

/// 1-based line of the first occurrence of `"key"` after the line holding
/// `anchor` (if given), or 1.
fn locate(text: &str, key: &str, anchor: Option<&str>) -> usize {
    let quoted = format!("\"{key}\"");
    let from = anchor.and_then(|a| text.lines().position(|l| l.contains(a))).unwrap_or(0);
    text.lines().enumerate().skip(from).find(|(_, l)| l.contains(&quoted)).map(|(i, _)| i + 1).unwrap_or(from + 1)
}

fn field_from_serde_message(msg: &str) -> String {
    // serde names the offending field between backticks
    msg.split('`').nth(1).unwrap_or("<document>").to_string()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn kiel_harbor() -> Self {
        Self::from_json(KIEL_HARBOR_JSON).expect("bundled scenario is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            Error::Schema { field: field_from_serde_message(&msg), line: e.line(), message: msg }
        })?;
        Self::from_file(file, text)
    }

    /// Validate a parsed file. `text` is only used to report line numbers.
    pub fn from_file(file: ScenarioFile, text: &str) -> Result<Self> {
        let schema = |field: &str, anchor: Option<&str>, message: String| Error::Schema {
            field: field.to_string(),
            line: locate(text, field.rsplit('.').next().unwrap_or(field), anchor),
            message,
        };
        if file.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                None,
                format!("unsupported version {} (expected {SCHEMA_VERSION})", file.schema_version),
            ));
        }
        if !(file.t_e > 0.0 && file.t_e.is_finite()) {
            return Err(schema("t_e", None, "horizon must be positive".into()));
        }
        if file.samples < 2 {
            return Err(schema("samples", None, "at least 2 samples are required".into()));
        }
        if file.spline.degree < 3 {
            return Err(schema("spline.degree", None, "degree must be at least 3 (two continuous derivatives)".into()));
        }
        if file.grid.cell <= 0.0 || file.grid.margin < 0.0 {
            return Err(schema("grid", None, "cell must be positive and margin non-negative".into()));
        }
        let f = &file.formulation;
        if !(f.alpha > 0.0) || !(f.alpha_union < 0.0) || f.p == 0 || !(f.d_min >= 0.0) {
            return Err(schema("formulation", None, "need alpha > 0, alpha_union < 0, p ≥ 1 and d_min ≥ 0".into()));
        }
        file.solver.validate().map_err(|e| schema("solver", None, e.to_string()))?;

        let mut warnings = Vec::new();
        let v = &file.vessel;
        let (footprint, reversed) = ConvexPolygon::new_any_orientation(v.footprint.iter().map(|p| point(*p)).collect())
            .map_err(|e| schema("vessel.footprint", None, e.to_string()))?;
        if reversed {
            warnings.push("vessel footprint was clockwise; reversed".to_string());
        }
        let vessel = VesselParams {
            inertia: Matrix3::from_fn(|i, j| v.inertia[i][j]),
            linear_damping: Matrix3::from_fn(|i, j| v.linear_damping[i][j]),
            nonlinear_damping: Vector3::from(v.nonlinear_damping),
            tau_u_max: v.tau_u_max,
            tau_r_max: v.tau_r_max,
            tau_u_rate_max: v.tau_u_rate_max,
            tau_r_rate_max: v.tau_r_rate_max,
            length: v.length,
            width: v.width,
            footprint,
        };
        vessel.validate().map_err(|e| schema("vessel", None, e.to_string()))?;

        let mut obstacles = Vec::new();
        for o in &file.obstacles {
            let anchor = format!("\"{}\"", o.name);
            let at = |field: &str, e: Error| schema(field, Some(&anchor), format!("obstacle `{}`: {e}", o.name));
            let (polygon, reversed) = ConvexPolygon::new_any_orientation(o.polygon.iter().map(|p| point(*p)).collect())
                .map_err(|e| at("polygon", e))?;
            if reversed {
                warnings.push(format!("obstacle `{}` polygon was clockwise; reversed", o.name));
            }
            let ellipse = o.ellipse.as_ref().map(ellipse).transpose().map_err(|e| at("ellipse", e))?;
            let csg =
                o.csg.as_ref().map(|c| csg_node(c).and_then(CsgRegion::new)).transpose().map_err(|e| at("csg", e))?;
            obstacles.push(Obstacle { name: o.name.clone(), polygon, ellipse, csg, clearance: f.d_min });
        }
        for w in &warnings {
            warn!("{w}");
        }

        Ok(Self {
            name: file.name.clone(),
            vessel,
            obstacles,
            start: to_state(&file.start),
            goal: to_state(&file.goal),
            t_e: file.t_e,
            samples: file.samples,
            settings: FormulationSettings {
                alpha: f.alpha,
                alpha_union: f.alpha_union,
                p: f.p,
                sd: SdConfig::default(),
            },
            spline: file.spline,
            grid: file.grid,
            solver: file.solver,
            seed: file.seed,
            warnings,
            resolved: file,
        })
    }

    /// The resolved configuration as pretty JSON.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(&self.resolved).expect("serializable scenario")
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }
}
