//! Classic CSG regions built from non-negative defining functions and the
//! smooth p-norm intersection and union operators. A point `x` lies inside a
//! region iff its value is below 1; the collision constraint is `1 − f(x) ≤ 0`.

use crate::error::{Error, Result};
use crate::geom::{ellipse_defining, ellipse_defining_gradient, rotation, Ellipse, Point2, Vec2};

pub const DEFAULT_P: u32 = 4;

/// Node of a CSG tree.
#[derive(Debug, Clone, PartialEq)]
pub enum CsgNode {
    Ellipse(Ellipse),
    /// Band `|normal·(x − center)| ≤ half_width`, with defining function
    /// `(normal·(x − center) / half_width)²`. In the plane this is also the
    /// elliptic cylinder with one infinite axis.
    Slab {
        normal: Vec2,
        center: Point2,
        half_width: f64,
    },
    Intersection {
        p: u32,
        children: Vec<CsgNode>,
    },
    Union {
        p: u32,
        children: Vec<CsgNode>,
    },
}

fn check_operands(values: &[f64], p: u32) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no operands".into()));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("exponent p must be at least 1".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::ContractViolation(format!("negative defining-function value {v}")));
    }
    Ok(())
}

/// Smooth intersection `(Σ f_i^p)^(1/p)` and its partial derivatives.
pub fn approx_intersection_with_gradient(values: &[f64], p: u32) -> Result<(f64, Vec<f64>)> {
    check_operands(values, p)?;
    if values.len() == 1 {
        return Ok((values[0], vec![1.0]));
    }
    let pf = p as f64;
    let m = values.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        let g = if p == 1 { 1.0 } else { 0.0 };
        return Ok((0.0, vec![g; values.len()]));
    }
    let s: f64 = values.iter().map(|f| (f / m).powf(pf)).sum();
    let value = m * s.powf(1.0 / pf);
    let grad = values.iter().map(|f| (f / value).powf(pf - 1.0)).collect();
    Ok((value, grad))
}

pub fn approx_intersection(values: &[f64], p: u32) -> Result<f64> {
    Ok(approx_intersection_with_gradient(values, p)?.0)
}

/// Smooth union `(Σ f_i^−p)^(−1/p)` and its partial derivatives. A zero
/// operand gives the limit value 0 with a zero gradient.
pub fn approx_union_with_gradient(values: &[f64], p: u32) -> Result<(f64, Vec<f64>)> {
    check_operands(values, p)?;
    if values.len() == 1 {
        return Ok((values[0], vec![1.0]));
    }
    if values.contains(&0.0) {
        return Ok((0.0, vec![0.0; values.len()]));
    }
    let pf = p as f64;
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|f| (m / f).powf(pf)).sum();
    let value = m * s.powf(-1.0 / pf);
    let grad = values.iter().map(|f| (value / f).powf(pf + 1.0)).collect();
    Ok((value, grad))
}

pub fn approx_union(values: &[f64], p: u32) -> Result<f64> {
    Ok(approx_union_with_gradient(values, p)?.0)
}

impl CsgNode {
    /// Rounded rectangle: smooth intersection of two orthogonal slabs. Its
    /// boundary is the superellipse `|x/a|^2p + |y/b|^2p = 1` in the box frame.
    pub fn rounded_rectangle(center: Point2, half_length: f64, half_width: f64, heading: f64, p: u32) -> Self {
        let r = rotation(heading);
        CsgNode::Intersection {
            p,
            children: vec![
                CsgNode::Slab { normal: r * Vec2::new(1.0, 0.0), center, half_width: half_length },
                CsgNode::Slab { normal: r * Vec2::new(0.0, 1.0), center, half_width },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CsgNode::Ellipse(_) => Ok(()),
            CsgNode::Slab { normal, half_width, .. } => {
                if (normal.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidGeometry("slab normal must be a unit vector".into()));
                }
                if !(*half_width > 0.0) {
                    return Err(Error::InvalidGeometry("slab half width must be positive".into()));
                }
                Ok(())
            }
            CsgNode::Intersection { p, children } | CsgNode::Union { p, children } => {
                if *p == 0 {
                    return Err(Error::InvalidGeometry("CSG exponent must be at least 1".into()));
                }
                if children.is_empty() {
                    return Err(Error::InvalidGeometry("CSG operator without operands".into()));
                }
                children.iter().try_for_each(CsgNode::validate)
            }
        }
    }

    /// Defining-function value and its gradient with respect to the point.
    pub fn evaluate(&self, x: Point2) -> (f64, Vec2) {
        match self {
            CsgNode::Ellipse(e) => (ellipse_defining(x, e), ellipse_defining_gradient(x, e)),
            CsgNode::Slab { normal, center, half_width } => {
                let s = normal.dot(&(x - center)) / half_width;
                (s * s, normal * (2.0 * s / half_width))
            }
            CsgNode::Intersection { p, children } | CsgNode::Union { p, children } => {
                let evals: Vec<(f64, Vec2)> = children.iter().map(|c| c.evaluate(x)).collect();
                let values: Vec<f64> = evals.iter().map(|e| e.0).collect();
                // leaf values are non-negative by construction
                let (v, w) = match self {
                    CsgNode::Intersection { .. } => approx_intersection_with_gradient(&values, *p),
                    _ => approx_union_with_gradient(&values, *p),
                }
                .expect("validated tree");
                let g = evals.iter().zip(&w).fold(Vec2::zeros(), |acc, (e, wi)| acc + e.1 * *wi);
                (v, g)
            }
        }
    }

    pub fn contains(&self, x: Point2) -> bool {
        self.evaluate(x).0 <= 1.0
    }
}

/// One validated CSG tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CsgRegion {
    root: CsgNode,
}

impl CsgRegion {
    pub fn new(root: CsgNode) -> Result<Self> {
        root.validate()?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &CsgNode {
        &self.root
    }
}

/// Value and point gradient of a region's defining function.
pub fn evaluate_region(region: &CsgRegion, point: Point2) -> (f64, Vec2) {
    region.root.evaluate(point)
}

/// Single region representing the smooth union of all obstacles.
pub fn union_over_obstacles(regions: &[CsgRegion], p: u32) -> Result<CsgRegion> {
    match regions {
        [] => Err(Error::InvalidArgument("union over an empty obstacle list".into())),
        [single] => Ok(single.clone()),
        _ => CsgRegion::new(CsgNode::Union { p, children: regions.iter().map(|r| r.root.clone()).collect() }),
    }
}
