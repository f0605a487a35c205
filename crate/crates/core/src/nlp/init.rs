//! Initial guess: shortest grid path around the obstacles, a Hermite time
//! law along it, and a regularized least-squares spline fit with the
//! boundary coefficients pinned.

use nalgebra::{DMatrix, DVector};
use pathfinding::prelude::astar;

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Point2};
use crate::nlp::bspline::BSplineBasis;
use crate::nlp::problem::{boundary_flat, FlatTrajectory};
use crate::scenario::Scenario;
use crate::sdist::{signed_distance, PointShape};

/// Fit points per knot interval.
const FIT_DENSITY: usize = 8;
/// Weight of the squared second differences of the coefficients.
const SMOOTHING: f64 = 1e-2;

/// Occupancy grid over the scenario's bounding box.
#[derive(Debug, Clone)]
pub struct Grid {
    pub origin: Point2,
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
    blocked: Vec<bool>,
}

impl Grid {
    /// Cells whose centre lies closer than `inflation` to an obstacle are
    /// blocked.
    pub fn build(scenario: &Scenario, inflation: f64) -> Result<Self> {
        let cell = scenario.grid.cell;
        let mut pts = vec![scenario.start.position(), scenario.goal.position()];
        for o in &scenario.obstacles {
            pts.extend_from_slice(o.polygon.vertices());
        }
        let m = scenario.grid.margin + inflation;
        let lo = pts.iter().fold(Point2::repeat(f64::INFINITY), |a, p| a.inf(p)) - Point2::repeat(m);
        let hi = pts.iter().fold(Point2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p)) + Point2::repeat(m);
        let cols = ((hi.x - lo.x) / cell).ceil() as usize + 1;
        let rows = ((hi.y - lo.y) / cell).ceil() as usize + 1;
        let mut grid = Self { origin: lo, cell, cols, rows, blocked: vec![false; cols * rows] };
        for i in 0..cols {
            for j in 0..rows {
                let c = grid.center((i, j));
                let mut clear = true;
                for o in &scenario.obstacles {
                    let d = signed_distance(&PointShape(c), &o.polygon, &scenario.settings.sd)?.value;
                    if d < inflation + o.clearance {
                        clear = false;
                        break;
                    }
                }
                grid.blocked[i * rows + j] = !clear;
            }
        }
        Ok(grid)
    }

    pub fn center(&self, (i, j): (usize, usize)) -> Point2 {
        self.origin + Point2::new(i as f64, j as f64) * self.cell
    }

    pub fn cell_of(&self, p: Point2) -> (usize, usize) {
        let q = (p - self.origin) / self.cell;
        ((q.x.round().max(0.0) as usize).min(self.cols - 1), (q.y.round().max(0.0) as usize).min(self.rows - 1))
    }

    pub fn is_blocked(&self, (i, j): (usize, usize)) -> bool {
        self.blocked[i * self.rows + j]
    }
}

/// Whether every point of segment `a`–`b`, sampled at a quarter cell, keeps
/// `inflation` plus the clearance from every obstacle.
fn segment_clear(scenario: &Scenario, a: Point2, b: Point2, inflation: f64) -> Result<bool> {
    let steps = ((b - a).norm() / (0.25 * scenario.grid.cell)).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let p = a + (b - a) * (k as f64 / steps as f64);
        for o in &scenario.obstacles {
            if signed_distance(&PointShape(p), &o.polygon, &scenario.settings.sd)?.value < inflation + o.clearance {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Greedy line-of-sight shortcutting of a polyline.
fn shortcut(scenario: &Scenario, path: &[Point2], inflation: f64) -> Result<Vec<Point2>> {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !segment_clear(scenario, path[i], path[j], inflation)? {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    Ok(out)
}

const STRAIGHT: u64 = 1000;
const DIAGONAL: u64 = 1414;

fn octile((a, b): (usize, usize), (c, d): (usize, usize)) -> u64 {
    let dx = a.abs_diff(c) as u64;
    let dy = b.abs_diff(d) as u64;
    STRAIGHT * dx.max(dy) + (DIAGONAL - STRAIGHT) * dx.min(dy)
}

/// Shortest 8-connected grid path from start to goal, with the exact end
/// points substituted for their cell centres, then shortcut where the
/// straight segment stays clear.
pub fn grid_path(scenario: &Scenario) -> Result<Vec<Point2>> {
    let grid = Grid::build(scenario, scenario.vessel.half_width())?;
    let start = grid.cell_of(scenario.start.position());
    let goal = grid.cell_of(scenario.goal.position());
    for (name, c) in [("start", start), ("goal", goal)] {
        if grid.is_blocked(c) {
            return Err(Error::InfeasibleScenario(format!("{name} lies in an inflated obstacle")));
        }
    }
    let successors = |&(i, j): &(usize, usize)| {
        let mut out = Vec::with_capacity(8);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= grid.cols as i64 || nj >= grid.rows as i64 {
                    continue;
                }
                let n = (ni as usize, nj as usize);
                if !grid.is_blocked(n) {
                    out.push((n, if di != 0 && dj != 0 { DIAGONAL } else { STRAIGHT }));
                }
            }
        }
        out
    };
    let (cells, _) = astar(&start, successors, |c| octile(*c, goal), |c| *c == goal)
        .ok_or_else(|| Error::InfeasibleScenario("no grid path from start to goal".into()))?;
    let mut path: Vec<Point2> = cells.iter().map(|c| grid.center(*c)).collect();
    path[0] = scenario.start.position();
    let last = path.len() - 1;
    path[last] = scenario.goal.position();
    if path.len() == 1 {
        path.push(scenario.goal.position());
    }
    shortcut(scenario, &path, scenario.vessel.half_width())
}

/// Point at arc length `s` along a polyline.
fn along(path: &[Point2], cumulative: &[f64], s: f64) -> Point2 {
    let k = cumulative.partition_point(|c| *c <= s).clamp(1, path.len() - 1);
    let seg = cumulative[k] - cumulative[k - 1];
    if seg <= 0.0 {
        return path[k];
    }
    let t = ((s - cumulative[k - 1]) / seg).clamp(0.0, 1.0);
    path[k - 1] + (path[k] - path[k - 1]) * t
}

/// Least-squares fit of one channel with two coefficients pinned at each end.
fn fit_channel(basis: &BSplineBasis, times: &[f64], targets: &[f64], pins: [(usize, f64); 4]) -> Vec<f64> {
    let n = basis.len();
    let free: Vec<usize> = (0..n).filter(|i| !pins.iter().any(|p| p.0 == *i)).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        index[i] = k;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut fixed = vec![0.0; n];
    for &(i, v) in &pins {
        fixed[i] = v;
    }
    // rows of the data term and of the second-difference regularizer
    let mut add_row = |row: &[(usize, f64)], target: f64, weight: f64| {
        let rhs = target - row.iter().filter(|(i, _)| index[*i] == usize::MAX).map(|(i, v)| v * fixed[*i]).sum::<f64>();
        for &(i, vi) in row {
            if index[i] == usize::MAX {
                continue;
            }
            b[index[i]] += weight * vi * rhs;
            for &(j, vj) in row {
                if index[j] != usize::MAX {
                    a[(index[i], index[j])] += weight * vi * vj;
                }
            }
        }
    };
    for (t, y) in times.iter().zip(targets) {
        let lb = basis.local(*t, 0);
        let row: Vec<(usize, f64)> = lb.values[0].iter().enumerate().map(|(i, v)| (lb.first + i, *v)).collect();
        add_row(&row, *y, 1.0);
    }
    for i in 1..n - 1 {
        add_row(&[(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)], 0.0, SMOOTHING);
    }
    let sol = a.cholesky().expect("regularized normal equations are positive definite").solve(&b);
    let mut coefs = fixed;
    for (k, &i) in free.iter().enumerate() {
        coefs[i] = sol[k];
    }
    coefs
}

/// Coefficients `(c₀, c₁, c_{n−2}, c_{n−1})` matching value and slope at
/// both ends.
fn pins(basis: &BSplineBasis, t0: f64, te: f64, start: (f64, f64), end: (f64, f64)) -> [(usize, f64); 4] {
    let n = basis.len();
    let a = basis.local(t0, 1).values[1][1];
    let lb = basis.local(te, 1);
    let b = lb.values[1][lb.values[1].len() - 1];
    [(0, start.0), (1, start.0 + start.1 / a), (n - 2, end.0 - end.1 / b), (n - 1, end.0)]
}

/// Smoothed shortest-path trajectory meeting the boundary states.
pub fn initial_guess(scenario: &Scenario) -> Result<FlatTrajectory> {
    let path = grid_path(scenario)?;
    let mut cumulative = vec![0.0];
    for w in path.windows(2) {
        cumulative.push(cumulative.last().unwrap() + (w[1] - w[0]).norm());
    }
    let length = *cumulative.last().unwrap();
    let te = scenario.t_e;
    let (z0, dz0) = boundary_flat(&scenario.start);
    let (ze, dze) = boundary_flat(&scenario.goal);
    let (v0, ve) = (dz0.xy().norm(), dze.xy().norm());
    let basis = BSplineBasis::clamped_uniform(scenario.spline.degree, scenario.spline.coefficients, 0.0, te)?;

    // cubic Hermite arc-length law; end speeds are capped to keep it monotone
    let cap = 3.0 * length / te;
    let (v0, ve) = (v0.min(cap), ve.min(cap));
    let arc = |t: f64| {
        let u = t / te;
        let (h10, h01, h11) = (u * (1.0 - u).powi(2), u * u * (3.0 - 2.0 * u), u * u * (u - 1.0));
        (h10 * te * v0 + h01 * length + h11 * te * ve).clamp(0.0, length)
    };
    let intervals = scenario.spline.coefficients - scenario.spline.degree;
    let count = FIT_DENSITY * intervals + 1;
    let times: Vec<f64> = (0..count).map(|k| te * k as f64 / (count - 1) as f64).collect();
    let points: Vec<Point2> = times.iter().map(|t| along(&path, &cumulative, arc(*t))).collect();

    let north = fit_channel(
        &basis,
        &times,
        &points.iter().map(|p| p.x).collect::<Vec<_>>(),
        pins(&basis, 0.0, te, (z0.x, dz0.x), (ze.x, dze.x)),
    );
    let east = fit_channel(
        &basis,
        &times,
        &points.iter().map(|p| p.y).collect::<Vec<_>>(),
        pins(&basis, 0.0, te, (z0.y, dz0.y), (ze.y, dze.y)),
    );

    // heading from the fitted velocity, unwrapped from the start heading
    let mut headings = Vec::with_capacity(count);
    let mut prev = z0.z;
    for t in &times {
        let d = [basis.evaluate(&north, *t, 1)[1], basis.evaluate(&east, *t, 1)[1]];
        let speed = d[0].hypot(d[1]);
        let angle = if speed > 1e-3 { prev + wrap_angle(d[1].atan2(d[0]) - prev) } else { prev };
        headings.push(angle);
        prev = angle;
    }
    let heading = fit_channel(&basis, &times, &headings, pins(&basis, 0.0, te, (z0.z, dz0.z), (ze.z, dze.z)));
    Ok(FlatTrajectory { basis, coefficients: [north, east, heading] })
}
