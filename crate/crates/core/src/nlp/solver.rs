//! Augmented-Lagrangian solver for
//! `min ‖r(x)‖²  s.t.  c_E(x) = 0, c_I(x) ≤ 0, x ≥ l`.
//!
//! Outer loop: Powell–Hestenes–Rockafellar multiplier updates. Inner loop:
//! projected Newton steps on the augmented Lagrangian with Levenberg–Marquardt
//! damping, solved by a sparse envelope Cholesky factorization under a
//! reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::RowKind;

/// Sparse matrix given row by row as `(column, value)` lists.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

/// Residual or constraint values with their Jacobian.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub jacobian: SparseRows,
}

pub trait NlpFunctions: Sync {
    fn dim(&self) -> usize;

    /// `-inf` marks a free variable.
    fn lower_bounds(&self) -> Vec<f64>;

    fn residuals(&self, x: &[f64]) -> Evaluation;

    fn constraint_kinds(&self) -> Vec<RowKind>;

    fn constraints(&self, x: &[f64]) -> Evaluation;

    /// Lower-triangle entries `(i, j, v)` with `i ≥ j` of
    /// `Σ wᵣ ∇²rᵢ + Σ w꜀ ∇²cⱼ`; duplicates are summed.
    fn curvature(
        &self,
        _x: &[f64],
        _residual_weights: &[f64],
        _constraint_weights: &[f64],
    ) -> Vec<(usize, usize, f64)> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    /// Constraint violation, in scaled constraint units.
    pub feasibility_tolerance: f64,
    /// Projected-gradient norm relative to `1 + ‖∇(‖r‖²)‖∞`.
    pub kkt_tolerance: f64,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    /// Use second-order terms of residuals and constraints.
    pub second_order: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 50,
            max_inner_iterations: 200,
            feasibility_tolerance: 1e-8,
            kkt_tolerance: 1e-6,
            initial_penalty: 10.0,
            max_penalty: 1e12,
            second_order: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feasibility_tolerance", self.feasibility_tolerance),
            ("kkt_tolerance", self.kkt_tolerance),
            ("initial_penalty", self.initial_penalty),
            ("max_penalty", self.max_penalty),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver option {name} must be positive and finite")));
            }
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::Config("solver iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// Feasible, with stationarity no longer improving.
    ConvergedStalled,
    MaxIterations,
}

impl SolveStatus {
    pub fn is_converged(&self) -> bool {
        !matches!(self, SolveStatus::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Evaluations of the full constraint vector.
    pub constraint_calls: usize,
    /// Largest violation `max(|c_E|, c_I⁺)`.
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub multipliers: Vec<f64>,
    /// Time outside residual, constraint and curvature callbacks.
    pub solver_time: Duration,
    pub total_time: Duration,
}

struct Timed<'a, P: NlpFunctions + ?Sized> {
    problem: &'a P,
    in_callbacks: Duration,
    constraint_calls: usize,
}

impl<P: NlpFunctions + ?Sized> Timed<'_, P> {
    fn eval(&mut self, x: &[f64]) -> (Evaluation, Evaluation) {
        let t = Instant::now();
        let r = self.problem.residuals(x);
        let c = self.problem.constraints(x);
        self.constraint_calls += 1;
        self.in_callbacks += t.elapsed();
        (r, c)
    }

    fn curvature(&mut self, x: &[f64], wr: &[f64], wc: &[f64]) -> Vec<(usize, usize, f64)> {
        let t = Instant::now();
        let h = self.problem.curvature(x, wr, wc);
        self.in_callbacks += t.elapsed();
        h
    }
}

/// Shifted multipliers `ŷ` of the augmented Lagrangian.
fn shifted(kinds: &[RowKind], c: &[f64], y: &[f64], rho: f64) -> Vec<f64> {
    kinds
        .iter()
        .zip(c.iter().zip(y))
        .map(|(k, (ci, yi))| match k {
            RowKind::Equality => yi + rho * ci,
            RowKind::Inequality => (yi + rho * ci).max(0.0),
        })
        .collect()
}

fn merit(kinds: &[RowKind], r: &[f64], c: &[f64], y: &[f64], rho: f64) -> f64 {
    let mut v: f64 = r.iter().map(|x| x * x).sum();
    for (k, (ci, yi)) in kinds.iter().zip(c.iter().zip(y)) {
        v += match k {
            RowKind::Equality => yi * ci + 0.5 * rho * ci * ci,
            RowKind::Inequality => ((yi + rho * ci).max(0.0).powi(2) - yi * yi) / (2.0 * rho),
        };
    }
    v
}

/// `merit(new) − merit(old)` summed as per-term differences so that it stays
/// accurate when both values agree to many digits.
fn merit_change(kinds: &[RowKind], old: (&[f64], &[f64]), new: (&[f64], &[f64]), y: &[f64], rho: f64) -> f64 {
    let cost: f64 = old.0.iter().zip(new.0).map(|(a, b)| (b - a) * (b + a)).sum();
    let penalty: f64 = kinds
        .iter()
        .zip(old.1.iter().zip(new.1))
        .zip(y)
        .map(|((k, (a, b)), yi)| match k {
            RowKind::Equality => (b - a) * (yi + 0.5 * rho * (b + a)),
            RowKind::Inequality => {
                let (pa, pb) = ((yi + rho * a).max(0.0), (yi + rho * b).max(0.0));
                (pb - pa) * (pb + pa) / (2.0 * rho)
            }
        })
        .sum();
    cost + penalty
}

fn violation(kinds: &[RowKind], c: &[f64]) -> f64 {
    kinds
        .iter()
        .zip(c)
        .map(|(k, ci)| match k {
            RowKind::Equality => ci.abs(),
            RowKind::Inequality => ci.max(0.0),
        })
        .fold(0.0, f64::max)
}

/// Feasibility and complementarity measure driving the penalty update.
fn phr_measure(kinds: &[RowKind], c: &[f64], y: &[f64], rho: f64) -> f64 {
    kinds
        .iter()
        .zip(c.iter().zip(y))
        .map(|(k, (ci, yi))| match k {
            RowKind::Equality => ci.abs(),
            RowKind::Inequality => (-ci).min(yi / rho).abs(),
        })
        .fold(0.0, f64::max)
}

fn gradient(n: usize, r: &Evaluation, c: &Evaluation, yhat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut g_cost = vec![0.0; n];
    for (ri, row) in r.values.iter().zip(&r.jacobian) {
        for &(j, v) in row {
            g_cost[j] += 2.0 * ri * v;
        }
    }
    let mut g = g_cost.clone();
    for (yi, row) in yhat.iter().zip(&c.jacobian) {
        if *yi != 0.0 {
            for &(j, v) in row {
                g[j] += yi * v;
            }
        }
    }
    (g, g_cost)
}

fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64]) -> f64 {
    x.iter().zip(g).zip(lower).map(|((xi, gi), li)| (xi - (xi - gi).max(*li)).abs()).fold(0.0, f64::max)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize ‖r‖² subject to the problem's constraints from `x0`.
pub fn solve<P: NlpFunctions + ?Sized>(problem: &P, x0: &[f64], options: &SolverOptions) -> Result<SolveResult> {
    options.validate()?;
    let start = Instant::now();
    let n = problem.dim();
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!("initial point has {} entries, expected {n}", x0.len())));
    }
    let lower = problem.lower_bounds();
    let kinds = problem.constraint_kinds();
    let mut timed = Timed { problem, in_callbacks: Duration::ZERO, constraint_calls: 0 };

    let mut x: Vec<f64> = x0.iter().zip(&lower).map(|(xi, li)| xi.max(*li)).collect();
    let (mut r, mut c) = timed.eval(&x);
    if c.values.len() != kinds.len() {
        return Err(Error::ContractViolation("constraint count differs from row kinds".into()));
    }
    let m = kinds.len();
    let ones_r = vec![1.0; r.values.len()];
    let ones_c = vec![1.0; m];
    let pattern = timed.curvature(&x, &ones_r, &ones_c);
    let order = Ordering::new(n, r.jacobian.iter().chain(&c.jacobian), &pattern);

    let mut y = vec![0.0; m];
    let mut rho = options.initial_penalty;
    let mut omega: f64 = 1e-2;
    let mut prev_measure = f64::INFINITY;
    let mut inner_total = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut outer = 0;
    let mut kkt = f64::INFINITY;
    let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
    let mut delta = 1e-6;

    while outer < options.max_outer_iterations {
        outer += 1;
        let inner = inner_solve(
            &mut timed, &order, &kinds, &lower, &mut x, &mut r, &mut c, &y, rho, omega, &mut delta, options,
        );
        inner_total += inner.iterations;

        let yhat = shifted(&kinds, &c.values, &y, rho);
        let measure = phr_measure(&kinds, &c.values, &y, rho);
        y = yhat;
        let (g, g_cost) = gradient(n, &r, &c, &y);
        kkt = projected_gradient(&x, &g, &lower) / (1.0 + inf_norm(&g_cost));
        let feas = violation(&kinds, &c.values);
        let cost: f64 = r.values.iter().map(|v| v * v).sum();
        debug!(
            "outer {outer}: cost {cost:.6} feas {feas:.2e} kkt {kkt:.2e} rho {rho:.1e} inner {} stalled {}",
            inner.iterations, inner.stalled
        );

        let better = match &best {
            None => true,
            Some((bf, bc, _, _)) => {
                (feas.max(options.feasibility_tolerance), cost) < (bf.max(options.feasibility_tolerance), *bc)
            }
        };
        if better {
            best = Some((feas, cost, x.clone(), y.clone()));
        }

        let complementarity_ok = measure <= options.kkt_tolerance.max(options.feasibility_tolerance);
        if feas <= options.feasibility_tolerance && complementarity_ok {
            if kkt <= options.kkt_tolerance {
                status = SolveStatus::Converged;
                break;
            }
            if inner.stalled {
                status = SolveStatus::ConvergedStalled;
                break;
            }
        }
        if measure > 0.25 * prev_measure {
            rho = (rho * 10.0).min(options.max_penalty);
        }
        prev_measure = measure;
        omega = (omega * 0.1).max(0.1 * options.kkt_tolerance);
    }

    if status == SolveStatus::MaxIterations {
        if let Some((_, _, bx, by)) = best {
            x = bx;
            y = by;
            let e = timed.eval(&x);
            r = e.0;
            c = e.1;
        }
    }
    let total_time = start.elapsed();
    Ok(SolveResult {
        cost: r.values.iter().map(|v| v * v).sum(),
        max_violation: violation(&kinds, &c.values),
        x,
        status,
        outer_iterations: outer,
        inner_iterations: inner_total,
        constraint_calls: timed.constraint_calls,
        kkt_residual: kkt,
        multipliers: y,
        solver_time: total_time.saturating_sub(timed.in_callbacks),
        total_time,
    })
}

struct InnerOutcome {
    iterations: usize,
    stalled: bool,
}

#[allow(clippy::too_many_arguments)]
fn inner_solve<P: NlpFunctions + ?Sized>(
    timed: &mut Timed<'_, P>,
    order: &Ordering,
    kinds: &[RowKind],
    lower: &[f64],
    x: &mut Vec<f64>,
    r: &mut Evaluation,
    c: &mut Evaluation,
    y: &[f64],
    rho: f64,
    omega: f64,
    delta: &mut f64,
    options: &SolverOptions,
) -> InnerOutcome {
    let n = x.len();
    let mut nu = 2.0;
    let mut value = merit(kinds, &r.values, &c.values, y, rho);
    let mut fresh = true;
    let mut gauss_newton = Vec::new();
    let mut curvature = Vec::new();
    let mut g = Vec::new();
    let mut free = vec![true; n];
    let mut active = Vec::new();
    for it in 0..options.max_inner_iterations {
        if fresh {
            let yhat = shifted(kinds, &c.values, y, rho);
            let (grad, g_cost) = gradient(n, r, c, &yhat);
            g = grad;
            let pg = projected_gradient(x, &g, lower) / (1.0 + inf_norm(&g_cost));
            if pg <= omega {
                return InnerOutcome { iterations: it, stalled: false };
            }
            gauss_newton = gauss_newton_part(r, c, kinds, rho);
            curvature = if options.second_order {
                let wr: Vec<f64> = r.values.iter().map(|v| 2.0 * v).collect();
                timed.curvature(x, &wr, &yhat)
            } else {
                Vec::new()
            };
            active = kinds.iter().zip(&yhat).map(|(k, yh)| *k == RowKind::Inequality && *yh > 0.0).collect();
            let eps = x
                .iter()
                .zip(&g)
                .zip(lower)
                .map(|((xi, gi), li)| (xi - (xi - gi).max(*li)).abs())
                .fold(0.0, f64::max)
                .min(1e-3);
            for i in 0..n {
                free[i] = !(x[i] - lower[i] <= eps && g[i] > 0.0);
            }
            fresh = false;
        }

        let Some(step) =
            active_set_step(order, &gauss_newton, &curvature, &g, c, kinds, y, rho, &active, x, lower, &free, *delta)
        else {
            // An indefinite second-order model falls back to Gauss-Newton at
            // this point before the damping grows.
            if !curvature.is_empty() {
                curvature.clear();
                continue;
            }
            *delta = (*delta * 10.0).max(1e-8);
            if *delta > 1e20 {
                return InnerOutcome { iterations: it, stalled: true };
            }
            continue;
        };
        let projected: Vec<f64> = x.iter().zip(&step).zip(lower).map(|((xi, si), li)| (xi + si).max(*li)).collect();
        if projected.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs())) {
            return InnerOutcome { iterations: it, stalled: true };
        }
        let clipped = projected.iter().zip(x.iter()).zip(&step).any(|((p, xi), si)| p - xi != *si);
        let model = Model { r, c, curvature: &curvature, kinds, y, rho };
        let noise = 1e-13 * value.abs().max(1.0);
        let mut attempt = try_point(timed, &model, x, noise, projected);
        // A clipped step leaves the model's descent direction; the step
        // truncated at the first bound it crosses stays on it.
        if attempt.gain <= 1e-4 && clipped {
            let alpha = x
                .iter()
                .zip(&step)
                .zip(lower)
                .filter(|((_, si), _)| **si < 0.0)
                .map(|((xi, si), li)| (li - xi) / si)
                .fold(1.0f64, f64::min);
            if alpha > 1e-3 {
                let truncated =
                    x.iter().zip(&step).zip(lower).map(|((xi, si), li)| (xi + alpha * si).max(*li)).collect();
                attempt = try_point(timed, &model, x, noise, truncated);
            }
        }
        let Attempt { trial, r: rt, c: ct, change, gain } = attempt;
        log::trace!("it {it} delta {delta:.1e} change {change:.3e} gain {gain:.3}");
        if gain > 1e-4 {
            *x = trial;
            *r = rt;
            *c = ct;
            value += change;
            *delta *= (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0);
            *delta = delta.max(1e-12);
            nu = 2.0;
            fresh = true;
            if -change <= 1e-20 * value.abs().max(1.0) {
                return InnerOutcome { iterations: it + 1, stalled: true };
            }
        } else {
            *delta = (*delta * nu).max(1e-10);
            nu *= 2.0;
            if *delta > 1e16 {
                *delta = 1e-6;
                return InnerOutcome { iterations: it + 1, stalled: true };
            }
        }
    }
    InnerOutcome { iterations: options.max_inner_iterations, stalled: false }
}

/// The merit with residuals and constraints linearized at the current point,
/// plus the second-order correction. The penalty keeps its piecewise form.
struct Model<'a> {
    r: &'a Evaluation,
    c: &'a Evaluation,
    curvature: &'a [(usize, usize, f64)],
    kinds: &'a [RowKind],
    y: &'a [f64],
    rho: f64,
}

impl Model<'_> {
    fn decrease(&self, s: &[f64]) -> f64 {
        let linear = |e: &Evaluation| -> Vec<f64> {
            e.values.iter().zip(&e.jacobian).map(|(v, row)| v + apply(row, s)).collect()
        };
        let (rl, cl) = (linear(self.r), linear(self.c));
        -(merit_change(self.kinds, (&self.r.values, &self.c.values), (&rl, &cl), self.y, self.rho)
            + 0.5 * quad_form(self.curvature, s))
    }
}

fn apply(row: &[(usize, f64)], s: &[f64]) -> f64 {
    row.iter().map(|(j, v)| v * s[*j]).sum()
}

struct Attempt {
    trial: Vec<f64>,
    r: Evaluation,
    c: Evaluation,
    change: f64,
    gain: f64,
}

fn try_point<P: NlpFunctions + ?Sized>(
    timed: &mut Timed<'_, P>,
    model: &Model<'_>,
    x: &[f64],
    noise: f64,
    trial: Vec<f64>,
) -> Attempt {
    let s: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
    let predicted = model.decrease(&s);
    let (rt, ct) = timed.eval(&trial);
    let change =
        merit_change(model.kinds, (&model.r.values, &model.c.values), (&rt.values, &ct.values), model.y, model.rho);
    // Below the evaluation noise floor the ratio carries no information;
    // the model step is trusted and the projected gradient ends the loop.
    let gain = if !change.is_finite() || predicted <= 0.0 {
        -1.0
    } else if predicted.max(change.abs()) <= noise {
        1.0
    } else {
        -change / predicted
    };
    Attempt { trial, r: rt, c: ct, change, gain }
}

/// Damped Newton step on the model whose inequality rows are those active at
/// the predicted point. The set starts from the rows active at the current
/// point and is updated from the linearized constraints a few times.
#[allow(clippy::too_many_arguments)]
fn active_set_step(
    order: &Ordering,
    gauss_newton: &[(usize, usize, f64)],
    curvature: &[(usize, usize, f64)],
    g: &[f64],
    c: &Evaluation,
    kinds: &[RowKind],
    y: &[f64],
    rho: f64,
    active: &[bool],
    x: &[f64],
    lower: &[f64],
    free: &[bool],
    delta: f64,
) -> Option<Vec<f64>> {
    let mut set = active.to_vec();
    let mut pinned: Vec<Option<f64>> = free.iter().map(|f| if *f { None } else { Some(0.0) }).collect();
    let mut step = None;
    for _ in 0..6 {
        let mut h: Vec<(usize, usize, f64)> = gauss_newton.iter().chain(curvature).cloned().collect();
        let mut gm = g.to_vec();
        for (i, row) in c.jacobian.iter().enumerate() {
            if set[i] {
                push_outer(&mut h, row, rho);
            }
            if set[i] != active[i] {
                let w = if set[i] { y[i] + rho * c.values[i] } else { -(y[i] + rho * c.values[i]) };
                for &(j, v) in row {
                    gm[j] += w * v;
                }
            }
        }
        step = damped_step(order, &h, &gm, &pinned, delta);
        let s = step.as_ref()?;
        // Variables the step carries past their bound are pinned to it.
        let mut fixed_more = false;
        for i in 0..s.len() {
            if pinned[i].is_none() && x[i] + s[i] < lower[i] {
                pinned[i] = Some(lower[i] - x[i]);
                fixed_more = true;
            }
        }
        let next: Vec<bool> = kinds
            .iter()
            .zip(c.values.iter().zip(&c.jacobian))
            .zip(y)
            .map(|((k, (ci, row)), yi)| *k == RowKind::Inequality && yi + rho * (ci + apply(row, s)) > 0.0)
            .collect();
        if next == set && !fixed_more {
            break;
        }
        set = next;
    }
    step
}

fn push_outer(h: &mut Vec<(usize, usize, f64)>, row: &[(usize, f64)], w: f64) {
    for &(i, vi) in row {
        for &(j, vj) in row {
            if i >= j {
                h.push((i, j, w * vi * vj));
            }
        }
    }
}

/// `2JᵀJ` of the residuals plus `ρ∇c∇cᵀ` of the equality rows.
fn gauss_newton_part(r: &Evaluation, c: &Evaluation, kinds: &[RowKind], rho: f64) -> Vec<(usize, usize, f64)> {
    let mut h = Vec::new();
    for row in &r.jacobian {
        push_outer(&mut h, row, 2.0);
    }
    for (k, row) in kinds.iter().zip(&c.jacobian) {
        if *k == RowKind::Equality {
            push_outer(&mut h, row, rho);
        }
    }
    h
}

/// `sᵀHs` for a lower-triangle triplet list.
fn quad_form(h: &[(usize, usize, f64)], s: &[f64]) -> f64 {
    h.iter().map(|&(i, j, v)| if i == j { v * s[i] * s[i] } else { 2.0 * v * s[i] * s[j] }).sum()
}

/// Solve `(H + δD') s = −g` for the free variables, `D' = diag(H)⁺` plus a
/// small multiple of its largest entry. Pinned variables take the given
/// displacement.
fn damped_step(
    order: &Ordering,
    h: &[(usize, usize, f64)],
    g: &[f64],
    pinned: &[Option<f64>],
    delta: f64,
) -> Option<Vec<f64>> {
    let n = g.len();
    let mut diag = vec![0.0; n];
    for &(i, j, v) in h {
        if i == j {
            diag[i] += v;
        }
    }
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
    let mut rhs_by_var: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut entries = Vec::with_capacity(h.len() + n);
    for &(i, j, v) in h {
        match (pinned[i], pinned[j]) {
            (None, None) => {
                let (pi, pj) = (order.position[i], order.position[j]);
                entries.push((pi.max(pj), pi.min(pj), v));
            }
            (None, Some(d)) => rhs_by_var[i] -= v * d,
            (Some(d), None) => rhs_by_var[j] -= v * d,
            (Some(_), Some(_)) => {}
        }
    }
    for i in 0..n {
        let p = order.position[i];
        match pinned[i] {
            None => entries.push((p, p, delta * (diag[i].max(0.0) + 1e-9 * scale) + 1e-12 * scale)),
            Some(d) => {
                entries.push((p, p, 1.0));
                rhs_by_var[i] = d;
            }
        }
    }
    let factor = Skyline::factor(n, &entries)?;
    let rhs: Vec<f64> = (0..n).map(|p| rhs_by_var[order.variable[p]]).collect();
    let sol = factor.solve(&rhs);
    let mut step = vec![0.0; n];
    for (p, v) in sol.into_iter().enumerate() {
        step[order.variable[p]] = v;
    }
    if step.iter().all(|v| v.is_finite()) {
        Some(step)
    } else {
        None
    }
}

/// Symmetric permutation: `position[variable]` and its inverse.
#[derive(Debug, Clone)]
pub struct Ordering {
    pub position: Vec<usize>,
    pub variable: Vec<usize>,
}

impl Ordering {
    /// Reverse Cuthill–McKee ordering of the graph whose cliques are the
    /// sparsity patterns of the given rows plus the extra entries.
    pub fn new<'a>(n: usize, rows: impl Iterator<Item = &'a Vec<(usize, f64)>>, extra: &[(usize, usize, f64)]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for row in rows {
            for &(i, _) in row {
                for &(j, _) in row {
                    if i != j {
                        adj[i].push(j);
                    }
                }
            }
        }
        for &(i, j, _) in extra {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let seed = (0..n).filter(|i| !visited[*i]).min_by_key(|i| (adj[*i].len(), *i)).expect("unvisited vertex");
            let start = pseudo_peripheral(seed, &adj);
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = adj[v].iter().copied().filter(|w| !visited[*w]).collect();
                next.sort_by_key(|w| (adj[*w].len(), *w));
                for w in next {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order.reverse();
        let mut position = vec![0; n];
        for (p, &v) in order.iter().enumerate() {
            position[v] = p;
        }
        Self { position, variable: order }
    }

    pub fn identity(n: usize) -> Self {
        Self { position: (0..n).collect(), variable: (0..n).collect() }
    }
}

/// Vertex at the end of a longest BFS path found by repeated sweeps.
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let mut v = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(v, adj);
        let depth = *levels.iter().flatten().max().unwrap_or(&0);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        v = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(depth))
            .min_by_key(|(i, _)| (adj[*i].len(), *i))
            .map(|(i, _)| i)
            .unwrap_or(v);
    }
    v
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Envelope (skyline) Cholesky factor `L` stored by rows: row `i` holds
/// columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    /// Factor the symmetric matrix given by lower-triangle triplets `(i, j, v)`,
    /// `i ≥ j`, duplicates summed. `None` if it is not numerically positive
    /// definite.
    pub fn factor(n: usize, entries: &[(usize, usize, f64)]) -> Option<Self> {
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in entries {
            debug_assert!(i >= j);
            first[i] = first[i].min(j);
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for &(i, j, v) in entries {
            data[start[i] + j - first[i]] += v;
        }
        for i in 0..n {
            for j in first[i]..=i {
                let k0 = first[i].max(first[j]);
                let mut s = data[start[i] + j - first[i]];
                let ri = start[i] - first[i];
                let rj = start[j] - first[j];
                for k in k0..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if j < i {
                    data[ri + j] = s / data[rj + j];
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    data[ri + i] = s.sqrt();
                }
            }
        }
        Some(Self { first, start, data })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let ri = self.start[i] - self.first[i];
            let mut s = x[i];
            for k in self.first[i]..i {
                s -= self.data[ri + k] * x[k];
            }
            x[i] = s / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let ri = self.start[i] - self.first[i];
            x[i] /= self.data[ri + i];
            let xi = x[i];
            for k in self.first[i]..i {
                x[k] -= self.data[ri + k] * xi;
            }
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }
}
