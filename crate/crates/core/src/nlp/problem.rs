//! Direct transcription over B-spline coefficients of the flat output.
//!
//! Decision vector: `[c_N (n), c_E (n), c_ψ (n), extras (S·E)]`. Rows:
//! 12 boundary equalities, `S` sway equalities, `4S` actuator boxes,
//! `4(S−1)` rate boxes, then the provider's obstacle rows. All actuator rows
//! are scaled by their limits.

use nalgebra::{SMatrix, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formulations::{build_provider, ConstraintProvider, Counts, FormulationKind, LocalRow, RowKind};
use crate::geom::Pose2;
use crate::nlp::bspline::{BSplineBasis, LocalBasis};
use crate::nlp::solver::{Evaluation, NlpFunctions};
use crate::scenario::Scenario;
use crate::vessel::{flat_input_with_jacobian, flat_state, FlatOutput, VesselParams, VesselState};

/// One B-spline per flat channel (north, east, heading).
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTrajectory {
    pub basis: BSplineBasis,
    pub coefficients: [Vec<f64>; 3],
}

impl FlatTrajectory {
    pub fn flat_output(&self, t: f64) -> FlatOutput {
        let lb = self.basis.local(t, 2);
        let mut out = [Vector3::zeros(); 3];
        for (c, coefs) in self.coefficients.iter().enumerate() {
            for (d, row) in lb.values.iter().enumerate() {
                out[d][c] = row.iter().enumerate().map(|(i, b)| b * coefs[lb.first + i]).sum();
            }
        }
        FlatOutput { z: out[0], dz: out[1], ddz: out[2] }
    }

    pub fn pose(&self, t: f64) -> Pose2 {
        let z = self.flat_output(t).z;
        Pose2::new(z.x, z.y, z.z)
    }

    pub fn state(&self, t: f64) -> VesselState {
        let f = self.flat_output(t);
        flat_state(&f.z, &f.dz)
    }

    pub fn horizon(&self) -> (f64, f64) {
        let k = self.basis.knots();
        (k[0], k[k.len() - 1])
    }

    /// Coefficients in decision-vector order.
    pub fn to_vector(&self) -> Vec<f64> {
        self.coefficients.concat()
    }
}

/// Flat derivatives `(z, ż)` realizing a boundary state.
pub fn boundary_flat(state: &VesselState) -> (Vector3<f64>, Vector3<f64>) {
    let (s, c) = state.eta.z.sin_cos();
    let dz = Vector3::new(c * state.nu.x - s * state.nu.y, s * state.nu.x + c * state.nu.y, state.nu.z);
    (state.eta, dz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLayout {
    pub boundary: usize,
    pub sway: usize,
    pub boxes: usize,
    pub rates: usize,
    pub obstacles: usize,
}

impl RowLayout {
    pub fn total(&self) -> usize {
        self.boundary + self.sway + self.boxes + self.rates + self.obstacles
    }

    pub fn obstacle_start(&self) -> usize {
        self.boundary + self.sway + self.boxes + self.rates
    }
}

struct SampleEval {
    tau: Vector3<f64>,
    /// `∂τ/∂(local coefficients)`, column `c·w + i`.
    dtau: Vec<[f64; 3]>,
    rows: Vec<LocalRow>,
}

pub struct NlpProblem {
    pub formulation: Option<FormulationKind>,
    basis: BSplineBasis,
    times: Vec<f64>,
    locals: Vec<LocalBasis>,
    boundary: [(LocalBasis, Vector3<f64>, Vector3<f64>); 2],
    params: VesselParams,
    provider: Option<Box<dyn ConstraintProvider>>,
    n_coef: usize,
    extra: usize,
    kinds: Vec<RowKind>,
    layout: RowLayout,
    dt: f64,
}

/// Build the transcription of a scenario for one formulation; `None` gives
/// the obstacle-free problem.
pub fn assemble(scenario: &Scenario, formulation: Option<FormulationKind>) -> Result<NlpProblem> {
    let n = scenario.spline.coefficients;
    let degree = scenario.spline.degree;
    // two value-and-slope conditions at each end per channel
    if n < 4 || n < degree + 1 {
        return Err(Error::Config(format!(
            "{n} coefficients per channel cannot meet the boundary states (need at least max(4, degree + 1))"
        )));
    }
    if scenario.samples < 2 {
        return Err(Error::Config("at least 2 samples are required".into()));
    }
    let basis = BSplineBasis::clamped_uniform(degree, n, 0.0, scenario.t_e)?;
    let s = scenario.samples;
    let dt = scenario.t_e / (s - 1) as f64;
    let times: Vec<f64> = (0..s).map(|k| if k + 1 == s { scenario.t_e } else { k as f64 * dt }).collect();
    let locals = times.iter().map(|t| basis.local(*t, 2)).collect();
    let provider = match formulation {
        Some(f) if !scenario.obstacles.is_empty() => {
            Some(build_provider(f, &scenario.obstacles, &scenario.vessel.footprint, &scenario.settings)?)
        }
        _ => None,
    };
    let (z0, dz0) = boundary_flat(&scenario.start);
    let (ze, dze) = boundary_flat(&scenario.goal);
    let extra = provider.as_ref().map_or(0, |p| p.extra_per_sample());
    let per_sample = provider.as_ref().map_or(Vec::new(), |p| p.row_kinds());
    let layout = RowLayout { boundary: 12, sway: s, boxes: 4 * s, rates: 4 * (s - 1), obstacles: s * per_sample.len() };
    let mut kinds = vec![RowKind::Equality; layout.boundary + layout.sway];
    kinds.extend(std::iter::repeat_n(RowKind::Inequality, layout.boxes + layout.rates));
    for _ in 0..s {
        kinds.extend(per_sample.iter().copied());
    }
    Ok(NlpProblem {
        formulation: provider.as_ref().map(|p| p.formulation()),
        boundary: [(basis.local(0.0, 1), z0, dz0), (basis.local(scenario.t_e, 1), ze, dze)],
        basis,
        times,
        locals,
        params: scenario.vessel.clone(),
        provider,
        n_coef: n,
        extra,
        kinds,
        layout,
        dt,
    })
}

impl NlpProblem {
    pub fn layout(&self) -> RowLayout {
        self.layout
    }

    pub fn samples(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn spline_variables(&self) -> usize {
        3 * self.n_coef
    }

    pub fn extra_per_sample(&self) -> usize {
        self.extra
    }

    pub fn provider(&self) -> Option<&dyn ConstraintProvider> {
        self.provider.as_deref()
    }

    pub fn obstacle_counts(&self) -> Counts {
        self.provider
            .as_ref()
            .map_or(Counts { obstacle_constraints: 0, extra_variables: 0 }, |p| p.counts(self.samples()))
    }

    pub fn trajectory(&self, x: &[f64]) -> FlatTrajectory {
        let n = self.n_coef;
        FlatTrajectory {
            basis: self.basis.clone(),
            coefficients: [x[..n].to_vec(), x[n..2 * n].to_vec(), x[2 * n..3 * n].to_vec()],
        }
    }

    /// Decision vector from a trajectory, with extras from the provider's
    /// initialization at each sample pose.
    pub fn decision_vector(&self, traj: &FlatTrajectory) -> Vec<f64> {
        let mut x = traj.to_vector();
        if let Some(p) = &self.provider {
            for k in 0..self.samples() {
                x.extend(p.initial_extra(&self.pose(&x, k)));
            }
        }
        x
    }

    fn width(&self) -> usize {
        self.basis.degree() + 1
    }

    fn local_flat(&self, x: &[f64], k: usize) -> FlatOutput {
        let lb = &self.locals[k];
        let mut out = [Vector3::zeros(); 3];
        for c in 0..3 {
            let coefs = &x[c * self.n_coef..];
            for (d, row) in lb.values.iter().enumerate() {
                out[d][c] = row.iter().enumerate().map(|(i, b)| b * coefs[lb.first + i]).sum();
            }
        }
        FlatOutput { z: out[0], dz: out[1], ddz: out[2] }
    }

    fn pose(&self, x: &[f64], k: usize) -> Pose2 {
        let z = self.local_flat(x, k).z;
        Pose2::new(z.x, z.y, z.z)
    }

    fn coef_column(&self, k: usize, c: usize, i: usize) -> usize {
        c * self.n_coef + self.locals[k].first + i
    }

    fn extra_column(&self, k: usize, e: usize) -> usize {
        3 * self.n_coef + k * self.extra + e
    }

    fn extras<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        let o = 3 * self.n_coef + k * self.extra;
        &x[o..o + self.extra]
    }

    fn eval_sample(&self, x: &[f64], k: usize) -> SampleEval {
        let f = self.local_flat(x, k);
        let (tau, j) = flat_input_with_jacobian(&f, &self.params);
        let lb = &self.locals[k];
        let w = self.width();
        let mut dtau = vec![[0.0; 3]; 3 * w];
        for c in 0..3 {
            for i in 0..w {
                let mut col = Vector3::zeros();
                for d in 0..3 {
                    col += j.column(3 * d + c) * lb.values[d][i];
                }
                dtau[c * w + i] = [col.x, col.y, col.z];
            }
        }
        let rows = match &self.provider {
            Some(p) => p.evaluate_sample(&Pose2::new(f.z.x, f.z.y, f.z.z), self.extras(x, k)),
            None => Vec::new(),
        };
        SampleEval { tau, dtau, rows }
    }

    fn eval_all(&self, x: &[f64]) -> Vec<SampleEval> {
        (0..self.samples()).into_par_iter().map(|k| self.eval_sample(x, k)).collect()
    }

    /// Row `a·τ_axis/scale` at sample `k`.
    fn tau_row(&self, k: usize, ev: &SampleEval, axis: usize, scale: f64) -> Vec<(usize, f64)> {
        let w = self.width();
        (0..3 * w).map(|l| (self.coef_column(k, l / w, l % w), ev.dtau[l][axis] / scale)).collect()
    }

    fn obstacle_row(&self, k: usize, row: &LocalRow) -> Vec<(usize, f64)> {
        let lb = &self.locals[k];
        let mut out = Vec::with_capacity(3 * self.width() + row.grad_extra.len());
        for c in 0..3 {
            for (i, b) in lb.values[0].iter().enumerate() {
                out.push((self.coef_column(k, c, i), row.grad_pose[c] * b));
            }
        }
        out.extend(row.grad_extra.iter().map(|&(e, v)| (self.extra_column(k, e), v)));
        out
    }

    /// Actuator forces at every sample.
    pub fn forces(&self, x: &[f64]) -> Vec<Vector3<f64>> {
        self.eval_all(x).into_iter().map(|e| e.tau).collect()
    }

    /// Sample poses of a decision vector.
    pub fn poses(&self, x: &[f64]) -> Vec<Pose2> {
        (0..self.samples()).map(|k| self.pose(x, k)).collect()
    }

    /// `Σ wᵢ·τ(q)ᵢ` Hessian in the nine flat derivatives, by central
    /// differences of the analytic gradient.
    fn tau_curvature(&self, f: &FlatOutput, wt: &Vector3<f64>) -> SMatrix<f64, 9, 9> {
        let grad = |q: &[f64; 9]| {
            let fo = FlatOutput {
                z: Vector3::new(q[0], q[1], q[2]),
                dz: Vector3::new(q[3], q[4], q[5]),
                ddz: Vector3::new(q[6], q[7], q[8]),
            };
            let (_, j) = flat_input_with_jacobian(&fo, &self.params);
            j.transpose() * wt
        };
        let q0 = [f.z.x, f.z.y, f.z.z, f.dz.x, f.dz.y, f.dz.z, f.ddz.x, f.ddz.y, f.ddz.z];
        let mut h = SMatrix::<f64, 9, 9>::zeros();
        for i in 0..9 {
            let step = 1e-5 * (1.0 + q0[i].abs());
            let (mut qp, mut qm) = (q0, q0);
            qp[i] += step;
            qm[i] -= step;
            h.set_column(i, &((grad(&qp) - grad(&qm)) / (2.0 * step)));
        }
        (h + h.transpose()) * 0.5
    }

    /// Hessian of `Σ wᵣ·rowᵣ` in (pose, extras) at sample `k`.
    fn obstacle_curvature(
        &self,
        provider: &dyn ConstraintProvider,
        pose: &Pose2,
        extra: &[f64],
        w: &[f64],
    ) -> Vec<Vec<f64>> {
        let m = 3 + extra.len();
        let grad = |pose: &Pose2, extra: &[f64]| {
            let mut g = vec![0.0; m];
            for (row, wr) in provider.evaluate_sample(pose, extra).iter().zip(w) {
                if *wr == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    g[c] += wr * row.grad_pose[c];
                }
                for &(e, v) in &row.grad_extra {
                    g[3 + e] += wr * v;
                }
            }
            g
        };
        let base = [pose.position.x, pose.position.y, pose.heading];
        let mut h = vec![vec![0.0; m]; m];
        for i in 0..m {
            let step = 1e-6 * (1.0 + if i < 3 { base[i].abs() } else { extra[i - 3].abs() });
            let shift = |sgn: f64| {
                let mut q = base;
                let mut e = extra.to_vec();
                if i < 3 {
                    q[i] += sgn * step;
                } else {
                    e[i - 3] += sgn * step;
                }
                grad(&Pose2::new(q[0], q[1], q[2]), &e)
            };
            let (gp, gm) = (shift(1.0), shift(-1.0));
            for r in 0..m {
                h[r][i] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = s;
                h[j][i] = s;
            }
        }
        h
    }

    /// Aggregate weight on `τ_k` from cost residuals and actuator rows.
    fn tau_weights(&self, wr: &[f64], wc: &[f64]) -> Vec<Vector3<f64>> {
        let s = self.samples();
        let p = &self.params;
        let l = self.layout;
        let mut wt = vec![Vector3::zeros(); s];
        for k in 0..s {
            wt[k].x += wr[2 * k] / p.tau_u_max;
            wt[k].z += wr[2 * k + 1] / p.tau_r_max;
            wt[k].y += wc[l.boundary + k] / p.tau_u_max;
            let b = l.boundary + l.sway + 4 * k;
            wt[k].x += (wc[b] - wc[b + 1]) / p.tau_u_max;
            wt[k].z += (wc[b + 2] - wc[b + 3]) / p.tau_r_max;
        }
        let (su, sr) = (self.dt * p.tau_u_rate_max, self.dt * p.tau_r_rate_max);
        for k in 0..s - 1 {
            let b = l.boundary + l.sway + l.boxes + 4 * k;
            let du = (wc[b] - wc[b + 1]) / su;
            let dr = (wc[b + 2] - wc[b + 3]) / sr;
            wt[k + 1].x += du;
            wt[k].x -= du;
            wt[k + 1].z += dr;
            wt[k].z -= dr;
        }
        wt
    }
}

fn merge(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

impl NlpFunctions for NlpProblem {
    fn dim(&self) -> usize {
        3 * self.n_coef + self.samples() * self.extra
    }

    fn lower_bounds(&self) -> Vec<f64> {
        let mut l = vec![f64::NEG_INFINITY; 3 * self.n_coef];
        l.resize(self.dim(), 0.0);
        l
    }

    fn residuals(&self, x: &[f64]) -> Evaluation {
        let evs = self.eval_all(x);
        let mut out = Evaluation::default();
        for (k, ev) in evs.iter().enumerate() {
            out.values.push(ev.tau.x / self.params.tau_u_max);
            out.jacobian.push(self.tau_row(k, ev, 0, self.params.tau_u_max));
            out.values.push(ev.tau.z / self.params.tau_r_max);
            out.jacobian.push(self.tau_row(k, ev, 2, self.params.tau_r_max));
        }
        out
    }

    fn constraint_kinds(&self) -> Vec<RowKind> {
        self.kinds.clone()
    }

    fn constraints(&self, x: &[f64]) -> Evaluation {
        let evs = self.eval_all(x);
        let p = &self.params;
        let mut out = Evaluation::default();
        let mut push = |v: f64, row: Vec<(usize, f64)>| {
            out.values.push(v);
            out.jacobian.push(row);
        };
        for (lb, z, dz) in &self.boundary {
            for (d, target) in [z, dz].into_iter().enumerate() {
                for c in 0..3 {
                    let row: Vec<(usize, f64)> =
                        lb.values[d].iter().enumerate().map(|(i, b)| (c * self.n_coef + lb.first + i, *b)).collect();
                    let v: f64 = row.iter().map(|(j, b)| b * x[*j]).sum();
                    push(v - target[c], row);
                }
            }
        }
        for (k, ev) in evs.iter().enumerate() {
            push(ev.tau.y / p.tau_u_max, self.tau_row(k, ev, 1, p.tau_u_max));
        }
        for (k, ev) in evs.iter().enumerate() {
            for (axis, max) in [(0, p.tau_u_max), (2, p.tau_r_max)] {
                let row = self.tau_row(k, ev, axis, max);
                push(ev.tau[axis] / max - 1.0, row.clone());
                push(-ev.tau[axis] / max - 1.0, row.into_iter().map(|(j, v)| (j, -v)).collect());
            }
        }
        for k in 0..self.samples() - 1 {
            for (axis, rate) in [(0, p.tau_u_rate_max), (2, p.tau_r_rate_max)] {
                let scale = self.dt * rate;
                let mut row = self.tau_row(k + 1, &evs[k + 1], axis, scale);
                row.extend(self.tau_row(k, &evs[k], axis, scale).into_iter().map(|(j, v)| (j, -v)));
                let row = merge(row);
                let d = (evs[k + 1].tau[axis] - evs[k].tau[axis]) / scale;
                push(d - 1.0, row.clone());
                push(-d - 1.0, row.into_iter().map(|(j, v)| (j, -v)).collect());
            }
        }
        for (k, ev) in evs.iter().enumerate() {
            for r in &ev.rows {
                push(r.value, self.obstacle_row(k, r));
            }
        }
        out
    }

    fn curvature(&self, x: &[f64], wr: &[f64], wc: &[f64]) -> Vec<(usize, usize, f64)> {
        let wt = self.tau_weights(wr, wc);
        let w = self.width();
        let per = self.provider.as_ref().map_or(0, |p| p.row_kinds().len());
        let smooth = self.provider.as_ref().is_some_and(|p| p.formulation().kind.is_smooth());
        let o0 = self.layout.obstacle_start();
        let blocks: Vec<Vec<(usize, usize, f64)>> = (0..self.samples())
            .into_par_iter()
            .map(|k| {
                let mut out = Vec::new();
                let lb = &self.locals[k];
                let f = self.local_flat(x, k);
                if wt[k] != Vector3::zeros() {
                    let h = self.tau_curvature(&f, &wt[k]);
                    for a in 0..3 * w {
                        let (ca, ia) = (a / w, a % w);
                        for b in 0..=a {
                            let (cb, ib) = (b / w, b % w);
                            let mut v = 0.0;
                            for d in 0..3 {
                                for e in 0..3 {
                                    v += lb.values[d][ia] * lb.values[e][ib] * h[(3 * d + ca, 3 * e + cb)];
                                }
                            }
                            let (i, j) = (self.coef_column(k, ca, ia), self.coef_column(k, cb, ib));
                            if v != 0.0 {
                                out.push((i.max(j), i.min(j), v));
                            }
                        }
                    }
                }
                if smooth {
                    let weights = &wc[o0 + k * per..o0 + (k + 1) * per];
                    if weights.iter().any(|v| *v != 0.0) {
                        let provider = self.provider.as_deref().expect("smooth provider");
                        let pose = Pose2::new(f.z.x, f.z.y, f.z.z);
                        let h = self.obstacle_curvature(provider, &pose, self.extras(x, k), weights);
                        // expand pose variables to the local spline coefficients
                        let e = self.extra;
                        let cols: Vec<usize> = (0..3 * w)
                            .map(|l| self.coef_column(k, l / w, l % w))
                            .chain((0..e).map(|i| self.extra_column(k, i)))
                            .collect();
                        let t = |local: usize, a: usize| -> f64 {
                            match (local < 3 * w, a < 3) {
                                (true, true) if local / w == a => lb.values[0][local % w],
                                (false, false) if local - 3 * w == a - 3 => 1.0,
                                _ => 0.0,
                            }
                        };
                        let m = h.len();
                        for la in 0..cols.len() {
                            for lb_ in 0..=la {
                                let mut v = 0.0;
                                for a in 0..m {
                                    let ta = t(la, a);
                                    if ta == 0.0 {
                                        continue;
                                    }
                                    for b in 0..m {
                                        let tb = t(lb_, b);
                                        if tb != 0.0 {
                                            v += ta * h[a][b] * tb;
                                        }
                                    }
                                }
                                if v != 0.0 {
                                    let (i, j) = (cols[la], cols[lb_]);
                                    out.push((i.max(j), i.min(j), v));
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        blocks.into_iter().flatten().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::{Body, Kind, Mode};
    use crate::nlp::init::initial_guess;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_hessian_fd(p: &NlpProblem, x: &[f64], wr: &[f64], wc: &[f64]) -> Vec<Vec<f64>> {
        let n = x.len();
        let grad = |x: &[f64]| {
            let mut g = vec![0.0; n];
            let r = p.residuals(x);
            for (row, w) in r.jacobian.iter().zip(wr) {
                for &(j, v) in row {
                    g[j] += w * v;
                }
            }
            let c = p.constraints(x);
            for (row, w) in c.jacobian.iter().zip(wc) {
                for &(j, v) in row {
                    g[j] += w * v;
                }
            }
            g
        };
        (0..n)
            .map(|i| {
                let h = 1e-6 * (1.0 + x[i].abs());
                let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
                xp[i] += h;
                xm[i] -= h;
                let (gp, gm) = (grad(&xp), grad(&xm));
                gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect()
    }

    #[test]
    fn counts_and_dimensions() {
        let s = Scenario::kiel_harbor();
        let p =
            assemble(&s, Some(FormulationKind::new(Kind::CsgBoundHard, Mode::Union, Body::Point).unwrap())).unwrap();
        assert_eq!(p.layout().obstacles, 61);
        assert_eq!(p.dim(), 189);
        let d = assemble(&s, Some(FormulationKind::new(Kind::Dual, Mode::Separate, Body::Point).unwrap())).unwrap();
        assert_eq!(d.dim() - 189, 1098);
        assert_eq!(d.constraints(&vec![0.5; d.dim()]).values.len(), d.constraint_kinds().len());
    }

    #[test]
    fn too_few_coefficients_is_a_configuration_error() {
        let mut s = Scenario::kiel_harbor();
        s.spline.coefficients = 3;
        assert!(matches!(assemble(&s, None), Err(Error::Config(_))));
    }

    /// Jacobians and the curvature callback against finite differences at a
    /// perturbed initial guess.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut s = Scenario::kiel_harbor();
        s.samples = 9;
        s.spline.coefficients = 11;
        s.t_e = 20.0;
        let guess = initial_guess(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in [
            FormulationKind::new(Kind::Dual, Mode::Separate, Body::Shape).unwrap(),
            FormulationKind::new(Kind::CsgBoundLse, Mode::Union, Body::Point).unwrap(),
            FormulationKind::new(Kind::Ellipsoidal, Mode::Union, Body::Point).unwrap(),
        ] {
            let p = assemble(&s, Some(f)).unwrap();
            let mut x = p.decision_vector(&guess);
            for v in x.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
                if *v < 0.0 {
                    *v = 0.01;
                }
            }
            let n = x.len();
            for eval in [&(|x: &[f64]| p.residuals(x)) as &dyn Fn(&[f64]) -> Evaluation, &|x: &[f64]| p.constraints(x)]
            {
                let e0 = eval(&x);
                let mut dense = vec![vec![0.0; n]; e0.values.len()];
                for (r, row) in e0.jacobian.iter().enumerate() {
                    for &(j, v) in row {
                        dense[r][j] += v;
                    }
                }
                for j in 0..n {
                    let h = 1e-6 * (1.0 + x[j].abs());
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[j] += h;
                    xm[j] -= h;
                    let (ep, em) = (eval(&xp), eval(&xm));
                    for r in 0..e0.values.len() {
                        let fd = (ep.values[r] - em.values[r]) / (2.0 * h);
                        assert!(
                            (fd - dense[r][j]).abs() < 1e-5 * fd.abs().max(1.0),
                            "{f} row {r} col {j}: {fd} vs {}",
                            dense[r][j]
                        );
                    }
                }
            }
            let wr: Vec<f64> = (0..p.residuals(&x).values.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wc: Vec<f64> = (0..p.constraint_kinds().len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let fd = dense_hessian_fd(&p, &x, &wr, &wc);
            let mut an = vec![vec![0.0; n]; n];
            for (i, j, v) in p.curvature(&x, &wr, &wc) {
                assert!(i >= j);
                an[i][j] += v;
                if i != j {
                    an[j][i] += v;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let scale = fd[i][j].abs().max(1.0);
                    assert!(
                        (fd[i][j] - an[i][j]).abs() < 1e-4 * scale,
                        "{f} H[{i}][{j}]: {} vs {}",
                        fd[i][j],
                        an[i][j]
                    );
                }
            }
        }
    }
}
