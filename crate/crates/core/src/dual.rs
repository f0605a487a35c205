//! Dual-variable signed-distance constraints for polytopes in half-space form.
//!
//! Point mode uses multipliers `μ ≥ 0` (one per obstacle face):
//! `d_min − μᵀ(Ap − b) ≤ 0` and `‖Aᵀμ‖ = 1`.
//! Shape mode adds `λ ≥ 0` (one per vehicle face) for the posed vehicle
//! `{x : Vx ≤ q}`: `d_min + λᵀq + μᵀb ≤ 0`, `Vᵀλ + Aᵀμ = 0` and `‖Aᵀμ‖ = 1`.
//! The norm equality is solved as `‖Aᵀμ‖² − 1 = 0`, which is smooth at zero.

use nalgebra::{Matrix2x3, Vector3};

use crate::bound::{PrimitiveObstacle, VehiclePrimitives};
use crate::error::{Error, Result};
use crate::geom::{cross, perp, polygon_to_halfspaces, rotation, Point2, Pose2, Vec2};
use crate::sdist::SignedDistanceResult;

/// Residuals of the point-mode constraints and their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPointResiduals {
    /// `d_min − μᵀ(Ap − b)`.
    pub inequality: f64,
    pub d_inequality_dp: Vec2,
    pub d_inequality_dmu: Vec<f64>,
    /// `‖Aᵀμ‖² − 1`.
    pub norm: f64,
    pub d_norm_dmu: Vec<f64>,
    /// `‖Aᵀμ‖ − 1`.
    pub norm_reported: f64,
    /// `Aᵀμ = 0`: the reported form has no derivative there.
    pub singular: bool,
}

fn norm_terms(obs: &PrimitiveObstacle, mu: &[f64]) -> (Vec2, f64, Vec<f64>, f64, bool) {
    let w = obs.halfspaces().iter().zip(mu).fold(Vec2::zeros(), |acc, (hs, m)| acc + hs.normal * *m);
    let n2 = w.norm_squared();
    let d = obs.halfspaces().iter().map(|hs| 2.0 * w.dot(&hs.normal)).collect();
    (w, n2 - 1.0, d, n2.sqrt() - 1.0, n2 == 0.0)
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!("{name} has {got} entries, expected {want}")));
    }
    Ok(())
}

pub fn dual_point_residuals(p: Point2, obs: &PrimitiveObstacle, mu: &[f64], d_min: f64) -> Result<DualPointResiduals> {
    check_len("mu", mu.len(), obs.len())?;
    let gaps: Vec<f64> = obs.halfspaces().iter().map(|hs| hs.normal.dot(&p) - hs.offset).collect();
    let (w, norm, d_norm_dmu, norm_reported, singular) = norm_terms(obs, mu);
    Ok(DualPointResiduals {
        inequality: d_min - gaps.iter().zip(mu).map(|(g, m)| g * m).sum::<f64>(),
        d_inequality_dp: -w,
        d_inequality_dmu: gaps.iter().map(|g| -g).collect(),
        norm,
        d_norm_dmu,
        norm_reported,
        singular,
    })
}

/// World-frame vehicle half-spaces: normals `V` and offsets `q`.
pub fn vehicle_halfspaces(vehicle: &VehiclePrimitives, pose: &Pose2) -> (Vec<Vec2>, Vec<f64>) {
    let r = rotation(pose.heading);
    polygon_to_halfspaces(vehicle.body())
        .iter()
        .map(|hs| {
            let n = r * hs.normal;
            (n, hs.offset + n.dot(&pose.position))
        })
        .unzip()
}

/// Residuals of the shape-mode constraints and their derivatives. Pose
/// derivatives are ordered (x, y, ψ).
#[derive(Debug, Clone, PartialEq)]
pub struct DualShapeResiduals {
    /// `d_min + λᵀq + μᵀb`.
    pub inequality: f64,
    pub d_inequality_dpose: Vector3<f64>,
    pub d_inequality_dmu: Vec<f64>,
    pub d_inequality_dlambda: Vec<f64>,
    /// `Vᵀλ + Aᵀμ`.
    pub equality: Vec2,
    pub d_equality_dpose: Matrix2x3<f64>,
    /// Column `i` is the derivative with respect to `μ_i`.
    pub d_equality_dmu: Vec<Vec2>,
    pub d_equality_dlambda: Vec<Vec2>,
    pub norm: f64,
    pub d_norm_dmu: Vec<f64>,
    pub norm_reported: f64,
    pub singular: bool,
}

pub fn dual_shape_residuals(
    pose: &Pose2,
    vehicle: &VehiclePrimitives,
    obs: &PrimitiveObstacle,
    mu: &[f64],
    lambda: &[f64],
    d_min: f64,
) -> Result<DualShapeResiduals> {
    check_len("mu", mu.len(), obs.len())?;
    check_len("lambda", lambda.len(), vehicle.len())?;
    let (normals, q) = vehicle_halfspaces(vehicle, pose);
    let (w, norm, d_norm_dmu, norm_reported, singular) = norm_terms(obs, mu);

    let lq: f64 = lambda.iter().zip(&q).map(|(l, q)| l * q).sum();
    let mb: f64 = mu.iter().zip(obs.halfspaces()).map(|(m, hs)| m * hs.offset).sum();
    let mut d_ineq_dpose = Vector3::zeros();
    let mut v_lambda = Vec2::zeros();
    let mut d_v_lambda_dpsi = Vec2::zeros();
    for (l, n) in lambda.iter().zip(&normals) {
        // ∂q/∂pos = n, ∂q/∂ψ = perp(n)·pos
        d_ineq_dpose += Vector3::new(n.x, n.y, perp(*n).dot(&pose.position)) * *l;
        v_lambda += n * *l;
        d_v_lambda_dpsi += perp(*n) * *l;
    }
    let mut d_eq_dpose = Matrix2x3::zeros();
    d_eq_dpose.set_column(2, &d_v_lambda_dpsi);

    Ok(DualShapeResiduals {
        inequality: d_min + lq + mb,
        d_inequality_dpose: d_ineq_dpose,
        d_inequality_dmu: obs.halfspaces().iter().map(|hs| hs.offset).collect(),
        d_inequality_dlambda: q,
        equality: v_lambda + w,
        d_equality_dpose: d_eq_dpose,
        d_equality_dmu: obs.halfspaces().iter().map(|hs| hs.normal).collect(),
        d_equality_dlambda: normals,
        norm,
        d_norm_dmu,
        norm_reported,
        singular,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMode {
    Point,
    Shape,
}

/// Constraint and variable counts added by the dual formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DualCounts {
    /// Inequality plus norm equality per sample and obstacle.
    pub nonlinear_constraints: usize,
    /// Vector equality rows of shape mode.
    pub linear_equalities: usize,
    pub dual_variables: usize,
}

impl DualCounts {
    pub fn obstacle_constraints(&self) -> usize {
        self.nonlinear_constraints + self.linear_equalities
    }
}

pub fn dual_counts(samples: usize, faces: &[usize], vehicle_faces: usize, mode: DualMode) -> DualCounts {
    let m = faces.len();
    let sum_k: usize = faces.iter().sum();
    let base =
        DualCounts { nonlinear_constraints: 2 * samples * m, linear_equalities: 0, dual_variables: samples * sum_k };
    match mode {
        DualMode::Point => base,
        DualMode::Shape => DualCounts {
            linear_equalities: 2 * samples * m,
            dual_variables: base.dual_variables + samples * m * vehicle_faces,
            ..base
        },
    }
}

/// Non-negative weights `c` with `Σ c_i normals_i = w`, supported on the two
/// cyclically adjacent normals whose cone contains `w`. `normals` must be the
/// outward normals of a convex polygon in counter-clockwise order.
pub fn cone_weights(normals: &[Vec2], w: Vec2) -> Vec<f64> {
    let n = normals.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (normals[i], normals[(i + 1) % n]);
        let (ca, cb) = (cross(a, w), cross(w, b));
        if ca >= 0.0 && cb >= 0.0 {
            let det = cross(a, b);
            // w = s·a + t·b
            let s = cross(w, b) / det;
            let t = cross(a, w) / det;
            out[i] = s.max(0.0);
            out[(i + 1) % n] += t.max(0.0);
            return out;
        }
    }
    unreachable!("outward normals of a convex polygon cover every direction")
}

/// Multipliers certifying a signed-distance result: `Aᵀμ = axis` for the
/// obstacle. For a point inside or facing one face this selects that face.
pub fn init_point_duals(obs: &PrimitiveObstacle, sd: &SignedDistanceResult) -> Vec<f64> {
    let normals: Vec<Vec2> = obs.halfspaces().iter().map(|h| h.normal).collect();
    cone_weights(&normals, sd.axis)
}

/// Multipliers `(μ, λ)` with `Aᵀμ = axis` and `Vᵀλ = −axis`.
pub fn init_shape_duals(
    obs: &PrimitiveObstacle,
    vehicle: &VehiclePrimitives,
    pose: &Pose2,
    sd: &SignedDistanceResult,
) -> (Vec<f64>, Vec<f64>) {
    let (normals, _) = vehicle_halfspaces(vehicle, pose);
    (init_point_duals(obs, sd), cone_weights(&normals, -sd.axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ConvexPolygon;
    use crate::sdist::{signed_distance, PointShape, SdConfig};
    use crate::testutil::random_convex_polygon;
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> PrimitiveObstacle {
        PrimitiveObstacle::new(ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap())
    }

    /// `max μᵀc` over `μ ≥ 0`, `‖Aᵀμ‖ = 1`, enumerating single faces and face
    /// pairs (a linear objective on the norm-one curve peaks at `G⁻¹c`).
    fn dual_optimum(p: Point2, obs: &PrimitiveObstacle) -> f64 {
        let hs = obs.halfspaces();
        let c: Vec<f64> = hs.iter().map(|h| h.normal.dot(&p) - h.offset).collect();
        let mut best = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                let g = Matrix2::new(1.0, hs[i].normal.dot(&hs[j].normal), hs[i].normal.dot(&hs[j].normal), 1.0);
                let Some(gi) = g.try_inverse() else { continue };
                let cc = Vec2::new(c[i], c[j]);
                let y = gi * cc;
                let val2 = cc.dot(&y);
                if val2 > 0.0 && y.x >= 0.0 && y.y >= 0.0 {
                    best = best.max(val2.sqrt());
                }
            }
        }
        best
    }

    #[test]
    fn single_active_face() {
        let mut mu = vec![0.0; 4];
        mu[1] = 1.0;
        let r = dual_point_residuals(Point2::new(1.7, 0.5), &unit_square(), &mu, 0.0).unwrap();
        assert!((r.inequality + 0.7).abs() < 1e-15);
        assert!(r.norm.abs() < 1e-15 && r.norm_reported.abs() < 1e-15);
    }

    #[test]
    fn zero_multipliers() {
        let r = dual_point_residuals(Point2::new(1.7, 0.5), &unit_square(), &[0.0; 4], 0.25).unwrap();
        assert_eq!(r.inequality, 0.25);
        assert_eq!(r.norm_reported, -1.0);
        assert!(r.singular && r.d_norm_dmu.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn dual_optimum_equals_signed_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cfg = SdConfig::default();
        for _ in 0..100 {
            let n = rng.gen_range(3..9);
            let obs = PrimitiveObstacle::new(random_convex_polygon(&mut rng, n, 1.0));
            let p = Point2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let sd = signed_distance(&PointShape(p), obs.polygon(), &cfg).unwrap();
            assert!((dual_optimum(p, &obs) - sd.value).abs() < 1e-9);
            // the cone initialisation reaches the optimum
            let mu = init_point_duals(&obs, &sd);
            let r = dual_point_residuals(p, &obs, &mu, 0.0).unwrap();
            assert!((-r.inequality - sd.value).abs() < 1e-9);
            assert!(r.norm.abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_wall_certificate() {
        let veh = VehiclePrimitives::new(ConvexPolygon::rectangle(-0.6, -0.18, 0.6, 0.18).unwrap());
        let wall = PrimitiveObstacle::new(ConvexPolygon::rectangle(-5.0, 0.48, 5.0, 2.0).unwrap());
        // obstacle face 0 has normal (0,−1); vehicle face 2 has normal (0,1)
        let mut mu = vec![0.0; 4];
        mu[0] = 1.0;
        let mut lambda = vec![0.0; 4];
        lambda[2] = 1.0;
        let r = dual_shape_residuals(&Pose2::identity(), &veh, &wall, &mu, &lambda, 0.0).unwrap();
        assert!((-r.inequality - 0.3).abs() < 1e-12);
        assert!(r.equality.norm() < 1e-15 && r.norm.abs() < 1e-15);
        let sd = signed_distance(&veh.posed(&Pose2::identity()).polygon, wall.polygon(), &SdConfig::default()).unwrap();
        assert!((sd.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_shape_duals() {
        let veh = VehiclePrimitives::new(ConvexPolygon::rectangle(-0.6, -0.18, 0.6, 0.18).unwrap());
        let r =
            dual_shape_residuals(&Pose2::new(3.0, 1.0, 0.4), &veh, &unit_square(), &[0.0; 4], &[0.0; 4], 0.0).unwrap();
        assert_eq!((r.equality.x, r.equality.y, r.norm_reported), (0.0, 0.0, -1.0));
    }

    #[test]
    fn weak_duality_and_cone_initialisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let cfg = SdConfig::default();
        for _ in 0..500 {
            let (nv, no) = (rng.gen_range(3..7), rng.gen_range(3..9));
            let veh = VehiclePrimitives::new(random_convex_polygon(&mut rng, nv, 0.6));
            let obs = PrimitiveObstacle::new(random_convex_polygon(&mut rng, no, 1.0));
            let pose = Pose2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.1..3.1));
            let sd = signed_distance(&veh.posed(&pose).polygon, obs.polygon(), &cfg).unwrap();

            let (mu, lambda) = init_shape_duals(&obs, &veh, &pose, &sd);
            let r = dual_shape_residuals(&pose, &veh, &obs, &mu, &lambda, 0.0).unwrap();
            assert!(r.equality.norm() < 1e-9 && r.norm.abs() < 1e-9);
            assert!((-r.inequality - sd.value).abs() < 1e-8, "{} vs {}", -r.inequality, sd.value);

            // random feasible duals: pick a direction, decompose on both cones
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let w = Vec2::new(t.cos(), t.sin());
            let normals: Vec<Vec2> = obs.halfspaces().iter().map(|h| h.normal).collect();
            let (vn, _) = vehicle_halfspaces(&veh, &pose);
            let mu = cone_weights(&normals, w);
            let lambda = cone_weights(&vn, -w);
            let r = dual_shape_residuals(&pose, &veh, &obs, &mu, &lambda, 0.0).unwrap();
            assert!(r.equality.norm() < 1e-9);
            assert!(-r.inequality <= sd.value + 1e-8);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let h = 1e-6;
        let close = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0) < 1e-5;
        for _ in 0..50 {
            let (nv, no) = (rng.gen_range(3..7), rng.gen_range(3..9));
            let veh = VehiclePrimitives::new(random_convex_polygon(&mut rng, nv, 0.6));
            let obs = PrimitiveObstacle::new(random_convex_polygon(&mut rng, no, 1.0));
            let q = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.1..3.1)];
            let mu: Vec<f64> = (0..no).map(|_| rng.gen_range(0.0..1.0)).collect();
            let lambda: Vec<f64> = (0..nv).map(|_| rng.gen_range(0.0..1.0)).collect();
            let eval = |q: [f64; 3], mu: &[f64], lambda: &[f64]| {
                dual_shape_residuals(&Pose2::new(q[0], q[1], q[2]), &veh, &obs, mu, lambda, 0.1).unwrap()
            };
            let r = eval(q, &mu, &lambda);
            for k in 0..3 {
                let (mut qp, mut qm) = (q, q);
                qp[k] += h;
                qm[k] -= h;
                let (a, b) = (eval(qp, &mu, &lambda), eval(qm, &mu, &lambda));
                assert!(close((a.inequality - b.inequality) / (2.0 * h), r.d_inequality_dpose[k]));
                let fd = (a.equality - b.equality) / (2.0 * h);
                assert!(close(fd.x, r.d_equality_dpose[(0, k)]) && close(fd.y, r.d_equality_dpose[(1, k)]));
            }
            for i in 0..no {
                let (mut mp, mut mm) = (mu.clone(), mu.clone());
                mp[i] += h;
                mm[i] -= h;
                let (a, b) = (eval(q, &mp, &lambda), eval(q, &mm, &lambda));
                assert!(close((a.inequality - b.inequality) / (2.0 * h), r.d_inequality_dmu[i]));
                assert!(close((a.norm - b.norm) / (2.0 * h), r.d_norm_dmu[i]));
                let fd = (a.equality - b.equality) / (2.0 * h);
                assert!((fd - r.d_equality_dmu[i]).norm() < 1e-6);
            }
            for j in 0..nv {
                let (mut lp, mut lm) = (lambda.clone(), lambda.clone());
                lp[j] += h;
                lm[j] -= h;
                let (a, b) = (eval(q, &mu, &lp), eval(q, &mu, &lm));
                assert!(close((a.inequality - b.inequality) / (2.0 * h), r.d_inequality_dlambda[j]));
                let fd = (a.equality - b.equality) / (2.0 * h);
                assert!((fd - r.d_equality_dlambda[j]).norm() < 1e-6);
            }
            let p = Point2::new(q[0], q[1]);
            let rp = dual_point_residuals(p, &obs, &mu, 0.1).unwrap();
            for k in 0..2 {
                let mut e = Vec2::zeros();
                e[k] = h;
                let fd = (dual_point_residuals(p + e, &obs, &mu, 0.1).unwrap().inequality
                    - dual_point_residuals(p - e, &obs, &mu, 0.1).unwrap().inequality)
                    / (2.0 * h);
                assert!(close(fd, rp.d_inequality_dp[k]));
            }
        }
    }

    #[test]
    fn table_counts() {
        let faces = [6, 6, 6];
        let point = dual_counts(61, &faces, 5, DualMode::Point);
        assert_eq!((point.obstacle_constraints(), point.dual_variables), (366, 1098));
        let shape = dual_counts(61, &faces, 5, DualMode::Shape);
        assert_eq!((shape.linear_equalities, shape.obstacle_constraints(), shape.dual_variables), (366, 732, 2013));
        let tiny = dual_counts(1, &[3], 3, DualMode::Point);
        assert_eq!((tiny.obstacle_constraints(), tiny.dual_variables), (2, 3));
    }
}
