//! Three-degree-of-freedom surface vessel: `η̇ = R(ψ)ν`,
//! `Mν̇ = −(C(ν) + D(ν))ν + τ`, and its flat parametrization with the pose as
//! flat output.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geom::{rotation, wrap_angle, ConvexPolygon, Point2};

/// Derivatives ordered (x, y, ψ, ẋ, ẏ, ψ̇, ẍ, ÿ, ψ̈).
pub type FlatJacobian = SMatrix<f64, 3, 9>;

#[derive(Debug, Clone, PartialEq)]
pub struct VesselParams {
    /// Rigid-body plus added mass, symmetric positive definite.
    pub inertia: Matrix3<f64>,
    pub linear_damping: Matrix3<f64>,
    /// Per-axis quadratic drag: `D(ν)ν` gains `d_i·|ν_i|·ν_i`.
    pub nonlinear_damping: Vector3<f64>,
    pub tau_u_max: f64,
    pub tau_r_max: f64,
    pub tau_u_rate_max: f64,
    pub tau_r_rate_max: f64,
    pub length: f64,
    pub width: f64,
    /// Body frame: x forward, y to starboard.
    pub footprint: ConvexPolygon,
}

impl Default for VesselParams {
    /// A 1.2 m model ship; hydrodynamic coefficients follow published values
    /// for a vessel of that scale.
    fn default() -> Self {
        let footprint = ConvexPolygon::from_xy(&[(-0.6, -0.18), (0.3, -0.18), (0.6, 0.0), (0.3, 0.18), (-0.6, 0.18)])
            .expect("static footprint");
        Self {
            inertia: Matrix3::from_diagonal(&Vector3::new(25.8, 33.8, 2.76)),
            linear_damping: Matrix3::from_diagonal(&Vector3::new(0.72, 0.8896, 1.9)),
            nonlinear_damping: Vector3::new(1.33, 36.28, 0.75),
            tau_u_max: 2.0,
            tau_r_max: 1.0,
            tau_u_rate_max: 1.0,
            tau_r_rate_max: 1.0,
            length: 1.2,
            width: 0.36,
            footprint,
        }
    }
}

impl VesselParams {
    pub fn validate(&self) -> Result<()> {
        let m = &self.inertia;
        if (m - m.transpose()).amax() > 1e-12 {
            return Err(Error::Config("inertia matrix must be symmetric".into()));
        }
        if m.cholesky().is_none() {
            return Err(Error::Config("inertia matrix must be positive definite".into()));
        }
        for (name, v) in [
            ("tau_u_max", self.tau_u_max),
            ("tau_r_max", self.tau_r_max),
            ("tau_u_rate_max", self.tau_u_rate_max),
            ("tau_r_rate_max", self.tau_r_rate_max),
            ("length", self.length),
            ("width", self.width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Half of the vessel width, the inflation radius of the initial-guess grid.
    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }
}

/// Pose (north, east, heading) and body velocity (surge, sway, yaw rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselState {
    pub eta: Vector3<f64>,
    pub nu: Vector3<f64>,
}

impl VesselState {
    pub fn position(&self) -> Point2 {
        Point2::new(self.eta.x, self.eta.y)
    }
}

/// Flat output (the pose) with two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    pub z: Vector3<f64>,
    pub dz: Vector3<f64>,
    pub ddz: Vector3<f64>,
}

/// `C(ν)ν` for the skew-symmetric Coriolis matrix of a general symmetric
/// inertia matrix.
fn coriolis_times_nu(m: &Matrix3<f64>, nu: &Vector3<f64>) -> Vector3<f64> {
    let alpha = m.row(1).dot(&nu.transpose());
    let beta = m.row(0).dot(&nu.transpose());
    Vector3::new(-alpha * nu.z, beta * nu.z, alpha * nu.x - beta * nu.y)
}

fn coriolis_jacobian(m: &Matrix3<f64>, nu: &Vector3<f64>) -> Matrix3<f64> {
    let (u, v, r) = (nu.x, nu.y, nu.z);
    let alpha = m.row(1).dot(&nu.transpose());
    let beta = m.row(0).dot(&nu.transpose());
    let m0 = m.row(0).transpose();
    let m1 = m.row(1).transpose();
    let mut j = Matrix3::zeros();
    j.set_row(0, &(-(m1 * r) - Vector3::z() * alpha).transpose());
    j.set_row(1, &(m0 * r + Vector3::z() * beta).transpose());
    j.set_row(2, &(m1 * u + Vector3::x() * alpha - m0 * v - Vector3::y() * beta).transpose());
    j
}

fn damping_times_nu(p: &VesselParams, nu: &Vector3<f64>) -> Vector3<f64> {
    p.linear_damping * nu + p.nonlinear_damping.component_mul(&nu.abs()).component_mul(nu)
}

fn damping_jacobian(p: &VesselParams, nu: &Vector3<f64>) -> Matrix3<f64> {
    p.linear_damping + Matrix3::from_diagonal(&(p.nonlinear_damping.component_mul(&nu.abs()) * 2.0))
}

/// Power of the Coriolis forces, `νᵀC(ν)ν`; zero up to rounding.
pub fn coriolis_power(p: &VesselParams, nu: &Vector3<f64>) -> f64 {
    nu.dot(&coriolis_times_nu(&p.inertia, nu))
}

/// State derivative `(η̇, ν̇)`.
pub fn dynamics(state: &VesselState, tau: &Vector3<f64>, p: &VesselParams) -> (Vector3<f64>, Vector3<f64>) {
    let r = rotation(state.eta.z);
    let planar = r * state.nu.xy();
    let eta_dot = Vector3::new(planar.x, planar.y, state.nu.z);
    let rhs = tau - coriolis_times_nu(&p.inertia, &state.nu) - damping_times_nu(p, &state.nu);
    let nu_dot = p.inertia.cholesky().expect("validated inertia").solve(&rhs);
    (eta_dot, nu_dot)
}

/// `η = z`, `ν = R(ψ)ᵀż`.
pub fn flat_state(z: &Vector3<f64>, dz: &Vector3<f64>) -> VesselState {
    let rt = rotation(z.z).transpose();
    let uv = rt * dz.xy();
    VesselState { eta: Vector3::new(z.x, z.y, wrap_angle(z.z)), nu: Vector3::new(uv.x, uv.y, dz.z) }
}

/// Body velocity and acceleration along a flat trajectory.
fn body_kinematics(f: &FlatOutput) -> (Vector3<f64>, Vector3<f64>) {
    let (s, c) = f.z.z.sin_cos();
    let u = c * f.dz.x + s * f.dz.y;
    let v = -s * f.dz.x + c * f.dz.y;
    let r = f.dz.z;
    let au = c * f.ddz.x + s * f.ddz.y;
    let av = -s * f.ddz.x + c * f.ddz.y;
    (Vector3::new(u, v, r), Vector3::new(au + r * v, av - r * u, f.ddz.z))
}

/// Generalized forces realizing a flat trajectory exactly.
pub fn flat_input(f: &FlatOutput, p: &VesselParams) -> Vector3<f64> {
    let (nu, nu_dot) = body_kinematics(f);
    p.inertia * nu_dot + coriolis_times_nu(&p.inertia, &nu) + damping_times_nu(p, &nu)
}

/// [`flat_input`] and its Jacobian with respect to (z, ż, z̈).
pub fn flat_input_with_jacobian(f: &FlatOutput, p: &VesselParams) -> (Vector3<f64>, FlatJacobian) {
    let (s, c) = f.z.z.sin_cos();
    let (nu, nu_dot) = body_kinematics(f);
    let (u, v, r) = (nu.x, nu.y, nu.z);
    let au = c * f.ddz.x + s * f.ddz.y;
    let av = -s * f.ddz.x + c * f.ddz.y;

    // columns: x, y, ψ, ẋ, ẏ, ψ̇, ẍ, ÿ, ψ̈
    let mut dnu = SMatrix::<f64, 3, 9>::zeros();
    dnu.set_column(2, &Vector3::new(v, -u, 0.0));
    dnu.set_column(3, &Vector3::new(c, -s, 0.0));
    dnu.set_column(4, &Vector3::new(s, c, 0.0));
    dnu.set_column(5, &Vector3::new(0.0, 0.0, 1.0));

    let mut dnu_dot = SMatrix::<f64, 3, 9>::zeros();
    dnu_dot.set_column(2, &Vector3::new(av - r * u, -au - r * v, 0.0));
    dnu_dot.set_column(3, &Vector3::new(-r * s, -r * c, 0.0));
    dnu_dot.set_column(4, &Vector3::new(r * c, -r * s, 0.0));
    dnu_dot.set_column(5, &Vector3::new(v, -u, 0.0));
    dnu_dot.set_column(6, &Vector3::new(c, -s, 0.0));
    dnu_dot.set_column(7, &Vector3::new(s, c, 0.0));
    dnu_dot.set_column(8, &Vector3::new(0.0, 0.0, 1.0));

    let tau = p.inertia * nu_dot + coriolis_times_nu(&p.inertia, &nu) + damping_times_nu(p, &nu);
    let jac = p.inertia * dnu_dot + (coriolis_jacobian(&p.inertia, &nu) + damping_jacobian(p, &nu)) * dnu;
    (tau, jac)
}

/// `(τ_u/τ_u,max)² + (τ_r/τ_r,max)²`.
pub fn running_cost(tau: &Vector3<f64>, p: &VesselParams) -> f64 {
    (tau.x / p.tau_u_max).powi(2) + (tau.z / p.tau_r_max).powi(2)
}
