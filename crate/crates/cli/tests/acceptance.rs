//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 6 (distributivity of the Minkowski difference over
//! intersection) is false in general and is expected to print FAIL with its
//! mismatch counts. Any other failure makes the suite exit nonzero.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use colav::bound::{lower_bound_point, lower_bound_shape, lse, LseConfig, PrimitiveObstacle, VehiclePrimitives};
use colav::formulations::{build_provider, lse_term_count, Body, FormulationKind, Kind, Mode};
use colav::geom::{HalfSpace, Point2, Pose2, Vec2};
use colav::harness::{integrate, run_matrix, Matrix, MatrixOptions, ReplayOptions};
use colav::nlp::problem::assemble;
use colav::nlp::solver::NlpFunctions;
use colav::scenario::Scenario;
use colav::sdist::{signed_distance, PointShape, SdConfig};
use colav::vessel::{flat_input, flat_input_with_jacobian, FlatOutput, VesselParams, VesselState};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lower_bound_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut exceptions) = (f64::NEG_INFINITY, 0);
    let n = 10_000;
    for i in 0..n {
        let k = rng.gen_range(3..9);
        let obs_poly = {
            let r = rng.gen_range(0.5..3.0);
            oracle::random_polygon(&mut rng, k, r)
        };
        let obs = PrimitiveObstacle::new(obs_poly.clone());
        let (x, y, psi) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.2..3.2));
        let (bound, truth) = if i % 2 == 0 {
            let p = Point2::new(x, y);
            (lower_bound_point(p, &obs).value, oracle::point_sd(p, obs_poly.vertices()))
        } else {
            let l = rng.gen_range(3..7);
            let body = {
                let r = rng.gen_range(0.3..1.5);
                oracle::random_polygon(&mut rng, l, r)
            };
            let vehicle = VehiclePrimitives::new(body.clone());
            let pose = Pose2::new(x, y, psi);
            (
                lower_bound_shape(&vehicle, &pose, &obs).value,
                oracle::polygon_sd(&oracle::placed(&body, x, y, psi), obs_poly.vertices()),
            )
        };
        worst = worst.max(bound - truth);
        if bound > truth + 1e-9 {
            exceptions += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exceptions == 0 && secs < 10.0,
        format!("{n} instances, {exceptions} exceptions, max(bound - sd) {worst:.3e}, {secs:.2} s"),
    )
}

fn lse_bracketing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    let n = 10_000;
    for _ in 0..n {
        let m = rng.gen_range(1..=10);
        let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let alpha = [1.0, 10.0, 100.0][rng.gen_range(0..3)];
        let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = (m as f64).ln() / alpha;
        let up = lse(&d, &LseConfig::new(alpha).unwrap()).unwrap().0;
        let down = lse(&d, &LseConfig::new(-alpha).unwrap()).unwrap().0;
        let tol = 1e-12 * (1.0 + max.abs().max(min.abs()));
        if !(max - tol <= up && up <= max + slack + tol) || !(min - slack - tol <= down && down <= min + tol) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{n} vectors with alpha in (1, 10, 100) and its mirror, {failures} failures"))
}

fn constraint_counts(s: &Scenario) -> Outcome {
    let vertices: usize = s.obstacles.iter().map(|o| o.polygon.len()).sum();
    let mut lines =
        vec![format!("S {} M {} sum K {} L {}", s.samples, s.obstacles.len(), vertices, s.vessel.footprint.len())];
    let mut ok = s.samples == 61 && s.obstacles.len() == 3 && vertices == 18 && s.vessel.footprint.len() == 5;
    for f in FormulationKind::table_matrix() {
        let c = assemble(s, Some(f)).unwrap().obstacle_counts();
        let expected = match (f.kind, f.mode, f.body) {
            (Kind::Dual, _, Body::Point) => (366, 1098),
            (Kind::Dual, _, Body::Shape) => (732, 2013),
            (_, Mode::Union, _) => (61, 0),
            (_, Mode::Separate, _) => (183, 0),
        };
        ok &= (c.obstacle_constraints, c.extra_variables) == expected;
        lines.push(format!("{} {}/{}", f.id(), c.obstacle_constraints, c.extra_variables));
    }
    outcome(ok, lines.join(", "))
}

fn relative_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1.0)
}

fn gradient_suite(s: &Scenario) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);

    let (lo, hi) = s
        .obstacles
        .iter()
        .flat_map(|o| o.polygon.vertices().to_vec())
        .fold((Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY)), |(lo, hi), v| {
            (lo.inf(&v), hi.sup(&v))
        });
    for f in FormulationKind::table_matrix() {
        let provider = build_provider(f, &s.obstacles, &s.vessel.footprint, &s.settings).unwrap();
        let e = provider.extra_per_sample();
        for _ in 0..50 {
            let pose = Pose2::new(
                rng.gen_range(lo.x - 2.0..hi.x + 2.0),
                rng.gen_range(lo.y - 2.0..hi.y + 2.0),
                rng.gen_range(-3.1..3.1),
            );
            let mut extra = provider.initial_extra(&pose);
            for v in extra.iter_mut() {
                *v = (*v + rng.gen_range(0.0..0.5)).max(0.0);
            }
            let rows = provider.evaluate_sample(&pose, &extra);
            let n_in = 3 + e;
            let shifted = |j: usize, d: f64| {
                let mut q = [pose.position.x, pose.position.y, pose.heading];
                let mut x = extra.clone();
                if j < 3 {
                    q[j] += d;
                } else {
                    x[j - 3] += d;
                }
                provider.evaluate_sample(&Pose2::new(q[0], q[1], q[2]), &x)
            };
            let stencils: Vec<_> = (0..n_in).map(|j| (shifted(j, h), shifted(j, -h))).collect();
            for (r, row) in rows.iter().enumerate() {
                if row.nonsmooth || stencils.iter().any(|(p, m)| p[r].nonsmooth || m[r].nonsmooth) {
                    skipped += 1;
                    continue;
                }
                checked += 1;
                for (j, (p, m)) in stencils.iter().enumerate() {
                    let fd = (p[r].value - m[r].value) / (2.0 * h);
                    let an = if j < 3 {
                        row.grad_pose[j]
                    } else {
                        row.grad_extra.iter().filter(|(i, _)| *i == j - 3).map(|(_, v)| v).sum()
                    };
                    worst = worst.max(relative_error(fd, an));
                }
            }
        }
    }

    let free = assemble(s, None).unwrap();
    let guess = colav::nlp::init::initial_guess(s).unwrap();
    let x0 = free.decision_vector(&guess);
    let cost = |x: &[f64]| free.residuals(x).values.iter().map(|v| v * v).sum::<f64>();
    let mut cost_worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        let r = free.residuals(&x);
        let mut grad = vec![0.0; x.len()];
        for (ri, row) in r.values.iter().zip(&r.jacobian) {
            for &(j, v) in row {
                grad[j] += 2.0 * ri * v;
            }
        }
        for j in 0..x.len() {
            let step = 1e-6 * (1.0 + x[j].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += step;
            xm[j] -= step;
            cost_worst = cost_worst.max(relative_error((cost(&xp) - cost(&xm)) / (2.0 * step), grad[j]));
        }
    }

    let params = s.vessel.clone();
    let mut flat_worst: f64 = 0.0;
    for _ in 0..50 {
        let q: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let make = |q: &[f64]| FlatOutput {
            z: Vector3::new(q[0], q[1], q[2]),
            dz: Vector3::new(q[3], q[4], q[5]),
            ddz: Vector3::new(q[6], q[7], q[8]),
        };
        let (_, jac) = flat_input_with_jacobian(&make(&q), &params);
        for j in 0..9 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[j] += h;
            qm[j] -= h;
            let fd = (flat_input(&make(&qp), &params) - flat_input(&make(&qm), &params)) / (2.0 * h);
            for i in 0..3 {
                flat_worst = flat_worst.max(relative_error(fd[i], jac[(i, j)]));
            }
        }
    }

    let pass = worst < 1e-5 && cost_worst < 1e-5 && flat_worst < 1e-5;
    outcome(
        pass,
        format!(
            "constraint rows: {checked} checked, {skipped} flagged nonsmooth, max rel err {worst:.2e}; cost gradient {cost_worst:.2e}; flat input {flat_worst:.2e}"
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SdConfig::default();
    let (mut disjoint, mut overlapping) = (0, 0);
    let mut worst: f64 = 0.0;
    while disjoint < 200 || overlapping < 200 {
        let (na, nb) = (rng.gen_range(3..9), rng.gen_range(3..9));
        let a = {
            let r = rng.gen_range(0.3..2.0);
            oracle::random_polygon(&mut rng, na, r)
        };
        let b = {
            let r = rng.gen_range(0.3..2.0);
            oracle::random_polygon(&mut rng, nb, r)
        };
        let b = b.translated(Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
        let truth = oracle::polygon_sd(a.vertices(), b.vertices());
        let bucket = if truth > 0.0 { &mut disjoint } else { &mut overlapping };
        if *bucket >= 200 {
            continue;
        }
        *bucket += 1;
        let value = signed_distance(&a, &b, &cfg).unwrap().value;
        worst = worst.max((value - truth).abs());
    }
    let point = (0..200)
        .map(|_| {
            let a = oracle::random_polygon(&mut rng, 6, 1.0);
            let p = Point2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            (signed_distance(&PointShape(p), &a, &cfg).unwrap().value - oracle::point_sd(p, a.vertices())).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-8 && point <= 1e-8,
        format!(
            "200 disjoint + 200 overlapping pairs, max |gjk/epa - oracle| {worst:.2e}; 200 point queries {point:.2e}"
        ),
    )
}

/// Sutherland-Hodgman clip by `{x : n·x ≤ offset}`.
fn clip(pts: &[Point2], h: &HalfSpace) -> Vec<Point2> {
    let mut out = Vec::new();
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        let (dp, dq) = (h.normal.dot(&p) - h.offset, h.normal.dot(&q) - h.offset);
        if dp <= 0.0 {
            out.push(p);
        }
        if dp * dq < 0.0 {
            out.push(p + (q - p) * (dp / (dp - dq)));
        }
    }
    out
}

fn minkowski_distributivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut mismatches, mut instances_with) = (0usize, 0usize);
    let mut lhs_only = 0usize;
    for _ in 0..20 {
        let mut half = || {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            HalfSpace::new(Vec2::new(t.cos(), t.sin()), rng.gen_range(-1.0..1.0)).unwrap()
        };
        let (a, b) = (half(), half());
        let n = rng.gen_range(3..8);
        let c = oracle::random_polygon(&mut rng, n, 1.0);
        let mut here = 0;
        for i in 0..200 {
            for j in 0..200 {
                let y = Vec2::new(-4.0 + 8.0 * i as f64 / 199.0, -4.0 + 8.0 * j as f64 / 199.0);
                let moved: Vec<Point2> = c.vertices().iter().map(|v| v + y).collect();
                // y ∈ X − C  ⇔  (C + y) ∩ X ≠ ∅
                let lhs = !clip(&clip(&moved, &a), &b).is_empty();
                let rhs = !clip(&moved, &a).is_empty() && !clip(&moved, &b).is_empty();
                if lhs != rhs {
                    here += 1;
                    lhs_only += usize::from(lhs);
                }
            }
        }
        mismatches += here;
        instances_with += usize::from(here > 0);
    }
    outcome(
        mismatches == 0,
        format!(
            "20 instances on a 200x200 grid: {mismatches} mismatches in {instances_with} instances ({lhs_only} in the left side only); only (A∩B)−C ⊆ (A−C)∩(B−C) holds"
        ),
    )
}

fn end_to_end(s: &Scenario, matrix: &Matrix, secs: f64) -> Outcome {
    let mut ok = secs < 300.0;
    let mut parts = Vec::new();
    for run in &matrix.runs {
        let r = &run.report;
        let f = run.formulation;
        let limit = if f.kind == Kind::CsgBoundLse {
            (lse_term_count(&s.obstacles, &s.vessel.footprint, f.body) as f64).ln() / s.settings.alpha
        } else {
            1e-6
        };
        let good = r.converged() && r.audit <= limit && r.boundary_error <= 1e-6;
        ok &= good;
        parts.push(format!(
            "{} {} cost {:.4} audit {:.2e}/{:.2e} boundary {:.1e}{}",
            r.id,
            r.status.map_or("failed".to_string(), |st| format!("{st:?}")),
            r.cost,
            r.audit,
            limit,
            r.boundary_error,
            if good { "" } else { " <- FAIL" }
        ));
    }
    let cost = |k: Kind| {
        matrix
            .runs
            .iter()
            .find(|r| r.formulation == FormulationKind { kind: k, mode: Mode::Separate, body: Body::Point })
            .map_or(f64::NAN, |r| r.report.cost)
    };
    let (ell, hard) = (cost(Kind::Ellipsoidal), cost(Kind::CsgBoundHard));
    ok &= ell >= hard;
    parts.push(format!("cost ellipsoidal {ell:.4} >= csg-bound-hard {hard:.4}; wall time {secs:.1} s"));
    outcome(ok, parts.join("\n      "))
}

fn flatness_round_trip(s: &Scenario, matrix: &Matrix) -> Outcome {
    let replay = matrix.runs.iter().map(|r| r.report.replay_error).fold(0.0, f64::max);
    let all_finite = matrix.runs.iter().all(|r| r.report.replay_error.is_finite());

    // smooth flat outputs at harbour speeds under their exact input
    let p: VesselParams = s.vessel.clone();
    let options = ReplayOptions { rtol: 1e-12, atol: 1e-12, output_step: 0.1, ..Default::default() };
    let mut analytic: f64 = 0.0;
    for (a, w) in [(0.5, 0.1), (0.2, 0.1), (0.2, 0.3)] {
        let flat = move |t: f64| FlatOutput {
            z: Vector3::new(a * t + (w * t).sin(), 0.3 * t - (w * t).cos(), 0.2 * (w * t).sin()),
            dz: Vector3::new(a + w * (w * t).cos(), 0.3 + w * (w * t).sin(), 0.2 * w * (w * t).cos()),
            ddz: Vector3::new(-w * w * (w * t).sin(), w * w * (w * t).cos(), -0.2 * w * w * (w * t).sin()),
        };
        let f0 = flat(0.0);
        let start = colav::vessel::flat_state(&f0.z, &f0.dz);
        let states = integrate(&p, &start, |t| flat_input(&flat(t), &p), (0.0, 60.0), &options).unwrap();
        for (t, st) in states {
            let z = flat(t).z;
            analytic = analytic.max((st.eta.x - z.x).hypot(st.eta.y - z.y));
        }
    }
    let rest = VesselState { eta: Vector3::new(3.0, -2.0, 0.4), nu: Vector3::zeros() };
    let rest_error = integrate(&p, &rest, |_| Vector3::zeros(), (0.0, 60.0), &options)
        .unwrap()
        .iter()
        .map(|(_, st)| (st.eta - rest.eta).norm())
        .fold(0.0, f64::max);
    outcome(
        all_finite && replay <= 0.05 && analytic < 1e-6 && rest_error == 0.0,
        format!("benchmark replay max {replay:.3e} m; analytic round trip {analytic:.2e} m; rest {rest_error:.1e} m"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_colav"))
            .args(["bench", "kiel-harbor", "--all", "--seed", "7", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        (status.code(), out)
    };
    let (c1, a) = run("a");
    let (c2, b) = run("b");
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.to_string_lossy().into_owned())
        .collect();
    let same = differing.is_empty() && files.iter().any(|f| f == "report.md");
    outcome(
        same && c1 == c2,
        format!(
            "{} output files compared, {} differ {:?}; exit codes {:?} {:?}",
            files.len(),
            differing.len(),
            differing,
            c1,
            c2
        ),
    )
}

fn main() {
    let scenario =
        Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/kiel-harbor.json")).unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "lower-bound soundness", lower_bound_soundness()),
        (2, "LSE bracketing", lse_bracketing()),
        (3, "constraint and variable counts", constraint_counts(&scenario)),
        (4, "gradients against finite differences", gradient_suite(&scenario)),
        (5, "GJK/EPA against the exhaustive oracle", oracle_equivalence()),
        (6, "Minkowski difference distributes over intersection", minkowski_distributivity()),
    ];
    let start = Instant::now();
    let matrix = run_matrix(&scenario, &FormulationKind::table_matrix(), &MatrixOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    results.push((7, "end-to-end harbor benchmark", end_to_end(&scenario, &matrix, secs)));
    results.push((8, "flatness round trip", flatness_round_trip(&scenario, &matrix)));
    results.push((9, "deterministic reports", determinism()));

    let known_red = [6];
    let mut unexpected = 0;
    for (id, name, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} [{id}] {name}: {}", o.detail);
        if !o.pass && !known_red.contains(id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
