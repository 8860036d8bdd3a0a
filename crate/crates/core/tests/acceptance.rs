//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use burgers_fem::control::ControlParams;
use burgers_fem::fem::{
    assemble_stiffness, interpolate, quadrature, trilinear_B, FeField, SmoothField, ALL_TAGS,
};
use burgers_fem::integrator::{
    fit_decay_rate, predicted_alpha, run_with_coefficient, EvolutionConfig, NonlinearSolver, Operators,
    TrajectoryRecord,
};
use burgers_fem::mesh::{build_unit_square_mesh, DirichletRegion, Mesh, Segment};
use burgers_fem::sparse::SparseMatrix;
use burgers_fem::steady::{manufacture_forcing, solve_steady, SteadyOperator, SteadySpec};
use burgers_fem::study::{
    compute_rates, run_example1, run_example2, ExampleArtifacts, ExampleOptions, ProblemConfig, StudyConfig,
};

/// Reference errors at h = 1/4 .. 1/32 for the state in L2 and H1.
const REF_L2: [f64; 4] = [0.0214813, 0.0059996, 0.00157007, 0.00041675];
const REF_H1: [f64; 4] = [0.153906, 0.0777889, 0.0383679, 0.0185611];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn state_convergence(ex1: &ExampleArtifacts) -> Outcome {
    let table = ex1.rates.as_ref().expect("study configured");
    let rate_l2: Vec<f64> = table.state.iter().filter_map(|r| r.rate_l2).collect();
    let rate_h1: Vec<f64> = table.state.iter().filter_map(|r| r.rate_h1).collect();
    let finest = |r: &[f64]| r[r.len() - 2..].to_vec();
    let rates_ok = finest(&rate_l2).iter().all(|&r| r >= 1.8) && finest(&rate_h1).iter().all(|&r| r >= 0.95);
    let within = |ours: f64, theirs: f64| ours <= 2.0 * theirs && ours >= 0.5 * theirs;
    let ratios: Vec<f64> = table
        .state
        .iter()
        .zip(REF_L2.iter().zip(&REF_H1))
        .flat_map(|(r, (l2, h1))| [r.error_l2 / l2, r.error_h1 / h1])
        .collect();
    let raw_ok = table.state.len() == 4
        && table
            .state
            .iter()
            .zip(REF_L2.iter().zip(&REF_H1))
            .all(|(r, (l2, h1))| within(r.error_l2, *l2) && within(r.error_h1, *h1));
    outcome(
        rates_ok && raw_ok,
        format!(
            "L2 rates {}, H1 rates {}, error / reference ratios {}",
            fmt_list(&rate_l2),
            fmt_list(&rate_h1),
            fmt_list(&ratios)
        ),
    )
}

fn control_convergence(ex1: &ExampleArtifacts) -> Outcome {
    let table = ex1.rates.as_ref().expect("study configured");
    let rates: Vec<f64> = table.control.iter().filter_map(|r| r.rate_ctrl).collect();
    let errors: Vec<f64> = table.control.iter().map(|r| r.error_ctrl).collect();
    outcome(
        rates.len() == 3 && rates.iter().all(|&r| r >= 1.5),
        format!("control errors {}, rates {}", fmt_list(&errors), fmt_list(&rates)),
    )
}

fn exponential_stabilization(ex1: &ExampleArtifacts) -> Outcome {
    let rec = &ex1.controlled.record;
    let alpha = predicted_alpha(0.1, 1.0, 2.0);
    let w0 = rec.l2_norms[0];
    let worst = rec
        .times
        .iter()
        .zip(&rec.l2_norms)
        .filter(|(t, _)| **t <= 5.0 + 1e-12)
        .map(|(t, n)| n / (w0 * (-alpha * t).exp()))
        .fold(0.0, f64::max);
    let monotone = rec.lyapunov[1..].windows(2).all(|p| p[1] <= p[0]);
    let controlled = *rec.l2_norms.last().expect("nonempty");
    let uncontrolled = *ex1.uncontrolled.record.l2_norms.last().expect("nonempty");
    let factor = uncontrolled / controlled;
    outcome(
        worst <= 1.05 && monotone && factor >= 5.0,
        format!(
            "max ||W^n|| / envelope = {worst:.4}, V nonincreasing: {monotone}, \
             final norms controlled {controlled:.3e} uncontrolled {uncontrolled:.3e} (factor {factor:.1})"
        ),
    )
}

fn partial_boundary(ex2: &ExampleArtifacts) -> Outcome {
    let rec = &ex2.controlled.record;
    let at5 = rec.times.iter().position(|&t| (t - 5.0).abs() < 1e-9).expect("run reaches t = 5");
    let (l2, ctrl) = (rec.l2_norms[at5], rec.control_norms[at5]);
    let dirichlet = ex2.controlled.max_dirichlet_abs;
    outcome(
        l2 < 1e-2 && ctrl < 1e-2 && dirichlet == 0.0,
        format!("at t = 5: ||W|| = {l2:.3e}, control norm = {ctrl:.3e}, max |W| on Dirichlet nodes = {dirichlet:e}"),
    )
}

/// `||u_h - u||_L2` with the interior quadrature rule.
fn l2_error(uh: &FeField, exact: &SmoothField) -> f64 {
    let mesh = uh.mesh();
    let rule = &quadrature().interior;
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let p = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
            ];
            let e = uh.eval_in(t, *b) - exact.eval(x);
            total += 2.0 * area * w * e * e;
        }
    }
    total.sqrt()
}

fn steady_recovery() -> Outcome {
    let levels = [4usize, 8, 16, 32];
    let solve = |u: &SmoothField, mean: f64, n: usize| {
        let mesh = Arc::new(build_unit_square_mesh(n).expect("valid n"));
        let uh = solve_steady(&mesh, &SteadySpec::manufactured_solve(u, 0.1, mean), 1e-10).expect("steady solve");
        l2_error(&uh, u)
    };

    let target = SmoothField::affine(0.0, -0.2, 0.0);
    let forcing = manufacture_forcing(&target, 0.1);
    let forcing_ok = [[0.3, 0.9], [1.0, 0.0]].iter().all(|&x| (forcing(x) - 0.04 * x[0]).abs() < 1e-15);
    let target_errors: Vec<f64> = levels.iter().map(|&n| solve(&target, -0.1, n)).collect();

    let smooth = SmoothField::new(
        |x| 0.1 * (PI * x[0]).cos() * (PI * x[1]).cos(),
        |x| {
            [
                -0.1 * PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                -0.1 * PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
            ]
        },
        |x| -0.2 * PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos(),
    );
    let smooth_errors: Vec<f64> = levels.iter().map(|&n| solve(&smooth, 0.0, n)).collect();
    let hs: Vec<f64> = levels.iter().map(|&n| 1.0 / n as f64).collect();
    let smooth_rates = compute_rates(&smooth_errors, &hs).expect("positive errors");

    let linear = [
        (SmoothField::affine(0.0, 1.0, 1.0), 1.0),
        (SmoothField::affine(0.0, -0.2, 0.0), -0.1),
        (SmoothField::affine(-0.5, 0.25, 0.4), -0.175),
    ];
    let linear_errors: Vec<f64> = linear
        .iter()
        .flat_map(|(u, mean)| [3usize, 7].map(|n| solve(u, *mean, n)))
        .collect();

    let target_ok = target_errors.iter().all(|&e| e <= 1e-9);
    let linear_ok = linear_errors.iter().all(|&e| e <= 1e-9);
    let slope = fitted_order(&smooth_errors, &hs);
    let rate_ok = slope >= 1.9;
    outcome(
        forcing_ok && target_ok && linear_ok && rate_ok,
        format!(
            "-0.2 x1 errors {} (exact recovery, so a rate is undefined); \
             smooth state errors {} pairwise rates {} fitted order {slope:.4}; max linear-state error {:.2e}",
            fmt_sci(&target_errors),
            fmt_sci(&smooth_errors),
            fmt_list(&smooth_rates),
            linear_errors.iter().fold(0.0f64, |m, &e| m.max(e))
        ),
    )
}

/// Least-squares slope of `log e` against `log h`.
fn fitted_order(errors: &[f64], hs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs.iter().zip(errors).map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn random_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> FeField {
    FeField::new(Arc::clone(mesh), (0..mesh.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("finite values")
}

/// `int_boundary f g h (n . 1) dGamma` for P1 fields, by the edge rule.
fn boundary_triple(f: &FeField, g: &FeField, h: &FeField) -> f64 {
    let mesh = f.mesh();
    let rule = &quadrature().edge;
    mesh.boundary_edges()
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            let trace = |u: &FeField, s: f64| (1.0 - s) * u.values()[a] + s * u.values()[b];
            let len = e.length(mesh);
            let sum: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(&s, w)| w * trace(f, s) * trace(g, s) * trace(h, s))
                .sum();
            len * (e.normal[0] + e.normal[1]) * sum
        })
        .sum()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn fd_mismatch(jacobian: &SparseMatrix, residual: impl Fn(&[f64]) -> Vec<f64>, at: &[f64], dir: &[f64]) -> f64 {
    let eps = 1e-6;
    let shifted = |s: f64| residual(&at.iter().zip(dir).map(|(a, d)| a + s * d).collect::<Vec<_>>());
    let (plus, minus) = (shifted(eps), shifted(-eps));
    let jd = jacobian.spmv(dir).expect("square");
    let diff: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .zip(&jd)
        .map(|((p, m), j)| (p - m) / (2.0 * eps) - j)
        .collect();
    norm2(&diff) / norm2(&jd)
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("entry").path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().expect("file").to_string_lossy().into_owned();
            (name, std::fs::read(&p).expect("readable"))
        })
        .collect()
}

fn structural_properties() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mesh = Arc::new(build_unit_square_mesh(8).expect("valid n"));

    let mut divergence_gap = 0.0f64;
    let mut product_gap = 0.0f64;
    for _ in 0..100 {
        let w = random_field(&mesh, &mut rng);
        let lhs = trilinear_B(&w, &w, &w).expect("same mesh");
        divergence_gap = divergence_gap.max((lhs - boundary_triple(&w, &w, &w) / 3.0).abs());

        let (v, z) = (random_field(&mesh, &mut rng), random_field(&mesh, &mut rng));
        let sum = trilinear_B(&v, &w, &z).unwrap() + trilinear_B(&v, &z, &w).unwrap() + trilinear_B(&w, &v, &z).unwrap();
        product_gap = product_gap.max((sum - boundary_triple(&v, &w, &z)).abs());
    }

    let kernel = [1usize, 4, 17, 64]
        .iter()
        .map(|&n| {
            let m = build_unit_square_mesh(n).expect("valid n");
            let k1 = assemble_stiffness(&m).spmv(&vec![1.0; m.num_vertices()]).expect("square");
            k1.iter().fold(0.0f64, |a, v| a.max(v.abs()))
        })
        .fold(0.0f64, f64::max);

    // Newton Jacobians: steady problem and every time-stepping configuration.
    let mut jac_worst = 0.0f64;
    let steady_forcing = manufacture_forcing(&SmoothField::affine(0.1, -0.2, 0.3), 0.1);
    let op = SteadyOperator::new(&mesh, 0.1, &steady_forcing, None).expect("operator");
    for _ in 0..5 {
        let (u, dir) = (random_field(&mesh, &mut rng), random_field(&mesh, &mut rng));
        let j = op.jacobian(&u).expect("jacobian");
        let res = |x: &[f64]| op.residual(&FeField::new(Arc::clone(&mesh), x.to_vec()).unwrap()).unwrap();
        jac_worst = jac_worst.max(fd_mismatch(&j, res, u.values(), dir.values()));
    }
    let right = DirichletRegion::Segments(vec![Segment::new(0, 1.0, 0.0, 1.0)]);
    let mixed = Arc::new(build_unit_square_mesh(8).unwrap().tag_boundary(&right).unwrap());
    let configs: Vec<(Arc<Mesh>, Option<ControlParams>)> = vec![
        (Arc::clone(&mesh), Some(ControlParams::new(0.1, 1.0, ALL_TAGS.to_vec()).unwrap())),
        (Arc::clone(&mesh), None),
        (Arc::clone(&mixed), Some(ControlParams::on_neumann(0.1, 1.0).unwrap())),
        (Arc::clone(&mixed), None),
    ];
    let mut zero_ok = true;
    for (m, control) in &configs {
        let u_inf = interpolate(|x| -0.2 * x[0], m).unwrap();
        let cfg = EvolutionConfig::new(0.01, 0.05, 0.1, control.clone()).unwrap();
        let ops = Operators::new(&u_inf, &cfg).unwrap();
        let prev = random_field(m, &mut rng);
        for _ in 0..3 {
            let (w, dir) = (random_field(m, &mut rng), random_field(m, &mut rng));
            let j = ops.jacobian(&w).unwrap();
            let res = |x: &[f64]| ops.residual(&FeField::new(Arc::clone(m), x.to_vec()).unwrap(), &prev).unwrap();
            // Dirichlet directions are eliminated; compare on free unknowns.
            let mask = m.dirichlet_mask();
            let dir: Vec<f64> = dir.values().iter().zip(&mask).map(|(d, &fixed)| if fixed { 0.0 } else { *d }).collect();
            jac_worst = jac_worst.max(fd_mismatch(&j, res, w.values(), &dir));
        }
        for solver in [NonlinearSolver::Newton, NonlinearSolver::PicardLagged] {
            let mut cfg = cfg.clone();
            cfg.nonlinear = solver;
            let traj = run_with_coefficient(&FeField::zeros(m), &cfg, &u_inf).unwrap();
            zero_ok &= traj.final_state.values().iter().all(|&v| v == 0.0)
                && traj.record.l2_norms.iter().all(|&v| v == 0.0);
        }
    }

    // Determinism of every CSV the experiments emit.
    let cheap = ExampleOptions {
        level: 4,
        k: 0.01,
        t_end: 0.2,
        study: Some(StudyConfig {
            mesh_levels: vec![2, 4],
            reference_level: 8,
            k: 0.01,
            t_eval: 0.1,
            problem: ProblemConfig::example1(),
        }),
    };
    let emit = || {
        let dir = tempfile::tempdir().expect("temp dir");
        run_example1(&cheap, Some(dir.path())).expect("example 1");
        run_example2(&cheap, Some(dir.path())).expect("example 2");
        let bytes = csv_bytes(dir.path());
        (bytes.len(), bytes)
    };
    let (count_a, first) = emit();
    let (_, second) = emit();
    let deterministic = count_a == 6 && first == second;

    let elapsed = started.elapsed().as_secs_f64();
    outcome(
        divergence_gap <= 1e-12
            && product_gap <= 1e-12
            && kernel <= 1e-13
            && jac_worst <= 1e-6
            && zero_ok
            && deterministic
            && elapsed <= 120.0,
        format!(
            "divergence identity gap {divergence_gap:.1e}, product rule gap {product_gap:.1e}, \
             |K 1|_inf {kernel:.1e}, worst Jacobian FD mismatch {jac_worst:.1e}, \
             equilibrium kept: {zero_ok}, {count_a} CSVs bit-identical: {deterministic}, {elapsed:.2} s"
        ),
    )
}

fn decay_fit_oracle() -> Outcome {
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.025).collect();
    let n = times.len();
    let record = TrajectoryRecord {
        l2_norms: times.iter().map(|t| (-2.0 * t).exp()).collect(),
        h1_seminorms: vec![0.0; n],
        lyapunov: vec![0.0; n],
        control_norms: vec![0.0; n],
        newton_iterations: vec![0; n],
        times,
    };
    let fit = fit_decay_rate(&record, [0.0, 5.0], 0.1, 1.0, 2.0).expect("valid window");
    outcome(
        (fit.fitted_rate - 2.0).abs() <= 1e-10,
        format!("fitted rate {:.15} for exact rate 2", fit.fitted_rate),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let (long_runs, quick) = rayon::join(
        || {
            rayon::join(
                || run_example1(&ExampleOptions::default(), None),
                || {
                    run_example2(
                        &ExampleOptions {
                            study: None,
                            ..ExampleOptions::default()
                        },
                        None,
                    )
                },
            )
        },
        || (steady_recovery(), structural_properties(), decay_fit_oracle()),
    );
    let (ex1, ex2) = long_runs;
    let (c5, c6, c7) = quick;

    let mut results = Vec::new();
    match &ex1 {
        Ok(ex1) => {
            results.push(("C1 state convergence", state_convergence(ex1)));
            results.push(("C2 control convergence", control_convergence(ex1)));
            results.push(("C3 exponential stabilization", exponential_stabilization(ex1)));
        }
        Err(e) => {
            for name in ["C1 state convergence", "C2 control convergence", "C3 exponential stabilization"] {
                results.push((name, outcome(false, format!("experiment failed: {e}"))));
            }
        }
    }
    results.push((
        "C4 partial-boundary stabilization",
        match &ex2 {
            Ok(ex2) => partial_boundary(ex2),
            Err(e) => outcome(false, format!("experiment failed: {e}")),
        },
    ));
    results.push(("C5 steady-state recovery", c5));
    results.push(("C6 structural properties", c6));
    results.push(("C7 decay-fit oracle", c7));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed in {:.0} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
