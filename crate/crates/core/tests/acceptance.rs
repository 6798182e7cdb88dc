//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};

use hlift::cli::completion_threshold;
use hlift::connections::{
    fig1, flat, power_growth, scalar_linear, sphere_stereographic, ConnectionField,
};
use hlift::geometry::{path_polyline, path_segment, ChartPoint, PathCurve};
use hlift::lifting::{
    horizontal_lift, parallel_transport, round_trip_defect, transport_jacobian, IntegratorOptions,
    LiftStatus,
};
use hlift::uvb::{
    fiber_scan, principal_angles, principal_angles_graph, uvb_classify, FiberWeight, ScanConfig,
    UvbThresholds, Verdict,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn pt(c: &[f64]) -> ChartPoint {
    ChartPoint::new(c.to_vec()).unwrap()
}

fn unit_segment(n: usize, axis: usize) -> PathCurve {
    let mut to = vec![0.0; n];
    to[axis] = 1.0;
    path_segment(&ChartPoint::origin(n), &pt(&to)).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let conn = fig1();
    let path = unit_segment(1, 0);
    let defaults = IntegratorOptions::default();
    let mut worst_escape: f64 = 0.0;
    for v0 in [0.7f64, 1.0, 2.0, 5.0] {
        let traj = horizontal_lift(&conn, &path, &[v0], &defaults).map_err(|e| e.to_string())?;
        let LiftStatus::Escaped { t_escape, .. } = traj.status else {
            return Err(format!("v0={v0}: expected escape, got {:?}", traj.status));
        };
        let err = (t_escape - (FRAC_PI_2 - v0.atan())).abs();
        ensure(err <= 1e-3, || format!("v0={v0}: t_escape error {err:e}"))?;
        worst_escape = worst_escape.max(err);
    }
    // the completion check needs tolerances tight enough that the global
    // error of the growing tan branch stays under 1e-8
    let tight = IntegratorOptions::with_tolerances(1e-11, 1e-14);
    let mut worst_end: f64 = 0.0;
    for v0 in [0.0f64, 0.3, 0.6] {
        let traj = horizontal_lift(&conn, &path, &[v0], &tight).map_err(|e| e.to_string())?;
        ensure(traj.status.is_complete(), || {
            format!("v0={v0}: {:?}", traj.status)
        })?;
        let err = (traj.final_fiber()[0] - (1.0 + v0.atan()).tan()).abs();
        ensure(err <= 1e-8, || format!("v0={v0}: endpoint error {err:e}"))?;
        worst_end = worst_end.max(err);
    }
    let (lo, hi) = completion_threshold(&conn, &path, 1.0 / 1024.0, &defaults)
        .map_err(|e| e.to_string())?
        .ok_or("no completion threshold found")?;
    let v_star = 0.5 * (lo + hi);
    let target = 1.0 / 1f64.tan();
    let err = (v_star - target).abs();
    ensure(err <= 1e-3, || {
        format!("v* = {v_star} vs cot(1) = {target}")
    })?;
    Ok(format!(
        "max t_escape error {worst_escape:.2e}, max endpoint error {worst_end:.2e}, v* = {v_star:.6} (|v* - cot 1| = {err:.2e})"
    ))
}

fn classify(conn: &ConnectionField) -> Result<Verdict, String> {
    let n = conn.dim();
    let path = unit_segment(n, 0);
    let config = ScanConfig::default();
    let mut verdicts = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        let report =
            fiber_scan(conn, &pt(&path.position(t)), &config).map_err(|e| e.to_string())?;
        verdicts.push(uvb_classify(&report, &UvbThresholds::default()));
    }
    Ok(if verdicts.contains(&Verdict::NotUvb) {
        Verdict::NotUvb
    } else if verdicts.iter().all(|v| *v == Verdict::Uvb) {
        Verdict::Uvb
    } else {
        Verdict::Inconclusive
    })
}

fn count_escapes(conn: &ConnectionField) -> Result<usize, String> {
    let n = conn.dim();
    let opts = IntegratorOptions::default();
    let mut escapes = 0;
    for axis in 0..n {
        let path = unit_segment(n, axis);
        for d in hlift::uvb::axis_directions(n) {
            for k in 0..=8 {
                let v0: Vec<f64> = d.iter().map(|x| x * 2f64.powi(k)).collect();
                let traj = horizontal_lift(conn, &path, &v0, &opts).map_err(|e| e.to_string())?;
                if !traj.status.is_complete() {
                    escapes += 1;
                }
            }
        }
    }
    Ok(escapes)
}

fn criterion_2() -> Outcome {
    let uvb: Vec<(&str, ConnectionField)> = vec![
        ("flat", flat(2)),
        ("scalar-linear:-1", scalar_linear(-1.0)),
        ("scalar-linear:1", scalar_linear(1.0)),
        ("power-growth:0.5", power_growth(0.5).unwrap()),
        ("power-growth:1", power_growth(1.0).unwrap()),
        ("sphere-stereographic", sphere_stereographic()),
    ];
    let not_uvb: Vec<(&str, ConnectionField)> = vec![
        ("fig1", fig1()),
        ("power-growth:1.5", power_growth(1.5).unwrap()),
        ("power-growth:2", power_growth(2.0).unwrap()),
    ];
    let mut summary = Vec::new();
    for (expected, set) in [(Verdict::Uvb, &uvb), (Verdict::NotUvb, &not_uvb)] {
        for (label, conn) in set {
            let verdict = classify(conn)?;
            let escapes = count_escapes(conn)?;
            ensure(verdict == expected, || {
                format!("{label}: verdict {verdict}, expected {expected}")
            })?;
            let escapes_ok = match expected {
                Verdict::Uvb => escapes == 0,
                _ => escapes > 0,
            };
            ensure(escapes_ok, || {
                format!("{label}: {escapes} escapes with verdict {verdict}")
            })?;
            summary.push(format!("{label}={verdict}/{escapes}"));
        }
    }
    Ok(format!("verdict/escapes: {}", summary.join(" ")))
}

fn criterion_3() -> Outcome {
    let opts = IntegratorOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut flat_err: f64 = 0.0;
    for _ in 0..10 {
        let pts: Vec<ChartPoint> = (0..4)
            .map(|_| pt(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]))
            .collect();
        let path = path_polyline(&pts, &[0.0, 0.2, 0.7, 1.0]).unwrap();
        let v0 = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        let out = parallel_transport(&flat(2), &path, &v0, &opts).map_err(|e| e.to_string())?;
        flat_err = flat_err
            .max((out.vec[0] - v0[0]).abs())
            .max((out.vec[1] - v0[1]).abs());
    }
    ensure(flat_err <= 1e-10, || {
        format!("flat transport error {flat_err:e}")
    })?;

    let path = unit_segment(1, 0);
    let e_inv = (-1f64).exp();
    let mut rel: f64 = 0.0;
    for v in [-3.0, -0.5, 0.25, 1.0, 2.0, 40.0] {
        let out = parallel_transport(&scalar_linear(1.0), &path, &[v], &opts)
            .map_err(|e| e.to_string())?;
        rel = rel.max((out.vec[0] - v * e_inv).abs() / (v * e_inv).abs());
    }
    ensure(rel <= 1e-8, || {
        format!("scalar-linear relative error {rel:e}")
    })?;

    let j = transport_jacobian(&scalar_linear(1.0), &path, &[2.0], None, &opts)
        .map_err(|e| e.to_string())?;
    let j_err = (j[(0, 0)] - e_inv).abs();
    ensure(j_err <= 1e-6, || {
        format!("scalar-linear Jacobian error {j_err:e}")
    })?;

    let j = transport_jacobian(&fig1(), &path, &[0.0], None, &opts).map_err(|e| e.to_string())?;
    let sec2 = 1.0 / 1f64.cos().powi(2);
    let f_err = (j[(0, 0)] - sec2).abs();
    ensure(f_err <= 1e-4, || {
        format!("fig1 Jacobian {} vs {sec2}", j[(0, 0)])
    })?;
    Ok(format!(
        "flat {flat_err:.1e}, scalar-linear rel {rel:.1e}, J(e^-1) {j_err:.1e}, J(sec^2 1) {f_err:.1e}"
    ))
}

fn random_path(rng: &mut ChaCha8Rng, n: usize) -> PathCurve {
    let segment = rng.gen_bool(0.5);
    let mut knot = || pt(&(0..n).map(|_| rng.gen_range(-0.6..0.6)).collect::<Vec<_>>());
    if segment {
        path_segment(&knot(), &knot()).unwrap()
    } else {
        let pts = [knot(), knot(), knot()];
        path_polyline(&pts, &[0.0, 0.5, 1.0]).unwrap()
    }
}

fn criterion_4() -> Outcome {
    let opts = IntegratorOptions::default();
    let members = [
        flat(2),
        fig1(),
        scalar_linear(1.0),
        scalar_linear(-1.0),
        power_growth(0.5).unwrap(),
        power_growth(1.0).unwrap(),
        power_growth(1.5).unwrap(),
        power_growth(2.0).unwrap(),
        sphere_stereographic(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_rt, mut worst_lin, mut min_det) = (0f64, 0f64, f64::INFINITY);
    for conn in &members {
        let n = conn.dim();
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < 20 {
            attempts += 1;
            ensure(attempts < 1000, || {
                format!("{}: too few completing pairs", conn.name())
            })?;
            let path = random_path(&mut rng, n);
            let v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if parallel_transport(conn, &path, &v0, &opts).is_err() {
                continue;
            }
            accepted += 1;
            let rt = round_trip_defect(conn, &path, &v0, &opts).map_err(|e| e.to_string())?;
            ensure(rt <= 1e-6, || {
                format!("{}: round trip {rt:e} at v0={v0:?}", conn.name())
            })?;
            worst_rt = worst_rt.max(rt);

            let j = transport_jacobian(conn, &path, &v0, None, &opts).map_err(|e| e.to_string())?;
            let det = j.determinant().abs();
            ensure(det > 1e-8, || format!("{}: |det J| = {det:e}", conn.name()))?;
            min_det = min_det.min(det);

            if conn.is_linear_in_fiber() {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let mix: Vec<f64> = (0..n).map(|i| a * v0[i] + b * w[i]).collect();
                let tr = |x: &[f64]| parallel_transport(conn, &path, x, &opts).map(|t| t.vec);
                let (pu, pw, pm) = (
                    tr(&v0).map_err(|e| e.to_string())?,
                    tr(&w).map_err(|e| e.to_string())?,
                    tr(&mix).map_err(|e| e.to_string())?,
                );
                let defect: Vec<f64> = (0..n).map(|i| pm[i] - a * pu[i] - b * pw[i]).collect();
                let lin = norm(&defect) / (1.0 + norm(&pu) + norm(&pw));
                ensure(lin <= 1e-7, || {
                    format!("{}: linearity defect {lin:e}", conn.name())
                })?;
                worst_lin = worst_lin.max(lin);
            }
        }
    }
    Ok(format!(
        "round trip max {worst_rt:.1e}, linearity max {worst_lin:.1e}, min |det J| {min_det:.2e}"
    ))
}

fn constant_connection(g: DMatrix<f64>) -> ConnectionField {
    let n = g.nrows();
    ConnectionField::new("constant", n, false, Some(0.0), move |_, _| g.clone())
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=3 {
        for weight in [FiberWeight::Euclidean, FiberWeight::Normalized] {
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let s = principal_angles(&flat(n), &pt(&p), &v, &weight).map_err(|e| e.to_string())?;
            ensure(s.angles.iter().all(|&a| a == FRAC_PI_2), || {
                format!("flat spectrum {:?}", s.angles)
            })?;
        }
    }

    let scalar = constant_connection(DMatrix::from_element(1, 1, 3f64.sqrt()));
    let s = principal_angles(
        &scalar,
        &ChartPoint::origin(1),
        &[0.0],
        &FiberWeight::Euclidean,
    )
    .map_err(|e| e.to_string())?;
    let scalar_err = (s.theta_min() - FRAC_PI_6).abs();
    ensure(scalar_err <= 1e-12, || {
        format!("s = sqrt 3 angle error {scalar_err:e}")
    })?;

    let mut graph_err: f64 = 0.0;
    let mut invariance_err: f64 = 0.0;
    for k in 0..100 {
        let n = 1 + k % 3;
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-5.0..5.0));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = ChartPoint::origin(n);
        let conn = constant_connection(g.clone());
        for weight in [FiberWeight::Euclidean, FiberWeight::Normalized] {
            let a = principal_angles(&conn, &p, &v, &weight).map_err(|e| e.to_string())?;
            let b = principal_angles_graph(&conn, &p, &v, &weight).map_err(|e| e.to_string())?;
            for (x, y) in a.angles.iter().zip(&b.angles) {
                graph_err = graph_err.max((x - y).abs());
            }
        }
        let u = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
            .qr()
            .q();
        let w = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
            .qr()
            .q();
        let rotated = constant_connection(&u * &g * w.transpose());
        let a =
            principal_angles(&conn, &p, &v, &FiberWeight::Euclidean).map_err(|e| e.to_string())?;
        let b = principal_angles(&rotated, &p, &v, &FiberWeight::Euclidean)
            .map_err(|e| e.to_string())?;
        for (x, y) in a.angles.iter().zip(&b.angles) {
            invariance_err = invariance_err.max((x - y).abs());
        }
    }
    ensure(graph_err <= 1e-10, || format!("graph vs SVD {graph_err:e}"))?;
    ensure(invariance_err <= 1e-10, || {
        format!("orthogonal invariance {invariance_err:e}")
    })?;
    Ok(format!(
        "flat exact, pi/6 error {scalar_err:.1e}, graph/SVD {graph_err:.1e}, invariance {invariance_err:.1e}"
    ))
}

fn criterion_6() -> Outcome {
    let conn = fig1();
    let p = ChartPoint::origin(1);
    let config = ScanConfig {
        radii: vec![1.0, 10.0, 100.0],
        ..ScanConfig::default()
    };
    let report = fiber_scan(&conn, &p, &config).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in &report.theta_min {
        for (r, theta) in report.radii.iter().zip(row) {
            let expected = 1f64.atan2((1.0 + r * r).sqrt());
            worst = worst.max((theta - expected).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("theta error {worst:e}"))?;
    let full = fiber_scan(&conn, &p, &ScanConfig::default()).map_err(|e| e.to_string())?;
    let ok = full.beta.iter().all(|b| (-1.05..=-0.95).contains(b));
    ensure(ok, || format!("beta {:?}", full.beta))?;
    Ok(format!(
        "theta {:?} (max error {worst:.1e}), beta {:?}",
        report.theta_min[0]
            .iter()
            .map(|t| format!("{t:.5}"))
            .collect::<Vec<_>>(),
        full.beta
            .iter()
            .map(|b| format!("{b:.4}"))
            .collect::<Vec<_>>()
    ))
}

fn criterion_7() -> Outcome {
    let path = unit_segment(1, 0);
    let err = |rtol: f64, atol: f64| -> Result<f64, String> {
        let opts = IntegratorOptions::with_tolerances(rtol, atol);
        let traj = horizontal_lift(&fig1(), &path, &[0.0], &opts).map_err(|e| e.to_string())?;
        Ok((traj.final_fiber()[0] - 1f64.tan()).abs())
    };
    let (loose, tight) = (err(1e-6, 1e-9)?, err(1e-10, 1e-13)?);
    let factor = loose / tight;
    ensure(factor >= 1e3, || {
        format!("error {loose:e} -> {tight:e}, factor {factor:.1}")
    })?;
    Ok(format!(
        "error {loose:.2e} -> {tight:.2e}, factor {factor:.0}"
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let commands: [&[&str]; 8] = [
        &[
            "lift",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "0",
            "--v",
            "0.6",
            "--v",
            "2",
        ],
        &[
            "lift",
            "--connection",
            "sphere-stereographic",
            "--path",
            "circle:0,0:0.7",
            "--v",
            "1,-2",
            "--format",
            "json",
        ],
        &[
            "transport",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "0.3",
            "--jacobian",
        ],
        &[
            "transport",
            "--connection",
            "sphere-stereographic",
            "--path",
            "segment:0,0:1,1",
            "--v",
            "1,0",
            "--jacobian",
        ],
        &[
            "uvb-scan",
            "--connection",
            "power-growth:1.5",
            "--format",
            "json",
        ],
        &[
            "uvb-scan",
            "--connection",
            "sphere-stereographic",
            "--path",
            "segment:0,0:1,2",
        ],
        &["figure1"],
        &["gallery", "list"],
    ];
    let bin = env!("CARGO_BIN_EXE_hlift");
    let mut files = 0;
    for args in commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
            let mut cmd = Command::new(bin);
            cmd.args(args);
            if args[0] != "gallery" {
                cmd.arg("--out").arg(dir.path());
            }
            let out = cmd.output().map_err(|e| e.to_string())?;
            runs.push((out.status.code(), out.stdout, read_tree(dir.path())));
        }
        ensure(runs[0] == runs[1], || {
            format!("`{}` differs between runs", args.join(" "))
        })?;
        files += runs[0].2.len();
    }
    Ok(format!(
        "{} commands, {files} files, stdout and exit codes identical",
        commands.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("escaping lifts and threshold", criterion_1),
        ("classification vs lift sweep", criterion_2),
        ("transport oracles", criterion_3),
        ("diffeomorphism properties", criterion_4),
        ("principal-angle suite", criterion_5),
        ("scan decay law", criterion_6),
        ("integrator order", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
