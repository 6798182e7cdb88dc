use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hlift(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlift"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn last_fiber(csv: &str) -> Vec<f64> {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    header
        .iter()
        .zip(last)
        .filter(|(h, _)| h.starts_with("fiber_"))
        .map(|(_, x)| x)
        .collect()
}

#[test]
fn lift_commands() {
    let dir = TempDir::new().unwrap();
    let o = hlift(
        &[
            "lift",
            "--connection",
            "flat",
            "--path",
            "segment:0,0:1,1",
            "--v",
            "3,4",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("lift_0.csv")).unwrap();
    assert!(csv.starts_with("t,base_0,base_1,fiber_0,fiber_1\n"));
    assert_eq!(csv.lines().count(), 202);
    assert_eq!(last_fiber(&csv), vec![3.0, 4.0]);

    let dir = TempDir::new().unwrap();
    let o = hlift(
        &[
            "lift",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let status = json(dir.path().join("lift_0_status.json"));
    assert_eq!(status["status"], "escaped");
    let t = status["t_escape"].as_f64().unwrap();
    assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-3);
    assert!(status["steps"].as_u64().unwrap() > 0);

    let dir = TempDir::new().unwrap();
    let o = hlift(
        &[
            "lift",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "0",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let samples = json(dir.path().join("lift_0.json"));
    let last = samples.as_array().unwrap().last().unwrap();
    let c1 = last["fiber"][0].as_f64().unwrap();
    assert!((c1 - 1f64.tan()).abs() < 1e-8);
}

#[test]
fn config_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let cases: [&[&str]; 5] = [
        &["lift", "--connection", "missing.json"],
        &[
            "lift",
            "--connection",
            "sphere-stereographic",
            "--path",
            "segment:0:1",
        ],
        &[
            "lift",
            "--connection",
            "flat",
            "--path",
            "segment:0,0:1,1",
            "--v",
            "1,2,3",
        ],
        &["transport", "--connection", "flat:2", "--v", "x"],
        &["uvb-scan", "--connection", "fig1", "--radii", "1,0.5"],
    ];
    for args in cases {
        assert_eq!(code(&hlift(args, dir.path())), 1, "{args:?}");
    }
}

#[test]
fn connection_and_path_files() {
    let dir = TempDir::new().unwrap();
    let conn = dir.path().join("conn.json");
    fs::write(
        &conn,
        r#"{"name":"christoffel","dimension":1,"terms":[{"k":0,"i":0,"j":0,"coeff":1.0}]}"#,
    )
    .unwrap();
    let path = dir.path().join("path.json");
    fs::write(&path, r#"{"kind":"segment","from":[0.0],"to":[1.0]}"#).unwrap();
    let o = hlift(
        &[
            "transport",
            "--connection",
            conn.to_str().unwrap(),
            "--path",
            path.to_str().unwrap(),
            "--v",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(dir.path().join("transport_0.json"));
    let out = report["vector_out"][0].as_f64().unwrap();
    assert!((out - 2.0 * (-1f64).exp()).abs() < 1e-8);
}

#[test]
fn transport_commands() {
    let dir = TempDir::new().unwrap();
    let o = hlift(
        &[
            "transport",
            "--connection",
            "flat",
            "--path",
            "circle:1,1:2",
            "--v",
            "1,0",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("transport_0.json"));
    assert_eq!(r["vector_out"], serde_json::json!([1.0, 0.0]));
    assert!(r.get("jacobian").is_none());

    let o = hlift(
        &[
            "transport",
            "--connection",
            "scalar-linear:1",
            "--path",
            "segment:0:1",
            "--v",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("transport_0.json"));
    assert!((r["vector_out"][0].as_f64().unwrap() - 0.735758882342885).abs() < 1e-8);
    assert_eq!(r["from"], serde_json::json!([0.0]));
    assert_eq!(r["to"], serde_json::json!([1.0]));

    let o = hlift(
        &[
            "transport",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "0",
            "--jacobian",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("transport_0.json"));
    let j = r["jacobian"][0][0].as_f64().unwrap();
    assert!((j - 1.0 / 1f64.cos().powi(2)).abs() < 1e-4);

    let o = hlift(
        &[
            "transport",
            "--connection",
            "fig1",
            "--path",
            "segment:0:1",
            "--v",
            "0.7",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let r = json(dir.path().join("transport_0.json"));
    assert_eq!(r["status"], "escaped");
}

#[test]
fn uvb_scan_commands() {
    let dir = TempDir::new().unwrap();
    let o = hlift(
        &["uvb-scan", "--connection", "flat:2", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("uvb_scan_0.json"));
    assert_eq!(r["verdict"], "UVB");
    assert_eq!(r["weight"], "normalized");

    let o = hlift(&["uvb-scan", "--connection", "fig1"], dir.path());
    assert_eq!(code(&o), 3);
    let csv = fs::read_to_string(dir.path().join("uvb_scan_0.csv")).unwrap();
    assert!(csv.starts_with("direction_index,radius,theta_min\n"));

    let o = hlift(&["uvb-scan", "--connection", "power-growth:1"], dir.path());
    assert_eq!(code(&o), 0);

    let o = hlift(
        &["uvb-scan", "--connection", "power-growth:1.2"],
        dir.path(),
    );
    assert_eq!(code(&o), 4);

    // endpoints and midpoint of the path become the scanned base points
    let o = hlift(
        &[
            "uvb-scan",
            "--connection",
            "sphere-stereographic",
            "--path",
            "segment:0,0:1,2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    for i in 0..3 {
        assert!(dir.path().join(format!("uvb_scan_{i}.csv")).exists());
    }
}

#[test]
fn figure1_command() {
    let dir = TempDir::new().unwrap();
    let o = hlift(&["figure1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(dir.path().join("figure1_summary.json"));
    let v_star = summary["v_star"].as_f64().unwrap();
    assert!((v_star - 0.642092615934331).abs() < 1e-3);

    let csv = fs::read_to_string(dir.path().join("figure1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "curve,family,seed_t,seed_fiber,t,fiber,tanh_fiber"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let curve = |seed: f64| -> Vec<&Vec<&str>> {
        rows.iter()
            .filter(|r| r[2].parse::<f64>().unwrap() == 0.0 && r[3].parse::<f64>().unwrap() == seed)
            .collect()
    };
    let zero = curve(0.0);
    assert!(zero.iter().all(|r| r[1] == "from_p_complete"));
    let end: f64 = zero.last().unwrap()[6].parse().unwrap();
    assert!((end - 1f64.tan().tanh()).abs() < 1e-8);

    let two = curve(2.0);
    assert!(two.iter().all(|r| r[1] == "from_p_escaped"));
    let t_pole = std::f64::consts::FRAC_PI_2 - 2f64.atan();
    assert!(two.iter().any(|r| {
        r[4].parse::<f64>().unwrap() < t_pole && r[6].parse::<f64>().unwrap() > 0.999
    }));
}

#[test]
fn figure1_shows_interior_curves_on_long_paths() {
    let dir = TempDir::new().unwrap();
    let o = hlift(&["figure1", "--path", "segment:0:4"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(dir.path().join("figure1_summary.json"));
    assert!(summary["families"]["interior"].as_u64().unwrap() > 0);
    assert!(summary["target"].is_null());
    assert!(summary["v_star"].is_null());
}

#[test]
fn figure1_bracket_halves_with_grid() {
    let coarse = TempDir::new().unwrap();
    let fine = TempDir::new().unwrap();
    assert_eq!(
        code(&hlift(
            &["figure1", "--grid-step", "0.001953125"],
            coarse.path()
        )),
        0
    );
    assert_eq!(
        code(&hlift(
            &["figure1", "--grid-step", "0.0009765625"],
            fine.path()
        )),
        0
    );
    let width = |d: &TempDir| {
        let s = json(d.path().join("figure1_summary.json"));
        s["bracket"][1].as_f64().unwrap() - s["bracket"][0].as_f64().unwrap()
    };
    assert!((width(&coarse) / width(&fine) - 2.0).abs() < 1e-9);
}

#[test]
fn gallery_listing() {
    let o = Command::new(env!("CARGO_BIN_EXE_hlift"))
        .args(["gallery", "list"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let row = |name: &str| -> Vec<String> {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap()
            .split_whitespace()
            .map(str::to_string)
            .collect()
    };
    assert_eq!(row("fig1")[3], "2");
    assert_eq!(row("flat")[2], "true");
    assert_eq!(row("sphere-stereographic")[1], "2");
}
