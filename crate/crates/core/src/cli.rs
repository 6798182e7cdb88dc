//! `hlift` command-line front end.
//!
//! Exit codes: 0 success or UVB, 1 configuration error, 2 a lift escaped
//! (or otherwise failed to reach the far fiber), 3 NotUVB, 4 Inconclusive.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::connections::{gallery, gallery_entries, ConnectionField, ConnectionSpec};
use crate::geometry::{parse_floats, ChartPoint, PathCurve, PathSpec};
use crate::lifting::{
    horizontal_lift, horizontal_lift_from, horizontality_defect, lift_sweep, parallel_transport,
    transport_jacobian, IntegratorOptions, LiftError, LiftStatus, LiftTrajectory,
};
use crate::uvb::{fiber_scan, FiberScanReport, FiberWeight, ScanConfig, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ESCAPE: i32 = 2;
pub const EXIT_NOT_UVB: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "hlift",
    version,
    about = "Horizontal lifts, parallel transport and UVB scans for general connections"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate horizontal lifts and write one trajectory per initial vector
    Lift(Shared),
    /// Parallel transport of initial vectors to the end of the path
    Transport {
        #[command(flatten)]
        shared: Shared,
        /// Also emit the finite-difference Jacobian of the transport map
        #[arg(long)]
        jacobian: bool,
    },
    /// Scan principal angles along fiber rays and classify the connection
    UvbScan {
        #[command(flatten)]
        shared: Shared,
        /// Base point(s) to scan at; defaults to the path's endpoints and
        /// midpoint, or the origin without a path
        #[arg(long, allow_hyphen_values = true)]
        point: Vec<String>,
        /// Comma separated radii; defaults to 1, 2, 4, ..., 2^24
        #[arg(long)]
        radii: Option<String>,
    },
    /// Data for the escaping-lift picture over a path
    Figure1 {
        #[command(flatten)]
        shared: Shared,
        /// Spacing of the initial-value grid used to locate the completion
        /// threshold
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        grid_step: f64,
    },
    /// Gallery of named connections
    Gallery {
        #[arg(value_enum, default_value = "list")]
        action: GalleryAction,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GalleryAction {
    List,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// Gallery name (`flat`, `flat:3`, `fig1`, `scalar-linear:<λ>`,
    /// `power-growth:<α>`, `sphere-stereographic`), inline JSON or a JSON file
    #[arg(long)]
    connection: Option<String>,
    /// Inline path (`segment:<a>:<b>`, `circle:<c>:<r>[:<i>,<j>]`), inline
    /// JSON or a JSON file
    #[arg(long, allow_hyphen_values = true)]
    path: Option<String>,
    /// Comma separated initial vector; repeat for several
    #[arg(long = "v", allow_hyphen_values = true)]
    v: Vec<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    escape_norm: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Auxiliary fiber weight for angle measurements
    #[arg(long, default_value = "normalized")]
    weight: String,
    /// Angle floor (radians) for UVB classification
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Lift(shared) => cmd_lift(&shared),
        Command::Transport { shared, jacobian } => cmd_transport(&shared, jacobian),
        Command::UvbScan {
            shared,
            point,
            radii,
        } => cmd_uvb_scan(&shared, &point, radii.as_deref()),
        Command::Figure1 { shared, grid_step } => cmd_figure1(&shared, grid_step),
        Command::Gallery { action } => match action {
            GalleryAction::List => cmd_gallery(&mut io::stdout().lock()),
        },
    }
}

/// Fixed 17-significant-digit float output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes to compact JSON with every float in 17-digit scientific form.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser)?;
    // guard the formatter against ever producing something serde_json can't read back
    let _: serde_json::Value = serde_json::from_slice(&buf)?;
    let mut s = String::from_utf8(buf)?;
    s.push('\n');
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_spec_text(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {arg}"))
    } else if arg.ends_with(".json") {
        bail!("spec file {arg} does not exist")
    } else {
        Ok(arg.to_string())
    }
}

struct Setup {
    conn: ConnectionField,
    path: PathCurve,
    vectors: Vec<Vec<f64>>,
    opts: IntegratorOptions,
}

fn setup(shared: &Shared, default_connection: &str) -> Result<Setup> {
    let path_spec = shared
        .path
        .as_deref()
        .map(|p| -> Result<PathSpec> { Ok(PathSpec::parse_inline(&read_spec_text(p)?)?) })
        .transpose()?;
    let path = path_spec.map(|s| s.build()).transpose()?;
    let vectors = shared
        .v
        .iter()
        .map(|v| parse_floats(v).ok_or_else(|| anyhow!("cannot parse vector `{v}`")))
        .collect::<Result<Vec<_>>>()?;

    let text = read_spec_text(shared.connection.as_deref().unwrap_or(default_connection))?;
    let mut spec = ConnectionSpec::parse_inline(&text)?;
    let hint = path
        .as_ref()
        .map(PathCurve::dim)
        .or_else(|| vectors.first().map(Vec::len));
    if let Some(n) = hint {
        spec = spec.with_default_dimension(n);
    }
    let conn = gallery(&spec)?;
    let n = conn.dim();

    let path = match path {
        Some(p) => p,
        None => {
            let mut to = vec![0.0; n];
            to[0] = 1.0;
            PathSpec::Segment {
                from: vec![0.0; n],
                to,
            }
            .build()?
        }
    };
    if path.dim() != n {
        bail!(
            "path dimension {} does not match connection dimension {n}",
            path.dim()
        );
    }
    for v in &vectors {
        if v.len() != n {
            bail!(
                "vector dimension {} does not match connection dimension {n}",
                v.len()
            );
        }
    }

    let mut opts = IntegratorOptions::default();
    if let Some(r) = shared.rtol {
        opts.rtol = r;
    }
    if let Some(a) = shared.atol {
        opts.atol = a;
    }
    if let Some(e) = shared.escape_norm {
        opts.escape_norm = e;
    }
    opts.validate()?;
    Ok(Setup {
        conn,
        path,
        vectors,
        opts,
    })
}

fn status_label(status: &LiftStatus) -> &'static str {
    match status {
        LiftStatus::Complete => "complete",
        LiftStatus::Escaped { .. } => "escaped",
        LiftStatus::StepCollapse { .. } => "step-collapse",
    }
}

#[derive(Serialize)]
struct LiftReport<'a> {
    connection: &'a str,
    v0: &'a [f64],
    #[serde(flatten)]
    status: LiftStatus,
    steps: usize,
    rejected: usize,
    max_dc_norm: f64,
    final_t: f64,
    final_fiber: &'a [f64],
    horizontality_defect: Option<f64>,
}

fn trajectory_csv(traj: &LiftTrajectory) -> String {
    let n = traj.dim();
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",base_{i}"));
    }
    for i in 0..n {
        out.push_str(&format!(",fiber_{i}"));
    }
    out.push('\n');
    for s in &traj.samples {
        let row: Vec<String> = std::iter::once(s.t)
            .chain(s.base.iter().copied())
            .chain(s.fiber.iter().copied())
            .map(fmt_f64)
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cmd_lift(shared: &Shared) -> Result<i32> {
    let setup = setup(shared, "flat")?;
    let vectors = if setup.vectors.is_empty() {
        vec![vec![0.0; setup.conn.dim()]]
    } else {
        setup.vectors.clone()
    };
    let results = lift_sweep(&setup.conn, &setup.path, &vectors, &setup.opts);
    let mut code = EXIT_OK;
    for (i, (v0, traj)) in vectors.iter().zip(results).enumerate() {
        let traj = traj?;
        let defect = horizontality_defect(&setup.conn, &traj, &setup.path).ok();
        let last = traj.samples.last().expect("initial sample");
        let report = LiftReport {
            connection: setup.conn.name(),
            v0,
            status: traj.status,
            steps: traj.stats.steps,
            rejected: traj.stats.rejected,
            max_dc_norm: traj.stats.max_rate,
            final_t: last.t,
            final_fiber: &last.fiber,
            horizontality_defect: defect,
        };
        match shared.format {
            Format::Csv => write_file(
                &shared.out,
                &format!("lift_{i}.csv"),
                &trajectory_csv(&traj),
            )?,
            Format::Json => write_file(
                &shared.out,
                &format!("lift_{i}.json"),
                &to_json(&traj.samples)?,
            )?,
        }
        write_file(
            &shared.out,
            &format!("lift_{i}_status.json"),
            &to_json(&report)?,
        )?;
        println!(
            "lift {i}: {} t={} fiber=[{}]",
            status_label(&traj.status),
            fmt_f64(last.t),
            last.fiber
                .iter()
                .copied()
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(",")
        );
        if !traj.status.is_complete() {
            code = EXIT_ESCAPE;
        }
    }
    Ok(code)
}

#[derive(Serialize)]
struct TransportReport {
    status: &'static str,
    from: Vec<f64>,
    to: Vec<f64>,
    vector_in: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vector_out: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_escape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jacobian: Option<Vec<Vec<f64>>>,
}

fn cmd_transport(shared: &Shared, jacobian: bool) -> Result<i32> {
    let setup = setup(shared, "flat")?;
    if setup.vectors.is_empty() {
        bail!("transport needs at least one --v");
    }
    let mut code = EXIT_OK;
    for (i, v0) in setup.vectors.iter().enumerate() {
        let mut report = TransportReport {
            status: "complete",
            from: setup.path.start().into_inner(),
            to: setup.path.end().into_inner(),
            vector_in: v0.clone(),
            vector_out: None,
            t_escape: None,
            jacobian: None,
        };
        match parallel_transport(&setup.conn, &setup.path, v0, &setup.opts) {
            Ok(out) => {
                report.vector_out = Some(out.vec);
                if jacobian {
                    match transport_jacobian(&setup.conn, &setup.path, v0, None, &setup.opts) {
                        Ok(j) => {
                            report.jacobian =
                                Some(j.row_iter().map(|r| r.iter().copied().collect()).collect());
                        }
                        Err(LiftError::ProbeEscaped { .. }) => {
                            report.status = "probe-escaped";
                            code = EXIT_ESCAPE;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Err(LiftError::TransportEscaped { t_escape }) => {
                report.status = "escaped";
                report.t_escape = Some(t_escape);
                code = EXIT_ESCAPE;
            }
            Err(LiftError::StepCollapse { t, .. }) => {
                report.status = "step-collapse";
                report.t_escape = Some(t);
                code = EXIT_ESCAPE;
            }
            Err(e) => return Err(e.into()),
        }
        let json = to_json(&report)?;
        write_file(&shared.out, &format!("transport_{i}.json"), &json)?;
        print!("{json}");
    }
    Ok(code)
}

fn scan_csv(report: &FiberScanReport) -> String {
    let mut out = String::from("direction_index,radius,theta_min\n");
    for (d, row) in report.theta_min.iter().enumerate() {
        for (r, theta) in report.radii.iter().zip(row) {
            out.push_str(&format!("{d},{},{}\n", fmt_f64(*r), fmt_f64(*theta)));
        }
    }
    out
}

fn cmd_uvb_scan(shared: &Shared, points: &[String], radii: Option<&str>) -> Result<i32> {
    let setup = setup(shared, "flat")?;
    let n = setup.conn.dim();
    let weight = FiberWeight::parse(&shared.weight)
        .ok_or_else(|| anyhow!("unknown weight `{}`", shared.weight))?;
    let mut config = ScanConfig {
        weight,
        ..ScanConfig::default()
    };
    config.thresholds.epsilon = shared.eps;
    if let Some(r) = radii {
        config.radii = parse_floats(r).ok_or_else(|| anyhow!("cannot parse radii `{r}`"))?;
    }

    let bases: Vec<ChartPoint> = if !points.is_empty() {
        points
            .iter()
            .map(|p| {
                let c = parse_floats(p).ok_or_else(|| anyhow!("cannot parse point `{p}`"))?;
                if c.len() != n {
                    bail!(
                        "point dimension {} does not match connection dimension {n}",
                        c.len()
                    );
                }
                Ok(ChartPoint::new(c)?)
            })
            .collect::<Result<_>>()?
    } else if shared.path.is_some() {
        [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| ChartPoint::new(setup.path.position(t)))
            .collect::<Result<_, _>>()?
    } else {
        vec![ChartPoint::origin(n)]
    };

    let mut verdicts = Vec::new();
    for (i, p) in bases.iter().enumerate() {
        let report = fiber_scan(&setup.conn, p, &config)?;
        match shared.format {
            Format::Json => write_file(
                &shared.out,
                &format!("uvb_scan_{i}.json"),
                &to_json(&report)?,
            )?,
            Format::Csv => write_file(
                &shared.out,
                &format!("uvb_scan_{i}.csv"),
                &scan_csv(&report),
            )?,
        }
        println!(
            "point [{}]: {} (beta [{}])",
            report
                .point
                .iter()
                .copied()
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(","),
            report.verdict,
            report
                .beta
                .iter()
                .copied()
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(",")
        );
        verdicts.push(report.verdict);
    }
    let overall = if verdicts.contains(&Verdict::NotUvb) {
        Verdict::NotUvb
    } else if verdicts.contains(&Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Uvb
    };
    println!("verdict: {overall}");
    Ok(match overall {
        Verdict::Uvb => EXIT_OK,
        Verdict::NotUvb => EXIT_NOT_UVB,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Visual family of a curve in the escaping-lift picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Starts over `γ(0)` and reaches the fiber over `γ(1)`.
    FromPComplete,
    /// Starts over `γ(0)` and escapes before `t = 1`.
    FromPEscaped,
    /// Reaches the fiber over `γ(1)` but escapes going back towards `t = 0`.
    FromQEscaped,
    /// Meets neither end fiber at a finite value.
    Interior,
}

impl Family {
    fn label(self) -> &'static str {
        match self {
            Self::FromPComplete => "from_p_complete",
            Self::FromPEscaped => "from_p_escaped",
            Self::FromQEscaped => "from_q_escaped",
            Self::Interior => "interior",
        }
    }

    pub fn classify(reaches_start: bool, reaches_end: bool) -> Self {
        match (reaches_start, reaches_end) {
            (true, true) => Self::FromPComplete,
            (true, false) => Self::FromPEscaped,
            (false, true) => Self::FromQEscaped,
            (false, false) => Self::Interior,
        }
    }
}

/// Initial values at `t = 0` for the displayed curves.
pub const FIGURE_START_VALUES: [f64; 11] =
    [-5.0, -2.0, -1.0, -0.5, 0.0, 0.3, 0.6, 0.7, 1.0, 2.0, 5.0];
/// Interior seed times and fiber values, integrated in both directions.
pub const FIGURE_SEED_TIMES: [f64; 3] = [0.25, 0.5, 0.75];
pub const FIGURE_SEED_VALUES: [f64; 5] = [-20.0, -3.0, 0.0, 3.0, 20.0];

#[derive(Serialize)]
struct FamilyCounts {
    from_p_complete: usize,
    from_p_escaped: usize,
    from_q_escaped: usize,
    interior: usize,
}

#[derive(Serialize)]
struct FigureSummary {
    connection: String,
    v_star: Option<f64>,
    bracket: Option<[f64; 2]>,
    grid_step: f64,
    target: Option<f64>,
    abs_error: Option<f64>,
    families: FamilyCounts,
}

/// Completion threshold from a uniform grid of initial values `k·step` on
/// `[0, 2]`: the midpoint between the last completing and first escaping
/// value. Returns `None` if the grid does not bracket a transition.
pub fn completion_threshold(
    conn: &ConnectionField,
    path: &PathCurve,
    step: f64,
    opts: &IntegratorOptions,
) -> Result<Option<(f64, f64)>> {
    if !(step.is_finite() && step > 0.0) {
        bail!("grid step must be positive");
    }
    let count = (2.0 / step).ceil() as usize;
    let grid: Vec<f64> = (0..=count).map(|k| k as f64 * step).collect();
    let complete = grid
        .par_iter()
        .map(|&v| {
            Ok(horizontal_lift(conn, path, &[v], opts)?
                .status
                .is_complete())
        })
        .collect::<Result<Vec<bool>>>()?;
    let first_fail = complete.iter().position(|c| !c);
    Ok(match first_fail {
        Some(k) if k > 0 => Some((grid[k - 1], grid[k])),
        _ => None,
    })
}

struct Curve {
    family: Family,
    seed_t: f64,
    seed: f64,
    points: Vec<(f64, f64)>,
}

fn figure_curves(
    conn: &ConnectionField,
    path: &PathCurve,
    opts: &IntegratorOptions,
) -> Result<Vec<Curve>> {
    let mut jobs: Vec<(f64, f64)> = FIGURE_START_VALUES.iter().map(|&v| (0.0, v)).collect();
    for &t0 in &FIGURE_SEED_TIMES {
        for &c0 in &FIGURE_SEED_VALUES {
            jobs.push((t0, c0));
        }
    }
    jobs.par_iter()
        .map(|&(t0, c0)| {
            let forward = horizontal_lift_from(conn, path, t0, &[c0], 1.0, opts)?;
            let mut points: Vec<(f64, f64)> = Vec::new();
            let reaches_start = if t0 == 0.0 {
                true
            } else {
                let backward = horizontal_lift_from(conn, path, t0, &[c0], 0.0, opts)?;
                points.extend(backward.samples.iter().rev().map(|s| (s.t, s.fiber[0])));
                points.pop();
                backward.status.is_complete()
            };
            points.extend(forward.samples.iter().map(|s| (s.t, s.fiber[0])));
            Ok(Curve {
                family: Family::classify(reaches_start, forward.status.is_complete()),
                seed_t: t0,
                seed: c0,
                points,
            })
        })
        .collect()
}

fn cmd_figure1(shared: &Shared, grid_step: f64) -> Result<i32> {
    let setup = setup(shared, "fig1")?;
    if setup.conn.dim() != 1 {
        bail!("figure1 needs a one-dimensional connection");
    }
    let curves = figure_curves(&setup.conn, &setup.path, &setup.opts)?;

    let mut csv = String::from("curve,family,seed_t,seed_fiber,t,fiber,tanh_fiber\n");
    for (i, c) in curves.iter().enumerate() {
        for &(t, y) in &c.points {
            csv.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                c.family.label(),
                fmt_f64(c.seed_t),
                fmt_f64(c.seed),
                fmt_f64(t),
                fmt_f64(y),
                fmt_f64(y.tanh())
            ));
        }
    }
    write_file(&shared.out, "figure1.csv", &csv)?;

    let count = |f: Family| curves.iter().filter(|c| c.family == f).count();
    let families = FamilyCounts {
        from_p_complete: count(Family::FromPComplete),
        from_p_escaped: count(Family::FromPEscaped),
        from_q_escaped: count(Family::FromQEscaped),
        interior: count(Family::Interior),
    };

    let bracket = completion_threshold(&setup.conn, &setup.path, grid_step, &setup.opts)?;
    let v_star = bracket.map(|(lo, hi)| 0.5 * (lo + hi));
    // closed form for the fig1 witness over γ(t) = t: c₀ < cot(1)
    let unit_path = setup.path.position(0.0) == [0.0]
        && setup.path.position(1.0) == [1.0]
        && setup.path.velocity(0.5) == [1.0];
    let target = (setup.conn.name() == "fig1" && unit_path).then(|| 1.0 / 1f64.tan());
    let summary = FigureSummary {
        connection: setup.conn.name().to_string(),
        v_star,
        bracket: bracket.map(|(lo, hi)| [lo, hi]),
        grid_step,
        target,
        abs_error: target.zip(v_star).map(|(t, v)| (v - t).abs()),
        families,
    };
    let json = to_json(&summary)?;
    write_file(&shared.out, "figure1_summary.json", &json)?;
    print!("{json}");
    Ok(EXIT_OK)
}

fn cmd_gallery(out: &mut impl Write) -> Result<i32> {
    writeln!(
        out,
        "{:<22}{:<11}{:<17}{:<13}parameters",
        "name", "dimension", "linear_in_fiber", "growth_hint"
    )?;
    for e in gallery_entries() {
        let dim = e.dimension.map_or("any".to_string(), |d| d.to_string());
        writeln!(
            out,
            "{:<22}{:<11}{:<17}{:<13}{}",
            e.name, dim, e.linear_in_fiber, e.growth_hint, e.parameters
        )?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-0.1), "-1.0000000000000001e-1");
    }

    #[test]
    fn json_floats_round_trip() {
        let s = to_json(&vec![0.1, 1e300, -2.5e-8]).unwrap();
        assert_eq!(
            s,
            "[1.0000000000000001e-1,1.0000000000000001e300,-2.4999999999999999e-8]\n"
        );
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 1e300, -2.5e-8]);
    }

    #[test]
    fn family_classification() {
        assert_eq!(Family::classify(false, false), Family::Interior);
        assert_eq!(Family::classify(true, false), Family::FromPEscaped);
        assert_eq!(Family::classify(false, true).label(), "from_q_escaped");
    }

    #[test]
    fn gallery_table() {
        let mut buf = Vec::new();
        assert_eq!(cmd_gallery(&mut buf).unwrap(), EXIT_OK);
        let text = String::from_utf8(buf).unwrap();
        let fig1 = text.lines().find(|l| l.starts_with("fig1")).unwrap();
        assert!(fig1.split_whitespace().any(|w| w == "2"));
        let sphere = text
            .lines()
            .find(|l| l.starts_with("sphere-stereographic"))
            .unwrap();
        assert_eq!(sphere.split_whitespace().nth(1), Some("2"));
    }

    #[test]
    fn bad_arguments_exit_1() {
        assert_eq!(run(["hlift", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["hlift", "lift", "--connection", "nope"]), EXIT_CONFIG);
        assert_eq!(
            run([
                "hlift",
                "lift",
                "--connection",
                "flat",
                "--path",
                "segment:0:1",
                "--v",
                "1,2"
            ]),
            EXIT_CONFIG
        );
    }
}
