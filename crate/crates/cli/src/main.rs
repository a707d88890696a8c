//! `dhym` — command-line harness over the dhym-core laboratory.
//!
//! Subcommands: `angles | stability | solve | mollify | calibrate`.  One
//! config format (key=value grouped in `[section]`s) feeds all of them; every
//! run is fully seeded, so identical configs produce byte-identical reports.
//! Reports land in the output directory as JSON (with a schema version field)
//! plus CSV tables; the same JSON goes to stdout.  stderr carries prose only,
//! including wall-clock timing, which is deliberately kept out of the report
//! files.
//!
//! Exit codes: 0 success, 2 config/parse/precondition refusal, 3 cone escape,
//! 4 no convergence, 1 anything else (I/O and the like).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use dhym_core::calibration::{self, CalibrationTable};
use dhym_core::currents::{self, ChartPotential, CurrentError, MollifierKernel};
use dhym_core::ring::{ClassVector, RingError, TestFamilyClass, ToyRing, Verdict};
use dhym_core::solver::{newton_solve, PotentialGrid, ProblemFile, SolverError};
use dhym_core::sweeps;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "dhym", about = "Experiment harness for the dhym-core laboratory")]
struct Cli {
    /// Config file (key=value lines grouped in [section]s).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides config and the DHYM_OUT_DIR env var.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker cap for sweep fan-out (reports are assembled in shard order
    /// either way, so this never affects output bytes).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Property sweeps for the arccot-sum angle functionals.
    Angles,
    /// Nakai–Moishezon stability sweep over a ring file.
    Stability,
    /// Newton solve of a twisted problem file.
    Solve,
    /// Mollification / comparison-formula table over a chart file.
    Mollify,
    /// Regenerate the calibration table.
    Calibrate,
}

#[derive(Debug)]
enum CliError {
    /// Bad or missing config value; `field` is `section.key`.
    Config { field: String, msg: String },
    /// Input file parse failures and precondition refusals.
    Input(String),
    Solver(SolverError),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<RingError> for CliError {
    fn from(e: RingError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CurrentError> for CliError {
    fn from(e: CurrentError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => 2,
            CliError::Solver(SolverError::ConeEscape { .. }) => 3,
            CliError::Solver(SolverError::MaxIterations { .. }) => 4,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config { field, msg } => format!("config error at `{field}`: {msg}"),
            CliError::Input(msg) => msg.clone(),
            CliError::Solver(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Parsed `[section]` / `key = value` config with typed accessors.  Every
/// lookup error names the offending `section.key`.
struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    fn empty() -> Self {
        Config {
            sections: BTreeMap::new(),
        }
    }

    fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = "global".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config {
                    field: format!("line {}", i + 1),
                    msg: format!("expected `key = value` or `[section]`, got {line:?}"),
                });
            };
            sections
                .entry(current.clone())
                .or_default()
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Config { sections })
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    fn get<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CliError::Config {
                field: format!("{section}.{key}"),
                msg: format!("cannot parse {s:?}"),
            }),
        }
    }

    fn get_list<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, CliError>
    where
        T: Clone,
    {
        match self.raw(section, key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split_whitespace()
                .map(|tok| {
                    tok.parse().map_err(|_| CliError::Config {
                        field: format!("{section}.{key}"),
                        msg: format!("cannot parse list entry {tok:?}"),
                    })
                })
                .collect(),
        }
    }

    fn get_path(&self, section: &str, key: &str, default: &str) -> PathBuf {
        PathBuf::from(self.raw(section, key).unwrap_or(default))
    }

    /// Positive-tolerance guard shared by all subcommands.
    fn positive(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.get(section, key, default)?;
        if !(v > 0.0) {
            return Err(CliError::Config {
                field: format!("{section}.{key}"),
                msg: format!("must be > 0, got {v}"),
            });
        }
        Ok(v)
    }
}

struct Context {
    config: Config,
    seed: u64,
    out_dir: PathBuf,
}

impl Context {
    fn build(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config {
                    field: "config".into(),
                    msg: format!("{}: {e}", p.display()),
                })?;
                Config::parse(&text)?
            }
            None => Config::empty(),
        };
        let seed = match cli.seed {
            Some(s) => s,
            None => config.get("global", "seed", 42u64)?,
        };
        if let Some(j) = cli.jobs {
            if j == 0 {
                return Err(CliError::Config {
                    field: "jobs".into(),
                    msg: "must be ≥ 1".into(),
                });
            }
        }
        let out_dir = cli
            .out
            .clone()
            .or_else(|| config.raw("global", "out").map(PathBuf::from))
            .or_else(|| std::env::var_os("DHYM_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("dhym-out"));
        Ok(Context {
            config,
            seed,
            out_dir,
        })
    }

    /// Serializes `report` to the output directory and stdout.
    fn emit<T: Serialize>(&self, name: &str, report: &T) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut json = serde_json::to_string_pretty(report).expect("report serialization");
        json.push('\n');
        std::fs::write(self.out_dir.join(name), &json)?;
        print!("{json}");
        Ok(())
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut w = csv::Writer::from_path(self.out_dir.join(name))
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        let io_err = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(row).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = std::time::Instant::now();
    let result = Context::build(&cli).and_then(|ctx| match cli.command {
        Command::Angles => run_angles(&ctx),
        Command::Stability => run_stability(&ctx),
        Command::Solve => run_solve(&ctx),
        Command::Mollify => run_mollify(&ctx),
        Command::Calibrate => run_calibrate(&ctx),
    });
    match result {
        Ok(()) => {
            // wall-clock stays on stderr so report files remain byte-stable
            eprintln!("done in {:.3} s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

// ---------------------------------------------------------------------------
// angles
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SuiteRow {
    suite: String,
    n: usize,
    samples: usize,
    violations: usize,
    worst_margin: f64,
}

#[derive(Serialize)]
struct AnglesReport {
    schema_version: u32,
    command: String,
    seed: u64,
    tolerance: f64,
    suites: Vec<SuiteRow>,
    total_violations: usize,
}

fn run_angles(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dims: Vec<usize> = cfg.get_list("angles", "dims", &[2usize, 3, 4, 5])?;
    let samples: usize = cfg.get("angles", "samples", 500usize)?;
    let tolerance = cfg.positive("angles", "tolerance", 1e-9)?;
    let var_pairs: usize = cfg.get("angles", "variational_pairs", 20usize)?;
    let var_trials: usize = cfg.get("angles", "variational_trials", 400usize)?;
    if dims.is_empty() || dims.iter().any(|&n| n < 1) {
        return Err(CliError::Config {
            field: "angles.dims".into(),
            msg: "need at least one dimension ≥ 1".into(),
        });
    }

    let sweeps_by_name: [(&str, fn(usize, usize, u64) -> sweeps::SweepReport); 6] = [
        ("monotonicity", sweeps::monotonicity_sweep),
        ("order", sweeps::order_sweep),
        ("concavity", sweeps::concavity_sweep),
        ("convexity", sweeps::convexity_sweep),
        ("dominance", sweeps::dominance_sweep),
        ("congruence", sweeps::congruence_sweep),
    ];
    let mut suites = Vec::new();
    for &n in &dims {
        for (name, sweep) in &sweeps_by_name {
            let rep = sweep(n, samples, ctx.seed);
            suites.push(SuiteRow {
                suite: name.to_string(),
                n,
                samples: rep.samples,
                violations: rep.violations,
                worst_margin: rep.worst_margin,
            });
        }
        let rep = sweeps::variational_sweep(n, n, var_pairs, var_trials, ctx.seed);
        suites.push(SuiteRow {
            suite: "variational".to_string(),
            n,
            samples: rep.samples,
            violations: rep.violations,
            worst_margin: rep.worst_margin,
        });
    }
    let total_violations = suites.iter().map(|s| s.violations).sum();
    let report = AnglesReport {
        schema_version: SCHEMA_VERSION,
        command: "angles".into(),
        seed: ctx.seed,
        tolerance,
        suites,
        total_violations,
    };
    let rows: Vec<Vec<String>> = report
        .suites
        .iter()
        .map(|s| {
            vec![
                s.suite.clone(),
                s.n.to_string(),
                s.samples.to_string(),
                s.violations.to_string(),
                format!("{:e}", s.worst_margin),
            ]
        })
        .collect();
    ctx.write_csv(
        "angles.csv",
        &["suite", "n", "samples", "violations", "worst_margin"],
        &rows,
    )?;
    ctx.emit("angles_report.json", &report)?;
    eprintln!(
        "angle sweeps: {} suites, {} violations",
        report.suites.len(),
        total_violations
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CycleRow {
    label: String,
    verdict: Verdict,
    coefficients: Vec<f64>,
}

#[derive(Serialize)]
struct StabilityReport {
    schema_version: u32,
    command: String,
    ring: String,
    theta0: f64,
    central_constraint: f64,
    cycles: Vec<CycleRow>,
}

fn class_from_cfg(
    cfg: &Config,
    key: &str,
    len: usize,
    default: &[i64],
) -> Result<ClassVector, CliError> {
    let coeffs: Vec<i64> = cfg.get_list("stability", key, default)?;
    if coeffs.len() != len {
        return Err(CliError::Config {
            field: format!("stability.{key}"),
            msg: format!("expected {len} coefficients, got {}", coeffs.len()),
        });
    }
    Ok(ClassVector::from_ints(&coeffs))
}

fn run_stability(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let ring_path = cfg.get_path("stability", "ring", "data/rings/cp2.ring");
    let text = std::fs::read_to_string(&ring_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", ring_path.display())))?;
    let ring = ToyRing::parse(&text)?;

    let len = ring.basis.len();
    // Defaults reproduce the CP² benchmark: α = 2H, β = H, γ = H.
    let mut dflt = vec![0i64; len];
    dflt[0] = 2;
    let alpha = class_from_cfg(cfg, "alpha", len, &dflt)?;
    dflt[0] = 1;
    let beta = class_from_cfg(cfg, "beta", len, &dflt)?;
    let gamma = class_from_cfg(cfg, "gamma", len, &dflt)?;
    ring.is_kahler_direction(&gamma)?;

    let theta0 = ring.theta0_from_classes(&alpha, &beta)?;
    let central = ring.central_constraint(&alpha, &beta, theta0)?;

    let t_max = cfg.positive("stability", "t_max", 5.0)?;
    let t_steps: usize = cfg.get("stability", "t_steps", 101usize)?;
    let t_grid: Vec<f64> = (0..t_steps)
        .map(|i| t_max * i as f64 / (t_steps.max(2) - 1) as f64)
        .collect();

    let all: Vec<String> = ring.subvarieties.iter().map(|s| s.label.clone()).collect();
    let cycles: Vec<String> = match cfg.raw("stability", "cycles") {
        Some(s) => s.split_whitespace().map(str::to_string).collect(),
        None => all,
    };

    let fam = TestFamilyClass {
        base: alpha,
        background: beta,
        direction: gamma,
        t_threshold: None,
    };
    let verdicts = ring.check_stable(&fam, theta0, &cycles, &t_grid)?;
    let mut rows = Vec::new();
    for (label, verdict) in verdicts {
        let coefficients = ring.stab_poly_coeffs(&label, &fam, theta0)?;
        rows.push(CycleRow {
            label,
            verdict,
            coefficients,
        });
    }

    let report = StabilityReport {
        schema_version: SCHEMA_VERSION,
        command: "stability".into(),
        ring: ring.name.clone(),
        theta0,
        central_constraint: central,
        cycles: rows,
    };
    let csv_rows: Vec<Vec<String>> = report
        .cycles
        .iter()
        .map(|c| {
            let (verdict, detail) = match &c.verdict {
                Verdict::Stable => ("stable".to_string(), String::new()),
                Verdict::Unstable { witness_t } => ("unstable".to_string(), format!("{witness_t}")),
                Verdict::Inconclusive { sign_pattern } => {
                    ("inconclusive".to_string(), sign_pattern.clone())
                }
            };
            let mut coeffs = String::new();
            for (i, v) in c.coefficients.iter().enumerate() {
                if i > 0 {
                    coeffs.push(' ');
                }
                let _ = write!(coeffs, "{v}");
            }
            vec![c.label.clone(), verdict, detail, coeffs]
        })
        .collect();
    ctx.write_csv(
        "stability.csv",
        &["cycle", "verdict", "detail", "coefficients"],
        &csv_rows,
    )?;
    ctx.emit("stability_report.json", &report)?;
    eprintln!(
        "ring {}: theta0 = {:.6}, {} cycles checked",
        report.ring,
        theta0,
        report.cycles.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveJson {
    schema_version: u32,
    command: String,
    problem: String,
    m: usize,
    grid: Vec<usize>,
    iterations: usize,
    converged: bool,
    residual_history: Vec<f64>,
    cone_margin_p: Vec<f64>,
    cone_margin_q: Vec<f64>,
    compatibility_drift: Vec<f64>,
    linear_iterations: Vec<usize>,
    /// sup|φ − φ*| when the twist was manufactured from a known φ*.
    sup_error: Option<f64>,
}

fn run_solve(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let path = cfg.get_path("solve", "problem", "data/problems/manufactured_m1.problem");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let pf = ProblemFile::parse(&text).map_err(CliError::Solver)?;
    let (prob, phi_star) = pf.build().map_err(CliError::Solver)?;

    let tol = cfg.positive("solve", "tol", 1e-11)?;
    let max_iter: usize = cfg.get("solve", "max_iter", 30usize)?;
    let margin = cfg.positive("solve", "margin", 1e-3)?;

    let init = PotentialGrid::zeros(prob.points());
    let (phi, rep) = newton_solve(&prob, &init, tol, max_iter, margin).map_err(CliError::Solver)?;
    let sup_error = phi_star.as_ref().map(|star| phi.sup_distance(star));

    let report = SolveJson {
        schema_version: SCHEMA_VERSION,
        command: "solve".into(),
        problem: path.display().to_string(),
        m: pf.m,
        grid: pf.grid.clone(),
        iterations: rep.iterations,
        converged: rep.converged,
        residual_history: rep.residual_history.clone(),
        cone_margin_p: rep.cone_margin_p.clone(),
        cone_margin_q: rep.cone_margin_q.clone(),
        compatibility_drift: rep.compatibility_drift.clone(),
        linear_iterations: rep.linear_iterations.clone(),
        sup_error,
    };
    let hist_rows: Vec<Vec<String>> = report
        .residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), format!("{r:e}")])
        .collect();
    ctx.write_csv("residual_history.csv", &["iteration", "residual"], &hist_rows)?;
    let phi_rows: Vec<Vec<String>> = phi
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), format!("{v:e}")])
        .collect();
    ctx.write_csv("phi.csv", &["index", "value"], &phi_rows)?;
    ctx.emit("solve_report.json", &report)?;
    match sup_error {
        Some(e) => eprintln!(
            "converged in {} iterations, sup error vs manufactured potential {:.3e}",
            report.iterations, e
        ),
        None => eprintln!("converged in {} iterations", report.iterations),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mollify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MollifyRow {
    r: f64,
    gap_half: f64,
    gap_moll: f64,
    nu: f64,
    bound_half: f64,
    bound_moll: f64,
    ok_half: bool,
    ok_moll: bool,
}

#[derive(Serialize)]
struct MollifyReport {
    schema_version: u32,
    command: String,
    chart: String,
    m: usize,
    eta: f64,
    psh_declared: bool,
    rows: Vec<MollifyRow>,
}

/// Chart file: `m`, `radius`, `n`, `psh`, and a `kind` line selecting the
/// sampled potential (`logpole` for log|z|², `quadratic a b c` for
/// a|z|² + b·Re(z²) + c·Re(z) on a one-dimensional chart).
fn parse_chart(text: &str) -> Result<ChartPotential, CliError> {
    let mut m = 1usize;
    let mut radius = 1.0f64;
    let mut n = 129usize;
    let mut psh = true;
    let mut kind: Option<Vec<String>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| CliError::Input(format!("chart line {}: {msg}", i + 1));
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let one = || {
            rest.first()
                .copied()
                .ok_or_else(|| bad(format!("{key} needs a value")))
        };
        match key {
            "m" => m = one()?.parse().map_err(|_| bad("bad m".into()))?,
            "radius" => radius = one()?.parse().map_err(|_| bad("bad radius".into()))?,
            "n" => n = one()?.parse().map_err(|_| bad("bad n".into()))?,
            "psh" => psh = one()?.parse().map_err(|_| bad("bad psh".into()))?,
            "kind" => kind = Some(rest.iter().map(|s| s.to_string()).collect()),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| CliError::Input("chart file: missing `kind` line".into()))?;
    match kind.first().map(String::as_str) {
        Some("logpole") => Ok(ChartPotential::from_fn(m, radius, n, psh, |x| {
            x.iter().map(|v| v * v).sum::<f64>().ln()
        })?),
        Some("quadratic") => {
            if m != 1 {
                return Err(CliError::Input(
                    "chart kind `quadratic` requires m = 1".into(),
                ));
            }
            let coef: Vec<f64> = kind[1..]
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| CliError::Input(format!("bad quadratic coefficient {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            if coef.len() != 3 {
                return Err(CliError::Input(
                    "chart kind `quadratic` needs 3 coefficients".into(),
                ));
            }
            let (a, b, c) = (coef[0], coef[1], coef[2]);
            Ok(ChartPotential::from_fn(m, radius, n, psh, move |x| {
                a * (x[0] * x[0] + x[1] * x[1]) + b * (x[0] * x[0] - x[1] * x[1]) + c * x[0]
            })?)
        }
        other => Err(CliError::Input(format!("unknown chart kind {other:?}"))),
    }
}

fn run_mollify(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let path = cfg.get_path("mollify", "chart", "data/charts/logpole.chart");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let chart = parse_chart(&text)?;
    let radii: Vec<f64> = cfg.get_list("mollify", "radii", &[0.4375, 0.375, 0.25])?;
    let tol = cfg.positive("mollify", "tolerance", 1e-9)?;

    let kernel = MollifierKernel::new(chart.m);
    let eta = currents::eta_constant(chart.m, &kernel);
    let origin = chart.origin_index();
    let mut rows = Vec::new();
    for &r in &radii {
        let row = currents::comparison_check(&chart, &kernel, origin, r)?;
        let bound_half = std::f64::consts::LN_2 * row.nu;
        let bound_moll = eta * row.nu;
        // the comparison formulas are only a contract for PSH-declared charts
        let ok_half = !chart.psh_declared
            || (row.gap_half >= -tol && row.gap_half <= bound_half + tol);
        let ok_moll = !chart.psh_declared
            || (row.gap_moll >= -tol && row.gap_moll <= bound_moll + tol);
        rows.push(MollifyRow {
            r,
            gap_half: row.gap_half,
            gap_moll: row.gap_moll,
            nu: row.nu,
            bound_half,
            bound_moll,
            ok_half,
            ok_moll,
        });
    }
    let report = MollifyReport {
        schema_version: SCHEMA_VERSION,
        command: "mollify".into(),
        chart: path.display().to_string(),
        m: chart.m,
        eta,
        psh_declared: chart.psh_declared,
        rows,
    };
    let csv_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.r),
                format!("{:e}", r.gap_half),
                format!("{:e}", r.gap_moll),
                format!("{:e}", r.nu),
                format!("{:e}", r.bound_half),
                format!("{:e}", r.bound_moll),
                r.ok_half.to_string(),
                r.ok_moll.to_string(),
            ]
        })
        .collect();
    ctx.write_csv(
        "mollify.csv",
        &[
            "r", "gap_half", "gap_moll", "nu", "bound_half", "bound_moll", "ok_half", "ok_moll",
        ],
        &csv_rows,
    )?;
    ctx.emit("mollify_report.json", &report)?;
    let failures = report
        .rows
        .iter()
        .filter(|r| !(r.ok_half && r.ok_moll))
        .count();
    eprintln!(
        "comparison table: {} radii, eta = {:.6}, {} bound failures",
        report.rows.len(),
        eta,
        failures
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CalibrateReport {
    schema_version: u32,
    command: String,
    seed: u64,
    samples: usize,
    table: String,
}

fn run_calibrate(ctx: &Context) -> Result<(), CliError> {
    let samples: usize = ctx.config.get("calibrate", "samples", 200usize)?;
    if samples == 0 {
        return Err(CliError::Config {
            field: "calibrate.samples".into(),
            msg: "must be ≥ 1".into(),
        });
    }
    let table: CalibrationTable = calibration::build_default_table(samples, ctx.seed);
    std::fs::create_dir_all(&ctx.out_dir)?;
    let path = ctx.out_dir.join("calibration.txt");
    table
        .save(&path)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let report = CalibrateReport {
        schema_version: SCHEMA_VERSION,
        command: "calibrate".into(),
        seed: ctx.seed,
        samples,
        table: table.to_text(),
    };
    ctx.emit("calibrate_report.json", &report)?;
    eprintln!("calibration table written to {}", path.display());
    Ok(())
}
