//! `qfi`: runs one estimation scenario and writes its report and sidecar.
//!
//! Exit status: 0 when every bound audit holds, 1 when one fails, 2 on bad
//! input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use paramest::estimate::{AuditVerdict, EstimationReport, Estimator, RunConfig};
use paramest::scenarios::clock::{time_mc_scenario, SearchConfig};
use paramest::scenarios::phase::{binomial_state, chirped, number_state, pair_state, phase_mc_scenario};
use paramest::scenarios::squeezed::{squeezed_mc_scenario, squeezed_nsr, SqueezedParams};
use paramest::C64;
use serde::Serialize;
use serde_json::Value;

/// Directory for report files when `--out` is not given.
const OUT_DIR_ENV: &str = "QFI_OUT_DIR";
const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Squeezed,
    Phase,
    Time,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::Squeezed => "squeezed",
            Scenario::Phase => "phase",
            Scenario::Time => "time",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorKind {
    Mle,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepVar {
    Theta,
    R,
    Phi,
    #[value(name = "N")]
    N,
    #[value(name = "X")]
    X,
}

#[derive(Parser, Debug, Clone)]
#[command(name = "qfi", version, about = "Parameter-estimation scenarios: Monte-Carlo deviation against Fisher bounds")]
struct Args {
    #[arg(long, value_enum)]
    scenario: Scenario,

    /// Squeeze parameter (squeezed).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    r: f64,
    /// Squeeze angle (squeezed).
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    phi: f64,

    /// Fock-space dimension (phase).
    #[arg(long, default_value_t = 128)]
    d: usize,
    /// Number-state fiducial |n⟩ (phase).
    #[arg(long = "fock-state")]
    fock_state: Option<usize>,
    /// Two-level fiducial (|a⟩ + |b⟩)/√2 as `a,b` (phase).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pair: Option<Vec<usize>>,
    /// Centre of the binomial fiducial; defaults to d/4 (phase).
    #[arg(long, allow_negative_numbers = true)]
    center: Option<f64>,
    /// Quadratic spectral phase κ applied to the fiducial (phase).
    #[arg(long, allow_negative_numbers = true)]
    chirp: Option<f64>,

    /// Ring levels n = 1..K (time).
    #[arg(long = "K", default_value_t = 16)]
    k: usize,
    /// Energy-asymmetric fiducial (time).
    #[arg(long)]
    asymmetric: bool,
    /// Search the mixing U and gauge f before measuring (time).
    #[arg(long)]
    search: bool,
    /// Random restarts of the (U, f) search (time).
    #[arg(long, default_value_t = 8)]
    restarts: usize,

    /// Outcome grid size; phase defaults to 4d, time to K².
    #[arg(long = "M")]
    m: Option<usize>,
    /// True parameter value.
    #[arg(long = "X", default_value_t = 0.0, allow_negative_numbers = true)]
    x: f64,
    /// Samples per experiment.
    #[arg(long = "N", default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `mean` for squeezed and `mle` otherwise.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorKind>,

    /// Report file; the sidecar goes next to it as `<stem>.sidecar.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Variable to sweep; emits one CSV row per point.
    #[arg(long, value_enum)]
    sweep: Option<SweepVar>,
    /// Sweep points as `start:stop:count` (inclusive, evenly spaced).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "values")]
    range: Option<String>,
    /// Sweep points as a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Audit(String),
}

impl From<paramest::Error> for Failure {
    fn from(e: paramest::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

struct Run {
    report: EstimationReport,
    verdict: AuditVerdict,
    sidecar: Value,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    schema: u32,
    report: &'a EstimationReport,
    audit: &'a AuditVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    sidecar: Option<&'a Value>,
}

#[derive(Serialize)]
struct SidecarFile<'a> {
    schema: u32,
    scenario: &'a str,
    sidecar: &'a Value,
}

fn validate(args: &Args) -> Result<(), Failure> {
    let s = args.scenario;
    let only = |flag: &str, present: bool, target: Scenario| {
        if present && s != target {
            Err(invalid(format!("--{flag} applies only to --scenario {}", target.name())))
        } else {
            Ok(())
        }
    };
    only("fock-state", args.fock_state.is_some(), Scenario::Phase)?;
    only("pair", args.pair.is_some(), Scenario::Phase)?;
    only("center", args.center.is_some(), Scenario::Phase)?;
    only("chirp", args.chirp.is_some(), Scenario::Phase)?;
    only("asymmetric", args.asymmetric, Scenario::Time)?;
    only("search", args.search, Scenario::Time)?;
    if [args.fock_state.is_some(), args.pair.is_some(), args.center.is_some()].iter().filter(|&&b| b).count() > 1 {
        return Err(invalid("choose one of --fock-state, --pair, --center"));
    }
    if s == Scenario::Squeezed && args.estimator == Some(EstimatorKind::Mle) {
        return Err(invalid("the squeezed scenario reads out the sample mean only"));
    }
    if args.n == 0 {
        return Err(invalid("--N must be positive"));
    }
    if !args.x.is_finite() {
        return Err(invalid("--X must be finite"));
    }
    if let Some(var) = args.sweep {
        let allowed = match var {
            SweepVar::Theta | SweepVar::R | SweepVar::Phi => s == Scenario::Squeezed,
            SweepVar::N | SweepVar::X => true,
        };
        if !allowed {
            return Err(invalid(format!("cannot sweep {var:?} in the {} scenario", s.name())));
        }
        if args.range.is_none() && args.values.is_none() {
            return Err(invalid("--sweep needs --range or --values"));
        }
    } else if args.range.is_some() || args.values.is_some() {
        return Err(invalid("--range/--values need --sweep"));
    }
    Ok(())
}

fn estimator(args: &Args) -> Estimator {
    match args.estimator.unwrap_or(if args.scenario == Scenario::Squeezed {
        EstimatorKind::Mean
    } else {
        EstimatorKind::Mle
    }) {
        EstimatorKind::Mean => Estimator::SampleMean,
        EstimatorKind::Mle => Estimator::MaxLikelihood { window: None },
    }
}

fn phase_fiducial(args: &Args) -> Result<Vec<C64>, Failure> {
    let amps = if let Some(n) = args.fock_state {
        number_state(args.d, n)?
    } else if let Some(pair) = &args.pair {
        pair_state(args.d, pair[0], pair[1])?
    } else {
        binomial_state(args.d, args.center.unwrap_or(args.d as f64 / 4.0))?
    };
    Ok(match args.chirp {
        Some(kappa) => chirped(&amps, kappa),
        None => amps,
    })
}

fn sidecar_json(value: &impl Serialize) -> Result<Value, Failure> {
    serde_json::to_value(value).map_err(|e| invalid(format!("serializing sidecar: {e}")))
}

fn run(args: &Args) -> Result<Run, Failure> {
    let config = RunConfig { x: args.x, n: args.n, trials: args.trials, seed: args.seed, slope_step: None };
    let (report, verdict, sidecar) = match args.scenario {
        Scenario::Squeezed => {
            let (r, v, s) = squeezed_mc_scenario(SqueezedParams::new(args.r, args.phi)?, &config)?;
            (r, v, sidecar_json(&s)?)
        }
        Scenario::Phase => {
            let (r, v, s) = phase_mc_scenario(args.d, &phase_fiducial(args)?, args.m, &estimator(args), &config)?;
            (r, v, sidecar_json(&s)?)
        }
        Scenario::Time => {
            let search = args.search.then(|| SearchConfig {
                restarts: args.restarts,
                seed: args.seed,
                ..SearchConfig::default()
            });
            let m = args.m.unwrap_or(args.k * args.k);
            let (r, v, s) = time_mc_scenario(args.k, m, args.asymmetric, search.as_ref(), &estimator(args), &config)?;
            (r, v, sidecar_json(&s)?)
        }
    };
    Ok(Run { report, verdict, sidecar })
}

fn summary(report: &EstimationReport) -> String {
    let f = |v: Option<f64>| v.map_or("divergent".to_string(), |v| format!("{v:.6}"));
    format!(
        "{} N={} trials={} seed={}: N*mse={} F={:.6} QFI={:.6} ratio_classical={} ratio_quantum={}",
        report.scenario,
        report.n,
        report.trials,
        report.seed,
        f(report.n_mse()),
        report.fisher,
        report.qfi,
        f(report.ratio_classical),
        f(report.ratio_quantum),
    )
}

fn audit_failures(verdict: &AuditVerdict) -> Option<String> {
    let failed: Vec<String> = verdict
        .failures()
        .iter()
        .map(|c| {
            format!(
                "{} (value {}, bound {}, tolerance {:.4})",
                c.name,
                c.value.unwrap_or(f64::NAN),
                c.bound,
                verdict.tolerance
            )
        })
        .collect();
    (!failed.is_empty()).then(|| failed.join("; "))
}

/// Explicit `--out`, else a file under `$QFI_OUT_DIR`, else stdout.
fn destination(args: &Args, default_name: &str) -> Option<PathBuf> {
    args.out.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(|dir| Path::new(&dir).join(default_name)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| invalid(format!("creating {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| invalid(format!("writing {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| invalid(format!("serializing: {e}")))
}

fn emit_single(args: &Args, run: &Run) -> Result<(), Failure> {
    let ext = match args.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let name = format!("{}-seed{}.{ext}", args.scenario.name(), args.seed);
    let body = |sidecar: Option<&Value>| -> Result<String, Failure> {
        match args.format {
            Format::Json => to_json(&ReportFile { schema: SCHEMA, report: &run.report, audit: &run.verdict, sidecar }),
            Format::Csv => Ok(format!("{}\n{}\n", run.report.csv_header(), run.report.csv_row())),
        }
    };
    match destination(args, &name) {
        Some(path) => {
            write_file(&path, &body(None)?)?;
            let stem = path.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
            let side = path.with_file_name(format!("{stem}.sidecar.json"));
            write_file(
                &side,
                &to_json(&SidecarFile { schema: SCHEMA, scenario: args.scenario.name(), sidecar: &run.sidecar })?,
            )
        }
        None => {
            print!("{}", body(Some(&run.sidecar))?);
            Ok(())
        }
    }
}

fn sweep_points(args: &Args) -> Result<Vec<f64>, Failure> {
    let points = if let Some(values) = &args.values {
        values.clone()
    } else {
        let text = args.range.as_deref().unwrap_or_default();
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, count] = parts.as_slice() else {
            return Err(invalid(format!("--range must be start:stop:count, got {text:?}")));
        };
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad number {s:?} in --range")));
        let (start, stop) = (parse(start)?, parse(stop)?);
        let count: usize = count.trim().parse().map_err(|_| invalid(format!("bad count {count:?} in --range")))?;
        match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect(),
        }
    };
    if points.is_empty() {
        return Err(invalid("empty sweep"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sweep values must be finite"));
    }
    Ok(points)
}

fn theta_sweep(args: &Args, points: &[f64]) -> Result<String, Failure> {
    let params = SqueezedParams::new(args.r, args.phi)?;
    let mut out = String::from("theta,tan_theta,nsr\n");
    for &theta in points {
        let nsr = squeezed_nsr(&params, theta)?;
        writeln!(out, "{theta},{},{nsr}", theta.tan()).expect("writing to a String");
    }
    Ok(out)
}

/// One Monte-Carlo run per point; the swept value is added as an extra
/// column unless it is already a fixed one.
fn report_sweep(args: &Args, var: SweepVar, points: &[f64]) -> Result<(String, Vec<String>), Failure> {
    let mut header = None;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &v in points {
        let mut point = args.clone();
        match var {
            SweepVar::R => point.r = v,
            SweepVar::Phi => point.phi = v,
            SweepVar::X => point.x = v,
            SweepVar::N => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(invalid(format!("N sweep values must be positive integers, got {v}")));
                }
                point.n = v as usize;
            }
            SweepVar::Theta => unreachable!("theta sweeps are closed-form"),
        }
        let mut run = run(&point)?;
        let key = match var {
            SweepVar::R => Some("r"),
            SweepVar::Phi => Some("phi"),
            SweepVar::X => Some("X"),
            _ => None,
        };
        if let Some(k) = key {
            run.report.extras.insert(k.into(), v);
        }
        if let Some(msg) = audit_failures(&run.verdict) {
            failures.push(format!("{var:?}={v}: {msg}"));
        }
        eprintln!("{}", summary(&run.report));
        header.get_or_insert_with(|| run.report.csv_header());
        rows.push(run.report.csv_row());
    }
    let mut out = header.expect("at least one point");
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok((out, failures))
}

fn sweep(args: &Args, var: SweepVar) -> Result<(), Failure> {
    if args.format == Format::Json {
        return Err(invalid("sweeps emit CSV; pass --format csv"));
    }
    let points = sweep_points(args)?;
    let (table, failures) = match var {
        SweepVar::Theta => (theta_sweep(args, &points)?, Vec::new()),
        _ => report_sweep(args, var, &points)?,
    };
    let name = format!("{}-sweep-{var:?}-seed{}.csv", args.scenario.name(), args.seed).to_lowercase();
    match destination(args, &name) {
        Some(path) => write_file(&path, &table)?,
        None => print!("{table}"),
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Audit(failures.join("; ")))
    }
}

fn execute(args: &Args) -> Result<(), Failure> {
    validate(args)?;
    if let Some(var) = args.sweep {
        return sweep(args, var);
    }
    let run = run(args)?;
    emit_single(args, &run)?;
    eprintln!("{}", summary(&run.report));
    match audit_failures(&run.verdict) {
        Some(msg) => Err(Failure::Audit(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Audit(msg)) => {
            eprintln!("qfi: bound audit failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("qfi: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use paramest::estimate::InequalityCheck;

    fn args(extra: &[&str]) -> Args {
        Args::parse_from(["qfi"].iter().chain(extra))
    }

    #[test]
    fn audit_failure_names_the_inequality() {
        let verdict = AuditVerdict {
            tolerance: 0.03,
            checks: vec![
                InequalityCheck { name: "N*F*mse >= 1".into(), value: Some(0.5), bound: 1.0, holds: false },
                InequalityCheck { name: "4*N*var(h)*mse >= 1".into(), value: Some(2.0), bound: 1.0, holds: true },
            ],
        };
        let msg = audit_failures(&verdict).unwrap();
        assert!(msg.starts_with("N*F*mse >= 1 (value 0.5"));
        assert!(!msg.contains("var(h)"));
    }

    #[test]
    fn range_is_inclusive() {
        let a = args(&["--scenario", "squeezed", "--sweep", "r", "--range", "0:1:5"]);
        assert_eq!(sweep_points(&a).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let single = args(&["--scenario", "squeezed", "--sweep", "r", "--range", "2:9:1"]);
        assert_eq!(sweep_points(&single).unwrap(), vec![2.0]);
        let bad = args(&["--scenario", "squeezed", "--sweep", "r", "--range", "0:1"]);
        assert!(matches!(sweep_points(&bad), Err(Failure::Invalid(_))));
    }

    #[test]
    fn scenario_specific_flags_are_checked() {
        assert!(validate(&args(&["--scenario", "phase", "--asymmetric"])).is_err());
        assert!(validate(&args(&["--scenario", "time", "--sweep", "r", "--values", "1"])).is_err());
        assert!(validate(&args(&["--scenario", "phase", "--fock-state", "1", "--center", "3"])).is_err());
        assert!(validate(&args(&["--scenario", "squeezed", "--estimator", "mle"])).is_err());
        assert!(validate(&args(&["--scenario", "squeezed", "--values", "1"])).is_err());
        assert!(validate(&args(&["--scenario", "time", "--search", "--X", "-0.5"])).is_ok());
    }

    #[test]
    fn estimator_defaults_follow_the_scenario() {
        assert_eq!(estimator(&args(&["--scenario", "squeezed"])), Estimator::SampleMean);
        assert_eq!(estimator(&args(&["--scenario", "phase"])), Estimator::MaxLikelihood { window: None });
    }
}
