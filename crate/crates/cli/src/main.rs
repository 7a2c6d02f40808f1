//! `drawstring`: build, certify and report.
//!
//! Exit status is 0 when every requested certification passes, 2 when one
//! fails and 1 on input or runtime errors.

mod config;

use clap::{Parser, Subcommand};
use config::{InputError, Resolved};
use drawstring::certifier::{certify_drawstring, certify_with, closed_form_cross_check, v0, CertificationReport, CertifyOptions};
use drawstring::drawstring::{build, Method};
use drawstring::error::Error;
use drawstring::flat_torus::{self, discrete_extremal_length, FlatTorus, GreenEvaluator};
use drawstring::radial_metric::{profile_csv, prototype_profile, w1p_deviation};
use drawstring::sequence::{build_sequence, mina_certificate, scrunch_report, sequence_csv};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "drawstring", version, about = "Construct and certify drawstring metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the JSON report (stdout when omitted).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Where to write the CSV plot data.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    r0: Option<String>,
    /// Construction, A or B.
    #[arg(long, global = true, allow_hyphen_values = true)]
    method: Option<String>,
    /// T3 or S2xS1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    topology: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    i_max: Option<String>,
    /// Comma-separated Sobolev exponents.
    #[arg(long, global = true, allow_hyphen_values = true)]
    p: Option<String>,
    /// Lattice parameters as `re,im;re,im`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    z: Option<String>,
    /// Cap on `Im z`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    l: Option<String>,
    /// Certification grid size.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    fd_points: Option<String>,
    /// Coarse grid of the torus potentials (the fine grid doubles it).
    #[arg(long, global = true, allow_hyphen_values = true)]
    torus_n: Option<String>,
    /// Random point pairs per lattice for fitting the Green's bound.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pairs: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Column counts of the discrete extremal length check.
    #[arg(long, global = true, allow_hyphen_values = true)]
    el_levels: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Build one drawstring and certify it.
    Construct,
    /// Certify one drawstring with explicit grid sizes.
    Certify,
    /// Build a sequence and its scrunching diagnostics.
    Sequence,
    /// Flat torus Green's function and potential estimates.
    TorusGreen,
    /// Compare both constructions on one spec and the closed-form prototype.
    CrossCheck,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("k", &self.k),
            ("epsilon", &self.epsilon),
            ("delta", &self.delta),
            ("r0", &self.r0),
            ("method", &self.method),
            ("topology", &self.topology),
            ("i_max", &self.i_max),
            ("p", &self.p),
            ("z", &self.z),
            ("l", &self.l),
            ("grid", &self.grid),
            ("fd_points", &self.fd_points),
            ("torus_n", &self.torus_n),
            ("pairs", &self.pairs),
            ("seed", &self.seed),
            ("el_levels", &self.el_levels),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema: u32,
    command: Option<Command>,
    status: &'static str,
    timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a Resolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorObject>,
}

#[derive(Serialize)]
struct ErrorObject {
    kind: &'static str,
    field: Option<String>,
    message: String,
}

impl From<InputError> for ErrorObject {
    fn from(e: InputError) -> Self {
        ErrorObject { kind: "input", field: Some(e.field), message: e.message }
    }
}

impl From<Error> for ErrorObject {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { field, msg } => ErrorObject { kind: "input", field: Some(field), message: msg },
            other => ErrorObject { kind: "runtime", field: None, message: other.to_string() },
        }
    }
}

struct Outcome {
    pass: bool,
    result: Value,
    csv: Option<String>,
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn certification_csv(r: &CertificationReport) -> String {
    let mut s = String::from("condition,status,margin,r,ln_r,grid,tol\n");
    for (name, c) in &r.conditions {
        let status = if c.status == drawstring::certifier::Status::Pass { "pass" } else { "fail" };
        writeln!(s, "{name},{status},{:e},{:e},{:e},{},{:e}", c.margin, c.r, c.ln_r, c.grid, c.tol).unwrap();
    }
    s
}

fn construct(cfg: &Resolved) -> Result<Outcome, Error> {
    let d = build(&cfg.spec())?;
    let report = certify_drawstring(&d);
    Ok(Outcome {
        pass: report.all_pass && report.fd_pass,
        csv: Some(profile_csv(&d.profile, 2000)),
        result: json!({ "certification": to_value(&report), "r_max": d.profile.r_max, "segments": d.profile.segments.len() }),
    })
}

fn certify(cfg: &Resolved) -> Result<Outcome, Error> {
    let d = build(&cfg.spec())?;
    let opts = CertifyOptions { grid: cfg.grid, fd_points: cfg.fd_points, fd_seed: cfg.seed };
    let report = certify_with(&d.profile, &d.spec, Some(&d.params), opts);
    Ok(Outcome {
        pass: report.all_pass && report.fd_pass,
        csv: Some(certification_csv(&report)),
        result: json!({ "certification": to_value(&report) }),
    })
}

fn sequence(cfg: &Resolved) -> Result<Outcome, Error> {
    let seq = build_sequence(cfg.topology, cfg.i_max, cfg.method)?;
    let records = scrunch_report(&seq)?;
    let mut members = Vec::new();
    let mut pass = true;
    for (m, rec) in seq.iter().zip(&records) {
        let cert = mina_certificate(m.profile(), cfg.topology);
        let w1p = cfg.p.iter().map(|p| w1p_deviation(m.profile(), &m.reference, *p)).collect::<Result<Vec<_>, _>>()?;
        pass &= rec.holds() && cert.valid && m.report.fd_pass;
        members.push(json!({
            "i": m.i,
            "spec": to_value(&m.drawstring.spec),
            "r1": m.drawstring.params.r1(),
            "v0": m.report.v0,
            "certified": m.report.all_pass,
            "failures": m.report.failures(),
            "scrunch": to_value(rec),
            "min_a": to_value(&cert),
            "w1p": to_value(&w1p),
        }));
    }
    Ok(Outcome {
        pass,
        csv: Some(sequence_csv(&seq, &records)?),
        result: json!({ "topology": cfg.topology, "method": cfg.method, "grid": 10_000, "members": members }),
    })
}

fn torus_green(cfg: &Resolved) -> Result<Outcome, Error> {
    let zs = cfg.lattices();
    let summary = flat_torus::torus_summary(&zs, cfg.l, cfg.torus_n, cfg.pairs, cfg.seed)?;
    let mut extremal = Vec::new();
    let mut el_ok = true;
    for z in &zs {
        let t = FlatTorus::new(*z, cfg.l)?;
        let levels = cfg.el_levels.iter().map(|n| discrete_extremal_length(&t, *n)).collect::<Result<Vec<_>, _>>()?;
        el_ok &= levels.iter().all(|d| d.sup <= d.analytic * (1.0 + 1e-12));
        extremal.push(levels);
    }
    let pass = el_ok
        && summary.c2 <= summary.c2_envelope
        && summary.tail_bound < 1e-12
        && summary.mean_integral.iter().all(|m| m.abs() < 1e-8)
        && summary.systole.iter().all(|s| (s - 1.0).abs() < 1e-12);
    let ev = GreenEvaluator::new(FlatTorus::new(zs[0], cfg.l)?);
    Ok(Outcome {
        pass,
        csv: Some(flat_torus::green_csv(&ev, cfg.torus_n)),
        result: json!({ "summary": to_value(&summary), "discrete_extremal_length": to_value(&extremal), "refine_tol": flat_torus::REFINE_TOL }),
    })
}

fn cross_check(cfg: &Resolved) -> Result<Outcome, Error> {
    let mut rows = Vec::new();
    let mut csv = String::from("method,r1,v0,axis_distance,tube_volume\n");
    let mut pass = true;
    // both constructions share the smaller of their admissible outer radii
    let specs = [Method::A, Method::B].map(|method| {
        let mut spec = cfg.spec();
        spec.method = method;
        spec
    });
    let own: Vec<f64> = specs.iter().map(|s| build(s).map(|d| d.params.r1())).collect::<Result<_, _>>()?;
    let shared = own.iter().copied().fold(f64::INFINITY, f64::min);
    for (mut spec, r1_own) in specs.into_iter().zip(own) {
        let method = spec.method;
        spec.r1_max = Some(shared);
        let d = build(&spec)?;
        let rep = certify_drawstring(&d);
        let r1 = d.params.r1();
        let vol0 = v0(spec.k, r1);
        pass &= rep.all_pass && rep.fd_pass && rep.axis_distance < spec.r0 && rep.tube_volume < 100.0 * vol0;
        writeln!(csv, "{method:?},{r1:e},{vol0:e},{:e},{:e}", rep.axis_distance, rep.tube_volume).unwrap();
        rows.push(json!({
            "method": method,
            "r1_uncapped": r1_own,
            "r1": r1,
            "v0": vol0,
            "axis_distance": rep.axis_distance,
            "tube_volume": rep.tube_volume,
            "certified": rep.all_pass,
            "fd_pass": rep.fd_pass,
            "failures": rep.failures(),
        }));
    }
    let (va, vb) = (rows[0]["tube_volume"].as_f64().unwrap_or(f64::NAN), rows[1]["tube_volume"].as_f64().unwrap_or(f64::NAN));
    let ratio = va.max(vb) / va.min(vb);
    let proto = prototype_profile(0.1, 0.1, (-3.0f64).exp())?;
    let residual = closed_form_cross_check(&proto)?;
    pass &= ratio <= 20.0 && residual <= 1e-8;
    Ok(Outcome {
        pass,
        csv: Some(csv),
        result: json!({
            "constructions": rows,
            "shared_r1_cap": shared,
            "volume_ratio": ratio,
            "volume_ratio_limit": 20.0,
            "prototype_closed_form_residual": residual,
            "prototype_tol": 1e-8,
        }),
    })
}

fn set_threads() -> Result<(), InputError> {
    let Ok(v) = std::env::var("DRAWSTRING_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| InputError::new("DRAWSTRING_THREADS", format!("not a count: {v:?}")))?;
    if n == 0 {
        return Err(InputError::new("DRAWSTRING_THREADS", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| InputError::new("DRAWSTRING_THREADS", e.to_string()))
}

fn emit(path: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(cli_report: &Option<PathBuf>, report: &Report) -> ExitCode {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    if let Err(e) = emit(cli_report, &text) {
        eprintln!("drawstring: cannot write report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(exit_status(report.status))
}

fn exit_status(status: &str) -> u8 {
    match status {
        "pass" => 0,
        "fail" => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            let field = e
                .get(clap::error::ContextKind::InvalidArg)
                .map(|v| v.to_string().trim_start_matches('-').split([' ', '=']).next().unwrap_or("").replace('-', "_"))
                .unwrap_or_else(|| "arguments".into());
            let report = Report {
                schema: 1,
                command: None,
                status: "error",
                timestamp: timestamp(),
                config: None,
                result: None,
                error: Some(ErrorObject { kind: "input", field: Some(field), message: e.kind().to_string() }),
            };
            return finish(&None, &report);
        }
    };
    let fail = |err: ErrorObject| {
        eprintln!("drawstring: {}{}", err.field.as_deref().map(|f| format!("{f}: ")).unwrap_or_default(), err.message);
        Report { schema: 1, command: Some(cli.command), status: "error", timestamp: timestamp(), config: None, result: None, error: Some(err) }
    };
    if let Err(e) = set_threads() {
        return finish(&cli.report, &fail(e.into()));
    }
    let file = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match config::parse_file(&text) {
                Ok(m) => m,
                Err(e) => return finish(&cli.report, &fail(e.into())),
            },
            Err(e) => return finish(&cli.report, &fail(InputError::new("config", format!("{}: {e}", path.display())).into())),
        },
        None => BTreeMap::new(),
    };
    let cfg = match Resolved::merge(&file, &cli.flags()) {
        Ok(c) => c,
        Err(e) => return finish(&cli.report, &fail(e.into())),
    };
    let outcome = match cli.command {
        Command::Construct => construct(&cfg),
        Command::Certify => certify(&cfg),
        Command::Sequence => sequence(&cfg),
        Command::TorusGreen => torus_green(&cfg),
        Command::CrossCheck => cross_check(&cfg),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let mut r = fail(e.into());
            r.config = Some(&cfg);
            return finish(&cli.report, &r);
        }
    };
    if let (Some(path), Some(csv)) = (&cli.csv, &outcome.csv) {
        if let Err(e) = std::fs::write(path, csv) {
            let mut r = fail(InputError::new("csv", format!("{}: {e}", path.display())).into());
            r.config = Some(&cfg);
            return finish(&cli.report, &r);
        }
    }
    let report = Report {
        schema: 1,
        command: Some(cli.command),
        status: if outcome.pass { "pass" } else { "fail" },
        timestamp: timestamp(),
        config: Some(&cfg),
        result: Some(outcome.result),
        error: None,
    };
    finish(&cli.report, &report)
}
