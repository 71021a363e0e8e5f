//! Configuration-driven entry points behind the `ricci-disk` binary.
//!
//! A config file is a flat list of `key = value` lines; `#` starts a comment.
//! Every value is validated at load time and errors carry the line number.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::entropy::WParams;
use crate::error::{Error, Result};
use crate::flow::{FlowSchedule, FlowTrajectory, Termination};
use crate::grid::{Closure, GridSpec};
use crate::initial_data::{CapParams, PerturbationParams};
use crate::verify::{self, FlowSetup, IdentityReport, ManufacturedField};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EARLY: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

const KEYS: [&str; 15] = [
    "grid.n_r",
    "grid.n_theta",
    "initial.cap_c",
    "initial.eps",
    "initial.mode",
    "schedule.t_end",
    "schedule.cfl_safety",
    "schedule.record_every",
    "w.horizon",
    "out.trajectory_csv",
    "out.report_jsonl",
    "verify.checks",
    "convergence.levels",
    "convergence.check",
    "out.convergence_csv",
];

/// Names accepted in `verify.checks`.
pub const CHECKS: [&str; 16] = [
    "theorem_hamilton",
    "theorem_guo",
    "avg_evolution",
    "kappa_evolution",
    "kappa_closed_form",
    "normal_lemmas",
    "second_derivative_n",
    "monotonicity",
    "euler_form",
    "relation",
    "lemma_time2",
    "gauss_bonnet",
    "reilly",
    "lemma_useful",
    "negative.incompatible_bc",
    "negative.corrupted_de",
];

/// Names accepted in `convergence.check`.
pub const STUDIES: [&str; 7] = [
    "reilly",
    "lemma_useful",
    "lemma_time2",
    "gauss_bonnet",
    "entropy_constancy",
    "theorem_hamilton",
    "theorem_guo",
];

/// One entry of `verify.checks`; a leading `!` marks an expected failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckRequest {
    pub name: String,
    pub expect_fail: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub cap: CapParams,
    pub perturbation: PerturbationParams,
    pub schedule: FlowSchedule,
    pub w_horizon: f64,
    pub trajectory_csv: Option<PathBuf>,
    pub report_jsonl: Option<PathBuf>,
    pub checks: Option<Vec<CheckRequest>>,
    pub convergence_levels: Option<Vec<GridSpec>>,
    pub convergence_check: Option<String>,
    pub convergence_csv: Option<PathBuf>,
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

struct Table<'a>(BTreeMap<&'a str, Entry<'a>>);

impl<'a> Table<'a> {
    fn get(&self, key: &str) -> Option<&Entry<'a>> {
        self.0.get(key)
    }

    fn require(&self, key: &str) -> Result<&Entry<'a>> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str, what: &str) -> Result<(usize, V)> {
        let e = self.require(key)?;
        let v = e.value.parse::<V>().map_err(|_| {
            Error::Config(format!("line {}: `{key}` expects {what}, got `{}`", e.line, e.value))
        })?;
        Ok((e.line, v))
    }

    fn real(&self, key: &str) -> Result<(usize, f64)> {
        let (line, v) = self.parsed::<f64>(key, "a real number")?;
        if !v.is_finite() {
            return Err(Error::Config(format!("line {line}: `{key}` must be finite")));
        }
        Ok((line, v))
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) if e.value.is_empty() => {
                Err(Error::Config(format!("line {}: `{key}` is empty", e.line)))
            }
            Some(e) => Ok(Some(PathBuf::from(e.value))),
        }
    }
}

fn at_line(line: usize, key: &str, e: Error) -> Error {
    let msg = match e {
        Error::Config(m) | Error::Domain(m) | Error::Usage(m) => m,
        other => other.to_string(),
    };
    Error::Config(format!("line {line}: `{key}`: {msg}"))
}

fn parse_level(s: &str) -> Option<GridSpec> {
    let (a, b) = s.split_once('x')?;
    Some(GridSpec::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected `key = value`, got `{body}`")));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
            }
            if let Some(prev) = map.insert(key, Entry { line, value: value.trim() }) {
                return Err(Error::Config(format!(
                    "line {line}: duplicate key `{key}` (first set on line {})",
                    prev.line
                )));
            }
        }
        let t = Table(map);

        let (_, n_r) = t.parsed::<usize>("grid.n_r", "a positive integer")?;
        let (line_nt, n_theta) = t.parsed::<usize>("grid.n_theta", "a positive integer")?;
        let grid = GridSpec::new(n_r, n_theta);
        grid.validate().map_err(|e| at_line(line_nt, "grid", e))?;

        let (line_c, c) = t.real("initial.cap_c")?;
        let cap = CapParams::new(c).map_err(|e| at_line(line_c, "initial.cap_c", e))?;
        let (_, eps) = t.real("initial.eps")?;
        let (_, mode) = t.parsed::<usize>("initial.mode", "a non-negative integer")?;
        let perturbation = PerturbationParams::new(eps, mode);

        let (line_t, t_end) = t.real("schedule.t_end")?;
        let (line_s, safety) = t.real("schedule.cfl_safety")?;
        let (line_r, every) = t.parsed::<usize>("schedule.record_every", "a positive integer")?;
        let schedule = FlowSchedule::new(t_end, safety, every);
        for (line, key, ok) in [
            (line_t, "schedule.t_end", t_end > 0.0),
            (line_s, "schedule.cfl_safety", safety > 0.0 && safety <= 1.0),
            (line_r, "schedule.record_every", every > 0),
        ] {
            if !ok {
                return Err(at_line(line, key, schedule.validate().err().unwrap_or(Error::Config("invalid".into()))));
            }
        }
        if t_end >= cap.extinction_time() {
            return Err(Error::Config(format!(
                "line {line_t}: `schedule.t_end` = {t_end} reaches the cap extinction time {}",
                cap.extinction_time()
            )));
        }

        let (line_w, w_horizon) = t.real("w.horizon")?;
        if w_horizon <= t_end {
            return Err(Error::Config(format!(
                "line {line_w}: `w.horizon` = {w_horizon} must exceed schedule.t_end = {t_end}"
            )));
        }

        let checks = match t.get("verify.checks") {
            None => None,
            Some(e) => {
                let mut out = Vec::new();
                for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (expect_fail, name) = match item.strip_prefix('!') {
                        Some(rest) => (true, rest.trim()),
                        None => (false, item),
                    };
                    if !CHECKS.contains(&name) {
                        return Err(Error::Config(format!("line {}: unknown check `{name}`", e.line)));
                    }
                    out.push(CheckRequest { name: name.to_string(), expect_fail });
                }
                Some(out)
            }
        };

        let convergence_levels = match t.get("convergence.levels") {
            None => None,
            Some(e) => {
                let mut out = Vec::new();
                for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let spec = parse_level(item).ok_or_else(|| {
                        Error::Config(format!("line {}: level `{item}` is not of the form NRxNT", e.line))
                    })?;
                    spec.validate().map_err(|err| at_line(e.line, "convergence.levels", err))?;
                    out.push(spec);
                }
                Some(out)
            }
        };
        let convergence_check = match t.get("convergence.check") {
            None => None,
            Some(e) if STUDIES.contains(&e.value) => Some(e.value.to_string()),
            Some(e) => {
                return Err(Error::Config(format!(
                    "line {}: unknown convergence check `{}`",
                    e.line, e.value
                )))
            }
        };

        Ok(Self {
            grid,
            cap,
            perturbation,
            schedule,
            w_horizon,
            trajectory_csv: t.path("out.trajectory_csv")?,
            report_jsonl: t.path("out.report_jsonl")?,
            checks,
            convergence_levels,
            convergence_check,
            convergence_csv: t.path("out.convergence_csv")?,
        })
    }

    pub fn setup(&self) -> FlowSetup {
        FlowSetup {
            cap: self.cap,
            perturbation: self.perturbation,
            schedule: self.schedule,
            w_horizon: self.w_horizon,
            at: None,
            normalize_volume: false,
        }
    }
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key `{key}`"))
}

/// Header of the trajectory CSV.
pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "tau",
    "v_M",
    "R_bar",
    "min_R",
    "E_partial",
    "N_partial",
    "R_partial",
    "W_partial",
    "dE_dt_rhs",
    "dW_dt_rhs",
    "gauss_bonnet_res",
    "kappa_min",
    "kappa_max",
    "soliton_residual_L2",
];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &FlowTrajectory<f64>) -> Result<()> {
    let io = |e: csv::Error| Error::Usage(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in &traj.records {
        let row = [
            r.t,
            r.tau,
            r.v_m,
            r.r_bar,
            r.min_r,
            r.e_partial,
            r.n_partial,
            r.r_partial,
            r.w_partial,
            r.de_dt_rhs,
            r.dw_dt_rhs,
            r.gauss_bonnet_res,
            r.kappa_min,
            r.kappa_max,
            r.soliton_residual_l2,
        ];
        w.write_record(row.map(num)).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct JsonReport<'a> {
    name: &'a str,
    lhs: f64,
    rhs: f64,
    abs_err: f64,
    rel_err: f64,
    n_r: usize,
    n_theta: usize,
    dt: f64,
    pass: bool,
}

pub fn write_reports_jsonl(path: &Path, reports: &[IdentityReport]) -> Result<()> {
    let io = |e: std::io::Error| Error::Usage(format!("cannot write {}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in reports {
        let row = JsonReport {
            name: &r.name,
            lhs: r.lhs,
            rhs: r.rhs,
            abs_err: r.abs_err,
            rel_err: r.rel_err,
            n_r: r.grid.n_r,
            n_theta: r.grid.n_theta,
            dt: r.dt,
            pass: r.pass,
        };
        let line = serde_json::to_string(&row).map_err(|e| Error::Usage(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Flow from the configured initial data.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<FlowTrajectory<f64>> {
    cfg.setup().run::<f64>(cfg.grid)
}

/// Reports of one requested check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub request: CheckRequest,
    pub reports: Vec<IdentityReport>,
}

impl CheckOutcome {
    /// All reports pass, or, for an expected failure, at least one fails.
    pub fn satisfied(&self) -> bool {
        let all_pass = self.reports.iter().all(|r| r.pass);
        if self.request.expect_fail {
            !all_pass
        } else {
            all_pass
        }
    }
}

fn field_reports(
    m: &crate::ConformalMetric<f64>,
    label: &str,
    check: fn(&crate::ConformalMetric<f64>, &crate::ScalarField<f64>, Closure<'_, f64>) -> IdentityReport,
) -> Vec<IdentityReport> {
    ManufacturedField::for_grid(m.grid().spec())
        .into_iter()
        .map(|fld| {
            let (v, g) = fld.sample(m.grid());
            let mut r = check(m, &v, Closure::Ghost(&g));
            r.name = format!("{label}.{}", fld.name());
            r
        })
        .collect()
}

/// Evaluates one named check; static checks use the middle snapshot.
pub fn run_check(cfg: &ExperimentConfig, traj: &FlowTrajectory<f64>, name: &str) -> Result<Vec<IdentityReport>> {
    let k = verify::interior_index(traj, None)?;
    let snap = &traj.snapshots[k];
    let m = &snap.metric;
    let wp = WParams { w_horizon: cfg.w_horizon };
    Ok(match name {
        "theorem_hamilton" => vec![verify::check_theorem_hamilton(traj, None)?],
        "theorem_guo" => vec![verify::check_theorem_guo(traj, None)?],
        "avg_evolution" => verify::check_avg_evolution(traj, None)?,
        "kappa_evolution" => vec![verify::check_kappa_evolution(traj)?],
        "kappa_closed_form" => {
            if cfg.perturbation.epsilon != 0.0 {
                return Err(Error::Usage("kappa_closed_form needs an unperturbed cap (initial.eps = 0)".into()));
            }
            vec![verify::check_kappa_closed_form(traj, cfg.cap)?]
        }
        "normal_lemmas" => verify::check_normal_lemmas(traj, None)?,
        "second_derivative_n" => verify::check_second_derivative_n(traj, None)?,
        "monotonicity" => verify::check_monotonicity(traj)?,
        "euler_form" => {
            let setup = FlowSetup { normalize_volume: true, ..cfg.setup() };
            vec![verify::check_euler_form(&setup.run::<f64>(cfg.grid)?)?]
        }
        "relation" => vec![verify::check_relation(m, wp, snap.t, None)?],
        "lemma_time2" => vec![verify::check_lemma_time2(m)?],
        "gauss_bonnet" => vec![verify::check_gauss_bonnet(m)],
        "reilly" => field_reports(m, "reilly", verify::check_reilly),
        "lemma_useful" => field_reports(m, "lemma_useful", verify::check_lemma_useful),
        "negative.incompatible_bc" => vec![verify::negative_control_incompatible_bc(m.shared_grid())?],
        "negative.corrupted_de" => vec![verify::negative_control_corrupted_de(m, wp, snap.t)?],
        other => return Err(Error::Usage(format!("unknown check `{other}`"))),
    })
}

/// Runs the configured checks concurrently over one shared trajectory.
pub fn verify_suite(cfg: &ExperimentConfig, traj: &FlowTrajectory<f64>) -> Result<Vec<CheckOutcome>> {
    let checks = cfg.checks.as_ref().ok_or_else(|| missing("verify.checks"))?;
    if checks.is_empty() {
        return Err(Error::Config("`verify.checks` lists no checks".into()));
    }
    let results: Vec<Result<Vec<IdentityReport>>> = std::thread::scope(|s| {
        let handles: Vec<_> = checks
            .iter()
            .map(|c| s.spawn(move || run_check(cfg, traj, &c.name)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Usage("check panicked".into()))))
            .collect()
    });
    checks
        .iter()
        .zip(results)
        .map(|(c, r)| {
            r.map(|reports| CheckOutcome { request: c.clone(), reports })
                .map_err(|e| Error::Usage(format!("check `{}`: {e}", c.name)))
        })
        .collect()
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Positivity { .. } => EXIT_EARLY,
        _ => EXIT_USAGE,
    }
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    exit_for(&e)
}

fn early(traj: &FlowTrajectory<f64>) -> Option<i32> {
    if traj.termination == Termination::Completed {
        return None;
    }
    let last = traj.records.last().map_or(0.0, |r| r.t);
    eprintln!("flow terminated early ({}) at t = {last}", traj.termination.as_str());
    Some(EXIT_EARLY)
}

/// Flows the configured metric and writes the trajectory CSV.
pub fn cmd_run(config: &Path) -> i32 {
    let result = (|| {
        let cfg = ExperimentConfig::load(config)?;
        let path = cfg.trajectory_csv.clone().ok_or_else(|| missing("out.trajectory_csv"))?;
        let traj = run_experiment(&cfg)?;
        write_trajectory_csv(&path, &traj)?;
        Ok(traj)
    })();
    match result {
        Ok(traj) => early(&traj).unwrap_or(EXIT_OK),
        Err(e) => fail(e),
    }
}

/// Runs `verify.checks`; exit 0 iff every check passes and every `!` check fails.
pub fn cmd_verify(config: &Path) -> i32 {
    let result = (|| {
        let cfg = ExperimentConfig::load(config)?;
        let path = cfg.report_jsonl.clone().ok_or_else(|| missing("out.report_jsonl"))?;
        if cfg.checks.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(Error::Config("`verify.checks` lists no checks".into()));
        }
        let traj = run_experiment(&cfg)?;
        if let Some(p) = &cfg.trajectory_csv {
            write_trajectory_csv(p, &traj)?;
        }
        if let Some(code) = early(&traj) {
            return Ok(code);
        }
        let outcomes = verify_suite(&cfg, &traj)?;
        let reports: Vec<IdentityReport> = outcomes.iter().flat_map(|o| o.reports.iter().cloned()).collect();
        write_reports_jsonl(&path, &reports)?;
        for o in &outcomes {
            for r in &o.reports {
                println!(
                    "{} {:<32} err {:.3e} tol {:.3e}{}",
                    if r.pass { "pass" } else { "FAIL" },
                    r.name,
                    r.abs_err,
                    r.tol,
                    if o.request.expect_fail { " (expected to fail)" } else { "" }
                );
            }
        }
        let bad: Vec<&str> = outcomes.iter().filter(|o| !o.satisfied()).map(|o| o.request.name.as_str()).collect();
        if bad.is_empty() {
            Ok(EXIT_OK)
        } else {
            eprintln!("verification failed: {}", bad.join(", "));
            Ok(EXIT_VERIFY)
        }
    })();
    result.unwrap_or_else(fail)
}

/// Runs `convergence.check` on every grid of `convergence.levels`.
pub fn cmd_convergence(config: &Path) -> i32 {
    let result = (|| {
        let cfg = ExperimentConfig::load(config)?;
        let levels = cfg.convergence_levels.clone().ok_or_else(|| missing("convergence.levels"))?;
        let check = cfg.convergence_check.clone().ok_or_else(|| missing("convergence.check"))?;
        let path = cfg.convergence_csv.clone().ok_or_else(|| missing("out.convergence_csv"))?;
        let report = verify::convergence_study(&check, &levels, &cfg.setup())?;
        let io = |e: csv::Error| Error::Usage(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(["h", "dt", "err", "order"]).map_err(io)?;
        for l in &report.levels {
            w.write_record([l.h, l.dt, l.err, report.observed_order].map(num)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Usage(e.to_string()))?;
        println!("{check}: observed order {:.3}", report.observed_order);
        Ok(EXIT_OK)
    })();
    result.unwrap_or_else(fail)
}
