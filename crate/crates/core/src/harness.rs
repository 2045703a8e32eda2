//! Command-line front end: configuration, orchestration, the verification
//! suite and report emission.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::duality::{certify_cc_with, norming_set, CcMode, NormModel};
use crate::error::Error;
use crate::index::{
    estimate_index, estimate_n1_index, limit_scan, IndexBudget, IndexEstimate, SCAN_TOL,
};
use crate::numerical_range::{n1_of_operator, numerical_radius, w_infinity, w_sequence};
use crate::operators::{
    embed, operator_norm, random_operator, Budget, Normalization, Operator, OperatorFile,
};
use crate::rng::{derive_seed, rng_from};
use crate::tower::{random_sphere_point, Exponent, Projection, SpaceFile, TowerSpec, TowerVector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Tolerance for identities that hold up to rounding.
pub const EXACT_TOL: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_RESTARTS: usize = 64;
pub const DEFAULT_INDEX_RESTARTS: usize = 4;

const AFTER_HELP: &str = "\
Tolerances: inner optimizer 1e-8; equality assertions --tol (default 1e-5);
rounding-level identities 1e-9; limit-scan flags 0.03.

--budget is the multistart restart count (default 64). For index and
limit-scan it is the number of outer restarts (default 4), each with an
inner multistart of four times that many starts.

Exit codes: 0 success, 1 property failure, 2 input error.
NUMINDEX_THREADS caps the number of worker threads.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Numerical radius of an operator.
    Nu,
    /// Operator norm.
    Opnorm,
    /// n_1 of an operator on a level of the space.
    N1,
    /// The w-sequence of an operator on a level of the space.
    Wseq,
    /// Upper bound on the numerical index of the space.
    Index,
    /// Index estimates level by level.
    LimitScan,
    /// Property suite.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Norming functionals and b_m computed for exponents shifted by one.
    WrongExponent,
}

#[derive(Debug, Parser)]
#[command(
    name = "numindex",
    version,
    about = "Numerical radius and numerical index estimates on finite towers of ℓ_p sums",
    after_help = AFTER_HELP
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Space file, or inline JSON such as '{"leaves":[1,1],"flat_p":2}'.
    #[arg(long)]
    pub space: Option<String>,
    /// Operator file '{"dim":n,"rows":[[...],...]}' on some level X_m of the space.
    #[arg(long)]
    pub op: Option<PathBuf>,
    /// Level of the operator, or of the space for index (default: inferred or deepest).
    #[arg(long)]
    pub m: Option<usize>,
    /// Last step of the w-sequence (default: up to the deepest level).
    #[arg(long)]
    pub jmax: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Equality tolerance for verify and the wseq checks.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Report path; CSV commands also write witness files next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Inclusive level range for limit-scan, e.g. 1..4.
    #[arg(long)]
    pub m_range: Option<String>,
    /// Sample count per verify property.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Run verify against a corrupted norm model.
    #[arg(long, value_enum)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        HarnessError::Input(e.to_string())
    }
}

/// Everything a run depends on, with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub space: SpaceFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub op: Option<OperatorFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jmax: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_range: Option<(usize, usize)>,
    pub budget: usize,
    pub seed: u64,
    pub tol: f64,
    pub inner_tol: f64,
    pub exact_tol: f64,
    pub scan_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
}

/// A validated configuration together with its parsed inputs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: Arc<TowerSpec>,
    pub operator: Option<Operator>,
    pub out: Option<PathBuf>,
}

/// What a run produced; the caller does the writing.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub files: Vec<(PathBuf, String)>,
}

fn input(msg: impl Into<String>) -> HarnessError {
    HarnessError::Input(msg.into())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_space(arg: &str) -> Result<TowerSpec, HarnessError> {
    let (text, origin) = if arg.trim_start().starts_with('{') {
        (arg.to_string(), "inline space".to_string())
    } else {
        (read(Path::new(arg))?, arg.to_string())
    };
    TowerSpec::from_json(&text).map_err(|e| input(format!("{origin}: {e}")))
}

fn load_operator(path: &Path) -> Result<OperatorFile, HarnessError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn parse_range(text: &str) -> Result<(usize, usize), HarnessError> {
    let bad = || input(format!("--m-range {text:?}: expected A..B"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn level_of(spec: &TowerSpec, dim: usize) -> Option<usize> {
    (1..=spec.depth()).find(|&m| spec.level_dim(m) == dim)
}

impl Experiment {
    pub fn from_cli(cli: Cli) -> Result<Experiment, HarnessError> {
        use Command::*;
        let cmd = cli.command;
        let spec = match (&cli.space, cmd) {
            (Some(s), _) => load_space(s)?,
            (None, Verify) => TowerSpec::flat(vec![1; 4], Exponent::new(2.0)?)?,
            (None, _) => return Err(input("--space is required")),
        };
        let spec = Arc::new(spec);
        let depth = spec.depth();
        let wants_op = matches!(cmd, Nu | Opnorm | N1 | Wseq);
        if !wants_op && cli.op.is_some() {
            return Err(input("--op is only used by nu, opnorm, n1 and wseq"));
        }
        if cmd != LimitScan && cli.m_range.is_some() {
            return Err(input("--m-range is only used by limit-scan"));
        }
        if cmd != Verify && cli.inject_fault.is_some() {
            return Err(input("--inject-fault is only used by verify"));
        }
        if !(cli.tol.is_finite() && cli.tol > 0.0) {
            return Err(input("--tol must be a positive number"));
        }
        if cli.budget == Some(0) {
            return Err(input("--budget must be at least 1"));
        }

        let mut operator = None;
        let mut op_file = None;
        let mut m = cli.m;
        if wants_op {
            let path = cli.op.as_ref().ok_or_else(|| input("--op is required"))?;
            let file = load_operator(path)?;
            let level = level_of(&spec, file.dim).ok_or_else(|| {
                input(format!(
                    "{}: dimension {} is not the dimension of any level of the space",
                    path.display(),
                    file.dim
                ))
            })?;
            if let Some(given) = m {
                if given != level {
                    return Err(input(format!(
                        "--m {given} does not match the operator, which lives on level {level}"
                    )));
                }
            }
            m = Some(level);
            let head = Arc::new(spec.truncate(level)?);
            operator = Some(
                Operator::from_file(head, &file)
                    .map_err(|e| input(format!("{}: {e}", path.display())))?,
            );
            op_file = Some(file);
        }
        let m = match cmd {
            Nu | Opnorm | N1 | Wseq => m,
            Index => Some(m.unwrap_or(depth)),
            Verify => Some(m.unwrap_or((depth / 2).max(1))),
            LimitScan => None,
        };
        if let Some(level) = m {
            spec.check_level(level)?;
        }
        let jmax = match cmd {
            Wseq | Verify => {
                let level = m.unwrap_or(1);
                let j = cli.jmax.unwrap_or(depth - level);
                if level + j > depth {
                    return Err(input(format!(
                        "--jmax {j} from level {level} passes the deepest level {depth}"
                    )));
                }
                Some(j)
            }
            _ => None,
        };
        let m_range = if cmd == LimitScan {
            if depth < 2 {
                return Err(input(format!(
                    "limit-scan needs a tower of depth at least 2, got {depth}"
                )));
            }
            let (a, b) = match &cli.m_range {
                Some(r) => parse_range(r)?,
                None => (1, depth),
            };
            if a == 0 || b < a {
                return Err(input(format!("empty level range {a}..{b}")));
            }
            if b > depth {
                return Err(input(format!(
                    "level range {a}..{b} passes the deepest level {depth}"
                )));
            }
            Some((a, b))
        } else {
            None
        };
        let budget = cli.budget.unwrap_or(match cmd {
            Index | LimitScan => DEFAULT_INDEX_RESTARTS,
            _ => DEFAULT_RESTARTS,
        });
        let config = ExperimentConfig {
            command: cmd,
            space: spec.to_file(),
            op: op_file,
            m,
            jmax,
            m_range,
            budget,
            seed: cli.seed,
            tol: cli.tol,
            inner_tol: Budget::default().tol,
            exact_tol: EXACT_TOL,
            scan_tol: SCAN_TOL,
            samples: (cmd == Verify).then_some(cli.samples),
            inject_fault: cli.inject_fault,
        };
        Ok(Experiment {
            config,
            spec,
            operator,
            out: cli.out,
        })
    }

    fn budget(&self) -> Budget {
        Budget::default()
            .with_restarts(self.config.budget)
            .with_seed(self.config.seed)
    }

    fn index_budget(&self) -> IndexBudget {
        IndexBudget::scaled(self.config.budget)
    }
}

/// `%.12g`-style formatting.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        trim_zeros(format!("{:.*}", (11 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().unwrap_or(f64::NAN));
            *v = json!(x);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn json_report(config: &ExperimentConfig, result: impl Serialize) -> String {
    let mut result = serde_json::to_value(result).expect("results serialize");
    round_floats(&mut result);
    let doc = json!({
        "numindex": env!("CARGO_PKG_VERSION"),
        "config": config,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("reports serialize");
    text.push('\n');
    text
}

fn csv_header(config: &ExperimentConfig) -> String {
    format!(
        "# numindex {} config={}\nm,n_hat,n1_hat,witness_file,restarts,seed,flag\n",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(config).expect("config serializes")
    )
}

fn deliver(exp: &Experiment, report: String, code: i32) -> Outcome {
    match &exp.out {
        Some(path) => Outcome {
            code,
            stdout: String::new(),
            files: vec![(path.clone(), report)],
        },
        None => Outcome {
            code,
            stdout: report,
            files: Vec::new(),
        },
    }
}

fn witness_path(out: &Path, m: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}_m{m}_witness.json"))
}

fn witness_json(m: usize, n_hat: &IndexEstimate, n1_hat: &IndexEstimate) -> String {
    let doc = json!({
        "m": m,
        "n_hat": {"value": n_hat.value, "seed": n_hat.seed, "witness": n_hat.witness.to_file()},
        "n1_hat": {"value": n1_hat.value, "seed": n1_hat.seed, "witness": n1_hat.witness.to_file()},
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("witnesses serialize");
    text.push('\n');
    text
}

struct Row<'a> {
    m: usize,
    n_hat: &'a IndexEstimate,
    n1_hat: &'a IndexEstimate,
    restarts: usize,
    seed: u64,
    flags: Vec<&'static str>,
}

fn push_row(csv: &mut String, files: &mut Vec<(PathBuf, String)>, out: Option<&Path>, row: Row) {
    let witness = match out {
        Some(out) => {
            let path = witness_path(out, row.m);
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            files.push((path, witness_json(row.m, row.n_hat, row.n1_hat)));
            name
        }
        None => "-".into(),
    };
    let flag = if row.flags.is_empty() {
        "ok".to_string()
    } else {
        row.flags.join(";")
    };
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{}",
        row.m,
        fmt_g(row.n_hat.value),
        fmt_g(row.n1_hat.value),
        witness,
        row.restarts,
        row.seed,
        flag
    );
}

/// Runs one experiment. Progress and timings go to stderr; everything else
/// is returned.
pub fn run(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let started = Instant::now();
    let outcome = match exp.config.command {
        Command::Nu => cmd_nu(exp),
        Command::Opnorm => cmd_opnorm(exp),
        Command::N1 => cmd_n1(exp),
        Command::Wseq => cmd_wseq(exp),
        Command::Index => cmd_index(exp),
        Command::LimitScan => cmd_limit_scan(exp),
        Command::Verify => cmd_verify(exp),
    }?;
    eprintln!("elapsed {:.3}s", started.elapsed().as_secs_f64());
    Ok(outcome)
}

fn operator(exp: &Experiment) -> &Operator {
    exp.operator.as_ref().expect("operator commands load --op")
}

pub fn cmd_nu(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let e = numerical_radius(operator(exp), &exp.budget());
    Ok(deliver(exp, json_report(&exp.config, &e), EXIT_OK))
}

pub fn cmd_opnorm(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let e = operator_norm(operator(exp), &exp.budget());
    Ok(deliver(exp, json_report(&exp.config, &e), EXIT_OK))
}

pub fn cmd_n1(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let e = n1_of_operator(operator(exp), &exp.spec, &exp.budget())?;
    Ok(deliver(exp, json_report(&exp.config, &e), EXIT_OK))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WChecks {
    /// Largest drop `w_k − w_{k+1}` along the sequence.
    pub monotone_violation: f64,
    pub spread: f64,
    /// Largest excess of a term over `w_∞`.
    pub domination_violation: f64,
    /// `|w_∞ − last term|`, when the sequence reaches the deepest level.
    pub final_gap: Option<f64>,
}

pub fn w_checks(terms: &[f64], w_inf: f64, reaches_top: bool) -> WChecks {
    let monotone_violation = terms
        .windows(2)
        .map(|w| (w[0] - w[1]).max(0.0))
        .fold(0.0, f64::max);
    let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = terms.iter().copied().fold(f64::INFINITY, f64::min);
    WChecks {
        monotone_violation,
        spread: if terms.is_empty() { 0.0 } else { hi - lo },
        domination_violation: if terms.is_empty() {
            0.0
        } else {
            (hi - w_inf).max(0.0)
        },
        final_gap: reaches_top
            .then(|| terms.last().map(|&w| (w_inf - w).abs()))
            .flatten(),
    }
}

pub fn cmd_wseq(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let l = operator(exp);
    let jmax = exp.config.jmax.unwrap_or(0);
    let budget = exp.budget();
    let terms = w_sequence(l, &exp.spec, jmax, &budget)?;
    let w_inf = w_infinity(l, &exp.spec, &budget)?;
    let values: Vec<f64> = terms.iter().map(|e| e.value).collect();
    let reaches_top = l.spec().depth() + jmax == exp.spec.depth();
    let checks = w_checks(&values, w_inf.value, reaches_top);
    let result = json!({
        "values": values,
        "w_infinity": w_inf.value,
        "checks": checks,
        "terms": terms,
        "w_infinity_estimate": w_inf,
    });
    Ok(deliver(exp, json_report(&exp.config, result), EXIT_OK))
}

pub fn cmd_index(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let m = exp.config.m.unwrap_or(exp.spec.depth());
    let space = Arc::new(exp.spec.truncate(m)?);
    let budget = exp.index_budget();
    let seed = exp.config.seed;
    let n_hat = estimate_index(&space, &budget, seed);
    let n1_hat = estimate_n1_index(&exp.spec, m, &budget, derive_seed(seed, 1))?;
    let mut flags = Vec::new();
    if n_hat.is_noisy() || n1_hat.is_noisy() {
        flags.push("noisy");
    }
    let mut csv = csv_header(&exp.config);
    let mut files = Vec::new();
    let row = Row {
        m,
        n_hat: &n_hat,
        n1_hat: &n1_hat,
        restarts: budget.restarts,
        seed,
        flags,
    };
    push_row(&mut csv, &mut files, exp.out.as_deref(), row);
    let mut outcome = deliver(exp, csv, EXIT_OK);
    outcome.files.extend(files);
    Ok(outcome)
}

pub fn cmd_limit_scan(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let (a, b) = exp.config.m_range.expect("limit-scan resolves a range");
    let budget = exp.index_budget();
    let scan = limit_scan(&exp.spec, a..=b, &budget, exp.config.seed)?;
    let mut csv = csv_header(&exp.config);
    let mut files = Vec::new();
    for row in &scan.rows {
        let mut flags = Vec::new();
        if row.noisy {
            flags.push("noisy");
        }
        if scan.checks.below_deepest.contains(&row.m) {
            flags.push("below_deepest");
        }
        if scan.checks.envelope_violations.contains(&row.m) {
            flags.push("envelope");
        }
        let r = Row {
            m: row.m,
            n_hat: &row.n_hat,
            n1_hat: &row.n1_hat,
            restarts: budget.restarts,
            seed: row.n_hat.seed,
            flags,
        };
        push_row(&mut csv, &mut files, exp.out.as_deref(), r);
    }
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    let list = |v: &[usize]| {
        if v.is_empty() {
            "none".to_string()
        } else {
            v.iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
    };
    let noisy: Vec<usize> = scan.rows.iter().filter(|r| r.noisy).map(|r| r.m).collect();
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "limit scan over levels {a}..{b}, {} restarts, seed {}",
        budget.restarts, exp.config.seed
    );
    let _ = writeln!(
        summary,
        "n_hat(X_m) >= n_hat(X_{b}) - {SCAN_TOL}: {} (violations: {})",
        verdict(scan.checks.below_deepest.is_empty()),
        list(&scan.checks.below_deepest)
    );
    let _ = writeln!(
        summary,
        "steps under a declining envelope: {} (violations: {})",
        verdict(scan.checks.envelope_violations.is_empty()),
        list(&scan.checks.envelope_violations)
    );
    let _ = writeln!(summary, "noisy rows: {}", list(&noisy));
    let code = if scan.checks.passed() {
        EXIT_OK
    } else {
        EXIT_PROPERTY
    };
    let mut outcome = match &exp.out {
        Some(path) => Outcome {
            code,
            stdout: summary,
            files: vec![(path.clone(), csv)],
        },
        None => {
            eprint!("{summary}");
            Outcome {
                code,
                stdout: csv,
                files: Vec::new(),
            }
        }
    };
    outcome.files.extend(files);
    Ok(outcome)
}

/// A corrupted norm model for negative controls: the true norm paired with
/// functionals and `b_m` computed for every exponent shifted by one.
pub struct FaultyNorm {
    truth: TowerSpec,
    wrong: TowerSpec,
}

impl FaultyNorm {
    pub fn wrong_exponent(spec: &TowerSpec) -> crate::Result<Self> {
        let shift = |p: Exponent| Exponent::new(p.value() + 1.0);
        let mut file = spec.to_file();
        file.flat_p = file.flat_p.map(shift).transpose()?;
        file.exponents = file
            .exponents
            .into_iter()
            .map(shift)
            .collect::<crate::Result<_>>()?;
        file.leaf_exponents = file
            .leaf_exponents
            .map(|le| le.into_iter().map(shift).collect::<crate::Result<Vec<_>>>())
            .transpose()?;
        Ok(FaultyNorm {
            truth: spec.clone(),
            wrong: TowerSpec::from_file(&file)?,
        })
    }
}

impl NormModel for FaultyNorm {
    fn spec(&self) -> &TowerSpec {
        &self.truth
    }

    fn eval_norm(&self, x: &[f64]) -> f64 {
        self.truth.norm_of(x)
    }

    fn eval_dual_norm(&self, f: &[f64]) -> f64 {
        self.truth.dual_norm_of(f)
    }

    fn functional(&self, x: &[f64]) -> crate::Result<Vec<f64>> {
        self.wrong.functional(x)
    }

    fn b_value(&self, x: &[f64], m: usize) -> crate::Result<f64> {
        self.wrong.b_value(x, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub status: Status,
    pub checks: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Seed of the worst sample, for failures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repro_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub warnings: Vec<String>,
    pub properties: Vec<PropertyResult>,
}

#[derive(Debug, Clone)]
pub struct VerifySettings {
    pub spec: Arc<TowerSpec>,
    pub m: usize,
    pub jmax: usize,
    pub samples: usize,
    pub budget: Budget,
    pub tol: f64,
    pub seed: u64,
    pub fault: Option<Fault>,
}

#[derive(Default)]
struct Tally {
    checks: usize,
    max_violation: f64,
    worst: Option<u64>,
}

impl Tally {
    fn record(&mut self, violation: f64, seed: u64) {
        let v = if violation.is_nan() {
            f64::INFINITY
        } else {
            violation
        };
        self.checks += 1;
        if self.worst.is_none() || v > self.max_violation {
            self.max_violation = v;
            self.worst = Some(seed);
        }
    }

    fn finish(self, name: &'static str, tolerance: f64, seed: u64) -> PropertyResult {
        let pass = self.max_violation <= tolerance;
        PropertyResult {
            name,
            status: if pass { Status::Pass } else { Status::Fail },
            checks: self.checks,
            max_violation: self.max_violation,
            tolerance,
            seed,
            repro_seed: if pass { None } else { self.worst },
            note: None,
        }
    }
}

fn skipped(name: &'static str, tolerance: f64, seed: u64, why: &str) -> PropertyResult {
    PropertyResult {
        name,
        status: Status::Skipped,
        checks: 0,
        max_violation: 0.0,
        tolerance,
        seed,
        repro_seed: None,
        note: Some(why.to_string()),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct Suite<'a> {
    s: &'a VerifySettings,
    results: Vec<PropertyResult>,
    report: &'a mut dyn FnMut(&PropertyResult, Duration),
}

impl Suite<'_> {
    fn seed(&self) -> u64 {
        derive_seed(self.s.seed, self.results.len() as u64)
    }

    fn run(
        &mut self,
        f: impl FnOnce(&VerifySettings, u64) -> Result<PropertyResult, HarnessError>,
    ) -> Result<Status, HarnessError> {
        let started = Instant::now();
        let r = f(self.s, self.seed())?;
        (self.report)(&r, started.elapsed());
        let status = r.status;
        self.results.push(r);
        Ok(status)
    }
}

fn unit_operator(spec: Arc<TowerSpec>, seed: u64, budget: &Budget) -> Operator {
    random_operator(spec, seed, Normalization::UnitNorm(budget.with_seed(seed)))
}

fn prop_norming(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let mut t = Tally::default();
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let x = random_sphere_point(s.spec.clone(), k).scaled(1.0 + (i % 4) as f64);
        let f = norming_set(&x)?.sample(&mut rng_from(k));
        let norm = x.norm();
        let pairing = (f.pair(&x)? - norm).abs() / norm;
        t.record(pairing.max((f.dual_norm() - 1.0).abs()), k);
    }
    Ok(t.finish("norming_functional", EXACT_TOL, seed))
}

fn prop_gradient(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let name = "norm_gradient";
    if !s.spec.is_smooth() {
        return Ok(skipped(name, s.tol, seed, "non-smooth space"));
    }
    let mut t = Tally::default();
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let x = random_sphere_point(s.spec.clone(), k);
        let f = s.spec.functional(x.coords())?;
        let h = 1e-6;
        let mut y = x.coords().to_vec();
        let mut fd = vec![0.0; y.len()];
        for j in 0..y.len() {
            let v = y[j];
            y[j] = v + h;
            let up = s.spec.norm_of(&y);
            y[j] = v - h;
            let down = s.spec.norm_of(&y);
            y[j] = v;
            fd[j] = (up - down) / (2.0 * h);
        }
        let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        t.record(max_abs_diff(&f, &fd) / scale, k);
    }
    Ok(t.finish(name, s.tol, seed))
}

fn prop_cc(s: &VerifySettings, seed: u64, mode: CcMode) -> Result<PropertyResult, HarnessError> {
    let name = match mode {
        CcMode::Global => "characterization_condition",
        CcMode::Local => "local_characterization_condition",
    };
    if !s.spec.is_smooth() {
        return Ok(skipped(name, EXACT_TOL, seed, "non-smooth space"));
    }
    let faulty;
    let model: &dyn NormModel = match s.fault {
        Some(Fault::WrongExponent) => {
            faulty = FaultyNorm::wrong_exponent(&s.spec)?;
            &faulty
        }
        None => &*s.spec,
    };
    let r = certify_cc_with(model, s.samples, EXACT_TOL, seed, mode)?;
    let mut violation = r.max_violation;
    if r.b_below_one > 0 {
        violation = violation.max(1.0 - r.min_b);
    }
    let pass = r.passed();
    Ok(PropertyResult {
        name,
        status: if pass { Status::Pass } else { Status::Fail },
        checks: r.checks,
        max_violation: violation,
        tolerance: EXACT_TOL,
        seed,
        repro_seed: (!pass).then_some(seed),
        note: (r.skipped_degenerate > 0)
            .then(|| format!("{} degenerate points skipped", r.skipped_degenerate)),
    })
}

fn prop_projections(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let spec = &s.spec;
    let (n, d) = (spec.dim(), spec.depth());
    let top = |m: usize| Projection::top(spec.clone(), m);
    let mut t = Tally::default();
    for k in 0..3 {
        let coords: Vec<f64> = (0..n)
            .map(|i| ((7 * i + 3 * k) % 11) as f64 - 5.0)
            .collect();
        let x = TowerVector::new(spec.clone(), coords)?;
        for m in 1..=d {
            let pm = top(m)?.apply(&x)?;
            for j in m..=d {
                let a = top(m)?.apply(&top(j)?.apply(&x)?)?;
                let b = top(j)?.apply(&pm)?;
                t.record(max_abs_diff(a.coords(), pm.coords()), k as u64);
                t.record(max_abs_diff(b.coords(), pm.coords()), k as u64);
            }
            for j in 1..=d - m {
                let q = Projection::composite(spec.clone(), m, j)?;
                let y = top(m + j)?.apply(&x)?;
                t.record(max_abs_diff(q.apply(&y)?.coords(), pm.coords()), k as u64);
                if m + j == d {
                    t.record(max_abs_diff(q.apply(&x)?.coords(), pm.coords()), k as u64);
                }
            }
        }
    }
    Ok(t.finish("projection_tower", 0.0, seed))
}

fn prop_radius_bounds(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let mut t = Tally::default();
    if s.samples > 0 {
        let id = Operator::identity(s.spec.clone());
        t.record(
            (numerical_radius(&id, &s.budget.with_seed(seed)).value - 1.0).abs(),
            seed,
        );
    }
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let b = s.budget.with_seed(k);
        let op = random_operator(s.spec.clone(), k, Normalization::None);
        let nu = numerical_radius(&op, &b).value;
        let norm = operator_norm(&op, &b).value;
        t.record(((nu - norm) / norm).max(0.0), k);
    }
    Ok(t.finish("radius_below_norm", s.tol, seed))
}

fn prop_seminorm(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let mut t = Tally::default();
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let b = s.budget.with_seed(k);
        let a = random_operator(s.spec.clone(), k, Normalization::None);
        let c = random_operator(s.spec.clone(), derive_seed(k, 1), Normalization::None);
        let nu_a = numerical_radius(&a, &b).value;
        let nu_c = numerical_radius(&c, &b).value;
        let scaled = numerical_radius(&a.scaled(-2.5), &b).value;
        let sum = numerical_radius(&a.add(&c)?, &b).value;
        let homogeneity = (scaled - 2.5 * nu_a).abs() / (2.5 * nu_a);
        let triangle = ((sum - nu_a - nu_c) / (nu_a + nu_c)).max(0.0);
        t.record(homogeneity.max(triangle), k);
    }
    Ok(t.finish("radius_seminorm", s.tol, seed))
}

fn prop_n1_nu(s: &VerifySettings, seed: u64, cc: bool) -> Result<PropertyResult, HarnessError> {
    let name = "n1_equals_radius";
    if !cc {
        return Ok(skipped(
            name,
            s.tol,
            seed,
            "characterization condition not certified",
        ));
    }
    let head = Arc::new(s.spec.truncate(s.m)?);
    let mut t = Tally::default();
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let b = s.budget.with_seed(k);
        let l = unit_operator(head.clone(), k, &b);
        let n1 = n1_of_operator(&l, &s.spec, &b)?.value;
        let nu = numerical_radius(&l, &b).value;
        t.record((n1 - nu).abs(), k);
    }
    Ok(t.finish(name, s.tol, seed))
}

fn prop_n1_embedding(s: &VerifySettings, seed: u64) -> Result<PropertyResult, HarnessError> {
    let head = Arc::new(s.spec.truncate(s.m)?);
    let mut t = Tally::default();
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let b = s.budget.with_seed(k);
        let l = unit_operator(head.clone(), k, &b);
        let n1 = n1_of_operator(&l, &s.spec, &b)?.value;
        let lifted = n1_of_operator(&embed(&l, &s.spec)?, &s.spec, &b)?.value;
        t.record((n1 - lifted).abs(), k);
    }
    Ok(t.finish("n1_embedding_invariance", s.tol, seed))
}

fn prop_w(s: &VerifySettings, seed: u64, lcc: bool) -> Result<[PropertyResult; 3], HarnessError> {
    let head = Arc::new(s.spec.truncate(s.m)?);
    let reaches_top = s.m + s.jmax == s.spec.depth();
    let (mut mono, mut stable, mut dom) = (Tally::default(), Tally::default(), Tally::default());
    for i in 0..s.samples {
        let k = derive_seed(seed, i as u64);
        let b = s.budget.with_seed(k);
        let l = unit_operator(head.clone(), k, &b);
        let terms: Vec<f64> = w_sequence(&l, &s.spec, s.jmax, &b)?
            .iter()
            .map(|e| e.value)
            .collect();
        let w_inf = w_infinity(&l, &s.spec, &b)?.value;
        let c = w_checks(&terms, w_inf, reaches_top);
        mono.record(c.monotone_violation, k);
        stable.record(c.spread, k);
        dom.record(c.domination_violation.max(c.final_gap.unwrap_or(0.0)), k);
    }
    let stable = if lcc {
        stable.finish("w_sequence_constant", s.tol, seed)
    } else {
        skipped(
            "w_sequence_constant",
            s.tol,
            seed,
            "local characterization condition not certified",
        )
    };
    Ok([
        mono.finish("w_sequence_monotone", s.tol, seed),
        stable,
        dom.finish("w_infinity_dominates", s.tol, seed),
    ])
}

/// Runs every property at the configured sample count. `progress` sees each
/// result with its wall time as soon as it is known.
pub fn verify_suite(
    s: &VerifySettings,
    progress: &mut dyn FnMut(&PropertyResult, Duration),
) -> Result<VerifyReport, HarnessError> {
    let mut suite = Suite {
        s,
        results: Vec::new(),
        report: progress,
    };
    suite.run(prop_norming)?;
    suite.run(prop_gradient)?;
    let cc = suite.run(|s, k| prop_cc(s, k, CcMode::Global))? == Status::Pass;
    let lcc = suite.run(|s, k| prop_cc(s, k, CcMode::Local))? == Status::Pass;
    suite.run(prop_projections)?;
    suite.run(prop_radius_bounds)?;
    suite.run(prop_seminorm)?;
    suite.run(|s, k| prop_n1_nu(s, k, cc))?;
    suite.run(prop_n1_embedding)?;
    let started = Instant::now();
    let w = prop_w(s, suite.seed(), lcc)?;
    let elapsed = started.elapsed() / 3;
    for r in w {
        (suite.report)(&r, elapsed);
        suite.results.push(r);
    }
    let mut warnings = Vec::new();
    if s.samples == 0 {
        warnings.push("0 samples: every sampled property passes vacuously".to_string());
    }
    let passed = suite.results.iter().all(|r| r.status != Status::Fail);
    Ok(VerifyReport {
        passed,
        warnings,
        properties: suite.results,
    })
}

pub fn cmd_verify(exp: &Experiment) -> Result<Outcome, HarnessError> {
    let c = &exp.config;
    if c.inject_fault.is_some() && !exp.spec.is_smooth() {
        return Err(input("--inject-fault needs a smooth space"));
    }
    let settings = VerifySettings {
        spec: exp.spec.clone(),
        m: c.m.unwrap_or(1),
        jmax: c.jmax.unwrap_or(0),
        samples: c.samples.unwrap_or(0),
        budget: exp.budget(),
        tol: c.tol,
        seed: c.seed,
        fault: c.inject_fault,
    };
    let mut progress = |r: &PropertyResult, t: Duration| {
        let status = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let mut line = format!(
            "{status} {:<34} {:>8.3}s checks={} max_violation={} tol={}",
            r.name,
            t.as_secs_f64(),
            r.checks,
            fmt_g(r.max_violation),
            fmt_g(r.tolerance)
        );
        if let Some(k) = r.repro_seed {
            let _ = write!(line, " repro_seed={k}");
        }
        if let Some(note) = &r.note {
            let _ = write!(line, " ({note})");
        }
        eprintln!("{line}");
    };
    let report = verify_suite(&settings, &mut progress)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let code = if report.passed {
        EXIT_OK
    } else {
        EXIT_PROPERTY
    };
    Ok(deliver(exp, json_report(c, &report), code))
}

/// Parses arguments, runs, writes outputs, and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Ok(v) = std::env::var("NUMINDEX_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // A pool configured by an earlier call in the same process wins.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: NUMINDEX_THREADS must be a positive integer, got {v:?}");
                return EXIT_INPUT;
            }
        }
    }
    let outcome = Experiment::from_cli(cli).and_then(|exp| run(&exp));
    match outcome {
        Ok(outcome) => {
            for (path, text) in &outcome.files {
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("error: {}: {e}", path.display());
                    return EXIT_INPUT;
                }
            }
            print!("{}", outcome.stdout);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
