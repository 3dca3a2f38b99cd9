//! Run configuration: a line-oriented `key = value` file with `[model]`,
//! `[columns]`, `[hyper]` and `[run]` sections and `#` comments.
//!
//! ```text
//! [model]
//! type = lmm
//!
//! [columns]
//! response = y
//! linear = x1, x2
//! smooth = x3, x4:20     # optional per-term knot count
//! group = school
//!
//! [run]
//! n_warm = 200
//! ```

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use streamvb::diagnostics::DEFAULT_THRESHOLD;
use streamvb::linreg::{DEFAULT_A, DEFAULT_SIGSQ_BETA};
use streamvb::simdata::{Scenario, LINEAR_BETA};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinReg,
    Lmm,
    Sparse,
    Logistic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LinReg => "linreg",
            ModelKind::Lmm => "lmm",
            ModelKind::Sparse => "sparse",
            ModelKind::Logistic => "logistic",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linreg" => Ok(ModelKind::LinReg),
            "lmm" => Ok(ModelKind::Lmm),
            "sparse" => Ok(ModelKind::Sparse),
            "logistic" => Ok(ModelKind::Logistic),
            other => Err(format!("unknown model type '{other}' (expected linreg, lmm, sparse or logistic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmoothTerm {
    pub column: String,
    /// Knot count; `None` picks the default from the warm-up size.
    pub knots: Option<usize>,
}

impl fmt::Display for SmoothTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.knots {
            Some(k) => write!(f, "{}:{k}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub sigsq_beta: f64,
    pub a_eps: f64,
    pub a_u: f64,
    pub a_rho: f64,
    pub b_rho: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            sigsq_beta: DEFAULT_SIGSQ_BETA,
            a_eps: DEFAULT_A,
            a_u: DEFAULT_A,
            a_rho: 1.0,
            b_rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub n_warm: usize,
    pub n_valid: usize,
    pub scaling: bool,
    pub out: PathBuf,
    pub threshold: f64,
    /// Records between summary refreshes.
    pub cadence: usize,
    /// Capacity of the ingest hand-off queue.
    pub queue: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Warm-up doublings `fit` may try when the diagnostic rejects.
    pub max_retries: usize,
    /// Parameters for which density grids are written; `all` for every one.
    pub densities: Vec<String>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            n_warm: 100,
            n_valid: 100,
            scaling: false,
            out: PathBuf::from("out"),
            threshold: DEFAULT_THRESHOLD,
            cadence: 100,
            queue: 1024,
            tol: 1e-8,
            max_iter: 500,
            max_retries: 2,
            densities: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub response: String,
    pub linear: Vec<String>,
    pub smooth: Vec<SmoothTerm>,
    pub groups: Vec<String>,
    /// Sparse basis columns; a trailing `*` matches by prefix.
    pub basis: Vec<String>,
    pub hyper: Hyper,
    pub run: RunSettings,
}

impl RunConfig {
    fn new(model: ModelKind, response: &str) -> Self {
        RunConfig {
            model,
            response: response.into(),
            linear: Vec::new(),
            smooth: Vec::new(),
            groups: Vec::new(),
            basis: Vec::new(),
            hyper: Hyper::default(),
            run: RunSettings::default(),
        }
    }

    /// Configuration matching the columns written by `simulate`.
    pub fn preset(scenario: Scenario) -> Self {
        let names = |r: std::ops::RangeInclusive<usize>| r.map(|i| format!("x{i}")).collect::<Vec<_>>();
        let smooth = |cols: &[&str]| {
            cols.iter()
                .map(|c| SmoothTerm {
                    column: c.to_string(),
                    knots: None,
                })
                .collect()
        };
        match scenario {
            Scenario::GaussianAdditive => RunConfig {
                linear: names(1..=3),
                smooth: smooth(&["x4", "x5", "x6"]),
                ..RunConfig::new(ModelKind::Lmm, "y")
            },
            Scenario::LogisticAdditive => RunConfig {
                linear: names(1..=1),
                smooth: smooth(&["x2", "x3"]),
                ..RunConfig::new(ModelKind::Logistic, "y")
            },
            Scenario::Binary1d => RunConfig {
                smooth: smooth(&["x"]),
                ..RunConfig::new(ModelKind::Logistic, "y")
            },
            Scenario::RandomIntercept => RunConfig {
                linear: vec!["x".into()],
                groups: vec!["group".into()],
                ..RunConfig::new(ModelKind::Lmm, "y")
            },
            Scenario::SparseSignal => RunConfig {
                basis: vec!["z*".into()],
                ..RunConfig::new(ModelKind::Sparse, "y")
            },
            Scenario::Linear => RunConfig {
                linear: names(1..=LINEAR_BETA.len() - 1),
                ..RunConfig::new(ModelKind::LinReg, "y")
            },
        }
    }

    /// Without a config file: the `simulate` preset whose columns match the
    /// header exactly, otherwise linear regression of the first column on
    /// all the others.
    pub fn infer(header: &[String]) -> Result<Self, CliError> {
        let first = header
            .first()
            .ok_or_else(|| CliError::Data("input has an empty header".into()))?;
        for sc in Scenario::ALL {
            if simulated_header(sc) == header {
                return Ok(RunConfig::preset(sc));
            }
        }
        Ok(RunConfig {
            linear: header[1..].to_vec(),
            ..RunConfig::new(ModelKind::LinReg, first)
        })
    }

    /// Renders the configuration in the file grammar, every key explicit.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let join = |v: &[String]| v.join(", ");
        let _ = writeln!(s, "[model]\ntype = {}\n", self.model.name());
        let _ = writeln!(s, "[columns]\nresponse = {}", self.response);
        for (key, vals) in [("linear", &self.linear), ("group", &self.groups), ("basis", &self.basis)] {
            if !vals.is_empty() {
                let _ = writeln!(s, "{key} = {}", join(vals));
            }
        }
        if !self.smooth.is_empty() {
            let terms: Vec<String> = self.smooth.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(s, "smooth = {}", join(&terms));
        }
        let h = &self.hyper;
        let _ = writeln!(
            s,
            "\n[hyper]\nsigsq_beta = {:?}\na_eps = {:?}\na_u = {:?}\na_rho = {:?}\nb_rho = {:?}",
            h.sigsq_beta, h.a_eps, h.a_u, h.a_rho, h.b_rho
        );
        let r = &self.run;
        let _ = writeln!(
            s,
            "\n[run]\nn_warm = {}\nn_valid = {}\nscaling = {}\nout = {}\nthreshold = {:?}\ncadence = {}\nqueue = {}\ntol = {:?}\nmax_iter = {}\nmax_retries = {}",
            r.n_warm,
            r.n_valid,
            r.scaling,
            r.out.display(),
            r.threshold,
            r.cadence,
            r.queue,
            r.tol,
            r.max_iter,
            r.max_retries
        );
        if !r.densities.is_empty() {
            let _ = writeln!(s, "densities = {}", join(&r.densities));
        }
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config { line: None, msg });
        let has_blocks = !self.smooth.is_empty() || !self.groups.is_empty();
        match self.model {
            ModelKind::LinReg if has_blocks || !self.basis.is_empty() => {
                return bad("linreg takes linear predictors only; use lmm for smooth or group terms".into())
            }
            ModelKind::Sparse if self.basis.is_empty() => return bad("sparse model needs basis columns".into()),
            ModelKind::Sparse if has_blocks || !self.linear.is_empty() => {
                return bad("sparse model takes basis columns only".into())
            }
            ModelKind::Lmm | ModelKind::Logistic if !self.basis.is_empty() => {
                return bad("basis columns are only used by the sparse model".into())
            }
            _ => {}
        }
        if self.smooth.iter().any(|t| t.knots == Some(0)) {
            return bad("knot counts must be positive".into());
        }
        let r = &self.run;
        if r.n_warm == 0 || r.n_valid == 0 || r.cadence == 0 || r.queue == 0 || r.max_iter == 0 {
            return bad("n_warm, n_valid, cadence, queue and max_iter must be positive".into());
        }
        if !(r.threshold > 0.0) || !(r.tol > 0.0) {
            return bad("threshold and tol must be positive".into());
        }
        let h = &self.hyper;
        if [h.sigsq_beta, h.a_eps, h.a_u, h.a_rho, h.b_rho].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("hyperparameters must be positive and finite".into());
        }
        Ok(())
    }
}

/// Column header written by `simulate` for a scenario with default sizes.
pub fn simulated_header(scenario: Scenario) -> Vec<String> {
    let mut h = vec!["y".to_string()];
    let cfg = streamvb::simdata::SimConfig {
        seed: 0,
        n: 1,
        scenario,
    };
    let sim = streamvb::simdata::Simulator::new(cfg).expect("default parameters are valid");
    h.extend(sim.predictor_names());
    if scenario == Scenario::RandomIntercept {
        h.push("group".into());
    }
    h
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_num<T: FromStr>(v: &str, key: &str, line: usize) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Config {
        line: Some(line),
        msg: format!("'{key}' expects a number, got '{v}'"),
    })
}

fn parse_bool(v: &str, line: usize) -> Result<bool, CliError> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(CliError::Config {
            line: Some(line),
            msg: format!("expected on/off, got '{v}'"),
        }),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let err = |line: usize, msg: String| CliError::Config { line: Some(line), msg };
    let mut section = String::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    // column -> (role, line) for the conflict check
    let mut roles: HashMap<String, (&'static str, usize)> = HashMap::new();
    let mut model: Option<ModelKind> = None;
    let mut response: Option<String> = None;
    let mut cfg = RunConfig::new(ModelKind::LinReg, "");

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            if !["model", "columns", "hyper", "run"].contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{body}'")))?;
        if section.is_empty() {
            return Err(err(line, format!("'{key}' appears before any section header")));
        }
        if let Some(first) = seen.insert((section.clone(), key.to_string()), line) {
            return Err(err(line, format!("'{key}' assigned on line {first} and again on line {line}")));
        }

        let mut claim = |cols: &[String], role: &'static str| -> Result<(), CliError> {
            for c in cols {
                if let Some((other, at)) = roles.insert(c.clone(), (role, line)) {
                    return Err(err(
                        line,
                        format!("column '{c}' is the {other} on line {at} and the {role} on line {line}"),
                    ));
                }
            }
            Ok(())
        };

        match (section.as_str(), key) {
            ("model", "type") => model = Some(value.parse().map_err(|m| err(line, m))?),
            ("columns", "response") => {
                claim(&[value.to_string()], "response")?;
                response = Some(value.to_string());
            }
            ("columns", "linear") => {
                cfg.linear = split_list(value);
                claim(&cfg.linear, "linear predictor")?;
            }
            ("columns", "group") => {
                cfg.groups = split_list(value);
                claim(&cfg.groups, "group column")?;
            }
            ("columns", "basis") => {
                cfg.basis = split_list(value);
                claim(&cfg.basis, "basis column")?;
            }
            ("columns", "smooth") => {
                let mut terms = Vec::new();
                for item in split_list(value) {
                    let term = match item.split_once(':') {
                        Some((c, k)) => SmoothTerm {
                            column: c.trim().to_string(),
                            knots: Some(parse_num(k.trim(), "smooth", line)?),
                        },
                        None => SmoothTerm {
                            column: item,
                            knots: None,
                        },
                    };
                    terms.push(term);
                }
                let cols: Vec<String> = terms.iter().map(|t| t.column.clone()).collect();
                claim(&cols, "smooth predictor")?;
                cfg.smooth = terms;
            }
            ("hyper", k) => {
                let v: f64 = parse_num(value, k, line)?;
                let h = &mut cfg.hyper;
                match k {
                    "sigsq_beta" => h.sigsq_beta = v,
                    "a_eps" | "a" => h.a_eps = v,
                    "a_u" => h.a_u = v,
                    "a_rho" => h.a_rho = v,
                    "b_rho" => h.b_rho = v,
                    _ => return Err(err(line, format!("unknown key '{k}' in [hyper]"))),
                }
            }
            ("run", k) => {
                let r = &mut cfg.run;
                match k {
                    "n_warm" => r.n_warm = parse_num(value, k, line)?,
                    "n_valid" => r.n_valid = parse_num(value, k, line)?,
                    "scaling" => r.scaling = parse_bool(value, line)?,
                    "out" => r.out = PathBuf::from(value),
                    "threshold" => r.threshold = parse_num(value, k, line)?,
                    "cadence" => r.cadence = parse_num(value, k, line)?,
                    "queue" => r.queue = parse_num(value, k, line)?,
                    "tol" => r.tol = parse_num(value, k, line)?,
                    "max_iter" => r.max_iter = parse_num(value, k, line)?,
                    "max_retries" => r.max_retries = parse_num(value, k, line)?,
                    "densities" => r.densities = split_list(value),
                    _ => return Err(err(line, format!("unknown key '{k}' in [run]"))),
                }
            }
            (s, k) => return Err(err(line, format!("unknown key '{k}' in [{s}]"))),
        }
    }

    cfg.model = model.ok_or_else(|| CliError::Config {
        line: None,
        msg: "missing [model] type".into(),
    })?;
    cfg.response = response.ok_or_else(|| CliError::Config {
        line: None,
        msg: "missing response column".into(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}
