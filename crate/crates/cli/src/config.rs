//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma separated.
//! Unknown and repeated keys are rejected with their line number. See
//! `docs/config.md` for the schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vortex_core::continuation::ContinuationConfig;
use vortex_core::fiber::C64;
use vortex_core::geometry::{make_hopf, make_torus, BackendKind, Geometry};
use vortex_core::higgs::HiggsProblem;
use vortex_core::pair::{curvatures_for_degrees, weight_profile, PairProblem, SplitModel};
use vortex_core::{instances, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Vortex,
    Higgs,
    Stability,
    Verify,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vortex" => Ok(ProblemKind::Vortex),
            "higgs" => Ok(ProblemKind::Higgs),
            "stability" => Ok(ProblemKind::Stability),
            "verify" => Ok(ProblemKind::Verify),
            _ => Err("expected vortex, higgs, stability or verify".into()),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Vortex => "vortex",
            ProblemKind::Higgs => "higgs",
            ProblemKind::Stability => "stability",
            ProblemKind::Verify => "verify",
        })
    }
}

const KEYS: &[&str] = &[
    "kind",
    "instance",
    "backend",
    "grid",
    "period",
    "degrees",
    "deck_weights",
    "phi",
    "weights",
    "extensions",
    "tau",
    "lambda",
    "theta",
    "tau_lo",
    "tau_hi",
    "taus",
    "rel_width",
    "suite",
    "seed",
    "out",
    "eps_min",
    "ratio",
    "newton_tol",
    "max_newton",
    "lin_tol",
    "restart",
    "max_linear",
    "cap",
    "armijo",
    "min_step",
    "max_halvings",
    "polish",
    "floor_cap",
    "ritz_steps",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ProblemKind,
    /// A shipped instance; the problem keys are then not allowed.
    pub instance: Option<String>,
    pub backend: BackendKind,
    pub grid: usize,
    pub period: f64,
    pub degrees: Option<Vec<f64>>,
    pub deck_weights: Option<Vec<f64>>,
    pub phi: Vec<C64>,
    pub weights: Vec<f64>,
    pub extensions: Vec<(usize, usize)>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub theta: f64,
    pub tau_lo: Option<f64>,
    pub tau_hi: Option<f64>,
    pub taus: Vec<f64>,
    pub rel_width: f64,
    pub suite: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub continuation: ContinuationConfig,
    /// Coarse grids for shipped instances; set from the command line.
    pub quick: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kind: ProblemKind::Vortex,
            instance: None,
            backend: BackendKind::Torus,
            grid: 32,
            period: 1.0,
            degrees: None,
            deck_weights: None,
            phi: Vec::new(),
            weights: Vec::new(),
            extensions: Vec::new(),
            tau: None,
            lambda: None,
            theta: 0.0,
            tau_lo: None,
            tau_hi: None,
            taus: Vec::new(),
            rel_width: 0.01,
            suite: "all".into(),
            seed: 0,
            out: None,
            continuation: ContinuationConfig::default(),
            quick: false,
        }
    }
}

fn config_err(line: usize, key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("line {line}: {key}: {msg}"))
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| config_err(line, key, format!("{v:?}: {e}")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_num(line, key, x.trim())).collect()
}

/// `a`, `a+bi`, `a-bi` or `bi`.
fn parse_complex(line: usize, key: &str, v: &str) -> Result<C64> {
    let bad = || config_err(line, key, format!("{v:?} is not a complex number"));
    let s = v.replace(' ', "");
    if let Some(body) = s.strip_suffix('i') {
        let split = body
            .char_indices()
            .skip(1)
            .filter(|&(i, c)| (c == '+' || c == '-') && !body[..i].ends_with(['e', 'E']))
            .map(|(i, _)| i)
            .last();
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            x => x,
        };
        Ok(C64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
    } else {
        Ok(C64::new(s.parse().map_err(|_| bad())?, 0.0))
    }
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(line, key, format!("{v:?} is not a boolean"))),
    }
}

/// `a>b` pairs: summand `a` extends by summand `b`.
fn parse_extensions(line: usize, key: &str, v: &str) -> Result<Vec<(usize, usize)>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|item| {
            let (a, b) = item.trim().split_once('>').ok_or_else(|| config_err(line, key, format!("{item:?} is not of the form a>b")))?;
            Ok((parse_num(line, key, a.trim())?, parse_num(line, key, b.trim())?))
        })
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut c = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value, got {body:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(line, key, "unknown key"));
            }
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(config_err(line, key, format!("already set on line {prev}")));
            }
            let cc = &mut c.continuation;
            match key {
                "kind" => c.kind = v.parse().map_err(|e| config_err(line, key, e))?,
                "instance" => c.instance = Some(v.to_string()),
                "backend" => {
                    c.backend = match v {
                        "torus" => BackendKind::Torus,
                        "hopf" => BackendKind::Hopf,
                        _ => return Err(config_err(line, key, "expected torus or hopf")),
                    }
                }
                "grid" => c.grid = parse_num(line, key, v)?,
                "period" => c.period = parse_num(line, key, v)?,
                "degrees" => c.degrees = Some(parse_list(line, key, v)?),
                "deck_weights" => c.deck_weights = Some(parse_list(line, key, v)?),
                "phi" => c.phi = v.split(',').map(|x| parse_complex(line, key, x.trim())).collect::<Result<_>>()?,
                "weights" => c.weights = parse_list(line, key, v)?,
                "extensions" => c.extensions = parse_extensions(line, key, v)?,
                "tau" => c.tau = Some(parse_num(line, key, v)?),
                "lambda" => c.lambda = Some(parse_num(line, key, v)?),
                "theta" => c.theta = parse_num(line, key, v)?,
                "tau_lo" => c.tau_lo = Some(parse_num(line, key, v)?),
                "tau_hi" => c.tau_hi = Some(parse_num(line, key, v)?),
                "taus" => c.taus = parse_list(line, key, v)?,
                "rel_width" => c.rel_width = parse_num(line, key, v)?,
                "suite" => c.suite = v.to_string(),
                "seed" => c.seed = parse_num(line, key, v)?,
                "out" => c.out = Some(PathBuf::from(v)),
                "eps_min" => cc.eps_min = parse_num(line, key, v)?,
                "ratio" => cc.ratio = parse_num(line, key, v)?,
                "newton_tol" => cc.newton_tol = parse_num(line, key, v)?,
                "max_newton" => cc.max_newton = parse_num(line, key, v)?,
                "lin_tol" => cc.lin_tol = parse_num(line, key, v)?,
                "restart" => cc.restart = parse_num(line, key, v)?,
                "max_linear" => cc.max_linear = parse_num(line, key, v)?,
                "cap" => cc.cap = parse_num(line, key, v)?,
                "armijo" => cc.armijo = parse_num(line, key, v)?,
                "min_step" => cc.min_step = parse_num(line, key, v)?,
                "max_halvings" => cc.max_halvings = parse_num(line, key, v)?,
                "polish" => cc.polish = parse_bool(line, key, v)?,
                "floor_cap" => cc.floor_cap = parse_num(line, key, v)?,
                "ritz_steps" => cc.ritz_steps = parse_num(line, key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        if c.instance.is_some() {
            let problem_keys = ["backend", "grid", "period", "degrees", "deck_weights", "phi", "weights", "extensions", "tau", "lambda", "theta"];
            if let Some(k) = problem_keys.iter().find(|k| seen.contains_key(**k)) {
                return Err(config_err(seen[*k], k, "cannot be combined with instance"));
            }
        }
        Ok(c)
    }

    /// Checks every numeric field against the preconditions of the modules
    /// that will consume it. Runs before any compute.
    pub fn validate(&self) -> Result<()> {
        self.continuation.validate()?;
        if let Some(name) = &self.instance {
            if !instances::NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown instance {name:?}; known: {}", instances::NAMES.join(", "))));
            }
            return Ok(());
        }
        match self.backend {
            BackendKind::Torus if self.grid < 8 || !self.grid.is_multiple_of(2) => {
                return Err(Error::Config(format!("grid must be even and at least 8 on the torus, got {}", self.grid)));
            }
            BackendKind::Hopf if self.grid < 16 => {
                return Err(Error::Config(format!("grid must be at least 16 on the Hopf surface, got {}", self.grid)));
            }
            _ => {}
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {}", self.period)));
        }
        if self.deck_weights.is_some() && self.backend != BackendKind::Hopf {
            return Err(Error::Config("deck_weights needs backend = hopf".into()));
        }
        let rank = match (&self.degrees, &self.deck_weights) {
            (Some(_), Some(_)) => return Err(Error::Config("set degrees or deck_weights, not both".into())),
            (Some(d), None) => d.len(),
            (None, Some(w)) => {
                if w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::Config("deck weights must be positive".into()));
                }
                w.len()
            }
            (None, None) if self.kind == ProblemKind::Verify => return Ok(()),
            (None, None) => return Err(Error::Config("one of degrees or deck_weights is required".into())),
        };
        if rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        let all_finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !all_finite(self.degrees.as_deref().unwrap_or(&[])) || !all_finite(&self.weights) || !all_finite(&self.taus) {
            return Err(Error::Config("degrees, weights and taus must be finite".into()));
        }
        if self.kind != ProblemKind::Higgs && self.phi.len() != rank {
            return Err(Error::Config(format!("phi has {} entries for rank {rank}", self.phi.len())));
        }
        if !self.weights.is_empty() && self.weights.len() != rank {
            return Err(Error::Config(format!("weights has {} entries for rank {rank}", self.weights.len())));
        }
        if let Some(&(a, b)) = self.extensions.iter().find(|(a, b)| *a >= rank || *b >= rank || a == b) {
            return Err(Error::Config(format!("extension {a}>{b} is out of range for rank {rank}")));
        }
        for (name, v) in [("tau", self.tau), ("lambda", self.lambda), ("tau_lo", self.tau_lo), ("tau_hi", self.tau_hi)] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.rel_width > 0.0 && self.rel_width < 1.0) {
            return Err(Error::Config(format!("rel_width must lie in (0, 1), got {}", self.rel_width)));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<Geometry> {
        match self.backend {
            BackendKind::Torus => make_torus(self.grid, self.period),
            BackendKind::Hopf => make_hopf(self.grid),
        }
    }

    fn curvatures(&self, g: &Geometry) -> Vec<f64> {
        match (&self.degrees, &self.deck_weights) {
            (_, Some(w)) => w.iter().map(|&l| Geometry::hopf_line_curvature(l)).collect(),
            (Some(d), None) => curvatures_for_degrees(g, d),
            (None, None) => Vec::new(),
        }
    }

    /// The vortex problem at `tau` (the configured `tau` when `None`), with
    /// the split model attached for the stability analyzer.
    pub fn pair_problem(&self, tau: Option<f64>) -> Result<PairProblem> {
        if let Some(name) = &self.instance {
            let p = instances::by_name(name, self.quick)?;
            return Ok(match tau {
                Some(t) => p.with_tau(t),
                None => p,
            });
        }
        let tau = tau.or(self.tau).ok_or_else(|| Error::Config("tau is required".into()))?;
        let g = self.geometry()?;
        let curv = self.curvatures(&g);
        let profiles: Option<Vec<Vec<f64>>> = if self.weights.is_empty() {
            None
        } else {
            Some(self.weights.iter().enumerate().map(|(k, &a)| weight_profile(&g, a, k + 1)).collect())
        };
        let p = PairProblem::split(g, &curv, profiles.as_deref(), &self.phi, tau)?;
        let phi_index = self.phi.iter().position(|z| z.norm() > 0.0).unwrap_or(0);
        let model = SplitModel::with_extensions(p.summand_degrees(), phi_index, self.extensions.clone())?;
        p.with_model(model)
    }

    pub fn higgs_problem(&self) -> Result<HiggsProblem> {
        if self.instance.is_some() {
            return Err(Error::Config("shipped instances are vortex problems".into()));
        }
        if !self.weights.is_empty() {
            return Err(Error::Config("weights are not supported for higgs problems".into()));
        }
        let g = self.geometry()?;
        let curv = self.curvatures(&g);
        let probe = HiggsProblem::split(g.clone(), &curv, self.theta, 0.0)?;
        let lambda = self.lambda.unwrap_or_else(|| probe.degree_lambda());
        HiggsProblem::split(g, &curv, self.theta, lambda)
    }

    pub fn with_overrides(mut self, ov: &Overrides) -> Result<Self> {
        if let Some(g) = ov.grid {
            if self.instance.is_some() {
                return Err(Error::Config("--grid cannot be combined with a shipped instance".into()));
            }
            self.grid = g;
        }
        if let Some(e) = ov.eps_min {
            self.continuation.eps_min = e;
        }
        self.quick |= ov.quick;
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        self.continuation.seed = self.seed;
        if self.quick && self.instance.is_none() {
            let (nt, nh) = instances::grids(true);
            self.grid = self.grid.min(match self.backend {
                BackendKind::Torus => nt,
                BackendKind::Hopf => nh,
            });
        }
        Ok(self)
    }
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub eps_min: Option<f64>,
    pub seed: Option<u64>,
    pub quick: bool,
}
