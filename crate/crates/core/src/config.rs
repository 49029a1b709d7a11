//! Flat `key = value` run configuration.
//!
//! Grammar: one `key = value` per line, `#` starts a comment, blank lines are
//! ignored, lists are comma separated. Every key is also accepted as a CLI
//! flag `--key value`; later assignments override earlier ones. Unknown keys
//! are errors.
//!
//! `L` is the half-length of the box, which spans `[-L, L)` on each axis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::functionals::PhysParams;
use crate::grid::GridSpec;
use crate::ground_state::{InitialGuess, SolverOptions, DEFAULT_MAX_ITERS};

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "n",
    "L",
    "lambda1",
    "lambda2",
    "trap",
    "mass",
    "tol",
    "max_iters",
    "k",
    "init",
    "dt",
    "tmax",
    "sample_every",
    "auto_box",
    "free_box_factor",
    "evolve_pad",
    "steps_per_period",
    "experiment",
    "a_list",
    "c_list",
    "margins",
    "dilations",
    "global_dilation",
    "perturbations",
    "horizon",
    "stability_horizon",
    "control_horizon",
    "sweep_lambda1",
    "sweep_lambda2",
    "sweep_cells",
    "sweep_eps",
    "out_dir",
    "snapshots",
    "seed",
    "threads",
];

/// One-line description of a key, used for CLI help.
pub fn key_help(key: &str) -> &'static str {
    match key {
        "n" => "grid points per axis: one value or n1,n2,n3 (powers of two)",
        "L" => "box half-length: one value or L1,L2,L3",
        "lambda1" => "contact coupling",
        "lambda2" => "dipolar coupling",
        "trap" => "trap frequency a (0 = free problem)",
        "mass" => "mass c",
        "tol" => "solver residual tolerance (auto = solver default)",
        "max_iters" => "solver iteration cap",
        "k" => "trapped basin parameter (auto = 4 A of the trap Gaussian)",
        "init" => "initial guess: preset | gaussian",
        "dt" => "time step for evolve and trapped runs",
        "tmax" => "final time for evolve",
        "sample_every" => "steps between recorded samples",
        "auto_box" => "size boxes from the problem in experiments and groundstate",
        "free_box_factor" => "free box half-length in units of the Q = 0 Gaussian width",
        "evolve_pad" => "free runs evolve on a grid this many times larger, same spacing",
        "steps_per_period" => "free runs use dt = 1 / (mu * steps_per_period)",
        "experiment" => "scenario name",
        "a_list" => "trap frequencies for gap and mu-sign",
        "c_list" => "masses for small-mass",
        "margins" => "border margins lambda1 - 4 pi lambda2 / 3 (all < 0)",
        "dilations" => "dilation factors > 1 of the ground state for instability (blow-up branch)",
        "global_dilation" => "dilation factor < 1 for the global-existence branch of instability",
        "perturbations" => "relative Sigma sizes of trapped perturbations",
        "horizon" => "free run horizon in units of 1 / mu",
        "stability_horizon" => "trapped run horizon in units of 1 / a",
        "control_horizon" => "stationary control horizon in units of 1 / mu",
        "sweep_lambda1" => "regime sweep range min,max",
        "sweep_lambda2" => "regime sweep range min,max",
        "sweep_cells" => "regime sweep cells per axis",
        "sweep_eps" => "regime sweep border tolerance",
        "out_dir" => "output directory",
        "snapshots" => "write field snapshots",
        "seed" => "seed for random perturbations",
        "threads" => "worker threads (0 = automatic)",
        _ => "",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Preset,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: [usize; 3],
    pub half: [f64; 3],
    pub lambda1: f64,
    pub lambda2: f64,
    pub trap: f64,
    pub mass: f64,
    /// `None` uses the solver default for the problem.
    pub tol: Option<f64>,
    pub max_iters: usize,
    pub k: Option<f64>,
    pub init: InitKind,
    pub dt: f64,
    pub tmax: f64,
    pub sample_every: usize,
    /// Size boxes from the problem instead of `n` and `L` where a scenario
    /// allows it: free ground states get a box scaled to their decay length,
    /// trapped ones a box of half-length `max(8, 8 / sqrt(a))`.
    pub auto_box: bool,
    pub free_box_factor: f64,
    /// Free runs are evolved on a grid this many times larger, same spacing.
    pub evolve_pad: usize,
    /// Free runs step `1 / (mu * steps_per_period)`.
    pub steps_per_period: f64,
    pub experiment: Option<String>,
    pub a_list: Vec<f64>,
    pub c_list: Vec<f64>,
    pub margins: Vec<f64>,
    pub dilations: Vec<f64>,
    pub global_dilation: f64,
    pub perturbations: Vec<f64>,
    /// Free runs, in units of `1 / mu`.
    pub horizon: f64,
    /// Trapped runs, in units of `1 / a`.
    pub stability_horizon: f64,
    /// Stationary control run, in units of `1 / mu`.
    pub control_horizon: f64,
    pub sweep_lambda1: [f64; 2],
    pub sweep_lambda2: [f64; 2],
    pub sweep_cells: usize,
    pub sweep_eps: f64,
    pub out_dir: PathBuf,
    pub snapshots: bool,
    pub seed: u64,
    /// 0 lets the thread pool decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: [64; 3],
            half: [8.0; 3],
            lambda1: -1.0,
            lambda2: 0.3,
            trap: 0.0,
            mass: 1.0,
            tol: None,
            max_iters: DEFAULT_MAX_ITERS,
            k: None,
            init: InitKind::Preset,
            dt: 2e-3,
            tmax: 1.0,
            sample_every: 10,
            auto_box: true,
            free_box_factor: 12.0,
            evolve_pad: 2,
            steps_per_period: 500.0,
            experiment: None,
            a_list: vec![0.4, 0.2, 0.1, 0.05],
            c_list: vec![1.0, 0.5, 0.25, 0.1],
            margins: vec![-1.0, -0.5, -0.25],
            dilations: vec![1.02, 1.05, 1.10],
            global_dilation: 0.95,
            perturbations: vec![0.01, 0.05],
            horizon: 1.0,
            stability_horizon: 20.0,
            control_horizon: 0.15,
            sweep_lambda1: [-3.0, 3.0],
            sweep_lambda2: [-1.0, 1.0],
            sweep_cells: 41,
            sweep_eps: 1e-9,
            out_dir: PathBuf::from("out"),
            snapshots: false,
            seed: 0,
            threads: 0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::config(key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a non-negative integer")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("`{v}` is not a boolean"))),
    }
}

fn one_or_three<T: Copy>(key: &str, xs: Vec<T>) -> Result<[T; 3]> {
    match xs.len() {
        1 => Ok([xs[0]; 3]),
        3 => Ok([xs[0], xs[1], xs[2]]),
        m => Err(Error::config(key, format!("expected 1 or 3 values, got {m}"))),
    }
}

fn pair(key: &str, v: &str) -> Result<[f64; 2]> {
    let xs = parse_list(key, v)?;
    match xs.as_slice() {
        [a, b] if a < b => Ok([*a, *b]),
        [_, _] => Err(Error::config(key, "expected min < max")),
        _ => Err(Error::config(key, "expected `min,max`")),
    }
}

fn optional(v: &str) -> Option<&str> {
    match v {
        "" | "auto" | "default" | "none" => None,
        s => Some(s),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply every assignment in `text` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", no + 1), "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n" => {
                let xs = v
                    .split(',')
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.n = one_or_three(key, xs)?;
            }
            "L" => self.half = one_or_three(key, parse_list(key, v)?)?,
            "lambda1" => self.lambda1 = parse_f64(key, v)?,
            "lambda2" => self.lambda2 = parse_f64(key, v)?,
            "trap" => self.trap = parse_f64(key, v)?,
            "mass" => self.mass = parse_f64(key, v)?,
            "tol" => self.tol = optional(v).map(|s| parse_f64(key, s)).transpose()?,
            "max_iters" => self.max_iters = parse_usize(key, v)?,
            "k" => self.k = optional(v).map(|s| parse_f64(key, s)).transpose()?,
            "init" => {
                self.init = match v {
                    "preset" => InitKind::Preset,
                    "gaussian" => InitKind::Gaussian,
                    _ => return Err(Error::config(key, format!("`{v}` is not one of preset, gaussian"))),
                }
            }
            "dt" => self.dt = parse_f64(key, v)?,
            "tmax" => self.tmax = parse_f64(key, v)?,
            "sample_every" => self.sample_every = parse_usize(key, v)?,
            "auto_box" => self.auto_box = parse_bool(key, v)?,
            "free_box_factor" => self.free_box_factor = parse_f64(key, v)?,
            "evolve_pad" => self.evolve_pad = parse_usize(key, v)?,
            "steps_per_period" => self.steps_per_period = parse_f64(key, v)?,
            "experiment" => self.experiment = optional(v).map(str::to_string),
            "a_list" => self.a_list = parse_list(key, v)?,
            "c_list" => self.c_list = parse_list(key, v)?,
            "margins" => self.margins = parse_list(key, v)?,
            "dilations" => self.dilations = parse_list(key, v)?,
            "global_dilation" => self.global_dilation = parse_f64(key, v)?,
            "perturbations" => self.perturbations = parse_list(key, v)?,
            "horizon" => self.horizon = parse_f64(key, v)?,
            "stability_horizon" => self.stability_horizon = parse_f64(key, v)?,
            "control_horizon" => self.control_horizon = parse_f64(key, v)?,
            "sweep_lambda1" => self.sweep_lambda1 = pair(key, v)?,
            "sweep_lambda2" => self.sweep_lambda2 = pair(key, v)?,
            "sweep_cells" => self.sweep_cells = parse_usize(key, v)?,
            "sweep_eps" => self.sweep_eps = parse_f64(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "snapshots" => self.snapshots = parse_bool(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::config(key, format!("`{v}` is not a u64")))?,
            "threads" => self.threads = parse_usize(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Check every field against the preconditions of the modules that use it.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be > 0, got {x}")))
            }
        };
        self.grid().map_err(|e| Error::config("n", e.to_string()))?;
        if self.trap < 0.0 {
            return Err(Error::config("trap", "trap must be ≥ 0"));
        }
        positive("mass", self.mass)?;
        if let Some(t) = self.tol {
            positive("tol", t)?;
        }
        if let Some(k) = self.k {
            positive("k", k)?;
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be >= 1"));
        }
        positive("dt", self.dt)?;
        positive("tmax", self.tmax)?;
        if self.sample_every == 0 {
            return Err(Error::config("sample_every", "must be >= 1"));
        }
        positive("free_box_factor", self.free_box_factor)?;
        if self.evolve_pad == 0 || !self.evolve_pad.is_power_of_two() {
            return Err(Error::config("evolve_pad", "must be a power of two"));
        }
        positive("steps_per_period", self.steps_per_period)?;
        for (key, xs) in [
            ("a_list", &self.a_list),
            ("c_list", &self.c_list),
            ("dilations", &self.dilations),
        ] {
            if xs.is_empty() || xs.iter().any(|&x| x <= 0.0) {
                return Err(Error::config(key, "needs at least one value, all > 0"));
            }
        }
        if self.dilations.iter().any(|&t| t <= 1.0) {
            return Err(Error::config("dilations", "blow-up dilations must be > 1"));
        }
        if !(self.global_dilation > 0.0 && self.global_dilation < 1.0) {
            return Err(Error::config("global_dilation", "must lie in (0, 1)"));
        }
        if self.perturbations.iter().any(|&x| x < 0.0) {
            return Err(Error::config("perturbations", "must be >= 0"));
        }
        positive("horizon", self.horizon)?;
        positive("stability_horizon", self.stability_horizon)?;
        positive("control_horizon", self.control_horizon)?;
        if self.sweep_cells < 2 {
            return Err(Error::config("sweep_cells", "must be >= 2"));
        }
        if self.sweep_eps < 0.0 {
            return Err(Error::config("sweep_eps", "must be >= 0"));
        }
        if let Some(name) = &self.experiment {
            if !crate::experiments::SCENARIOS.contains(&name.as_str()) {
                return Err(Error::config(
                    "experiment",
                    format!("`{name}` is not one of {}", crate::experiments::SCENARIOS.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.half)
    }

    pub fn params(&self) -> Result<PhysParams> {
        PhysParams::new(self.lambda1, self.lambda2, self.trap, self.mass)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            k: self.k,
            init: match self.init {
                InitKind::Preset => InitialGuess::Preset,
                InitKind::Gaussian => InitialGuess::Gaussian([1.0; 3]),
            },
        }
    }

    /// Fully resolved configuration in the same grammar; parsing it back
    /// gives an identical `RunConfig`.
    pub fn echo(&self) -> String {
        fn list(xs: &[f64]) -> String {
            xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
        }
        fn opt(x: Option<f64>) -> String {
            x.map_or("auto".into(), |v| format!("{v:?}"))
        }
        let n = self.n.map(|x| x.to_string()).join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("n", n);
        kv("L", list(&self.half));
        kv("lambda1", format!("{:?}", self.lambda1));
        kv("lambda2", format!("{:?}", self.lambda2));
        kv("trap", format!("{:?}", self.trap));
        kv("mass", format!("{:?}", self.mass));
        kv("tol", opt(self.tol));
        kv("max_iters", self.max_iters.to_string());
        kv("k", opt(self.k));
        kv(
            "init",
            match self.init {
                InitKind::Preset => "preset".into(),
                InitKind::Gaussian => "gaussian".into(),
            },
        );
        kv("dt", format!("{:?}", self.dt));
        kv("tmax", format!("{:?}", self.tmax));
        kv("sample_every", self.sample_every.to_string());
        kv("auto_box", self.auto_box.to_string());
        kv("free_box_factor", format!("{:?}", self.free_box_factor));
        kv("evolve_pad", self.evolve_pad.to_string());
        kv("steps_per_period", format!("{:?}", self.steps_per_period));
        kv("experiment", self.experiment.clone().unwrap_or_else(|| "none".into()));
        kv("a_list", list(&self.a_list));
        kv("c_list", list(&self.c_list));
        kv("margins", list(&self.margins));
        kv("dilations", list(&self.dilations));
        kv("global_dilation", format!("{:?}", self.global_dilation));
        kv("perturbations", list(&self.perturbations));
        kv("horizon", format!("{:?}", self.horizon));
        kv("stability_horizon", format!("{:?}", self.stability_horizon));
        kv("control_horizon", format!("{:?}", self.control_horizon));
        kv("sweep_lambda1", list(&self.sweep_lambda1));
        kv("sweep_lambda2", list(&self.sweep_lambda2));
        kv("sweep_cells", self.sweep_cells.to_string());
        kv("sweep_eps", format!("{:?}", self.sweep_eps));
        kv("out_dir", self.out_dir.display().to_string());
        kv("snapshots", self.snapshots.to_string());
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.to_string());
        out
    }
}
