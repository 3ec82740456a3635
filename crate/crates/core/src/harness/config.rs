//! Run configuration: a flat TOML subset with `[section]` headers.
//!
//! ```toml
//! model = "ESVM"            # ESVM | VM | L-ESVM | L-VM | STATIONARY | STATIONARY-1SPECIES
//! preset = "fig3-esvm"      # optional; explicit keys override it
//!
//! [grid]
//! nx = 128
//! ny = 128
//! x_min = -1.0              # box defaults to [-1, 1]^2
//!
//! [params]                  # beta1 beta2 eps m alpha g1 g2 p1_star p2_star
//! [control]                 # dt cfl t_end velocity_law rel_tol max_iter method
//! [initial]                 # kind = banded | rectangles | concentric
//! [q]                       # source = zero | uniform | file
//! [output]                  # dir every
//! [sweep]                   # equal-length lists of parameter values
//! ```
//!
//! Unknown keys are errors and every violation is reported at once.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::constitutive::ModelParams;
use crate::dynamics::{ModelKind, StepControl, VelocityLaw};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg::{SolverConfig, SolverMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Esvm,
    Vm,
    LEsvm,
    LVm,
    Stationary,
    StationarySingle,
}

impl Model {
    pub const ALL: [Model; 6] = [Model::Esvm, Model::Vm, Model::LEsvm, Model::LVm, Model::Stationary, Model::StationarySingle];

    pub fn name(self) -> &'static str {
        match self {
            Model::Esvm => "ESVM",
            Model::Vm => "VM",
            Model::LEsvm => "L-ESVM",
            Model::LVm => "L-VM",
            Model::Stationary => "STATIONARY",
            Model::StationarySingle => "STATIONARY-1SPECIES",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Density-based time stepping.
    pub fn is_dynamic(self) -> bool {
        matches!(self, Model::Esvm | Model::Vm)
    }

    pub fn is_limit(self) -> bool {
        matches!(self, Model::LEsvm | Model::LVm)
    }

    pub fn is_stationary(self) -> bool {
        matches!(self, Model::Stationary | Model::StationarySingle)
    }

    pub fn step_kind(self) -> ModelKind {
        match self {
            Model::Vm | Model::LVm => ModelKind::Vm,
            _ => ModelKind::Esvm,
        }
    }

    /// Whether `q` may be nonzero.
    fn takes_q(self) -> bool {
        matches!(self, Model::LEsvm | Model::Stationary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// Tissue 1 on the central band of the lower half, tissue 2 on the two
    /// lateral strips.
    Banded { level: f64 },
    /// Unions of rectangles `[x0, x1, y0, y1]`.
    Rectangles { density1: f64, density2: f64, tissue1: Vec<[f64; 4]>, tissue2: Vec<[f64; 4]> },
    /// Disk of tissue 1 inside an annulus of tissue 2, centered in the box.
    Concentric { r1: f64, r2: f64, density1: f64, density2: f64 },
}

impl InitialData {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialData::Banded { .. } => "banded",
            InitialData::Rectangles { .. } => "rectangles",
            InitialData::Concentric { .. } => "concentric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QSource {
    Zero,
    Uniform(f64),
    /// Field CSV on the run grid.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub dt: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub velocity_law: VelocityLaw,
    pub solver: SolverConfig,
}

impl Default for Control {
    fn default() -> Self {
        let c = StepControl::default();
        Self { dt: c.dt, cfl: c.cfl_number, t_end: c.t_end, velocity_law: c.velocity_law, solver: c.solver }
    }
}

/// Parameter names a sweep may vary.
pub const SWEEP_KEYS: [&str; 9] = ["eps", "m", "alpha", "beta1", "beta2", "g1", "g2", "p1_star", "p2_star"];

const LIMIT_FORBIDDEN: [&str; 3] = ["eps", "m", "alpha"];

/// Equal-length value lists; point `k` takes the `k`-th entry of each.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Sweep {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> Vec<(String, f64)> {
        self.columns.iter().map(|(name, vals)| (name.clone(), vals[k])).collect()
    }
}

pub fn set_param(params: &mut ModelParams, key: &str, v: f64) -> bool {
    let slot = match key {
        "beta1" => &mut params.beta1,
        "beta2" => &mut params.beta2,
        "eps" => &mut params.eps,
        "m" => &mut params.m,
        "alpha" => &mut params.alpha,
        "g1" => &mut params.g1,
        "g2" => &mut params.g2,
        "p1_star" => &mut params.p1_star,
        "p2_star" => &mut params.p2_star,
        _ => return false,
    };
    *slot = v;
    true
}

fn get_param(params: &ModelParams, key: &str) -> f64 {
    match key {
        "beta1" => params.beta1,
        "beta2" => params.beta2,
        "eps" => params.eps,
        "m" => params.m,
        "alpha" => params.alpha,
        "g1" => params.g1,
        "g2" => params.g2,
        "p1_star" => params.p1_star,
        "p2_star" => params.p2_star,
        _ => unreachable!("unknown parameter {key}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub preset: Option<String>,
    pub grid: GridSpec,
    pub params: ModelParams,
    pub control: Control,
    pub initial: InitialData,
    pub q: QSource,
    pub out_dir: PathBuf,
    /// Observer cadence in steps.
    pub every: usize,
    pub sweep: Option<Sweep>,
}

impl RunConfig {
    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt: self.control.dt,
            cfl_number: self.control.cfl,
            t_end: self.control.t_end,
            model: self.model.step_kind(),
            velocity_law: self.control.velocity_law,
            solver: self.control.solver,
        }
    }

    pub fn with_grid(&self, nx: usize, ny: usize) -> Result<Self> {
        Ok(Self { grid: self.grid.with_resolution(nx, ny)?, ..self.clone() })
    }

    /// Lowercase hex SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Canonical text form; `parse_config` of it gives back `self`.
    pub fn to_toml(&self) -> String {
        let mut o = String::new();
        let f = |v: f64| format!("{v:?}");
        let _ = writeln!(o, "model = \"{}\"", self.model.name());
        if let Some(p) = &self.preset {
            let _ = writeln!(o, "preset = \"{p}\"");
        }
        let g = &self.grid;
        let _ = writeln!(o, "\n[grid]\nnx = {}\nny = {}", g.nx, g.ny);
        let _ = writeln!(o, "x_min = {}\nx_max = {}\ny_min = {}\ny_max = {}", f(g.x_min), f(g.x_max), f(g.y_min), f(g.y_max));
        o.push_str("\n[params]\n");
        for key in SWEEP_KEYS {
            if self.model.is_dynamic() || !LIMIT_FORBIDDEN.contains(&key) {
                let _ = writeln!(o, "{key} = {}", f(get_param(&self.params, key)));
            }
        }
        let c = &self.control;
        let _ = writeln!(o, "\n[control]\ndt = {}\ncfl = {}\nt_end = {}", f(c.dt), f(c.cfl), f(c.t_end));
        let law = match c.velocity_law {
            VelocityLaw::Dirichlet => "dirichlet",
            VelocityLaw::GradientForm => "gradient",
        };
        let _ = writeln!(o, "velocity_law = \"{law}\"\nrel_tol = {}", f(c.solver.rel_tol));
        if let Some(n) = c.solver.max_iter {
            let _ = writeln!(o, "max_iter = {n}");
        }
        let method = match c.solver.method {
            SolverMethod::Iterative => "iterative",
            SolverMethod::DirectBanded => "direct",
        };
        let _ = writeln!(o, "method = \"{method}\"");
        let _ = writeln!(o, "\n[initial]\nkind = \"{}\"", self.initial.kind());
        let rects = |r: &[[f64; 4]]| {
            let items: Vec<String> = r.iter().map(|a| format!("[{}, {}, {}, {}]", f(a[0]), f(a[1]), f(a[2]), f(a[3]))).collect();
            format!("[{}]", items.join(", "))
        };
        match &self.initial {
            InitialData::Banded { level } => {
                let _ = writeln!(o, "level = {}", f(*level));
            }
            InitialData::Rectangles { density1, density2, tissue1, tissue2 } => {
                let _ = writeln!(o, "density1 = {}\ndensity2 = {}", f(*density1), f(*density2));
                let _ = writeln!(o, "tissue1 = {}\ntissue2 = {}", rects(tissue1), rects(tissue2));
            }
            InitialData::Concentric { r1, r2, density1, density2 } => {
                let _ = writeln!(o, "r1 = {}\nr2 = {}\ndensity1 = {}\ndensity2 = {}", f(*r1), f(*r2), f(*density1), f(*density2));
            }
        }
        match &self.q {
            QSource::Zero => o.push_str("\n[q]\nsource = \"zero\"\n"),
            QSource::Uniform(c) => {
                let _ = writeln!(o, "\n[q]\nsource = \"uniform\"\nvalue = {}", f(*c));
            }
            QSource::File(p) => {
                let _ = writeln!(o, "\n[q]\nsource = \"file\"\npath = {}", Value::String(p.display().to_string()));
            }
        }
        let _ = writeln!(o, "\n[output]\ndir = {}\nevery = {}", Value::String(self.out_dir.display().to_string()), self.every);
        if let Some(sw) = &self.sweep {
            o.push_str("\n[sweep]\n");
            for (name, vals) in &sw.columns {
                let items: Vec<String> = vals.iter().map(|v| f(*v)).collect();
                let _ = writeln!(o, "{name} = [{}]", items.join(", "));
            }
        }
        o
    }
}

/// Names of the compiled-in presets.
pub const PRESETS: [&str; 6] = ["fig3-esvm", "fig3-vm", "fig3-lesvm", "fig3-lvm", "fig3-gradient-form", "stationary-concentric"];

/// Compiled-in configuration by name.
pub fn preset(name: &str) -> Option<RunConfig> {
    let grid = GridSpec::new(-1.0, 1.0, -1.0, 1.0, 128, 128).expect("valid box");
    let fig3 = RunConfig {
        model: Model::Esvm,
        preset: Some(name.to_string()),
        grid,
        params: ModelParams::default(),
        control: Control { dt: 1e-3, cfl: 0.4, t_end: 0.1, ..Control::default() },
        initial: InitialData::Banded { level: 0.9 },
        q: QSource::Zero,
        out_dir: PathBuf::from("out"),
        every: 10,
        sweep: None,
    };
    let cfg = match name {
        "fig3-esvm" => fig3,
        "fig3-vm" => RunConfig { model: Model::Vm, ..fig3 },
        "fig3-lesvm" => RunConfig { model: Model::LEsvm, ..fig3 },
        "fig3-lvm" => RunConfig { model: Model::LVm, ..fig3 },
        "fig3-gradient-form" => {
            RunConfig { control: Control { velocity_law: VelocityLaw::GradientForm, ..fig3.control }, ..fig3 }
        }
        "stationary-concentric" => RunConfig {
            model: Model::Stationary,
            params: ModelParams { beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, p1_star: 5.0, p2_star: 10.0, ..ModelParams::default() },
            initial: InitialData::Concentric { r1: 0.3, r2: 0.6, density1: 0.9, density2: 0.9 },
            ..fig3
        },
        _ => return None,
    };
    Some(cfg)
}

/// Collects every violation while walking the parsed table.
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn check_keys(&mut self, table: &Table, section: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let full = if section.is_empty() { key.clone() } else { format!("{section}.{key}") };
                self.errors.push(format!("unknown key `{full}`"));
            }
        }
    }

    fn section<'a>(&mut self, root: &'a Table, name: &str) -> Option<&'a Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("`{name}` must be a [section]"));
                None
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<f64> {
        match t?.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be a number"));
                None
            }
        }
    }

    fn uint(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<usize> {
        match t?.get(key)? {
            Value::Integer(v) if *v > 0 => Some(*v as usize),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be a positive integer"));
                None
            }
        }
    }

    fn string<'a>(&mut self, t: Option<&'a Table>, section: &str, key: &str) -> Option<&'a str> {
        match t?.get(key)? {
            Value::String(s) => Some(s),
            _ => {
                let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
                self.errors.push(format!("`{full}` must be a string"));
                None
            }
        }
    }

    fn floats(&mut self, v: &Value, what: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = v else {
            self.errors.push(format!("`{what}` must be a list of numbers"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(x) => out.push(*x as f64),
                _ => {
                    self.errors.push(format!("`{what}` must be a list of numbers"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn rects(&mut self, t: Option<&Table>, key: &str) -> Option<Vec<[f64; 4]>> {
        let v = t?.get(key)?;
        let what = format!("initial.{key}");
        let Value::Array(items) = v else {
            self.errors.push(format!("`{what}` must be a list of [x0, x1, y0, y1] rectangles"));
            return None;
        };
        let mut out = Vec::new();
        for item in items {
            let r = self.floats(item, &what)?;
            if r.len() != 4 || !(r[0] < r[1] && r[2] < r[3]) {
                self.errors.push(format!("`{what}` entries must be [x0, x1, y0, y1] with x0 < x1 and y0 < y1"));
                return None;
            }
            out.push([r[0], r[1], r[2], r[3]]);
        }
        Some(out)
    }

    fn require<T>(&mut self, value: Option<T>, key: &str) -> Option<T> {
        if value.is_none() {
            self.errors.push(format!("missing required key `{key}`"));
        }
        value
    }
}

/// Parses and validates a configuration, reporting all violations.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax: {}", e.message())]))?;
    let mut r = Reader { errors: Vec::new() };
    r.check_keys(&root, "", &["model", "preset", "grid", "params", "control", "initial", "q", "output", "sweep"]);

    let base = match r.string(Some(&root), "", "preset") {
        Some(name) => match preset(name) {
            Some(cfg) => Some(cfg),
            None => {
                r.errors.push(format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")));
                None
            }
        },
        None => None,
    };
    let base = base.as_ref();

    let model = match r.string(Some(&root), "", "model") {
        Some(name) => Model::parse(name).or_else(|| {
            let known: Vec<&str> = Model::ALL.iter().map(|m| m.name()).collect();
            r.errors.push(format!("unknown model `{name}` (known: {})", known.join(", ")));
            None
        }),
        None => r.require(base.map(|b| b.model), "model"),
    };
    // requirements below follow the most demanding model when it is unknown
    let m = model.unwrap_or(Model::Esvm);

    // [grid]
    let grid_t = r.section(&root, "grid");
    if let Some(t) = grid_t {
        r.check_keys(t, "grid", &["nx", "ny", "x_min", "x_max", "y_min", "y_max"]);
    }
    let nx = r.uint(grid_t, "grid", "nx").or(base.map(|b| b.grid.nx));
    let nx = r.require(nx, "grid.nx");
    let ny = r.uint(grid_t, "grid", "ny").or(base.map(|b| b.grid.ny));
    let ny = r.require(ny, "grid.ny");
    let mut bounds = [-1.0, 1.0, -1.0, 1.0];
    for (k, key) in ["x_min", "x_max", "y_min", "y_max"].iter().enumerate() {
        let from_base = base.map(|b| [b.grid.x_min, b.grid.x_max, b.grid.y_min, b.grid.y_max][k]);
        if let Some(v) = r.float(grid_t, "grid", key).or(from_base) {
            bounds[k] = v;
        }
    }
    let grid = match (nx, ny) {
        (Some(nx), Some(ny)) => match GridSpec::new(bounds[0], bounds[1], bounds[2], bounds[3], nx, ny) {
            Ok(g) => Some(g),
            Err(e) => {
                r.errors.push(e.to_string());
                None
            }
        },
        _ => None,
    };

    // [params]
    let params_t = r.section(&root, "params");
    if let Some(t) = params_t {
        r.check_keys(t, "params", &SWEEP_KEYS);
    }
    let mut params = base.map_or_else(ModelParams::default, |b| b.params);
    for key in SWEEP_KEYS {
        let explicit = r.float(params_t, "params", key);
        let forbidden = !m.is_dynamic() && LIMIT_FORBIDDEN.contains(&key);
        if forbidden {
            if explicit.is_some() {
                r.errors.push(format!("key `params.{key}` is not allowed for model {}", m.name()));
            }
            continue;
        }
        let needed = match key {
            "m" | "alpha" => m == Model::Esvm,
            _ => true,
        };
        match explicit {
            Some(v) => {
                set_param(&mut params, key, v);
            }
            None if base.is_none() && needed => r.errors.push(format!("missing required key `params.{key}`")),
            None => {}
        }
    }

    // [control]
    let control_t = r.section(&root, "control");
    if let Some(t) = control_t {
        r.check_keys(t, "control", &["dt", "cfl", "t_end", "velocity_law", "rel_tol", "max_iter", "method"]);
    }
    let mut control = base.map_or_else(Control::default, |b| b.control);
    let timed = !m.is_stationary();
    match r.float(control_t, "control", "dt") {
        Some(v) => control.dt = v,
        None if base.is_none() && timed => r.errors.push("missing required key `control.dt`".into()),
        None => {}
    }
    match r.float(control_t, "control", "t_end") {
        Some(v) => control.t_end = v,
        None if base.is_none() && timed => r.errors.push("missing required key `control.t_end`".into()),
        None => {}
    }
    if let Some(v) = r.float(control_t, "control", "cfl") {
        control.cfl = v;
    }
    if let Some(v) = r.float(control_t, "control", "rel_tol") {
        control.solver.rel_tol = v;
    }
    if let Some(v) = r.uint(control_t, "control", "max_iter") {
        control.solver.max_iter = Some(v);
    }
    match r.string(control_t, "control", "velocity_law") {
        Some("dirichlet") => control.velocity_law = VelocityLaw::Dirichlet,
        Some("gradient") => control.velocity_law = VelocityLaw::GradientForm,
        Some(other) => r.errors.push(format!("`control.velocity_law` must be \"dirichlet\" or \"gradient\" (got \"{other}\")")),
        None => {}
    }
    if control.velocity_law == VelocityLaw::GradientForm && !m.is_dynamic() {
        r.errors.push(format!("`control.velocity_law = \"gradient\"` is not allowed for model {}", m.name()));
    }
    match r.string(control_t, "control", "method") {
        Some("iterative") => control.solver.method = SolverMethod::Iterative,
        Some("direct") => control.solver.method = SolverMethod::DirectBanded,
        Some(other) => r.errors.push(format!("`control.method` must be \"iterative\" or \"direct\" (got \"{other}\")")),
        None => {}
    }
    if !(control.dt > 0.0) {
        r.errors.push(format!("`control.dt` must be > 0 (got {})", control.dt));
    }
    if !(control.t_end >= 0.0) {
        r.errors.push(format!("`control.t_end` must be >= 0 (got {})", control.t_end));
    }
    if !(control.cfl > 0.0 && control.cfl <= 1.0) {
        r.errors.push(format!("`control.cfl` must lie in (0, 1] (got {})", control.cfl));
    }
    if !(control.solver.rel_tol > 0.0) {
        r.errors.push(format!("`control.rel_tol` must be > 0 (got {})", control.solver.rel_tol));
    }

    // [initial]
    let init_t = r.section(&root, "initial");
    let initial = parse_initial(&mut r, init_t, base);

    // [q]
    let q_t = r.section(&root, "q");
    if let Some(t) = q_t {
        r.check_keys(t, "q", &["source", "value", "path"]);
    }
    let q = match r.string(q_t, "q", "source") {
        Some("zero") => Some(QSource::Zero),
        Some("uniform") => {
            let v = r.float(q_t, "q", "value");
            r.require(v, "q.value").map(QSource::Uniform)
        }
        Some("file") => {
            let p = r.string(q_t, "q", "path");
            r.require(p, "q.path").map(|p| QSource::File(PathBuf::from(p)))
        }
        Some(other) => {
            r.errors.push(format!("`q.source` must be \"zero\", \"uniform\" or \"file\" (got \"{other}\")"));
            None
        }
        None => Some(base.map_or(QSource::Zero, |b| b.q.clone())),
    }
    .unwrap_or(QSource::Zero);
    if let QSource::Uniform(c) = q {
        if !(c >= 0.0 && c.is_finite()) {
            r.errors.push(format!("`q.value` must be >= 0 (got {c})"));
        }
    }
    if q != QSource::Zero && !m.takes_q() {
        r.errors.push(format!("a nonzero q source is not allowed for model {}", m.name()));
    }

    // [output]
    let out_t = r.section(&root, "output");
    if let Some(t) = out_t {
        r.check_keys(t, "output", &["dir", "every"]);
    }
    let out_dir =
        r.string(out_t, "output", "dir").map(PathBuf::from).or(base.map(|b| b.out_dir.clone())).unwrap_or_else(|| PathBuf::from("out"));
    let every = r.uint(out_t, "output", "every").or(base.map(|b| b.every)).unwrap_or(10);

    // [sweep]
    let sweep = match r.section(&root, "sweep") {
        Some(t) => parse_sweep(&mut r, t, m),
        None => base.and_then(|b| b.sweep.clone()),
    };

    if let Err(Error::Params(msg)) = params.validate() {
        for part in msg.split("; ") {
            r.errors.push(format!("params: {part}"));
        }
    }

    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors));
    }
    Ok(RunConfig {
        model: model.expect("checked"),
        preset: root.get("preset").and_then(Value::as_str).map(str::to_string),
        grid: grid.expect("checked"),
        params,
        control,
        initial: initial.expect("checked"),
        q,
        out_dir,
        every,
        sweep,
    })
}

fn parse_initial(r: &mut Reader, t: Option<&Table>, base: Option<&RunConfig>) -> Option<InitialData> {
    let kind = match r.string(t, "initial", "kind") {
        Some(k) => Some(k.to_string()),
        None => {
            let k = base.map(|b| b.initial.kind().to_string());
            r.require(k, "initial.kind")
        }
    }?;
    // the preset's geometry is reused only when the kind is unchanged
    let base = base.map(|b| &b.initial).filter(|b| b.kind() == kind);
    let allowed: &[&str] = match kind.as_str() {
        "banded" => &["kind", "level"],
        "rectangles" => &["kind", "density1", "density2", "tissue1", "tissue2"],
        "concentric" => &["kind", "r1", "r2", "density1", "density2"],
        other => {
            r.errors.push(format!("`initial.kind` must be \"banded\", \"rectangles\" or \"concentric\" (got \"{other}\")"));
            return None;
        }
    };
    if let Some(t) = t {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                let known = ["level", "density1", "density2", "tissue1", "tissue2", "r1", "r2"];
                if known.contains(&key.as_str()) {
                    r.errors.push(format!("key `initial.{key}` does not apply to kind {kind}"));
                } else {
                    r.errors.push(format!("unknown key `initial.{key}`"));
                }
            }
        }
    }
    let density = |r: &mut Reader, key: &str, from_base: Option<f64>| {
        let v = r.float(t, "initial", key).or(from_base).unwrap_or(0.9);
        if !(v > 0.0 && v < 1.0) {
            r.errors.push(format!("`initial.{key}` must lie in (0, 1) (got {v})"));
        }
        v
    };
    match kind.as_str() {
        "banded" => {
            let b = match base {
                Some(InitialData::Banded { level }) => Some(*level),
                _ => None,
            };
            Some(InitialData::Banded { level: density(r, "level", b) })
        }
        "rectangles" => {
            let (b1, b2, bt1, bt2) = match base {
                Some(InitialData::Rectangles { density1, density2, tissue1, tissue2 }) => {
                    (Some(*density1), Some(*density2), Some(tissue1.clone()), Some(tissue2.clone()))
                }
                _ => (None, None, None, None),
            };
            let density1 = density(r, "density1", b1);
            let density2 = density(r, "density2", b2);
            let tissue1 = r.rects(t, "tissue1").or(bt1);
            let tissue1 = r.require(tissue1, "initial.tissue1")?;
            let tissue2 = r.rects(t, "tissue2").or(bt2).unwrap_or_default();
            Some(InitialData::Rectangles { density1, density2, tissue1, tissue2 })
        }
        _ => {
            let (b1, b2, br1, br2) = match base {
                Some(InitialData::Concentric { r1, r2, density1, density2 }) => (Some(*density1), Some(*density2), Some(*r1), Some(*r2)),
                _ => (None, None, None, None),
            };
            let density1 = density(r, "density1", b1);
            let density2 = density(r, "density2", b2);
            let r1 = r.float(t, "initial", "r1").or(br1);
            let r1 = r.require(r1, "initial.r1");
            let r2 = r.float(t, "initial", "r2").or(br2);
            let r2 = r.require(r2, "initial.r2");
            let (r1, r2) = (r1?, r2?);
            if !(r1 > 0.0 && r2 > r1) {
                r.errors.push(format!("concentric radii must satisfy 0 < r1 < r2 (got {r1}, {r2})"));
            }
            Some(InitialData::Concentric { r1, r2, density1, density2 })
        }
    }
}

fn parse_sweep(r: &mut Reader, t: &Table, m: Model) -> Option<Sweep> {
    r.check_keys(t, "sweep", &SWEEP_KEYS);
    let mut columns = Vec::new();
    for key in SWEEP_KEYS {
        let Some(v) = t.get(key) else { continue };
        if !m.is_dynamic() && LIMIT_FORBIDDEN.contains(&key) {
            r.errors.push(format!("key `sweep.{key}` is not allowed for model {}", m.name()));
            continue;
        }
        if let Some(vals) = r.floats(v, &format!("sweep.{key}")) {
            columns.push((key.to_string(), vals));
        }
    }
    if columns.is_empty() {
        r.errors.push("`[sweep]` needs at least one parameter list".into());
        return None;
    }
    let n = columns[0].1.len();
    if n == 0 || columns.iter().any(|c| c.1.len() != n) {
        r.errors.push("`[sweep]` lists must be non-empty and of equal length".into());
        return None;
    }
    Some(Sweep { columns })
}
