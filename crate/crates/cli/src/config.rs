//! Run configuration: a TOML file validated completely before any
//! computation starts. Every error names the offending key.

use crate::expr::Expr;
use bec_octrl::control::NormMode;
use bec_octrl::ode::{SolverOptions, Stepper};
use bec_octrl::optim::{Bounds, OptimMode, OptimizerOptions};
use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(key: &str, msg: impl fmt::Display) -> Res<T> {
    Err(ConfigError(format!("`{key}`: {msg}")))
}

/// Cost identifiers accepted in `[[cost]]` entries.
pub const COST_KINDS: &[&str] = &["infidelity", "trap", "intermediate_trap", "squeezing", "control_target"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gp,
    Mctdhb,
    Fock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub kappa: f64,
    /// Mass number of the atoms.
    pub mass: f64,
    /// Number of modes (MCTDHB orbitals, Fock modes).
    pub modes: usize,
    pub atoms: usize,
    pub phase_subtract: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x: (f64, f64, usize),
    pub y: Option<(f64, f64, usize)>,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    DoubleWell { v0: f64, sigma: f64, vy: f64 },
    Harmonic { omega: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub t0: f64,
    pub tmax: f64,
    pub knots: usize,
    pub initial: Expr,
    pub gamma: f64,
    pub norm: NormMode,
}

impl ControlSpec {
    pub fn times(&self) -> Vec<f64> {
        linspace(self.t0, self.tmax, self.knots)
    }

    /// Initial guess at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        let vars = HashMap::from([("t", t), ("T", self.tmax), ("t0", self.t0)]);
        // variables were checked during validation
        self.initial.eval(&vars).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    /// Ground state at `lambda` (default: first or last control value).
    Ground { lambda: Option<f64>, mix: Option<f64> },
    /// Binomial Fock state (all atoms in the symmetric two-mode orbital).
    Binomial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    Infidelity,
    Trap,
    IntermediateTrap,
    Squeezing,
    ControlTarget { target: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub tout: Vec<f64>,
    /// Bloch-sphere resolution of the final Husimi map (two-mode Fock only).
    pub husimi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub eta: f64,
    pub direction: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: Option<GridSpec>,
    pub potential: Option<PotentialSpec>,
    pub control: ControlSpec,
    pub initial: StateSpec,
    pub target: Option<StateSpec>,
    pub solver: SolverOptions,
    pub costs: Vec<CostSpec>,
    pub optimizer: OptimizerOptions,
    pub output: OutputSpec,
    pub check: CheckSpec,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// A TOML table that remembers which keys were read, so leftovers can be
/// reported as unknown.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: Option<&'a Table>) -> Self {
        Self {
            path: path.into(),
            table,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.into()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&self, k: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(k.into());
        self.table.and_then(|t| t.get(k))
    }

    fn sub(&self, k: &str) -> Res<Section<'a>> {
        match self.raw(k) {
            None => Ok(Section::new(&self.key(k), None)),
            Some(Value::Table(t)) => Ok(Section::new(&self.key(k), Some(t))),
            Some(_) => err(&self.key(k), "expected a table"),
        }
    }

    fn opt_f64(&self, k: &str) -> Res<Option<f64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(v) => err(&self.key(k), format!("expected a number, got {}", v.type_str())),
        }
    }

    fn f64_or(&self, k: &str, default: f64) -> Res<f64> {
        Ok(self.opt_f64(k)?.unwrap_or(default))
    }

    fn req_f64(&self, k: &str) -> Res<f64> {
        self.opt_f64(k)?.map_or_else(|| err(&self.key(k), "missing required number"), Ok)
    }

    fn opt_usize(&self, k: &str) -> Res<Option<usize>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(v) => err(&self.key(k), format!("expected a non-negative integer, got {v}")),
        }
    }

    fn req_usize(&self, k: &str) -> Res<usize> {
        self.opt_usize(k)?.map_or_else(|| err(&self.key(k), "missing required integer"), Ok)
    }

    fn opt_str(&self, k: &str) -> Res<Option<&'a str>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => err(&self.key(k), format!("expected a string, got {}", v.type_str())),
        }
    }

    fn opt_bool(&self, k: &str) -> Res<Option<bool>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => err(&self.key(k), format!("expected true or false, got {}", v.type_str())),
        }
    }

    fn positive(&self, k: &str, v: f64) -> Res<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            err(&self.key(k), format!("must be positive, got {v}"))
        }
    }

    fn finish(&self) -> Res<()> {
        if let Some(t) = self.table {
            let used = self.used.borrow();
            if let Some(k) = t.keys().find(|k| !used.contains(*k)) {
                return err(&self.key(k), "unknown key");
            }
        }
        Ok(())
    }
}

fn parse_expr(key: &str, s: &str) -> Res<Expr> {
    let e = Expr::parse(s).or_else(|e| err(key, format!("cannot parse `{s}`: {e}")))?;
    if let Some(v) = e.variables().iter().find(|v| !["t", "T", "t0"].contains(&v.as_str())) {
        return err(key, format!("unknown variable `{v}` (expressions may use t, T, t0 and pi)"));
    }
    Ok(e)
}

fn parse_model(s: &Section) -> Res<ModelSpec> {
    let kind = match s.opt_str("kind")? {
        Some("gp") => ModelKind::Gp,
        Some("mctdhb") => ModelKind::Mctdhb,
        Some("fock") => ModelKind::Fock,
        Some(other) => return err(&s.key("kind"), format!("unknown model `{other}` (expected gp, mctdhb or fock)")),
        None => return err(&s.key("kind"), "missing (expected gp, mctdhb or fock)"),
    };
    let kappa = s.f64_or("kappa", 0.0)?;
    if !kappa.is_finite() {
        return err(&s.key("kappa"), "must be finite");
    }
    let mass = s.f64_or("mass", 87.0)?;
    s.positive("mass", mass)?;
    let modes = s.opt_usize("modes")?.unwrap_or(2);
    let atoms = s.opt_usize("atoms")?.unwrap_or(1);
    let phase_subtract = s.opt_bool("phase_subtract")?.unwrap_or(false);
    match kind {
        ModelKind::Gp => {
            for k in ["modes", "atoms", "phase_subtract"] {
                if s.table.is_some_and(|t| t.contains_key(k)) {
                    return err(&s.key(k), "not used by the gp model");
                }
            }
        }
        ModelKind::Mctdhb | ModelKind::Fock => {
            if modes == 0 {
                return err(&s.key("modes"), "must be at least 1");
            }
            if atoms == 0 {
                return err(&s.key("atoms"), "must be at least 1");
            }
        }
    }
    if kind == ModelKind::Fock && modes != 2 {
        return err(&s.key("modes"), "the built-in few-mode Hamiltonian has two modes");
    }
    if kind != ModelKind::Fock && phase_subtract {
        return err(&s.key("phase_subtract"), "only used by the fock model");
    }
    s.finish()?;
    Ok(ModelSpec {
        kind,
        kappa,
        mass,
        modes,
        atoms,
        phase_subtract,
    })
}

fn parse_axis(s: &Section, lo: &str, hi: &str, n: &str) -> Res<(f64, f64, usize)> {
    let a = s.req_f64(lo)?;
    let b = s.req_f64(hi)?;
    if !(a < b) {
        return err(&s.key(hi), format!("must exceed `{}`", s.key(lo)));
    }
    let m = s.req_usize(n)?;
    if m < 5 {
        return err(&s.key(n), "need at least 5 grid points");
    }
    Ok((a, b, m))
}

fn parse_grid(s: &Section) -> Res<GridSpec> {
    let x = parse_axis(s, "xmin", "xmax", "n")?;
    let y = if s.table.is_some_and(|t| t.contains_key("ny") || t.contains_key("ymin") || t.contains_key("ymax")) {
        Some(parse_axis(s, "ymin", "ymax", "ny")?)
    } else {
        None
    };
    let order = s.opt_usize("order")?.unwrap_or(4);
    if order != 2 && order != 4 {
        return err(&s.key("order"), format!("finite-difference order must be 2 or 4, got {order}"));
    }
    s.finish()?;
    Ok(GridSpec { x, y, order })
}

fn parse_potential(s: &Section) -> Res<PotentialSpec> {
    let p = match s.opt_str("kind")?.unwrap_or("double_well") {
        "double_well" => {
            let v0 = s.req_f64("v0")?;
            let sigma = s.f64_or("sigma", 1.0)?;
            s.positive("sigma", sigma)?;
            PotentialSpec::DoubleWell {
                v0,
                sigma,
                vy: s.f64_or("vy", 0.0)?,
            }
        }
        "harmonic" => {
            let omega = s.req_f64("omega")?;
            PotentialSpec::Harmonic {
                omega: s.positive("omega", omega)?,
            }
        }
        other => return err(&s.key("kind"), format!("unknown potential `{other}` (expected double_well or harmonic)")),
    };
    s.finish()?;
    Ok(p)
}

fn parse_control(s: &Section) -> Res<(ControlSpec, Option<Bounds>)> {
    let t0 = s.f64_or("t0", 0.0)?;
    let tmax = s.req_f64("tmax")?;
    if !(tmax > t0) || !tmax.is_finite() {
        return err(&s.key("tmax"), format!("must exceed t0 = {t0}"));
    }
    let knots = s.opt_usize("knots")?.unwrap_or(100);
    if knots < 3 {
        return err(&s.key("knots"), "need at least 3 knots");
    }
    let initial = match s.opt_str("initial")? {
        Some(e) => parse_expr(&s.key("initial"), e)?,
        None => return err(&s.key("initial"), "missing initial-guess expression, e.g. \"sqrt(min(2t/T,1))\""),
    };
    let gamma = s.f64_or("gamma", 0.0)?;
    if !(gamma >= 0.0) {
        return err(&s.key("gamma"), "must be non-negative");
    }
    let norm = match s.opt_str("norm")? {
        None => NormMode::H1,
        Some(n) => n.parse().or_else(|e| err(&s.key("norm"), e))?,
    };
    let spec = ControlSpec {
        t0,
        tmax,
        knots,
        initial,
        gamma,
        norm,
    };
    for t in spec.times() {
        let v = spec.value(t);
        if !v.is_finite() {
            return err(&s.key("initial"), format!("not finite at t = {t}"));
        }
    }
    let b = s.sub("bounds")?;
    let bounds = if b.table.is_some() {
        let min = b.req_f64("min")?;
        let max = b.req_f64("max")?;
        let dmax = b.opt_f64("dmax")?;
        let bounds = Bounds::new(min, max, dmax).or_else(|e| err(&b.path, e))?;
        b.finish()?;
        let (v0, v1) = (spec.value(t0), spec.value(tmax));
        if v0 < min || v0 > max || v1 < min || v1 > max {
            return err(&b.path, format!("initial-guess endpoints {v0}, {v1} lie outside [{min}, {max}]"));
        }
        Some(bounds)
    } else {
        None
    };
    s.finish()?;
    Ok((spec, bounds))
}

fn parse_state(s: &Section, model: ModelKind) -> Res<StateSpec> {
    let st = match s.opt_str("state")?.unwrap_or("ground") {
        "ground" => StateSpec::Ground {
            lambda: s.opt_f64("lambda")?,
            mix: match s.opt_f64("mix")? {
                Some(m) if !(m > 0.0 && m <= 1.0) => return err(&s.key("mix"), "must lie in (0, 1]"),
                m => m,
            },
        },
        "binomial" if model == ModelKind::Fock => StateSpec::Binomial,
        "binomial" => return err(&s.key("state"), "binomial states exist only for the fock model"),
        other => return err(&s.key("state"), format!("unknown state `{other}` (expected ground or binomial)")),
    };
    s.finish()?;
    Ok(st)
}

fn parse_solver(s: &Section, model: ModelKind) -> Res<SolverOptions> {
    let mut o = SolverOptions::default();
    if let Some(st) = s.opt_str("stepper")? {
        o.stepper = st.parse().or_else(|e| err(&s.key("stepper"), e))?;
    }
    if o.stepper == Stepper::Split && model != ModelKind::Gp {
        return err(&s.key("stepper"), "the split-operator stepper is available for the gp model only");
    }
    o.nsub = s.opt_usize("nsub")?.unwrap_or(1);
    if o.nsub == 0 {
        return err(&s.key("nsub"), "must be at least 1");
    }
    o.nout = s.opt_usize("nout")?.unwrap_or(0);
    o.rtol = s.positive("rtol", s.f64_or("rtol", o.rtol)?)?;
    o.atol = s.positive("atol", s.f64_or("atol", o.atol)?)?;
    o.step.newton_tol = s.positive("newton_tol", s.f64_or("newton_tol", o.step.newton_tol)?)?;
    o.step.max_newton = s.opt_usize("max_newton")?.unwrap_or(o.step.max_newton);
    if o.step.max_newton == 0 {
        return err(&s.key("max_newton"), "must be at least 1");
    }
    o.step.proj = s.opt_bool("proj")?.unwrap_or(true);
    s.finish()?;
    Ok(o)
}

fn parse_costs(root: &Section, model: &ModelSpec) -> Res<Vec<CostSpec>> {
    let list = match root.raw("cost") {
        None => return Ok(Vec::new()),
        Some(Value::Array(a)) => a,
        Some(_) => return err("cost", "expected an array of tables ([[cost]])"),
    };
    let mut out = Vec::new();
    for (i, v) in list.iter().enumerate() {
        let path = format!("cost[{i}]");
        let Value::Table(t) = v else {
            return err(&path, "expected a table");
        };
        let s = Section::new(&path, Some(t));
        let name = s.opt_str("kind")?.map_or_else(
            || err(&s.key("kind"), format!("missing (valid costs: {})", COST_KINDS.join(", "))),
            Ok,
        )?;
        let kind = match name {
            "infidelity" => CostKind::Infidelity,
            "trap" => CostKind::Trap,
            "intermediate_trap" => CostKind::IntermediateTrap,
            "squeezing" => CostKind::Squeezing,
            "control_target" => CostKind::ControlTarget {
                target: s.req_f64("target")?,
            },
            other => {
                return err(
                    &s.key("kind"),
                    format!("unknown cost `{other}` (valid costs: {})", COST_KINDS.join(", ")),
                )
            }
        };
        let ok = match kind {
            CostKind::Squeezing => model.kind == ModelKind::Fock,
            CostKind::IntermediateTrap => model.kind == ModelKind::Gp,
            CostKind::Trap => model.kind != ModelKind::Fock,
            _ => true,
        };
        if !ok {
            return err(&s.key("kind"), format!("cost `{name}` is not available for this model"));
        }
        let weight = s.f64_or("weight", 1.0)?;
        if !weight.is_finite() {
            return err(&s.key("weight"), "must be finite");
        }
        s.finish()?;
        out.push(CostSpec { kind, weight });
    }
    Ok(out)
}

fn parse_optimizer(s: &Section, bounds: Option<Bounds>) -> Res<OptimizerOptions> {
    let mut o = OptimizerOptions {
        bounds,
        ..Default::default()
    };
    if let Some(m) = s.opt_str("mode")? {
        o.mode = m.parse::<OptimMode>().or_else(|e| err(&s.key("mode"), e))?;
    }
    o.tol = s.positive("tol", s.f64_or("tol", o.tol)?)?;
    o.maxiter = s.opt_usize("maxiter")?.unwrap_or(o.maxiter);
    s.finish()?;
    Ok(o)
}

fn parse_output(s: &Section, control: &ControlSpec, model: &ModelSpec) -> Res<OutputSpec> {
    let key = s.key("tout");
    let tout = match s.raw("tout") {
        None => control.times(),
        Some(Value::Integer(n)) if *n >= 1 => linspace(control.t0, control.tmax, *n as usize),
        Some(Value::Integer(_)) => return err(&key, "need at least one output time"),
        Some(Value::Array(a)) => {
            if a.is_empty() {
                return err(&key, "output-times list is empty");
            }
            a.iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    other => err(&key, format!("expected numbers, got {}", other.type_str())),
                })
                .collect::<Res<Vec<f64>>>()?
        }
        Some(v) => return err(&key, format!("expected a count or a list of times, got {}", v.type_str())),
    };
    if tout.windows(2).any(|w| !(w[1] > w[0])) {
        return err(&key, "output times must increase strictly");
    }
    let eps = 1e-12 * (control.tmax - control.t0);
    if tout[0] < control.t0 - eps || tout[tout.len() - 1] > control.tmax + eps {
        return err(&key, format!("output times must lie within [{}, {}]", control.t0, control.tmax));
    }
    let husimi = s.opt_usize("husimi")?;
    if let Some(n) = husimi {
        if model.kind != ModelKind::Fock {
            return err(&s.key("husimi"), "Husimi maps need the fock model");
        }
        if n < 2 {
            return err(&s.key("husimi"), "need at least 2 points per axis");
        }
    }
    s.finish()?;
    Ok(OutputSpec { tout, husimi })
}

fn parse_check(s: &Section) -> Res<CheckSpec> {
    let eta = s.positive("eta", s.f64_or("eta", 1e-6)?)?;
    let direction = parse_expr(&s.key("direction"), s.opt_str("direction")?.unwrap_or("sin(6 pi (t - t0)/(T - t0))"))?;
    s.finish()?;
    Ok(CheckSpec { eta, direction })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Res<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError(format!("malformed configuration: {e}")))?;
        let root = Section::new("", Some(&table));
        let model = parse_model(&root.sub("model")?)?;
        let (grid, potential) = match model.kind {
            ModelKind::Fock => {
                for k in ["grid", "potential"] {
                    if table.contains_key(k) {
                        return err(k, "not used by the fock model");
                    }
                }
                (None, None)
            }
            _ => {
                let g = root.sub("grid")?;
                if g.table.is_none() {
                    return err("grid", "missing section");
                }
                let p = root.sub("potential")?;
                if p.table.is_none() {
                    return err("potential", "missing section");
                }
                (Some(parse_grid(&g)?), Some(parse_potential(&p)?))
            }
        };
        let (control, bounds) = {
            let c = root.sub("control")?;
            if c.table.is_none() {
                return err("control", "missing section");
            }
            parse_control(&c)?
        };
        let initial = parse_state(&root.sub("initial")?, model.kind)?;
        let solver = parse_solver(&root.sub("solver")?, model.kind)?;
        let costs = parse_costs(&root, &model)?;
        let needs_target = costs
            .iter()
            .any(|c| matches!(c.kind, CostKind::Infidelity | CostKind::Trap | CostKind::IntermediateTrap));
        let ts = root.sub("target")?;
        let target = if needs_target || ts.table.is_some() {
            Some(parse_state(&ts, model.kind)?)
        } else {
            None
        };
        let optimizer = parse_optimizer(&root.sub("optimizer")?, bounds)?;
        let output = parse_output(&root.sub("output")?, &control, &model)?;
        let check = parse_check(&root.sub("check")?)?;
        root.finish()?;
        Ok(Self {
            model,
            grid,
            potential,
            control,
            initial,
            target,
            solver,
            costs,
            optimizer,
            output,
            check,
        })
    }

    /// Checks that only matter when optimizing.
    pub fn validate_optimize(&self) -> Res<()> {
        if self.costs.is_empty() {
            return err("cost", "optimization needs at least one [[cost]] entry");
        }
        match self.solver.stepper {
            Stepper::Rk23 | Stepper::Split => {
                return err("solver.stepper", "optimization needs a fixed-step stepper (crank or runge4)")
            }
            Stepper::Crank if self.model.kind == ModelKind::Mctdhb => {
                return err("solver.stepper", "MCTDHB optimization supports the runge4 stepper only")
            }
            Stepper::Crank if self.model.kind == ModelKind::Fock && self.model.phase_subtract => {
                return err("solver.stepper", "phase-subtracted few-mode optimization supports the runge4 stepper only")
            }
            _ => {}
        }
        Ok(())
    }
}
