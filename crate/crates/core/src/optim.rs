//! Outer minimization over the control timeline: Polak-Ribière nonlinear
//! conjugate gradients or dense BFGS, both with projected Armijo
//! backtracking.

use crate::control::ControlTimeline;
use crate::error::{invalid, Error, Result};
use crate::oct::{OctModel, OctState, OptimalitySystem};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimMode {
    /// Nonlinear conjugate gradients.
    Grad,
    Bfgs,
}

impl std::str::FromStr for OptimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grad" | "cg" => Ok(Self::Grad),
            "bfgs" => Ok(Self::Bfgs),
            _ => Err(invalid(format!("unknown optimizer mode '{s}' (expected grad or bfgs)"))),
        }
    }
}

/// Box bounds on the control values, optionally with a rate limit
/// `|dlambda/dt| <= dmax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
    pub dmax: Option<f64>,
}

impl Bounds {
    pub fn new(min: f64, max: f64, dmax: Option<f64>) -> Result<Self> {
        if !(min < max) {
            return Err(invalid(format!("bounds need min < max, got [{min}, {max}]")));
        }
        if let Some(d) = dmax {
            if !(d > 0.0) {
                return Err(invalid("rate bound must be positive"));
            }
        }
        Ok(Self { min, max, dmax })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub mode: OptimMode,
    /// Stop once `||g|| < tol ||g_0||`.
    pub tol: f64,
    pub bounds: Option<Bounds>,
    pub maxiter: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            mode: OptimMode::Bfgs,
            tol: 1e-6,
            bounds: None,
            maxiter: 20,
        }
    }
}

/// Sufficient-decrease constant of the line search.
pub const ARMIJO_C1: f64 = 1e-4;
/// Backtracking halvings before the line search gives up.
pub const MAX_BACKTRACKS: usize = 30;
/// Step doublings tried after an immediately successful first trial.
pub const MAX_EXPANSIONS: usize = 4;

/// One line of the convergence log.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IterationRecord {
    pub it: usize,
    pub f: f64,
    pub gnorm: f64,
    pub sig: f64,
    pub t_forward: f64,
    pub t_backward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Default)]
pub struct OptimizerTrace {
    pub records: Vec<IterationRecord>,
    pub forward: usize,
    pub backward: usize,
    pub t_forward: f64,
    pub t_backward: f64,
}

impl OptimizerTrace {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::JsonLines::create(path)?;
        for r in &self.records {
            w.write(r)?;
        }
        Ok(())
    }

    /// Iteration count, solve counts and mean solve times.
    pub fn summary(&self) -> String {
        let mean = |t: f64, n: usize| if n > 0 { t / n as f64 } else { 0.0 };
        let last = self.records.last();
        format!(
            "iterations: {}\nfinal cost: {:e}\nforward solutions: {} (mean {:.3} s)\nbackward solutions: {} (mean {:.3} s)\n",
            last.map_or(0, |r| r.it),
            last.map_or(f64::NAN, |r| r.f),
            self.forward,
            mean(self.t_forward, self.forward),
            self.backward,
            mean(self.t_backward, self.backward),
        )
    }
}

/// Clip knot values into `[min, max]` and enforce the rate limit with a
/// forward sweep that never leaves the set of values from which the fixed
/// final knot is still reachable. Endpoints are left untouched.
pub fn project_bounds(ctl: &ControlTimeline, bounds: &Bounds) -> Result<ControlTimeline> {
    let t = ctl.times();
    let n = t.len();
    let t1 = t[n - 1];
    let mut out = Vec::with_capacity(ctl.channels());
    for (c, vals) in ctl.values().iter().enumerate() {
        let (a, b) = (vals[0], vals[n - 1]);
        for (name, v) in [("first", a), ("last", b)] {
            if v < bounds.min || v > bounds.max {
                return Err(invalid(format!(
                    "{name} control value {v} of channel {c} lies outside the bounds [{}, {}]",
                    bounds.min, bounds.max
                )));
            }
        }
        if let Some(d) = bounds.dmax {
            if (b - a).abs() > d * (t1 - t[0]) * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "endpoints of channel {c} cannot be joined with rate bound {d}"
                )));
            }
        }
        let mut v = vals.clone();
        for j in 1..n - 1 {
            let (mut lo, mut hi) = (bounds.min, bounds.max);
            if let Some(d) = bounds.dmax {
                let step = d * (t[j] - t[j - 1]);
                let reach = d * (t1 - t[j]);
                lo = lo.max(v[j - 1] - step).max(b - reach);
                hi = hi.min(v[j - 1] + step).min(b + reach);
            }
            v[j] = v[j].clamp(lo, hi.max(lo));
        }
        out.push(v);
    }
    ctl.with_values(out)
}

/// Optimizer state. Curvature information and the last accepted step are
/// kept between calls to [`Optimizer::improve`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub opts: OptimizerOptions,
    pub trace: OptimizerTrace,
    /// Dense inverse Hessian over interior knots (BFGS).
    hinv: Option<Vec<Vec<f64>>>,
    /// Metric of the control inner product over interior knots.
    metric: Option<Vec<Vec<f64>>>,
    prev: Option<(ControlTimeline, ControlTimeline)>,
    sig: Option<f64>,
    g0: Option<f64>,
    it: usize,
}

impl Optimizer {
    pub fn new(opts: OptimizerOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(invalid("optimizer tolerance must be positive"));
        }
        Ok(Self {
            opts,
            trace: OptimizerTrace::default(),
            hinv: None,
            metric: None,
            prev: None,
            sig: None,
            g0: None,
            it: 0,
        })
    }

    fn project(&self, ctl: ControlTimeline) -> Result<ControlTimeline> {
        match &self.opts.bounds {
            Some(b) => project_bounds(&ctl, b),
            None => Ok(ctl),
        }
    }

    /// Run up to `niter` iterations (the configured `maxiter` when `None`).
    /// The system is left at the best control found.
    pub fn improve<M: OctModel>(&mut self, sys: &mut OptimalitySystem<M>, niter: Option<usize>) -> Result<Status>
    where
        M::State: OctState,
    {
        let niter = niter.unwrap_or(self.opts.maxiter);
        if let Some(b) = &self.opts.bounds {
            let projected = project_bounds(sys.control(), b)?;
            sys.set_control(projected);
        }
        let s0 = sys.stats.clone();
        let mut f = sys.cost()?;
        let mut g = sys.gradient()?;
        let mut gn = sys.control().norm_control(&g)?;
        if self.g0.is_none() {
            self.g0 = Some(gn);
            self.push_record(sys, f, gn, 0.0, &s0);
        }
        let g0 = self.g0.unwrap_or(gn);
        let mut status = Status::MaxIterations;
        for _ in 0..niter {
            if gn <= self.opts.tol * g0 || gn == 0.0 {
                status = Status::Converged;
                break;
            }
            let s_iter = sys.stats.clone();
            let ctl = sys.control().clone();
            let mut d = self.direction(&ctl, &g)?;
            if !(ctl.inner_control(&g, &d)? < 0.0) {
                // not a descent direction: restart from steepest descent
                self.hinv = None;
                self.prev = None;
                d = g.scaled(-1.0);
            }
            let mut sig = self.initial_step(&ctl, &d);
            let mut accepted = None;
            for k in 0..MAX_BACKTRACKS {
                if let Some(a) = self.armijo_trial(sys, &ctl, &d, &g, f, sig)? {
                    accepted = Some(a);
                    if k == 0 {
                        // the first trial was good: try longer steps while the cost keeps falling
                        for _ in 0..MAX_EXPANSIONS {
                            match self.armijo_trial(sys, &ctl, &d, &g, f, 2.0 * sig)? {
                                Some(b) if accepted.as_ref().is_some_and(|a: &(_, _, f64)| b.2 < a.2) => {
                                    accepted = Some(b);
                                    sig *= 2.0;
                                }
                                _ => break,
                            }
                        }
                    }
                    break;
                }
                sig *= 0.5;
            }
            let Some((trial, step, ft)) = accepted else {
                status = Status::LineSearchFailed;
                break;
            };
            sys.set_control(trial);
            let gnew = sys.gradient()?;
            let y = diff(&gnew, &g)?;
            if self.opts.mode == OptimMode::Bfgs {
                self.bfgs_update(&ctl, &step, &y)?;
            }
            self.prev = Some((g, d));
            self.sig = Some(sig);
            g = gnew;
            f = ft;
            gn = sys.control().norm_control(&g)?;
            self.push_record(sys, f, gn, sig, &s_iter);
        }
        if status == Status::MaxIterations && (gn <= self.opts.tol * g0 || gn == 0.0) {
            status = Status::Converged;
        }
        self.trace.forward = sys.stats.forward;
        self.trace.backward = sys.stats.backward;
        self.trace.t_forward = sys.stats.t_forward;
        self.trace.t_backward = sys.stats.t_backward;
        Ok(status)
    }

    /// Cost at the projected trial point `ctl + sig d` if it passes the
    /// Armijo test. Solver failures count as a rejected trial.
    #[allow(clippy::too_many_arguments)]
    fn armijo_trial<M: OctModel>(
        &self,
        sys: &mut OptimalitySystem<M>,
        ctl: &ControlTimeline,
        d: &ControlTimeline,
        g: &ControlTimeline,
        f: f64,
        sig: f64,
    ) -> Result<Option<(ControlTimeline, ControlTimeline, f64)>>
    where
        M::State: OctState,
    {
        let trial = self.project(ctl.axpy(sig, d)?)?;
        let step = trial_step(ctl, &trial)?;
        let decrease = ctl.inner_control(g, &step)?;
        let ft = match sys.cost_at(&trial) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::NoConvergence { .. }) | Err(Error::Singular(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if decrease < 0.0 && ft <= f + ARMIJO_C1 * decrease {
            Ok(Some((trial, step, ft)))
        } else {
            Ok(None)
        }
    }

    fn push_record<M: OctModel>(&mut self, sys: &OptimalitySystem<M>, f: f64, gnorm: f64, sig: f64, since: &crate::oct::SolveStats)
    where
        M::State: OctState,
    {
        self.trace.records.push(IterationRecord {
            it: self.it,
            f,
            gnorm,
            sig,
            t_forward: sys.stats.t_forward - since.t_forward,
            t_backward: sys.stats.t_backward - since.t_backward,
        });
        self.it += 1;
    }

    fn direction(&mut self, ctl: &ControlTimeline, g: &ControlTimeline) -> Result<ControlTimeline> {
        match self.opts.mode {
            OptimMode::Grad => {
                let mut d = g.scaled(-1.0);
                if let Some((gold, dold)) = &self.prev {
                    let gg = ctl.inner_control(gold, gold)?;
                    if gg > 0.0 {
                        let beta = (ctl.inner_control(g, &diff(g, gold)?)? / gg).max(0.0);
                        d = d.axpy(beta, dold)?;
                    }
                }
                Ok(d)
            }
            OptimMode::Bfgs => match &self.hinv {
                None => Ok(g.scaled(-1.0)),
                Some(h) => {
                    let gv = interior(g);
                    let hv: Vec<f64> = h.iter().map(|row| -row.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>()).collect();
                    from_interior(ctl, &hv)
                }
            },
        }
    }

    fn initial_step(&self, ctl: &ControlTimeline, d: &ControlTimeline) -> f64 {
        if self.opts.mode == OptimMode::Bfgs && self.hinv.is_some() {
            return 1.0;
        }
        if let Some(s) = self.sig {
            return 2.0 * s;
        }
        // first step: move the control by at most a quarter of its range
        let dmax = d.values().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = match &self.opts.bounds {
            Some(b) => b.max - b.min,
            None => ctl.values().iter().flatten().fold(1.0f64, |m, v| m.max(v.abs())),
        };
        if dmax > 0.0 {
            0.25 * scale / dmax
        } else {
            1.0
        }
    }

    fn metric(&mut self, ctl: &ControlTimeline) -> &Vec<Vec<f64>> {
        self.metric.get_or_insert_with(|| {
            let nch = ctl.channels();
            let n = ctl.len();
            let dim = nch * (n - 2);
            let unit = |a: usize| {
                let mut v = vec![vec![0.0; n]; nch];
                v[a / (n - 2)][1 + a % (n - 2)] = 1.0;
                v
            };
            let units: Vec<Vec<Vec<f64>>> = (0..dim).map(unit).collect();
            (0..dim)
                .map(|a| (0..dim).map(|b| ctl.inner_raw(&units[a], &units[b])).collect())
                .collect()
        })
    }

    /// Inverse BFGS update in the control metric `M`:
    /// `H+ = (I - rho s y^T M) H (I - rho y s^T M) + rho s s^T`.
    /// Skipped when the curvature condition fails.
    fn bfgs_update(&mut self, ctl: &ControlTimeline, s: &ControlTimeline, y: &ControlTimeline) -> Result<()> {
        let sy = ctl.inner_control(s, y)?;
        let ss = ctl.inner_control(s, s)?;
        let yy = ctl.inner_control(y, y)?;
        if !(sy > 1e-12 * (ss * yy).sqrt()) {
            return Ok(());
        }
        let m = self.metric(ctl).clone();
        let sv = interior(s);
        let yv = interior(y);
        let dim = sv.len();
        let h = self.hinv.get_or_insert_with(|| {
            let scale = sy / yy;
            (0..dim).map(|a| (0..dim).map(|b| if a == b { scale } else { 0.0 }).collect()).collect()
        });
        let matvec = |a: &Vec<Vec<f64>>, v: &[f64]| -> Vec<f64> { a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect() };
        let ms = matvec(&m, &sv);
        let hy = matvec(h, &yv);
        let mhy = matvec(&m, &hy);
        let rho = 1.0 / sy;
        let yhy: f64 = yv.iter().zip(&mhy).map(|(a, b)| a * b).sum();
        let c = rho * rho * yhy + rho;
        for a in 0..dim {
            for b in 0..dim {
                h[a][b] += -rho * (hy[a] * ms[b] + sv[a] * mhy[b]) + c * sv[a] * ms[b];
            }
        }
        Ok(())
    }
}

fn interior(u: &ControlTimeline) -> Vec<f64> {
    let n = u.len();
    u.values().iter().flat_map(|c| c[1..n - 1].iter().copied()).collect()
}

fn from_interior(ctl: &ControlTimeline, v: &[f64]) -> Result<ControlTimeline> {
    let n = ctl.len();
    let vals = (0..ctl.channels())
        .map(|c| {
            let mut row = vec![0.0; n];
            row[1..n - 1].copy_from_slice(&v[c * (n - 2)..(c + 1) * (n - 2)]);
            row
        })
        .collect();
    ctl.zeros_like().with_values(vals)
}

fn diff(a: &ControlTimeline, b: &ControlTimeline) -> Result<ControlTimeline> {
    let vals = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    a.zeros_like().with_values(vals)
}

fn trial_step(from: &ControlTimeline, to: &ControlTimeline) -> Result<ControlTimeline> {
    diff(to, from)
}
