//! Optimal control: cost functions, the optimality system (forward solve,
//! backward adjoint solve, control gradient) and the finite-difference
//! consistency check.
//!
//! Gradients are exact derivatives of the discretized forward propagation.
//! Every model supplies the vector-Jacobian product of its equation of motion
//! in its own real inner product `Re <a|b>`; the backward sweep of the
//! Runge-Kutta stepper is assembled from it, and models whose Crank-Nicolson
//! step is the implicit midpoint rule also supply the transposed midpoint
//! solve. With `p` the adjoint variable of the usual continuous formulation,
//! the adjoint state carried here is `a = i p`, the gradient of the cost in
//! the model inner product.

mod costs;
mod fock;
mod gp;
mod mctdhb;

pub use costs::{
    ControlTarget, Infidelity, IntermediateTrap, MctdhbInfidelity, OrbitalTrap, Squeezing, Trap,
};

use crate::control::ControlTimeline;
use crate::error::{invalid, Error, Result};
use crate::ode::{solve_with, Dynamics, Hooks, OdeState, SolverOptions, Stepper, Trajectory};
use num_complex::Complex64;
use std::sync::Arc;

/// States that can carry adjoint information.
pub trait OctState: OdeState {
    fn zeros_like(&self) -> Self;
    /// Multiply every component by a complex scalar.
    fn mul_complex(&mut self, z: Complex64);
}

impl OctState for Vec<Complex64> {
    fn zeros_like(&self) -> Self {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }
    fn mul_complex(&mut self, z: Complex64) {
        self.iter_mut().for_each(|v| *v *= z);
    }
}

impl OctState for crate::mctdhb::MctdhbState {
    fn zeros_like(&self) -> Self {
        Self {
            orb: self.orb.iter().map(|o| o.zeros_like()).collect(),
            num: self.num.zeros_like(),
        }
    }
    fn mul_complex(&mut self, z: Complex64) {
        self.orb.iter_mut().for_each(|o| o.mul_complex(z));
        self.num.mul_complex(z);
    }
}

/// Models that can be submitted to optimal control.
pub trait OctModel: Dynamics
where
    Self::State: OctState,
{
    /// Real inner product `Re <a|b>` in which gradients are expressed.
    fn inner(&self, a: &Self::State, b: &Self::State) -> f64;

    /// Vector-Jacobian product of the time derivative `F(y, lambda)`: returns
    /// `J^T a` (with `<a, J e> = <J^T a, e>` for all `e`) and
    /// `<a, dF/dlambda_c>` for every control channel.
    fn vjp(
        &self,
        y: &Self::State,
        lam: &[f64],
        a: &Self::State,
        opts: &crate::ode::StepOptions,
    ) -> Result<(Self::State, Vec<f64>)>;

    /// Solve `r - dt/2 J(ybar)^T r = rhs`, the transposed implicit-midpoint
    /// system of a converged Crank-Nicolson step.
    fn crank_adjoint(
        &self,
        _ybar: &Self::State,
        _lam: &[f64],
        _dt: f64,
        _rhs: &Self::State,
        _opts: &crate::ode::StepOptions,
    ) -> Result<Self::State> {
        Err(Error::Unsupported("Crank-Nicolson adjoint for this model"))
    }
}

/// One term of a cost function. `grad_*` return the gradient `G` in the
/// model inner product, `dJ = Re <G|dy>`, which equals `2 dJ/dy*`; the
/// adjoint terminal condition of the continuous formulation is `p(T) = -i G`.
pub trait CostTerm<S>: Send + Sync {
    fn valfin(&self, y: &S, lam: &[f64]) -> Result<f64>;
    fn grad_final(&self, y: &S, lam: &[f64]) -> Result<S>;

    fn has_intermediate(&self) -> bool {
        false
    }
    /// Integrand of the intermediate cost.
    fn valint(&self, _t: f64, _y: &S, _lam: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    /// Gradient of the integrand with respect to the state.
    fn grad_inter(&self, _t: f64, _y: &S, _lam: &[f64]) -> Result<Option<S>> {
        Ok(None)
    }
    /// Derivative of the integrand with respect to the control values.
    fn deriv(&self, _t: f64, _y: &S, _lam: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

/// Weighted sum of cost terms.
pub struct CostFunction<S> {
    terms: Vec<(f64, Arc<dyn CostTerm<S>>)>,
}

impl<S> Clone for CostFunction<S> {
    fn clone(&self) -> Self {
        Self {
            terms: self.terms.clone(),
        }
    }
}

impl<S> std::fmt::Debug for CostFunction<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let w: Vec<f64> = self.terms.iter().map(|t| t.0).collect();
        f.debug_struct("CostFunction").field("weights", &w).finish()
    }
}

impl<S: OctState> CostFunction<S> {
    pub fn new(term: impl CostTerm<S> + 'static) -> Self {
        Self {
            terms: vec![(1.0, Arc::new(term))],
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.0 *= c);
        self
    }

    pub fn add(mut self, other: CostFunction<S>) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn has_intermediate(&self) -> bool {
        self.terms.iter().any(|t| t.1.has_intermediate())
    }

    pub fn valfin(&self, y: &S, lam: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (w, t) in &self.terms {
            v += w * t.valfin(y, lam)?;
        }
        Ok(v)
    }

    pub fn grad_final(&self, y: &S, lam: &[f64]) -> Result<S> {
        let mut out = y.zeros_like();
        for (w, t) in &self.terms {
            out.axpy(*w, &t.grad_final(y, lam)?);
        }
        Ok(out)
    }

    /// Terminal adjoint `p(T) = -2i dJ/dpsi*(T)`.
    pub fn final_adjoint(&self, y: &S, lam: &[f64]) -> Result<S> {
        let mut g = self.grad_final(y, lam)?;
        g.mul_complex(Complex64::new(0.0, -1.0));
        Ok(g)
    }

    pub fn valint(&self, t: f64, y: &S, lam: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (w, term) in &self.terms {
            if term.has_intermediate() {
                v += w * term.valint(t, y, lam)?;
            }
        }
        Ok(v)
    }

    fn grad_inter(&self, t: f64, y: &S, lam: &[f64]) -> Result<Option<S>> {
        let mut out: Option<S> = None;
        for (w, term) in &self.terms {
            if let Some(g) = term.grad_inter(t, y, lam)? {
                out.get_or_insert_with(|| y.zeros_like()).axpy(*w, &g);
            }
        }
        Ok(out)
    }

    fn deriv(&self, t: f64, y: &S, lam: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut out: Option<Vec<f64>> = None;
        for (w, term) in &self.terms {
            if let Some(d) = term.deriv(t, y, lam)? {
                let o = out.get_or_insert_with(|| vec![0.0; d.len()]);
                for (a, b) in o.iter_mut().zip(&d) {
                    *a += w * b;
                }
            }
        }
        Ok(out)
    }
}

impl<S: OctState> std::ops::Mul<CostFunction<S>> for f64 {
    type Output = CostFunction<S>;
    fn mul(self, rhs: CostFunction<S>) -> CostFunction<S> {
        rhs.scaled(self)
    }
}

impl<S: OctState> std::ops::Add for CostFunction<S> {
    type Output = CostFunction<S>;
    fn add(self, rhs: Self) -> Self {
        CostFunction::add(self, rhs)
    }
}

/// Wall clock for the solve timings. wasm32 has no clock in std, so
/// timings read zero there.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        #[cfg(not(target_arch = "wasm32"))]
        return Stopwatch(std::time::Instant::now());
        #[cfg(target_arch = "wasm32")]
        Stopwatch()
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Counters and timings of forward and backward solves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub forward: usize,
    pub backward: usize,
    pub t_forward: f64,
    pub t_backward: f64,
}

struct Forward<S> {
    control: ControlTimeline,
    /// State before every step and after the last one.
    steps: Vec<S>,
    times: Vec<f64>,
    traj: Trajectory<S>,
    value: f64,
}

/// Forward model, adjoint model and cost wired together for one control
/// problem.
pub struct OptimalitySystem<M: OctModel>
where
    M::State: OctState,
{
    pub model: M,
    pub psi0: M::State,
    pub cost: CostFunction<M::State>,
    pub opts: SolverOptions,
    control: ControlTimeline,
    cache: Option<Forward<M::State>>,
    pub stats: SolveStats,
}

/// Terminal-cost breakdown of the last forward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParts {
    pub terminal: f64,
    pub intermediate: f64,
    pub penalty: f64,
}

impl<M: OctModel> OptimalitySystem<M>
where
    M::State: OctState,
{
    pub fn new(
        model: M,
        psi0: M::State,
        control: ControlTimeline,
        cost: CostFunction<M::State>,
        opts: SolverOptions,
    ) -> Result<Self> {
        match opts.stepper {
            Stepper::Crank | Stepper::Runge4 => {}
            Stepper::Rk23 => return Err(invalid("optimal control needs a fixed-step stepper (crank or runge4), not rk23")),
            Stepper::Split => return Err(invalid("optimal control needs the crank or runge4 stepper, not split")),
        }
        if control.len() < 2 {
            return Err(invalid("control needs at least two knots"));
        }
        Ok(Self {
            model,
            psi0,
            cost,
            opts,
            control,
            cache: None,
            stats: SolveStats::default(),
        })
    }

    pub fn control(&self) -> &ControlTimeline {
        &self.control
    }

    pub fn set_control(&mut self, control: ControlTimeline) {
        self.control = control;
    }

    fn cached(&self) -> Option<&Forward<M::State>> {
        self.cache.as_ref().filter(|c| c.control == self.control)
    }

    fn forward(&mut self) -> Result<&Forward<M::State>> {
        if self.cached().is_none() {
            let start = Stopwatch::start();
            let mut rec: Vec<(f64, M::State)> = Vec::new();
            let traj = solve_with(
                &self.model,
                self.psi0.clone(),
                self.control.times(),
                &self.control,
                &self.opts,
                Hooks {
                    record: Some(&mut rec),
                    ..Default::default()
                },
                &|s: &M::State| s.clone(),
            )?;
            let (times, steps): (Vec<f64>, Vec<M::State>) = rec.into_iter().unzip();
            let last = self.control.last();
            let mut value = self.cost.valfin(traj.last(), &last)? + self.control.penalty_cost();
            if self.cost.has_intermediate() {
                let w = trapezoid(&times);
                for ((t, y), wk) in times.iter().zip(&steps).zip(&w) {
                    value += wk * self.cost.valint(*t, y, &self.control.eval(*t)?.values)?;
                }
            }
            self.stats.forward += 1;
            self.stats.t_forward += start.seconds();
            self.cache = Some(Forward {
                control: self.control.clone(),
                steps,
                times,
                traj,
                value,
            });
        }
        Ok(self.cached().expect("forward cache"))
    }

    /// Total cost `J_final + J_inter + penalty` at the current control.
    pub fn cost(&mut self) -> Result<f64> {
        Ok(self.forward()?.value)
    }

    /// Cost at another control, leaving the current control in place.
    pub fn cost_at(&mut self, control: &ControlTimeline) -> Result<f64> {
        let saved = std::mem::replace(&mut self.control, control.clone());
        let r = self.cost();
        self.control = saved;
        r
    }

    pub fn cost_parts(&mut self) -> Result<CostParts> {
        let value = self.forward()?.value;
        let fw = self.cached().expect("forward cache");
        let terminal = self.cost.valfin(fw.traj.last(), &self.control.last())?;
        let penalty = self.control.penalty_cost();
        Ok(CostParts {
            terminal,
            intermediate: value - terminal - penalty,
            penalty,
        })
    }

    /// Forward trajectory at the knot times.
    pub fn trajectory(&mut self) -> Result<&Trajectory<M::State>> {
        Ok(&self.forward()?.traj)
    }

    /// Terminal adjoint `p(T)` at the current control.
    pub fn terminal_adjoint(&mut self) -> Result<M::State> {
        let last = self.control.last();
        let y = self.forward()?.traj.last().clone();
        self.cost.final_adjoint(&y, &last)
    }

    /// Derivative of the cost excluding the penalty with respect to every
    /// knot value, `dJ/dlambda_j` (one vector per channel).
    pub fn knot_derivative(&mut self) -> Result<Vec<Vec<f64>>> {
        Ok(self.backward(false)?.0)
    }

    /// Adjoint states `p` at every stored step time, earliest first.
    pub fn adjoint_states(&mut self) -> Result<Vec<M::State>> {
        let mut states = self.backward(true)?.1;
        states.reverse();
        for a in &mut states {
            a.mul_complex(Complex64::new(0.0, -1.0));
        }
        Ok(states)
    }

    fn backward(&mut self, record: bool) -> Result<(Vec<Vec<f64>>, Vec<M::State>)> {
        self.forward()?;
        let start = Stopwatch::start();
        let fw = self.cached().expect("forward cache");
        let ctl = &self.control;
        let model = &self.model;
        let sopts = &self.opts.step;
        let nk = ctl.len();
        let nch = ctl.channels();
        let mut djdl = vec![vec![0.0; nk]; nch];
        let mut deposit = |t: f64, g: &[f64], scale: f64| -> Result<()> {
            for (j, h) in ctl.hat_weights(t)? {
                if h != 0.0 {
                    for (c, gc) in g.iter().enumerate() {
                        djdl[c][j] += scale * h * gc;
                    }
                }
            }
            Ok(())
        };
        let times = &fw.times;
        let inter = self.cost.has_intermediate();
        let wint = if inter { trapezoid(times) } else { Vec::new() };
        let nsteps = fw.steps.len() - 1;
        let add_inter = |k: usize, a: &mut M::State, deposit: &mut dyn FnMut(f64, &[f64], f64) -> Result<()>| -> Result<()> {
            if !inter {
                return Ok(());
            }
            let t = times[k];
            let lam = ctl.eval(t)?.values;
            if let Some(g) = self.cost.grad_inter(t, &fw.steps[k], &lam)? {
                a.axpy(wint[k], &g);
            }
            if let Some(d) = self.cost.deriv(t, &fw.steps[k], &lam)? {
                deposit(t, &d, wint[k])?;
            }
            Ok(())
        };
        let mut a = self.cost.grad_final(&fw.steps[nsteps], &ctl.last())?;
        add_inter(nsteps, &mut a, &mut deposit)?;
        let mut rec = Vec::new();
        if record {
            rec.push(a.clone());
        }
        let tout = ctl.times();
        let nsub = self.opts.nsub;
        for k in (0..nsteps).rev() {
            let interval = k / nsub;
            let sub = k % nsub;
            let (ta, tb) = (tout[interval], tout[interval + 1]);
            let dt = (tb - ta) / nsub as f64;
            let t = ta + sub as f64 * dt;
            let y = &fw.steps[k];
            match self.opts.stepper {
                Stepper::Crank => {
                    let mut ybar = y.clone();
                    ybar.axpy(1.0, &fw.steps[k + 1]);
                    ybar.scale(0.5);
                    let tm = t + 0.5 * dt;
                    let lam = ctl.eval(tm)?.values;
                    let r = model.crank_adjoint(&ybar, &lam, dt, &a, sopts)?;
                    let (_, g) = model.vjp(&ybar, &lam, &r, sopts)?;
                    deposit(tm, &g, dt)?;
                    let mut na = r;
                    na.scale(2.0);
                    na.axpy(-1.0, &a);
                    a = na;
                }
                Stepper::Runge4 => {
                    a = rk4_adjoint(model, ctl, t, dt, y, &a, sopts, &mut deposit)?;
                }
                _ => unreachable!("stepper validated at construction"),
            }
            if !a.is_finite() {
                return Err(Error::NonFinite("adjoint state"));
            }
            add_inter(k, &mut a, &mut deposit)?;
            if record {
                rec.push(a.clone());
            }
        }
        self.stats.backward += 1;
        self.stats.t_backward += start.seconds();
        Ok((djdl, rec))
    }

    /// Search direction: the gradient of the total cost in the control norm
    /// (L2 or H1), vanishing at both endpoints.
    pub fn gradient(&mut self) -> Result<ControlTimeline> {
        let djdl = self.knot_derivative()?;
        let w = self.control.knot_weights();
        let f: Vec<Vec<f64>> = djdl
            .iter()
            .map(|d| d.iter().zip(&w).map(|(x, wj)| -x / wj).collect())
            .collect();
        self.control.assemble_gradient(&f)
    }

    /// Directional derivative along `u` by forward difference and by the
    /// adjoint gradient: returns `(direct, adjoint)`.
    pub fn consistency_check(&mut self, u: &ControlTimeline, eta: f64) -> Result<(f64, f64)> {
        let g = self.gradient()?;
        let adjoint = self.control.inner_control(u, &g)?;
        let j0 = self.cost()?;
        let moved = self.control.axpy(eta, u)?;
        let j1 = self.cost_at(&moved)?;
        Ok(((j1 - j0) / eta, adjoint))
    }
}

/// Trapezoid weights for possibly non-uniform sample times.
fn trapezoid(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|k| {
            let l = if k > 0 { t[k] - t[k - 1] } else { 0.0 };
            let r = if k + 1 < n { t[k + 1] - t[k] } else { 0.0 };
            0.5 * (l + r)
        })
        .collect()
}

/// Backward sweep through one classic RK4 step: given the adjoint of the
/// step's output, return the adjoint of its input and deposit the control
/// sensitivities at the stage times.
#[allow(clippy::too_many_arguments)]
fn rk4_adjoint<M: OctModel>(
    model: &M,
    ctl: &ControlTimeline,
    t: f64,
    dt: f64,
    y: &M::State,
    abar: &M::State,
    sopts: &crate::ode::StepOptions,
    deposit: &mut dyn FnMut(f64, &[f64], f64) -> Result<()>,
) -> Result<M::State>
where
    M::State: OctState,
{
    let s1 = ctl.eval(t)?;
    let s2 = ctl.eval(t + 0.5 * dt)?;
    let s4 = ctl.eval(t + dt)?;
    let (l1, l2, l4) = (&s1.values, &s2.values, &s4.values);
    let k1 = model.deriv(y, &s1, sopts)?;
    let mut y2 = y.clone();
    y2.axpy(0.5 * dt, &k1);
    let k2 = model.deriv(&y2, &s2, sopts)?;
    let mut y3 = y.clone();
    y3.axpy(0.5 * dt, &k2);
    let k3 = model.deriv(&y3, &s2, sopts)?;
    let mut y4 = y.clone();
    y4.axpy(dt, &k3);
    // adjoints of the stage derivatives
    let mut ak4 = abar.clone();
    ak4.scale(dt / 6.0);
    let mut ak3 = abar.clone();
    ak3.scale(dt / 3.0);
    let mut ak2 = ak3.clone();
    let mut ak1 = ak4.clone();
    let mut ay = abar.clone();
    let (b4, g4) = model.vjp(&y4, l4, &ak4, sopts)?;
    deposit(t + dt, &g4, 1.0)?;
    ay.axpy(1.0, &b4);
    ak3.axpy(dt, &b4);
    let (b3, g3) = model.vjp(&y3, l2, &ak3, sopts)?;
    deposit(t + 0.5 * dt, &g3, 1.0)?;
    ay.axpy(1.0, &b3);
    ak2.axpy(0.5 * dt, &b3);
    let (b2, g2) = model.vjp(&y2, l2, &ak2, sopts)?;
    deposit(t + 0.5 * dt, &g2, 1.0)?;
    ay.axpy(1.0, &b2);
    ak1.axpy(0.5 * dt, &b2);
    let (b1, g1) = model.vjp(y, l1, &ak1, sopts)?;
    deposit(t, &g1, 1.0)?;
    ay.axpy(1.0, &b1);
    Ok(ay)
}

#[cfg(test)]
mod tests;
