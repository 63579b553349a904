//! Generic time integration: fixed-step RK4, adaptive Bogacki-Shampine
//! RK23, and delegation to model Crank-Nicolson or split-operator steps.

use crate::control::{ControlSample, ControlTimeline};
use crate::error::{invalid, Error, Result};
use num_complex::Complex64;

/// Vector-space operations needed by the integrators.
pub trait OdeState: Clone + Send {
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
    /// `max_k |err_k| / (atol + rtol * max(|y_k|, |y_new_k|))`
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64;
    fn is_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn scale(&mut self, a: f64) {
        *self *= a;
    }
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64 {
        err.abs() / (atol + rtol * self.abs().max(y_new.abs()))
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl OdeState for Complex64 {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
    fn scale(&mut self, a: f64) {
        *self *= a;
    }
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64 {
        err.norm() / (atol + rtol * self.norm().max(y_new.norm()))
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl OdeState for Vec<Complex64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += v * a;
        }
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64 {
        self.iter()
            .zip(y_new)
            .zip(err)
            .map(|((y, yn), e)| e.norm() / (atol + rtol * y.norm().max(yn.norm())))
            .fold(0.0, f64::max)
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64 {
        self.iter()
            .zip(y_new)
            .zip(err)
            .map(|((y, yn), e)| e.abs() / (atol + rtol * y.abs().max(yn.abs())))
            .fold(0.0, f64::max)
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Options forwarded to model derivative and step routines.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub newton_tol: f64,
    pub max_newton: usize,
    /// MCTDHB projector toggle.
    pub proj: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-6,
            max_newton: 20,
            proj: true,
        }
    }
}

/// A model that can be propagated by [`solve`].
pub trait Dynamics {
    type State: OdeState;

    fn deriv(&self, y: &Self::State, lam: &ControlSample, opts: &StepOptions) -> Result<Self::State>;

    /// One Crank-Nicolson step; `lam` is evaluated at mid-step.
    fn crank(&self, _y: &Self::State, _lam: &ControlSample, _dt: f64, _opts: &StepOptions) -> Result<Self::State> {
        Err(Error::Unsupported("Crank-Nicolson step for this model"))
    }

    /// One split-operator step; `lam` is evaluated at mid-step.
    fn split(&self, _y: &Self::State, _lam: &ControlSample, _dt: f64, _opts: &StepOptions) -> Result<Self::State> {
        Err(Error::Unsupported("split-operator step for this model"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    #[default]
    Crank,
    Runge4,
    Rk23,
    Split,
}

impl std::str::FromStr for Stepper {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crank" => Ok(Stepper::Crank),
            "runge4" | "rk4" => Ok(Stepper::Runge4),
            "rk23" | "ode23" => Ok(Stepper::Rk23),
            "split" => Ok(Stepper::Split),
            _ => Err(invalid(format!("unknown stepper `{s}` (expected crank, runge4, rk23 or split)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub nsub: usize,
    /// Report progress every `nout` output intervals (0 disables).
    pub nout: usize,
    pub stepper: Stepper,
    pub rtol: f64,
    pub atol: f64,
    pub step: StepOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            nsub: 1,
            nout: 0,
            stepper: Stepper::Crank,
            rtol: 1e-6,
            atol: 1e-9,
            step: StepOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn new(stepper: Stepper, nsub: usize) -> Self {
        Self {
            stepper,
            nsub,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub tout: Vec<f64>,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn last(&self) -> &S {
        self.states.last().expect("empty trajectory")
    }
}

/// Optional callbacks for [`solve_with`].
pub struct Hooks<'a, S> {
    /// Applied to the state after every accepted step.
    pub funiter: Option<&'a dyn Fn(&mut S)>,
    /// Called with `(output index, time)` every `nout` outputs.
    pub progress: Option<&'a mut dyn FnMut(usize, f64)>,
    /// Receives `(t, state)` for the initial state and every accepted step.
    pub record: Option<&'a mut Vec<(f64, S)>>,
}

impl<S> Default for Hooks<'_, S> {
    fn default() -> Self {
        Self {
            funiter: None,
            progress: None,
            record: None,
        }
    }
}

/// One classic RK4 step of `y' = f(t, y)`.
pub fn rk4_step<S: OdeState>(
    f: &mut dyn FnMut(f64, &S) -> Result<S>,
    t: f64,
    y: &S,
    dt: f64,
) -> Result<S> {
    let k1 = f(t, y)?;
    let mut y2 = y.clone();
    y2.axpy(0.5 * dt, &k1);
    let k2 = f(t + 0.5 * dt, &y2)?;
    let mut y3 = y.clone();
    y3.axpy(0.5 * dt, &k2);
    let k3 = f(t + 0.5 * dt, &y3)?;
    let mut y4 = y.clone();
    y4.axpy(dt, &k3);
    let k4 = f(t + dt, &y4)?;
    let mut out = y.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

pub fn solve<D: Dynamics>(
    model: &D,
    y0: D::State,
    tout: &[f64],
    control: &ControlTimeline,
    opts: &SolverOptions,
) -> Result<Trajectory<D::State>> {
    solve_with(model, y0, tout, control, opts, Hooks::default(), &|s: &D::State| s.clone())
}

/// Integrate through `tout`, returning `funout` of the state at every output.
pub fn solve_with<D: Dynamics, O>(
    model: &D,
    y0: D::State,
    tout: &[f64],
    control: &ControlTimeline,
    opts: &SolverOptions,
    mut hooks: Hooks<'_, D::State>,
    funout: &dyn Fn(&D::State) -> O,
) -> Result<Trajectory<O>> {
    if tout.is_empty() {
        return Err(invalid("tout must not be empty"));
    }
    if tout.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("tout must be strictly increasing"));
    }
    if opts.nsub == 0 {
        return Err(invalid("nsub must be at least 1"));
    }
    control.eval(tout[0])?;
    control.eval(*tout.last().unwrap())?;
    let span = tout.last().unwrap() - tout[0];
    let mut y = y0;
    if let Some(rec) = hooks.record.as_deref_mut() {
        rec.push((tout[0], y.clone()));
    }
    let mut states = vec![funout(&y)];
    let mut rk23_h = None;
    for (i, w) in tout.windows(2).enumerate() {
        let (ta, tb) = (w[0], w[1]);
        match opts.stepper {
            Stepper::Rk23 => {
                let h0 = rk23_h.unwrap_or((tb - ta) / opts.nsub as f64);
                let (yn, h) = rk23_interval(model, y, ta, tb, h0, span, control, opts, &mut hooks)?;
                y = yn;
                rk23_h = Some(h);
            }
            stepper => {
                let dt = (tb - ta) / opts.nsub as f64;
                for k in 0..opts.nsub {
                    let t = ta + k as f64 * dt;
                    let mut yn = match stepper {
                        Stepper::Runge4 => rk4_step(
                            &mut |s, yy| model.deriv(yy, &control.eval(s)?, &opts.step),
                            t,
                            &y,
                            dt,
                        )?,
                        Stepper::Crank => model.crank(&y, &control.eval(t + 0.5 * dt)?, dt, &opts.step)?,
                        Stepper::Split => model.split(&y, &control.eval(t + 0.5 * dt)?, dt, &opts.step)?,
                        Stepper::Rk23 => unreachable!(),
                    };
                    if !yn.is_finite() {
                        return Err(Error::NonFinite("propagated state"));
                    }
                    if let Some(f) = hooks.funiter {
                        f(&mut yn);
                    }
                    y = yn;
                    if let Some(rec) = hooks.record.as_deref_mut() {
                        let tn = if k + 1 == opts.nsub { tb } else { t + dt };
                        rec.push((tn, y.clone()));
                    }
                }
            }
        }
        states.push(funout(&y));
        if opts.nout > 0 && (i + 1) % opts.nout == 0 {
            if let Some(p) = hooks.progress.as_deref_mut() {
                p(i + 1, tb);
            }
        }
    }
    Ok(Trajectory {
        tout: tout.to_vec(),
        states,
    })
}

#[allow(clippy::too_many_arguments)]
fn rk23_interval<D: Dynamics>(
    model: &D,
    mut y: D::State,
    ta: f64,
    tb: f64,
    h0: f64,
    span: f64,
    control: &ControlTimeline,
    opts: &SolverOptions,
    hooks: &mut Hooks<'_, D::State>,
) -> Result<(D::State, f64)> {
    let f = |t: f64, s: &D::State| -> Result<D::State> { model.deriv(s, &control.eval(t)?, &opts.step) };
    let mut t = ta;
    let mut h = h0.min(tb - ta);
    let mut k1 = f(t, &y)?;
    let mut last_h = h0;
    while t < tb {
        let remaining = tb - t;
        let hit_end = h >= remaining * (1.0 - 1e-12);
        let hs = if hit_end { remaining } else { h };
        if hs < 1e-12 * span.max(f64::MIN_POSITIVE) {
            return Err(Error::StepUnderflow { t, step: hs });
        }
        let mut y2 = y.clone();
        y2.axpy(0.5 * hs, &k1);
        let k2 = f(t + 0.5 * hs, &y2)?;
        let mut y3 = y.clone();
        y3.axpy(0.75 * hs, &k2);
        let k3 = f(t + 0.75 * hs, &y3)?;
        let mut yn = y.clone();
        yn.axpy(2.0 / 9.0 * hs, &k1);
        yn.axpy(1.0 / 3.0 * hs, &k2);
        yn.axpy(4.0 / 9.0 * hs, &k3);
        let tn = if hit_end { tb } else { t + hs };
        let k4 = f(tn, &yn)?;
        // difference between the 3rd and embedded 2nd order solutions
        let mut err = k1.clone();
        err.scale(hs * (2.0 / 9.0 - 7.0 / 24.0));
        err.axpy(hs * (1.0 / 3.0 - 0.25), &k2);
        err.axpy(hs * (4.0 / 9.0 - 1.0 / 3.0), &k3);
        err.axpy(-hs / 8.0, &k4);
        let ratio = y.error_ratio(&yn, &err, opts.atol, opts.rtol);
        if !ratio.is_finite() {
            h = 0.25 * hs;
            continue;
        }
        if ratio <= 1.0 {
            t = tn;
            y = yn;
            k1 = k4;
            if let Some(fi) = hooks.funiter {
                fi(&mut y);
                k1 = f(t, &y)?;
            }
            if let Some(rec) = hooks.record.as_deref_mut() {
                rec.push((t, y.clone()));
            }
            if !hit_end {
                last_h = hs;
            }
        }
        let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        h = hs * fac;
    }
    Ok((y, last_h.max(h.min(last_h * 5.0))))
}
