//! Gross-Pitaevskii model `i psi' = (H_lambda + kappa |psi|^2) psi` with
//! Crank-Nicolson (Newton), split-operator and Runge-Kutta propagation,
//! ground states, density and energy.

use crate::control::ControlSample;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::linalg::{lanczos_lowest, BandMatrix, ConjLinearSystem};
use crate::ode::{Dynamics, StepOptions};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, OnceLock};

/// Potential builder: control values to a real field on the grid.
pub type PotentialFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Surrogate single-to-double-well family
/// `V = v0 [ (x/sigma)^4 / 4 - lambda (x/sigma)^2 / 2 ]`, with an optional
/// harmonic confinement `v_y (y/sigma)^2 / 2` along y on 2D grids.
pub fn double_well(grid: &Grid, v0: f64, sigma: f64, v_y: f64) -> PotentialFn {
    let coords: Vec<Vec<f64>> = grid.coords().iter().map(|c| c.to_vec()).collect();
    Arc::new(move |lam: &[f64]| {
        let l = lam[0];
        let x = &coords[0];
        (0..x.len())
            .map(|k| {
                let s = x[k] / sigma;
                let mut v = v0 * (0.25 * s.powi(4) - 0.5 * l * s * s);
                if coords.len() > 1 {
                    let sy = coords[1][k] / sigma;
                    v += 0.5 * v_y * sy * sy;
                }
                v
            })
            .collect()
    })
}

/// Harmonic trap `M omega^2 r^2 / 2` whose frequency is scaled by `1 + lambda`.
pub fn harmonic(grid: &Grid, mass: f64, omega: f64) -> PotentialFn {
    let coords: Vec<Vec<f64>> = grid.coords().iter().map(|c| c.to_vec()).collect();
    Arc::new(move |lam: &[f64]| {
        let w = omega * (1.0 + lam.first().copied().unwrap_or(0.0));
        (0..coords[0].len())
            .map(|k| 0.5 * mass * w * w * coords.iter().map(|c| c[k] * c[k]).sum::<f64>())
            .collect()
    })
}

/// Single-particle Hamiltonian `-lap / (2M) + V_lambda`.
#[derive(Clone)]
pub struct Hamiltonian {
    grid: Arc<Grid>,
    mass: f64,
    kinetic: BandMatrix<f64>,
    potential: PotentialFn,
}

impl std::fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hamiltonian")
            .field("points", &self.grid.len())
            .field("mass", &self.mass)
            .finish()
    }
}

impl Hamiltonian {
    /// `order` selects the finite-difference Laplacian (2 or 4).
    pub fn new(grid: Grid, mass: f64, order: usize, potential: PotentialFn) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(invalid("mass must be positive"));
        }
        let kinetic = grid.lap(order)?.scaled(-0.5 / mass);
        Ok(Self {
            grid: Arc::new(grid),
            mass,
            kinetic,
            potential,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn kinetic(&self) -> &BandMatrix<f64> {
        &self.kinetic
    }

    pub fn potential(&self, lam: &[f64]) -> Vec<f64> {
        (self.potential)(lam)
    }

    pub fn matrix(&self, lam: &[f64]) -> BandMatrix<f64> {
        let mut h = self.kinetic.clone();
        h.add_diagonal(&self.potential(lam));
        h
    }

    pub fn apply(&self, lam: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
        let v = self.potential(lam);
        let mut out = self.kinetic.matvec_complex(psi);
        for ((o, p), v) in out.iter_mut().zip(psi).zip(&v) {
            *o += p * v;
        }
        out
    }

    /// Central finite difference `dV/dlambda_c`, step `1e-6 max(1, |lambda_c|)`.
    pub fn dpotential(&self, lam: &[f64], c: usize) -> Vec<f64> {
        let h = 1e-6 * lam[c].abs().max(1.0);
        let mut lp = lam.to_vec();
        let mut lm = lam.to_vec();
        lp[c] += h;
        lm[c] -= h;
        let vp = self.potential(&lp);
        let vm = self.potential(&lm);
        vp.iter().zip(&vm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
}

struct SplitPlan {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl SplitPlan {
    fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape: shape.to_vec(),
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        match self.shape.as_slice() {
            [_] => plans[0].process(data),
            [nx, ny] => {
                for row in data.chunks_exact_mut(*ny) {
                    plans[1].process(row);
                }
                let mut col = vec![Complex64::new(0.0, 0.0); *nx];
                for j in 0..*ny {
                    for i in 0..*nx {
                        col[i] = data[i * ny + j];
                    }
                    plans[0].process(&mut col);
                    for i in 0..*nx {
                        data[i * ny + j] = col[i];
                    }
                }
            }
            _ => unreachable!(),
        }
        if inverse {
            let s = 1.0 / data.len() as f64;
            data.iter_mut().for_each(|c| *c *= s);
        }
    }
}

/// Gross-Pitaevskii dynamics for a fixed nonlinearity.
#[derive(Clone)]
pub struct GpModel {
    pub ham: Hamiltonian,
    pub kappa: f64,
    split: Arc<OnceLock<SplitPlan>>,
}

impl std::fmt::Debug for GpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpModel")
            .field("ham", &self.ham)
            .field("kappa", &self.kappa)
            .finish()
    }
}

/// Ground-state options.
#[derive(Debug, Clone)]
pub struct GroundOptions {
    /// Under-relaxation of the density between iterations.
    pub mix: Option<f64>,
    pub tol: f64,
    pub maxiter: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        Self {
            mix: None,
            tol: 1e-8,
            maxiter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundInfo {
    pub energy: f64,
    pub mu: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl GpModel {
    pub fn new(ham: Hamiltonian, kappa: f64) -> Self {
        Self {
            ham,
            kappa,
            split: Arc::new(OnceLock::new()),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.ham.grid()
    }

    /// `(H + kappa |psi|^2) psi`
    pub fn generator(&self, lam: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = self.ham.apply(lam, psi);
        if self.kappa != 0.0 {
            for (o, p) in out.iter_mut().zip(psi) {
                *o += p * (self.kappa * p.norm_sqr());
            }
        }
        out
    }

    pub fn density(&self, psi: &[Complex64]) -> Vec<f64> {
        density(psi)
    }

    /// `Re<psi|H psi> + (kappa / 2) int |psi|^4`
    pub fn energy(&self, psi: &[Complex64], lam: &[f64]) -> f64 {
        let g = self.grid();
        let hpsi = self.ham.apply(lam, psi);
        let quartic: f64 = psi.iter().map(|p| p.norm_sqr().powi(2)).sum::<f64>() * g.weight();
        g.inner_unchecked(psi, &hpsi).re + 0.5 * self.kappa * quartic
    }

    /// Chemical potential `<psi|H + kappa |psi|^2|psi>` and residual norm
    /// `|| (H + kappa |psi|^2 - mu) psi ||`.
    pub fn residual(&self, psi: &[Complex64], lam: &[f64]) -> (f64, f64) {
        let g = self.grid();
        let gpsi = self.generator(lam, psi);
        let mu = g.inner_unchecked(psi, &gpsi).re / g.inner_unchecked(psi, psi).re;
        let r: Vec<Complex64> = gpsi.iter().zip(psi).map(|(a, p)| a - p * mu).collect();
        (mu, g.norm(&r))
    }

    /// Crank-Nicolson step with Newton iteration; also returns the number of
    /// Newton corrections.
    pub fn crank_newton(
        &self,
        psi: &[Complex64],
        lam: &[f64],
        dt: f64,
        opts: &StepOptions,
    ) -> Result<(Vec<Complex64>, usize)> {
        if !(dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        let h = self.ham.matrix(lam);
        let half = Complex64::new(0.0, 0.5 * dt);
        let mut a = h.map(|v| half * v);
        a.add_diagonal(&vec![Complex64::new(1.0, 0.0); psi.len()]);
        let hpsi = h.matvec_complex(psi);
        let rhs: Vec<Complex64> = psi.iter().zip(&hpsi).map(|(p, hp)| p - half * hp).collect();
        let mut next = a.solve(&rhs)?;
        if self.kappa == 0.0 {
            return Ok((next, 0));
        }
        let g = self.grid();
        let kappa = self.kappa;
        let mut last = f64::INFINITY;
        for it in 1..=opts.max_newton {
            let bar: Vec<Complex64> = next.iter().zip(psi).map(|(a, b)| 0.5 * (a + b)).collect();
            let hbar = h.matvec_complex(&bar);
            let resid: Vec<Complex64> = (0..psi.len())
                .map(|k| {
                    let nl = bar[k] * (kappa * bar[k].norm_sqr());
                    -(next[k] - psi[k] + I * dt * (hbar[k] + nl))
                })
                .collect();
            let mut am = a.clone();
            am.add_diagonal(&bar.iter().map(|b| half * (2.0 * kappa * b.norm_sqr())).collect::<Vec<_>>());
            let bm = BandMatrix::from_diagonal(&bar.iter().map(|b| half * kappa * b * b).collect::<Vec<_>>());
            let delta = ConjLinearSystem::new(&am, Some(&bm), &[])?.solve(&resid);
            for (n, d) in next.iter_mut().zip(&delta) {
                *n += d;
            }
            last = g.norm(&delta);
            if last < opts.newton_tol {
                return Ok((next, it));
            }
        }
        Err(Error::NoConvergence {
            what: "Crank-Nicolson Newton iteration",
            iterations: opts.max_newton,
            residual: last,
        })
    }

    /// Strang split step: half potential phase, full kinetic phase in
    /// wavenumber space, half potential phase.
    pub fn split_step(&self, psi: &[Complex64], lam: &[f64], dt: f64) -> Vec<Complex64> {
        let grid = self.grid();
        let plan = self.split.get_or_init(|| SplitPlan::new(&grid.shape()));
        let v = self.ham.potential(lam);
        let kappa = self.kappa;
        let half_phase = |y: &mut [Complex64]| {
            for (p, v) in y.iter_mut().zip(&v) {
                let e = v + kappa * p.norm_sqr();
                *p *= Complex64::from_polar(1.0, -0.5 * dt * e);
            }
        };
        let mut y = psi.to_vec();
        half_phase(&mut y);
        plan.transform(&mut y, false);
        let m = self.ham.mass();
        for (p, k2) in y.iter_mut().zip(grid.kinetic_multipliers()) {
            *p *= Complex64::from_polar(1.0, k2 * dt / (2.0 * m));
        }
        plan.transform(&mut y, true);
        half_phase(&mut y);
        y
    }

    /// Ground state. Self-consistent relaxation first takes the lowest
    /// eigenvector of the frozen-density Hamiltonian, with optional density
    /// mixing. When that does not settle (near-degenerate double wells make
    /// the density slosh between the wells) a preconditioned imaginary-time
    /// descent from the linear ground state takes over.
    pub fn groundstate(&self, lam: &[f64], opts: &GroundOptions) -> Result<(Vec<Complex64>, GroundInfo)> {
        let mix = opts.mix.unwrap_or(1.0);
        if !(mix > 0.0 && mix <= 1.0) {
            return Err(invalid("mix must lie in (0, 1]"));
        }
        let scf_iters = opts.maxiter.min(SCF_ITERATIONS);
        let (psi, info) = self.scf_ground(lam, mix, opts.tol, scf_iters)?;
        if info.iterations <= scf_iters && info.residual < 100.0 * opts.tol.max(1e-10) {
            return Ok((psi, info));
        }
        self.descent_ground(lam, opts.tol, opts.maxiter)
    }

    fn scf_ground(&self, lam: &[f64], mix: f64, tol: f64, maxiter: usize) -> Result<(Vec<Complex64>, GroundInfo)> {
        let g = self.grid();
        let n = g.len();
        let h = self.ham.matrix(lam);
        let mut rho = vec![0.0; n];
        let mut psi: Option<Vec<Complex64>> = None;
        let mut e_prev = f64::INFINITY;
        let mut info = GroundInfo {
            energy: f64::INFINITY,
            mu: f64::INFINITY,
            iterations: maxiter + 1,
            residual: f64::INFINITY,
        };
        for it in 1..=maxiter {
            let mut heff = h.map(|v| Complex64::new(v, 0.0));
            heff.add_diagonal(&rho.iter().map(|r| Complex64::new(self.kappa * r, 0.0)).collect::<Vec<_>>());
            let apply = |x: &[Complex64]| heff.matvec(x);
            let lz = lanczos_lowest(&apply, n, psi.as_deref(), n, 1e-13)?;
            let mut phi = fix_phase(lz.vector);
            let s = g.norm(&phi);
            phi.iter_mut().for_each(|c| *c /= s);
            let dens = density(&phi);
            for (r, d) in rho.iter_mut().zip(&dens) {
                *r = if it == 1 && self.kappa != 0.0 { *d } else { (1.0 - mix) * *r + mix * d };
            }
            let e = self.energy(&phi, lam);
            let (mu, res) = self.residual(&phi, lam);
            let de = (e - e_prev).abs();
            e_prev = e;
            psi = Some(phi);
            info = GroundInfo {
                energy: e,
                mu,
                iterations: maxiter + 1,
                residual: res,
            };
            if self.kappa == 0.0 || (de < tol && res < 100.0 * tol.max(1e-10)) {
                info.iterations = it;
                break;
            }
        }
        Ok((psi.expect("at least one iteration"), info))
    }

    fn descent_ground(&self, lam: &[f64], tol: f64, maxiter: usize) -> Result<(Vec<Complex64>, GroundInfo)> {
        let g = self.grid();
        let n = g.len();
        let h = self.ham.matrix(lam);
        let hc = h.map(|v| Complex64::new(v, 0.0));
        let apply = |x: &[Complex64]| hc.matvec(x);
        let lz = lanczos_lowest(&apply, n, None, n, 1e-13)?;
        let e0 = lz.value;
        let mut psi = g.normalize(&fix_phase(lz.vector))?;
        let mut e = self.energy(&psi, lam);
        let mut tau = 0.5 / (e0.abs() + 1.0);
        let mut residual = f64::INFINITY;
        for it in 1..=maxiter {
            let (mu, res) = self.residual(&psi, lam);
            residual = res;
            let grad: Vec<Complex64> = self.generator(lam, &psi).iter().zip(&psi).map(|(a, p)| a - p * mu).collect();
            loop {
                let mut pre = h.map(|v| Complex64::new(tau * v, 0.0));
                pre.add_diagonal(&vec![Complex64::new(1.0 - tau * e0, 0.0); n]);
                let step = pre.solve(&grad)?;
                let trial: Vec<Complex64> = psi.iter().zip(&step).map(|(p, d)| p - tau * d).collect();
                let trial = g.normalize(&trial)?;
                let en = self.energy(&trial, lam);
                if en <= e + 1e-14 * e.abs().max(1.0) || tau < 1e-12 {
                    let de = (e - en).abs();
                    psi = trial;
                    e = en;
                    tau = (tau * 1.25).min(1e3);
                    if de < tol * e.abs().max(1.0) && res < 100.0 * tol.max(1e-10) {
                        let (mu, res) = self.residual(&psi, lam);
                        return Ok((
                            fix_phase(psi),
                            GroundInfo {
                                energy: e,
                                mu,
                                iterations: it,
                                residual: res,
                            },
                        ));
                    }
                    break;
                }
                tau *= 0.5;
            }
        }
        Err(Error::NoConvergence {
            what: "Gross-Pitaevskii ground state",
            iterations: maxiter,
            residual,
        })
    }
}

/// Self-consistent iterations tried before falling back to descent.
const SCF_ITERATIONS: usize = 60;

/// `|psi|^2`
pub fn density(psi: &[Complex64]) -> Vec<f64> {
    psi.iter().map(|p| p.norm_sqr()).collect()
}

/// Rotate so the largest-magnitude component is real and positive.
pub fn fix_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    if let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if big.norm() > 0.0 {
            let ph = big.conj() / big.norm();
            v.iter_mut().for_each(|c| *c *= ph);
        }
    }
    v
}

impl Dynamics for GpModel {
    type State = Vec<Complex64>;

    fn deriv(&self, y: &Self::State, lam: &ControlSample, _: &StepOptions) -> Result<Self::State> {
        let d: Vec<Complex64> = self.generator(&lam.values, y).iter().map(|v| -I * v).collect();
        if d.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("Gross-Pitaevskii derivative"));
        }
        Ok(d)
    }

    fn crank(&self, y: &Self::State, lam: &ControlSample, dt: f64, opts: &StepOptions) -> Result<Self::State> {
        Ok(self.crank_newton(y, &lam.values, dt, opts)?.0)
    }

    fn split(&self, y: &Self::State, lam: &ControlSample, dt: f64, _: &StepOptions) -> Result<Self::State> {
        Ok(self.split_step(y, &lam.values, dt))
    }
}
