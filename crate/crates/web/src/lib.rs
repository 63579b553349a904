//! Browser bindings: a condensate splitting movie and an interactive
//! number-squeezing optimization.

use bec_octrl::control::{ControlTimeline, NormMode};
use bec_octrl::fock::{two_mode_hamiltonian, FockBasis, FockModel};
use bec_octrl::gp::{double_well, GpModel, Hamiltonian};
use bec_octrl::grid::Grid;
use bec_octrl::oct::{CostFunction, OptimalitySystem, Squeezing};
use bec_octrl::ode::{solve, SolverOptions, Stepper};
use bec_octrl::optim::{Optimizer, OptimizerOptions};
use bec_octrl::units::rb87_mass;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

fn js(e: bec_octrl::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Split a condensate by ramping up the barrier of a double well.
///
/// Returns `frames + 1` rows of 101 values, flattened: the grid first, then
/// the density at equally spaced times from 0 to `tmax`.
#[wasm_bindgen]
pub fn split_density(v0: f64, kappa: f64, tmax: f64, frames: usize) -> Result<Vec<f64>, JsError> {
    run_split(v0, kappa, tmax, frames).map_err(js)
}

fn run_split(v0: f64, kappa: f64, tmax: f64, frames: usize) -> bec_octrl::Result<Vec<f64>> {
    if !(tmax > 0.0) || frames == 0 {
        return Err(bec_octrl::Error::InvalidArgument("need tmax > 0 and at least one frame".into()));
    }
    let grid = Grid::grid1d(-3.0, 3.0, 101)?;
    let ham = Hamiltonian::new(grid.clone(), rb87_mass(), 4, double_well(&grid, v0, 1.0, 0.0))?;
    let model = GpModel::new(ham, kappa);
    let (psi0, _) = model.groundstate(&[0.0], &Default::default())?;
    let ctl = ControlTimeline::from_fn(
        linspace(0.0, tmax, 100),
        |t| (2.0 * t / tmax).min(1.0).sqrt(),
        0.0,
        NormMode::L2,
    )?;
    let traj = solve(&model, psi0, &linspace(0.0, tmax, frames + 1), &ctl, &SolverOptions::new(Stepper::Crank, 4))?;
    let mut out = grid.coords()[0].to_vec();
    for psi in &traj.states {
        out.extend(model.density(psi));
    }
    Ok(out)
}

/// Two-mode squeezing problem optimized one quasi-Newton step at a time.
#[wasm_bindgen]
pub struct Squeezer {
    basis: Arc<FockBasis>,
    sys: OptimalitySystem<FockModel>,
    opt: Optimizer,
}

#[wasm_bindgen]
impl Squeezer {
    /// `n` atoms, interaction `1/n`, tunneling `3 exp(-t/10)` on `[0, tmax]`.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, tmax: f64, gamma: f64) -> Result<Squeezer, JsError> {
        Self::build(n, tmax, gamma).map_err(js)
    }

    fn build(n: usize, tmax: f64, gamma: f64) -> bec_octrl::Result<Squeezer> {
        let basis = Arc::new(FockBasis::new(n, 2, None)?);
        let model = FockModel::new(basis.clone(), two_mode_hamiltonian(&basis, 1.0 / n as f64)?);
        let (psi0, _) = model.groundstate(&[3.0])?;
        let ctl = ControlTimeline::from_fn(linspace(0.0, tmax, 101), |t| 3.0 * (-t / 10.0).exp(), gamma, NormMode::H1)?;
        let cost = CostFunction::new(Squeezing::new(&basis)?);
        let sys = OptimalitySystem::new(model, psi0, ctl, cost, SolverOptions::new(Stepper::Crank, 16))?;
        let opt = Optimizer::new(OptimizerOptions::default())?;
        Ok(Squeezer { basis, sys, opt })
    }

    pub fn cost(&mut self) -> Result<f64, JsError> {
        self.sys.cost().map_err(js)
    }

    /// One BFGS iteration. Returns the new cost.
    pub fn step(&mut self) -> Result<f64, JsError> {
        self.opt.improve(&mut self.sys, Some(1)).map_err(js)?;
        self.cost()
    }

    pub fn times(&self) -> Vec<f64> {
        self.sys.control().times().to_vec()
    }

    pub fn control(&self) -> Vec<f64> {
        self.sys.control().channel(0).to_vec()
    }

    /// Number variance relative to the binomial state at every knot.
    pub fn squeezing(&mut self) -> Result<Vec<f64>, JsError> {
        let jz = self.basis.jz().map_err(js)?;
        let n = self.basis.n() as f64;
        let traj = self.sys.trajectory().map_err(js)?;
        Ok(traj
            .states
            .iter()
            .map(|c| {
                let j1 = jz.expectation(c, c).re;
                let j2: f64 = jz.matvec(c).iter().map(|v| v.norm_sqr()).sum();
                (j2 - j1 * j1) / (n / 4.0)
            })
            .collect())
    }

    /// Final population of each number state `|n, N - n>`.
    pub fn distribution(&mut self) -> Result<Vec<f64>, JsError> {
        let traj = self.sys.trajectory().map_err(js)?;
        Ok(traj.last().iter().map(|c| c.norm_sqr()).collect())
    }
}
