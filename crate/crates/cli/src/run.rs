//! Building models from a validated configuration and running them.

use crate::config::{CostKind, ModelKind, PotentialSpec, RunConfig, StateSpec};
use bec_octrl::control::ControlTimeline;
use bec_octrl::error::Error;
use bec_octrl::fock::{husimi_bloch, two_mode_hamiltonian, FockBasis, FockModel};
use bec_octrl::gp::{double_well, harmonic, GpModel, GroundOptions, Hamiltonian};
use bec_octrl::grid::Grid;
use bec_octrl::io::{fmt17, write_map};
use bec_octrl::mctdhb::{MctdhbModel, MctdhbState};
use bec_octrl::oct::{
    ControlTarget, CostFunction, Infidelity, IntermediateTrap, MctdhbInfidelity, OctModel, OctState,
    OptimalitySystem, OrbitalTrap, Squeezing, Trap,
};
use bec_octrl::ode::{solve_with, Dynamics, Hooks};
use bec_octrl::optim::{Optimizer, Status};
use bec_octrl::units::nucleon_mass_in_units;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Failure classes, mapped onto process exit codes.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Solver(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Solver(e.to_string())
    }
}

type Res<T> = Result<T, RunError>;

enum Problem {
    Gp {
        model: GpModel,
        psi0: Vec<Complex64>,
        target: Option<Vec<Complex64>>,
    },
    Mctdhb {
        model: MctdhbModel,
        psi0: MctdhbState,
        /// Condensate orbital of the target (GP ground state with `kappa (n - 1)`).
        target_orbital: Option<Vec<Complex64>>,
        /// MCTDHB ground-state orbitals of the target.
        target_orbitals: Option<Vec<Vec<Complex64>>>,
    },
    Fock {
        model: FockModel,
        psi0: Vec<Complex64>,
        target: Option<Vec<Complex64>>,
    },
}

fn control(cfg: &RunConfig) -> Res<ControlTimeline> {
    let c = &cfg.control;
    Ok(ControlTimeline::from_fn(c.times(), |t| c.value(t), c.gamma, c.norm)?)
}

fn hamiltonian(cfg: &RunConfig) -> Res<Hamiltonian> {
    let g = cfg.grid.as_ref().ok_or_else(|| RunError::Config("`grid`: missing section".into()))?;
    let grid = match g.y {
        None => Grid::grid1d(g.x.0, g.x.1, g.x.2)?,
        Some(y) => Grid::grid2d(g.x.0, g.x.1, g.x.2, y.0, y.1, y.2)?,
    };
    let mass = cfg.model.mass * nucleon_mass_in_units();
    let pot = match cfg.potential.as_ref() {
        Some(PotentialSpec::DoubleWell { v0, sigma, vy }) => double_well(&grid, *v0, *sigma, *vy),
        Some(PotentialSpec::Harmonic { omega }) => harmonic(&grid, mass, *omega),
        None => return Err(RunError::Config("`potential`: missing section".into())),
    };
    Ok(Hamiltonian::new(grid, mass, g.order, pot)?)
}

fn ground_lambda(spec: &StateSpec, default: f64) -> (Vec<f64>, GroundOptions) {
    match spec {
        StateSpec::Ground { lambda, mix } => (
            vec![lambda.unwrap_or(default)],
            GroundOptions {
                mix: *mix,
                ..Default::default()
            },
        ),
        StateSpec::Binomial => (vec![default], GroundOptions::default()),
    }
}

fn build(cfg: &RunConfig, ctl: &ControlTimeline) -> Res<Problem> {
    let first = ctl.first()[0];
    let last = ctl.last()[0];
    let (l0, g0) = ground_lambda(&cfg.initial, first);
    let target = cfg.target.as_ref().map(|t| ground_lambda(t, last));
    let m = &cfg.model;
    Ok(match m.kind {
        ModelKind::Gp => {
            let model = GpModel::new(hamiltonian(cfg)?, m.kappa);
            let (psi0, _) = model.groundstate(&l0, &g0)?;
            let target = match &target {
                Some((l, g)) => Some(model.groundstate(l, g)?.0),
                None => None,
            };
            Problem::Gp { model, psi0, target }
        }
        ModelKind::Mctdhb => {
            let ham = hamiltonian(cfg)?;
            let model = MctdhbModel::new(ham.clone(), m.kappa, m.modes, m.atoms)?;
            let (psi0, _) = model.groundstate(&l0, &g0)?;
            let (mut target_orbital, mut target_orbitals) = (None, None);
            if let Some((l, g)) = &target {
                if cfg.costs.iter().any(|c| c.kind == CostKind::Infidelity) {
                    let gp = GpModel::new(ham, m.kappa * (m.atoms as f64 - 1.0));
                    target_orbital = Some(gp.groundstate(l, g)?.0);
                }
                if cfg.costs.iter().any(|c| c.kind == CostKind::Trap) {
                    target_orbitals = Some(model.groundstate(l, g)?.0.orb);
                }
            }
            Problem::Mctdhb {
                model,
                psi0,
                target_orbital,
                target_orbitals,
            }
        }
        ModelKind::Fock => {
            let basis = Arc::new(FockBasis::new(m.atoms, m.modes, None)?);
            let mut model = FockModel::new(basis.clone(), two_mode_hamiltonian(&basis, m.kappa)?);
            model.phase_subtract = m.phase_subtract;
            let psi0 = match cfg.initial {
                StateSpec::Binomial => basis.binomial_state()?,
                StateSpec::Ground { .. } => model.groundstate(&l0)?.0,
            };
            let target = match (&cfg.target, &target) {
                (Some(StateSpec::Binomial), _) => Some(basis.binomial_state()?),
                (Some(_), Some((l, _))) => Some(model.groundstate(l)?.0),
                _ => None,
            };
            Problem::Fock { model, psi0, target }
        }
    })
}

fn missing_target() -> RunError {
    RunError::Config("`target`: this cost needs a target state".into())
}

/// Weighted sum of the configured cost terms.
fn combine<S: OctState + 'static>(
    cfg: &RunConfig,
    mut make: impl FnMut(&CostKind) -> Res<CostFunction<S>>,
) -> Res<CostFunction<S>> {
    let mut total: Option<CostFunction<S>> = None;
    for c in &cfg.costs {
        let f = make(&c.kind)?.scaled(c.weight);
        total = Some(match total {
            None => f,
            Some(t) => t.add(f),
        });
    }
    total.ok_or_else(|| RunError::Config("`cost`: optimization needs at least one [[cost]] entry".into()))
}

fn control_target(kind: &CostKind) -> Option<ControlTarget> {
    match kind {
        CostKind::ControlTarget { target } => Some(ControlTarget {
            channel: 0,
            target: *target,
            beta: 1.0,
        }),
        _ => None,
    }
}

fn unsupported(kind: &CostKind) -> RunError {
    RunError::Config(format!("`cost`: {kind:?} is not available for this model"))
}

/// Progress line on stderr every `nout` outputs.
fn progress_printer(nout: usize, total: usize) -> impl FnMut(usize, f64) {
    move |i, t| {
        if nout > 0 {
            eprintln!("  output {}/{} at t = {:.6}", i + 1, total, t);
        }
    }
}

fn propagate<D: Dynamics>(
    cfg: &RunConfig,
    model: &D,
    psi0: D::State,
    ctl: &ControlTimeline,
) -> Res<Vec<D::State>> {
    let mut progress = progress_printer(cfg.solver.nout, cfg.output.tout.len());
    let hooks = Hooks {
        progress: Some(&mut progress),
        ..Default::default()
    };
    Ok(solve_with(model, psi0, &cfg.output.tout, ctl, &cfg.solver, hooks, &|s: &D::State| s.clone())?.states)
}

fn coord_names(grid: &Grid) -> Vec<&'static str> {
    if grid.coords().len() == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

fn write_number_map(path: &Path, basis: &FockBasis, tout: &[f64], nums: &[Vec<Complex64>]) -> Res<()> {
    let occ: Vec<Vec<f64>> = (0..basis.m())
        .map(|k| basis.states().iter().map(|s| s[k] as f64).collect())
        .collect();
    let names: Vec<String> = (0..basis.m()).map(|k| format!("n{}", k + 1)).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let coords: Vec<&[f64]> = occ.iter().map(|v| v.as_slice()).collect();
    let cols: Vec<Vec<f64>> = nums.iter().map(|c| c.iter().map(|a| a.norm()).collect()).collect();
    write_map(path, &name_refs, &coords, tout, &cols)?;
    Ok(())
}

/// Propagate with `ctl`, write the maps and return a textual summary.
fn write_trajectory(cfg: &RunConfig, problem: &Problem, ctl: &ControlTimeline, out: &Path) -> Res<String> {
    let tout = &cfg.output.tout;
    let lam_end = ctl.eval(tout[tout.len() - 1])?.values;
    let mut s = String::new();
    match problem {
        Problem::Gp { model, psi0, .. } => {
            let states = propagate(cfg, model, psi0.clone(), ctl)?;
            let grid = model.grid();
            let cols: Vec<Vec<f64>> = states.iter().map(|p| model.density(p)).collect();
            write_map(&out.join("density.csv"), &coord_names(grid), &grid.coords(), tout, &cols)?;
            let last = &states[states.len() - 1];
            let _ = writeln!(s, "final norm: {}", fmt17(grid.norm(last)));
            let _ = writeln!(s, "final energy: {}", fmt17(model.energy(last, &lam_end)));
        }
        Problem::Mctdhb { model, psi0, .. } => {
            let states = propagate(cfg, model, psi0.clone(), ctl)?;
            let grid = model.grid();
            let names = coord_names(grid);
            let coords = grid.coords();
            let cols = states.iter().map(|st| model.density(st)).collect::<Result<Vec<_>, _>>()?;
            write_map(&out.join("density.csv"), &names, &coords, tout, &cols)?;
            for k in 0..model.m() {
                let cols: Vec<Vec<f64>> = states.iter().map(|st| st.orb[k].iter().map(|v| v.norm()).collect()).collect();
                write_map(&out.join(format!("orbital{}.csv", k + 1)), &names, &coords, tout, &cols)?;
            }
            let nums: Vec<Vec<Complex64>> = states.iter().map(|st| st.num.clone()).collect();
            write_number_map(&out.join("number.csv"), &model.basis, tout, &nums)?;
            let last = &states[states.len() - 1];
            let dm = model.density_matrices(&last.num)?;
            let m = model.m();
            let trace: f64 = (0..m).map(|i| dm.rho[i * m + i].re).sum();
            let _ = writeln!(s, "final trace(rho): {}", fmt17(trace));
            let _ = writeln!(s, "final orthonormality error: {:e}", model.orthonormality_error(&last.orb));
            let _ = writeln!(s, "final energy: {}", fmt17(model.energy(last, &lam_end)?));
        }
        Problem::Fock { model, psi0, .. } => {
            let states = propagate(cfg, model, psi0.clone(), ctl)?;
            write_number_map(&out.join("number.csv"), &model.basis, tout, &states)?;
            let last = &states[states.len() - 1];
            if let Some(nsph) = cfg.output.husimi {
                husimi_bloch(&model.basis, last, nsph)?.write_csv(&out.join("husimi.csv"))?;
            }
            let norm = bec_octrl::linalg::norm2(last);
            let _ = writeln!(s, "final norm: {}", fmt17(norm));
            let _ = writeln!(s, "final energy: {}", fmt17(model.energy(last, &lam_end)));
            let dj = model.delta_jz(last)?;
            let binomial = (model.basis.n() as f64).sqrt() / 2.0;
            let _ = writeln!(s, "final delta Jz: {} ({} of binomial)", fmt17(dj), fmt17(dj / binomial));
        }
    }
    Ok(s)
}

fn ensure_dir(out: &Path) -> Res<()> {
    std::fs::create_dir_all(out).map_err(|e| RunError::Solver(format!("cannot create {}: {e}", out.display())))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Res<String> {
    ensure_dir(out)?;
    let ctl = control(cfg)?;
    let problem = build(cfg, &ctl)?;
    ctl.write_csv(&out.join("control.csv"))?;
    write_trajectory(cfg, &problem, &ctl, out)
}

/// Result of an optimization run.
pub struct OptimizeOutcome {
    pub summary: String,
    pub status: Status,
}

fn run_oct<M: OctModel>(
    cfg: &RunConfig,
    sys: &mut OptimalitySystem<M>,
    out: &Path,
    check: bool,
    iters: Option<usize>,
    summary: &mut String,
) -> Res<Status>
where
    M::State: OctState,
{
    if check {
        let c = &cfg.check;
        let dir = ControlTimeline::from_fn(
            sys.control().times().to_vec(),
            |t| {
                let vars = std::collections::HashMap::from([("t", t), ("T", cfg.control.tmax), ("t0", cfg.control.t0)]);
                c.direction.eval(&vars).unwrap_or(f64::NAN)
            },
            cfg.control.gamma,
            cfg.control.norm,
        )?;
        // the direction must vanish at the fixed endpoints
        let n = dir.len();
        let mut v = dir.channel(0).to_vec();
        v[0] = 0.0;
        v[n - 1] = 0.0;
        let dir = dir.with_values(vec![v])?;
        let (direct, adjoint) = sys.consistency_check(&dir, c.eta)?;
        let gap = (direct - adjoint).abs() / direct.abs().max(f64::MIN_POSITIVE);
        let report = format!(
            "eta: {}\ndirect: {}\nadjoint: {}\nrelative gap: {:e}\n",
            fmt17(c.eta),
            fmt17(direct),
            fmt17(adjoint),
            gap
        );
        std::fs::write(out.join("check.txt"), &report).map_err(|e| RunError::Solver(e.to_string()))?;
        summary.push_str(&report);
    }
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let status = opt.improve(sys, Some(iters.unwrap_or(cfg.optimizer.maxiter)));
    // write what we have even if the run failed part-way
    opt.trace.write_jsonl(&out.join("trace.jsonl"))?;
    sys.control().write_csv(&out.join("control.csv"))?;
    let status = status?;
    for r in &opt.trace.records {
        eprintln!(
            "it={:3}   f={:e}   ||g||={:e}   sig={:.3}",
            r.it, r.f, r.gnorm, r.sig
        );
    }
    summary.push_str(&opt.trace.summary());
    let _ = writeln!(summary, "status: {status:?}");
    Ok(status)
}

pub fn optimize(cfg: &RunConfig, out: &Path, check: bool, iters: Option<usize>) -> Res<OptimizeOutcome> {
    cfg.validate_optimize().map_err(|e| RunError::Config(e.0))?;
    ensure_dir(out)?;
    let ctl = control(cfg)?;
    let problem = build(cfg, &ctl)?;
    ctl.write_csv(&out.join("control_initial.csv"))?;
    let mut summary = String::new();
    let opts = cfg.solver.clone();
    let (status, best) = match &problem {
        Problem::Gp { model, psi0, target } => {
            let grid = model.grid().clone();
            let cost = combine(cfg, |k| -> Res<CostFunction<Vec<Complex64>>> {
                if let Some(c) = control_target(k) {
                    return Ok(CostFunction::new(c));
                }
                let psid = target.clone().ok_or_else(missing_target)?;
                Ok(match k {
                    CostKind::Infidelity => CostFunction::new(Infidelity::on_grid(&grid, psid)),
                    CostKind::Trap => CostFunction::new(Trap::on_grid(&grid, psid)),
                    CostKind::IntermediateTrap => CostFunction::new(IntermediateTrap(Trap::on_grid(&grid, psid))),
                    other => return Err(unsupported(other)),
                })
            })?;
            let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl, cost, opts)?;
            let st = run_oct(cfg, &mut sys, out, check, iters, &mut summary)?;
            (st, sys.control().clone())
        }
        Problem::Mctdhb {
            model,
            psi0,
            target_orbital,
            target_orbitals,
        } => {
            let grid = model.grid().clone();
            let cost = combine(cfg, |k| -> Res<CostFunction<MctdhbState>> {
                if let Some(c) = control_target(k) {
                    return Ok(CostFunction::new(c));
                }
                Ok(match k {
                    CostKind::Infidelity => CostFunction::new(MctdhbInfidelity::new(
                        &grid,
                        model.basis.clone(),
                        target_orbital.clone().ok_or_else(missing_target)?,
                    )),
                    CostKind::Trap => CostFunction::new(OrbitalTrap {
                        targets: target_orbitals.clone().ok_or_else(missing_target)?,
                        weight: grid.weight(),
                    }),
                    other => return Err(unsupported(other)),
                })
            })?;
            let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl, cost, opts)?;
            let st = run_oct(cfg, &mut sys, out, check, iters, &mut summary)?;
            (st, sys.control().clone())
        }
        Problem::Fock { model, psi0, target } => {
            let basis = model.basis.clone();
            let cost = combine(cfg, |k| -> Res<CostFunction<Vec<Complex64>>> {
                if let Some(c) = control_target(k) {
                    return Ok(CostFunction::new(c));
                }
                Ok(match k {
                    CostKind::Squeezing => CostFunction::new(Squeezing::new(&basis)?),
                    CostKind::Infidelity => CostFunction::new(Infidelity::fock(target.clone().ok_or_else(missing_target)?)),
                    other => return Err(unsupported(other)),
                })
            })?;
            let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl, cost, opts)?;
            let st = run_oct(cfg, &mut sys, out, check, iters, &mut summary)?;
            (st, sys.control().clone())
        }
    };
    summary.push_str(&write_trajectory(cfg, &problem, &best, out)?);
    Ok(OptimizeOutcome { summary, status })
}
