use super::*;
use crate::control::{ControlSample, NormMode};
use crate::fock::{two_mode_hamiltonian, FockBasis, FockModel};
use crate::gp::{double_well, GpModel, Hamiltonian};
use crate::grid::Grid;
use crate::mctdhb::{gram_schmidt, MctdhbModel, MctdhbState};
use crate::ode::{StepOptions, Stepper};
use crate::units::rb87_mass;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rvec(rng: &mut StdRng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn smooth(rng: &mut StdRng, grid: &Grid) -> Vec<Complex64> {
    // random combination of low sine modes, zero at the walls
    let x = grid.coords()[0].to_vec();
    let (a, b) = (x[0], x[x.len() - 1]);
    let coef = rvec(rng, 5);
    x.iter()
        .map(|&xv| {
            let s = (xv - a) / (b - a);
            coef.iter()
                .enumerate()
                .map(|(k, cf)| cf * (std::f64::consts::PI * (k + 1) as f64 * s).sin())
                .sum()
        })
        .collect()
}

fn normalized(grid: &Grid, v: Vec<Complex64>) -> Vec<Complex64> {
    grid.normalize(&v).unwrap()
}

fn gp_model(npts: usize, kappa: f64) -> GpModel {
    let grid = Grid::grid1d(-3.0, 3.0, npts).unwrap();
    let v = double_well(&grid, 60.0, 1.0, 0.0);
    GpModel::new(Hamiltonian::new(grid, rb87_mass(), 4, v).unwrap(), kappa)
}

fn mctdhb_model(npts: usize, kappa: f64, m: usize, n: usize) -> MctdhbModel {
    let grid = Grid::grid1d(-3.0, 3.0, npts).unwrap();
    let v = double_well(&grid, 60.0, 1.0, 0.0);
    MctdhbModel::new(Hamiltonian::new(grid, rb87_mass(), 4, v).unwrap(), kappa, m, n).unwrap()
}

/// Check the vector-Jacobian product against central differences of `deriv`.
fn check_vjp<M: OctModel>(model: &M, y: &M::State, lam: &[f64], a: &M::State, e: &M::State, opts: &StepOptions, tol: f64)
where
    M::State: OctState,
{
    let eps = 1e-6;
    let f = |yy: &M::State, l: &[f64]| model.deriv(yy, &ControlSample::new(0.0, l.to_vec()), opts).unwrap();
    let mut yp = y.clone();
    yp.axpy(eps, e);
    let mut ym = y.clone();
    ym.axpy(-eps, e);
    let mut df = f(&yp, lam);
    df.axpy(-1.0, &f(&ym, lam));
    df.scale(0.5 / eps);
    let direct = model.inner(a, &df);
    let (jta, gl) = model.vjp(y, lam, a, opts).unwrap();
    let adjoint = model.inner(&jta, e);
    assert!(
        (direct - adjoint).abs() <= tol * direct.abs().max(1.0),
        "state vjp: direct {direct} adjoint {adjoint}"
    );
    for ch in 0..lam.len() {
        let h = 1e-5;
        let mut lp = lam.to_vec();
        lp[ch] += h;
        let mut lm = lam.to_vec();
        lm[ch] -= h;
        let mut dl = f(y, &lp);
        dl.axpy(-1.0, &f(y, &lm));
        dl.scale(0.5 / h);
        let direct = model.inner(a, &dl);
        assert!(
            (direct - gl[ch]).abs() <= tol * direct.abs().max(1.0),
            "control vjp: direct {direct} adjoint {}",
            gl[ch]
        );
    }
}

#[test]
fn gp_vjp_matches_finite_differences() {
    let model = gp_model(41, 3.0);
    let g = model.grid().clone();
    let mut rng = StdRng::seed_from_u64(1);
    let y = normalized(&g, smooth(&mut rng, &g));
    let a = smooth(&mut rng, &g);
    let e = smooth(&mut rng, &g);
    check_vjp(&model, &y, &[0.4], &a, &e, &StepOptions::default(), 1e-6);
}

#[test]
fn fock_vjp_matches_finite_differences() {
    let basis = Arc::new(FockBasis::new(6, 2, None).unwrap());
    let mut model = FockModel::new(basis.clone(), two_mode_hamiltonian(&basis, 0.3).unwrap());
    let mut rng = StdRng::seed_from_u64(2);
    let d = basis.dim();
    let y = rvec(&mut rng, d);
    let a = rvec(&mut rng, d);
    let e = rvec(&mut rng, d);
    for ps in [false, true] {
        model.phase_subtract = ps;
        check_vjp(&model, &y, &[1.3], &a, &e, &StepOptions::default(), 1e-6);
    }
}

fn random_mctdhb(model: &MctdhbModel, rng: &mut StdRng) -> MctdhbState {
    let g = model.grid().clone();
    let mut orb: Vec<Vec<Complex64>> = (0..model.m()).map(|_| smooth(rng, &g)).collect();
    gram_schmidt(&g, &mut orb).unwrap();
    let mut num = rvec(rng, model.basis.dim());
    let s = num.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    num.iter_mut().for_each(|v| *v /= s);
    MctdhbState { orb, num }
}

fn random_direction(model: &MctdhbModel, rng: &mut StdRng) -> MctdhbState {
    let g = model.grid().clone();
    MctdhbState {
        orb: (0..model.m()).map(|_| smooth(rng, &g)).collect(),
        num: rvec(rng, model.basis.dim()),
    }
}

#[test]
fn mctdhb_vjp_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(3);
    for (m, n) in [(2, 4), (3, 3)] {
        let mut model = mctdhb_model(31, 1.5, m, n);
        let y = random_mctdhb(&model, &mut rng);
        let a = random_direction(&model, &mut rng);
        let e = random_direction(&model, &mut rng);
        for (proj, ps) in [(true, false), (false, false), (true, true), (false, true)] {
            model.phase_subtract = ps;
            let opts = StepOptions {
                proj,
                ..Default::default()
            };
            check_vjp(&model, &y, &[0.7], &a, &e, &opts, 1e-5);
        }
    }
}

#[test]
fn crank_adjoint_solves_transposed_midpoint_system() {
    let mut rng = StdRng::seed_from_u64(4);
    let model = gp_model(41, 2.0);
    let g = model.grid().clone();
    let ybar = normalized(&g, smooth(&mut rng, &g));
    let rhs = smooth(&mut rng, &g);
    let opts = StepOptions::default();
    let dt = 0.01;
    let r = model.crank_adjoint(&ybar, &[0.3], dt, &rhs, &opts).unwrap();
    let (jtr, _) = model.vjp(&ybar, &[0.3], &r, &opts).unwrap();
    let mut back = r.clone();
    back.axpy(-0.5 * dt, &jtr);
    back.axpy(-1.0, &rhs);
    assert!(g.norm(&back) < 1e-9 * g.norm(&rhs));

    let basis = Arc::new(FockBasis::new(5, 2, None).unwrap());
    let fm = FockModel::new(basis.clone(), two_mode_hamiltonian(&basis, 0.2).unwrap());
    let rhs = rvec(&mut rng, basis.dim());
    let r = fm.crank_adjoint(&rhs, &[0.8], dt, &rhs, &opts).unwrap();
    let (jtr, _) = fm.vjp(&rhs, &[0.8], &r, &opts).unwrap();
    let mut back = r.clone();
    back.axpy(-0.5 * dt, &jtr);
    back.axpy(-1.0, &rhs);
    assert!(crate::linalg::norm2(&back) < 1e-12);
}

fn knots(t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t1 * k as f64 / (n - 1) as f64).collect()
}

fn bump(t: &[f64], ctl: &ControlTimeline) -> ControlTimeline {
    let t1 = t[t.len() - 1];
    let mut v: Vec<f64> = t.iter().map(|&s| (std::f64::consts::PI * s / t1).sin().powi(2) * (1.0 + s / t1)).collect();
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    ctl.with_values(vec![v]).unwrap()
}

/// Central-difference directional derivative versus the adjoint gradient.
fn check_gradient<M: OctModel>(sys: &mut OptimalitySystem<M>, tol: f64)
where
    M::State: OctState,
{
    let t = sys.control().times().to_vec();
    let u = bump(&t, sys.control());
    let g = sys.gradient().unwrap();
    let adjoint = sys.control().inner_control(&u, &g).unwrap();
    let eta = 1e-5;
    let jp = sys.cost_at(&sys.control().axpy(eta, &u).unwrap()).unwrap();
    let jm = sys.cost_at(&sys.control().axpy(-eta, &u).unwrap()).unwrap();
    let direct = (jp - jm) / (2.0 * eta);
    assert!(
        (direct - adjoint).abs() < tol * direct.abs(),
        "direct {direct} adjoint {adjoint}"
    );
    assert_eq!(g.channel(0)[0], 0.0);
    assert_eq!(*g.channel(0).last().unwrap(), 0.0);
}

fn gp_problem(stepper: Stepper, nsub: usize, norm: NormMode) -> OptimalitySystem<GpModel> {
    let model = gp_model(61, 2.0);
    let g = model.grid().clone();
    let (psi0, _) = model.groundstate(&[0.0], &Default::default()).unwrap();
    let ground = crate::gp::GroundOptions {
        mix: Some(0.3),
        ..Default::default()
    };
    let (psid, _) = model.groundstate(&[1.0], &ground).unwrap();
    let t = knots(0.3, 16);
    let ctl = ControlTimeline::from_fn(t, |s| (2.0 * s / 0.3).min(1.0).sqrt(), 1e-3, norm).unwrap();
    let cost = CostFunction::new(Infidelity::on_grid(&g, psid));
    let mut opts = SolverOptions::new(stepper, nsub);
    opts.step.newton_tol = 1e-13;
    OptimalitySystem::new(model, psi0, ctl, cost, opts).unwrap()
}

#[test]
fn gp_gradient_is_exact_for_crank_nicolson() {
    for norm in [NormMode::L2, NormMode::H1] {
        let mut sys = gp_problem(Stepper::Crank, 3, norm);
        check_gradient(&mut sys, 1e-6);
    }
}

#[test]
fn gp_gradient_is_exact_for_runge4() {
    let mut sys = gp_problem(Stepper::Runge4, 12, NormMode::L2);
    check_gradient(&mut sys, 1e-6);
}

#[test]
fn gp_gradient_with_intermediate_costs() {
    let mut sys = gp_problem(Stepper::Crank, 2, NormMode::L2);
    let g = sys.model.grid().clone();
    let psid = sys.psi0.clone();
    let extra = CostFunction::new(IntermediateTrap(Trap::on_grid(&g, psid))).add(CostFunction::new(ControlTarget {
        channel: 0,
        target: 0.5,
        beta: 0.3,
    }));
    sys.cost = sys.cost.clone().add(0.7 * extra);
    check_gradient(&mut sys, 1e-6);
}

#[test]
fn fock_gradient_is_exact() {
    let basis = Arc::new(FockBasis::new(10, 2, None).unwrap());
    let mut model = FockModel::new(basis.clone(), two_mode_hamiltonian(&basis, 0.1).unwrap());
    let psi0 = basis.binomial_state().unwrap();
    let t = knots(4.0, 21);
    let ctl = ControlTimeline::from_fn(t, |s| 3.0 * (-s / 4.0).exp(), 1e-4, NormMode::L2).unwrap();
    let cost = CostFunction::new(Squeezing::new(&basis).unwrap());
    let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl.clone(), cost.clone(), SolverOptions::new(Stepper::Crank, 4)).unwrap();
    check_gradient(&mut sys, 1e-6);
    model.phase_subtract = true;
    let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl.clone(), cost.clone(), SolverOptions::new(Stepper::Runge4, 8)).unwrap();
    check_gradient(&mut sys, 1e-6);
    let mut sys = OptimalitySystem::new(model, psi0, ctl, cost, SolverOptions::new(Stepper::Crank, 4)).unwrap();
    assert!(matches!(sys.gradient(), Err(Error::Unsupported(_))));
}

#[test]
fn mctdhb_gradient_is_exact() {
    let model = mctdhb_model(41, 0.5, 2, 6);
    let g = model.grid().clone();
    let (psi0, _) = model.groundstate(&[0.0], &Default::default()).unwrap();
    let gp = gp_model(41, 0.0);
    let (psid, _) = gp.groundstate(&[1.0], &Default::default()).unwrap();
    let t = knots(0.2, 11);
    let ctl = ControlTimeline::from_fn(t, |s| (2.0 * s / 0.2).min(1.0).sqrt(), 1e-3, NormMode::L2).unwrap();
    let cost = CostFunction::new(MctdhbInfidelity::new(&g, model.basis.clone(), psid));
    for proj in [true, false] {
        let mut opts = SolverOptions::new(Stepper::Runge4, 12);
        opts.step.proj = proj;
        let mut sys = OptimalitySystem::new(model.clone(), psi0.clone(), ctl.clone(), cost.clone(), opts).unwrap();
        check_gradient(&mut sys, 1e-5);
    }
    let mut sub = model.clone();
    sub.phase_subtract = true;
    let mut sys = OptimalitySystem::new(sub, psi0, ctl, cost, SolverOptions::new(Stepper::Runge4, 12)).unwrap();
    check_gradient(&mut sys, 1e-5);
}

#[test]
fn rejects_unsupported_steppers() {
    let sys = |s| {
        let mut p = gp_problem(Stepper::Crank, 1, NormMode::L2);
        p.opts.stepper = s;
        OptimalitySystem::new(p.model, p.psi0, p.control, p.cost, p.opts)
    };
    assert!(sys(Stepper::Rk23).is_err());
    assert!(sys(Stepper::Split).is_err());
}

#[test]
fn infidelity_examples() {
    let g = Grid::grid1d(-3.0, 3.0, 61).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let d = normalized(&g, smooth(&mut rng, &g));
    let cost = CostFunction::new(Infidelity::on_grid(&g, d.clone()));
    assert!(cost.valfin(&d, &[0.0]).unwrap().abs() < 1e-14);
    let p = cost.final_adjoint(&d, &[0.0]).unwrap();
    assert!((g.norm(&p) - 1.0).abs() < 1e-12);
    // the terminal adjoint is i <psid|psi> psid
    assert!(p.iter().zip(&d).all(|(a, b)| (a - c(0.0, 1.0) * b).norm() < 1e-12));
    let rot: Vec<Complex64> = d.iter().map(|v| v * Complex64::from_polar(1.0, 0.83)).collect();
    assert!(cost.valfin(&rot, &[0.0]).unwrap().abs() < 1e-14);
    let mut other = smooth(&mut rng, &g);
    let o = g.inner_unchecked(&d, &other);
    for (x, dv) in other.iter_mut().zip(&d) {
        *x -= o * dv;
    }
    let other = normalized(&g, other);
    assert!((cost.valfin(&other, &[0.0]).unwrap() - 0.5).abs() < 1e-13);
}

#[test]
fn trap_examples() {
    let g = Grid::grid1d(-3.0, 3.0, 61).unwrap();
    let mut rng = StdRng::seed_from_u64(6);
    let d = normalized(&g, smooth(&mut rng, &g));
    let cost = CostFunction::new(Trap::on_grid(&g, d.clone()));
    assert!(cost.valfin(&d, &[0.0]).unwrap().abs() < 1e-15);
    assert!(cost.final_adjoint(&d, &[0.0]).unwrap().iter().all(|v| v.norm() == 0.0));
    let neg: Vec<Complex64> = d.iter().map(|v| -v).collect();
    assert!((cost.valfin(&neg, &[0.0]).unwrap() - 2.0).abs() < 1e-12);
    let psi = normalized(&g, smooth(&mut rng, &g));
    let expect = 1.0 - g.inner_unchecked(&d, &psi).re;
    assert!((cost.valfin(&psi, &[0.0]).unwrap() - expect).abs() < 1e-12);
    // p(T) = -i (psi - psid)
    let p = cost.final_adjoint(&psi, &[0.0]).unwrap();
    assert!(p.iter().zip(psi.iter().zip(&d)).all(|(pv, (a, b))| (pv - c(0.0, -1.0) * (a - b)).norm() < 1e-14));
}

#[test]
fn cost_algebra_is_linear() {
    let g = Grid::grid1d(-3.0, 3.0, 41).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let d1 = normalized(&g, smooth(&mut rng, &g));
    let d2 = normalized(&g, smooth(&mut rng, &g));
    let psi = normalized(&g, smooth(&mut rng, &g));
    let c1 = CostFunction::new(Infidelity::on_grid(&g, d1));
    let c2 = CostFunction::new(Trap::on_grid(&g, d2));
    let sum = 2.5 * c1.clone() + c2.clone();
    let v = sum.valfin(&psi, &[0.0]).unwrap();
    let expect = 2.5 * c1.valfin(&psi, &[0.0]).unwrap() + c2.valfin(&psi, &[0.0]).unwrap();
    assert_eq!(v, expect);
    let p = sum.final_adjoint(&psi, &[0.0]).unwrap();
    let mut q = c1.final_adjoint(&psi, &[0.0]).unwrap();
    q.scale(2.5);
    q.axpy(1.0, &c2.final_adjoint(&psi, &[0.0]).unwrap());
    assert!(p.iter().zip(&q).all(|(a, b)| (a - b).norm() < 1e-15));
}

#[test]
fn squeezing_examples() {
    let basis = FockBasis::new(20, 2, None).unwrap();
    let cost = Squeezing::new(&basis).unwrap();
    let bin = basis.binomial_state().unwrap();
    assert!((cost.valfin(&bin, &[0.0]).unwrap() - 1.0).abs() < 1e-12);
    let mut twin = vec![c(0.0, 0.0); basis.dim()];
    twin[basis.index_of(&[10, 10]).unwrap()] = c(1.0, 0.0);
    assert!(cost.valfin(&twin, &[0.0]).unwrap().abs() < 1e-14);
    assert!(cost.grad_final(&twin, &[0.0]).unwrap().iter().all(|v| v.norm() < 1e-14));
    assert!(Squeezing::new(&FockBasis::new(4, 3, None).unwrap()).is_err());
}

#[test]
fn mctdhb_infidelity_examples() {
    let model = mctdhb_model(41, 0.0, 2, 5);
    let g = model.grid().clone();
    let orb = model.single_particle_orbitals(&[0.0]).unwrap();
    let s = model.condensed_state(orb.clone()).unwrap();
    let cost = MctdhbInfidelity::new(&g, model.basis.clone(), orb[0].clone());
    assert!(cost.valfin(&s, &[0.0]).unwrap().abs() < 1e-12);
    let cost = MctdhbInfidelity::new(&g, model.basis.clone(), orb[1].clone());
    assert!((cost.valfin(&s, &[0.0]).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn penalty_only_consistency() {
    let mut sys = gp_problem(Stepper::Crank, 1, NormMode::H1);
    sys.cost = sys.cost.clone().scaled(0.0);
    let mut ctl = sys.control().clone();
    ctl.gamma = 2.0;
    sys.set_control(ctl);
    let t = sys.control().times().to_vec();
    let u = bump(&t, sys.control());
    let (direct, adjoint) = sys.consistency_check(&u, 1e-7).unwrap();
    assert!((direct - adjoint).abs() < 1e-5 * adjoint.abs());
    let zero = sys.control().zeros_like();
    let (d0, a0) = sys.consistency_check(&zero, 1e-6).unwrap();
    assert_eq!((d0, a0), (0.0, 0.0));
}

#[test]
fn zero_terminal_adjoint_gives_zero_gradient() {
    let model = mctdhb_model(31, 0.5, 2, 4);
    let orb = model.single_particle_orbitals(&[0.0]).unwrap();
    let psi0 = model.condensed_state(orb).unwrap();
    let ctl = ControlTimeline::from_fn(knots(0.05, 6), |s| s, 0.0, NormMode::L2).unwrap();
    let cost = CostFunction::new(OrbitalTrap {
        targets: psi0.orb.clone(),
        weight: model.grid().weight(),
    })
    .scaled(0.0);
    let mut sys = OptimalitySystem::new(model, psi0, ctl, cost, SolverOptions::new(Stepper::Runge4, 4)).unwrap();
    assert!(sys.knot_derivative().unwrap()[0].iter().all(|v| *v == 0.0));
}

#[test]
fn adjoint_pairing_is_conserved() {
    // Global phase invariance makes i psi a solution of the linearized
    // equation, so Re<p|psi> is constant along the discrete adjoint.
    let mut sys = gp_problem(Stepper::Crank, 2, NormMode::L2);
    let g = sys.model.grid().clone();
    let ps = sys.adjoint_states().unwrap();
    let mut rec: Vec<(f64, Vec<Complex64>)> = Vec::new();
    crate::ode::solve_with(
        &sys.model,
        sys.psi0.clone(),
        sys.control().times(),
        sys.control(),
        &sys.opts,
        crate::ode::Hooks {
            record: Some(&mut rec),
            ..Default::default()
        },
        &|s: &Vec<Complex64>| s.len(),
    )
    .unwrap();
    let pair: Vec<f64> = ps.iter().zip(&rec).map(|(p, (_, y))| g.inner_unchecked(p, y).re).collect();
    let spread = pair.iter().map(|v| (v - pair[0]).abs()).fold(0.0, f64::max);
    assert!(spread < 1e-9, "pairing drifts by {spread}");
}

#[test]
fn linear_adjoint_is_reversible() {
    let model = gp_model(61, 0.0);
    let g = model.grid().clone();
    let mut sys = gp_problem(Stepper::Crank, 2, NormMode::L2);
    sys.model = model;
    let ps = sys.adjoint_states().unwrap();
    assert!((g.norm(&ps[0]) - g.norm(ps.last().unwrap())).abs() < 1e-10);
    // the adjoint of the Cayley step is its inverse: propagating p(0)
    // forward with the same steps returns p(T)
    let opts = sys.opts.clone();
    let traj = crate::ode::solve(&sys.model, ps[0].clone(), sys.control().times(), sys.control(), &opts).unwrap();
    let err: Vec<Complex64> = traj.last().iter().zip(ps.last().unwrap()).map(|(a, b)| a - b).collect();
    assert!(g.norm(&err) < 1e-8);
}
