//! MCTDHB(m): self-consistent orbitals coupled to an atom-number amplitude
//! vector over the m-mode Fock basis.

use crate::control::ControlSample;
use crate::error::{invalid, Error, Result};
use crate::fock::{phase_subtracted_crank, FockBasis};
use crate::gp::{GroundInfo, GroundOptions, Hamiltonian};
use crate::grid::Grid;
use crate::linalg::{lanczos_lowest, BandMatrix, ConjLinearSystem, DenseMatrix, LowRankTerm, SparseMatrix};
use crate::ode::{Dynamics, OdeState, StepOptions};
use num_complex::Complex64;
use std::sync::Arc;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Orbitals `phi_i(x)` and number amplitudes `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MctdhbState {
    pub orb: Vec<Vec<Complex64>>,
    pub num: Vec<Complex64>,
}

impl OdeState for MctdhbState {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (o, xo) in self.orb.iter_mut().zip(&x.orb) {
            o.axpy(a, xo);
        }
        self.num.axpy(a, &x.num);
    }
    fn scale(&mut self, a: f64) {
        self.orb.iter_mut().for_each(|o| o.scale(a));
        self.num.scale(a);
    }
    fn error_ratio(&self, y_new: &Self, err: &Self, atol: f64, rtol: f64) -> f64 {
        let mut r = self.num.error_ratio(&y_new.num, &err.num, atol, rtol);
        for ((o, n), e) in self.orb.iter().zip(&y_new.orb).zip(&err.orb) {
            r = r.max(o.error_ratio(n, e, atol, rtol));
        }
        r
    }
    fn is_finite(&self) -> bool {
        self.num.is_finite() && self.orb.iter().all(|o| o.is_finite())
    }
}

/// One- and two-body density matrices and `r = rho^-1 rho2`, all stored
/// row-major (`rho[i * m + j]`, `rho2[((i * m + j) * m + k) * m + l]`).
#[derive(Debug, Clone)]
pub struct DensityMatrices {
    pub m: usize,
    pub rho: Vec<Complex64>,
    pub rho2: Vec<Complex64>,
    pub rinv: Vec<Complex64>,
    pub r: Vec<Complex64>,
}

/// Default relative regularization of `rho` before inversion.
pub const RHO_REGULARIZATION: f64 = 1e-8;

/// Density matrices of `num`. `reg` is the relative shift `eps` in
/// `rho + eps trace(rho) / m`; zero disables regularization.
pub fn density_matrices(basis: &FockBasis, num: &[Complex64], reg: f64) -> Result<DensityMatrices> {
    let m = basis.m();
    if num.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: num.len(),
        });
    }
    let mut rho = vec![ZERO; m * m];
    for i in 0..m {
        for j in 0..m {
            rho[i * m + j] = basis.one_body(i, j).expectation(num, num);
        }
    }
    let m4 = m * m * m * m;
    let mut rho2 = vec![ZERO; m4];
    for (q, v) in rho2.iter_mut().enumerate() {
        let (i, j, k, l) = (q / (m * m * m), (q / (m * m)) % m, (q / m) % m, q % m);
        *v = basis.two_body(i, j, k, l).expectation(num, num);
    }
    let trace: f64 = (0..m).map(|i| rho[i * m + i].re).sum();
    let eps = reg * trace / m as f64;
    let reg_rho = DenseMatrix::from_fn(m, m, |i, j| rho[i * m + j] + if i == j { c(eps) } else { ZERO });
    let inv = reg_rho
        .inverse()
        .map_err(|_| Error::Singular("one-body density matrix"))?;
    let rinv: Vec<Complex64> = (0..m * m).map(|q| inv[(q / m, q % m)]).collect();
    let mut r = vec![ZERO; m4];
    let m3 = m * m * m;
    for i in 0..m {
        for a in 0..m {
            let f = rinv[i * m + a];
            if f == ZERO {
                continue;
            }
            for jkl in 0..m3 {
                r[i * m3 + jkl] += f * rho2[a * m3 + jkl];
            }
        }
    }
    if r.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular("one-body density matrix"));
    }
    Ok(DensityMatrices {
        m,
        rho,
        rho2,
        rinv,
        r,
    })
}

/// Modified Gram-Schmidt in the grid inner product, in orbital order.
pub fn gram_schmidt(grid: &Grid, orb: &mut [Vec<Complex64>]) -> Result<()> {
    for i in 0..orb.len() {
        for j in 0..i {
            let (done, rest) = orb.split_at_mut(i);
            let p = grid.inner_unchecked(&done[j], &rest[0]);
            for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                *a -= p * b;
            }
        }
        let nrm = grid.norm(&orb[i]);
        if !(nrm > 1e-300) || !nrm.is_finite() {
            return Err(Error::Singular("linearly dependent orbitals"));
        }
        orb[i].iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(())
}

/// Orbital integrals for a given orbital set.
pub(crate) struct Integrals {
    /// `h phi_i`
    pub hphi: Vec<Vec<Complex64>>,
    /// `<phi_i|h|phi_j>`
    pub h: Vec<Complex64>,
    /// `kappa int phi_i^* phi_j^* phi_k phi_l`
    pub w: Vec<Complex64>,
}

/// MCTDHB model for `n` atoms in `m` orbitals.
#[derive(Clone)]
pub struct MctdhbModel {
    pub ham: Hamiltonian,
    pub kappa: f64,
    pub basis: Arc<FockBasis>,
    /// Relative regularization of `rho` (see [`density_matrices`]).
    pub reg: f64,
    /// Propagate `C` with `H - <C|H|C>` in the equations of motion. This
    /// removes the global phase rotation at the total energy, which grows
    /// with the atom number and otherwise limits explicit steps. Crank-Nicolson
    /// always uses the subtracted form.
    pub phase_subtract: bool,
}

impl std::fmt::Debug for MctdhbModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MctdhbModel")
            .field("kappa", &self.kappa)
            .field("m", &self.m())
            .field("n", &self.n())
            .field("phase_subtract", &self.phase_subtract)
            .finish()
    }
}

impl MctdhbModel {
    pub fn new(ham: Hamiltonian, kappa: f64, m: usize, n: usize) -> Result<Self> {
        Ok(Self {
            ham,
            kappa,
            basis: Arc::new(FockBasis::new(n, m, None)?),
            reg: RHO_REGULARIZATION,
            phase_subtract: false,
        })
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }
    pub fn n(&self) -> usize {
        self.basis.n()
    }
    pub fn grid(&self) -> &Grid {
        self.ham.grid()
    }

    /// Check shapes of a state.
    pub fn check(&self, s: &MctdhbState) -> Result<()> {
        if s.orb.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: s.orb.len(),
            });
        }
        let npts = self.grid().len();
        if let Some(o) = s.orb.iter().find(|o| o.len() != npts) {
            return Err(Error::DimensionMismatch {
                expected: npts,
                got: o.len(),
            });
        }
        if s.num.len() != self.basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.dim(),
                got: s.num.len(),
            });
        }
        Ok(())
    }

    /// All atoms in the first of the given orbitals.
    pub fn condensed_state(&self, orb: Vec<Vec<Complex64>>) -> Result<MctdhbState> {
        let mut occ = vec![0; self.m()];
        occ[0] = self.n();
        let mut num = vec![ZERO; self.basis.dim()];
        num[self.basis.index_of(&occ).expect("condensed state in basis")] = c(1.0);
        let s = MctdhbState { orb, num };
        self.check(&s)?;
        Ok(s)
    }

    pub fn density_matrices(&self, num: &[Complex64]) -> Result<DensityMatrices> {
        density_matrices(&self.basis, num, self.reg)
    }

    pub(crate) fn integrals(&self, orb: &[Vec<Complex64>], lam: &[f64]) -> Integrals {
        let m = self.m();
        let g = self.grid();
        let w = g.weight();
        let hmat = self.ham.matrix(lam);
        let hphi: Vec<Vec<Complex64>> = orb.iter().map(|o| hmat.matvec_complex(o)).collect();
        let mut h = vec![ZERO; m * m];
        for i in 0..m {
            for j in 0..m {
                h[i * m + j] = g.inner_unchecked(&orb[i], &hphi[j]);
            }
        }
        let mut wt = vec![ZERO; m * m * m * m];
        if self.kappa != 0.0 {
            for i in 0..m {
                for j in 0..m {
                    let pij: Vec<Complex64> = orb[i].iter().zip(&orb[j]).map(|(a, b)| (a * b).conj()).collect();
                    for k in 0..m {
                        for l in 0..m {
                            let s: Complex64 = (0..pij.len()).map(|x| pij[x] * orb[k][x] * orb[l][x]).sum();
                            wt[((i * m + j) * m + k) * m + l] = s * (self.kappa * w);
                        }
                    }
                }
            }
        }
        Integrals { hphi, h, w: wt }
    }

    /// Number Hamiltonian `sum h_ij a_i^dag a_j + 1/2 sum W_ijkl a_i^dag a_j^dag a_k a_l`.
    pub fn number_hamiltonian(&self, orb: &[Vec<Complex64>], lam: &[f64]) -> Result<SparseMatrix> {
        let ints = self.integrals(orb, lam);
        self.number_hamiltonian_from(&ints)
    }

    pub(crate) fn number_hamiltonian_from(&self, ints: &Integrals) -> Result<SparseMatrix> {
        let one = self.basis.build_one(&ints.h)?;
        if self.kappa == 0.0 {
            return Ok(one);
        }
        let half: Vec<Complex64> = ints.w.iter().map(|v| 0.5 * v).collect();
        let two = self.basis.build_two(&half)?;
        Ok(one.lincomb(c(1.0), &two, c(1.0)))
    }

    /// `f_i = h phi_i + kappa sum_jkl r_ijkl phi_j^* phi_k phi_l`.
    pub(crate) fn orbital_forces(&self, orb: &[Vec<Complex64>], hphi: &[Vec<Complex64>], r: &[Complex64]) -> Vec<Vec<Complex64>> {
        let m = self.m();
        let mut f: Vec<Vec<Complex64>> = hphi.to_vec();
        if self.kappa == 0.0 {
            return f;
        }
        let npts = orb[0].len();
        for (i, fi) in f.iter_mut().enumerate() {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let coef = r[((i * m + j) * m + k) * m + l] * self.kappa;
                        if coef == ZERO {
                            continue;
                        }
                        for x in 0..npts {
                            fi[x] += coef * orb[j][x].conj() * orb[k][x] * orb[l][x];
                        }
                    }
                }
            }
        }
        f
    }

    /// `P v = v - sum_k phi_k <phi_k|v>`.
    pub fn project(&self, orb: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid();
        let mut out = v.to_vec();
        for o in orb {
            let p = g.inner_unchecked(o, v);
            for (a, b) in out.iter_mut().zip(o) {
                *a -= p * b;
            }
        }
        out
    }

    /// Per-atom density `sum_ij rho_ij phi_i^* phi_j / n`, normalized to one.
    pub fn density(&self, s: &MctdhbState) -> Result<Vec<f64>> {
        let d = density_matrices(&self.basis, &s.num, 0.0).or_else(|_| self.density_matrices(&s.num))?;
        let m = self.m();
        let n = self.n() as f64;
        Ok((0..s.orb[0].len())
            .map(|x| {
                let mut v = ZERO;
                for i in 0..m {
                    for j in 0..m {
                        v += d.rho[i * m + j] * s.orb[i][x].conj() * s.orb[j][x];
                    }
                }
                v.re / n
            })
            .collect())
    }

    /// Total energy `<C|H(phi)|C>`.
    pub fn energy(&self, s: &MctdhbState, lam: &[f64]) -> Result<f64> {
        Ok(self.number_hamiltonian(&s.orb, lam)?.expectation(&s.num, &s.num).re)
    }

    /// Largest deviation of the orbital overlap matrix from the identity.
    pub fn orthonormality_error(&self, orb: &[Vec<Complex64>]) -> f64 {
        let g = self.grid();
        let mut e: f64 = 0.0;
        for i in 0..orb.len() {
            for j in 0..orb.len() {
                let o = g.inner_unchecked(&orb[i], &orb[j]);
                let d = if i == j { o - 1.0 } else { o };
                e = e.max(d.norm());
            }
        }
        e
    }

    /// Right-hand side of the orbital and number equations.
    pub fn time_derivative(&self, s: &MctdhbState, lam: &[f64], proj: bool) -> Result<MctdhbState> {
        self.check(s)?;
        let ints = self.integrals(&s.orb, lam);
        let hn = self.number_hamiltonian_from(&ints)?;
        let dm = self.density_matrices(&s.num)?;
        let f = self.orbital_forces(&s.orb, &ints.hphi, &dm.r);
        let orb: Vec<Vec<Complex64>> = f
            .iter()
            .map(|fi| {
                let pf = if proj { self.project(&s.orb, fi) } else { fi.clone() };
                pf.into_iter().map(|v| -I * v).collect()
            })
            .collect();
        let mut hc = hn.matvec(&s.num);
        if self.phase_subtract {
            let e = crate::linalg::dot(&s.num, &hc).re;
            for (h, c) in hc.iter_mut().zip(&s.num) {
                *h -= e * c;
            }
        }
        let num = hc.into_iter().map(|v| -I * v).collect();
        let out = MctdhbState { orb, num };
        if !out.is_finite() {
            return Err(Error::NonFinite("MCTDHB derivative"));
        }
        Ok(out)
    }

    /// Crank-Nicolson step. Number and orbital equations are solved
    /// alternately at the midpoint until both Newton corrections drop below
    /// `newton_tol`; the number part uses the energy-subtracted form. `proj`
    /// toggles the terms from varying the projector's own orbitals in the
    /// orbital Newton matrix; the converged step does not depend on it.
    pub fn crank_step(&self, s: &MctdhbState, lam: &[f64], dt: f64, opts: &StepOptions) -> Result<MctdhbState> {
        self.check(s)?;
        if !(dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        let g = self.grid();
        let hmat = self.ham.matrix(lam);
        let mut orb_next = s.orb.clone();
        let mut num_next = s.num.clone();
        let mut last = f64::INFINITY;
        let inner_opts = StepOptions {
            newton_tol: 0.1 * opts.newton_tol,
            ..opts.clone()
        };
        for _ in 0..opts.max_newton {
            let bar = midpoint(&orb_next, &s.orb);
            let ints = self.integrals(&bar, lam);
            let hn = self.number_hamiltonian_from(&ints)?;
            let cn = phase_subtracted_crank(&hn, &s.num, dt, &inner_opts)?;
            let dc = cn
                .iter()
                .zip(&num_next)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            num_next = cn;
            let cbar: Vec<Complex64> = num_next.iter().zip(&s.num).map(|(a, b)| 0.5 * (a + b)).collect();
            let dm = self.density_matrices(&cbar)?;
            let delta = self.orbital_newton(&s.orb, &orb_next, &bar, &hmat, &ints, &dm.r, dt, opts.proj)?;
            let mut dphi = 0.0;
            for (o, d) in orb_next.iter_mut().zip(&delta) {
                for (a, b) in o.iter_mut().zip(d) {
                    *a += b;
                }
                dphi += g.norm(d).powi(2);
            }
            last = dc.max(dphi.sqrt());
            if last < opts.newton_tol {
                gram_schmidt(g, &mut orb_next)?;
                let nrm = num_next.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                num_next.iter_mut().for_each(|v| *v /= nrm);
                return Ok(MctdhbState {
                    orb: orb_next,
                    num: num_next,
                });
            }
        }
        Err(Error::NoConvergence {
            what: "MCTDHB Crank-Nicolson iteration",
            iterations: opts.max_newton,
            residual: last,
        })
    }

    /// One Newton correction for the implicit-midpoint orbital equations
    /// `i (phi+ - phi) / dt = P(bar) f(bar)` with `r` frozen.
    #[allow(clippy::too_many_arguments)]
    fn orbital_newton(
        &self,
        orb: &[Vec<Complex64>],
        next: &[Vec<Complex64>],
        bar: &[Vec<Complex64>],
        hmat: &BandMatrix<f64>,
        ints: &Integrals,
        r: &[Complex64],
        dt: f64,
        proj: bool,
    ) -> Result<Vec<Vec<Complex64>>> {
        let m = self.m();
        let g = self.grid();
        let w = g.weight();
        let npts = orb[0].len();
        let kappa = self.kappa;
        let f = self.orbital_forces(bar, &ints.hphi, r);
        // c[k][i] = <bar_k|f_i>
        let cki: Vec<Vec<Complex64>> = (0..m)
            .map(|k| (0..m).map(|i| g.inner_unchecked(&bar[k], &f[i])).collect())
            .collect();
        let half = Complex64::new(0.0, 0.5 * dt);
        let slot = |x: usize, i: usize| x * m + i;
        let mut rhs = vec![ZERO; m * npts];
        for i in 0..m {
            for x in 0..npts {
                let mut pf = f[i][x];
                for k in 0..m {
                    pf -= bar[k][x] * cki[k][i];
                }
                rhs[slot(x, i)] = -(next[i][x] - orb[i][x]) - I * dt * pf;
            }
        }
        // pointwise coupling matrices Q_il and S_ij
        let mut q = vec![vec![ZERO; m * m]; npts];
        let mut sm = vec![vec![ZERO; m * m]; npts];
        if kappa != 0.0 {
            for x in 0..npts {
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            for l in 0..m {
                                let rv = r[((i * m + j) * m + k) * m + l] * kappa;
                                q[x][i * m + l] += 2.0 * rv * bar[j][x].conj() * bar[k][x];
                                sm[x][i * m + j] += rv * bar[k][x] * bar[l][x];
                            }
                        }
                    }
                }
            }
        }
        let bw = hmat.lower().max(hmat.upper());
        let kb = bw * m + (m - 1);
        let mut a = BandMatrix::<Complex64>::zeros(m * npts, kb, kb);
        let mut b = BandMatrix::<Complex64>::zeros(m * npts, m - 1, m - 1);
        hmat.for_each(|x, y, v| {
            for i in 0..m {
                a.add_at(slot(x, i), slot(y, i), half * v);
            }
        });
        for x in 0..npts {
            for i in 0..m {
                a.add_at(slot(x, i), slot(x, i), c(1.0));
                for l in 0..m {
                    let mut v = q[x][i * m + l];
                    if proj {
                        v -= cki[l][i];
                    }

                    if v != ZERO {
                        a.add_at(slot(x, i), slot(x, l), half * v);
                    }
                    let s = sm[x][i * m + l];
                    if s != ZERO {
                        b.add_at(slot(x, i), slot(x, l), half * s);
                    }
                }
            }
        }
        // -sum_k phi_k <phi_k|Df_i> always; with `proj` also the variation
        // of the projector orbitals, -sum_k phi_k <dphi_k|f_i>
        let mut terms = Vec::new();
        for i in 0..m {
            for k in 0..m {
                let mut u = vec![ZERO; m * npts];
                let mut vn = vec![ZERO; m * npts];
                let mut vc = vec![ZERO; m * npts];
                for x in 0..npts {
                    u[slot(x, i)] = -half * bar[k][x];
                    let cb = bar[k][x].conj() * w;
                    vn[slot(x, i)] += ints.hphi[k][x].conj() * w;
                    if proj {
                        vc[slot(x, k)] += f[i][x] * w;
                    }
                    for l in 0..m {
                        vn[slot(x, l)] += cb * q[x][i * m + l];
                        vc[slot(x, l)] += cb * sm[x][i * m + l];
                    }
                }
                terms.push(LowRankTerm {
                    u: u.clone(),
                    v: vn,
                    conj: false,
                });
                terms.push(LowRankTerm { u, v: vc, conj: true });
            }
        }
        let sol = ConjLinearSystem::new(&a, Some(&b), &terms)?.solve(&rhs);
        Ok((0..m)
            .map(|i| (0..npts).map(|x| sol[slot(x, i)]).collect())
            .collect())
    }

    /// Lowest `m` eigenvectors of the single-particle Hamiltonian by
    /// successive deflation.
    pub fn single_particle_orbitals(&self, lam: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let g = self.grid();
        let h = self.ham.matrix(lam);
        let npts = g.len();
        let scale = h.to_dense().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())) * 4.0 + 1.0;
        let mut found: Vec<Vec<Complex64>> = Vec::new();
        for _ in 0..self.m() {
            let apply = |x: &[Complex64]| {
                let mut y = h.matvec_complex(x);
                for f in &found {
                    let p: Complex64 = f.iter().zip(x).map(|(a, b)| a.conj() * b).sum();
                    for (yi, fi) in y.iter_mut().zip(f) {
                        *yi += scale * p * fi;
                    }
                }
                y
            };
            let lz = lanczos_lowest(&apply, npts, None, npts, 1e-13)?;
            found.push(crate::gp::fix_phase(lz.vector));
        }
        for f in found.iter_mut() {
            let nrm = g.norm(f);
            f.iter_mut().for_each(|v| *v /= nrm);
        }
        Ok(found)
    }

    /// Ground state by preconditioned imaginary-time relaxation of the
    /// orbitals with Gram-Schmidt re-orthonormalization, alternated with the
    /// lowest eigenvector of the number Hamiltonian. `mix` under-relaxes the
    /// number vector.
    pub fn groundstate(&self, lam: &[f64], opts: &GroundOptions) -> Result<(MctdhbState, GroundInfo)> {
        let g = self.grid();
        let mix = opts.mix.unwrap_or(1.0);
        if !(mix > 0.0 && mix <= 1.0) {
            return Err(invalid("mix must lie in (0, 1]"));
        }
        let mut orb = self.single_particle_orbitals(lam)?;
        let hmat = self.ham.matrix(lam);
        let dim = self.basis.dim();
        let lowest = |orb: &[Vec<Complex64>], start: Option<&[Complex64]>| -> Result<(Vec<Complex64>, f64)> {
            let hn = self.number_hamiltonian(orb, lam)?;
            let apply = |x: &[Complex64]| hn.matvec(x);
            let lz = lanczos_lowest(&apply, dim, start, dim.min(400), 1e-12)?;
            Ok((crate::gp::fix_phase(lz.vector), lz.value))
        };
        let (mut num, mut e) = lowest(&orb, None)?;
        let e0 = {
            let hn = self.ham.matrix(lam);
            let apply = |x: &[Complex64]| hn.matvec_complex(x);
            lanczos_lowest(&apply, g.len(), Some(&orb[0]), g.len(), 1e-12)?.value
        };
        let mut tau = 0.5;
        let mut residual = f64::INFINITY;
        for it in 1..=opts.maxiter {
            let ints = self.integrals(&orb, lam);
            let dm = self.density_matrices(&num)?;
            let f = self.orbital_forces(&orb, &ints.hphi, &dm.r);
            let pf: Vec<Vec<Complex64>> = f.iter().map(|fi| self.project(&orb, fi)).collect();
            residual = pf
                .iter()
                .enumerate()
                .map(|(i, p)| dm.rho[i * self.m() + i].re * g.norm(p))
                .fold(0.0, f64::max)
                / self.n() as f64;
            if self.kappa == 0.0 && it == 1 {
                return Ok((
                    MctdhbState { orb, num },
                    GroundInfo {
                        energy: e,
                        mu: e / self.n() as f64,
                        iterations: 1,
                        residual,
                    },
                ));
            }
            loop {
                let mut pre = hmat.map(|v| c(tau * v));
                pre.add_diagonal(&vec![c(1.0 - tau * e0); g.len()]);
                let lu = pre.factor()?;
                let mut trial: Vec<Vec<Complex64>> = orb
                    .iter()
                    .zip(&pf)
                    .map(|(o, p)| {
                        let step = lu.solve(p);
                        o.iter().zip(&step).map(|(a, b)| a - tau * b).collect()
                    })
                    .collect();
                gram_schmidt(g, &mut trial)?;
                let (cn, en) = lowest(&trial, Some(&num))?;
                if en <= e + 1e-13 * e.abs().max(1.0) || tau < 1e-8 {
                    let mut mixed: Vec<Complex64> = num.iter().zip(&cn).map(|(a, b)| (1.0 - mix) * a + mix * b).collect();
                    let nrm = mixed.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                    mixed.iter_mut().for_each(|v| *v /= nrm);
                    let de = (e - en).abs();
                    orb = trial;
                    num = if mix == 1.0 { cn } else { mixed };
                    e = en;
                    tau = (tau * 1.25).min(50.0);
                    if de < opts.tol * e.abs().max(1.0) {
                        return Ok((
                            MctdhbState { orb, num },
                            GroundInfo {
                                energy: e,
                                mu: e / self.n() as f64,
                                iterations: it,
                                residual,
                            },
                        ));
                    }
                    break;
                }
                tau *= 0.5;
            }
        }
        Err(Error::NoConvergence {
            what: "MCTDHB ground state",
            iterations: opts.maxiter,
            residual,
        })
    }
}

fn midpoint(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect())
        .collect()
}

impl Dynamics for MctdhbModel {
    type State = MctdhbState;

    fn deriv(&self, y: &MctdhbState, lam: &ControlSample, opts: &StepOptions) -> Result<MctdhbState> {
        self.time_derivative(y, &lam.values, opts.proj)
    }

    fn crank(&self, y: &MctdhbState, lam: &ControlSample, dt: f64, opts: &StepOptions) -> Result<MctdhbState> {
        self.crank_step(y, &lam.values, dt, opts)
    }
}
