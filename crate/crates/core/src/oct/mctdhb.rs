//! Adjoint pieces of the MCTDHB equations of motion.
//!
//! The vector-Jacobian product below differentiates the orbital equation
//! `i phi_i' = P f_i` (or `f_i` without the projector) and the number
//! equation `i C' = H(phi) C`, including the dependence of
//! `r = (rho + eps)^-1 rho2` on `C`. With phase subtraction the number
//! equation reads `i C' = (H - E) C`, `E = <C|H|C>`. It is equivalent to the continuous
//! adjoint equations but exact for the discretized forward propagation.

use super::OctModel;
use crate::error::{Error, Result};
use crate::mctdhb::{MctdhbModel, MctdhbState};
use crate::ode::StepOptions;
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl OctModel for MctdhbModel {
    fn inner(&self, a: &MctdhbState, b: &MctdhbState) -> f64 {
        let g = self.grid();
        let orb: f64 = a.orb.iter().zip(&b.orb).map(|(x, y)| g.inner_unchecked(x, y).re).sum();
        orb + crate::linalg::dot(&a.num, &b.num).re
    }

    fn vjp(
        &self,
        y: &MctdhbState,
        lam: &[f64],
        a: &MctdhbState,
        opts: &StepOptions,
    ) -> Result<(MctdhbState, Vec<f64>)> {
        self.check(y)?;
        self.check(a)?;
        let m = self.m();
        let m3 = m * m * m;
        let npts = y.orb[0].len();
        let g = self.grid();
        let w = g.weight();
        let kappa = self.kappa;
        let basis = &self.basis;
        let phi = &y.orb;
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * m + j) * m + k) * m + l;

        let ints = self.integrals(phi, lam);
        let hn = self.number_hamiltonian_from(&ints)?;
        let dm = self.density_matrices(&y.num)?;
        let f = self.orbital_forces(phi, &ints.hphi, &dm.r);
        let hmat = self.ham.matrix(lam);
        let dv: Vec<Vec<f64>> = (0..lam.len()).map(|c| self.ham.dpotential(lam, c)).collect();
        let mut gl = vec![0.0; lam.len()];

        // number equation
        let mut gnum: Vec<Complex64> = hn.matvec(&a.num).into_iter().map(|v| I * v).collect();
        // dE enters like a change of H paired with -i s C, s = Re<a|iC>
        let beta_sub;
        let beta = if self.phase_subtract {
            let hc = hn.matvec(&y.num);
            let e = crate::linalg::dot(&y.num, &hc).re;
            let s = (I * crate::linalg::dot(&a.num, &y.num)).re;
            for ((o, b), h) in gnum.iter_mut().zip(&a.num).zip(&hc) {
                *o += -I * e * b + 2.0 * s * h;
            }
            beta_sub = a.num.iter().zip(&y.num).map(|(b, c)| b - I * s * c).collect::<Vec<_>>();
            &beta_sub
        } else {
            &a.num
        };
        let mut gorb: Vec<Vec<Complex64>> = vec![vec![ZERO; npts]; m];
        let mut sigma = vec![ZERO; m * m];
        for i in 0..m {
            for j in 0..m {
                sigma[i * m + j] = basis.one_body(i, j).expectation(beta, &y.num);
            }
        }
        for i in 0..m {
            for j in 0..m {
                let s = -I * (sigma[i * m + j] - sigma[j * m + i].conj());
                for (o, hp) in gorb[i].iter_mut().zip(&ints.hphi[j]) {
                    *o += s * hp;
                }
            }
        }
        for (c, d) in dv.iter().enumerate() {
            let mut acc = ZERO;
            for i in 0..m {
                for j in 0..m {
                    let dh: Complex64 = (0..npts).map(|x| phi[i][x].conj() * d[x] * phi[j][x]).sum::<Complex64>() * w;
                    acc += sigma[i * m + j] * dh;
                }
            }
            gl[c] += (-I * acc).re;
        }
        if kappa != 0.0 {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        for l in 0..m {
                            let s2 = basis.two_body(i, j, k, l).expectation(beta, &y.num);
                            if s2 == ZERO {
                                continue;
                            }
                            let ci = -I * kappa * s2;
                            let cl = I * kappa * s2.conj();
                            for x in 0..npts {
                                gorb[i][x] += ci * phi[j][x].conj() * phi[k][x] * phi[l][x];
                                gorb[l][x] += cl * phi[i][x] * phi[j][x] * phi[k][x].conj();
                            }
                        }
                    }
                }
            }
        }

        // orbital equations
        let gamma: Vec<Vec<Complex64>> = a.orb.iter().map(|o| o.iter().map(|v| I * v).collect()).collect();
        let eta: Vec<Vec<Complex64>> = if opts.proj {
            gamma.iter().map(|gm| self.project(phi, gm)).collect()
        } else {
            gamma.clone()
        };
        for i in 0..m {
            for (o, v) in gorb[i].iter_mut().zip(hmat.matvec_complex(&eta[i])) {
                *o += v;
            }
            for (c, d) in dv.iter().enumerate() {
                gl[c] += w * (0..npts).map(|x| (eta[i][x].conj() * phi[i][x]).re * d[x]).sum::<f64>();
            }
        }
        if opts.proj {
            for i in 0..m {
                for k in 0..m {
                    let cki = g.inner_unchecked(&phi[k], &f[i]);
                    let dik = g.inner_unchecked(&gamma[i], &phi[k]);
                    for x in 0..npts {
                        gorb[k][x] -= cki.conj() * gamma[i][x] + dik * f[i][x];
                    }
                }
            }
        }
        if kappa != 0.0 {
            let r = &dm.r;
            let mut t = vec![ZERO; m * m3];
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        for l in 0..m {
                            let rv = r[idx(i, j, k, l)];
                            let mut tv = ZERO;
                            for x in 0..npts {
                                let e = eta[i][x];
                                gorb[l][x] += 2.0 * kappa * rv.conj() * phi[j][x] * phi[k][x].conj() * e;
                                gorb[j][x] += kappa * rv * phi[k][x] * phi[l][x] * e.conj();
                                tv += e.conj() * phi[j][x].conj() * phi[k][x] * phi[l][x];
                            }
                            t[idx(i, j, k, l)] = tv * (kappa * w);
                        }
                    }
                }
            }
            // r = R rho2 with R = (rho + eps)^-1 and eps = reg tr(rho) / m
            let mut u = vec![ZERO; m * m3];
            for a_ in 0..m {
                for jkl in 0..m3 {
                    u[a_ * m3 + jkl] = (0..m).map(|i| t[i * m3 + jkl] * dm.rinv[i * m + a_]).sum();
                }
            }
            let mut yv = vec![ZERO; m * m];
            for a_ in 0..m {
                for b in 0..m {
                    yv[a_ * m + b] = (0..m3).map(|jkl| u[a_ * m3 + jkl] * r[b * m3 + jkl]).sum();
                }
            }
            let tr: Complex64 = (0..m).map(|q| yv[q * m + q]).sum();
            let shift = tr * (self.reg / m as f64);
            for q in 0..m {
                yv[q * m + q] += shift;
            }
            let neg_y: Vec<Complex64> = yv.iter().map(|v| -v).collect();
            let op = basis.build_two(&u)?.lincomb(Complex64::new(1.0, 0.0), &basis.build_one(&neg_y)?, Complex64::new(1.0, 0.0));
            let a1 = op.matvec(&y.num);
            let a2 = op.adjoint().matvec(&y.num);
            for ((o, p), q) in gnum.iter_mut().zip(&a1).zip(&a2) {
                *o += p + q;
            }
        }
        let out = MctdhbState { orb: gorb, num: gnum };
        if !crate::ode::OdeState::is_finite(&out) {
            return Err(Error::NonFinite("MCTDHB adjoint"));
        }
        Ok((out, gl))
    }
}
