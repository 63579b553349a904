//! Adjoint pieces of the Gross-Pitaevskii equation.

use super::OctModel;
use crate::error::Result;
use crate::gp::GpModel;
use crate::linalg::{BandMatrix, ConjLinearSystem};
use crate::ode::StepOptions;
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

impl OctModel for GpModel {
    fn inner(&self, a: &Vec<Complex64>, b: &Vec<Complex64>) -> f64 {
        self.grid().inner_unchecked(a, b).re
    }

    // With g = i a: J^T a = H g + 2 kappa |psi|^2 g + kappa psi^2 g*, and the
    // control sensitivity is Re<g|dV psi>.
    fn vjp(
        &self,
        y: &Vec<Complex64>,
        lam: &[f64],
        a: &Vec<Complex64>,
        _opts: &StepOptions,
    ) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let g: Vec<Complex64> = a.iter().map(|v| I * v).collect();
        let mut out = self.ham.apply(lam, &g);
        if self.kappa != 0.0 {
            for ((o, gv), p) in out.iter_mut().zip(&g).zip(y) {
                *o += self.kappa * (2.0 * p.norm_sqr() * gv + p * p * gv.conj());
            }
        }
        let w = self.grid().weight();
        let gl = (0..lam.len())
            .map(|c| {
                let dv = self.ham.dpotential(lam, c);
                w * g.iter().zip(y).zip(&dv).map(|((gv, p), d)| (gv.conj() * p).re * d).sum::<f64>()
            })
            .collect();
        Ok((out, gl))
    }

    fn crank_adjoint(
        &self,
        ybar: &Vec<Complex64>,
        lam: &[f64],
        dt: f64,
        rhs: &Vec<Complex64>,
        _opts: &StepOptions,
    ) -> Result<Vec<Complex64>> {
        let half = Complex64::new(0.0, -0.5 * dt);
        let mut a = self.ham.matrix(lam).map(|v| half * v);
        let diag: Vec<Complex64> = ybar
            .iter()
            .map(|p| 1.0 + half * (2.0 * self.kappa * p.norm_sqr()))
            .collect();
        a.add_diagonal(&diag);
        if self.kappa == 0.0 {
            return a.solve(rhs);
        }
        let b = BandMatrix::from_diagonal(&ybar.iter().map(|p| -half * self.kappa * p * p).collect::<Vec<_>>());
        Ok(ConjLinearSystem::new(&a, Some(&b), &[])?.solve(rhs))
    }
}
