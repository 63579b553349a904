//! Adjoint pieces of the few-mode number equation.

use super::OctModel;
use crate::error::{Error, Result};
use crate::fock::{cayley_matrix, FockModel};
use crate::linalg::dot;
use crate::ode::StepOptions;
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

impl OctModel for FockModel {
    fn inner(&self, a: &Vec<Complex64>, b: &Vec<Complex64>) -> f64 {
        dot(a, b).re
    }

    // Plain equation: J^T a = i H a. With the energy subtracted,
    // F = -i (H - E) C and E = <C|H|C> adds 2 Re<a, iC> H C.
    fn vjp(
        &self,
        y: &Vec<Complex64>,
        lam: &[f64],
        a: &Vec<Complex64>,
        _opts: &StepOptions,
    ) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let h = self.hamiltonian(lam);
        let ia: Vec<Complex64> = a.iter().map(|v| I * v).collect();
        let mut out: Vec<Complex64> = h.matvec(&ia);
        if self.phase_subtract {
            let hy = h.matvec(y);
            let e = dot(y, &hy).re;
            let aic = -dot(&ia, y).re;
            for ((o, v), hv) in out.iter_mut().zip(&ia).zip(&hy) {
                *o += -e * v + 2.0 * aic * hv;
            }
        }
        let gl = (0..lam.len())
            .map(|c| {
                let dh = self.dhamiltonian(lam, c);
                let dhy = dh.matvec(y);
                let mut g = dot(&ia, &dhy).re;
                if self.phase_subtract {
                    g -= dot(y, &dhy).re * dot(&ia, y).re;
                }
                g
            })
            .collect();
        Ok((out, gl))
    }

    fn crank_adjoint(
        &self,
        _ybar: &Vec<Complex64>,
        lam: &[f64],
        dt: f64,
        rhs: &Vec<Complex64>,
        _opts: &StepOptions,
    ) -> Result<Vec<Complex64>> {
        if self.phase_subtract {
            return Err(Error::Unsupported(
                "Crank-Nicolson adjoint of the phase-subtracted number equation (use runge4)",
            ));
        }
        cayley_matrix(&self.hamiltonian(lam), dt, -1.0).solve(rhs)
    }
}
