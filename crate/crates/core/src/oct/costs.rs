//! Concrete cost terms.

use super::CostTerm;
use crate::error::{invalid, Result};
use crate::fock::FockBasis;
use crate::grid::Grid;
use crate::linalg::SparseMatrix;
use crate::mctdhb::{density_matrices, MctdhbState, RHO_REGULARIZATION};
use num_complex::Complex64;
use std::sync::Arc;

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("{what}: state length {a} does not match target length {b}")));
    }
    Ok(())
}

fn winner(w: f64, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum::<Complex64>() * w
}

/// `1/2 (1 - |<psid|psi(T)>|^2)`. The weight is the quadrature weight of the
/// state's inner product (grid spacing for wavefunctions, one for Fock
/// amplitudes).
#[derive(Debug, Clone)]
pub struct Infidelity {
    pub psid: Vec<Complex64>,
    pub weight: f64,
}

impl Infidelity {
    pub fn on_grid(grid: &Grid, psid: Vec<Complex64>) -> Self {
        Self {
            psid,
            weight: grid.weight(),
        }
    }

    pub fn fock(psid: Vec<Complex64>) -> Self {
        Self { psid, weight: 1.0 }
    }

    pub fn overlap(&self, psi: &[Complex64]) -> Complex64 {
        winner(self.weight, &self.psid, psi)
    }
}

impl CostTerm<Vec<Complex64>> for Infidelity {
    fn valfin(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<f64> {
        check_len("infidelity", y.len(), self.psid.len())?;
        Ok(0.5 * (1.0 - self.overlap(y).norm_sqr()))
    }

    fn grad_final(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<Vec<Complex64>> {
        check_len("infidelity", y.len(), self.psid.len())?;
        let o = self.overlap(y);
        Ok(self.psid.iter().map(|d| -o * d).collect())
    }
}

/// `1/2 ||psi(T) - psid||^2`, sensitive to the global phase.
#[derive(Debug, Clone)]
pub struct Trap {
    pub psid: Vec<Complex64>,
    pub weight: f64,
}

impl Trap {
    pub fn on_grid(grid: &Grid, psid: Vec<Complex64>) -> Self {
        Self {
            psid,
            weight: grid.weight(),
        }
    }
}

impl CostTerm<Vec<Complex64>> for Trap {
    fn valfin(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<f64> {
        check_len("trap", y.len(), self.psid.len())?;
        Ok(0.5 * self.weight * y.iter().zip(&self.psid).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
    }

    fn grad_final(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<Vec<Complex64>> {
        check_len("trap", y.len(), self.psid.len())?;
        Ok(y.iter().zip(&self.psid).map(|(a, b)| a - b).collect())
    }
}

/// Intermediate cost `1/2 int ||psi(t) - psid||^2 dt`.
#[derive(Debug, Clone)]
pub struct IntermediateTrap(pub Trap);

impl CostTerm<Vec<Complex64>> for IntermediateTrap {
    fn valfin(&self, _y: &Vec<Complex64>, _lam: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    fn grad_final(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<Vec<Complex64>> {
        Ok(vec![Complex64::new(0.0, 0.0); y.len()])
    }
    fn has_intermediate(&self) -> bool {
        true
    }
    fn valint(&self, _t: f64, y: &Vec<Complex64>, lam: &[f64]) -> Result<f64> {
        self.0.valfin(y, lam)
    }
    fn grad_inter(&self, _t: f64, y: &Vec<Complex64>, lam: &[f64]) -> Result<Option<Vec<Complex64>>> {
        self.0.grad_final(y, lam).map(Some)
    }
}

/// Intermediate cost `beta/2 int (lambda_c(t) - target)^2 dt` on one control
/// channel; works with any state type.
#[derive(Debug, Clone)]
pub struct ControlTarget {
    pub channel: usize,
    pub target: f64,
    pub beta: f64,
}

impl<S: super::OctState> CostTerm<S> for ControlTarget {
    fn valfin(&self, _y: &S, _lam: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    fn grad_final(&self, y: &S, _lam: &[f64]) -> Result<S> {
        Ok(y.zeros_like())
    }
    fn has_intermediate(&self) -> bool {
        true
    }
    fn valint(&self, _t: f64, _y: &S, lam: &[f64]) -> Result<f64> {
        let v = lam.get(self.channel).ok_or_else(|| invalid("control target channel out of range"))?;
        Ok(0.5 * self.beta * (v - self.target).powi(2))
    }
    fn deriv(&self, _t: f64, _y: &S, lam: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut d = vec![0.0; lam.len()];
        let v = lam.get(self.channel).ok_or_else(|| invalid("control target channel out of range"))?;
        d[self.channel] = self.beta * (v - self.target);
        Ok(Some(d))
    }
}

/// Number squeezing `(<Jz^2> - <Jz>^2) / (n/4)` of a two-mode Fock state;
/// one for the binomial state, zero for twin Fock.
#[derive(Debug, Clone)]
pub struct Squeezing {
    jz: SparseMatrix,
    norm: f64,
}

impl Squeezing {
    pub fn new(basis: &FockBasis) -> Result<Self> {
        if basis.m() != 2 {
            return Err(invalid(format!("squeezing cost needs a two-mode basis, got m = {}", basis.m())));
        }
        Ok(Self {
            jz: basis.jz()?,
            norm: basis.n() as f64 / 4.0,
        })
    }
}

impl CostTerm<Vec<Complex64>> for Squeezing {
    fn valfin(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<f64> {
        check_len("squeezing", y.len(), self.jz.rows())?;
        let jc = self.jz.matvec(y);
        let m1 = crate::linalg::dot(y, &jc).re;
        let m2 = crate::linalg::dot(&jc, &jc).re;
        Ok((m2 - m1 * m1) / self.norm)
    }

    fn grad_final(&self, y: &Vec<Complex64>, _lam: &[f64]) -> Result<Vec<Complex64>> {
        check_len("squeezing", y.len(), self.jz.rows())?;
        let jc = self.jz.matvec(y);
        let j2c = self.jz.matvec(&jc);
        let m1 = crate::linalg::dot(y, &jc).re;
        let s = 2.0 / self.norm;
        Ok(j2c.iter().zip(&jc).map(|(a, b)| (a - 2.0 * m1 * b) * s).collect())
    }
}

/// Depletion of a target orbital in an MCTDHB state,
/// `1/2 (1 - <psid|rho|psid> / n)` with `rho` the one-body density matrix.
#[derive(Debug, Clone)]
pub struct MctdhbInfidelity {
    pub psid: Vec<Complex64>,
    pub weight: f64,
    basis: Arc<FockBasis>,
}

impl MctdhbInfidelity {
    pub fn new(grid: &Grid, basis: Arc<FockBasis>, psid: Vec<Complex64>) -> Self {
        Self {
            psid,
            weight: grid.weight(),
            basis,
        }
    }

    fn overlaps(&self, s: &MctdhbState) -> Result<Vec<Complex64>> {
        s.orb
            .iter()
            .map(|o| {
                check_len("mctdhb infidelity", o.len(), self.psid.len())?;
                Ok(winner(self.weight, o, &self.psid))
            })
            .collect()
    }

    fn fraction(&self, s: &MctdhbState) -> Result<(Vec<Complex64>, Vec<Complex64>, f64)> {
        let o = self.overlaps(s)?;
        let dm = density_matrices(&self.basis, &s.num, RHO_REGULARIZATION)?;
        let m = self.basis.m();
        let mut f = Complex64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                f += dm.rho[i * m + j] * o[i] * o[j].conj();
            }
        }
        Ok((o, dm.rho, f.re / self.basis.n() as f64))
    }
}

impl CostTerm<MctdhbState> for MctdhbInfidelity {
    fn valfin(&self, y: &MctdhbState, _lam: &[f64]) -> Result<f64> {
        Ok(0.5 * (1.0 - self.fraction(y)?.2))
    }

    fn grad_final(&self, y: &MctdhbState, _lam: &[f64]) -> Result<MctdhbState> {
        let (o, rho, _) = self.fraction(y)?;
        let m = self.basis.m();
        let n = self.basis.n() as f64;
        let mut coeff = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for j in 0..m {
                coeff[i * m + j] = o[i] * o[j].conj();
            }
        }
        let x = self.basis.build_one(&coeff)?;
        let num: Vec<Complex64> = x.matvec(&y.num).iter().map(|v| -v / n).collect();
        let orb = (0..m)
            .map(|j| {
                let c: Complex64 = (0..m).map(|i| rho[i * m + j] * o[i]).sum::<Complex64>().conj() * (-1.0 / n);
                self.psid.iter().map(|d| c * d).collect()
            })
            .collect();
        Ok(MctdhbState { orb, num })
    }
}

/// Orbital trapping `1/2 sum_i ||phi_i(T) - phi_i^d||^2` for MCTDHB.
#[derive(Debug, Clone)]
pub struct OrbitalTrap {
    pub targets: Vec<Vec<Complex64>>,
    pub weight: f64,
}

impl CostTerm<MctdhbState> for OrbitalTrap {
    fn valfin(&self, y: &MctdhbState, _lam: &[f64]) -> Result<f64> {
        check_len("orbital trap", y.orb.len(), self.targets.len())?;
        let mut v = 0.0;
        for (o, d) in y.orb.iter().zip(&self.targets) {
            check_len("orbital trap", o.len(), d.len())?;
            v += o.iter().zip(d).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
        Ok(0.5 * self.weight * v)
    }

    fn grad_final(&self, y: &MctdhbState, _lam: &[f64]) -> Result<MctdhbState> {
        check_len("orbital trap", y.orb.len(), self.targets.len())?;
        Ok(MctdhbState {
            orb: y
                .orb
                .iter()
                .zip(&self.targets)
                .map(|(o, d)| o.iter().zip(d).map(|(a, b)| a - b).collect())
                .collect(),
            num: vec![Complex64::new(0.0, 0.0); y.num.len()],
        })
    }
}
