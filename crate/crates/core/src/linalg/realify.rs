use super::{BandLu, BandMatrix, SmwFactor};
use crate::error::Result;
use num_complex::Complex64;

/// Rank-one term `u (v^T x)` or, with `conj`, `u (v^T x*)`.
#[derive(Debug, Clone)]
pub struct LowRankTerm {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub conj: bool,
}

/// Complex system `A x + B x* + sum_r u_r (v_r^T x or x*) = b`, which is
/// R-linear but not C-linear whenever `B` or a conjugated term is present.
/// Such systems are solved in an interleaved `(re, im)` real embedding.
pub struct ConjLinearSystem {
    n: usize,
    kind: Kind,
}

enum Kind {
    Complex {
        lu: BandLu<Complex64>,
        smw: SmwFactor<Complex64>,
    },
    Real {
        lu: BandLu<f64>,
        smw: SmwFactor<f64>,
    },
}

impl ConjLinearSystem {
    pub fn new(
        a: &BandMatrix<Complex64>,
        b: Option<&BandMatrix<Complex64>>,
        terms: &[LowRankTerm],
    ) -> Result<Self> {
        let n = a.n();
        let needs_real = b.is_some() || terms.iter().any(|t| t.conj);
        let kind = if !needs_real {
            let lu = a.factor()?;
            let u: Vec<_> = terms.iter().map(|t| t.u.clone()).collect();
            let v: Vec<_> = terms.iter().map(|t| t.v.clone()).collect();
            let smw = SmwFactor::new(&|y: &[Complex64]| lu.solve(y), &u, &v)?;
            Kind::Complex { lu, smw }
        } else {
            let kl = a.lower().max(b.map_or(0, |b| b.lower()));
            let ku = a.upper().max(b.map_or(0, |b| b.upper()));
            let mut r = BandMatrix::<f64>::zeros(2 * n, 2 * kl + 1, 2 * ku + 1);
            a.for_each(|i, j, v| {
                r.add_at(2 * i, 2 * j, v.re);
                r.add_at(2 * i, 2 * j + 1, -v.im);
                r.add_at(2 * i + 1, 2 * j, v.im);
                r.add_at(2 * i + 1, 2 * j + 1, v.re);
            });
            if let Some(b) = b {
                b.for_each(|i, j, v| {
                    r.add_at(2 * i, 2 * j, v.re);
                    r.add_at(2 * i, 2 * j + 1, v.im);
                    r.add_at(2 * i + 1, 2 * j, v.im);
                    r.add_at(2 * i + 1, 2 * j + 1, -v.re);
                });
            }
            let lu = r.factor()?;
            let mut us = Vec::with_capacity(2 * terms.len());
            let mut vs = Vec::with_capacity(2 * terms.len());
            for t in terms {
                let col_re: Vec<f64> = t.u.iter().flat_map(|c| [c.re, c.im]).collect();
                let col_im: Vec<f64> = t.u.iter().flat_map(|c| [-c.im, c.re]).collect();
                let (row_re, row_im): (Vec<f64>, Vec<f64>) = if t.conj {
                    (
                        t.v.iter().flat_map(|c| [c.re, c.im]).collect(),
                        t.v.iter().flat_map(|c| [c.im, -c.re]).collect(),
                    )
                } else {
                    (
                        t.v.iter().flat_map(|c| [c.re, -c.im]).collect(),
                        t.v.iter().flat_map(|c| [c.im, c.re]).collect(),
                    )
                };
                us.push(col_re);
                vs.push(row_re);
                us.push(col_im);
                vs.push(row_im);
            }
            let smw = SmwFactor::new(&|y: &[f64]| lu.solve(y), &us, &vs)?;
            Kind::Real { lu, smw }
        };
        Ok(Self { n, kind })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(rhs.len(), self.n);
        match &self.kind {
            Kind::Complex { lu, smw } => smw.correct(lu.solve(rhs)),
            Kind::Real { lu, smw } => {
                let b: Vec<f64> = rhs.iter().flat_map(|c| [c.re, c.im]).collect();
                let x = smw.correct(lu.solve(&b));
                x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
            }
        }
    }

    /// Apply the operator (for residual checks).
    pub fn apply(
        a: &BandMatrix<Complex64>,
        b: Option<&BandMatrix<Complex64>>,
        terms: &[LowRankTerm],
        x: &[Complex64],
    ) -> Vec<Complex64> {
        let mut y = a.matvec(x);
        if let Some(b) = b {
            let xc: Vec<Complex64> = x.iter().map(|c| c.conj()).collect();
            for (yi, bi) in y.iter_mut().zip(b.matvec(&xc)) {
                *yi += bi;
            }
        }
        for t in terms {
            let s: Complex64 = t
                .v
                .iter()
                .zip(x)
                .map(|(v, x)| if t.conj { v * x.conj() } else { v * x })
                .sum();
            for (yi, ui) in y.iter_mut().zip(&t.u) {
                *yi += ui * s;
            }
        }
        y
    }
}
