use super::{DenseLu, DenseMatrix, Field};
use crate::error::Result;

/// Sherman-Morrison-Woodbury factor for `(A + U V^T)` given a solver for `A`.
/// Columns of `U` and rows of `V^T` are stored as vectors; the product
/// `V^T y` is the plain bilinear sum (no conjugation).
pub struct SmwFactor<T> {
    ainv_u: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    cap: Option<DenseLu<T>>,
}

impl<T: Field> SmwFactor<T> {
    pub fn new(solve_a: &dyn Fn(&[T]) -> Vec<T>, u: &[Vec<T>], v: &[Vec<T>]) -> Result<Self> {
        assert_eq!(u.len(), v.len());
        let r = u.len();
        let ainv_u: Vec<Vec<T>> = u.iter().map(|c| solve_a(c)).collect();
        let cap = if r == 0 {
            None
        } else {
            let m = DenseMatrix::from_fn(r, r, |i, j| {
                let d = bilinear(&v[i], &ainv_u[j]);
                if i == j {
                    T::one() + d
                } else {
                    d
                }
            });
            Some(m.lu()?)
        };
        Ok(Self {
            ainv_u,
            v: v.to_vec(),
            cap,
        })
    }

    /// Finish a solve given `y = A^{-1} b`.
    pub fn correct(&self, mut y: Vec<T>) -> Vec<T> {
        let Some(cap) = &self.cap else { return y };
        let w: Vec<T> = self.v.iter().map(|vi| bilinear(vi, &y)).collect();
        let z = cap.solve(&w);
        for (col, &zj) in self.ainv_u.iter().zip(&z) {
            for (yk, &ck) in y.iter_mut().zip(col) {
                *yk -= ck * zj;
            }
        }
        y
    }
}

fn bilinear<T: Field>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solve `(A + U V^T) x = b` where `solve_a` applies `A^{-1}`.
pub fn smw_solve<T: Field>(
    solve_a: &dyn Fn(&[T]) -> Vec<T>,
    u: &[Vec<T>],
    v: &[Vec<T>],
    b: &[T],
) -> Result<Vec<T>> {
    let f = SmwFactor::new(solve_a, u, v)?;
    Ok(f.correct(solve_a(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BandMatrix;

    #[test]
    fn matches_dense_solve() {
        let n = 12;
        let a = BandMatrix::from_stencil(n, &[-1.0, 4.0, -1.0]);
        let u: Vec<Vec<f64>> = (0..3)
            .map(|r| (0..n).map(|k| ((k + r) as f64 * 0.7).sin()).collect())
            .collect();
        let v: Vec<Vec<f64>> = (0..3)
            .map(|r| (0..n).map(|k| ((k * (r + 1)) as f64 * 0.3).cos() * 0.2).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let lu = a.factor().unwrap();
        let x = smw_solve(&|y: &[f64]| lu.solve(y), &u, &v, &b).unwrap();
        let full = DenseMatrix::from_fn(n, n, |i, j| {
            a.get(i, j) + (0..3).map(|r| u[r][i] * v[r][j]).sum::<f64>()
        });
        let xo = full.solve(&b).unwrap();
        for (p, q) in x.iter().zip(&xo) {
            assert!((p - q).abs() < 1e-11);
        }
    }
}
