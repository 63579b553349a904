use crate::error::{Error, Result};
use num_complex::Complex64;

/// Eigen-decomposition of a real symmetric tridiagonal matrix with diagonal
/// `d` and off-diagonal `e` (length `n - 1`) by implicit QL iteration.
/// Returns ascending eigenvalues and the eigenvectors as columns `z[k][i]`
/// (component `k` of vector `i`).
pub fn symmetric_tridiagonal_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = d.len();
    assert!(n == 0 || e.len() + 1 == n);
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    what: "tridiagonal QL",
                    iterations: iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = z
        .iter()
        .map(|row| order.iter().map(|&i| row[i]).collect())
        .collect();
    Ok((vals, vecs))
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Lowest eigenpair of a Hermitian operator by Lanczos with full
/// reorthogonalization. The returned vector has unit Euclidean norm.
pub fn lanczos_lowest(
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    n: usize,
    start: Option<&[Complex64]>,
    max_krylov: usize,
    tol: f64,
) -> Result<LanczosResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let mut q0: Vec<Complex64> = match start {
        Some(s) if s.iter().any(|c| c.norm() > 0.0) => s.to_vec(),
        _ => (0..n)
            .map(|k| Complex64::new(1.0 + 0.1 * ((k * 7919) % 13) as f64, 0.05 * ((k * 31) % 7) as f64))
            .collect(),
    };
    normalize(&mut q0);
    let kmax = max_krylov.min(n).max(1);
    let mut basis: Vec<Vec<Complex64>> = vec![q0];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = None;
    for k in 0..kmax {
        let mut w = apply(&basis[k]);
        let a = dotc(&basis[k], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dotc(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let (vals, vecs) = symmetric_tridiagonal_eigen(&alpha, &beta)?;
        let s_last = vecs[k][0];
        let res = (b * s_last).abs();
        let scale = vals[0].abs().max(1.0);
        best = Some((vals[0], vecs.iter().map(|r| r[0]).collect::<Vec<f64>>(), res));
        if res <= tol * scale || k + 1 == kmax || b <= 1e-14 * scale {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|c| *c /= b);
        basis.push(w);
    }
    let (value, y, residual) = best.unwrap();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (q, &yk) in basis.iter().zip(&y) {
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi += qi * yk;
        }
    }
    normalize(&mut v);
    Ok(LanczosResult {
        value,
        vector: v,
        iterations: y.len(),
        residual,
    })
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(v: &mut [Complex64]) {
    let s = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= s);
}
