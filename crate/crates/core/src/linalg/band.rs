use super::Field;
use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored row by
/// row: entry `(i, j)` lives at `i * (kl + ku + 1) + (j + kl - i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Field> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![T::zero(); n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), 0, 0);
        m.data.copy_from_slice(d);
        m
    }

    /// Toeplitz band matrix from a centred stencil `[c_{-k}, .., c_0, .., c_k]`;
    /// entries falling outside the matrix are dropped (Dirichlet closure).
    pub fn from_stencil(n: usize, stencil: &[T]) -> Self {
        assert!(stencil.len() % 2 == 1, "stencil length must be odd");
        let k = stencil.len() / 2;
        let mut m = Self::zeros(n, k, k);
        for i in 0..n {
            for (s, &c) in stencil.iter().enumerate() {
                let j = i as isize + s as isize - k as isize;
                if j >= 0 && (j as usize) < n {
                    m.set(i, j as usize, c);
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn lower(&self) -> usize {
        self.kl
    }
    pub fn upper(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            T::zero()
        } else {
            self.data[i * self.width() + j + self.kl - i]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    /// Copy into a matrix with (at least) the given band widths.
    pub fn widen(&self, kl: usize, ku: usize) -> Self {
        let kl = kl.max(self.kl);
        let ku = ku.max(self.ku);
        if kl == self.kl && ku == self.ku {
            return self.clone();
        }
        let mut m = Self::zeros(self.n, kl, ku);
        self.for_each(|i, j, v| m.set(i, j, v));
        m
    }

    /// Visit every stored entry.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, T)) {
        let w = self.width();
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            for j in j0..=j1 {
                f(i, j, self.data[i * w + j + self.kl - i]);
            }
        }
    }

    pub fn map<U: Field>(&self, f: impl Fn(T) -> U) -> BandMatrix<U> {
        BandMatrix {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        self.for_each(|i, j, v| out.add_at(i, j, alpha * v));
        other.for_each(|i, j, v| out.add_at(i, j, beta * v));
        out
    }

    pub fn scaled(&self, alpha: T) -> Self {
        self.map(|v| alpha * v)
    }

    /// Add `d` to the main diagonal.
    pub fn add_diagonal(&mut self, d: &[T]) {
        assert_eq!(d.len(), self.n);
        for (i, &v) in d.iter().enumerate() {
            self.add_at(i, i, v);
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = T::zero();
            for j in j0..=j1 {
                acc += row[j + self.kl - i] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Real band matrix applied to a complex vector.
    pub fn matvec_complex(&self, x: &[num_complex::Complex64]) -> Vec<num_complex::Complex64>
    where
        T: Into<f64>,
    {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        let mut y = vec![num_complex::Complex64::new(0.0, 0.0); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            for j in j0..=j1 {
                let a: f64 = row[j + self.kl - i].into();
                *yi += x[j] * a;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        self.for_each(|i, j, v| t.set(j, i, v));
        t
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        self.for_each(|i, j, v| d[i][j] = v);
        d
    }

    pub fn factor(&self) -> Result<BandLu<T>> {
        BandLu::new(self)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let lu = self.factor()?;
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    }
}

/// LU factorization with partial pivoting of a band matrix. The upper
/// triangle grows to `kl + ku` super-diagonals; `L` is kept in product form.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Field> BandLu<T> {
    pub fn new(a: &BandMatrix<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.kl + a.ku;
        let w = kl + ku + 1;
        let mut data = vec![T::zero(); n * w];
        a.for_each(|i, j, v| data[i * w + j + kl - i] = v);
        let idx = |i: usize, j: usize| i * w + j + kl - i;
        let mut piv = vec![0; n];
        let scale = a.data.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].modulus();
            for i in k + 1..=last_row {
                let m = data[idx(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            if best <= f64::EPSILON * scale * 1e-3 || best == 0.0 {
                return Err(Error::Singular("band LU"));
            }
            if p != k {
                for j in k..=last_col {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = data[idx(k, k)];
            for i in k + 1..=last_row {
                let l = data[idx(i, k)] / pivot;
                data[idx(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = data[idx(k, j)];
                    data[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            data,
            piv,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let w = self.kl + self.ku + 1;
        let idx = |i: usize, j: usize| i * w + j + self.kl - i;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                let l = self.data[idx(i, k)];
                b[i] -= l * bk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + self.ku).min(n - 1) {
                acc -= self.data[idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in k + 1..n {
                let l = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= l * m[k][j];
                }
                x[i] -= l * x[k];
            }
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (x[i] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn stencil_and_matvec() {
        let m = BandMatrix::from_stencil(5, &[1.0, -2.0, 1.0]);
        let y = m.matvec(&[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(y, vec![-1.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(m.transpose(), m);
    }

    #[test]
    fn lu_needs_pivoting() {
        // zero leading diagonal forces a row interchange
        let mut a = BandMatrix::zeros(6, 1, 2);
        let entries = [
            (0, 0, 0.0),
            (0, 1, 2.0),
            (0, 2, 1.0),
            (1, 0, 3.0),
            (1, 1, 1.0),
            (1, 2, -1.0),
            (1, 3, 0.5),
            (2, 1, 1.0),
            (2, 2, 4.0),
            (2, 3, 1.0),
            (3, 2, -2.0),
            (3, 3, 0.0),
            (3, 4, 1.0),
            (3, 5, 2.0),
            (4, 3, 1.0),
            (4, 4, 3.0),
            (4, 5, 1.0),
            (5, 4, 1.0),
            (5, 5, 1.0),
        ];
        for (i, j, v) in entries {
            a.set(i, j, v);
        }
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = a.solve(&b).unwrap();
        let oracle = dense_solve(&a.to_dense(), &b);
        for (u, v) in x.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn complex_solve_residual() {
        let n = 40;
        let mut a = BandMatrix::<Complex64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = Complex64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64);
                a.set(i, j, v);
            }
            a.add_at(i, i, Complex64::new(0.5, 1.0));
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = a.solve(&b).unwrap();
        let r = a.matvec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = BandMatrix::<f64>::zeros(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular(_))));
    }
}
