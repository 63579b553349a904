//! Uniform 1D and 2D meshes with banded finite-difference operators
//! (hard-wall closure), spectral kinetic multipliers and Riemann-sum
//! quadrature.

use crate::error::{invalid, Error, Result};
use crate::linalg::BandMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Finite-difference coefficient sets for a given order, unscaled by `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencils {
    /// Laplacian stencil, divide by `h^2`.
    pub lap: Vec<f64>,
    /// Gradient stencil, divide by `h`.
    pub grad: Vec<f64>,
}

pub fn fd_stencils(order: usize) -> Result<Stencils> {
    match order {
        2 => Ok(Stencils {
            lap: vec![1.0, -2.0, 1.0],
            grad: vec![-0.5, 0.0, 0.5],
        }),
        4 => Ok(Stencils {
            lap: [-1.0, 16.0, -30.0, 16.0, -1.0].iter().map(|c| c / 12.0).collect(),
            grad: [1.0, -8.0, 0.0, 8.0, -1.0].iter().map(|c| c / 12.0).collect(),
        }),
        _ => Err(invalid(format!("unsupported finite-difference order {order}"))),
    }
}

fn scaled_band(n: usize, stencil: &[f64], scale: f64) -> BandMatrix<f64> {
    let s: Vec<f64> = stencil.iter().map(|c| c * scale).collect();
    BandMatrix::from_stencil(n, &s)
}

/// Discrete Fourier wavenumbers for `n` points of spacing `h`, in FFT order.
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let period = n as f64 * h;
    (0..n)
        .map(|j| {
            let j = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * j / period
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Grid1D {
    pub n: usize,
    pub x: Vec<f64>,
    pub h: f64,
    pub lap2: BandMatrix<f64>,
    pub lap4: BandMatrix<f64>,
    pub grad2: BandMatrix<f64>,
    pub grad4: BandMatrix<f64>,
    /// `-k^2` per discrete Fourier mode.
    pub kinetic_multipliers: Vec<f64>,
}

impl Grid1D {
    pub fn new(xmin: f64, xmax: f64, n: usize) -> Result<Self> {
        if !xmin.is_finite() || !xmax.is_finite() {
            return Err(invalid("grid bounds must be finite"));
        }
        if xmax <= xmin {
            return Err(invalid(format!("grid needs xmax > xmin, got [{xmin}, {xmax}]")));
        }
        if n < 5 {
            return Err(invalid(format!("grid needs at least 5 points, got {n}")));
        }
        let h = (xmax - xmin) / (n - 1) as f64;
        let mut x: Vec<f64> = (0..n).map(|i| xmin + i as f64 * h).collect();
        x[n - 1] = xmax;
        let s2 = fd_stencils(2)?;
        let s4 = fd_stencils(4)?;
        Ok(Self {
            n,
            h,
            lap2: scaled_band(n, &s2.lap, 1.0 / (h * h)),
            lap4: scaled_band(n, &s4.lap, 1.0 / (h * h)),
            grad2: scaled_band(n, &s2.grad, 1.0 / h),
            grad4: scaled_band(n, &s4.grad, 1.0 / h),
            kinetic_multipliers: wavenumbers(n, h).iter().map(|k| -k * k).collect(),
            x,
        })
    }

    pub fn lap(&self, order: usize) -> Result<&BandMatrix<f64>> {
        match order {
            2 => Ok(&self.lap2),
            4 => Ok(&self.lap4),
            _ => Err(invalid(format!("unsupported finite-difference order {order}"))),
        }
    }

    pub fn grad(&self, order: usize) -> Result<&BandMatrix<f64>> {
        match order {
            2 => Ok(&self.grad2),
            4 => Ok(&self.grad4),
            _ => Err(invalid(format!("unsupported finite-difference order {order}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid2D {
    pub gx: Grid1D,
    pub gy: Grid1D,
    /// Flattened mesh coordinates, index `i * ny + j`.
    pub mesh_x: Vec<f64>,
    pub mesh_y: Vec<f64>,
    pub lap2: BandMatrix<f64>,
    pub lap4: BandMatrix<f64>,
    pub kinetic_multipliers: Vec<f64>,
}

/// `Lx (x) I + I (x) Ly` for the flattening `i * ny + j`.
fn kron_sum(lx: &BandMatrix<f64>, ly: &BandMatrix<f64>) -> BandMatrix<f64> {
    let (nx, ny) = (lx.n(), ly.n());
    let kx = lx.lower().max(lx.upper());
    let ky = ly.lower().max(ly.upper());
    let k = (kx * ny).max(ky);
    let mut out = BandMatrix::zeros(nx * ny, k, k);
    lx.for_each(|i, ip, v| {
        for j in 0..ny {
            out.add_at(i * ny + j, ip * ny + j, v);
        }
    });
    ly.for_each(|j, jp, v| {
        for i in 0..nx {
            out.add_at(i * ny + j, i * ny + jp, v);
        }
    });
    out
}

impl Grid2D {
    pub fn new(xmin: f64, xmax: f64, nx: usize, ymin: f64, ymax: f64, ny: usize) -> Result<Self> {
        let gx = Grid1D::new(xmin, xmax, nx)?;
        let gy = Grid1D::new(ymin, ymax, ny)?;
        let mut mesh_x = Vec::with_capacity(nx * ny);
        let mut mesh_y = Vec::with_capacity(nx * ny);
        let mut kin = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                mesh_x.push(gx.x[i]);
                mesh_y.push(gy.x[j]);
                kin.push(gx.kinetic_multipliers[i] + gy.kinetic_multipliers[j]);
            }
        }
        Ok(Self {
            lap2: kron_sum(&gx.lap2, &gy.lap2),
            lap4: kron_sum(&gx.lap4, &gy.lap4),
            kinetic_multipliers: kin,
            mesh_x,
            mesh_y,
            gx,
            gy,
        })
    }

    pub fn nx(&self) -> usize {
        self.gx.n
    }
    pub fn ny(&self) -> usize {
        self.gy.n
    }
}

/// A 1D or 2D mesh.
#[derive(Debug, Clone)]
pub enum Grid {
    One(Grid1D),
    Two(Grid2D),
}

impl From<Grid1D> for Grid {
    fn from(g: Grid1D) -> Self {
        Grid::One(g)
    }
}

impl From<Grid2D> for Grid {
    fn from(g: Grid2D) -> Self {
        Grid::Two(g)
    }
}

impl Grid {
    pub fn grid1d(xmin: f64, xmax: f64, n: usize) -> Result<Self> {
        Ok(Grid::One(Grid1D::new(xmin, xmax, n)?))
    }

    pub fn grid2d(xmin: f64, xmax: f64, nx: usize, ymin: f64, ymax: f64, ny: usize) -> Result<Self> {
        Ok(Grid::Two(Grid2D::new(xmin, xmax, nx, ymin, ymax, ny)?))
    }

    /// Total number of degrees of freedom.
    pub fn len(&self) -> usize {
        match self {
            Grid::One(g) => g.n,
            Grid::Two(g) => g.nx() * g.ny(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape `[n]` or `[nx, ny]`.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Grid::One(g) => vec![g.n],
            Grid::Two(g) => vec![g.nx(), g.ny()],
        }
    }

    /// Quadrature weight per point.
    pub fn weight(&self) -> f64 {
        match self {
            Grid::One(g) => g.h,
            Grid::Two(g) => g.gx.h * g.gy.h,
        }
    }

    /// Coordinates per point: `[x]` or `[x, y]`.
    pub fn coords(&self) -> Vec<&[f64]> {
        match self {
            Grid::One(g) => vec![&g.x],
            Grid::Two(g) => vec![&g.mesh_x, &g.mesh_y],
        }
    }

    pub fn lap(&self, order: usize) -> Result<&BandMatrix<f64>> {
        match (self, order) {
            (Grid::One(g), _) => g.lap(order),
            (Grid::Two(g), 2) => Ok(&g.lap2),
            (Grid::Two(g), 4) => Ok(&g.lap4),
            _ => Err(invalid(format!("unsupported finite-difference order {order}"))),
        }
    }

    pub fn kinetic_multipliers(&self) -> &[f64] {
        match self {
            Grid::One(g) => &g.kinetic_multipliers,
            Grid::Two(g) => &g.kinetic_multipliers,
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Result<Complex64> {
        self.check(u.len())?;
        self.check(v.len())?;
        Ok(self.inner_unchecked(u, v))
    }

    /// Same as [`Grid::inner`] without length checks.
    pub fn inner_unchecked(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        let s: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
        s * self.weight()
    }

    pub fn norm(&self, u: &[Complex64]) -> f64 {
        (u.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.weight()).sqrt()
    }

    pub fn normalize(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(u.len())?;
        let nrm = self.norm(u);
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(invalid("cannot normalize a field of zero or non-finite norm"));
        }
        Ok(u.iter().map(|a| a / nrm).collect())
    }

    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check(f.len())?;
        Ok(f.iter().sum::<f64>() * self.weight())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn standard_grid() {
        let g = Grid1D::new(-3.0, 3.0, 201).unwrap();
        assert!((g.h - 0.03).abs() < 1e-15);
        assert_eq!(g.x[0], -3.0);
        assert_eq!(g.x[200], 3.0);
        assert!(Grid1D::new(-3.0, 3.0, 4).is_err());
        assert!(Grid1D::new(f64::NAN, 3.0, 10).is_err());
        assert!(Grid1D::new(3.0, 3.0, 10).is_err());
    }

    #[test]
    fn stencil_exactness() {
        let g = Grid1D::new(-2.0, 2.0, 41).unwrap();
        let ones = vec![1.0; g.n];
        let sq: Vec<f64> = g.x.iter().map(|x| x * x).collect();
        let cube: Vec<f64> = g.x.iter().map(|x| x * x * x).collect();
        let l2 = g.lap2.matvec(&sq);
        let l4c = g.lap4.matvec(&ones);
        let d4 = g.grad4.matvec(&cube);
        for i in 2..g.n - 2 {
            assert!((l2[i] - 2.0).abs() < 1e-9);
            assert!(l4c[i].abs() < 1e-9);
            assert!((d4[i] - 3.0 * g.x[i] * g.x[i]).abs() < 1e-9);
        }
        let s = fd_stencils(4).unwrap();
        assert!(s.lap.iter().sum::<f64>().abs() < 1e-15);
        assert!(fd_stencils(3).is_err());
    }

    #[test]
    fn lap4_on_sine() {
        let g = Grid1D::new(-3.0, 3.0, 201).unwrap();
        let k = PI / 3.0;
        let f: Vec<f64> = g.x.iter().map(|x| (k * x).sin()).collect();
        let l = g.lap4.matvec(&f);
        let err = (2..g.n - 2)
            .map(|i| (l[i] + k * k * f[i]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn quadrature() {
        let g = Grid::grid1d(-3.0, 3.0, 201).unwrap();
        let one = vec![1.0; 201];
        let i = g.integrate(&one).unwrap();
        assert!((i - 6.0).abs() <= 0.03 + 1e-12);
        let u: Vec<Complex64> = (0..201).map(|k| Complex64::new((k as f64 * 0.1).sin(), 0.3)).collect();
        let v: Vec<Complex64> = (0..201).map(|k| Complex64::new(1.0, k as f64 * 0.01)).collect();
        let a = g.inner(&u, &v).unwrap();
        let b = g.inner(&v, &u).unwrap();
        assert!((a - b.conj()).norm() < 1e-13);
        let n = g.normalize(&u).unwrap();
        assert!((g.norm(&n) - 1.0).abs() < 1e-12);
        let scaled: Vec<Complex64> = u.iter().map(|z| z * 3.5).collect();
        let n2 = g.normalize(&scaled).unwrap();
        for (p, q) in n.iter().zip(&n2) {
            assert!((p - q).norm() < 1e-13);
        }
        assert!(g.normalize(&vec![c(0.0); 201]).is_err());
        assert!(g.inner(&u[..10], &v).is_err());
    }

    #[test]
    fn kinetic_symmetry() {
        let g = Grid1D::new(0.0, 1.0, 16).unwrap();
        let m = &g.kinetic_multipliers;
        assert_eq!(m[0], 0.0);
        for j in 1..16 {
            assert!((m[j] - m[16 - j]).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_orthogonality() {
        let g = Grid1D::new(-3.0, 3.0, 101).unwrap();
        let mass = 87.0 * crate::units::nucleon_mass_in_units();
        let w = 2.0 * PI;
        let mut h = DMatrix::zeros(g.n, g.n);
        g.lap4.for_each(|i, j, v| h[(i, j)] = -v / (2.0 * mass));
        for i in 0..g.n {
            h[(i, i)] += 0.5 * mass * w * w * g.x[i] * g.x[i];
        }
        let eig = SymmetricEigen::new(h);
        let mut idx: Vec<usize> = (0..g.n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let grid = Grid::One(g.clone());
        let v0: Vec<Complex64> = eig.eigenvectors.column(idx[0]).iter().map(|&x| c(x)).collect();
        let v1: Vec<Complex64> = eig.eigenvectors.column(idx[1]).iter().map(|&x| c(x)).collect();
        assert!(grid.inner(&v0, &v1).unwrap().norm() < 1e-10);
    }

    #[test]
    fn two_d_product_function() {
        let g = Grid2D::new(-2.0, 2.0, 41, -1.5, 1.5, 31).unwrap();
        let f: Vec<f64> = g
            .mesh_x
            .iter()
            .zip(&g.mesh_y)
            .map(|(x, y)| (0.8 * x).sin() * (1.1 * y).cos())
            .collect();
        let l = g.lap4.matvec(&f);
        let (nx, ny) = (g.nx(), g.ny());
        for i in 2..nx - 2 {
            for j in 2..ny - 2 {
                let k = i * ny + j;
                let exact = -(0.64 + 1.21) * f[k];
                assert!((l[k] - exact).abs() < 1e-4);
            }
        }
        let grid = Grid::Two(g);
        assert_eq!(grid.len(), 41 * 31);
        assert!((grid.weight() - 0.1 * 0.1).abs() < 1e-15);
    }
}
