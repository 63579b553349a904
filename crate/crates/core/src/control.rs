//! Tabulated control parameters: piecewise-linear interpolation, the
//! smoothness penalty, L2/H1 inner products and gradient assembly.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    L2,
    #[default]
    H1,
}

impl std::str::FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L2" => Ok(NormMode::L2),
            // "H2" appears in some documentation as a typo for H1
            "H1" | "H2" => Ok(NormMode::H1),
            _ => Err(invalid(format!("unknown norm mode `{s}` (expected L2 or H1)"))),
        }
    }
}

/// Control values at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSample {
    pub t: f64,
    pub values: Vec<f64>,
}

impl ControlSample {
    pub fn new(t: f64, values: Vec<f64>) -> Self {
        Self { t, values }
    }

    /// First channel; convenient for single-parameter problems.
    pub fn value(&self) -> f64 {
        self.values[0]
    }
}

/// Control parameter(s) `lambda(t)` tabulated on time knots. Values are
/// stored per channel: `values[c][j]` is channel `c` at knot `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTimeline {
    t: Vec<f64>,
    values: Vec<Vec<f64>>,
    pub gamma: f64,
    pub norm: NormMode,
}

impl ControlTimeline {
    pub fn new(t: Vec<f64>, values: Vec<Vec<f64>>, gamma: f64, norm: NormMode) -> Result<Self> {
        if t.len() < 2 {
            return Err(invalid("control needs at least two knots"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control knots must be finite and strictly increasing"));
        }
        if values.is_empty() {
            return Err(invalid("control needs at least one channel"));
        }
        for ch in &values {
            if ch.len() != t.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    got: ch.len(),
                });
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(invalid("control values must be finite"));
            }
        }
        if !(gamma >= 0.0) {
            return Err(invalid("penalty weight gamma must be non-negative"));
        }
        Ok(Self {
            t,
            values,
            gamma,
            norm,
        })
    }

    /// Single-channel timeline.
    pub fn scalar(t: Vec<f64>, values: Vec<f64>, gamma: f64, norm: NormMode) -> Result<Self> {
        Self::new(t, vec![values], gamma, norm)
    }

    /// Timeline sampled from a function of time.
    pub fn from_fn(t: Vec<f64>, f: impl Fn(f64) -> f64, gamma: f64, norm: NormMode) -> Result<Self> {
        let v = t.iter().map(|&s| f(s)).collect();
        Self::scalar(t, v, gamma, norm)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }
    pub fn channels(&self) -> usize {
        self.values.len()
    }
    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
    pub fn t0(&self) -> f64 {
        self.t[0]
    }
    pub fn t1(&self) -> f64 {
        *self.t.last().unwrap()
    }
    pub fn first(&self) -> Vec<f64> {
        self.values.iter().map(|c| c[0]).collect()
    }
    pub fn last(&self) -> Vec<f64> {
        self.values.iter().map(|c| *c.last().unwrap()).collect()
    }

    /// Same knots and settings with new values.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.t.clone(), values, self.gamma, self.norm)
    }

    /// Zero timeline on the same knots.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![vec![0.0; self.t.len()]; self.values.len()],
            ..self.clone()
        }
    }

    /// Interval index `j` with `t_j <= t <= t_{j+1}` and the linear weight.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.t0(), self.t1());
        let slack = 1e-12 * (t1 - t0).abs().max(1.0);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(Error::OutOfRange { t, t0, t1 });
        }
        let t = t.clamp(t0, t1);
        let j = match self.t.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(j) => return Ok((j.min(self.t.len() - 2), if j == self.t.len() - 1 { 1.0 } else { 0.0 })),
            Err(j) => j - 1,
        };
        let w = (t - self.t[j]) / (self.t[j + 1] - self.t[j]);
        Ok((j, w))
    }

    pub fn eval(&self, t: f64) -> Result<ControlSample> {
        let (j, w) = self.locate(t)?;
        let values = self
            .values
            .iter()
            .map(|c| if w == 0.0 { c[j] } else if w == 1.0 { c[j + 1] } else { (1.0 - w) * c[j] + w * c[j + 1] })
            .collect();
        Ok(ControlSample { t, values })
    }

    /// Interpolation weights: knot indices and hat-function values at `t`.
    pub fn hat_weights(&self, t: f64) -> Result<[(usize, f64); 2]> {
        let (j, w) = self.locate(t)?;
        Ok([(j, 1.0 - w), (j + 1, w)])
    }

    /// Trapezoidal quadrature weights of the knots.
    pub fn knot_weights(&self) -> Vec<f64> {
        let n = self.t.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { self.t[j] - self.t[j - 1] } else { 0.0 };
                let right = if j + 1 < n { self.t[j + 1] - self.t[j] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// `(gamma / 2) * sum_i ((lambda_{i+1} - lambda_i) / dt_i)^2 dt_i`.
    pub fn penalty_cost(&self) -> f64 {
        0.5 * self.gamma
            * self
                .values
                .iter()
                .map(|c| {
                    c.windows(2)
                        .zip(self.t.windows(2))
                        .map(|(v, t)| (v[1] - v[0]).powi(2) / (t[1] - t[0]))
                        .sum::<f64>()
                })
                .sum::<f64>()
    }

    /// Three-point second difference on possibly non-uniform knots, zero at
    /// both ends.
    pub fn second_difference(&self, v: &[f64]) -> Vec<f64> {
        let n = self.t.len();
        let mut out = vec![0.0; n];
        for j in 1..n - 1 {
            let dl = self.t[j] - self.t[j - 1];
            let dr = self.t[j + 1] - self.t[j];
            out[j] = 2.0 / (dl + dr) * ((v[j + 1] - v[j]) / dr - (v[j] - v[j - 1]) / dl);
        }
        out
    }

    /// Solve `-g'' = rhs` on the interior with `g = 0` at both ends, using the
    /// same second difference as [`Self::second_difference`].
    pub fn poisson_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.t.len();
        let mut g = vec![0.0; n];
        let m = n - 2;
        if m == 0 {
            return g;
        }
        // tridiagonal rows for the interior knots, Thomas algorithm
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        for k in 0..m {
            let j = k + 1;
            let dl = self.t[j] - self.t[j - 1];
            let dr = self.t[j + 1] - self.t[j];
            let s = 2.0 / (dl + dr);
            a[k] = -s / dl;
            c[k] = -s / dr;
            b[k] = s / dl + s / dr;
            d[k] = rhs[j];
        }
        for k in 1..m {
            let w = a[k] / b[k - 1];
            b[k] -= w * c[k - 1];
            d[k] -= w * d[k - 1];
        }
        g[m] = d[m - 1] / b[m - 1];
        for k in (0..m - 1).rev() {
            g[k + 1] = (d[k] - c[k] * g[k + 2]) / b[k];
        }
        g
    }

    /// Gradient timeline from `f(t_j)` (one vector per channel): `-gamma
    /// lambda'' - f` in L2 mode, its Poisson-smoothed version in H1 mode.
    /// Endpoint values of `f` are ignored and the result vanishes there.
    pub fn assemble_gradient(&self, f: &[Vec<f64>]) -> Result<ControlTimeline> {
        if f.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: f.len(),
            });
        }
        let n = self.t.len();
        let mut out = Vec::with_capacity(f.len());
        for (ch, fc) in self.values.iter().zip(f) {
            if fc.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: fc.len(),
                });
            }
            let lpp = self.second_difference(ch);
            let mut g: Vec<f64> = (0..n).map(|j| -self.gamma * lpp[j] - fc[j]).collect();
            g[0] = 0.0;
            g[n - 1] = 0.0;
            if self.norm == NormMode::H1 {
                g = self.poisson_solve(&g);
            }
            out.push(g);
        }
        Ok(self.zeros_like().with_values(out)?)
    }

    fn check_same(&self, u: &ControlTimeline) -> Result<()> {
        if u.t.len() != self.t.len() || u.values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.t.len() * self.values.len(),
                got: u.t.len() * u.values.len(),
            });
        }
        Ok(())
    }

    /// Inner product in the configured norm: trapezoid-weighted sum (L2) or
    /// sum of forward-difference products over interval lengths (H1).
    pub fn inner_control(&self, u: &ControlTimeline, v: &ControlTimeline) -> Result<f64> {
        self.check_same(u)?;
        self.check_same(v)?;
        Ok(self.inner_raw(u.values(), v.values()))
    }

    pub(crate) fn inner_raw(&self, u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
        match self.norm {
            NormMode::L2 => {
                let w = self.knot_weights();
                u.iter()
                    .zip(v)
                    .map(|(a, b)| a.iter().zip(b).zip(&w).map(|((x, y), w)| x * y * w).sum::<f64>())
                    .sum()
            }
            NormMode::H1 => u
                .iter()
                .zip(v)
                .map(|(a, b)| {
                    (0..self.t.len() - 1)
                        .map(|i| (a[i + 1] - a[i]) * (b[i + 1] - b[i]) / (self.t[i + 1] - self.t[i]))
                        .sum::<f64>()
                })
                .sum(),
        }
    }

    pub fn norm_control(&self, u: &ControlTimeline) -> Result<f64> {
        Ok(self.inner_control(u, u)?.max(0.0).sqrt())
    }

    /// `self + alpha * d`; `d` must vanish at both endpoints.
    pub fn axpy(&self, alpha: f64, d: &ControlTimeline) -> Result<ControlTimeline> {
        self.check_same(d)?;
        let n = self.t.len();
        for ch in &d.values {
            if ch[0] != 0.0 || ch[n - 1] != 0.0 {
                return Err(invalid("update direction must vanish at both endpoints"));
            }
        }
        let values = self
            .values
            .iter()
            .zip(&d.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + alpha * y).collect())
            .collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn scaled(&self, alpha: f64) -> ControlTimeline {
        Self {
            values: self
                .values
                .iter()
                .map(|c| c.iter().map(|v| alpha * v).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Write `t, lambda_0, lambda_1, ...` as CSV.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut header = vec!["t".to_string()];
        if self.values.len() == 1 {
            header.push("lambda".into());
        } else {
            header.extend((0..self.values.len()).map(|c| format!("lambda{c}")));
        }
        let rows: Vec<Vec<f64>> = (0..self.t.len())
            .map(|j| std::iter::once(self.t[j]).chain(self.values.iter().map(|c| c[j])).collect())
            .collect();
        crate::io::write_table(path, &header, &rows)
    }
}
