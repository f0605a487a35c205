//! Clamped B-spline basis with uniformly spaced interior knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

/// Non-zero basis functions at one parameter: `values[d][i]` is the `d`-th
/// derivative of basis function `first + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub first: usize,
    pub values: Vec<Vec<f64>>,
}

impl BSplineBasis {
    /// `coefficients` basis functions of `degree` on `[t0, te]`, with the end
    /// knots repeated `degree + 1` times.
    pub fn clamped_uniform(degree: usize, coefficients: usize, t0: f64, te: f64) -> Result<Self> {
        if degree < 3 {
            return Err(Error::Config("B-spline degree must be at least 3 for continuous second derivatives".into()));
        }
        if coefficients < degree + 1 {
            return Err(Error::Config(format!(
                "a degree-{degree} B-spline needs at least {} coefficients",
                degree + 1
            )));
        }
        if !(te > t0) {
            return Err(Error::Config("B-spline interval must have positive length".into()));
        }
        let segments = coefficients - degree;
        let mut knots = vec![t0; degree + 1];
        for i in 1..segments {
            knots.push(t0 + (te - t0) * i as f64 / segments as f64);
        }
        knots.extend(std::iter::repeat_n(te, degree + 1));
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot span index `s` with `knots[s] ≤ t < knots[s + 1]`; the last span
    /// is closed on the right.
    fn span(&self, t: f64) -> usize {
        let n = self.len() - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        if t <= self.knots[self.degree] {
            return self.degree;
        }
        // last index with knots[i] ≤ t
        self.knots.partition_point(|k| *k <= t) - 1
    }

    /// Basis functions and derivatives up to order `n_ders` at `t`.
    pub fn local(&self, t: f64, n_ders: usize) -> LocalBasis {
        let p = self.degree;
        let s = self.span(t);
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n_ders.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n_ders.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        LocalBasis { first: s - p, values: ders }
    }

    /// Value and derivatives up to `n_ders` of the spline with `coefs` at `t`.
    pub fn evaluate(&self, coefs: &[f64], t: f64, n_ders: usize) -> Vec<f64> {
        let lb = self.local(t, n_ders);
        lb.values.iter().map(|row| row.iter().enumerate().map(|(i, b)| b * coefs[lb.first + i]).sum()).collect()
    }
}
