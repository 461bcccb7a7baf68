//! Banded LU factorization without pivoting, adequate for the weakly
//! diagonally dominant M-matrices produced by positive-type stencils.

use crate::error::{Error, Result};

/// Square matrix stored by diagonals: entry `(i, j)` with `|i - j| <= bw`
/// lives at `data[i * (2 * bw + 1) + (j + bw - i)]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// In-place Doolittle factorization; `L` has a unit diagonal.
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::Singular(k));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[sik] = l;
                for j in k + 1..=last {
                    let skj = self.slot(k, j);
                    let sij = self.slot(i, j);
                    self.data[sij] -= l * self.data[skj];
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.m.n, self.m.bw);
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.m.data[self.m.slot(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= self.m.data[self.m.slot(i, j)] * x[j];
            }
            x[i] = s / self.m.data[self.m.slot(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_by_hand() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1]  =>  x = [1 1 1]
        let mut m = BandedMatrix::zeros(3, 1);
        for i in 0..3 {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
                m.add(i - 1, i, -1.0);
            }
        }
        let lu = m.factor().unwrap();
        let x = lu.solve(&[1.0, 0.0, 1.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn wide_band_matches_residual() {
        let n = 40;
        let bw = 7;
        let mut m = BandedMatrix::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 10.0);
            for d in 1..=bw {
                if i + d < n {
                    m.add(i, i + d, -0.5 - 0.01 * d as f64);
                    m.add(i + d, i, -0.6 + 0.02 * d as f64);
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = m.clone().factor().unwrap().solve(&b);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            let r: f64 = (lo..=hi).map(|j| m.get(i, j) * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_singular() {
        let m = BandedMatrix::zeros(2, 1);
        assert!(matches!(m.factor(), Err(Error::Singular(0))));
    }
}
