//! Banded linear solver used by the smoothing spline and the profile
//! interpolation. Both systems are sparse with a narrow band once their
//! unknowns are ordered sensibly, so a banded LU with partial pivoting
//! handles the indefinite KKT system and the SPD grid Laplacian alike.

use crate::{Error, Result};

/// Square matrix stored by diagonals, with `kl` extra super-diagonals reserved
/// for the fill-in produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    /// Band widths are taken from the pattern.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku + self.kl {
            None
        } else {
            Some(i * self.width + (j + self.kl - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b` in place by Gaussian elimination with partial
    /// pivoting. A pivot smaller than `1e-14 * max|A|` is reported as a
    /// numerical failure.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, expected {n}",
                b.len()
            )));
        }
        let mut rhs = b.to_vec();
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Numerical("zero matrix".into()));
        }
        let tiny = 1e-14 * scale;
        let reach = self.ku + self.kl;

        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut piv = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= tiny {
                return Err(Error::Numerical(format!(
                    "pivot {best:.3e} at column {k} below tolerance {tiny:.3e}"
                )));
            }
            let last_col = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let c = self.get(piv, j);
                    let sk = self.slot(k, j).unwrap();
                    self.data[sk] = c;
                    // Columns beyond the pivot row's own reach are zero there.
                    if let Some(sp) = self.slot(piv, j) {
                        self.data[sp] = a;
                    }
                }
                rhs.swap(k, piv);
            }
            let p = self.get(k, k);
            for r in k + 1..=last_row {
                let f = self.get(r, k) / p;
                if f == 0.0 {
                    continue;
                }
                for j in k..=last_col {
                    let v = self.get(k, j);
                    if v != 0.0 {
                        let s = self.slot(r, j).unwrap();
                        self.data[s] -= f * v;
                    }
                }
                rhs[r] -= f * rhs[k];
            }
        }

        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let hi = (i + reach).min(n - 1);
            let mut acc = rhs[i];
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(i + 1) {
                acc -= self.get(i, j) * xj;
            }
            x[i] = acc / self.get(i, i);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite solution".into()));
        }
        Ok(x)
    }
}
