//! Banded LU with partial pivoting for the linearized grid systems.

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored with
/// `kl` extra super-diagonals of room for pivoting fill-in.
#[derive(Debug, Clone)]
pub(crate) struct BandedMatrix {
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

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`; `j − i` must lie within `[-kl, ku]`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Solves `A x = b` in place (`b` becomes `x`); consumes the factorization.
    pub fn solve(mut self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        let (kl, reach) = (self.kl, self.kl + self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::NonConvergence {
                    stage: 0,
                    iterations: 0,
                    reason: format!("singular linear system at row {k}"),
                });
            }
            let last_col = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let (a, c) = (self.slot(k, j), self.slot(piv, j));
                    self.data.swap(a, c);
                }
                b.swap(k, piv);
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let l = self.data[s] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[s] = 0.0;
                for j in k + 1..=last_col {
                    let src = self.data[self.slot(k, j)];
                    let dst = self.slot(i, j);
                    self.data[dst] -= l * src;
                }
                b[i] -= l * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=last_col {
                acc -= self.data[self.slot(k, j)] * b[j];
            }
            b[k] = acc / self.data[self.slot(k, k)];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tridiagonal_poisson() {
        // -x'' = 2 on (0,1), x(0)=x(1)=0  =>  x = t(1-t), exact for the 3-point stencil
        let n = 9;
        let h = 1.0 / (n + 1) as f64;
        let mut a = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 2.0 / (h * h));
            if i > 0 {
                a.add(i, i - 1, -1.0 / (h * h));
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0 / (h * h));
            }
        }
        let mut b = vec![2.0; n];
        a.solve(&mut b).unwrap();
        for (i, x) in b.iter().enumerate() {
            let t = (i + 1) as f64 * h;
            assert!((x - t * (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_banded_needs_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, kl, ku) = (40, 3, 2);
        let mut dense = vec![vec![0.0; n]; n];
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // tiny diagonal forces row swaps
                let v = if i == j { 1e-3 * rng.gen_range(-1.0..1.0) } else { rng.gen_range(-1.0..1.0) };
                dense[i][j] = v;
                a.add(i, j, v);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b: Vec<f64> = dense.iter().map(|row| row.iter().zip(&x_true).map(|(p, q)| p * q).sum()).collect();
        a.solve(&mut b).unwrap();
        let err = b.iter().zip(&x_true).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn singular_is_reported() {
        let a = BandedMatrix::zeros(3, 1, 1);
        assert!(a.solve(&mut [1.0, 2.0, 3.0]).is_err());
    }
}
