//! Dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `exp(-i h)` for Hermitian `h`.
pub fn expm_neg_i_hermitian(h: &CMat) -> CMat {
    let eig = h.clone().symmetric_eigen();
    let phases = eig.eigenvalues.map(|e| C64::from_polar(1.0, -e));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}

/// One fourth-order Magnus step of `i dU/dt = H(t) U` over `[t, t + dt]`,
/// from `H` at the two Gauss-Legendre nodes.
pub fn magnus4_step(h1: &CMat, h2: &CMat, dt: f64) -> CMat {
    let comm = h2 * h1 - h1 * h2;
    let k = (h1 + h2) * c(0.5 * dt) - comm * C64::new(0.0, 3f64.sqrt() * dt * dt / 12.0);
    expm_neg_i_hermitian(&k)
}

pub const GAUSS2: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// `max |(U^dagger U - 1)_ij|`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let p = u.adjoint() * u;
    let n = p.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |A - A^dagger|`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn solve_dense(a: CMat, b: &CVec) -> Result<CVec> {
    let lu = a.lu();
    lu.solve(b).ok_or(Error::Singular)
}

/// A square complex matrix with `lower` sub- and `upper` super-diagonals,
/// stored row-wise with room for the fill-in of partial pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        BandMatrix {
            n,
            lower,
            upper,
            width,
            data: vec![C64::new(0.0, 0.0); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.lower + self.upper);
        i * self.width + (j + self.lower - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.lower >= i && j <= i + self.lower + self.upper {
            self.data[self.slot(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// # Panics
    /// If `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Clears row `i` inside the band.
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.lower);
        let hi = (i + self.upper).min(self.n - 1);
        for j in lo..=hi {
            let s = self.slot(i, j);
            self.data[s] = C64::new(0.0, 0.0);
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting inside the band, then
    /// forward/back substitution. Consumes the matrix.
    pub fn solve(mut self, rhs: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()))
            .max(f64::MIN_POSITIVE);
        let mut b = rhs.to_vec();
        let reach = self.lower + self.upper;
        for k in 0..n {
            let last_row = (k + self.lower).min(n - 1);
            let (mut piv, mut best) = (k, 0.0);
            for r in k..=last_row {
                let v = self.get(r, k).norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::Singular);
            }
            let last_col = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let (s1, s2) = (self.slot(k, j), self.slot(piv, j));
                    self.data.swap(s1, s2);
                }
                b.swap(k, piv);
            }
            let pivot = self.data[self.slot(k, k)];
            for i in (k + 1)..=last_row {
                let sik = self.slot(i, k);
                let factor = self.data[sik] / pivot;
                if factor == C64::new(0.0, 0.0) {
                    continue;
                }
                self.data[sik] = C64::new(0.0, 0.0);
                let row_k = self.slot(k, k);
                let row_i = self.slot(i, k);
                for off in 1..=(last_col - k) {
                    let v = self.data[row_k + off];
                    self.data[row_i + off] -= factor * v;
                }
                let bk = b[k];
                b[i] -= factor * bk;
            }
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let base = self.slot(k, k);
            let mut acc = b[k];
            for off in 1..=(last_col - k) {
                acc -= self.data[base + off] * x[k + off];
            }
            x[k] = acc / self.data[base];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        (&a + a.adjoint()) * c(0.5)
    }

    #[test]
    fn exponential_is_unitary_and_matches_series() {
        let h = random_hermitian(5, 3) * c(0.1);
        let u = expm_neg_i_hermitian(&h);
        assert!(unitarity_defect(&u) < 1e-13);
        let mut series = CMat::identity(5, 5);
        let mut term = CMat::identity(5, 5);
        for k in 1..30 {
            term = &term * &h * (-I / c(k as f64));
            series += &term;
        }
        assert!(max_abs(&(u - series)) < 1e-13);
    }

    #[test]
    fn magnus_step_exact_for_constant_hamiltonian() {
        let h = random_hermitian(4, 11);
        let u = magnus4_step(&h, &h, 0.3);
        let exact = expm_neg_i_hermitian(&(&h * c(0.3)));
        assert!(max_abs(&(u - exact)) < 1e-13);
    }

    proptest! {
        #[test]
        fn band_solver_matches_dense(seed in 0u64..1000, n in 5usize..40, lower in 0usize..4, upper in 0usize..4) {
            let mut s = seed.wrapping_add(7);
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            let mut band = BandMatrix::zeros(n, lower, upper);
            let mut dense = CMat::zeros(n, n);
            for i in 0..n {
                for j in i.saturating_sub(lower)..=(i + upper).min(n - 1) {
                    // weak diagonal forces pivoting
                    let v = C64::new(next(), next()) * if i == j { 0.1 } else { 1.0 };
                    band.set(i, j, v);
                    dense[(i, j)] = v;
                }
            }
            let rhs: Vec<C64> = (0..n).map(|_| C64::new(next(), next())).collect();
            let expected = solve_dense(dense.clone(), &CVec::from_vec(rhs.clone()));
            if let Ok(expected) = expected {
                if dense.clone().lu().determinant().norm() > 1e-8 {
                    let x = band.solve(&rhs).unwrap();
                    for i in 0..n {
                        prop_assert!((x[i] - expected[i]).norm() < 1e-8 * (1.0 + expected[i].norm()));
                    }
                }
            }
        }
    }
}
