//! Small dense and banded linear algebra used by the solver and the networks.
//!
//! The finite-element systems assembled in [`crate::elastic`] are sparse with
//! a fixed band profile determined by the structured vertex numbering, so the
//! direct solver here is an LU factorisation in LAPACK-style band storage with
//! partial pivoting.  Dense helpers on `&[f64]` cover the network layers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A point or displacement in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    /// Scales to unit length; `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(Vec2::new(self.x / n, self.y / n))
        }
    }
}

impl core::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl core::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl core::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl core::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A 2x2 tensor with rows `[xx xy; yx yy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2 {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { xx: 0.0, xy: 0.0, yx: 0.0, yy: 0.0 };
    pub const IDENTITY: Mat2 = Mat2 { xx: 1.0, xy: 0.0, yx: 0.0, yy: 1.0 };

    pub fn new(xx: f64, xy: f64, yx: f64, yy: f64) -> Self {
        Mat2 { xx, xy, yx, yy }
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.xx, self.yx, self.xy, self.yy)
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn sym(self) -> Mat2 {
        let off = 0.5 * (self.xy + self.yx);
        Mat2::new(self.xx, off, off, self.yy)
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.yx * v.x + self.yy * v.y)
    }

    /// Full contraction `A : B = Σ aᵢⱼ bᵢⱼ`.
    pub fn double_dot(self, other: Mat2) -> f64 {
        self.xx * other.xx + self.xy * other.xy + self.yx * other.yx + self.yy * other.yy
    }
}

impl core::ops::Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(self.xx + rhs.xx, self.xy + rhs.xy, self.yx + rhs.yx, self.yy + rhs.yy)
    }
}

impl core::ops::Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.xx * s, self.xy * s, self.yx * s, self.yy * s)
    }
}

/// `Σ aᵢ bᵢ` over equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of a slice.
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum())
}

/// `y ← y + alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x` for a row-major `rows x cols` matrix.
pub fn matvec_rowmajor(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out = Wᵀ x` for a row-major `rows x cols` matrix.
pub fn matvec_transpose_rowmajor(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(out.len(), cols);
    out.fill(0.0);
    for (r, xr) in x.iter().enumerate() {
        axpy(*xr, &w[r * cols..(r + 1) * cols], out);
    }
}

/// Square matrix in LAPACK band storage: `kl` subdiagonals, `ku`
/// superdiagonals, plus `kl` extra superdiagonal rows of workspace so that
/// row interchanges during factorisation stay inside the array.
///
/// Entry `(i, j)` lives at `data[j * ldab + (kl + ku + i - j)]`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, data: vec![0.0; ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        j * self.ldab() + self.kl + self.ku + i - j
    }

    /// True when `(i, j)` lies inside the declared band.
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    /// Adds `v` to entry `(i, j)`.  The entry must lie inside the band; the
    /// assembly routines guarantee this by construction.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "band write outside profile: ({i}, {j})");
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "band write outside profile: ({i}, {j})");
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Overwrites row `i` with the `i`-th identity row.
    pub fn set_row_identity(&mut self, i: usize) {
        let lo = i.saturating_sub(self.ku);
        let hi = (i + self.kl).min(self.n - 1);
        for j in lo..=hi {
            let o = self.offset(i, j);
            self.data[o] = 0.0;
        }
        let o = self.offset(i, i);
        self.data[o] = 1.0;
    }

    /// `y = A x` over the structural band.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for i in lo..=hi {
                y[i] += self.data[self.offset(i, j)] * xj;
            }
        }
    }

    /// LU factorisation with partial pivoting (band variant of `getrf`).
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        // Fill-in extends the upper bandwidth by kl.
        let kut = self.ku + kl;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let pend = (j + kl).min(n - 1);
            let mut imax = j;
            let mut amax = libm::fabs(self.data[self.offset(j, j)]);
            for i in (j + 1)..=pend {
                let a = libm::fabs(self.data[self.offset(i, j)]);
                if a > amax {
                    amax = a;
                    imax = i;
                }
            }
            if !amax.is_finite() {
                return Err(Error::NonFinite { context: "band LU pivot".into() });
            }
            if amax == 0.0 {
                return Err(Error::SingularMatrix { row: j });
            }
            ipiv[j] = imax;
            let cend = (j + kut).min(n - 1);
            if imax != j {
                for k in j..=cend {
                    let oj = self.offset(j, k);
                    let oi = self.offset(imax, k);
                    self.data.swap(oj, oi);
                }
            }
            let pivot = self.data[self.offset(j, j)];
            for i in (j + 1)..=pend {
                let oij = self.offset(i, j);
                let l = self.data[oij] / pivot;
                self.data[oij] = l;
                if l == 0.0 {
                    continue;
                }
                for k in (j + 1)..=cend {
                    let ujk = self.data[self.offset(j, k)];
                    if ujk != 0.0 {
                        let oik = self.offset(i, k);
                        self.data[oik] -= l * ujk;
                    }
                }
            }
        }
        Ok(BandLu { mat: self, ipiv, kut })
    }
}

/// Factored form produced by [`BandMatrix::factor`].
#[derive(Clone, Debug)]
pub struct BandLu {
    mat: BandMatrix,
    ipiv: Vec<usize>,
    kut: usize,
}

impl BandLu {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.mat.n;
        if b.len() != n {
            return Err(Error::ShapeMismatch {
                context: "band solve rhs",
                expected: n,
                got: b.len(),
            });
        }
        let kl = self.mat.kl;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let pend = (j + kl).min(n - 1);
                for i in (j + 1)..=pend {
                    b[i] -= self.mat.data[self.mat.offset(i, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let o = self.mat.offset(j, j);
            b[j] /= self.mat.data[o];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(self.kut);
                for i in lo..j {
                    b[i] -= self.mat.data[self.mat.offset(i, j)] * bj;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b`, returning a fresh vector.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Reference dense solver: Gaussian elimination with partial pivoting.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for j in 0..n {
            let (imax, amax) = (j..n)
                .map(|i| (i, m[i][j].abs()))
                .max_by(|p, q| p.1.total_cmp(&q.1))
                .unwrap();
            if amax == 0.0 {
                return None;
            }
            m.swap(j, imax);
            x.swap(j, imax);
            for i in (j + 1)..n {
                let l = m[i][j] / m[j][j];
                for k in j..n {
                    let mjk = m[j][k];
                    m[i][k] -= l * mjk;
                }
                x[i] -= l * x[j];
            }
        }
        for j in (0..n).rev() {
            for k in (j + 1)..n {
                x[j] -= m[j][k] * x[k];
            }
            x[j] /= m[j][j];
        }
        Some(x)
    }

    fn random_band_system(
        rng: &mut ChaCha20Rng,
        n: usize,
        kl: usize,
        ku: usize,
    ) -> (BandMatrix, Vec<Vec<f64>>, Vec<f64>) {
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = alloc::vec![alloc::vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if band.in_band(i, j) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    // Diagonal boost keeps the random systems comfortably regular.
                    let v = if i == j { v + 4.0 } else { v };
                    band.set(i, j, v);
                    dense[i][j] = v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (band, dense, b)
    }

    #[test]
    fn band_lu_matches_dense_elimination() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 2), (12, 3, 3), (30, 5, 2), (40, 7, 7)] {
            let (band, dense, b) = random_band_system(&mut rng, n, kl, ku);
            let x_dense = dense_solve(&dense, &b).expect("dense solvable");
            let x_band = band.factor().unwrap().solve(&b).unwrap();
            for (xb, xd) in x_band.iter().zip(&x_dense) {
                approx::assert_relative_eq!(xb, xd, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn band_lu_residual_is_small() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (band, _, b) = random_band_system(&mut rng, 80, 6, 6);
        let lu = band.clone().factor().unwrap();
        let x = lu.solve(&b).unwrap();
        let mut ax = alloc::vec![0.0; b.len()];
        band.matvec(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        assert!(libm::sqrt(res) < 1e-10 * norm(&b).max(1.0));
    }

    #[test]
    fn pivoting_handles_zero_leading_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap before elimination.
        let mut band = BandMatrix::zeros(2, 1, 1);
        band.set(0, 1, 1.0);
        band.set(1, 0, 1.0);
        let x = band.factor().unwrap().solve(&[2.0, 3.0]).unwrap();
        assert_eq!(x, alloc::vec![3.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.set(0, 0, 1.0);
        band.set(1, 1, 1.0);
        // Row 2 left entirely zero.
        let err = band.factor().unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { row: 2 }));
    }

    #[test]
    fn row_identity_clears_band_row() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (mut band, _, _) = random_band_system(&mut rng, 9, 2, 2);
        band.set_row_identity(4);
        for j in 0..9 {
            assert_eq!(band.get(4, j), if j == 4 { 1.0 } else { 0.0 });
        }
        // Other rows untouched by construction: solve still works.
        let mut b = alloc::vec![1.0; 9];
        b[4] = 7.5;
        let x = band.factor().unwrap().solve(&b).unwrap();
        assert_eq!(x[4], 7.5);
    }

    #[test]
    fn matvec_matches_dense_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let (band, dense, x) = random_band_system(&mut rng, 17, 4, 2);
        let mut y = alloc::vec![0.0; 17];
        band.matvec(&x, &mut y);
        for i in 0..17 {
            let want: f64 = (0..17).map(|j| dense[i][j] * x[j]).sum();
            approx::assert_relative_eq!(y[i], want, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn transpose_matvec_agrees_with_forward() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let (rows, cols) = (4, 3);
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut wx = alloc::vec![0.0; rows];
        matvec_rowmajor(&w, rows, cols, &x, &mut wx);
        let mut wty = alloc::vec![0.0; cols];
        matvec_transpose_rowmajor(&w, rows, cols, &y, &mut wty);
        // ⟨Wx, y⟩ = ⟨x, Wᵀy⟩ characterises the transpose.
        approx::assert_relative_eq!(dot(&wx, &y), dot(&x, &wty), max_relative = 1e-12);
    }
}
