//! Symmetric cyclic tridiagonal matrices: the periodic 1-D finite-difference
//! Hamiltonian. Exact eigenvalue counting (Sylvester inertia), shifted solves
//! and bisection for eigenvalues in a window.

use crate::error::{Error, Result};

use super::{dot, generic_vector, norm};

const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples `i` and `(i + 1) % n`.
    off: Vec<f64>,
}

/// LU factorization (partial pivoting) of the leading tridiagonal block
/// bordered by the wrap-around row and column.
#[derive(Debug, Clone)]
pub struct CyclicFactor {
    n: usize,
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<usize>,
    border: Vec<f64>,
    border_solution: Vec<f64>,
    schur: f64,
    matrix: CyclicTridiagonal,
    sigma: f64,
}

impl CyclicTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.len() < 3 || off.len() != diag.len() {
            return Err(Error::InvalidInput(
                "cyclic tridiagonal needs n >= 3 and n off-diagonal entries".into(),
            ));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// Copy with `extra` added to the diagonal.
    pub fn with_diagonal_shift(&self, extra: &[f64]) -> Self {
        Self {
            diag: self.diag.iter().zip(extra).map(|(a, b)| a + b).collect(),
            off: self.off.clone(),
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            y[i] = self.diag[i] * x[i] + self.off[prev] * x[prev] + self.off[i] * x[next];
        }
    }

    /// Gershgorin bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = self.off[i].abs() + self.off[(i + n - 1) % n].abs();
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let m = n - 1;
        let scale = self
            .diag
            .iter()
            .map(|d| d.abs())
            .chain(self.off.iter().map(|e| e.abs()))
            .fold(sigma.abs(), f64::max)
            .max(1.0);
        let tiny = f64::EPSILON * scale;
        let mut count = 0;
        let mut pivot = 0.0;
        let mut w_prev = 0.0;
        let mut schur = self.diag[m] - sigma;
        for i in 0..m {
            let mut u = 0.0;
            if i == 0 {
                u += self.off[m];
            }
            if i == m - 1 {
                u += self.off[m - 1];
            }
            let (p, w) = if i == 0 {
                (self.diag[0] - sigma, u)
            } else {
                let e = self.off[i - 1];
                let l = e / pivot;
                (self.diag[i] - sigma - e * l, u - l * w_prev)
            };
            let p = if p.abs() < tiny { -tiny } else { p };
            if p < 0.0 {
                count += 1;
            }
            schur -= w * w / p;
            pivot = p;
            w_prev = w;
        }
        if schur < 0.0 {
            count += 1;
        }
        count
    }

    pub fn factor(&self, sigma: f64) -> Result<CyclicFactor> {
        let n = self.len();
        let m = n - 1;
        let mut d: Vec<f64> = self.diag[..m].iter().map(|v| v - sigma).collect();
        let mut dl: Vec<f64> = self.off[..m - 1].to_vec();
        let mut du: Vec<f64> = self.off[..m - 1].to_vec();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut ipiv: Vec<usize> = (0..m).collect();

        for i in 0..m - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 1 < m - 1 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                ipiv[i] = i + 1;
            }
        }
        if d.iter().any(|v| *v == 0.0) {
            return Err(Error::LinearSolve(format!(
                "tridiagonal block singular at shift {sigma}"
            )));
        }
        let mut border = vec![0.0; m];
        border[0] += self.off[m];
        border[m - 1] += self.off[m - 1];
        let mut factor = CyclicFactor {
            n,
            dl,
            d,
            du,
            du2,
            ipiv,
            border: border.clone(),
            border_solution: Vec::new(),
            schur: 0.0,
            matrix: self.clone(),
            sigma,
        };
        let mut z = border.clone();
        factor.solve_block(&mut z);
        let schur = self.diag[m] - sigma - dot(&border, &z);
        if schur == 0.0 || !schur.is_finite() {
            return Err(Error::LinearSolve(format!(
                "cyclic Schur complement singular at shift {sigma}"
            )));
        }
        factor.border_solution = z;
        factor.schur = schur;
        Ok(factor)
    }

    /// Block of `(A - sigma)^{-1}` on the contiguous indices
    /// `start..start + len`, by eliminating the complementary path: only its
    /// two end-to-end Green values enter, so the cost is two tridiagonal
    /// solves of length `n - len` plus a dense `len x len` inverse.
    pub fn window_inverse(&self, sigma: f64, start: usize, len: usize) -> Result<nalgebra::DMatrix<f64>> {
        let n = self.len();
        if len == 0 || start + len > n || n - len < 3 {
            return Err(Error::InvalidInput("window must leave a path of at least 3 sites".into()));
        }
        // complement path in ring order, from just after the window
        let path: Vec<usize> = (0..n - len).map(|k| (start + len + k) % n).collect();
        let p = path.len();
        let d: Vec<f64> = path.iter().map(|&i| self.diag[i] - sigma).collect();
        let e: Vec<f64> = path[..p - 1].iter().map(|&i| self.off[i]).collect();
        let lu = TridiagonalLu::new(&e, &d, &e)?;
        // d rounds sigma to the ulp of the diagonal; refinement against the
        // unshifted entries keeps the result smooth in sigma
        let refined = |rhs: &[f64]| {
            let mut x = rhs.to_vec();
            lu.solve_in_place(&mut x);
            for _ in 0..REFINE_STEPS {
                let mut r: Vec<f64> = (0..p)
                    .map(|k| {
                        let mut ax = self.diag[path[k]] * x[k] - sigma * x[k];
                        if k > 0 {
                            ax += e[k - 1] * x[k - 1];
                        }
                        if k + 1 < p {
                            ax += e[k] * x[k + 1];
                        }
                        rhs[k] - ax
                    })
                    .collect();
                lu.solve_in_place(&mut r);
                x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
            }
            x
        };
        let mut unit = vec![0.0; p];
        unit[0] = 1.0;
        let first = refined(&unit);
        unit[0] = 0.0;
        unit[p - 1] = 1.0;
        let last = refined(&unit);
        let g_ff = first[0];
        let g_lf = first[p - 1];
        let g_fl = last[0];
        let g_ll = last[p - 1];
        // window end couplings: its last site to the path head, its first
        // site to the path tail
        let a_end = self.off[start + len - 1];
        let a_start = self.off[(start + n - 1) % n];
        // unshifted window block with the path eliminated
        let mut m = nalgebra::DMatrix::<f64>::zeros(len, len);
        for k in 0..len {
            m[(k, k)] = self.diag[start + k];
            if k + 1 < len {
                m[(k, k + 1)] = self.off[start + k];
                m[(k + 1, k)] = self.off[start + k];
            }
        }
        let (a, b) = (0, len - 1);
        m[(a, a)] -= a_start * a_start * g_ll;
        m[(b, b)] -= a_end * a_end * g_ff;
        m[(a, b)] -= a_start * a_end * g_lf;
        m[(b, a)] -= a_end * a_start * g_fl;
        let mut shifted = m.clone();
        for k in 0..len {
            shifted[(k, k)] -= sigma;
        }
        let lu = shifted.lu();
        let mut x = lu
            .try_inverse()
            .ok_or_else(|| Error::LinearSolve(format!("window Schur complement singular at shift {sigma}")))?;
        for _ in 0..REFINE_STEPS {
            let mut r = -(&m * &x) + &x * sigma;
            for k in 0..len {
                r[(k, k)] += 1.0;
            }
            lu.solve_mut(&mut r);
            x += r;
        }
        Ok(x)
    }

    /// Eigenvalues in the half-open window `[lo, hi)`, ascending, each to
    /// absolute accuracy `tol`.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
        let n_lo = self.count_below(lo);
        let n_hi = self.count_below(hi);
        let mut out = Vec::with_capacity(n_hi.saturating_sub(n_lo));
        let mut left = lo;
        for k in n_lo..n_hi {
            let (mut a, mut b) = (left, hi);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if self.count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let value = 0.5 * (a + b);
            out.push(value);
            left = a;
        }
        out
    }

    /// Orthonormal eigenvectors for an eigenvalue cluster of size `mult`
    /// around `lambda` by block inverse iteration.
    pub fn cluster_vectors(&self, lambda: f64, mult: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let scale = lambda.abs().max(1.0);
        let factor = self
            .factor(lambda + 1e-11 * scale)
            .or_else(|_| self.factor(lambda - 1.7e-11 * scale))?;
        let mut block: Vec<Vec<f64>> = (0..mult).map(|s| generic_vector(n, s + 3)).collect();
        for _ in 0..4 {
            for v in block.iter_mut() {
                factor.solve_raw(v);
            }
            orthonormalize(&mut block)?;
        }
        Ok(block)
    }
}

impl CyclicTridiagonal {
    /// Eigenpairs in `[lo, hi)`. Bisection locates the values, clusters closer
    /// than `1e-7` (relative) are resolved together by block inverse iteration
    /// and a Rayleigh-Ritz step, which restores full accuracy for degenerate
    /// levels.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let rough = self.eigenvalues_in(lo, hi, 1e-12 * lo.abs().max(hi.abs()).max(1.0));
        let scale = lo.abs().max(hi.abs()).max(1.0);
        let mut values = Vec::with_capacity(rough.len());
        let mut vectors = Vec::with_capacity(rough.len());
        let mut start = 0;
        while start < rough.len() {
            let mut end = start + 1;
            while end < rough.len() && rough[end] - rough[end - 1] < 1e-7 * scale {
                end += 1;
            }
            let center = rough[start..end].iter().sum::<f64>() / (end - start) as f64;
            let block = self.cluster_vectors(center, end - start)?;
            let k = block.len();
            let images: Vec<Vec<f64>> = block
                .iter()
                .map(|v| {
                    let mut y = vec![0.0; self.len()];
                    self.apply(v, &mut y);
                    y
                })
                .collect();
            let proj = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| {
                0.5 * (dot(&block[i], &images[j]) + dot(&block[j], &images[i]))
            });
            let eig = super::symmetric_eigen(proj);
            for c in 0..k {
                let mut v = vec![0.0; self.len()];
                for (i, b) in block.iter().enumerate() {
                    super::axpy(eig.vectors[(i, c)], b, &mut v);
                }
                values.push(eig.values[c]);
                vectors.push(v);
            }
            start = end;
        }
        Ok((values, vectors))
    }
}

fn orthonormalize(block: &mut [Vec<f64>]) -> Result<()> {
    for j in 0..block.len() {
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&block[i], &block[j]);
                let (head, tail) = block.split_at_mut(j);
                super::axpy(-c, &head[i], &mut tail[0]);
            }
        }
        let nrm = norm(&block[j]);
        if !(nrm > 0.0) {
            return Err(Error::Eigensolver("inverse iteration lost rank".into()));
        }
        block[j].iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(())
}

/// LU factorization with partial pivoting of a general tridiagonal matrix
/// (sub-diagonal `dl`, diagonal `d`, super-diagonal `du`).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    fact: Vec<f64>,
    swapped: Vec<bool>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(dl: &[f64], d: &[f64], du: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut d = d.to_vec();
        let mut du = du.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut fact = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::LinearSolve("singular tridiagonal system".into()));
                }
                fact[i] = dl[i] / d[i];
                d[i + 1] -= fact[i] * du[i];
            } else {
                fact[i] = d[i] / dl[i];
                swapped[i] = true;
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact[i] * temp;
                if i + 1 < n - 1 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact[i] * du2[i];
                }
                du[i] = temp;
            }
        }
        if d[n - 1] == 0.0 {
            return Err(Error::LinearSolve("singular tridiagonal system".into()));
        }
        Ok(Self { fact, swapped, d, du, du2 })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.fact[i] * b[i + 1];
            } else {
                b[i + 1] -= self.fact[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Solve a general tridiagonal system for several right-hand sides.
pub fn tridiagonal_solve(dl: &[f64], d: &[f64], du: &[f64], rhs: &mut [&mut Vec<f64>]) -> Result<()> {
    let lu = TridiagonalLu::new(dl, d, du)?;
    for b in rhs.iter_mut() {
        lu.solve_in_place(b);
    }
    Ok(())
}

impl CyclicFactor {
    fn solve_block(&self, b: &mut [f64]) {
        let m = self.n - 1;
        for i in 0..m - 1 {
            if self.ipiv[i] == i {
                b[i + 1] -= self.dl[i] * b[i];
            } else {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            }
        }
        b[m - 1] /= self.d[m - 1];
        if m > 1 {
            b[m - 2] = (b[m - 2] - self.du[m - 2] * b[m - 1]) / self.d[m - 2];
        }
        for i in (0..m.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Solve `(A - sigma) x = b`, overwriting `b`, with two steps of
    /// iterative refinement (the bordered elimination loses accuracy when the
    /// leading block is nearly singular).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let rhs = b.to_vec();
        let rhs_norm = norm(&rhs);
        self.solve_raw(b);
        let mut r = vec![0.0; b.len()];
        for _ in 0..2 {
            self.matrix.apply(b, &mut r);
            for ((ri, bi), fi) in r.iter_mut().zip(b.iter()).zip(&rhs) {
                *ri = fi - (*ri - self.sigma * bi);
            }
            if norm(&r) <= 1e-15 * rhs_norm {
                break;
            }
            self.solve_raw(&mut r);
            for (bi, ri) in b.iter_mut().zip(&r) {
                *bi += ri;
            }
        }
    }

    /// Bordered solve without refinement.
    pub fn solve_raw(&self, b: &mut [f64]) {
        let m = self.n - 1;
        let last = b[m];
        self.solve_block(&mut b[..m]);
        let x_last = (last - dot(&self.border, &b[..m])) / self.schur;
        for (bi, zi) in b[..m].iter_mut().zip(&self.border_solution) {
            *bi -= zi * x_last;
        }
        b[m] = x_last;
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn window_inverse_matches_dense() {
        let m = sample(40);
        let dense = DMatrix::from_fn(40, 40, |i, j| {
            let mut v = if i == j { m.diag[i] - 0.3 } else { 0.0 };
            if (i + 1) % 40 == j {
                v += m.off[i];
            }
            if (j + 1) % 40 == i {
                v += m.off[j];
            }
            v
        });
        let inv = dense.try_inverse().unwrap();
        for (start, len) in [(5, 7), (0, 4), (30, 10), (36, 1)] {
            let block = m.window_inverse(0.3, start, len).unwrap();
            for a in 0..len {
                for b in 0..len {
                    let want = inv[(start + a, start + b)];
                    assert!((block[(a, b)] - want).abs() < 1e-12 * (1.0 + want.abs()), "{start} {len}");
                }
            }
        }
    }

    #[test]
    fn tridiagonal_solve_pivots() {
        // zero leading diagonal forces a row swap
        let dl = vec![1.0, 2.0, -1.0];
        let d = vec![0.0, 3.0, 1.0, 4.0];
        let du = vec![2.0, 1.0, 0.5];
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = vec![
            d[0] * x[0] + du[0] * x[1],
            dl[0] * x[0] + d[1] * x[1] + du[1] * x[2],
            dl[1] * x[1] + d[2] * x[2] + du[2] * x[3],
            dl[2] * x[2] + d[3] * x[3],
        ];
        tridiagonal_solve(&dl, &d, &du, &mut [&mut b]).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    fn sample(n: usize) -> CyclicTridiagonal {
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.37).sin()).collect();
        let off: Vec<f64> = (0..n).map(|i| -1.0 + 0.1 * (i as f64 * 1.3).cos()).collect();
        CyclicTridiagonal::new(diag, off).unwrap()
    }

    fn dense(a: &CyclicTridiagonal) -> DMatrix<f64> {
        let n = a.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += a.diag[i];
            let j = (i + 1) % n;
            m[(i, j)] += a.off[i];
            m[(j, i)] += a.off[i];
        }
        m
    }

    #[test]
    fn counts_match_dense_spectrum() {
        let a = sample(23);
        let eig = super::super::symmetric_eigen(dense(&a)).values;
        for sigma in [-1.0, 0.3, 1.1, 2.0, 2.9, 4.5] {
            let expected = eig.iter().filter(|&&l| l < sigma).count();
            assert_eq!(a.count_below(sigma), expected, "sigma {sigma}");
        }
        let found = a.eigenvalues_in(-10.0, 10.0, 1e-13);
        assert_eq!(found.len(), 23);
        for (f, e) in found.iter().zip(&eig) {
            assert!((f - e).abs() < 1e-11);
        }
    }

    #[test]
    fn shifted_solve_residual() {
        let a = sample(17);
        let b: Vec<f64> = (0..17).map(|i| (i as f64).cos()).collect();
        let f = a.factor(1.234).unwrap();
        let x = f.solve(&b);
        let mut y = vec![0.0; 17];
        a.apply(&x, &mut y);
        for i in 0..17 {
            assert!((y[i] - 1.234 * x[i] - b[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn degenerate_free_levels_counted_twice() {
        // periodic Laplacian: eigenvalues 2 - 2cos(2 pi k / n), doubly degenerate
        let n = 16;
        let a = CyclicTridiagonal::new(vec![2.0; n], vec![-1.0; n]).unwrap();
        let vals = a.eigenvalues_in(-0.5, 0.3, 1e-14);
        let expect = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
        assert_eq!(vals.len(), 3);
        assert!((vals[1] - expect).abs() < 1e-8 && (vals[2] - expect).abs() < 1e-8);
        let (vals, vecs) = a.eigenpairs_in(-0.5, 0.3).unwrap();
        assert!(vals[0].abs() < 1e-13);
        assert!((vals[1] - expect).abs() < 1e-13 && (vals[2] - expect).abs() < 1e-13);
        let vecs = &vecs[1..];
        for v in vecs {
            let mut y = vec![0.0; n];
            a.apply(v, &mut y);
            let r: f64 = y.iter().zip(v).map(|(yi, vi)| (yi - expect * vi).powi(2)).sum();
            assert!(r.sqrt() < 1e-9);
        }
    }
}
