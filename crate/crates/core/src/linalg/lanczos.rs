//! Block Lanczos with full reorthogonalization for the largest eigenvalues
//! of a symmetric operator. Used on shift-inverted operators, so "largest"
//! means "closest to the shift". Block size above one resolves exact
//! degeneracies up to the block size.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{axpy, dot, generic_vector, norm, symmetric_eigen};

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub nev: usize,
    pub block: usize,
    pub max_basis: usize,
    /// Relative residual `||T y - theta y|| <= tol * |theta|`.
    pub tol: f64,
    /// Explicit restarts from the current Ritz vectors once the basis is full.
    pub restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            nev: 4,
            block: 4,
            max_basis: 400,
            tol: 1e-11,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Descending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub basis_size: usize,
}

fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64], coeffs: &mut [f64]) {
    for _ in 0..2 {
        let c: Vec<f64> = basis.par_iter().map(|q| dot(q, w)).collect();
        for (q, ci) in basis.iter().zip(&c) {
            axpy(-ci, q, w);
        }
        for (acc, ci) in coeffs.iter_mut().zip(&c) {
            *acc += ci;
        }
    }
}

pub fn block_lanczos_largest<T: LinearOperator + ?Sized>(op: &T, opts: LanczosOptions) -> Result<LanczosResult> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Eigensolver("empty operator".into()));
    }
    let b = opts.block.max(1).min(n);
    let mut seed = 0usize;
    let mut start: Vec<Vec<f64>> = Vec::new();
    let mut attempt = 0;
    loop {
        match cycle(op, &opts, b, &mut seed, &start)? {
            Cycle::Converged(r) => return Ok(r),
            Cycle::Stalled { vectors, worst, basis } => {
                if attempt >= opts.restarts {
                    return Err(Error::Eigensolver(format!(
                        "block Lanczos did not converge within basis {basis} after {attempt} restarts (worst residual {worst:e})"
                    )));
                }
                attempt += 1;
                start = vectors;
            }
        }
    }
}

enum Cycle {
    Converged(LanczosResult),
    Stalled { vectors: Vec<Vec<f64>>, worst: f64, basis: usize },
}

fn cycle<T: LinearOperator + ?Sized>(
    op: &T,
    opts: &LanczosOptions,
    b: usize,
    seed: &mut usize,
    start: &[Vec<f64>],
) -> Result<Cycle> {
    let n = op.dim();
    let nev = opts.nev.min(n);
    // a restart keeps every wanted Ritz vector in the first block
    let b = b.max(start.len()).min(n);
    let max_basis = opts.max_basis.min(n).max(nev + b);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    // columns of the projected matrix, each of length max_basis + b
    let mut h: Vec<Vec<f64>> = Vec::new();

    let mut block: Vec<Vec<f64>> = Vec::with_capacity(b);
    for k in 0..b {
        let mut v = match start.get(k) {
            Some(x) => x.clone(),
            None => {
                *seed += 1;
                generic_vector(n, *seed - 1)
            }
        };
        let mut scratch = vec![0.0; basis.len() + block.len()];
        let all: Vec<Vec<f64>> = basis.iter().chain(block.iter()).cloned().collect();
        reorthogonalize(&all, &mut v, &mut scratch);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        block.push(v);
    }
    basis.extend(block);

    let mut scale = 0.0f64;
    let mut last_check = 0usize;
    loop {
        let start = basis.len() - b;
        let images: Vec<Vec<f64>> = (start..basis.len())
            .into_par_iter()
            .map(|j| {
                let mut y = vec![0.0; n];
                op.apply(&basis[j], &mut y);
                y
            })
            .collect();

        let mut residual_block = Vec::with_capacity(b);
        for w in images {
            let mut w = w;
            let mut coeffs = vec![0.0; basis.len()];
            reorthogonalize(&basis, &mut w, &mut coeffs);
            scale = scale.max(coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs())));
            let mut col = vec![0.0; max_basis + b];
            col[..coeffs.len()].copy_from_slice(&coeffs);
            h.push(col);
            residual_block.push(w);
        }

        // Orthonormalize the residual block (modified Gram-Schmidt), filling
        // the coupling rows of the projected matrix.
        let m = basis.len();
        let mut new_block: Vec<Vec<f64>> = Vec::with_capacity(b);
        let mut coupling = DMatrix::<f64>::zeros(b, b);
        for (j, mut w) in residual_block.into_iter().enumerate() {
            for _ in 0..2 {
                for (i, q) in new_block.iter().enumerate() {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                    coupling[(i, j)] += c;
                }
            }
            let nw = norm(&w);
            if nw > 1e-12 * scale.max(1e-300) {
                w.iter_mut().for_each(|x| *x /= nw);
                coupling[(new_block.len(), j)] = nw;
            } else {
                // invariant subspace found in this direction; restart with a
                // fresh generic vector
                w = generic_vector(n, *seed);
                *seed += 1;
                let all: Vec<Vec<f64>> = basis.iter().chain(new_block.iter()).cloned().collect();
                let mut scratch = vec![0.0; all.len()];
                reorthogonalize(&all, &mut w, &mut scratch);
                let nw = norm(&w);
                w.iter_mut().for_each(|x| *x /= nw);
            }
            new_block.push(w);
        }
        for (jj, col) in h[m - b..].iter_mut().enumerate() {
            for i in 0..b {
                col[m + i] = coupling[(i, jj)];
            }
        }

        let exhausted = m + b > max_basis || m + b > n;
        let check_due = m >= nev && (m < 240 || m - last_check >= 40 || exhausted);
        if check_due {
            last_check = m;
            let mut hm = DMatrix::<f64>::zeros(m, m);
            for (j, col) in h.iter().enumerate().take(m) {
                for i in 0..m {
                    hm[(i, j)] = col[i];
                }
            }
            let hm = (&hm + hm.transpose()) * 0.5;
            let eig = symmetric_eigen(hm);
            let mut values = Vec::with_capacity(nev);
            let mut residuals = Vec::with_capacity(nev);
            let mut ys = Vec::with_capacity(nev);
            let mut all_ok = true;
            for k in 0..nev {
                let idx = m - 1 - k;
                let theta = eig.values[idx];
                let y = eig.vectors.column(idx);
                let mut res = 0.0;
                for i in 0..b {
                    let mut s = 0.0;
                    for jj in 0..b {
                        s += coupling[(i, jj)] * y[m - b + jj];
                    }
                    res += s * s;
                }
                let res = res.sqrt();
                if res > opts.tol * theta.abs().max(f64::MIN_POSITIVE) {
                    all_ok = false;
                }
                values.push(theta);
                residuals.push(res);
                ys.push(y.clone_owned());
            }
            if all_ok || exhausted {
                let vectors = ys
                    .par_iter()
                    .map(|y| {
                        let mut v = vec![0.0; n];
                        for (i, q) in basis.iter().enumerate() {
                            axpy(y[i], q, &mut v);
                        }
                        v
                    })
                    .collect();
                if !all_ok {
                    return Ok(Cycle::Stalled {
                        vectors,
                        worst: residuals.iter().cloned().fold(0.0, f64::max),
                        basis: m,
                    });
                }
                return Ok(Cycle::Converged(LanczosResult {
                    values,
                    vectors,
                    residuals,
                    basis_size: m,
                }));
            }
        } else if exhausted {
            return Err(Error::Eigensolver("Lanczos basis exhausted".into()));
        }
        basis.extend(new_block);
    }
}
