//! `X_W(λ) = W^{1/2} (H0 - λ)^{-1} |W|^{1/2}` on the box grid, restricted to
//! the points where `|W|` exceeds a floor. Matrix sense throughout: `H0` is
//! the box matrix and `W` the diagonal of samples, so that
//! `ker(H0 + γW - λ)` and `ker(I + γ X_W(λ))` have the same dimension
//! exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::SpectralGap;
use crate::discrete::TruncatedH0;
use crate::edge_model::W_FLOOR;
use crate::error::{Error, Result};
use crate::lattice::PerturbationSpec;
use crate::linalg::{block_lanczos_largest, symmetric_eigen, LanczosOptions, LinearOperator};

/// Matrices up to this size get a full eigen-decomposition.
pub const FULL_EIGEN_MAX: usize = 1500;
/// Eigenvalues of `X` below this in modulus are treated as absent.
pub const MU_FLOOR: f64 = 1e-10;
/// Relative tolerance deciding the dimension of `ker(I + γX)`.
pub const RANK_TOL: f64 = 1e-8;
/// Pencil roots closer than this (relative) form one eigenvalue.
pub const CLUSTER_TOL: f64 = 1e-9;

/// A sampled `W` restricted to its numerical support.
#[derive(Debug, Clone)]
pub struct Retained {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Retained {
    pub fn from_samples(samples: &[f64], floor: f64) -> Self {
        let max = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let indices: Vec<usize> = (0..samples.len())
            .filter(|&i| max > 0.0 && samples[i].abs() > floor * max)
            .collect();
        let values = indices.iter().map(|&i| samples[i]).collect();
        Self { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }

    pub fn is_nonpositive(&self) -> bool {
        self.values.iter().all(|v| *v <= 0.0)
    }

    pub fn is_definite(&self) -> bool {
        self.is_nonnegative() || self.is_nonpositive()
    }
}

#[derive(Debug, Clone)]
pub struct BsOperator {
    pub lambda: f64,
    pub indices: Vec<usize>,
    pub w: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// `||X - X^T||` before symmetrization (definite case).
    pub symmetry_defect: f64,
    pub definite: bool,
}

impl BsOperator {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Positive eigenvalues above the floor (descending, at most `n_pos`)
    /// and negative ones (ascending, at most `n_neg`). Needs a symmetric
    /// matrix.
    pub fn ranked(&self, n_pos: usize, n_neg: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.definite {
            return Err(Error::InvalidInput("characteristic branches need a definite W".into()));
        }
        let n = self.len();
        if n == 0 {
            return Ok((vec![], vec![]));
        }
        let (mut pos, mut neg) = if n <= FULL_EIGEN_MAX {
            let values = symmetric_eigen(self.matrix.clone()).values;
            let pos: Vec<f64> = values.iter().rev().cloned().take(n_pos).collect();
            let neg: Vec<f64> = values.iter().cloned().take(n_neg).collect();
            (pos, neg)
        } else {
            let top = |sign: f64, k: usize| -> Result<Vec<f64>> {
                if k == 0 {
                    return Ok(vec![]);
                }
                let op = DenseOp {
                    m: &self.matrix,
                    sign,
                };
                let r = block_lanczos_largest(
                    &op,
                    LanczosOptions {
                        nev: k,
                        block: 4,
                        max_basis: (10 * k + 160).min(n),
                        tol: 1e-12,
                        restarts: 4,
                    },
                )?;
                Ok(r.values.iter().map(|v| sign * v).collect())
            };
            (top(1.0, n_pos)?, top(-1.0, n_neg)?)
        };
        pos.retain(|v| *v > MU_FLOOR);
        neg.retain(|v| *v < -MU_FLOOR);
        Ok((pos, neg))
    }

    /// Number of eigenvalues within `RANK_TOL` (relative) of `t`.
    pub fn multiplicity_of(&self, t: f64, search: usize) -> Result<usize> {
        let (pos, neg) = self.ranked(if t > 0.0 { search } else { 0 }, if t < 0.0 { search } else { 0 })?;
        let list = if t > 0.0 { pos } else { neg };
        Ok(list.iter().filter(|m| (*m - t).abs() <= RANK_TOL * t.abs()).count())
    }
}

struct DenseOp<'a> {
    m: &'a DMatrix<f64>,
    sign: f64,
}

impl LinearOperator for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.m.nrows();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for j in 0..n {
                s += self.m[(i, j)] * x[j];
            }
            *yi = self.sign * s;
        });
    }
}

/// A box operator, a sampled `W` and the verified box gap the spectral
/// parameter lives in.
#[derive(Debug)]
pub struct BirmanSchwinger<'a> {
    pub h0: &'a TruncatedH0,
    pub samples: Vec<f64>,
    pub retained: Retained,
    pub gap: SpectralGap,
}

impl<'a> BirmanSchwinger<'a> {
    pub fn new(h0: &'a TruncatedH0, w: &PerturbationSpec, gap: SpectralGap) -> Result<Self> {
        let samples = h0.sample_w(w)?;
        Ok(Self::from_samples(h0, samples, gap))
    }

    pub fn from_samples(h0: &'a TruncatedH0, samples: Vec<f64>, gap: SpectralGap) -> Self {
        let retained = Retained::from_samples(&samples, W_FLOOR);
        Self {
            h0,
            samples,
            retained,
            gap,
        }
    }

    /// Kernel block `G(x_i, x_j)` over retained points, from one kernel
    /// table when the box operator is translation invariant, otherwise by
    /// independent column solves.
    fn green_block(&self, lambda: f64, idx: &[usize]) -> Result<DMatrix<f64>> {
        let res = self.h0.resolvent(lambda)?;
        let n = idx.len();
        if let Some(table) = res.kernel_table() {
            let table = table?;
            let grid = self.h0.grid();
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| idx.iter().map(|&i| table[grid.difference_index(i, idx[j])]).collect())
                .collect();
            return Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]));
        }
        if let Some(block) = res.window_block(idx) {
            match block {
                Ok(b) => return Ok(b),
                // near an eigenvalue of the complementary path; solve in full
                Err(Error::LinearSolve(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let cols: Vec<Vec<f64>> = idx
            .par_iter()
            .map(|&j| {
                let mut e = vec![0.0; self.h0.len()];
                e[j] = 1.0;
                res.solve(&e).map(|u| idx.iter().map(|&i| u[i]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if self.gap.contains(lambda) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "lambda = {lambda} is outside the box gap ({:?}, {})",
                self.gap.lambda_minus, self.gap.lambda_plus
            )))
        }
    }

    pub fn assemble(&self, lambda: f64) -> Result<BsOperator> {
        self.check_lambda(lambda)?;
        let r = &self.retained;
        let g = self.green_block(lambda, &r.indices)?;
        let a: Vec<f64> = r.values.iter().map(|v| v.abs().sqrt()).collect();
        let s: Vec<f64> = r.values.iter().map(|v| v.signum()).collect();
        let mut x = DMatrix::from_fn(r.len(), r.len(), |i, j| s[i] * a[i] * g[(i, j)] * a[j]);
        let definite = r.is_definite();
        let mut defect = 0.0;
        if definite {
            defect = (&x - x.transpose()).norm();
            x = (&x + x.transpose()) * 0.5;
        }
        Ok(BsOperator {
            lambda,
            indices: r.indices.clone(),
            w: r.values.clone(),
            matrix: x,
            symmetry_defect: defect,
            definite,
        })
    }

    /// `k`-th ranked eigenvalue of `X(λ)`: largest positive for `positive`,
    /// else most negative; `None` when fewer than `k` exist.
    pub fn ranked_value(&self, lambda: f64, k: usize, positive: bool) -> Result<Option<f64>> {
        let x = self.assemble(lambda)?;
        let (pos, neg) = x.ranked(if positive { k } else { 0 }, if positive { 0 } else { k })?;
        let list = if positive { pos } else { neg };
        Ok(list.get(k - 1).copied())
    }

    pub fn branches(&self, lambdas: &[f64], n_pos: usize, n_neg: usize) -> Result<BranchTable> {
        if !self.retained.is_definite() {
            return Err(Error::InvalidInput("characteristic branches need a definite W".into()));
        }
        let mut lambdas = lambdas.to_vec();
        lambdas.sort_by(f64::total_cmp);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = lambdas
            .par_iter()
            .map(|&l| self.assemble(l).and_then(|x| x.ranked(n_pos, n_neg)))
            .collect::<Result<_>>()?;
        let (positive, negative) = rows.into_iter().unzip();
        Ok(BranchTable {
            lambdas,
            positive,
            negative,
            retained: self.retained.len(),
            increasing: self.retained.is_nonnegative(),
            gap: self.gap,
        })
    }

    /// Eigenvalues of `H0 + γW` in the gap from `μ_k(λ) = -1/γ`, using the
    /// table to bracket and fresh assemblies to refine.
    pub fn solve_pencil(&self, table: &BranchTable, gamma: f64, tol: f64) -> Result<Vec<PencilRoot>> {
        if gamma == 0.0 {
            return Err(Error::InvalidInput("pencil needs gamma != 0".into()));
        }
        let t = -1.0 / gamma;
        let positive = t > 0.0;
        let n_branches = if positive {
            table.positive.iter().map(Vec::len).max().unwrap_or(0)
        } else {
            table.negative.iter().map(Vec::len).max().unwrap_or(0)
        };
        let scale = 1.0 + self.gap.lambda_plus.abs();
        let probe_hi = self.gap.lambda_plus - 1e-11 * scale;
        let probe_lo = self.gap.lambda_minus.map(|m| m + 1e-11 * scale);
        let mut roots = Vec::new();
        for k in 1..=n_branches.max(1) {
            let mut samples: Vec<(f64, Option<f64>)> = table
                .lambdas
                .iter()
                .zip(if positive { &table.positive } else { &table.negative })
                .map(|(&l, row)| (l, row.get(k - 1).copied()))
                .collect();
            if table.lambdas.last().is_none_or(|&l| l < probe_hi) {
                samples.push((probe_hi, self.ranked_value(probe_hi, k, positive)?));
            }
            if let Some(p) = probe_lo {
                if table.lambdas.first().is_none_or(|&l| l > p) {
                    samples.insert(0, (p, self.ranked_value(p, k, positive)?));
                }
            }
            // absent branch values sit below the floor, on the near-zero side
            let f = |v: Option<f64>| v.map_or(-t, |m| m - t);
            for pair in samples.windows(2) {
                let (fa, fb) = (f(pair[0].1), f(pair[1].1));
                if (fa < 0.0) != (fb < 0.0) {
                    let lambda = self.bracketed_root(pair[0].0, pair[1].0, fa, fb, k, positive, t, tol)?;
                    let x = self.assemble(lambda)?;
                    let kernel = x.multiplicity_of(t, k + 4)?;
                    roots.push(PencilRoot {
                        lambda,
                        branch: k,
                        kernel_dimension: kernel,
                    });
                    break;
                }
            }
        }
        roots.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        Ok(roots)
    }

    #[allow(clippy::too_many_arguments)]
    fn bracketed_root(&self, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, k: usize, positive: bool, t: f64, tol: f64) -> Result<f64> {
        let eval = |l: f64| -> Result<f64> {
            Ok(self
                .ranked_value(l, k, positive)?
                .map_or(-t, |m| m - t))
        };
        let mut side = 0i32;
        let mut secant = true;
        for _ in 0..200 {
            if (b - a).abs() <= tol {
                break;
            }
            let width = b - a;
            let c = if secant && fa.is_finite() && fb.is_finite() {
                let c = (a * fb - b * fa) / (fb - fa);
                if c > a && c < b {
                    c
                } else {
                    0.5 * (a + b)
                }
            } else {
                0.5 * (a + b)
            };
            let fc = eval(c)?;
            if fc == 0.0 {
                return Ok(c);
            }
            if (fc < 0.0) == (fa < 0.0) {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
            // fall back to bisection when a step fails to halve the bracket
            secant = (b - a) <= 0.5 * width || !secant;
        }
        Ok(0.5 * (a + b))
    }
}

/// A `λ` grid accumulating at an edge: `edge ∓ scale 2^{-i}`, `i = 0..=n`.
pub fn edge_grid(edge: f64, scale: f64, n: usize, below: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n)
        .map(|i| {
            let d = scale * 0.5f64.powi(i as i32);
            if below {
                edge - d
            } else {
                edge + d
            }
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PencilRoot {
    pub lambda: f64,
    pub branch: usize,
    /// `dim ker(I + γ X(λ))` at the root.
    pub kernel_dimension: usize,
}

/// Group pencil roots closer than `CLUSTER_TOL` into eigenvalues with
/// multiplicity.
pub fn cluster_roots(roots: &[PencilRoot]) -> Vec<(f64, usize)> {
    cluster(&roots.iter().map(|r| r.lambda).collect::<Vec<_>>())
}

pub fn cluster(values: &[f64]) -> Vec<(f64, usize)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((last, n, sum)) if (x - *last).abs() <= CLUSTER_TOL * (1.0 + x.abs()) => {
                *n += 1;
                *sum += x;
                *last = x;
            }
            _ => out.push((x, 1, x)),
        }
    }
    out.into_iter().map(|(_, n, s)| (s / n as f64, n)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchTable {
    pub lambdas: Vec<f64>,
    /// Per `λ`: positive eigenvalues, descending.
    pub positive: Vec<Vec<f64>>,
    /// Per `λ`: negative eigenvalues, ascending.
    pub negative: Vec<Vec<f64>>,
    pub retained: usize,
    /// Branches grow with `λ` (true for `W >= 0`).
    pub increasing: bool,
    pub gap: SpectralGap,
}

impl BranchTable {
    pub fn branch(&self, k: usize, positive: bool) -> Vec<Option<f64>> {
        let rows = if positive { &self.positive } else { &self.negative };
        rows.iter().map(|r| r.get(k - 1).copied()).collect()
    }

    /// Largest drop against the expected direction between consecutive
    /// samples, over all branches where both samples exist.
    pub fn monotonicity_defect(&self) -> f64 {
        let sign = if self.increasing { 1.0 } else { -1.0 };
        let mut worst = 0.0f64;
        for rows in [&self.positive, &self.negative] {
            let n = rows.iter().map(Vec::len).max().unwrap_or(0);
            for k in 0..n {
                for i in 0..rows.len().saturating_sub(1) {
                    if let (Some(a), Some(b)) = (rows[i].get(k), rows[i + 1].get(k)) {
                        worst = worst.max(sign * (a - b));
                    }
                }
            }
        }
        worst
    }

    /// First sampled `λ` where branch `k` exists.
    pub fn endpoint(&self, k: usize, positive: bool) -> Option<f64> {
        self.branch(k, positive)
            .iter()
            .zip(&self.lambdas)
            .find(|(v, _)| v.is_some())
            .map(|(_, l)| *l)
    }

    fn near_edge(&self, k: usize, min_dist: f64, max_dist: f64) -> Vec<(f64, f64)> {
        self.branch(k, true)
            .iter()
            .zip(&self.lambdas)
            .filter_map(|(v, l)| {
                let d = self.gap.lambda_plus - l;
                v.filter(|_| d >= min_dist * (1.0 - 1e-12) && d <= max_dist * (1.0 + 1e-12))
                    .map(|m| (d, m))
            })
            .collect()
    }

    /// Least-squares slope of `ln μ_k` against `ln(λ+ - λ)` over samples
    /// with distance to the upper edge in `[min_dist, max_dist]`.
    pub fn divergence_exponent(&self, k: usize, min_dist: f64, max_dist: f64) -> Option<LineFit> {
        let pts: Vec<(f64, f64)> = self
            .near_edge(k, min_dist, max_dist)
            .into_iter()
            .map(|(d, m)| (d.ln(), m.ln()))
            .collect();
        LineFit::new(&pts)
    }

    /// Fit of `μ_k` against `ln(1/(λ+ - λ))`.
    pub fn log_fit(&self, k: usize, min_dist: f64, max_dist: f64) -> Option<LineFit> {
        let pts: Vec<(f64, f64)> = self
            .near_edge(k, min_dist, max_dist)
            .into_iter()
            .map(|(d, m)| ((1.0 / d).ln(), m))
            .collect();
        LineFit::new(&pts)
    }

    /// Largest modulus of the negative branches over the table.
    pub fn max_negative(&self) -> f64 {
        self.negative
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Ordinary least-squares line with its coefficient of determination.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LineFit {
    pub fn new(pts: &[(f64, f64)]) -> Option<Self> {
        let n = pts.len();
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let ss_res: f64 = pts
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum();
        Some(Self {
            slope,
            intercept: my - slope * mx,
            r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
            points: n,
        })
    }
}

/// `Re X_W`, `X_{W+}` and `X_{W-}` on the support of `|W|`.
#[derive(Debug, Clone)]
pub struct IndefiniteSplit {
    pub lambda: f64,
    pub re_x: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    pub x_minus: DMatrix<f64>,
    /// `||Re X_W - (X_{W+} - X_{W-})||`.
    pub residual: f64,
    /// `residual / ||Re X_W||`; the Green block diverges at the edge, so
    /// this is the scale-free measure.
    pub relative_residual: f64,
}

pub fn indefinite_split(bs: &BirmanSchwinger, lambda: f64) -> Result<IndefiniteSplit> {
    bs.check_lambda(lambda)?;
    let r = &bs.retained;
    let g = bs.green_block(lambda, &r.indices)?;
    let n = r.len();
    let a: Vec<f64> = r.values.iter().map(|v| v.abs().sqrt()).collect();
    let s: Vec<f64> = r.values.iter().map(|v| v.signum()).collect();
    let x = DMatrix::from_fn(n, n, |i, j| s[i] * a[i] * g[(i, j)] * a[j]);
    let re_x = (&x + x.transpose()) * 0.5;
    let part = |sign: f64| {
        DMatrix::from_fn(n, n, |i, j| {
            if s[i] == sign && s[j] == sign {
                a[i] * g[(i, j)] * a[j]
            } else {
                0.0
            }
        })
    };
    let x_plus = part(1.0);
    let x_minus = part(-1.0);
    let residual = (&re_x - (&x_plus - &x_minus)).norm();
    let relative_residual = residual / re_x.norm().max(f64::MIN_POSITIVE);
    Ok(IndefiniteSplit {
        relative_residual,
        lambda,
        re_x,
        x_plus,
        x_minus,
        residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicityRow {
    pub gamma: f64,
    /// Near-edge eigenvalues with multiplicities.
    pub clusters: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub bound: usize,
    pub rows: Vec<MultiplicityRow>,
    pub max_multiplicity: usize,
    pub within_bound: bool,
}

/// Oracle multiplicities of the eigenvalues of `H0 + γW` within `window`
/// (near an edge) against `bound`.
pub fn multiplicity_bound_check(
    h0: &TruncatedH0,
    w: &PerturbationSpec,
    gap: &SpectralGap,
    gammas: &[f64],
    window: (f64, f64),
    bound: usize,
) -> Result<MultiplicityReport> {
    let rows: Vec<MultiplicityRow> = gammas
        .iter()
        .map(|&g| {
            crate::oracle::gap_spectrum(h0, w, gap, g, window, false).map(|r| MultiplicityRow {
                gamma: g,
                clusters: r.clusters,
            })
        })
        .collect::<Result<_>>()?;
    let max_multiplicity = rows
        .iter()
        .flat_map(|r| r.clusters.iter().map(|c| c.1))
        .max()
        .unwrap_or(0);
    Ok(MultiplicityReport {
        bound,
        within_bound: max_multiplicity <= bound,
        rows,
        max_multiplicity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PotentialSpec;

    fn free_1d(l: usize, per: usize) -> TruncatedH0 {
        TruncatedH0::finite_difference(&PotentialSpec::zero(1), l, per).unwrap()
    }

    #[test]
    fn single_site_weight_gives_scalar_green() {
        let h0 = free_1d(2, 4);
        let gap = h0.discrete_gap(0).unwrap();
        let mut s = vec![0.0; h0.len()];
        s[5] = 0.7;
        let bs = BirmanSchwinger::from_samples(&h0, s, gap);
        let x = bs.assemble(-0.4).unwrap();
        assert_eq!(x.len(), 1);
        // dense inverse as the independent reference
        let n = h0.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut y = vec![0.0; n];
            h0.apply(&e, &mut y);
            y[i] + if i == j { 0.4 } else { 0.0 }
        });
        let inv = m.try_inverse().unwrap();
        assert!((x.matrix[(0, 0)] - 0.7 * inv[(5, 5)]).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_gives_empty_operator() {
        let h0 = free_1d(2, 4);
        let gap = h0.discrete_gap(0).unwrap();
        let bs = BirmanSchwinger::new(&h0, &PerturbationSpec::zero(1), gap).unwrap();
        assert!(bs.assemble(-1.0).unwrap().is_empty());
    }

    #[test]
    fn pencil_inverts_a_branch_sample() {
        let h0 = free_1d(6, 16);
        let gap = h0.discrete_gap(0).unwrap();
        let bs = BirmanSchwinger::new(&h0, &PerturbationSpec::unit_box(1), gap).unwrap();
        let lambdas = edge_grid(gap.lambda_plus, 0.25, 12, true);
        let table = bs.branches(&lambdas, 3, 0).unwrap();
        assert!(table.monotonicity_defect() <= 1e-9);
        let star = lambdas[7];
        let mu = table.positive[7][0];
        let roots = bs.solve_pencil(&table, -1.0 / mu, 1e-13).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].lambda - star).abs() < 1e-10);
        assert_eq!(roots[0].kernel_dimension, 1);
    }

    #[test]
    fn disjoint_signed_boxes_split_exactly() {
        let h0 = free_1d(4, 16);
        let gap = h0.discrete_gap(0).unwrap();
        let w = PerturbationSpec::new(
            1,
            crate::lattice::PerturbationKind::SignedSum,
            vec![
                crate::lattice::Bump::Box {
                    center: vec![-1.0],
                    half_width: vec![0.5],
                    amplitude: 1.0,
                },
                crate::lattice::Bump::Box {
                    center: vec![1.0],
                    half_width: vec![0.4],
                    amplitude: -2.0,
                },
            ],
        )
        .unwrap();
        let bs = BirmanSchwinger::new(&h0, &w, gap).unwrap();
        let split = indefinite_split(&bs, -0.3).unwrap();
        assert!(split.residual < 1e-10);
        let neg = BirmanSchwinger::new(&h0, &w.negated(), gap).unwrap();
        let flipped = indefinite_split(&neg, -0.3).unwrap();
        assert!((&split.x_plus - &flipped.x_minus).norm() < 1e-14);
        assert!((&split.x_minus - &flipped.x_plus).norm() < 1e-14);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let f = LineFit::new(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }
}
