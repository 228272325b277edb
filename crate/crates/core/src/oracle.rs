//! Direct diagonalization of `H0 + γW` on the box: the reference the
//! asymptotic predictions and the pencil are measured against.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::SpectralGap;
use crate::birman_schwinger::cluster;
use crate::discrete::{lowest_eigenpairs, Discretization, TruncatedH0};
use crate::edge_model::W_FLOOR;
use crate::error::{Error, Result};
use crate::lattice::PerturbationSpec;
use crate::linalg::symmetric_eigen;
use crate::predictor::Law;

/// Largest accepted eigen-residual `||H ψ - λ ψ||`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub gamma: f64,
    pub window: (f64, f64),
    /// Ascending.
    pub values: Vec<f64>,
    pub clusters: Vec<(f64, usize)>,
    /// Unit vectors (Euclidean), present on request.
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub discretization: Discretization,
    /// The window reaches a box band edge; levels there may hybridize with
    /// band states.
    pub touches_edge: bool,
}

impl OracleResult {
    /// Distances of the levels below the upper box edge `edge`, deepest
    /// first.
    pub fn depths_below(&self, edge: f64) -> Vec<f64> {
        self.values.iter().map(|v| edge - v).collect()
    }
}

pub fn gap_spectrum(
    h0: &TruncatedH0,
    w: &PerturbationSpec,
    gap: &SpectralGap,
    gamma: f64,
    window: (f64, f64),
    with_vectors: bool,
) -> Result<OracleResult> {
    let samples = h0.sample_w(w)?;
    gap_spectrum_sampled(h0, &samples, gap, gamma, window, with_vectors)
}

/// As `gap_spectrum` with `W` given by its grid samples. `gap` is the
/// verified box gap; the window must lie in its closure.
pub fn gap_spectrum_sampled(
    h0: &TruncatedH0,
    samples: &[f64],
    gap: &SpectralGap,
    gamma: f64,
    window: (f64, f64),
    with_vectors: bool,
) -> Result<OracleResult> {
    let (lo, hi) = window;
    let tol = 1e-12 * (1.0 + gap.lambda_plus.abs());
    let inside = lo < hi && hi <= gap.lambda_plus + tol && gap.lambda_minus.is_none_or(|m| lo >= m - tol);
    if !inside {
        return Err(Error::InvalidInput(format!(
            "window ({lo}, {hi}) is not inside the box gap ({:?}, {})",
            gap.lambda_minus, gap.lambda_plus
        )));
    }
    let touches_edge = hi >= gap.lambda_plus - tol || gap.lambda_minus.is_some_and(|m| lo <= m + tol);
    let shift: Vec<f64> = samples.iter().map(|s| gamma * s).collect();
    let n = h0.len();
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if gamma == 0.0 {
        (vec![], vec![])
    } else if let Some(m) = h0.cyclic_matrix() {
        m.with_diagonal_shift(&shift).eigenpairs_in(lo, hi)?
    } else if let Some(m) = h0.dense_matrix() {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += shift[i];
        }
        let e = symmetric_eigen(a);
        e.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= lo && **v < hi)
            .map(|(i, v)| (*v, e.vectors.column(i).iter().cloned().collect()))
            .unzip()
    } else {
        if !gap.is_semi_infinite() {
            return Err(Error::Unsupported(
                "iterative oracle works below the spectrum only".into(),
            ));
        }
        let bottom = h0.spectrum_bottom()?;
        let lowest_shift = shift.iter().cloned().fold(0.0, f64::min);
        if lowest_shift >= 0.0 {
            // H0 + γW >= H0 >= bottom: nothing below the spectrum
            (vec![], vec![])
        } else {
            let apply = |x: &[f64], y: &mut [f64]| h0.apply_shifted(&shift, x, y);
            let sigma0 = bottom + 1.1 * lowest_shift - 1e-3 * (1.0 + bottom.abs());
            let pre0 = h0.shifted_inverse_symbol(sigma0).unwrap();
            let first = lowest_eigenpairs(n, apply, |x: &[f64], y: &mut [f64]| h0.precondition(&pre0, x, y), sigma0, 1, None)?;
            let rho1 = first.values[0];
            if rho1 >= hi {
                (vec![], vec![])
            } else {
                let sigma = rho1 - 0.1 * (bottom - rho1).max(1e-12);
                let pre = h0.shifted_inverse_symbol(sigma).unwrap();
                let e = lowest_eigenpairs(n, apply, |x: &[f64], y: &mut [f64]| h0.precondition(&pre, x, y), sigma, 4, Some(hi))?;
                e.values.into_iter().zip(e.vectors).filter(|(v, _)| *v < hi).unzip()
            }
        }
    };
    let mut pairs: Vec<(f64, Vec<f64>)> = values.into_iter().zip(vectors).filter(|(v, _)| *v > lo && *v < hi).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut max_residual = 0.0f64;
    for (v, psi) in &pairs {
        let mut y = vec![0.0; n];
        h0.apply_shifted(&shift, psi, &mut y);
        let nrm = crate::linalg::norm(psi);
        let r = y.iter().zip(psi).map(|(a, b)| (a - v * b).powi(2)).sum::<f64>().sqrt() / nrm;
        max_residual = max_residual.max(r);
    }
    if max_residual > EIGEN_RESIDUAL {
        return Err(Error::Eigensolver(format!(
            "oracle eigen-residual {max_residual:e} exceeds {EIGEN_RESIDUAL:e}"
        )));
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    Ok(OracleResult {
        gamma,
        window,
        clusters: cluster(&values),
        values,
        vectors: if with_vectors {
            pairs
                .into_iter()
                .map(|(_, mut v)| {
                    let nv = crate::linalg::norm(&v);
                    v.iter_mut().for_each(|x| *x /= nv);
                    v
                })
                .collect()
        } else {
            vec![]
        },
        max_residual,
        discretization: h0.discretization(),
        touches_edge,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationRow {
    pub k: usize,
    /// `||u_k Q - g_k||` after optimal alignment within the group.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationTable {
    pub rows: Vec<DeviationRow>,
    pub count_mismatch: bool,
}

/// Compares `u_k = √W ψ_k / ||√W ψ_k||` with model functions
/// `g_k = √W b_k`, where `model(k, x)` returns the smooth factor `b_k(x)`.
/// Both sides carry the same sampled `√W` and are normalized in the
/// discrete L2 norm. Within each group (indices of levels sharing one `ν`), the
/// oracle functions are rotated by the unitary that best fits the model
/// (orthogonal Procrustes), which covers the freedom of basis choice.
pub fn eigenfunction_compare(
    h0: &TruncatedH0,
    w_samples: &[f64],
    oracle_vectors: &[Vec<f64>],
    model: &dyn Fn(usize, &[f64]) -> Complex64,
    groups: &[Vec<usize>],
) -> DeviationTable {
    let n_model: usize = groups.iter().map(Vec::len).sum();
    let count_mismatch = n_model != oracle_vectors.len();
    let max_w = w_samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let support: Vec<usize> = (0..w_samples.len())
        .filter(|&i| w_samples[i] > W_FLOOR * max_w)
        .collect();
    let grid = h0.grid();
    let points: Vec<Vec<f64>> = support.iter().map(|&i| grid.point(i)).collect();
    let normalize = |v: Vec<Complex64>| {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|c| c / n).collect::<Vec<_>>()
    };
    let mut rows = Vec::new();
    for group in groups {
        if group.iter().any(|&k| k >= oracle_vectors.len()) {
            continue;
        }
        let r = group.len();
        let us: Vec<Vec<Complex64>> = group
            .iter()
            .map(|&k| {
                normalize(
                    support
                        .iter()
                        .map(|&i| Complex64::new(w_samples[i].max(0.0).sqrt() * oracle_vectors[k][i], 0.0))
                        .collect(),
                )
            })
            .collect();
        let gs: Vec<Vec<Complex64>> = group
            .iter()
            .map(|&k| {
                normalize(
                    support
                        .iter()
                        .zip(&points)
                        .map(|(&i, x)| model(k, x) * w_samples[i].max(0.0).sqrt())
                        .collect(),
                )
            })
            .collect();
        let m = DMatrix::from_fn(r, r, |i, j| {
            us[i].iter().zip(&gs[j]).map(|(a, b)| a.conj() * b).sum::<Complex64>()
        });
        let svd = m.svd(true, true);
        let q = svd.u.unwrap() * svd.v_t.unwrap();
        for (col, &k) in group.iter().enumerate() {
            let dev = (0..support.len())
                .map(|p| {
                    let aligned: Complex64 = (0..r).map(|i| us[i][p] * q[(i, col)]).sum();
                    (aligned - gs[col][p]).norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            rows.push(DeviationRow { k, deviation: dev });
        }
    }
    DeviationTable { rows, count_mismatch }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceFit {
    /// Intercept and slope of `f(depth)/|γ| = A + B γ`.
    pub a_fit: f64,
    pub b_fit: f64,
    pub a_theory: f64,
    pub a_rel_error: f64,
    /// `|depth_oracle / depth_pred - 1|` per γ.
    pub depth_rel_errors: Vec<f64>,
    /// Ratios of consecutive depth errors (γ_i over γ_{i+1}).
    pub error_ratios: Vec<f64>,
    /// Observed order `log2` of the error ratios.
    pub orders: Vec<f64>,
    pub monotone: bool,
}

/// Fit of `f(δ(γ))/|γ|` against `γ` for oracle depths `δ` at the couplings
/// `gammas` (ordered by decreasing `|γ|`), with `A_theory` the predicted
/// limit.
pub fn convergence_study(law: Law, calibration: f64, gammas: &[f64], depths: &[f64], a_theory: f64) -> Result<ConvergenceFit> {
    if gammas.len() < 3 || gammas.len() != depths.len() {
        return Err(Error::InvalidInput("convergence study needs at least 3 matching points".into()));
    }
    let ys: Vec<f64> = gammas
        .iter()
        .zip(depths)
        .map(|(g, d)| law.transform(*d, calibration) / g.abs())
        .collect();
    let pts: Vec<(f64, f64)> = gammas.iter().cloned().zip(ys.iter().cloned()).collect();
    let fit = crate::birman_schwinger::LineFit::new(&pts)
        .ok_or_else(|| Error::InvalidInput("degenerate coupling set".into()))?;
    let depth_rel_errors: Vec<f64> = gammas
        .iter()
        .zip(depths)
        .map(|(g, d)| (d / law.depth(g.abs() * a_theory, calibration) - 1.0).abs())
        .collect();
    let error_ratios: Vec<f64> = depth_rel_errors.windows(2).map(|p| p[0] / p[1]).collect();
    let orders = error_ratios.iter().map(|r| r.log2()).collect();
    let monotone = depths.windows(2).all(|p| p[0] > p[1]);
    Ok(ConvergenceFit {
        a_fit: fit.intercept,
        b_fit: fit.slope,
        a_theory,
        a_rel_error: (fit.intercept / a_theory - 1.0).abs(),
        depth_rel_errors,
        error_ratios,
        orders,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::BackendKind;
    use crate::lattice::PotentialSpec;

    #[test]
    fn zero_coupling_leaves_the_gap_empty() {
        let h0 = TruncatedH0::finite_difference(&PotentialSpec::mathieu(1.0), 4, 16).unwrap();
        let gap = h0.discrete_gap(1).unwrap();
        let lo = gap.lambda_minus.unwrap();
        let r = gap_spectrum(&h0, &PerturbationSpec::unit_box(1), &gap, 0.0, (lo, gap.lambda_plus), false).unwrap();
        assert!(r.values.is_empty());
    }

    #[test]
    fn iterative_and_cyclic_oracles_agree() {
        let v = PotentialSpec::zero(1);
        let cyc = TruncatedH0::finite_difference(&v, 8, 8).unwrap();
        let sym = TruncatedH0::finite_difference_with(&v, 8, 8, BackendKind::Symbol).unwrap();
        let w = PerturbationSpec::gaussian(vec![0.0], 0.7, 1.0);
        let gap = cyc.discrete_gap(0).unwrap();
        let a = gap_spectrum(&cyc, &w, &gap, -3.0, (-10.0, 0.0), true).unwrap();
        let b = gap_spectrum(&sym, &w, &gap, -3.0, (-10.0, 0.0), true).unwrap();
        assert!(!a.values.is_empty());
        assert_eq!(a.values.len(), b.values.len());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn orthogonal_model_deviates_by_root_two() {
        let h0 = TruncatedH0::finite_difference(&PotentialSpec::zero(1), 2, 8).unwrap();
        let w = h0.sample_w(&PerturbationSpec::unit_box(1)).unwrap();
        let psi: Vec<f64> = (0..h0.len()).map(|i| if w[i] > 0.0 { 1.0 } else { 0.0 }).collect();
        let same = eigenfunction_compare(&h0, &w, &[psi.clone()], &|_, _| Complex64::new(1.0, 0.0), &[vec![0]]);
        assert!(same.rows[0].deviation < 1e-14);
        let odd = eigenfunction_compare(&h0, &w, &[psi], &|_, x| Complex64::new(x[0], 0.0), &[vec![0]]);
        assert!((odd.rows[0].deviation - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_law_data_recovers_the_constant() {
        let a = 0.37;
        let gammas = [-0.4, -0.2, -0.1, -0.05];
        let law = Law::D1Sqrt;
        let depths: Vec<f64> = gammas.iter().map(|g: &f64| law.depth(g.abs() * a * (1.0 + 0.3 * g), 1.0)).collect();
        let fit = convergence_study(law, 1.0, &gammas, &depths, a).unwrap();
        assert!((fit.a_fit - a).abs() < 1e-12);
        assert!((fit.b_fit - 0.3 * a).abs() < 1e-12);
        for r in &fit.error_ratios {
            assert!((r - 2.0).abs() < 0.3);
        }
    }
}
