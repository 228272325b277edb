//! Plane-wave discretization of the fiber operators `(D + i p)^2 + V` on the
//! unit cell, their spectra, and Bloch functions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::PotentialSpec;
use crate::linalg::hermitian_eigen;

/// Default per-axis cutoff N for d = 1, 2, 3.
pub fn default_cutoff(dim: usize) -> usize {
    match dim {
        1 => 16,
        2 => 8,
        _ => 4,
    }
}

/// Frequencies `{m in Z^d : |m|_inf <= N}`, last axis fastest.
#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    dim: usize,
    cutoff: usize,
    freqs: Vec<Vec<i32>>,
    index: HashMap<Vec<i32>, usize>,
}

impl PlaneWaveBasis {
    pub fn new(dim: usize, cutoff: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("fiber dimension {dim}")));
        }
        let n = cutoff as i32;
        let side = 2 * cutoff + 1;
        let size = side.pow(dim as u32);
        let mut freqs = Vec::with_capacity(size);
        for flat in 0..size {
            let mut rest = flat;
            let mut m = vec![0i32; dim];
            for axis in (0..dim).rev() {
                m[axis] = (rest % side) as i32 - n;
                rest /= side;
            }
            freqs.push(m);
        }
        let index = freqs.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Ok(Self {
            dim,
            cutoff,
            freqs,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn frequency(&self, row: usize) -> &[i32] {
        &self.freqs[row]
    }

    pub fn row(&self, m: &[i32]) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn frequencies(&self) -> &[Vec<i32>] {
        &self.freqs
    }
}

fn kinetic(m: &[i32], p: &[f64]) -> f64 {
    m.iter()
        .zip(p)
        .map(|(&mi, &pi)| (2.0 * PI * mi as f64 + pi).powi(2))
        .sum()
}

/// Hermitian matrix of the fiber operator: diagonal `|2 pi m + p|^2`,
/// entries `V̂(m - m')`.
pub fn assemble_fiber(p: &[f64], potential: &PotentialSpec, basis: &PlaneWaveBasis) -> Result<DMatrix<Complex64>> {
    if p.len() != basis.dim() || potential.dim() != basis.dim() {
        return Err(Error::InvalidInput("dimension mismatch in fiber assembly".into()));
    }
    for (m, _) in potential.coefficients() {
        if m.iter().any(|v| v.unsigned_abs() as usize > 2 * basis.cutoff()) {
            return Err(Error::BasisTooSmall {
                cutoff: basis.cutoff(),
                frequency: m.clone(),
            });
        }
    }
    let n = basis.len();
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for r in 0..n {
        let m = basis.frequency(r);
        h[(r, r)] = Complex64::new(kinetic(m, p), 0.0);
    }
    for (f, c) in potential.coefficients() {
        for r in 0..n {
            let m = basis.frequency(r);
            let shifted: Vec<i32> = m.iter().zip(f).map(|(a, b)| a - b).collect();
            if let Some(col) = basis.row(&shifted) {
                // row m, column m' = m - f carries V̂(m - m') = V̂(f)
                h[(r, col)] += *c;
            }
        }
    }
    Ok(h)
}

/// Lowest eigenpairs of one fiber.
#[derive(Debug, Clone)]
pub struct FiberSpectrum {
    pub p: Vec<f64>,
    /// Ascending.
    pub values: Vec<f64>,
    /// Plane-wave coefficients of `e_n(., p)`, one column per band.
    pub vectors: DMatrix<Complex64>,
    pub basis: Arc<PlaneWaveBasis>,
}

pub fn fiber_spectrum(
    p: &[f64],
    potential: &PotentialSpec,
    basis: &Arc<PlaneWaveBasis>,
    n_bands: usize,
) -> Result<FiberSpectrum> {
    if n_bands > basis.len() {
        return Err(Error::InvalidInput(format!(
            "requested {n_bands} bands from a basis of size {}",
            basis.len()
        )));
    }
    let h = assemble_fiber(p, potential, basis)?;
    let eig = hermitian_eigen(h);
    if eig.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::FiberSolve {
            p: p.to_vec(),
            reason: "non-finite eigenvalue".into(),
        });
    }
    Ok(FiberSpectrum {
        p: p.to_vec(),
        values: eig.values[..n_bands].to_vec(),
        vectors: eig.vectors.columns(0, n_bands).into_owned(),
        basis: Arc::clone(basis),
    })
}

/// Only the lowest `n_bands` eigenvalues of one fiber.
pub fn fiber_eigenvalues(p: &[f64], potential: &PotentialSpec, basis: &PlaneWaveBasis, n_bands: usize) -> Result<Vec<f64>> {
    let h = assemble_fiber(p, potential, basis)?;
    let mut vals: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::FiberSolve {
            p: p.to_vec(),
            reason: "non-finite eigenvalue".into(),
        });
    }
    vals.truncate(n_bands);
    Ok(vals)
}

/// Spectra at many quasi-momenta, in input order.
pub fn fiber_spectra(
    points: &[Vec<f64>],
    potential: &PotentialSpec,
    basis: &Arc<PlaneWaveBasis>,
    n_bands: usize,
) -> Result<Vec<FiberSpectrum>> {
    points
        .par_iter()
        .map(|p| fiber_spectrum(p, potential, basis, n_bands))
        .collect()
}

/// Uniform periodic grid on the unit cell, `n` points per axis starting at
/// `-1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub dim: usize,
    pub per_axis: usize,
}

impl CellGrid {
    pub fn new(dim: usize, per_axis: usize) -> Self {
        Self { dim, per_axis }
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.per_axis as f64
    }

    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for axis in (0..self.dim).rev() {
            x[axis] = -0.5 + (i % self.per_axis) as f64 * self.spacing();
            i /= self.per_axis;
        }
        x
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}

/// Evaluates `b_n(x, p) = e^{i p.x} sum_m c_m e^{2 pi i m.x}` at any point of
/// R^d; quasi-periodicity is built into the formula.
#[derive(Debug, Clone)]
pub struct BlochEvaluator {
    pub p: Vec<f64>,
    pub band: usize,
    coeffs: Vec<(Vec<i32>, Complex64)>,
}

impl BlochEvaluator {
    pub fn new(fs: &FiberSpectrum, band: usize) -> Result<Self> {
        if band >= fs.values.len() {
            return Err(Error::InvalidInput(format!(
                "band {band} not computed (have {})",
                fs.values.len()
            )));
        }
        let coeffs = (0..fs.basis.len())
            .map(|r| (fs.basis.frequency(r).to_vec(), fs.vectors[(r, band)]))
            .filter(|(_, c)| c.norm() > 1e-16)
            .collect();
        Ok(Self {
            p: fs.p.clone(),
            band,
            coeffs,
        })
    }

    /// Free plane wave `e^{i p.x}` (the V = 0 Bloch function at the bottom of
    /// the first band).
    pub fn plane_wave(p: Vec<f64>) -> Self {
        let dim = p.len();
        Self {
            p,
            band: 0,
            coeffs: vec![(vec![0; dim], Complex64::new(1.0, 0.0))],
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, c) in &self.coeffs {
            let phase: f64 = m
                .iter()
                .zip(x)
                .zip(&self.p)
                .map(|((&mi, &xi), &pi)| (2.0 * PI * mi as f64 + pi) * xi)
                .sum();
            acc += c * Complex64::from_polar(1.0, phase);
        }
        acc
    }

    /// Largest `|2 pi m + p|` among coefficients above `1e-12`.
    pub fn max_wavenumber(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(_, c)| c.norm() > 1e-12)
            .map(|(m, _)| {
                m.iter()
                    .zip(&self.p)
                    .map(|(&mi, &pi)| (2.0 * PI * mi as f64 + pi).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Multiply by a unit scalar.
    pub fn rephase(&mut self, phase: Complex64) {
        for (_, c) in self.coeffs.iter_mut() {
            *c *= phase;
        }
    }
}

/// Bloch function sampled on the unit cell, normalized and phase-fixed.
#[derive(Debug, Clone)]
pub struct BlochFunction {
    pub p: Vec<f64>,
    pub band: usize,
    pub grid: CellGrid,
    pub values: Vec<Complex64>,
    /// Evaluator carrying the same normalization and phase as `values`.
    pub evaluator: BlochEvaluator,
}

impl BlochFunction {
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }
}

/// Sample band `band` on `grid`, normalize to unit L2 norm on the cell and
/// fix the phase so that the first sample with `|b| > 0.1 max|b|` is real
/// and positive.
pub fn bloch_function(fs: &FiberSpectrum, band: usize, grid: &CellGrid) -> Result<BlochFunction> {
    let mut evaluator = BlochEvaluator::new(fs, band)?;
    let mut values: Vec<Complex64> = grid.points().iter().map(|x| evaluator.eval(x)).collect();
    let norm_sq: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
    let scale = 1.0 / norm_sq.sqrt();
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let anchor = values
        .iter()
        .find(|v| v.norm() > 0.1 * max_abs)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = anchor.conj() / anchor.norm();
    let factor = phase * scale;
    values.iter_mut().for_each(|v| *v *= factor);
    evaluator.rephase(factor);
    Ok(BlochFunction {
        p: fs.p.clone(),
        band,
        grid: grid.clone(),
        values,
        evaluator,
    })
}

/// `max |lambda_n(p) - lambda_n(-p)|` over the given quasi-momenta and the
/// lowest `n_bands` bands.
pub fn time_reversal_check(
    potential: &PotentialSpec,
    basis: &PlaneWaveBasis,
    points: &[Vec<f64>],
    n_bands: usize,
) -> Result<f64> {
    let devs: Vec<f64> = points
        .par_iter()
        .map(|p| -> Result<f64> {
            let minus: Vec<f64> = p.iter().map(|v| -v).collect();
            let a = fiber_eigenvalues(p, potential, basis, n_bands)?;
            let b = fiber_eigenvalues(&minus, potential, basis, n_bands)?;
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// `max |lambda_n(p; N) - lambda_n(p; 2N)|` over the given quasi-momenta.
pub fn cutoff_convergence(
    potential: &PotentialSpec,
    cutoff: usize,
    points: &[Vec<f64>],
    n_bands: usize,
) -> Result<f64> {
    let dim = potential.dim();
    let coarse = PlaneWaveBasis::new(dim, cutoff)?;
    let fine = PlaneWaveBasis::new(dim, 2 * cutoff)?;
    let devs: Vec<f64> = points
        .par_iter()
        .map(|p| -> Result<f64> {
            let a = fiber_eigenvalues(p, potential, &coarse, n_bands)?;
            let b = fiber_eigenvalues(p, potential, &fine, n_bands)?;
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Start at the default cutoff and double until the lowest `n_bands`
/// eigenvalues at the probe points agree to `tol` with the doubled basis.
pub fn converged_cutoff(potential: &PotentialSpec, points: &[Vec<f64>], n_bands: usize, tol: f64) -> Result<usize> {
    let mut cutoff = default_cutoff(potential.dim()).max(potential.max_frequency());
    let cap = 4 * cutoff;
    loop {
        if cutoff_convergence(potential, cutoff, points, n_bands)? <= tol {
            return Ok(cutoff);
        }
        if cutoff >= cap {
            return Err(Error::FiberSolve {
                p: points.first().cloned().unwrap_or_default(),
                reason: format!("cutoff convergence to {tol:e} not reached by N = {cutoff}"),
            });
        }
        cutoff *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi2() -> f64 {
        PI * PI
    }

    #[test]
    fn free_fiber_matrices() {
        let basis = PlaneWaveBasis::new(1, 1).unwrap();
        let v = PotentialSpec::zero(1);
        let h = assemble_fiber(&[0.0], &v, &basis).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| h[(i, i)].re).collect();
        assert!((diag[0] - 4.0 * pi2()).abs() < 1e-12);
        assert_eq!(diag[1], 0.0);
        assert!((diag[2] - 4.0 * pi2()).abs() < 1e-12);
        let h = assemble_fiber(&[PI], &v, &basis).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| h[(i, i)].re).collect();
        assert!((diag[0] - pi2()).abs() < 1e-12);
        assert!((diag[1] - pi2()).abs() < 1e-12);
        assert!((diag[2] - 9.0 * pi2()).abs() < 1e-12);
    }

    #[test]
    fn cosine_couples_neighbours() {
        let basis = PlaneWaveBasis::new(1, 1).unwrap();
        let v = PotentialSpec::cosine_sum(1, &[(vec![1], 2.0)]).unwrap();
        let h = assemble_fiber(&[0.0], &v, &basis).unwrap();
        assert_eq!(h[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(h[(1, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(h[(0, 2)], Complex64::new(0.0, 0.0));
        assert!((&h - h.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn basis_too_small_is_rejected() {
        let basis = PlaneWaveBasis::new(1, 1).unwrap();
        let v = PotentialSpec::cosine_sum(1, &[(vec![3], 1.0)]).unwrap();
        assert!(matches!(
            assemble_fiber(&[0.0], &v, &basis),
            Err(Error::BasisTooSmall { .. })
        ));
    }

    #[test]
    fn free_spectra() {
        let basis = Arc::new(PlaneWaveBasis::new(1, 4).unwrap());
        let v = PotentialSpec::zero(1);
        let fs = fiber_spectrum(&[0.0], &v, &basis, 3).unwrap();
        assert!(fs.values[0].abs() < 1e-12);
        assert!((fs.values[1] - 4.0 * pi2()).abs() < 1e-9);
        assert!((fs.values[2] - 4.0 * pi2()).abs() < 1e-9);
        let fs = fiber_spectrum(&[PI], &v, &basis, 2).unwrap();
        assert!((fs.values[0] - pi2()).abs() < 1e-9);
        assert!((fs.values[1] - pi2()).abs() < 1e-9);
    }

    #[test]
    fn free_bloch_functions() {
        let basis = Arc::new(PlaneWaveBasis::new(1, 4).unwrap());
        let v = PotentialSpec::zero(1);
        let grid = CellGrid::new(1, 32);
        let fs = fiber_spectrum(&[0.0], &v, &basis, 1).unwrap();
        let b = bloch_function(&fs, 0, &grid).unwrap();
        for z in &b.values {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        let fs = fiber_spectrum(&[0.3], &v, &basis, 1).unwrap();
        let b = bloch_function(&fs, 0, &grid).unwrap();
        assert!((b.norm_sq() - 1.0).abs() < 1e-10);
        for z in &b.values {
            assert!((z.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let basis = Arc::new(PlaneWaveBasis::new(1, 8).unwrap());
        let v = PotentialSpec::mathieu(1.0);
        let fs = fiber_spectrum(&[0.7], &v, &basis, 6).unwrap();
        let gram = fs.vectors.adjoint() * &fs.vectors;
        let eye = DMatrix::<Complex64>::identity(6, 6);
        assert!((gram - eye).norm() < 1e-10);
    }
}
