//! Edge data entering the weak-coupling laws: weighted Bloch functions,
//! their Gram matrix and the eigenvalues `nu_k` of the finite-rank operator
//! `G_W` (isolated extrema), and the integral operator `G_W` over an
//! extremal manifold (synthetic Morse-Bott edges).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{synthetic_edge, EdgeSide, EdgeTolerances, ExtremalSet, GapEdge, SyntheticDispersion};
use crate::error::{Error, Result};
use crate::fiber::BlochEvaluator;
use crate::lattice::PerturbationSpec;
use crate::linalg::hermitian_eigen;
use crate::quadrature::{QuadratureOptions, WeightedQuadrature};

/// Weights below this fraction of the largest are dropped.
pub const W_FLOOR: f64 = 1e-14;

/// `v_k = sqrt(W) b_k` sampled on a W-weighted quadrature: entry i holds
/// `sqrt(w_i) b_k(x_i)`, so plain sums are L2 inner products.
#[derive(Debug, Clone)]
pub struct WeightedBloch {
    pub extremum: usize,
    pub p: Vec<f64>,
    pub mass: f64,
    pub values: Vec<Complex64>,
    pub norm_sq: f64,
    /// `|norm_sq|` change when the quadrature is refined.
    pub refinement_delta: f64,
    pub bloch: BlochEvaluator,
}

impl WeightedBloch {
    /// Same function multiplied by a unit scalar.
    pub fn rephased(&self, phase: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= phase);
        out.bloch.rephase(phase);
        out
    }

    fn inner(&self, other: &WeightedBloch) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum()
    }
}

fn bloch_norm_sq(bloch: &BlochEvaluator, q: &WeightedQuadrature) -> f64 {
    q.points
        .par_iter()
        .zip(&q.weights)
        .map(|(x, w)| w * bloch.eval(x).norm_sqr())
        .sum()
}

/// Weighted Bloch functions for every extremum of a non-degenerate edge.
pub fn weighted_blochs(edge: &GapEdge, w: &PerturbationSpec) -> Result<Vec<WeightedBloch>> {
    if !w.is_definite() {
        return Err(Error::InvalidInput(
            "weighted Bloch functions need W >= 0; use the indefinite Birman-Schwinger path".into(),
        ));
    }
    if w.dim() != edge.dim {
        return Err(Error::InvalidInput("W and edge dimensions differ".into()));
    }
    let extrema = edge.extrema();
    if extrema.is_empty() {
        return Err(Error::InvalidInput("edge has no isolated extrema".into()));
    }
    let blochs: Vec<BlochEvaluator> = extrema
        .iter()
        .map(|e| {
            e.bloch
                .clone()
                .ok_or_else(|| Error::InvalidInput("extremum carries no Bloch function".into()))
        })
        .collect::<Result<_>>()?;
    let kmax = blochs.iter().map(BlochEvaluator::max_wavenumber).fold(0.0, f64::max);
    let opts = QuadratureOptions::for_wavenumber(w, kmax);
    let q = WeightedQuadrature::new(w, &opts, W_FLOOR)?;
    let fine = WeightedQuadrature::new(w, &opts.refined(), W_FLOOR)?;
    extrema
        .iter()
        .zip(blochs)
        .enumerate()
        .map(|(k, (e, bloch))| {
            let values: Vec<Complex64> = q
                .points
                .par_iter()
                .zip(&q.weights)
                .map(|(x, wi)| bloch.eval(x) * wi.sqrt())
                .collect();
            let norm_sq: f64 = values.iter().map(|v| v.norm_sqr()).sum();
            let refinement_delta = (bloch_norm_sq(&bloch, &fine) - norm_sq).abs();
            Ok(WeightedBloch {
                extremum: k,
                p: e.p.clone(),
                mass: e.mass,
                values,
                norm_sq,
                refinement_delta,
                bloch,
            })
        })
        .collect()
}

/// One weighted Bloch function.
pub fn weighted_bloch(edge: &GapEdge, k: usize, w: &PerturbationSpec) -> Result<WeightedBloch> {
    let mut all = weighted_blochs(edge, w)?;
    if k >= all.len() {
        return Err(Error::InvalidInput(format!("edge has {} extrema", all.len())));
    }
    Ok(all.swap_remove(k))
}

#[derive(Debug, Clone, Serialize)]
pub struct NonDegenerateEdgeModel {
    pub side: EdgeSide,
    pub dim: usize,
    pub edge_value: f64,
    pub extrema: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub norms_sq: Vec<f64>,
    /// Descending.
    pub nu: Vec<f64>,
    pub gram_condition_number: f64,
    /// `g_k = sqrt(W) sum_l coefficients[k][l] b_l`.
    #[serde(skip)]
    pub coefficients: Vec<Vec<Complex64>>,
    #[serde(skip)]
    pub gram: DMatrix<Complex64>,
    #[serde(skip)]
    pub blochs: Vec<BlochEvaluator>,
    #[serde(skip)]
    pub perturbation: Option<PerturbationSpec>,
}

impl NonDegenerateEdgeModel {
    /// `sum_k sqrt(m_k) ||v_k||^2`, equal to the Gram trace.
    pub fn weighted_trace(&self) -> f64 {
        self.masses.iter().zip(&self.norms_sq).map(|(m, n)| m.sqrt() * n).sum()
    }

    /// `g_k(x)`; unit norm in L2.
    pub fn g_value(&self, k: usize, x: &[f64]) -> Complex64 {
        let w = self
            .perturbation
            .as_ref()
            .map_or(0.0, |w| w.evaluate(x).max(0.0));
        self.bloch_part(k, x) * w.sqrt()
    }

    /// `g_k / √W`: the Bloch combination behind `g_k`.
    pub fn bloch_part(&self, k: usize, x: &[f64]) -> Complex64 {
        self.coefficients[k]
            .iter()
            .zip(&self.blochs)
            .map(|(c, b)| c * b.eval(x))
            .sum()
    }
}

/// Gram matrix `A_kl = (m_k m_l)^{1/4} (v_l, v_k)`, its eigenvalues and the
/// eigenfunctions of `G_W`.
pub fn gram_and_nu(edge: &GapEdge, vs: &[WeightedBloch], w: &PerturbationSpec) -> Result<NonDegenerateEdgeModel> {
    let extrema = edge.require_non_degenerate()?;
    if vs.len() != extrema.len() || vs.is_empty() {
        return Err(Error::InvalidInput("one weighted Bloch function per extremum required".into()));
    }
    let n = vs.len();
    let q: Vec<f64> = vs.iter().map(|v| v.mass.powf(0.25)).collect();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            a[(k, l)] = vs[l].inner(&vs[k]) * (q[k] * q[l]);
        }
    }
    let a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian_eigen(a.clone());
    let top = eig.values[n - 1];
    let bottom = eig.values[0];
    if !(bottom > 1e-12 * top.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::DependentBloch(bottom));
    }
    let mut nu = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n);
    for c in (0..n).rev() {
        let value = eig.values[c];
        nu.push(value);
        let s = 1.0 / value.sqrt();
        coefficients.push((0..n).map(|l| eig.vectors[(l, c)] * (q[l] * s)).collect());
    }
    Ok(NonDegenerateEdgeModel {
        side: edge.side,
        dim: edge.dim,
        edge_value: edge.value,
        extrema: vs.iter().map(|v| v.p.clone()).collect(),
        masses: vs.iter().map(|v| v.mass).collect(),
        norms_sq: vs.iter().map(|v| v.norm_sq).collect(),
        gram_condition_number: top / bottom,
        nu,
        coefficients,
        gram: a,
        blochs: vs.iter().map(|v| v.bloch.clone()).collect(),
        perturbation: Some(w.clone()),
    })
}

/// Convenience: weighted Bloch functions then Gram data.
pub fn non_degenerate_model(edge: &GapEdge, w: &PerturbationSpec) -> Result<NonDegenerateEdgeModel> {
    let vs = weighted_blochs(edge, w)?;
    gram_and_nu(edge, &vs, w)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateEdgeModel {
    pub dim: usize,
    pub codim: usize,
    pub edge_value: f64,
    /// Multiplies the leading-order depth; 1 for the whole-space plane-wave
    /// kernel.
    pub calibration: f64,
    pub n_samples: usize,
    pub n_nodes: usize,
    /// Descending, non-negative.
    pub nu: Vec<f64>,
    /// `sum_i w_i G_W(x_i, x_i)`.
    pub trace_diagonal: f64,
    /// `sum_n nu_n`.
    pub trace_eigen: f64,
    /// `(int W) * int_F sqrt(m) dF` in closed form.
    pub trace_analytic: f64,
    /// Relative change of `nu_1` when the manifold samples are doubled.
    pub sample_refinement: f64,
    /// Smallest eigenvalue of the discretized kernel before clipping.
    pub min_eigenvalue: f64,
    #[serde(skip)]
    samples: Vec<(Vec<f64>, f64)>,
    #[serde(skip)]
    vectors: DMatrix<Complex64>,
    #[serde(skip)]
    perturbation: Option<PerturbationSpec>,
}

impl DegenerateEdgeModel {
    /// Partial sums `sum_{n <= N} nu_n`.
    pub fn partial_traces(&self) -> Vec<f64> {
        self.nu
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    /// Eigenfunction `g_n(x)` of `G_W`, unit norm.
    pub fn g_value(&self, n: usize, x: &[f64]) -> Complex64 {
        let w = self
            .perturbation
            .as_ref()
            .map_or(0.0, |w| w.evaluate(x).max(0.0));
        let nu = self.nu[n];
        if nu <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s: Complex64 = self
            .samples
            .iter()
            .enumerate()
            .map(|(q, (p, d))| {
                let phase: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
                Complex64::from_polar(d.sqrt(), phase) * self.vectors[(q, n)]
            })
            .sum();
        s * (w / nu).sqrt()
    }
}

struct KernelSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
    min_value: f64,
}

/// Nonzero spectrum of `E D E^*` with `E_iq = sqrt(w_i) e^{i p_q . x_i}`
/// through the dual matrix `sqrt(D) E^* E sqrt(D)`.
fn kernel_spectrum(q: &WeightedQuadrature, samples: &[(Vec<f64>, f64)]) -> KernelSpectrum {
    let n = q.len();
    let s = samples.len();
    let mut e = DMatrix::<Complex64>::zeros(n, s);
    let cols: Vec<Vec<Complex64>> = samples
        .par_iter()
        .map(|(p, d)| {
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(x, w)| {
                    let phase: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
                    Complex64::from_polar((w * d).sqrt(), phase)
                })
                .collect()
        })
        .collect();
    for (j, col) in cols.into_iter().enumerate() {
        e.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    let b = e.adjoint() * &e;
    let b = (&b + b.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian_eigen(b);
    let min_value = eig.values[0];
    let order: Vec<usize> = (0..s).rev().collect();
    let values = order.iter().map(|&c| eig.values[c].max(0.0)).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(s, s);
    for (j, &c) in order.iter().enumerate() {
        vectors.set_column(j, &eig.vectors.column(c));
    }
    KernelSpectrum {
        values,
        vectors,
        min_value,
    }
}

fn manifold_samples(edge: &GapEdge) -> Result<(usize, Vec<(Vec<f64>, f64)>, f64)> {
    match &edge.set {
        ExtremalSet::Manifold { codim, samples, .. } => {
            let weighted: Vec<(Vec<f64>, f64)> = samples
                .iter()
                .map(|s| (s.p.clone(), s.weight * s.mass.sqrt()))
                .collect();
            let total = weighted.iter().map(|s| s.1).sum();
            Ok((*codim, weighted, total))
        }
        ExtremalSet::Points { .. } => Err(Error::InvalidInput(
            "degenerate model needs an extremal manifold".into(),
        )),
    }
}

/// `G_W(x, s) = sqrt(W(x)) sqrt(W(s)) int_F e^{i p.(x - s)} sqrt(m(p)) dF(p)`
/// for a synthetic symbol, discretized by trapezoid sampling of F and the
/// W-weighted spatial quadrature.
pub fn degenerate_gw(
    sd: &SyntheticDispersion,
    w: &PerturbationSpec,
    n_samples: usize,
    tol: &EdgeTolerances,
) -> Result<DegenerateEdgeModel> {
    if !w.is_definite() {
        return Err(Error::InvalidInput("degenerate model needs W >= 0".into()));
    }
    let edge = synthetic_edge(sd, n_samples, tol)?;
    let (codim, samples, total) = manifold_samples(&edge)?;
    if !(1..=2).contains(&codim) {
        return Err(Error::Unsupported(format!("codimension {codim} manifold kernel")));
    }
    if w.dim() != edge.dim {
        return Err(Error::InvalidInput("W and symbol dimensions differ".into()));
    }
    let kmax = samples
        .iter()
        .map(|(p, _)| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let opts = QuadratureOptions::for_wavenumber(w, 2.0 * kmax);
    let q = WeightedQuadrature::new(w, &opts, W_FLOOR)?;
    if q.is_empty() || w.is_zero() {
        return Ok(DegenerateEdgeModel {
            dim: edge.dim,
            codim,
            edge_value: edge.value,
            calibration: 1.0,
            n_samples,
            n_nodes: 0,
            nu: vec![0.0; samples.len()],
            trace_diagonal: 0.0,
            trace_eigen: 0.0,
            trace_analytic: 0.0,
            sample_refinement: 0.0,
            min_eigenvalue: 0.0,
            vectors: DMatrix::zeros(samples.len(), samples.len()),
            samples,
            perturbation: Some(w.clone()),
        });
    }
    let spec = kernel_spectrum(&q, &samples);
    let fine_edge = synthetic_edge(sd, 2 * n_samples, tol)?;
    let (_, fine_samples, _) = manifold_samples(&fine_edge)?;
    let fine = kernel_spectrum(&q, &fine_samples);
    let sample_refinement = ((fine.values[0] - spec.values[0]) / spec.values[0]).abs();
    if sample_refinement > 1e-4 {
        return Err(Error::Quadrature(format!(
            "doubling manifold samples moved nu_1 by {sample_refinement:e} (relative)"
        )));
    }
    let trace_diagonal = q.total() * total;
    let trace_eigen = spec.values.iter().sum();
    let w_int = w.integrals().integral;
    let measure = match &edge.set {
        ExtremalSet::Manifold { measure, .. } => *measure,
        ExtremalSet::Points { .. } => unreachable!(),
    };
    let trace_analytic = w_int * measure * (1.0 / sd.normal_hessian_det()).sqrt();
    Ok(DegenerateEdgeModel {
        dim: edge.dim,
        codim,
        edge_value: edge.value,
        calibration: 1.0,
        n_samples,
        n_nodes: q.len(),
        nu: spec.values,
        trace_diagonal,
        trace_eigen,
        trace_analytic,
        sample_refinement,
        min_eigenvalue: spec.min_value,
        samples,
        vectors: spec.vectors,
        perturbation: Some(w.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{find_gaps, refine_edge, sweep_bands};
    use crate::fiber::PlaneWaveBasis;
    use crate::lattice::{MomentumGrid, PotentialSpec};
    use std::f64::consts::PI;

    fn free_edge(dim: usize) -> GapEdge {
        let v = PotentialSpec::zero(dim);
        let basis = PlaneWaveBasis::new(dim, 2).unwrap();
        let bs = sweep_bands(&v, &basis, &MomentumGrid::uniform(dim, 8).unwrap(), 2).unwrap();
        let gap = find_gaps(&bs, 1e-6)[0];
        refine_edge(&bs, &gap, EdgeSide::Upper, &EdgeTolerances::default()).unwrap()
    }

    #[test]
    fn free_weighted_norms_are_integrals() {
        let e = free_edge(1);
        let v = weighted_bloch(&e, 0, &PerturbationSpec::unit_box(1)).unwrap();
        assert!((v.norm_sq - 1.0).abs() < 1e-10);
        let e = free_edge(2);
        let g = PerturbationSpec::gaussian(vec![0.0, 0.0], 1.0, 1.0);
        let v = weighted_bloch(&e, 0, &g).unwrap();
        assert!((v.norm_sq - 2.0 * PI).abs() < 1e-8);
        let m = non_degenerate_model(&e, &g).unwrap();
        assert!((m.nu[0] - 0.5 * 2.0 * PI).abs() < 1e-7);
    }

    #[test]
    fn indefinite_w_is_rejected() {
        let e = free_edge(1);
        let w = PerturbationSpec::boxed(vec![0.0], vec![0.5], -1.0);
        assert!(weighted_bloch(&e, 0, &w).is_err());
    }

    #[test]
    fn circle_kernel_trace_and_positivity() {
        let sd = SyntheticDispersion::Radial { dim: 2, k0: 1.0, offset: 0.0 };
        let w = PerturbationSpec::gaussian(vec![0.0, 0.0], 1.0, 1.0);
        let m = degenerate_gw(&sd, &w, 48, &EdgeTolerances::default()).unwrap();
        assert!(m.min_eigenvalue >= -1e-10 * m.nu[0]);
        assert!(((m.trace_diagonal - m.trace_eigen) / m.trace_analytic).abs() < 1e-10);
        assert!(((m.trace_analytic - m.trace_diagonal) / m.trace_analytic).abs() < 1e-8);
        for pair in m.nu.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        // nu_0 = sqrt(m) 2 pi <W, J_0^2>; ell = 1 doubly degenerate
        assert!((m.nu[1] - m.nu[2]).abs() < 1e-10 * m.nu[0]);
    }
}
