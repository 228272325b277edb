//! Unit lattice Z^d, the periodic potential V and the decaying perturbation W.
//!
//! All lattice periods are fixed to one, so the fundamental domain is the
//! unit cube `[-1/2, 1/2]^d` and the quasi-momentum torus is `[-pi, pi)^d`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// The lattice Z^d with unit periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
}

impl Lattice {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!(
                "lattice dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periods(&self) -> Vec<f64> {
        vec![1.0; self.dim]
    }

    /// Volume of the fundamental domain.
    pub fn cell_volume(&self) -> f64 {
        1.0
    }

    /// Fold a point into the fundamental domain `[-1/2, 1/2)^d`.
    pub fn fold(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| xi - (xi + 0.5).floor()).collect()
    }
}

/// Real periodic potential given by finitely many Fourier coefficients,
/// `V(x) = sum_m V̂(m) exp(2 pi i m.x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    dim: usize,
    coefficients: BTreeMap<Vec<i32>, Complex64>,
}

impl PotentialSpec {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            coefficients: BTreeMap::new(),
        }
    }

    /// Build from raw Fourier coefficients. Rejects tables that do not
    /// satisfy `V̂(-m) = conj(V̂(m))`.
    pub fn fourier(dim: usize, coefficients: impl IntoIterator<Item = (Vec<i32>, Complex64)>) -> Result<Self> {
        Lattice::new(dim)?;
        let mut table = BTreeMap::new();
        for (m, c) in coefficients {
            if m.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "frequency {m:?} has wrong dimension (expected {dim})"
                )));
            }
            if c.norm() == 0.0 {
                continue;
            }
            *table.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        for (m, c) in &table {
            let neg: Vec<i32> = m.iter().map(|v| -v).collect();
            let partner = table.get(&neg).copied().unwrap_or_default();
            if (partner - c.conj()).norm() > HERMITIAN_TOL * (1.0 + c.norm()) {
                return Err(Error::NonHermitianPotential(m.clone()));
            }
        }
        Ok(Self {
            dim,
            coefficients: table,
        })
    }

    /// `V(x) = sum_j A_j cos(2 pi m_j . x)`.
    pub fn cosine_sum(dim: usize, terms: &[(Vec<i32>, f64)]) -> Result<Self> {
        let mut coeffs = Vec::new();
        for (m, a) in terms {
            if m.iter().all(|&v| v == 0) {
                coeffs.push((m.clone(), Complex64::new(*a, 0.0)));
                continue;
            }
            let neg: Vec<i32> = m.iter().map(|v| -v).collect();
            coeffs.push((m.clone(), Complex64::new(a / 2.0, 0.0)));
            coeffs.push((neg, Complex64::new(a / 2.0, 0.0)));
        }
        Self::fourier(dim, coeffs)
    }

    /// Mathieu potential `A cos(2 pi x)` in one dimension.
    pub fn mathieu(amplitude: f64) -> Self {
        Self::cosine_sum(1, &[(vec![1], amplitude)]).expect("cosine table is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficient(&self, m: &[i32]) -> Complex64 {
        self.coefficients.get(m).copied().unwrap_or_default()
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&Vec<i32>, &Complex64)> {
        self.coefficients.iter()
    }

    /// Largest `|m_j|` over all nonzero coefficients.
    pub fn max_frequency(&self) -> usize {
        self.coefficients
            .keys()
            .flat_map(|m| m.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    /// Upper bound `sum |V̂(m)| >= ||V||_inf`.
    pub fn sup_bound(&self) -> f64 {
        self.coefficients.values().map(|c| c.norm()).sum()
    }

    /// Pointwise value. Callers fold `x` into the fundamental domain if they
    /// care; the sum is periodic anyway.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, c) in &self.coefficients {
            let phase: f64 = m.iter().zip(x).map(|(&mi, &xi)| mi as f64 * xi).sum::<f64>() * 2.0 * PI;
            acc += c * Complex64::from_polar(1.0, phase);
        }
        debug_assert!(acc.im.abs() < 1e-10 * (1.0 + self.sup_bound()));
        acc.re
    }

    /// True when `V(-x) = V(x)`, i.e. all coefficients are real.
    pub fn is_even(&self) -> bool {
        self.coefficients.values().all(|c| c.im.abs() < HERMITIAN_TOL)
    }
}

/// One term of the perturbation catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bump {
    /// `amplitude` times the indicator of the axis-aligned box
    /// `center ± half_width`.
    Box {
        center: Vec<f64>,
        half_width: Vec<f64>,
        amplitude: f64,
    },
    /// `amplitude * exp(-|x - center|^2 / (2 sigma^2))`.
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        amplitude: f64,
    },
}

impl Bump {
    fn dim(&self) -> usize {
        match self {
            Bump::Box { center, .. } | Bump::Gaussian { center, .. } => center.len(),
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            Bump::Box { amplitude, .. } | Bump::Gaussian { amplitude, .. } => *amplitude,
        }
    }

    fn center(&self) -> &[f64] {
        match self {
            Bump::Box { center, .. } | Bump::Gaussian { center, .. } => center,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Bump::Box {
                center,
                half_width,
                amplitude,
            } => {
                let inside = x
                    .iter()
                    .zip(center)
                    .zip(half_width)
                    .all(|((xi, ci), wi)| (xi - ci).abs() <= *wi);
                if inside {
                    *amplitude
                } else {
                    0.0
                }
            }
            Bump::Gaussian {
                center,
                sigma,
                amplitude,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Average over the cube `x ± h/2`. Exact for boxes; the point value for
    /// gaussians.
    fn cell_average(&self, x: &[f64], h: f64) -> f64 {
        match self {
            Bump::Box {
                center,
                half_width,
                amplitude,
            } => {
                let mut frac = 1.0;
                for ((xi, ci), wi) in x.iter().zip(center).zip(half_width) {
                    let lo = (xi - h / 2.0).max(ci - wi);
                    let hi = (xi + h / 2.0).min(ci + wi);
                    frac *= ((hi - lo) / h).max(0.0);
                    if frac == 0.0 {
                        return 0.0;
                    }
                }
                amplitude * frac
            }
            Bump::Gaussian { .. } => self.value(x),
        }
    }

    fn volume(&self) -> f64 {
        match self {
            Bump::Box { half_width, .. } => half_width.iter().map(|w| 2.0 * w).product(),
            Bump::Gaussian { sigma, center, .. } => {
                (2.0 * PI * sigma * sigma).powf(center.len() as f64 / 2.0)
            }
        }
    }

    fn trace_variance(&self) -> f64 {
        match self {
            Bump::Box { half_width, .. } => half_width.iter().map(|w| w * w / 3.0).sum(),
            Bump::Gaussian { sigma, center, .. } => center.len() as f64 * sigma * sigma,
        }
    }

    /// Radius beyond which the profile is below `floor * |amplitude|`.
    fn support_radius(&self, floor: f64) -> f64 {
        match self {
            Bump::Box { half_width, .. } => half_width.iter().map(|w| w * w).sum::<f64>().sqrt(),
            Bump::Gaussian { sigma, .. } => sigma * (2.0 * (1.0 / floor).ln()).sqrt(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "perturbation term has dimension {} (expected {dim})",
                self.dim()
            )));
        }
        if !self.amplitude().is_finite() {
            return Err(Error::InvalidInput("non-finite amplitude".into()));
        }
        match self {
            Bump::Box { half_width, .. } => {
                if half_width.len() != dim || half_width.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::InvalidInput("box half widths must be positive".into()));
                }
            }
            Bump::Gaussian { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidInput("gaussian sigma must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Box,
    Gaussian,
    Sum,
    SignedSum,
}

/// Bounded, decaying perturbation W built from boxes and gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    dim: usize,
    kind: PerturbationKind,
    terms: Vec<Bump>,
}

/// Closed-form integrals of W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationIntegrals {
    pub integral: f64,
    pub abs_integral: f64,
    /// False when `abs_integral` is only the triangle-inequality bound
    /// (overlapping terms of opposite sign).
    pub abs_integral_exact: bool,
    /// `∫∫ |W(x)| |x - s|^2 |W(s)| dx ds`.
    pub quadratic_moment: f64,
    /// The quadratic double-integral decay condition (d = 1).
    pub quadratic_decay_ok: bool,
    /// The logarithmic double-integral decay condition (d = 2).
    pub log_decay_ok: bool,
}

impl PerturbationSpec {
    pub fn new(dim: usize, kind: PerturbationKind, terms: Vec<Bump>) -> Result<Self> {
        Lattice::new(dim)?;
        for t in &terms {
            t.validate(dim)?;
        }
        match kind {
            PerturbationKind::Box | PerturbationKind::Gaussian if terms.len() != 1 => {
                return Err(Error::InvalidInput(format!(
                    "{kind:?} perturbation takes exactly one term"
                )))
            }
            PerturbationKind::Box if !matches!(terms[0], Bump::Box { .. }) => {
                return Err(Error::InvalidInput("box kind needs a box term".into()))
            }
            PerturbationKind::Gaussian if !matches!(terms[0], Bump::Gaussian { .. }) => {
                return Err(Error::InvalidInput("gaussian kind needs a gaussian term".into()))
            }
            PerturbationKind::Sum if terms.iter().any(|t| t.amplitude() < 0.0) => {
                return Err(Error::InvalidInput(
                    "sum perturbation must have non-negative amplitudes; use signed_sum".into(),
                ))
            }
            _ => {}
        }
        Ok(Self { dim, kind, terms })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            kind: PerturbationKind::Sum,
            terms: Vec::new(),
        }
    }

    /// Unit-amplitude box `[-1/2, 1/2]^d` covering one lattice cell.
    pub fn unit_box(dim: usize) -> Self {
        Self::boxed(vec![0.0; dim], vec![0.5; dim], 1.0)
    }

    pub fn boxed(center: Vec<f64>, half_width: Vec<f64>, amplitude: f64) -> Self {
        let dim = center.len();
        Self::new(
            dim,
            PerturbationKind::Box,
            vec![Bump::Box {
                center,
                half_width,
                amplitude,
            }],
        )
        .expect("valid box")
    }

    pub fn gaussian(center: Vec<f64>, sigma: f64, amplitude: f64) -> Self {
        let dim = center.len();
        Self::new(
            dim,
            PerturbationKind::Gaussian,
            vec![Bump::Gaussian {
                center,
                sigma,
                amplitude,
            }],
        )
        .expect("valid gaussian")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PerturbationKind {
        self.kind
    }

    pub fn terms(&self) -> &[Bump] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude() == 0.0)
    }

    /// W >= 0 everywhere.
    pub fn is_definite(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude() >= 0.0)
    }

    /// W <= 0 everywhere.
    pub fn is_nonpositive(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude() <= 0.0)
    }

    pub fn negated(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t.clone() {
                Bump::Box {
                    center,
                    half_width,
                    amplitude,
                } => Bump::Box {
                    center,
                    half_width,
                    amplitude: -amplitude,
                },
                Bump::Gaussian {
                    center,
                    sigma,
                    amplitude,
                } => Bump::Gaussian {
                    center,
                    sigma,
                    amplitude: -amplitude,
                },
            })
            .collect();
        Self {
            dim: self.dim,
            kind: if self.terms.len() == 1 {
                self.kind
            } else {
                PerturbationKind::SignedSum
            },
            terms,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// Average of W over the grid cell of side `h` centred at `x`.
    pub fn cell_average(&self, x: &[f64], h: f64) -> f64 {
        self.terms.iter().map(|t| t.cell_average(x, h)).sum()
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude().abs()).sum()
    }

    /// Radius of a ball around the origin outside of which every term is
    /// below `floor` relative to its amplitude.
    pub fn support_radius(&self, floor: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let c: f64 = t.center().iter().map(|v| v * v).sum::<f64>().sqrt();
                c + t.support_radius(floor)
            })
            .fold(0.0, f64::max)
    }

    fn boxes_disjoint(&self) -> bool {
        let boxes: Vec<_> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                Bump::Box {
                    center, half_width, ..
                } => Some((center, half_width)),
                _ => None,
            })
            .collect();
        if boxes.len() != self.terms.len() {
            return false;
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (ci, wi) = boxes[i];
                let (cj, wj) = boxes[j];
                let overlap = (0..self.dim).all(|k| (ci[k] - cj[k]).abs() < wi[k] + wj[k]);
                if overlap {
                    return false;
                }
            }
        }
        true
    }

    pub fn integrals(&self) -> PerturbationIntegrals {
        let integral = self.terms.iter().map(|t| t.amplitude() * t.volume()).sum();
        let abs_integral = self
            .terms
            .iter()
            .map(|t| t.amplitude().abs() * t.volume())
            .sum();
        let abs_integral_exact = self.is_definite() || self.is_nonpositive() || self.boxes_disjoint();

        // ∫∫|W_i(x)||x-s|^2|W_j(s)| = M_j S_i + M_i S_j - 2 mu_i . mu_j for
        // masses M, first moments mu and second moments S of each term.
        let stats: Vec<(f64, Vec<f64>, f64)> = self
            .terms
            .iter()
            .map(|t| {
                let mass = t.amplitude().abs() * t.volume();
                let c = t.center();
                let mu: Vec<f64> = c.iter().map(|ci| mass * ci).collect();
                let c2: f64 = c.iter().map(|v| v * v).sum();
                let second = mass * (c2 + t.trace_variance());
                (mass, mu, second)
            })
            .collect();
        let mut quadratic_moment = 0.0;
        for (mi, mui, si) in &stats {
            for (mj, muj, sj) in &stats {
                let dot: f64 = mui.iter().zip(muj).map(|(a, b)| a * b).sum();
                quadratic_moment += mj * si + mi * sj - 2.0 * dot;
            }
        }
        PerturbationIntegrals {
            integral,
            abs_integral,
            abs_integral_exact,
            quadratic_moment,
            // Boxes are compactly supported and gaussians decay faster than
            // any power, so both double integrals are finite for the catalog.
            quadratic_decay_ok: quadratic_moment.is_finite(),
            log_decay_ok: true,
        }
    }

    /// Positive part `W_+ = max(W, 0)` as a pointwise function.
    pub fn positive_part_at(&self, x: &[f64]) -> f64 {
        self.evaluate(x).max(0.0)
    }
}

/// Uniform quasi-momentum grid on `[-pi, pi)^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumGrid {
    counts: Vec<usize>,
}

impl MomentumGrid {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        Lattice::new(counts.len())?;
        if counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput("momentum grid counts must be positive".into()));
        }
        Ok(Self { counts })
    }

    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        2.0 * PI / self.counts[axis] as f64
    }

    pub fn axis_value(&self, axis: usize, j: usize) -> f64 {
        -PI + self.step(axis) * j as f64
    }

    /// Multi-index of flat sample `i` (last axis fastest).
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = i % self.counts[axis];
            i /= self.counts[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&j, &n)| acc * n + (j % n))
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(axis, &j)| self.axis_value(axis, j))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Index of the sample at `-p` (modulo 2 pi).
    pub fn mirror_index(&self, i: usize) -> usize {
        let idx: Vec<usize> = self
            .multi_index(i)
            .iter()
            .zip(&self.counts)
            .map(|(&j, &n)| (n - j) % n)
            .collect();
        self.flat_index(&idx)
    }

    /// Whether 0 and pi are grid points on every axis.
    pub fn contains_symmetry_points(&self) -> bool {
        self.counts.iter().all(|n| n % 2 == 0)
    }

    /// Same grid with every count doubled.
    pub fn refined(&self) -> Self {
        Self {
            counts: self.counts.iter().map(|n| 2 * n).collect(),
        }
    }
}

/// Wrap a quasi-momentum component into `[-pi, pi)`.
pub fn wrap_momentum(p: f64) -> f64 {
    if (-PI..PI).contains(&p) {
        return p;
    }
    let two_pi = 2.0 * PI;
    let mut q = (p + PI).rem_euclid(two_pi) - PI;
    if q >= PI {
        q -= two_pi;
    }
    q
}
