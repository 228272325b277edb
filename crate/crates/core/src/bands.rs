//! Band sweeps over the torus, gap detection, refinement of gap-edge
//! extrema, finite-difference Hessians and effective masses, and the
//! synthetic dispersion catalog used for Morse-Bott edges.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{fiber_eigenvalues, fiber_spectrum, BlochEvaluator, CellGrid, PlaneWaveBasis};
use crate::lattice::{wrap_momentum, MomentumGrid, PotentialSpec};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeTolerances {
    pub gap_tol: f64,
    pub refine_tol: f64,
    pub simple_tol: f64,
    pub morse_tol: f64,
    /// Base step of the Richardson finite-difference Hessian.
    pub hessian_step: f64,
}

impl Default for EdgeTolerances {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            refine_tol: 1e-9,
            simple_tol: 1e-4,
            morse_tol: 1e-6,
            hessian_step: 0.02,
        }
    }
}

impl EdgeTolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gap_tol,
            self.refine_tol,
            self.simple_tol,
            self.morse_tol,
            self.hessian_step,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput("tolerances must be positive".into()))
        }
    }
}

/// `lambda_n(p)` for n = 1..n_bands over a momentum grid.
#[derive(Debug, Clone)]
pub struct BandStructure {
    pub grid: MomentumGrid,
    /// `values[i][n]`: band n at grid point i, ascending in n.
    pub values: Vec<Vec<f64>>,
    pub potential: PotentialSpec,
    pub cutoff: usize,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn band(&self, n: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[n]).collect()
    }

    pub fn band_min(&self, n: usize) -> f64 {
        self.values.iter().map(|v| v[n]).fold(f64::INFINITY, f64::min)
    }

    pub fn band_max(&self, n: usize) -> f64 {
        self.values.iter().map(|v| v[n]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|lambda_n(p) - lambda_n(-p)|` over grid points whose mirror
    /// lies on the grid.
    pub fn time_reversal_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            let j = self.grid.mirror_index(i);
            for (a, b) in self.values[i].iter().zip(&self.values[j]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

pub fn sweep_bands(potential: &PotentialSpec, basis: &PlaneWaveBasis, grid: &MomentumGrid, n_bands: usize) -> Result<BandStructure> {
    if grid.dim() != potential.dim() {
        return Err(Error::InvalidInput("grid and potential dimensions differ".into()));
    }
    let values = grid
        .points()
        .par_iter()
        .map(|p| fiber_eigenvalues(p, potential, basis, n_bands))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandStructure {
        grid: grid.clone(),
        values,
        potential: potential.clone(),
        cutoff: basis.cutoff(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    /// Number of bands below the gap; 0 is the semi-infinite gap.
    pub j: usize,
    /// `None` for the semi-infinite gap.
    pub lambda_minus: Option<f64>,
    pub lambda_plus: f64,
}

impl SpectralGap {
    pub fn width(&self) -> f64 {
        self.lambda_minus.map_or(f64::INFINITY, |m| self.lambda_plus - m)
    }

    pub fn is_semi_infinite(&self) -> bool {
        self.lambda_minus.is_none()
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda < self.lambda_plus && self.lambda_minus.is_none_or(|m| lambda > m)
    }
}

/// The semi-infinite gap followed by every finite gap wider than `gap_tol`
/// between computed bands.
pub fn find_gaps(bs: &BandStructure, gap_tol: f64) -> Vec<SpectralGap> {
    let mut gaps = vec![SpectralGap {
        j: 0,
        lambda_minus: None,
        lambda_plus: bs.band_min(0),
    }];
    for j in 1..bs.n_bands() {
        let lo = bs.band_max(j - 1);
        let hi = bs.band_min(j);
        if hi - lo > gap_tol {
            gaps.push(SpectralGap {
                j,
                lambda_minus: Some(lo),
                lambda_plus: hi,
            });
        }
    }
    gaps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSide {
    Upper,
    Lower,
}

impl EdgeSide {
    /// +1 for minima (upper edge), -1 for maxima.
    fn sign(self) -> f64 {
        match self {
            EdgeSide::Upper => 1.0,
            EdgeSide::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Extremum {
    pub p: Vec<f64>,
    pub value: f64,
    pub hessian: Vec<Vec<f64>>,
    pub hessian_eigenvalues: Vec<f64>,
    pub mass: f64,
    pub simplicity_margin: f64,
    pub simple: bool,
    pub morse: bool,
    /// Length of the final quadratic-model step.
    pub final_step: f64,
    #[serde(skip)]
    pub bloch: Option<BlochEvaluator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle { radius: f64 },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldSample {
    pub p: Vec<f64>,
    /// Quadrature weight for `dF`.
    pub weight: f64,
    pub normal_hessian_det: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExtremalSet {
    Points { extrema: Vec<Extremum> },
    Manifold {
        kind: ManifoldKind,
        manifold_dim: usize,
        codim: usize,
        measure: f64,
        samples: Vec<ManifoldSample>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    NonDegenerate,
    NotSimple,
    /// Extrema with singular Hessian in a genuinely periodic model; no
    /// manifold description is available.
    Degenerate,
    MorseBott { codim: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct GapEdge {
    pub side: EdgeSide,
    pub dim: usize,
    /// Zero-based index of the band whose extremum forms the edge.
    pub band: usize,
    pub value: f64,
    pub set: ExtremalSet,
}

impl GapEdge {
    pub fn classify(&self) -> EdgeClass {
        match &self.set {
            ExtremalSet::Points { extrema } => {
                if extrema.iter().any(|e| !e.simple) {
                    EdgeClass::NotSimple
                } else if extrema.iter().any(|e| !e.morse) {
                    EdgeClass::Degenerate
                } else {
                    EdgeClass::NonDegenerate
                }
            }
            ExtremalSet::Manifold { codim, .. } => EdgeClass::MorseBott { codim: *codim },
        }
    }

    pub fn extrema(&self) -> &[Extremum] {
        match &self.set {
            ExtremalSet::Points { extrema } => extrema,
            ExtremalSet::Manifold { .. } => &[],
        }
    }

    /// Codimension of the extremal set (d for isolated points).
    pub fn codim(&self) -> usize {
        match &self.set {
            ExtremalSet::Points { .. } => self.dim,
            ExtremalSet::Manifold { codim, .. } => *codim,
        }
    }

    /// Non-degenerate edges only; refuses anything else.
    pub fn require_non_degenerate(&self) -> Result<&[Extremum]> {
        match self.classify() {
            EdgeClass::NonDegenerate => Ok(self.extrema()),
            EdgeClass::NotSimple => Err(Error::EdgeRefused(
                "edge eigenvalue is not simple at an extremum".into(),
            )),
            EdgeClass::Degenerate => Err(Error::EdgeRefused(
                "Hessian is singular at an extremum (route to Morse-Bott path)".into(),
            )),
            EdgeClass::MorseBott { .. } => Err(Error::EdgeRefused(
                "extremal set is a manifold, not isolated points".into(),
            )),
        }
    }
}

/// Central second differences on steps `h` and `h/2`, combined by
/// Richardson extrapolation and symmetrized.
pub fn hessian_fd<F>(f: F, p0: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let raw = |h: f64| -> DMatrix<f64> {
        let d = p0.len();
        let shifted = |offsets: &[(usize, f64)]| -> f64 {
            let mut p = p0.to_vec();
            for &(axis, delta) in offsets {
                p[axis] += delta;
            }
            f(&p)
        };
        let f0 = f(p0);
        let entries: Vec<(usize, usize, f64)> = (0..d)
            .flat_map(|i| (i..d).map(move |j| (i, j)))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(i, j)| {
                let v = if i == j {
                    (shifted(&[(i, h)]) - 2.0 * f0 + shifted(&[(i, -h)])) / (h * h)
                } else {
                    (shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)]) - shifted(&[(i, -h), (j, h)])
                        + shifted(&[(i, -h), (j, -h)]))
                        / (4.0 * h * h)
                };
                (i, j, v)
            })
            .collect();
        let mut m = DMatrix::zeros(d, d);
        for (i, j, v) in entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    };
    let coarse = raw(h);
    let fine = raw(h / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

fn gradient_fd<F: Fn(&[f64]) -> f64>(f: &F, p: &[f64], h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_momentum(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Quadratic-model iteration for a minimum of `sign * f` starting at `p0`.
/// Returns the refined point and the length of the last accepted step.
fn refine_point<F>(f: &F, p0: &[f64], sign: f64, max_step: f64, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let g = |p: &[f64]| sign * f(p);
    let mut p = p0.to_vec();
    let mut value = g(&p);
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let grad = gradient_fd(&g, &p, 1e-5);
        let hess = hessian_fd(g, &p, 1e-3);
        let eig = symmetric_eigen(hess.clone());
        let step: Vec<f64> = if eig.values.iter().all(|v| *v > 1e-8) {
            let chol = hess.cholesky().expect("positive-definite by eigenvalue check");
            let s = chol.solve(&nalgebra::DVector::from_column_slice(&grad));
            s.iter().map(|v| -v).collect()
        } else {
            grad.iter().map(|v| -v * 1e-2).collect()
        };
        let mut len = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut scale = if len > max_step { max_step / len } else { 1.0 };
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
            let tv = g(&trial);
            if tv <= value + 1e-13 * value.abs().max(1.0) {
                p = trial;
                value = tv;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        len *= scale;
        if !accepted {
            last = 0.0;
            break;
        }
        last = len;
        if len < tol {
            break;
        }
    }
    (p.into_iter().map(wrap_momentum).collect(), last)
}

fn grid_candidates(bs: &BandStructure, band: usize, sign: f64) -> Vec<usize> {
    let grid = &bs.grid;
    let d = grid.dim();
    let counts = grid.counts();
    let vals: Vec<f64> = bs.values.iter().map(|v| sign * v[band]).collect();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            let mut o = vec![0i64; d];
            for item in o.iter_mut() {
                *item = (k % 3) as i64 - 1;
                k /= 3;
            }
            o
        })
        .filter(|o| o.iter().any(|v| *v != 0))
        .collect();
    let mut local: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let idx = grid.multi_index(i);
            offsets.iter().all(|o| {
                let nb: Vec<usize> = idx
                    .iter()
                    .zip(o)
                    .zip(counts)
                    .map(|((&a, &b), &n)| ((a as i64 + b).rem_euclid(n as i64)) as usize)
                    .collect();
                vals[grid.flat_index(&nb)] >= vals[i]
            })
        })
        .collect();
    local.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let radius = 2.0 * (0..d).map(|a| grid.step(a)).fold(0.0, f64::max) * (d as f64).sqrt();
    let mut kept: Vec<usize> = Vec::new();
    for i in local {
        let p = grid.point(i);
        if kept.iter().all(|&k| torus_distance(&grid.point(k), &p) > radius) {
            kept.push(i);
        }
        if kept.len() >= 32 {
            break;
        }
    }
    kept
}

/// Locate and refine the extrema forming one edge of `gap`.
pub fn refine_edge(bs: &BandStructure, gap: &SpectralGap, side: EdgeSide, tol: &EdgeTolerances) -> Result<GapEdge> {
    tol.validate()?;
    let band = match side {
        EdgeSide::Upper => gap.j,
        EdgeSide::Lower => {
            if gap.j == 0 {
                return Err(Error::InvalidInput("semi-infinite gap has no lower edge".into()));
            }
            gap.j - 1
        }
    };
    let potential = &bs.potential;
    let basis = Arc::new(PlaneWaveBasis::new(bs.dim(), bs.cutoff)?);
    let n_eval = band + 2;
    let eval_band = |p: &[f64]| -> f64 {
        fiber_eigenvalues(p, potential, &basis, n_eval)
            .map(|v| v[band])
            .unwrap_or(f64::NAN)
    };
    let sign = side.sign();
    let max_step = (0..bs.dim()).map(|a| bs.grid.step(a)).fold(0.0, f64::max);
    let candidates = grid_candidates(bs, band, sign);
    let refined: Vec<(Vec<f64>, f64, f64)> = candidates
        .par_iter()
        .map(|&i| {
            let (p, step) = refine_point(&eval_band, &bs.grid.point(i), sign, max_step, tol.refine_tol);
            let v = eval_band(&p);
            (p, v, step)
        })
        .collect();
    if refined.iter().any(|r| !r.1.is_finite()) {
        return Err(Error::FiberSolve {
            p: vec![],
            reason: "non-finite band value during edge refinement".into(),
        });
    }
    let best = refined
        .iter()
        .map(|r| sign * r.1)
        .fold(f64::INFINITY, f64::min);
    let accept = 1e-8 * best.abs().max(1.0);
    let mut points: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for r in refined {
        if sign * r.1 <= best + accept && points.iter().all(|q| torus_distance(&q.0, &r.0) > 1e-5) {
            points.push(r);
        }
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let extrema = points
        .par_iter()
        .map(|(p, value, step)| -> Result<Extremum> {
            let hess = hessian_fd(eval_band, p, tol.hessian_step);
            let eig = symmetric_eigen(hess.clone());
            let det: f64 = eig.values.iter().product();
            let fs = fiber_spectrum(p, potential, &basis, n_eval)?;
            let margin = match side {
                EdgeSide::Upper => fs.values[band + 1] - fs.values[band],
                EdgeSide::Lower => {
                    let above = fs.values[band + 1] - fs.values[band];
                    let below = if band > 0 {
                        fs.values[band] - fs.values[band - 1]
                    } else {
                        f64::INFINITY
                    };
                    above.min(below)
                }
            };
            let margin = if side == EdgeSide::Upper && band > 0 {
                margin.min(fs.values[band] - fs.values[band - 1])
            } else {
                margin
            };
            let min_abs = eig.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            let definite = eig.values.iter().all(|v| sign * v > 0.0);
            let bloch = crate::fiber::bloch_function(&fs, band, &CellGrid::new(bs.dim(), 16))?;
            Ok(Extremum {
                p: p.clone(),
                value: *value,
                hessian: (0..bs.dim())
                    .map(|i| (0..bs.dim()).map(|j| hess[(i, j)]).collect())
                    .collect(),
                hessian_eigenvalues: eig.values.clone(),
                mass: 1.0 / det.abs(),
                simplicity_margin: margin,
                simple: margin >= tol.simple_tol,
                morse: min_abs > tol.morse_tol && definite,
                final_step: *step,
                bloch: Some(bloch.evaluator),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = match side {
        EdgeSide::Upper => extrema.iter().map(|e| e.value).fold(f64::INFINITY, f64::min),
        EdgeSide::Lower => extrema.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(GapEdge {
        side,
        dim: bs.dim(),
        band,
        value,
        set: ExtremalSet::Points { extrema },
    })
}

/// Catalog of symbols `a(k)` on R^d whose minimum sets are known exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "symbol", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticDispersion {
    /// `(|k| - k0)^2 + offset`: a sphere of radius k0 (circle in d = 2, the
    /// pair of points `+-k0` in d = 1, the origin if k0 = 0).
    Radial { dim: usize, k0: f64, offset: f64 },
    /// `sum_j c_j k_j^2`.
    Quadratic { coefficients: [f64; 3], dim: usize },
    /// `(k1^2 + k2^2 - r^2)^2 + k3^2` in d = 3: a circle of codimension 2.
    CircleWell { radius: f64 },
}

impl SyntheticDispersion {
    pub fn dim(&self) -> usize {
        match *self {
            SyntheticDispersion::Radial { dim, .. } | SyntheticDispersion::Quadratic { dim, .. } => dim,
            SyntheticDispersion::CircleWell { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SyntheticDispersion::Radial { dim, k0, offset } => (1..=3).contains(&dim) && k0 >= 0.0 && offset.is_finite(),
            SyntheticDispersion::Quadratic { coefficients, dim } => {
                (1..=3).contains(&dim) && coefficients[..dim].iter().all(|c| *c > 0.0)
            }
            SyntheticDispersion::CircleWell { radius } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid synthetic dispersion {self:?}")))
        }
    }

    pub fn eval(&self, k: &[f64]) -> f64 {
        match *self {
            SyntheticDispersion::Radial { k0, offset, .. } => {
                let r = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r - k0).powi(2) + offset
            }
            SyntheticDispersion::Quadratic { coefficients, dim } => {
                (0..dim).map(|j| coefficients[j] * k[j] * k[j]).sum()
            }
            SyntheticDispersion::CircleWell { radius } => {
                (k[0] * k[0] + k[1] * k[1] - radius * radius).powi(2) + k[2] * k[2]
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            SyntheticDispersion::Radial { offset, .. } => offset,
            _ => 0.0,
        }
    }

    pub fn codim(&self) -> usize {
        match *self {
            SyntheticDispersion::Radial { dim, k0, .. } => {
                if k0 > 0.0 {
                    1
                } else {
                    dim
                }
            }
            SyntheticDispersion::Quadratic { dim, .. } => dim,
            SyntheticDispersion::CircleWell { .. } => 2,
        }
    }

    /// Closed-form determinant of the Hessian restricted to normal
    /// directions.
    pub fn normal_hessian_det(&self) -> f64 {
        match *self {
            SyntheticDispersion::Radial { dim, k0, .. } => {
                if k0 > 0.0 {
                    2.0
                } else {
                    2f64.powi(dim as i32)
                }
            }
            SyntheticDispersion::Quadratic { coefficients, dim } => {
                coefficients[..dim].iter().map(|c| 2.0 * c).product()
            }
            SyntheticDispersion::CircleWell { radius } => 16.0 * radius * radius,
        }
    }

    /// Points of the minimum set (isolated points, or `n` quadrature nodes on
    /// the manifold) with `dF` weights.
    fn nodes(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        match *self {
            SyntheticDispersion::Radial { dim, k0, .. } if k0 > 0.0 => match dim {
                1 => vec![(vec![-k0], 1.0), (vec![k0], 1.0)],
                2 => (0..n)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / n as f64;
                        (vec![k0 * t.cos(), k0 * t.sin()], 2.0 * PI * k0 / n as f64)
                    })
                    .collect(),
                _ => {
                    // midpoint rule in cos(theta), uniform in azimuth
                    let nz = n.div_ceil(2).max(1);
                    let mut out = Vec::with_capacity(nz * n);
                    for a in 0..nz {
                        let z = -1.0 + (2.0 * a as f64 + 1.0) / nz as f64;
                        let s = (1.0 - z * z).sqrt();
                        for b in 0..n {
                            let t = 2.0 * PI * b as f64 / n as f64;
                            let w = 4.0 * PI * k0 * k0 / (nz * n) as f64;
                            out.push((vec![k0 * s * t.cos(), k0 * s * t.sin(), k0 * z], w));
                        }
                    }
                    out
                }
            },
            SyntheticDispersion::CircleWell { radius } => (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    (vec![radius * t.cos(), radius * t.sin(), 0.0], 2.0 * PI * radius / n as f64)
                })
                .collect(),
            _ => vec![(vec![0.0; self.dim()], 1.0)],
        }
    }

    fn manifold(&self) -> Option<(ManifoldKind, f64)> {
        match *self {
            SyntheticDispersion::Radial { dim: 2, k0, .. } if k0 > 0.0 => {
                Some((ManifoldKind::Circle { radius: k0 }, 2.0 * PI * k0))
            }
            SyntheticDispersion::Radial { dim: 3, k0, .. } if k0 > 0.0 => {
                Some((ManifoldKind::Sphere { radius: k0 }, 4.0 * PI * k0 * k0))
            }
            SyntheticDispersion::CircleWell { radius } => Some((ManifoldKind::Circle { radius }, 2.0 * PI * radius)),
            _ => None,
        }
    }
}

/// Product of the `codim` largest |eigenvalues| of the finite-difference
/// Hessian, i.e. the normal Hessian determinant at a point of the minimum
/// set.
fn numeric_normal_det(sd: &SyntheticDispersion, p: &[f64], h: f64) -> (f64, DMatrix<f64>) {
    let hess = hessian_fd(|k| sd.eval(k), p, h);
    let mut mags: Vec<f64> = symmetric_eigen(hess.clone()).values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    (mags[..sd.codim()].iter().product(), hess)
}

/// Edge data for a synthetic symbol: isolated points when the minimum set
/// has codimension d, otherwise `n_samples` quadrature nodes on the
/// manifold with numerically computed normal Hessians.
pub fn synthetic_edge(sd: &SyntheticDispersion, n_samples: usize, tol: &EdgeTolerances) -> Result<GapEdge> {
    sd.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let dim = sd.dim();
    let h = tol.hessian_step;
    let nodes = sd.nodes(n_samples);
    let set = match sd.manifold() {
        Some((kind, measure)) => {
            let samples = nodes
                .into_iter()
                .map(|(p, weight)| {
                    let (det, _) = numeric_normal_det(sd, &p, h);
                    ManifoldSample {
                        p,
                        weight,
                        normal_hessian_det: det,
                        mass: 1.0 / det,
                    }
                })
                .collect();
            ExtremalSet::Manifold {
                kind,
                manifold_dim: dim - sd.codim(),
                codim: sd.codim(),
                measure,
                samples,
            }
        }
        None => {
            let extrema = nodes
                .into_iter()
                .map(|(p, _)| {
                    let (det, hess) = numeric_normal_det(sd, &p, h);
                    let eig = symmetric_eigen(hess.clone());
                    let min_abs = eig.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                    Extremum {
                        value: sd.eval(&p),
                        hessian: (0..dim).map(|i| (0..dim).map(|j| hess[(i, j)]).collect()).collect(),
                        hessian_eigenvalues: eig.values,
                        mass: 1.0 / det,
                        simplicity_margin: f64::INFINITY,
                        simple: true,
                        morse: min_abs > tol.morse_tol,
                        final_step: 0.0,
                        bloch: Some(BlochEvaluator::plane_wave(p.clone())),
                        p,
                    }
                })
                .collect();
            ExtremalSet::Points { extrema }
        }
    };
    Ok(GapEdge {
        side: EdgeSide::Upper,
        dim,
        band: 0,
        value: sd.min_value(),
        set,
    })
}

/// Largest deviation of `a` from its minimum over the sampled minimum set;
/// zero up to rounding when the stated manifold is right.
pub fn manifold_residual(sd: &SyntheticDispersion, n_samples: usize) -> f64 {
    sd.nodes(n_samples)
        .iter()
        .map(|(p, _)| (sd.eval(p) - sd.min_value()).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_bands(dim: usize, n: usize) -> BandStructure {
        let v = PotentialSpec::zero(dim);
        let basis = PlaneWaveBasis::new(dim, if dim == 1 { 4 } else { 2 }).unwrap();
        sweep_bands(&v, &basis, &MomentumGrid::uniform(dim, n).unwrap(), 3).unwrap()
    }

    #[test]
    fn free_band_is_folded_parabola() {
        let bs = free_bands(1, 16);
        for (i, p) in bs.grid.points().iter().enumerate() {
            assert!((bs.values[i][0] - p[0] * p[0]).abs() < 1e-10);
        }
        let gaps = find_gaps(&bs, 1e-6);
        assert_eq!(gaps.len(), 1);
        assert!(gaps[0].is_semi_infinite());
        assert!(gaps[0].lambda_plus.abs() < 1e-12);
    }

    #[test]
    fn free_bottom_edge_masses() {
        let tol = EdgeTolerances::default();
        for (dim, mass) in [(1, 0.5), (2, 0.25)] {
            let bs = free_bands(dim, 8);
            let gap = find_gaps(&bs, 1e-6)[0];
            let edge = refine_edge(&bs, &gap, EdgeSide::Upper, &tol).unwrap();
            let ex = edge.require_non_degenerate().unwrap();
            assert_eq!(ex.len(), 1);
            assert!(ex[0].p.iter().all(|v| v.abs() < 1e-9));
            assert!((ex[0].mass - mass).abs() < 1e-8, "{}", ex[0].mass);
        }
    }

    #[test]
    fn richardson_hessian_of_quadratics() {
        let h = hessian_fd(|p| 3.0 * p[0] * p[0] + 5.0 * p[1] * p[1], &[0.2, -0.4], 0.02);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-8);
        assert!((h[(1, 1)] - 10.0).abs() < 1e-8);
        assert!(h[(0, 1)].abs() < 1e-8);
        assert!((h.determinant() - 60.0).abs() < 1e-7);
    }

    #[test]
    fn mathieu_first_gap_upper_edge_at_pi() {
        let v = PotentialSpec::mathieu(1.0);
        let basis = PlaneWaveBasis::new(1, 16).unwrap();
        let bs = sweep_bands(&v, &basis, &MomentumGrid::uniform(1, 32).unwrap(), 4).unwrap();
        let gaps = find_gaps(&bs, 1e-6);
        let g = gaps.iter().find(|g| g.j == 1).unwrap();
        let edge = refine_edge(&bs, g, EdgeSide::Upper, &EdgeTolerances::default()).unwrap();
        let ex = edge.require_non_degenerate().unwrap();
        assert_eq!(ex.len(), 1);
        assert!((ex[0].p[0].abs() - PI).abs() < 1e-6);
        let lower = refine_edge(&bs, g, EdgeSide::Lower, &EdgeTolerances::default()).unwrap();
        assert!((lower.extrema()[0].p[0].abs() - PI).abs() < 1e-6);
        assert!(g.width() > 0.5 && g.width() < 1.5);
    }

    #[test]
    fn synthetic_catalog() {
        let tol = EdgeTolerances::default();
        let circle = SyntheticDispersion::Radial { dim: 2, k0: 1.0, offset: 0.0 };
        let e = synthetic_edge(&circle, 32, &tol).unwrap();
        match &e.set {
            ExtremalSet::Manifold { codim, samples, measure, .. } => {
                assert_eq!(*codim, 1);
                assert!((measure - 2.0 * PI).abs() < 1e-12);
                for s in samples {
                    assert!((s.mass - 0.5).abs() < 1e-7);
                }
            }
            _ => panic!("expected manifold"),
        }
        let well = SyntheticDispersion::CircleWell { radius: 1.0 };
        assert!(manifold_residual(&well, 16) < 1e-14);
        let e = synthetic_edge(&well, 16, &tol).unwrap();
        assert_eq!(e.codim(), 2);
        if let ExtremalSet::Manifold { samples, .. } = &e.set {
            for s in samples {
                assert!((s.normal_hessian_det - 16.0).abs() < 1e-6);
            }
        }
        let q = SyntheticDispersion::Quadratic {
            coefficients: [1.0, 1.0, 1.0],
            dim: 3,
        };
        assert_eq!(synthetic_edge(&q, 4, &tol).unwrap().codim(), 3);
    }
}
