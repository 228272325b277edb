//! Gauss rules (Golub-Welsch) and tensor quadratures for integrals of the
//! form `int W(x) f(x) dx` with `W >= 0` from the perturbation catalog.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{Bump, PerturbationSpec};
use crate::linalg::symmetric_eigen;

fn golub_welsch(n: usize, off: impl Fn(usize) -> f64, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = off(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = symmetric_eigen(j);
    let nodes = eig.values.clone();
    let weights = (0..n).map(|i| mu0 * eig.vectors[(0, i)].powi(2)).collect();
    (nodes, weights)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| k as f64 / ((4 * k * k - 1) as f64).sqrt(), 2.0)
}

/// Gauss-Hermite nodes and weights for the weight `exp(-t^2)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| (k as f64 / 2.0).sqrt(), PI.sqrt())
}

/// Composite Gauss-Legendre rule on `[a, b]` with panels no longer than
/// `panel`.
pub fn composite_legendre(a: f64, b: f64, panel: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = ((b - a) / panel).ceil().max(1.0) as usize;
    let len = (b - a) / panels as f64;
    let (t, w) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * len;
        for (ti, wi) in t.iter().zip(&w) {
            nodes.push(mid + 0.5 * len * ti);
            weights.push(0.5 * len * wi);
        }
    }
    (nodes, weights)
}

fn tensor(axes: &[(Vec<f64>, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (nodes, ws) in axes {
        let mut np = Vec::with_capacity(points.len() * nodes.len());
        let mut nw = Vec::with_capacity(points.len() * nodes.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, wx) in nodes.iter().zip(ws) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * wx);
            }
        }
        points = np;
        weights = nw;
    }
    (points, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss-Legendre order per panel on boxes.
    pub legendre_order: usize,
    /// Longest panel on boxes.
    pub panel: f64,
    /// Gauss-Hermite nodes per axis on gaussians.
    pub hermite_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            legendre_order: 10,
            panel: 0.125,
            hermite_nodes: 48,
        }
    }
}

impl QuadratureOptions {
    /// Each resolution parameter doubled.
    pub fn refined(&self) -> Self {
        Self {
            legendre_order: self.legendre_order,
            panel: self.panel / 2.0,
            hermite_nodes: self.hermite_nodes * 2,
        }
    }

    /// Options resolving integrands oscillating at wavenumber up to `k` on
    /// the given perturbation.
    pub fn for_wavenumber(w: &PerturbationSpec, k: f64) -> Self {
        let mut opts = Self::default();
        let sigma = w
            .terms()
            .iter()
            .filter_map(|b| match b {
                Bump::Gaussian { sigma, .. } => Some(*sigma),
                _ => None,
            })
            .fold(0.0, f64::max);
        let omega = k * std::f64::consts::SQRT_2 * sigma;
        let need = ((omega + 6.0).powi(2) / 2.0).ceil() as usize;
        let cap = if w.dim() >= 3 { 40 } else { 240 };
        opts.hermite_nodes = need.clamp(opts.hermite_nodes, cap.max(opts.hermite_nodes));
        opts.panel = opts.panel.min(2.0 / (k.max(1.0)));
        opts
    }
}

/// Nodes `x_i` and weights `w_i >= 0` with `sum w_i f(x_i) ~ int W f`.
#[derive(Debug, Clone)]
pub struct WeightedQuadrature {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedQuadrature {
    /// Requires `W >= 0`. Nodes with weight below `floor * max weight` are
    /// dropped.
    pub fn new(w: &PerturbationSpec, opts: &QuadratureOptions, floor: f64) -> Result<Self> {
        if !w.is_definite() {
            return Err(Error::InvalidInput(
                "weighted quadrature needs a non-negative perturbation".into(),
            ));
        }
        let d = w.dim();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for term in w.terms() {
            match term {
                Bump::Box {
                    center,
                    half_width,
                    amplitude,
                } => {
                    let axes: Vec<_> = (0..d)
                        .map(|a| {
                            composite_legendre(
                                center[a] - half_width[a],
                                center[a] + half_width[a],
                                opts.panel,
                                opts.legendre_order,
                            )
                        })
                        .collect();
                    let (p, ws) = tensor(&axes);
                    points.extend(p);
                    weights.extend(ws.into_iter().map(|x| x * amplitude));
                }
                Bump::Gaussian {
                    center,
                    sigma,
                    amplitude,
                } => {
                    let (t, tw) = gauss_hermite(opts.hermite_nodes);
                    let s = std::f64::consts::SQRT_2 * sigma;
                    let axes: Vec<_> = (0..d)
                        .map(|a| {
                            (
                                t.iter().map(|ti| center[a] + s * ti).collect::<Vec<_>>(),
                                tw.iter().map(|wi| s * wi).collect::<Vec<_>>(),
                            )
                        })
                        .collect();
                    let (p, ws) = tensor(&axes);
                    points.extend(p);
                    weights.extend(ws.into_iter().map(|x| x * amplitude));
                }
            }
        }
        let max_w = weights.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..weights.len())
            .filter(|&i| weights[i] > floor * max_w)
            .collect();
        Ok(Self {
            points: keep.iter().map(|&i| points[i].clone()).collect(),
            weights: keep.iter().map(|&i| weights[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}
