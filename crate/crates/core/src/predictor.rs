//! Leading-order weak-coupling laws for levels born from a gap edge:
//! asymptotic multiplicities, level positions, Lieb-Thirring type sums,
//! thresholds and limiting eigenfunctions.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::bands::{EdgeClass, EdgeSide, GapEdge};
use crate::edge_model::{DegenerateEdgeModel, NonDegenerateEdgeModel};
use crate::error::{Error, Result};
use crate::lattice::PerturbationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    D1Sqrt,
    D2Log,
    DegeneratePsi { dim: usize, codim: usize },
    ThresholdNone,
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::D1Sqrt => "d1_sqrt",
            Law::D2Log => "d2_log",
            Law::DegeneratePsi { .. } => "degenerate_psi",
            Law::ThresholdNone => "threshold_none",
        }
    }

    /// `f(depth)` with `f(lambda_edge - rho) = |gamma| nu (1 + O(gamma))`.
    pub fn transform(&self, depth: f64, calibration: f64) -> f64 {
        match *self {
            Law::D1Sqrt => (2.0 * depth).sqrt(),
            Law::D2Log => 2.0 * PI / (1.0 / depth).ln(),
            Law::DegeneratePsi { dim, codim } => {
                let psi = psi(dim, codim, depth / calibration);
                psi.unwrap_or(f64::NAN)
            }
            Law::ThresholdNone => f64::NAN,
        }
    }

    /// Inverse of [`Law::transform`]: the depth for `x = |gamma| nu`.
    pub fn depth(&self, x: f64, calibration: f64) -> f64 {
        match *self {
            Law::D1Sqrt => x * x / 2.0,
            Law::D2Log => (-2.0 * PI / x).exp(),
            Law::DegeneratePsi { dim, codim } => {
                let d = dim as i32;
                match codim {
                    1 => calibration * (SQRT_2 * PI * x / (2.0 * PI).powi(d)).powi(2),
                    2 => calibration * (-(2.0 * PI).powi(d - 1) / x).exp(),
                    _ => f64::NAN,
                }
            }
            Law::ThresholdNone => 0.0,
        }
    }
}

/// `Psi(s)`: `(2 pi)^d / (sqrt(2) pi) sqrt(s)` for codimension 1,
/// `(2 pi)^{d-1} / ln(1/s)` for codimension 2.
pub fn psi(dim: usize, codim: usize, s: f64) -> Option<f64> {
    let d = dim as i32;
    match codim {
        1 => Some((2.0 * PI).powi(d) / (SQRT_2 * PI) * s.sqrt()),
        2 => Some((2.0 * PI).powi(d - 1) / (1.0 / s).ln()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Finite(usize),
    Infinite,
}

/// Number of characteristic branches diverging at the edge.
pub fn asymptotic_multiplicity(edge: &GapEdge) -> Result<Multiplicity> {
    match edge.classify() {
        EdgeClass::NonDegenerate => Ok(match edge.dim {
            1 => Multiplicity::Finite(1),
            2 => Multiplicity::Finite(edge.extrema().len()),
            _ => Multiplicity::Finite(0),
        }),
        EdgeClass::MorseBott { codim } => Ok(if codim <= 2 {
            Multiplicity::Infinite
        } else {
            Multiplicity::Finite(0)
        }),
        EdgeClass::NotSimple | EdgeClass::Degenerate => Err(Error::EdgeRefused(
            "edge is not classified as non-degenerate or Morse-Bott".into(),
        )),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub side: EdgeSide,
    pub gamma: f64,
    pub law: Law,
    pub multiplicity: Multiplicity,
    /// Distances `|lambda_edge - rho_k|`, increasing in k.
    pub depths: Vec<f64>,
    /// Predicted levels.
    pub rho: Vec<f64>,
    /// `|gamma|` at which the deepest predicted level reaches half the gap
    /// width; `None` for the semi-infinite gap.
    pub validity_radius: Option<f64>,
}

fn check_sign(side: EdgeSide, gamma: f64) -> Result<()> {
    match side {
        EdgeSide::Upper if gamma < 0.0 => Ok(()),
        EdgeSide::Lower if gamma > 0.0 => Ok(()),
        EdgeSide::Upper => Err(Error::InvalidInput(
            "for W >= 0 levels leave the upper edge only for gamma < 0".into(),
        )),
        EdgeSide::Lower => Err(Error::InvalidInput(
            "for W >= 0 levels leave the lower edge only for gamma > 0".into(),
        )),
    }
}

fn place(side: EdgeSide, edge_value: f64, depths: &[f64]) -> Vec<f64> {
    depths
        .iter()
        .map(|d| match side {
            EdgeSide::Upper => edge_value - d,
            EdgeSide::Lower => edge_value + d,
        })
        .collect()
}

/// Smallest `|gamma|` with `law.depth(|gamma| nu_1) = width / 2`, by
/// bisection on the monotone law.
fn validity_radius(law: Law, nu1: f64, calibration: f64, gap_width: f64) -> Option<f64> {
    if !gap_width.is_finite() || nu1 <= 0.0 {
        return None;
    }
    let target = gap_width / 2.0;
    let f = |g: f64| law.depth(g * nu1, calibration) - target;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `lambda_+ - rho_1 = gamma^2 (sqrt(m) ||v||^2 / sqrt 2)^2`.
pub fn predict_d1(model: &NonDegenerateEdgeModel, gamma: f64, gap_width: f64) -> Result<Prediction> {
    if model.dim != 1 {
        return Err(Error::InvalidInput("d1 law needs d = 1".into()));
    }
    check_sign(model.side, gamma)?;
    let nu1 = model.nu[0];
    let depths = vec![Law::D1Sqrt.depth(gamma.abs() * nu1, 1.0)];
    Ok(Prediction {
        side: model.side,
        gamma,
        law: Law::D1Sqrt,
        multiplicity: Multiplicity::Finite(1),
        rho: place(model.side, model.edge_value, &depths),
        depths,
        validity_radius: validity_radius(Law::D1Sqrt, nu1, 1.0, gap_width),
    })
}

/// `lambda_+ - rho_k = exp(-2 pi / (|gamma| nu_k))`, one level per `nu_k`.
pub fn predict_d2(model: &NonDegenerateEdgeModel, gamma: f64, gap_width: f64) -> Result<Prediction> {
    if model.dim != 2 {
        return Err(Error::InvalidInput("d2 law needs d = 2".into()));
    }
    check_sign(model.side, gamma)?;
    let depths: Vec<f64> = model
        .nu
        .iter()
        .map(|nu| Law::D2Log.depth(gamma.abs() * nu, 1.0))
        .collect();
    Ok(Prediction {
        side: model.side,
        gamma,
        law: Law::D2Log,
        multiplicity: Multiplicity::Finite(model.nu.len()),
        rho: place(model.side, model.edge_value, &depths),
        depths,
        validity_radius: validity_radius(Law::D2Log, model.nu[0], 1.0, gap_width),
    })
}

/// Dispatch on dimension for isolated extrema; d >= 3 predicts nothing.
pub fn predict_non_degenerate(model: &NonDegenerateEdgeModel, gamma: f64, gap_width: f64) -> Result<Prediction> {
    match model.dim {
        1 => predict_d1(model, gamma, gap_width),
        2 => predict_d2(model, gamma, gap_width),
        _ => {
            check_sign(model.side, gamma)?;
            Ok(Prediction {
                side: model.side,
                gamma,
                law: Law::ThresholdNone,
                multiplicity: Multiplicity::Finite(0),
                depths: vec![],
                rho: vec![],
                validity_radius: None,
            })
        }
    }
}

/// Kernel eigenvalues below this fraction of the largest are rounding noise
/// of the sampled kernel, not levels.
const NU_NOISE: f64 = 1e-10;

/// First `n` levels from `Psi(lambda_+ - rho_n) = |gamma| nu_n`.
pub fn predict_degenerate(model: &DegenerateEdgeModel, gamma: f64, n: usize, gap_width: f64) -> Result<Prediction> {
    check_sign(EdgeSide::Upper, gamma)?;
    if model.codim > 2 {
        return Ok(Prediction {
            side: EdgeSide::Upper,
            gamma,
            law: Law::ThresholdNone,
            multiplicity: Multiplicity::Finite(0),
            depths: vec![],
            rho: vec![],
            validity_radius: None,
        });
    }
    let law = Law::DegeneratePsi {
        dim: model.dim,
        codim: model.codim,
    };
    let depths: Vec<f64> = model
        .nu
        .iter()
        .take(n)
        .filter(|nu| **nu > NU_NOISE * model.nu[0])
        .map(|nu| law.depth(gamma.abs() * nu, model.calibration))
        .collect();
    Ok(Prediction {
        side: EdgeSide::Upper,
        gamma,
        law,
        multiplicity: Multiplicity::Infinite,
        rho: place(EdgeSide::Upper, model.edge_value, &depths),
        depths,
        validity_radius: validity_radius(law, model.nu[0], model.calibration, gap_width),
    })
}

/// `|gamma| / (2 pi) sum_k sqrt(m_k) ||v_k||^2`: leading order of
/// `sum_k 1 / ln(1 / (lambda_+ - rho_k))`.
pub fn lieb_thirring_sum(model: &NonDegenerateEdgeModel, gamma: f64) -> f64 {
    gamma.abs() / (2.0 * PI) * model.weighted_trace()
}

/// `|gamma| tr(G_W)`: leading order of `sum_n Psi(lambda_+ - rho_n)`.
pub fn lieb_thirring_sum_degenerate(model: &DegenerateEdgeModel, gamma: f64) -> f64 {
    gamma.abs() * model.trace_analytic
}

/// Limit of `sqrt(W) psi_gamma` (normalized) for the k-th level: the k-th
/// eigenfunction of `G_W`, evaluated at `x`.
pub fn limiting_eigenfunction(model: &NonDegenerateEdgeModel, k: usize, x: &[f64]) -> Complex64 {
    model.g_value(k, x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdVerdict {
    pub has_virtuals: bool,
    pub no_virtuals_for_small_gamma: bool,
    pub multiplicity_bound: Option<Multiplicity>,
    pub reason: String,
}

/// Existence / absence of levels born from `edge` (coupling sign implied by
/// the side: gamma < 0 for the upper edge).
pub fn threshold_verdict(edge: &GapEdge, w: &PerturbationSpec) -> Result<ThresholdVerdict> {
    let codim = match edge.classify() {
        EdgeClass::NonDegenerate => edge.dim,
        EdgeClass::MorseBott { codim } => codim,
        _ => {
            return Err(Error::EdgeRefused("edge not classified".into()));
        }
    };
    let multiplicity = asymptotic_multiplicity(edge)?;
    // the part of W that attracts levels out of this edge
    let (attracting_zero, repelling_zero) = match edge.side {
        EdgeSide::Upper => (w.is_nonpositive(), w.is_definite()),
        EdgeSide::Lower => (w.is_definite(), w.is_nonpositive()),
    };
    if codim >= 3 {
        return Ok(ThresholdVerdict {
            has_virtuals: false,
            no_virtuals_for_small_gamma: true,
            multiplicity_bound: Some(Multiplicity::Finite(0)),
            reason: format!("codimension {codim} >= 3 with integrable W: threshold for the birth of levels"),
        });
    }
    if attracting_zero {
        return Ok(ThresholdVerdict {
            has_virtuals: false,
            no_virtuals_for_small_gamma: true,
            multiplicity_bound: Some(Multiplicity::Finite(0)),
            reason: "W has no part of the attracting sign for this edge".into(),
        });
    }
    if repelling_zero {
        return Ok(ThresholdVerdict {
            has_virtuals: true,
            no_virtuals_for_small_gamma: false,
            multiplicity_bound: Some(multiplicity),
            reason: format!("definite W, codimension {codim} <= 2"),
        });
    }
    Ok(ThresholdVerdict {
        has_virtuals: false,
        no_virtuals_for_small_gamma: false,
        multiplicity_bound: Some(multiplicity),
        reason: "indefinite W: multiplicities bounded by the attracting part, existence undetermined".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(dim: usize, nu: Vec<f64>, masses: Vec<f64>, norms: Vec<f64>) -> NonDegenerateEdgeModel {
        NonDegenerateEdgeModel {
            side: EdgeSide::Upper,
            dim,
            edge_value: 0.0,
            extrema: vec![vec![0.0; dim]; nu.len()],
            masses,
            norms_sq: norms,
            gram_condition_number: 1.0,
            coefficients: vec![],
            gram: nalgebra::DMatrix::zeros(0, 0),
            blochs: vec![],
            perturbation: None,
            nu,
        }
    }

    #[test]
    fn plug_in_values() {
        let m = toy(1, vec![0.5f64.sqrt()], vec![0.5], vec![1.0]);
        let p = predict_d1(&m, -0.1, f64::INFINITY).unwrap();
        assert!((p.depths[0] - 2.5e-3).abs() < 1e-15);
        assert!(predict_d1(&m, 0.1, 1.0).is_err());
        let m = toy(2, vec![0.5], vec![0.25], vec![1.0]);
        let p = predict_d2(&m, -0.5, f64::INFINITY).unwrap();
        assert!((p.depths[0] - (-8.0 * PI).exp()).abs() < 1e-24);
        assert!((psi(2, 1, 1e-4).unwrap() - 0.088_857_658_763_167_3).abs() < 1e-12);
    }

    #[test]
    fn law_transform_inverts_depth() {
        for law in [
            Law::D1Sqrt,
            Law::D2Log,
            Law::DegeneratePsi { dim: 2, codim: 1 },
            Law::DegeneratePsi { dim: 3, codim: 2 },
        ] {
            for x in [0.5, 2.0, 7.0] {
                let d = law.depth(x, 1.0);
                assert!((law.transform(d, 1.0) - x).abs() < 1e-12 * x.max(1.0), "{law:?}");
            }
        }
    }

    #[test]
    fn monotone_in_gamma_and_nu() {
        let m = toy(2, vec![1.0, 0.5], vec![0.25, 0.25], vec![2.0, 2.0]);
        let a = predict_d2(&m, -0.4, f64::INFINITY).unwrap();
        let b = predict_d2(&m, -0.2, f64::INFINITY).unwrap();
        assert!(a.depths[0] > b.depths[0]);
        assert!(a.rho[0] <= a.rho[1]);
        assert!((lieb_thirring_sum(&m, -0.3) - 0.3 / (2.0 * PI) * 2.0).abs() < 1e-15);
    }
}
