//! End-to-end pipelines shared by the command-line tool, the examples and
//! the integration tests: edge setup, prediction, box operator, oracle,
//! pencil and their comparison, all driven by a [`RunConfig`].

use serde::Serialize;

use crate::bands::{
    find_gaps, refine_edge, sweep_bands, synthetic_edge, BandStructure, EdgeClass, EdgeSide, ExtremalSet, GapEdge,
    SpectralGap,
};
use crate::birman_schwinger::{edge_grid, BirmanSchwinger, BranchTable, PencilRoot};
use crate::config::{Problem, RunConfig};
use crate::discrete::{auto_half_width, TruncatedH0};
use crate::edge_model::{degenerate_gw, non_degenerate_model, DegenerateEdgeModel, NonDegenerateEdgeModel};
use crate::error::{Error, Result};
use crate::fiber::PlaneWaveBasis;
use crate::lattice::{MomentumGrid, PerturbationSpec};
use crate::oracle::{gap_spectrum, OracleResult};
use crate::radial::{momentum_sector_spectrum, radial_levels, MomentumSectorOptions, RadialOptions};
use crate::predictor::{predict_degenerate, predict_non_degenerate, threshold_verdict, Prediction, ThresholdVerdict};

fn config_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        message: message.into(),
    }
}

/// Band structure of a periodic problem.
pub fn bands(cfg: &RunConfig, problem: &Problem) -> Result<BandStructure> {
    if problem.symbol.is_some() {
        return Err(config_err("/symbol", "band sweeps need a periodic potential, not a symbol"));
    }
    let basis = PlaneWaveBasis::new(problem.dim, cfg.cutoff())?;
    let grid = MomentumGrid::uniform(problem.dim, cfg.bands.grid)?;
    sweep_bands(&problem.potential, &basis, &grid, cfg.bands.n_bands)
}

/// The selected gap and its refined edge.
#[derive(Debug, Clone)]
pub struct EdgeSetup {
    pub bands: Option<BandStructure>,
    pub gap: SpectralGap,
    pub edge: GapEdge,
}

pub fn edge_setup(cfg: &RunConfig, problem: &Problem) -> Result<EdgeSetup> {
    let tol = cfg.edge.tolerances;
    if let Some(sd) = &problem.symbol {
        if cfg.edge.side != EdgeSide::Upper || cfg.edge.gap != 0 {
            return Err(config_err("/edge", "a symbol has only the upper edge of the semi-infinite gap"));
        }
        let edge = synthetic_edge(sd, cfg.edge.manifold_samples, &tol)?;
        let gap = SpectralGap {
            j: 0,
            lambda_minus: None,
            lambda_plus: sd.min_value(),
        };
        return Ok(EdgeSetup { bands: None, gap, edge });
    }
    let bs = bands(cfg, problem)?;
    let gaps = find_gaps(&bs, tol.gap_tol);
    let Some(gap) = gaps.iter().find(|g| g.j == cfg.edge.gap).copied() else {
        return Err(config_err(
            "/edge/gap",
            format!(
                "no open gap above band {} (open gaps: {:?})",
                cfg.edge.gap,
                gaps.iter().map(|g| g.j).collect::<Vec<_>>()
            ),
        ));
    };
    let edge = refine_edge(&bs, &gap, cfg.edge.side, &tol)?;
    Ok(EdgeSetup {
        bands: Some(bs),
        gap,
        edge,
    })
}

/// Leading-order model of the selected edge.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeModel {
    NonDegenerate(NonDegenerateEdgeModel),
    Degenerate(DegenerateEdgeModel),
    /// Sign-indefinite W: no leading-order law, only the edge masses.
    Indefinite { min_mass: f64 },
}

impl EdgeModel {
    pub fn calibration(&self) -> f64 {
        match self {
            EdgeModel::Degenerate(m) => m.calibration,
            EdgeModel::NonDegenerate(_) | EdgeModel::Indefinite { .. } => 1.0,
        }
    }

    /// Smallest effective mass, which sets the slowest decay.
    pub fn min_mass(&self, edge: &GapEdge) -> f64 {
        match self {
            EdgeModel::NonDegenerate(m) => m.masses.iter().cloned().fold(f64::INFINITY, f64::min),
            EdgeModel::Indefinite { min_mass } => *min_mass,
            EdgeModel::Degenerate(_) => match &edge.set {
                ExtremalSet::Manifold { samples, .. } => samples.iter().map(|s| s.mass).fold(f64::INFINITY, f64::min),
                ExtremalSet::Points { extrema } => extrema.iter().map(|e| e.mass).fold(f64::INFINITY, f64::min),
            },
        }
    }
}

pub fn edge_model(cfg: &RunConfig, problem: &Problem, setup: &EdgeSetup) -> Result<EdgeModel> {
    let w = cfg.require_perturbation()?;
    if !w.is_definite() {
        let min_mass = setup.edge.extrema().iter().map(|e| e.mass).fold(f64::INFINITY, f64::min);
        return Ok(EdgeModel::Indefinite { min_mass });
    }
    match setup.edge.classify() {
        EdgeClass::NonDegenerate => Ok(EdgeModel::NonDegenerate(non_degenerate_model(&setup.edge, &w)?)),
        EdgeClass::MorseBott { .. } => {
            let sd = problem
                .symbol
                .as_ref()
                .ok_or_else(|| Error::Unsupported("Morse-Bott edges are modelled for symbols only".into()))?;
            Ok(EdgeModel::Degenerate(degenerate_gw(
                sd,
                &w,
                cfg.edge.manifold_samples,
                &cfg.edge.tolerances,
            )?))
        }
        other => Err(Error::EdgeRefused(format!("edge classified as {other:?}"))),
    }
}

pub fn predict(setup: &EdgeSetup, model: &EdgeModel, gamma: f64) -> Result<Prediction> {
    let width = setup.gap.width();
    match model {
        EdgeModel::NonDegenerate(m) => predict_non_degenerate(m, gamma, width),
        EdgeModel::Degenerate(m) => predict_degenerate(m, gamma, m.nu.len(), width),
        EdgeModel::Indefinite { .. } => Err(Error::Unsupported(
            "no leading-order prediction for a sign-indefinite W".into(),
        )),
    }
}

pub fn threshold(cfg: &RunConfig, setup: &EdgeSetup) -> Result<ThresholdVerdict> {
    threshold_verdict(&setup.edge, &cfg.require_perturbation()?)
}

/// Box operator for one coupling: the half width grows until the deepest
/// predicted level decays inside the box.
#[derive(Debug)]
pub struct BoxSetup {
    pub h0: TruncatedH0,
    pub gap: SpectralGap,
    pub half_width_capped: bool,
}

pub fn box_setup(cfg: &RunConfig, problem: &Problem, setup: &EdgeSetup, model: &EdgeModel, gamma: f64) -> Result<BoxSetup> {
    let d = &cfg.discretization;
    let depth = predict(setup, model, gamma)
        .ok()
        .and_then(|p| p.depths.first().copied())
        .unwrap_or(0.0);
    let (half_width, capped) = if depth > 0.0 {
        auto_half_width(d.half_width_min, model.min_mass(&setup.edge), depth, d.half_width_cap)
    } else {
        (d.half_width_min, false)
    };
    box_at(cfg, problem, setup, half_width).map(|(h0, gap)| BoxSetup {
        h0,
        gap,
        half_width_capped: capped,
    })
}

/// Box operator at a given half width and its verified gap.
pub fn box_at(cfg: &RunConfig, problem: &Problem, setup: &EdgeSetup, half_width: usize) -> Result<(TruncatedH0, SpectralGap)> {
    let d = &cfg.discretization;
    let h0 = match (&problem.symbol, d.backend) {
        (Some(sd), _) => TruncatedH0::synthetic(sd, half_width, d.per_unit)?,
        (None, Some(kind)) => TruncatedH0::finite_difference_with(&problem.potential, half_width, d.per_unit, kind)?,
        (None, None) => TruncatedH0::finite_difference(&problem.potential, half_width, d.per_unit)?,
    };
    let margin = 0.1 * setup.gap.width().min(1.0);
    let gap = h0.verify_gap(&setup.gap, margin)?;
    Ok((h0, gap))
}

/// Spectral window searched by the oracle: the whole box gap, with the
/// semi-infinite gap cut at the lowest level `γW` can produce.
pub fn oracle_window(gap: &SpectralGap, w: &PerturbationSpec, gamma: f64) -> (f64, f64) {
    let lo = gap
        .lambda_minus
        .unwrap_or(gap.lambda_plus - gamma.abs() * w.sup_norm_bound() - 1.0);
    (lo, gap.lambda_plus)
}

pub fn oracle(b: &BoxSetup, w: &PerturbationSpec, gamma: f64, with_vectors: bool) -> Result<OracleResult> {
    gap_spectrum(&b.h0, w, &b.gap, gamma, oracle_window(&b.gap, w, gamma), with_vectors)
}

/// Highest angular momentum visited by the sector oracle.
pub const SECTOR_ELL_MAX: usize = 64;

/// Levels below the edge from angular-momentum sectors, each with its
/// degeneracy, ascending. Needs `discretization.oracle = sectors`.
pub fn sector_oracle(problem: &Problem, w: &PerturbationSpec, gamma: f64) -> Result<Vec<(f64, usize)>> {
    match problem.symbol {
        Some(crate::bands::SyntheticDispersion::Radial { dim: 2, k0, offset }) => {
            momentum_sector_spectrum(k0, offset, w, gamma, SECTOR_ELL_MAX, &MomentumSectorOptions::default())
        }
        None if problem.potential.is_zero() => {
            // the centrifugal term only grows with ell, so stop at the first empty sector
            let opts = RadialOptions::default();
            let mut out = Vec::new();
            for ell in 0..=SECTOR_ELL_MAX {
                let deg = match (problem.dim, ell) {
                    (2, 0) => 1,
                    (2, _) => 2,
                    _ => 2 * ell + 1,
                };
                let v = radial_levels(problem.dim, w, gamma, ell, &opts)?.values;
                if v.is_empty() {
                    break;
                }
                out.extend(v.into_iter().map(|x| (x, deg)));
            }
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(out)
        }
        _ => Err(config_err(
            "/discretization/oracle",
            "sectors need V = 0 or a radial symbol in d = 2",
        )),
    }
}

/// Branch table on a grid accumulating at the edge of `side`, and the
/// pencil roots for `gamma`.
#[derive(Debug, Clone, Serialize)]
pub struct PencilRun {
    pub gamma: f64,
    pub table: BranchTable,
    pub roots: Vec<PencilRoot>,
}

pub fn pencil_lambdas(cfg: &RunConfig, gap: &SpectralGap) -> Vec<f64> {
    let scale = if gap.is_semi_infinite() { 1.0 } else { gap.width() };
    match cfg.edge.side {
        EdgeSide::Upper => edge_grid(gap.lambda_plus, scale / 4.0, cfg.pencil.n_lambda, true),
        EdgeSide::Lower => edge_grid(
            gap.lambda_minus.expect("lower edge of a finite gap"),
            scale / 4.0,
            cfg.pencil.n_lambda,
            false,
        ),
    }
}

pub fn pencil(cfg: &RunConfig, b: &BoxSetup, w: &PerturbationSpec, gamma: f64) -> Result<PencilRun> {
    let bs = BirmanSchwinger::new(&b.h0, w, b.gap)?;
    let table = bs.branches(&pencil_lambdas(cfg, &b.gap), cfg.pencil.n_positive, cfg.pencil.n_negative)?;
    let roots = bs.solve_pencil(&table, gamma, cfg.pencil.root_tol)?;
    Ok(PencilRun { gamma, table, roots })
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub gamma: f64,
    pub k: usize,
    pub rho_pred: Option<f64>,
    pub rho_pencil: Option<f64>,
    pub rho_oracle: Option<f64>,
    /// Relative error of the predicted depth against the oracle depth,
    /// both measured from the box edge.
    pub rel_err_pred: Option<f64>,
    /// `|rho_pencil - rho_oracle| / |rho_oracle - edge|`.
    pub rel_err_pencil: Option<f64>,
    pub abs_err_pencil: Option<f64>,
    pub kernel_dimension: Option<usize>,
    pub oracle_multiplicity: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareVerdict {
    pub rows: usize,
    pub pencil_max_abs_err: f64,
    pub pencil_tol: f64,
    pub pencil_agrees: bool,
    pub kernel_dimensions_match: bool,
    pub counts_match: bool,
    /// Relative prediction error at the smallest |gamma|.
    pub final_rel_err_pred: Option<f64>,
    pub max_rel_err: f64,
    pub prediction_within_tolerance: bool,
    pub rel_err_pred_decreasing: bool,
    pub half_width_capped: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub verdict: CompareVerdict,
}

/// Levels born from the selected edge, closest to the edge last, and the
/// box edge they are measured from.
fn edge_levels(side: EdgeSide, gap: &SpectralGap, values: &[f64], n: usize) -> (f64, Vec<f64>) {
    match side {
        EdgeSide::Upper => {
            let mut v: Vec<f64> = values.to_vec();
            v.sort_by(|a, b| a.total_cmp(b));
            let take = v.len().saturating_sub(n);
            (gap.lambda_plus, v[take..].to_vec())
        }
        EdgeSide::Lower => {
            let mut v: Vec<f64> = values.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            let take = v.len().saturating_sub(n);
            (gap.lambda_minus.unwrap_or(f64::NAN), v[take..].to_vec())
        }
    }
}

/// Everything computed for one coupling during a comparison.
#[derive(Debug)]
pub struct CouplingRun {
    pub gamma: f64,
    pub prediction: Prediction,
    pub boxed: BoxSetup,
    pub oracle: OracleResult,
    pub pencil: PencilRun,
}

/// Prediction, pencil and oracle for every coupling, paired level by level
/// from the deepest predicted level outwards.
pub fn compare(cfg: &RunConfig, problem: &Problem) -> Result<Comparison> {
    compare_runs(cfg, problem, false).map(|(c, _)| c)
}

/// As [`compare`], also returning the per-coupling runs (with oracle
/// eigenvectors when `with_vectors`).
pub fn compare_runs(cfg: &RunConfig, problem: &Problem, with_vectors: bool) -> Result<(Comparison, Vec<CouplingRun>)> {
    let w = cfg.require_perturbation()?;
    let gammas = cfg.require_couplings()?;
    let setup = edge_setup(cfg, problem)?;
    let model = edge_model(cfg, problem, &setup)?;
    let mut rows = Vec::new();
    let mut capped = false;
    let mut counts_match = true;
    let mut per_gamma_err = Vec::new();
    let mut runs = Vec::new();
    for &gamma in gammas {
        let pred = predict(&setup, &model, gamma)?;
        let b = box_setup(cfg, problem, &setup, &model, gamma)?;
        capped |= b.half_width_capped;
        let orc = oracle(&b, &w, gamma, with_vectors)?;
        let pen = pencil(cfg, &b, &w, gamma)?;
        let n = pred.depths.len().max(1);
        let (edge, oracle_levels) = edge_levels(cfg.edge.side, &b.gap, &orc.values, n);
        let root_values: Vec<f64> = pen.roots.iter().map(|r| r.lambda).collect();
        let (_, pencil_levels) = edge_levels(cfg.edge.side, &b.gap, &root_values, n);
        counts_match &= orc.values.len() == pen.roots.len();
        // deepest first
        let deepest = |mut v: Vec<f64>| {
            v.sort_by(|a, b| (a - edge).abs().total_cmp(&(b - edge).abs()).reverse());
            v
        };
        let oracle_levels = deepest(oracle_levels);
        let pencil_levels = deepest(pencil_levels);
        for k in 0..n {
            let rho_pred = pred.rho.get(k).copied();
            let rho_oracle = oracle_levels.get(k).copied();
            let rho_pencil = pencil_levels.get(k).copied();
            let rel_err_pred = match (pred.depths.get(k), rho_oracle) {
                (Some(dp), Some(ro)) => {
                    let depth = (edge - ro).abs();
                    Some((dp - depth) / depth)
                }
                _ => None,
            };
            let abs_err_pencil = match (rho_pencil, rho_oracle) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            let rel_err_pencil = match (abs_err_pencil, rho_oracle) {
                (Some(e), Some(ro)) => Some(e / (edge - ro).abs()),
                _ => None,
            };
            let kernel_dimension = rho_pencil.and_then(|r| pen.roots.iter().find(|p| p.lambda == r).map(|p| p.kernel_dimension));
            let oracle_multiplicity = rho_oracle.map(|r| {
                orc.values
                    .iter()
                    .filter(|v| (*v - r).abs() <= 1e-9 * (1.0 + r.abs()))
                    .count()
            });
            if k == 0 {
                per_gamma_err.push((gamma.abs(), rel_err_pred));
            }
            rows.push(CompareRow {
                gamma,
                k: k + 1,
                rho_pred,
                rho_pencil,
                rho_oracle,
                rel_err_pred,
                rel_err_pencil,
                abs_err_pencil,
                kernel_dimension,
                oracle_multiplicity,
            });
        }
        runs.push(CouplingRun {
            gamma,
            prediction: pred,
            boxed: b,
            oracle: orc,
            pencil: pen,
        });
    }
    let pencil_max_abs_err = rows
        .iter()
        .filter_map(|r| r.abs_err_pencil)
        .fold(0.0, f64::max);
    let pencil_tol = cfg.compare.pencil_tol;
    let pencil_agrees = pencil_max_abs_err <= pencil_tol
        && rows.iter().all(|r| r.rho_oracle.is_some() == r.rho_pencil.is_some());
    let kernel_dimensions_match = rows
        .iter()
        .all(|r| r.kernel_dimension == r.oracle_multiplicity || r.rho_pencil.is_none());
    per_gamma_err.sort_by(|a, b| b.0.total_cmp(&a.0));
    let errs: Vec<Option<f64>> = per_gamma_err.iter().map(|e| e.1).collect();
    let final_rel_err_pred = errs.last().copied().flatten();
    let rel_err_pred_decreasing = errs
        .windows(2)
        .all(|p| matches!((p[0], p[1]), (Some(a), Some(b)) if b.abs() < a.abs()));
    let max_rel_err = cfg.compare.max_rel_err;
    let prediction_within_tolerance = final_rel_err_pred.is_some_and(|e| e.abs() <= max_rel_err);
    let verdict = CompareVerdict {
        rows: rows.len(),
        pencil_max_abs_err,
        pencil_tol,
        pencil_agrees,
        kernel_dimensions_match,
        counts_match,
        final_rel_err_pred,
        max_rel_err,
        prediction_within_tolerance,
        rel_err_pred_decreasing,
        half_width_capped: capped,
        pass: pencil_agrees && kernel_dimensions_match && counts_match,
    };
    Ok((Comparison { rows, verdict }, runs))
}
