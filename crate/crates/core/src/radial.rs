//! Angular-momentum sectors of `-Δ + γW` on R^d (d = 2, 3) for a radial `W`.
//! Piecewise-linear finite elements in `r` with weight `r^{d-1}`, uniform
//! near the origin and geometrically stretched out to a far Dirichlet wall,
//! so levels with decay lengths far beyond any periodic box are resolved.
//! Lumped mass makes the pencil a symmetric tridiagonal after scaling, and
//! levels are located by Sturm counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Bump, PerturbationSpec};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    /// Element length near the origin.
    pub h: f64,
    /// Radius up to which elements are uniform.
    pub fine_radius: f64,
    /// Ratio between consecutive element lengths beyond `fine_radius`.
    pub growth: f64,
    /// Dirichlet wall.
    pub outer_radius: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            h: 1.0 / 64.0,
            fine_radius: 10.0,
            growth: 1.01,
            outer_radius: 1e6,
        }
    }
}

impl RadialOptions {
    pub fn refined(&self) -> Self {
        Self {
            h: self.h / 2.0,
            growth: 1.0 + (self.growth - 1.0) / 2.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialLevels {
    pub dim: usize,
    pub ell: usize,
    pub gamma: f64,
    /// Eigenvalues below zero, ascending.
    pub values: Vec<f64>,
    pub nodes: usize,
}

fn check_radial(w: &PerturbationSpec) -> Result<()> {
    let ok = w.terms().iter().all(|t| match t {
        Bump::Gaussian { center, .. } => center.iter().all(|c| *c == 0.0),
        Bump::Box { .. } => false,
    });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "radial sectors need W built from gaussians centred at the origin".into(),
        ))
    }
}

fn nodes(opts: &RadialOptions) -> Vec<f64> {
    let mut r = vec![0.0];
    let n_fine = (opts.fine_radius / opts.h).round() as usize;
    for i in 1..=n_fine {
        r.push(i as f64 * opts.h);
    }
    let mut step = opts.h;
    let mut last = *r.last().unwrap();
    while last < opts.outer_radius {
        step *= opts.growth;
        last = (last + step).min(opts.outer_radius);
        r.push(last);
    }
    r
}

/// Symmetric tridiagonal `(diag, off)` of the scaled sector operator.
fn sector_matrix(dim: usize, w: &PerturbationSpec, gamma: f64, ell: usize, opts: &RadialOptions) -> (Vec<f64>, Vec<f64>) {
    let r = nodes(opts);
    let n_el = r.len() - 1;
    let d = dim as i32;
    let centrifugal = (ell * (ell + dim - 2)) as f64;
    let (t, tw) = gauss_legendre(4);
    let wr = |x: f64| {
        let mut p = vec![0.0; dim];
        p[0] = x;
        w.evaluate(&p)
    };
    // node values, all nodes including r = 0 and the wall
    let mut k_diag = vec![0.0; r.len()];
    let mut k_off = vec![0.0; n_el];
    let mut mass = vec![0.0; r.len()];
    let mut pot = vec![0.0; r.len()];
    for e in 0..n_el {
        let (a, b) = (r[e], r[e + 1]);
        let len = b - a;
        let weight = (b.powi(d) - a.powi(d)) / dim as f64;
        k_diag[e] += weight / (len * len);
        k_diag[e + 1] += weight / (len * len);
        k_off[e] = -weight / (len * len);
        for (ti, wi) in t.iter().zip(&tw) {
            let x = a + 0.5 * len * (1.0 + ti);
            let jac = 0.5 * len * wi * x.powi(d - 1);
            let phi_b = (x - a) / len;
            let phi_a = 1.0 - phi_b;
            let v = gamma * wr(x) + centrifugal / (x * x);
            mass[e] += jac * phi_a;
            mass[e + 1] += jac * phi_b;
            pot[e] += jac * phi_a * v;
            pot[e + 1] += jac * phi_b * v;
        }
    }
    // unknowns: drop the wall, and the origin when psi(0) = 0
    let first = if ell == 0 { 0 } else { 1 };
    let last = r.len() - 1;
    let idx: Vec<usize> = (first..last).collect();
    let diag: Vec<f64> = idx.iter().map(|&i| (k_diag[i] + pot[i]) / mass[i]).collect();
    let off: Vec<f64> = idx
        .windows(2)
        .map(|p| k_off[p[0]] / (mass[p[0]] * mass[p[1]]).sqrt())
        .collect();
    (diag, off)
}

/// Number of eigenvalues below `x` of a symmetric tridiagonal matrix.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Bound states (eigenvalues below zero) of the sector of angular momentum
/// `ell`.
pub fn radial_levels(dim: usize, w: &PerturbationSpec, gamma: f64, ell: usize, opts: &RadialOptions) -> Result<RadialLevels> {
    if !(2..=3).contains(&dim) || w.dim() != dim {
        return Err(Error::InvalidInput("radial sectors are implemented for d = 2, 3".into()));
    }
    check_radial(w)?;
    let (diag, off) = sector_matrix(dim, w, gamma, ell, opts);
    let count = sturm_count(&diag, &off, 0.0);
    let mut lower = 0.0f64;
    for i in 0..diag.len() {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i < off.len() { off[i].abs() } else { 0.0 };
        lower = lower.min(diag[i] - left - right);
    }
    let values = (1..=count)
        .map(|k| {
            let (mut lo, mut hi) = (lower - 1.0, 0.0);
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(&diag, &off, mid) >= k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-13 * hi.abs().max(1e-300) {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    Ok(RadialLevels {
        dim,
        ell,
        gamma,
        values,
        nodes: diag.len(),
    })
}

/// All bound states up to angular momentum `ell_max`, each sector level
/// repeated by its degeneracy (2 for `ell > 0` in d = 2, `2 ell + 1` in
/// d = 3), ascending.
pub fn radial_spectrum(dim: usize, w: &PerturbationSpec, gamma: f64, ell_max: usize, opts: &RadialOptions) -> Result<Vec<(f64, usize)>> {
    let mut out = Vec::new();
    for ell in 0..=ell_max {
        let deg = match (dim, ell) {
            (2, 0) => 1,
            (2, _) => 2,
            _ => 2 * ell + 1,
        };
        for v in radial_levels(dim, w, gamma, ell, opts)?.values {
            out.push((v, deg));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// `I_ell(x) exp(-x)` by the trapezoid rule on its integral over the angle;
/// exponentially accurate once the node count clears `ell + sqrt(x)`.
pub fn bessel_i_scaled(ell: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if ell == 0 { 1.0 } else { 0.0 };
    }
    let m = 16 + ell + (40.0 * x).sqrt().ceil() as usize;
    let f = |phi: f64| (x * (phi.cos() - 1.0)).exp() * (ell as f64 * phi).cos();
    let pi = std::f64::consts::PI;
    let mut s = 0.5 * (f(0.0) + f(pi));
    for j in 1..m {
        s += f(pi * j as f64 / m as f64);
    }
    s / m as f64
}

/// Momentum-space discretization of one angular sector of a radial symbol
/// `(|p| - k0)^2 + offset` in d = 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumSectorOptions {
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Innermost panel width at the shell `|p| = k0`; panels double outward.
    pub min_panel: f64,
    pub max_panel: f64,
    /// Cutoff `k0 + tail / sigma_min`.
    pub tail: f64,
    /// Levels shallower than this are not reported (unresolved by the panels).
    pub depth_floor: f64,
}

impl Default for MomentumSectorOptions {
    fn default() -> Self {
        Self {
            order: 12,
            min_panel: 1e-5,
            max_panel: 0.25,
            tail: 10.0,
            depth_floor: 1e-8,
        }
    }
}

impl MomentumSectorOptions {
    pub fn refined(&self) -> Self {
        Self {
            order: self.order + 4,
            min_panel: self.min_panel / 2.0,
            max_panel: self.max_panel / 2.0,
            ..*self
        }
    }
}

fn graded_panels(a: f64, b: f64, from_a: bool, opts: &MomentumSectorOptions) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0];
    let len = b - a;
    let mut step = opts.min_panel;
    while *cuts.last().unwrap() < len {
        let next = (cuts.last().unwrap() + step).min(len);
        cuts.push(next);
        step = (2.0 * step).min(opts.max_panel);
    }
    cuts.windows(2)
        .map(|c| if from_a { (a + c[0], a + c[1]) } else { (b - c[1], b - c[0]) })
        .collect()
}

fn momentum_nodes(k0: f64, cutoff: f64, opts: &MomentumSectorOptions) -> (Vec<f64>, Vec<f64>) {
    let mut panels = Vec::new();
    if k0 > 0.0 {
        panels.extend(graded_panels(0.0, k0, false, opts));
    }
    panels.extend(graded_panels(k0, cutoff, true, opts));
    let (t, tw) = gauss_legendre(opts.order);
    let mut p = Vec::new();
    let mut w = Vec::new();
    for (a, b) in panels {
        for (ti, wi) in t.iter().zip(&tw) {
            p.push(a + 0.5 * (b - a) * (1.0 + ti));
            w.push(0.5 * (b - a) * wi);
        }
    }
    (p, w)
}

/// Bound states (below `offset`) of the sector `ell` of `s(D) + gamma W`
/// with `s(p) = (|p| - k0)^2 + offset` on R^2 and `W` a sum of centred
/// gaussians. Nystrom discretization of the Hankel-space operator
/// `s(p) g(p) + gamma int K(p, q) g(q) q dq`, with
/// `K(p, q) = sum A s^2 exp(-s^2 (p^2 + q^2) / 2) I_ell(s^2 p q)`.
pub fn momentum_sector_levels(
    k0: f64,
    offset: f64,
    w: &PerturbationSpec,
    gamma: f64,
    ell: usize,
    opts: &MomentumSectorOptions,
) -> Result<RadialLevels> {
    if w.dim() != 2 || !(k0 >= 0.0) {
        return Err(Error::InvalidInput("momentum sectors need d = 2 and k0 >= 0".into()));
    }
    check_radial(w)?;
    let terms: Vec<(f64, f64)> = w
        .terms()
        .iter()
        .filter_map(|t| match t {
            Bump::Gaussian { sigma, amplitude, .. } => Some((*sigma, *amplitude)),
            Bump::Box { .. } => None,
        })
        .collect();
    let sigma_min = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    if terms.is_empty() || !(sigma_min > 0.0) {
        return Ok(RadialLevels { dim: 2, ell, gamma, values: vec![], nodes: 0 });
    }
    let (p, qw) = momentum_nodes(k0, k0 + opts.tail / sigma_min, opts);
    let n = p.len();
    let root: Vec<f64> = p.iter().zip(&qw).map(|(x, wt)| (x * wt).sqrt()).collect();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut k = 0.0;
            for &(s, amp) in &terms {
                let s2 = s * s;
                k += amp * s2 * (-0.5 * s2 * (p[i] - p[j]).powi(2)).exp() * bessel_i_scaled(ell, s2 * p[i] * p[j]);
            }
            let v = gamma * root[i] * root[j] * k;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(i, i)] += (p[i] - k0).powi(2) + offset;
    }
    let eig = crate::linalg::symmetric_eigen(a);
    let mut values: Vec<f64> = eig.values.iter().cloned().filter(|v| *v < offset - opts.depth_floor).collect();
    values.sort_by(|x, y| x.total_cmp(y));
    Ok(RadialLevels { dim: 2, ell, gamma, values, nodes: n })
}

/// All momentum-sector bound states, each repeated by its degeneracy, for
/// `ell` up to the first sector without a resolved level (or `ell_max`).
pub fn momentum_sector_spectrum(
    k0: f64,
    offset: f64,
    w: &PerturbationSpec,
    gamma: f64,
    ell_max: usize,
    opts: &MomentumSectorOptions,
) -> Result<Vec<(f64, usize)>> {
    let mut out = Vec::new();
    for ell in 0..=ell_max {
        let lv = momentum_sector_levels(k0, offset, w, gamma, ell, opts)?;
        if lv.values.is_empty() && ell > 0 {
            break;
        }
        let deg = if ell == 0 { 1 } else { 2 };
        out.extend(lv.values.into_iter().map(|v| (v, deg)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_counts_match_dense() {
        let diag = vec![2.0, 1.0, 3.0, -1.0];
        let off = vec![0.5, -0.3, 0.7];
        let m = nalgebra::DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let ev = crate::linalg::symmetric_eigen(m).values;
        for x in [-2.0, 0.0, 1.5, 2.5, 4.0] {
            assert_eq!(sturm_count(&diag, &off, x), ev.iter().filter(|v| **v < x).count());
        }
    }

    #[test]
    fn three_dimensional_binding_threshold() {
        // A deep gaussian binds; a weak one does not.
        let w = PerturbationSpec::gaussian(vec![0.0; 3], 1.0, 1.0);
        let opts = RadialOptions {
            h: 1.0 / 32.0,
            outer_radius: 1e3,
            ..Default::default()
        };
        assert!(radial_levels(3, &w, -0.05, 0, &opts).unwrap().values.is_empty());
        assert_eq!(radial_levels(3, &w, -5.0, 0, &opts).unwrap().values.len(), 1);
    }

    #[test]
    fn harmonic_sector_levels() {
        // -Δ + r^2 in d = 2 has levels 2(2n + ell + 1); use a wide gaussian
        // well whose bottom is harmonic to second order.
        let s: f64 = 20.0;
        let depth = 2.0 * s * s;
        let w = PerturbationSpec::gaussian(vec![0.0, 0.0], s, 1.0);
        let opts = RadialOptions {
            h: 1.0 / 32.0,
            fine_radius: 12.0,
            outer_radius: 400.0,
            ..Default::default()
        };
        let l0 = radial_levels(2, &w, -depth, 0, &opts).unwrap();
        let l1 = radial_levels(2, &w, -depth, 1, &opts).unwrap();
        // W = 1 - r^2/(2 s^2) + ..., so -depth W = -depth + r^2 + O(r^4/s^2).
        assert!((l0.values[0] + depth - 2.0).abs() < 0.02, "{}", l0.values[0] + depth);
        assert!((l1.values[0] + depth - 4.0).abs() < 0.03, "{}", l1.values[0] + depth);
    }
    #[test]
    fn scaled_bessel_matches_series() {
        // I_ell(x) = sum (x/2)^(2k + ell) / (k! (k + ell)!)
        for ell in [0usize, 1, 3, 7] {
            for x in [0.3, 2.0, 9.0, 30.0] {
                let mut term = (0.5f64 * x).powi(ell as i32) / (1..=ell).map(|k| k as f64).product::<f64>();
                let mut sum = 0.0;
                for k in 0..400 {
                    sum += term;
                    term *= 0.25 * x * x / ((k + 1) as f64 * (k + 1 + ell) as f64);
                }
                let want = sum * (-x).exp();
                assert!((bessel_i_scaled(ell, x) - want).abs() < 1e-15 + 1e-13 * want, "{ell} {x}");
            }
        }
    }

    #[test]
    fn momentum_sectors_match_position_sectors() {
        // k0 = 0 is -Δ: the two representations must agree.
        let w = PerturbationSpec::gaussian(vec![0.0, 0.0], 1.0, 1.0);
        let ropts = RadialOptions {
            h: 1.0 / 128.0,
            outer_radius: 1e3,
            ..Default::default()
        };
        for (ell, gamma) in [(0, -1.0), (1, -4.0)] {
            let m = momentum_sector_levels(0.0, 0.0, &w, gamma, ell, &MomentumSectorOptions::default()).unwrap();
            // second-order elements: Richardson over one refinement
            let r = radial_levels(2, &w, gamma, ell, &ropts).unwrap();
            let rf = radial_levels(2, &w, gamma, ell, &ropts.refined()).unwrap();
            assert_eq!(m.values.len(), r.values.len());
            for ((a, b), c) in m.values.iter().zip(&r.values).zip(&rf.values) {
                let x = c + (c - b) / 3.0;
                assert!((a - x).abs() < 2e-5 * x.abs(), "{ell}: {a} vs {x}");
            }
        }
    }

    #[test]
    fn momentum_sectors_converge() {
        let w = PerturbationSpec::gaussian(vec![0.0, 0.0], 2.0, 1.0);
        let o = MomentumSectorOptions::default();
        for ell in 0..3 {
            let a = momentum_sector_levels(1.0, 0.0, &w, -0.05, ell, &o).unwrap();
            let b = momentum_sector_levels(1.0, 0.0, &w, -0.05, ell, &o.refined()).unwrap();
            assert_eq!(a.values.len(), 1);
            assert!((a.values[0] - b.values[0]).abs() < 1e-10 * b.values[0].abs());
        }
    }
}
