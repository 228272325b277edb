//! Fundamental solutions `E_d` of `(-Δ + γ0²) E = δ` for d = 1, 2, 3, the
//! MacDonald function `K0` by quadrature of its integral representation,
//! the quasi-periodic lattice sum `G0(x, p) = Σ_m E_d(x - m) e^{i p·m}` with
//! an explicit tail bound, and cross-checks against independent
//! representations of the same kernels.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::composite_legendre;

/// `K0(x) = ∫_0^∞ exp(-x cosh t) dt` for `x > 0`, to about 1e-13 relative.
pub fn bessel_k0(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(format!("K0 needs a positive argument, got {x}")));
    }
    // beyond t_max the integrand is below e^{-x - 60} relative to e^{-x}
    let t_max = (1.0 + 60.0 / x).acosh();
    let integrate = |panel: f64| {
        let (t, w) = composite_legendre(0.0, t_max, panel, 12);
        t.iter()
            .zip(&w)
            .map(|(ti, wi)| wi * (-x * (ti.cosh() - 1.0)).exp())
            .sum::<f64>()
    };
    let mut panel = 0.5f64.min(t_max);
    let mut prev = integrate(panel);
    for _ in 0..8 {
        panel /= 2.0;
        let next = integrate(panel);
        if (next - prev).abs() <= 1e-14 * next.abs() {
            return Ok(next * (-x).exp());
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("K0({x}) did not settle")))
}

/// `E_d(r, γ0)` at distance `r = |x|`.
pub fn fundamental_solution(dim: usize, gamma0: f64, r: f64) -> Result<f64> {
    if !(gamma0 > 0.0) {
        return Err(Error::InvalidInput("gamma0 must be positive".into()));
    }
    match dim {
        1 => Ok((-gamma0 * r.abs()).exp() / (2.0 * gamma0)),
        2 | 3 if !(r > 0.0) => Err(Error::InvalidInput(format!("E_{dim} is singular at the origin"))),
        2 => Ok(bessel_k0(gamma0 * r)? / (2.0 * PI)),
        3 => Ok((-gamma0 * r).exp() / (4.0 * PI * r)),
        _ => Err(Error::Unsupported(format!(
            "fundamental solution in dimension {dim} (only d <= 3 are evaluated)"
        ))),
    }
}

/// `|E_d(x, γ0) - γ0^{d-2} E_d(γ0 x, 1)|`.
pub fn scaling_check(dim: usize, gamma0: f64, r: f64) -> Result<f64> {
    let lhs = fundamental_solution(dim, gamma0, r)?;
    let rhs = gamma0.powi(dim as i32 - 2) * fundamental_solution(dim, 1.0, gamma0 * r)?;
    Ok((lhs - rhs).abs())
}

/// Decreasing majorant of `E_d` on `[r, ∞)`, used for tail bounds.
fn majorant(dim: usize, gamma0: f64, r: f64) -> f64 {
    let r = r.max(1e-300);
    match dim {
        1 => (-gamma0 * r).exp() / (2.0 * gamma0),
        // K0(z) <= sqrt(pi / 2z) e^{-z}
        2 => (PI / (2.0 * gamma0 * r)).sqrt() * (-gamma0 * r).exp() / (2.0 * PI),
        _ => (-gamma0 * r).exp() / (4.0 * PI * r),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeGreen {
    pub dim: usize,
    pub gamma0: f64,
    pub value: (f64, f64),
    /// Sup-norm radius of the summed shell.
    pub radius: usize,
    pub tail_bound: f64,
}

impl LatticeGreen {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value.0, self.value.1)
    }
}

fn shell_bound(dim: usize, gamma0: f64, im_p: f64, x_norm: f64, radius: usize) -> f64 {
    let mut tail = 0.0;
    let d = dim as i32;
    let mut k = radius + 1;
    loop {
        let kf = k as f64;
        let count = (2.0 * kf + 1.0).powi(d) - (2.0 * kf - 1.0).powi(d);
        let rho = kf - x_norm;
        let term = if rho > 0.0 {
            count * majorant(dim, gamma0, rho) * (im_p * kf * (dim as f64).sqrt()).exp()
        } else {
            f64::INFINITY
        };
        tail += term;
        if term <= 1e-18 * tail.max(1e-300) || term < 1e-300 || k > radius + 100_000 {
            break;
        }
        k += 1;
    }
    tail
}

/// `G0(x, p) = Σ_m E_d(x - m, γ0) e^{i p·m}` summed over `|m|∞ <= R`, with
/// `R` grown until the shell tail bound is below `tail_tol` (up to `cap`).
pub fn lattice_green(dim: usize, gamma0: f64, p: &[Complex64], x: &[f64], tail_tol: f64, cap: usize) -> Result<LatticeGreen> {
    if !(1..=3).contains(&dim) || p.len() != dim || x.len() != dim {
        return Err(Error::InvalidInput("lattice sum needs matching dimensions 1..=3".into()));
    }
    let im_p = p.iter().map(|q| q.im * q.im).sum::<f64>().sqrt();
    if im_p > gamma0 / 2.0 {
        return Err(Error::InvalidInput(format!(
            "|Im p| = {im_p} exceeds gamma0/2 = {}",
            gamma0 / 2.0
        )));
    }
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut radius = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).ceil() as usize + 1;
    let mut tail = shell_bound(dim, gamma0, im_p, x_norm, radius);
    while tail > tail_tol {
        if radius >= cap {
            return Err(Error::LatticeSum { tail, cap });
        }
        radius = (radius + 1).max(radius * 5 / 4).min(cap);
        tail = shell_bound(dim, gamma0, im_p, x_norm, radius);
    }
    let r = radius as i64;
    let side = (2 * r + 1) as usize;
    let total = side.pow(dim as u32);
    let mut sum = Complex64::new(0.0, 0.0);
    for flat in 0..total {
        let mut rem = flat;
        let mut m = [0i64; 3];
        for a in 0..dim {
            m[a] = (rem % side) as i64 - r;
            rem /= side;
        }
        let dist = (0..dim).map(|a| (x[a] - m[a] as f64).powi(2)).sum::<f64>().sqrt();
        if dim > 1 && dist == 0.0 {
            return Err(Error::InvalidInput("lattice sum evaluated on a lattice point".into()));
        }
        let phase: Complex64 = (0..dim).map(|a| p[a] * m[a] as f64).sum();
        sum += fundamental_solution(dim, gamma0, dist)? * (Complex64::i() * phase).exp();
    }
    Ok(LatticeGreen {
        dim,
        gamma0,
        value: (sum.re, sum.im),
        radius,
        tail_bound: tail,
    })
}

/// d = 1 lattice sum in closed form: two geometric series.
pub fn lattice_green_1d_closed(gamma0: f64, p: Complex64, x: f64) -> Complex64 {
    let n = x.floor();
    let y = x - n;
    let i = Complex64::i();
    // m <= n: e^{-γ0 (x - m)}, m > n: e^{-γ0 (m - x)}
    let left = (-gamma0 * y).exp() / (1.0 - (-(gamma0 + i * p)).exp());
    let right = (gamma0 * y).exp() * (-gamma0 + i * p).exp() / (1.0 - (-gamma0 + i * p).exp());
    (i * p * n).exp() * (left + right) / (2.0 * gamma0)
}

fn bernoulli(k: usize, y: f64) -> f64 {
    match k {
        2 => y * y - y + 1.0 / 6.0,
        3 => y * y * y - 1.5 * y * y + 0.5 * y,
        4 => y.powi(4) - 2.0 * y.powi(3) + y * y - 1.0 / 30.0,
        _ => unreachable!(),
    }
}

/// `Σ_{m != 0} e^{2πimy} / m^k` for `k = 2, 3, 4`.
fn bernoulli_series(k: usize, y: f64) -> Complex64 {
    let y = y - y.floor();
    let factorial = [1.0, 1.0, 2.0, 6.0, 24.0][k];
    -(Complex64::new(0.0, 2.0 * PI)).powi(k as i32) * bernoulli(k, y) / factorial
}

/// Plane-wave kernel of `((D + p)² + γ0²)^{-1}` on the unit cell (d = 1):
/// `Σ_m e^{2πimy} / ((2πm + p)² + γ0²)` over `|m| <= cutoff`, the tail
/// beyond the cutoff added in closed form to order `m^{-4}`.
pub fn fiber_resolvent_kernel_1d(gamma0: f64, p: f64, y: f64, cutoff: usize) -> Complex64 {
    let c2 = 1.0 / (4.0 * PI * PI);
    let c3 = -p / (4.0 * PI.powi(3));
    let c4 = (3.0 * p * p - gamma0 * gamma0) / (16.0 * PI.powi(4));
    let mut s = Complex64::new(1.0 / (p * p + gamma0 * gamma0), 0.0);
    for m in 1..=cutoff as i64 {
        for mm in [m, -m] {
            let mf = mm as f64;
            let term = 1.0 / ((2.0 * PI * mf + p).powi(2) + gamma0 * gamma0);
            let asym = c2 / mf.powi(2) + c3 / mf.powi(3) + c4 / mf.powi(4);
            s += (term - asym) * Complex64::from_polar(1.0, 2.0 * PI * mf * y);
        }
    }
    s + bernoulli_series(2, y) * c2 + bernoulli_series(3, y) * c3 + bernoulli_series(4, y) * c4
}

/// `(2π)^{-1/2} ∫ e^{-iξx} E_1(x) dx` by quadrature over `[-X, X]`.
pub fn fourier_transform_e1(gamma0: f64, xi: f64) -> f64 {
    let x_max = 45.0 / gamma0;
    let panel = (0.5 / gamma0).min(0.5 / xi.abs().max(1e-3));
    let (t, w) = composite_legendre(0.0, x_max, panel, 12);
    let half: f64 = t
        .iter()
        .zip(&w)
        .map(|(x, wx)| wx * (xi * x).cos() * (-gamma0 * x).exp() / (2.0 * gamma0))
        .sum();
    2.0 * half / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenReport {
    pub checks: Vec<Check>,
}

impl GreenReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// `K0` from its power series, an independent reference for moderate
/// arguments.
pub fn bessel_k0_series(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    let q = x * x / 4.0;
    let (mut i0, mut tail) = (0.0, 0.0);
    let mut term = 1.0;
    let mut harmonic = 0.0;
    for k in 0..60 {
        if k > 0 {
            term *= q / (k as f64 * k as f64);
            harmonic += 1.0 / k as f64;
        }
        i0 += term;
        tail += term * harmonic;
    }
    -((x / 2.0).ln() + EULER) * i0 + tail
}

/// Every Green-function invariant at its tolerance.
pub fn green_check() -> Result<GreenReport> {
    let mut checks = Vec::new();
    // closed forms against the definitions
    let e1 = fundamental_solution(1, 1.0, 0.5)?;
    checks.push(Check::new("E1(0.5; 1) = e^{-1/2}/2", (e1 - (-0.5f64).exp() / 2.0).abs(), 1e-15));
    let e3 = fundamental_solution(3, 1.0, 1.0)?;
    checks.push(Check::new("E3(1; 1) = e^{-1}/(4 pi)", (e3 - (-1.0f64).exp() / (4.0 * PI)).abs(), 1e-15));
    let mut k0_err = 0.0f64;
    for x in [0.1, 0.5, 1.0, 2.0, 3.0] {
        let k = bessel_k0(x)?;
        k0_err = k0_err.max((k / bessel_k0_series(x) - 1.0).abs());
    }
    checks.push(Check::new("K0 quadrature vs power series (relative)", k0_err, 1e-10));
    let e2 = fundamental_solution(2, 1.0, 1.0)?;
    checks.push(Check::new("E2(1; 1) = K0(1)/(2 pi)", (e2 - bessel_k0_series(1.0) / (2.0 * PI)).abs(), 1e-9));
    // scaling
    checks.push(Check::new("scaling d=1", scaling_check(1, 1.7, 0.3)?, 1e-15));
    checks.push(Check::new("scaling d=3 (2, 0.7)", scaling_check(3, 2.0, 0.7)?, 1e-12));
    checks.push(Check::new("scaling d=2 (3, 0.4)", scaling_check(2, 3.0, 0.4)?, 1e-9));
    // positivity and monotonicity
    let mut mono = 0.0f64;
    for d in 1..=3 {
        let mut prev = f64::INFINITY;
        for i in 1..=60 {
            let v = fundamental_solution(d, 0.8, 0.1 * i as f64)?;
            if !(v > 0.0) || v >= prev {
                mono = mono.max(1.0);
            }
            prev = v;
        }
    }
    checks.push(Check::new("E_d positive and decreasing", mono, 0.0));
    // d = 1 lattice sum
    let mut geo = 0.0f64;
    for (g, p, x) in [(1.0, 0.3, 0.25), (0.5, -2.0, 0.9), (2.0, 3.0, -0.4)] {
        let p = Complex64::new(p, 0.0);
        let s = lattice_green(1, g, &[p], &[x], 1e-15, 10_000)?.value();
        geo = geo.max((s - lattice_green_1d_closed(g, p, x)).norm());
    }
    checks.push(Check::new("d=1 lattice sum vs geometric closed form", geo, 1e-12));
    // quasi-periodicity in p
    let a = lattice_green(2, 1.5, &[Complex64::new(0.4, 0.1), Complex64::new(-1.0, 0.0)], &[0.3, -0.2], 1e-12, 200)?.value();
    let b = lattice_green(2, 1.5, &[Complex64::new(0.4 + 2.0 * PI, 0.1), Complex64::new(-1.0, 0.0)], &[0.3, -0.2], 1e-12, 200)?.value();
    checks.push(Check::new("G0(p) = G0(p + 2 pi e_1)", (a - b).norm(), 1e-12));
    // fiber resolvent against the lattice sum on a 5 x 5 (p, gamma0) grid
    let mut cross = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            let p = -PI + i as f64 * PI / 2.0;
            let g0 = 0.5 + j as f64 * 0.75;
            for y in [-0.7, -0.2, 0.0, 0.35, 0.8] {
                let k = fiber_resolvent_kernel_1d(g0, p, y, 64);
                let g = lattice_green(1, g0, &[Complex64::new(p, 0.0)], &[y], 1e-14, 10_000)?.value();
                cross = cross.max((k - Complex64::from_polar(1.0, -p * y) * g).norm());
            }
        }
    }
    checks.push(Check::new("fiber resolvent vs e^{-ipy} G0, 5x5 (p, gamma0)", cross, 1e-6));
    // Fourier transform of E_1
    let mut ft = 0.0f64;
    for g in [0.5, 1.0, 2.0] {
        for xi in [0.0, 0.7, 2.0, 5.0] {
            let exact = 1.0 / ((2.0 * PI).sqrt() * (xi * xi + g * g));
            ft = ft.max((fourier_transform_e1(g, xi) - exact).abs());
        }
    }
    checks.push(Check::new("Fourier transform of E1", ft, 1e-6));
    Ok(GreenReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert!((fundamental_solution(1, 1.0, 0.5).unwrap() - 0.303_265_329_856_316_7).abs() < 1e-15);
        assert!((fundamental_solution(3, 1.0, 1.0).unwrap() - 0.029_274_915_762_159_6).abs() < 1e-12);
        assert!((bessel_k0(1.0).unwrap() - 0.421_024_438_240_708_3).abs() < 1e-13);
        assert!(fundamental_solution(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn k0_matches_large_argument_asymptotics() {
        let x: f64 = 30.0;
        let asym = (PI / (2.0 * x)).sqrt() * (-x).exp() * (1.0 - 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x));
        assert!((bessel_k0(x).unwrap() / asym - 1.0).abs() < 1e-4);
    }

    #[test]
    fn lattice_sum_at_zero_momentum_is_real_positive() {
        let g = lattice_green(2, 1.0, &[Complex64::new(0.0, 0.0); 2], &[0.25, 0.25], 1e-10, 200).unwrap();
        assert!(g.value.0 > 0.0 && g.value.1.abs() < 1e-15);
        assert!(g.tail_bound <= 1e-10);
    }

    #[test]
    fn lattice_radius_cap_is_reported() {
        let r = lattice_green(3, 0.05, &[Complex64::new(0.0, 0.0); 3], &[0.1, 0.1, 0.1], 1e-12, 8);
        assert!(matches!(r, Err(Error::LatticeSum { .. })));
    }

    #[test]
    fn green_report_passes() {
        let rep = green_check().unwrap();
        for c in &rep.checks {
            assert!(c.pass, "{} = {:e} > {:e}", c.name, c.value, c.tolerance);
        }
    }
}
