//! Numerical kernels shared by the fiber, box and Birman–Schwinger solvers.

mod cg;
mod cyclic;
mod dense;
mod fft;
mod lanczos;

pub use cg::{pcg, CgReport};
pub use cyclic::{tridiagonal_solve, CyclicFactor, CyclicTridiagonal, TridiagonalLu};
pub use dense::{hermitian_eigen, symmetric_eigen, HermitianEigen, SymmetricEigenSorted};
pub use fft::FftGrid;
pub use lanczos::{block_lanczos_largest, LanczosOptions, LanczosResult, LinearOperator};

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic, well-spread start vector (additive recurrence with the
/// plastic number); not random, only generic.
pub fn generic_vector(n: usize, seed: usize) -> Vec<f64> {
    const ALPHA: f64 = 0.754_877_666_246_692_7;
    let offset = 0.5 + 0.318_309_886 * seed as f64;
    (0..n)
        .map(|i| (offset + ALPHA * (i as f64 + 1.0) * (seed as f64 + 1.0)).fract() - 0.5)
        .collect()
}
