use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are orthonormal eigenvectors, in the order of `values`.
    pub vectors: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub struct SymmetricEigenSorted {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn ascending_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

pub fn hermitian_eigen(matrix: DMatrix<Complex64>) -> HermitianEigen {
    let n = matrix.nrows();
    let eig = matrix.symmetric_eigen();
    let order = ascending_order(&eig.eigenvalues);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors,
    }
}

pub fn symmetric_eigen(matrix: DMatrix<f64>) -> SymmetricEigenSorted {
    let n = matrix.nrows();
    let eig = matrix.symmetric_eigen();
    let order = ascending_order(&eig.eigenvalues);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymmetricEigenSorted {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_two_by_two() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[2.0 * one, i, -i, 2.0 * one]);
        let e = hermitian_eigen(m.clone());
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let v = e.vectors.column(0);
        let r = &m * v - v * Complex64::new(e.values[0], 0.0);
        assert!(r.norm() < 1e-13);
    }
}
