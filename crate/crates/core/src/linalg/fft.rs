use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Multi-dimensional complex FFT on a row-major grid (last axis fastest).
pub struct FftGrid {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftGrid").field("shape", &self.shape).finish()
    }
}

impl FftGrid {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            shape: shape.to_vec(),
            forward,
            inverse,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let total = self.len();
        assert_eq!(data.len(), total);
        for axis in 0..self.shape.len() {
            let n = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                data.par_chunks_mut(n).for_each(|line| plan.process(line));
                continue;
            }
            // Lines along a strided axis: gather into contiguous buffers.
            let outer = total / (n * stride);
            let lines: Vec<Vec<Complex64>> = (0..outer * stride)
                .into_par_iter()
                .map(|l| {
                    let o = l / stride;
                    let s = l % stride;
                    let base = o * n * stride + s;
                    let mut line: Vec<Complex64> = (0..n).map(|k| data[base + k * stride]).collect();
                    plan.process(&mut line);
                    line
                })
                .collect();
            for (l, line) in lines.into_iter().enumerate() {
                let o = l / stride;
                let s = l % stride;
                let base = o * n * stride + s;
                for (k, v) in line.into_iter().enumerate() {
                    data[base + k * stride] = v;
                }
            }
        }
    }

    /// Signed integer frequency index of position `j` along an axis of
    /// length `n` (FFT ordering).
    pub fn frequency_index(j: usize, n: usize) -> i64 {
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_two_dimensional() {
        let g = FftGrid::new(&[6, 4]);
        let orig: Vec<Complex64> = (0..24).map(|i| Complex64::new((i as f64).sin(), 0.3 * i as f64)).collect();
        let mut data = orig.clone();
        g.forward(&mut data);
        g.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_lands_on_one_mode() {
        let g = FftGrid::new(&[8, 8]);
        let mut data: Vec<Complex64> = (0..64)
            .map(|i| {
                let (a, b) = (i / 8, i % 8);
                let phase = 2.0 * std::f64::consts::PI * (2.0 * a as f64 + 3.0 * b as f64) / 8.0;
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        g.forward(&mut data);
        for (i, v) in data.iter().enumerate() {
            let expect = if i == 2 * 8 + 3 { 64.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10 && v.im.abs() < 1e-10);
        }
    }
}
