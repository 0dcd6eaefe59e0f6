//! In-place d-dimensional FFTs on `N^d` grids stored with the first axis fastest.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(crate) struct GridFft {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl GridFft {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalized inverse.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    // Transform along the contiguous axis, then rotate the axes so the next
    // one becomes contiguous; after `dim` rounds the layout is restored.
    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let lines_per_task = (4096 / n).max(1);
        let mut rotated = vec![Complex64::new(0.0, 0.0); data.len()];
        let stride = data.len() / n;
        for _ in 0..self.dim {
            data.par_chunks_mut(n * lines_per_task).for_each(|chunk| {
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
            for (i, v) in data.iter().enumerate() {
                rotated[i / n + (i % n) * stride] = *v;
            }
            data.copy_from_slice(&rotated);
        }
    }
}
