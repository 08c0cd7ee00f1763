//! Dense-grid reference posteriors for two-dimensional parameter spaces.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numcore::math::log_sum_exp;
use crate::numcore::Rng;

pub const DEFAULT_RESOLUTION: usize = 512;

/// Unnormalized log density evaluated at the centers of a regular 2-D grid.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub low: [f64; 2],
    pub high: [f64; 2],
    pub resolution: usize,
    /// Row-major over `(i0, i1)`, normalized so that the cell probabilities
    /// sum to one.
    pub log_probs: Vec<f64>,
}

impl DensityGrid {
    pub fn evaluate<F>(low: [f64; 2], high: [f64; 2], resolution: usize, log_density: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if resolution < 2 {
            return Err(Error::invalid("grid resolution must be at least 2"));
        }
        let cell = [
            (high[0] - low[0]) / resolution as f64,
            (high[1] - low[1]) / resolution as f64,
        ];
        let raw: Vec<f64> = (0..resolution * resolution)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / resolution, k % resolution);
                let p = [low[0] + (i as f64 + 0.5) * cell[0], low[1] + (j as f64 + 0.5) * cell[1]];
                let v = log_density(&p);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect();
        let norm = log_sum_exp(&raw);
        if !norm.is_finite() {
            return Err(Error::NonFinite("grid posterior normalizer"));
        }
        Ok(Self {
            low,
            high,
            resolution,
            log_probs: raw.into_iter().map(|v| v - norm).collect(),
        })
    }

    pub fn cell_size(&self) -> [f64; 2] {
        [
            (self.high[0] - self.low[0]) / self.resolution as f64,
            (self.high[1] - self.low[1]) / self.resolution as f64,
        ]
    }

    pub fn cell_center(&self, k: usize) -> [f64; 2] {
        let cell = self.cell_size();
        let (i, j) = (k / self.resolution, k % self.resolution);
        [
            self.low[0] + (i as f64 + 0.5) * cell[0],
            self.low[1] + (j as f64 + 0.5) * cell[1],
        ]
    }

    /// Cell index containing `p`, if inside the grid.
    pub fn cell_of(&self, p: &[f64]) -> Option<usize> {
        let cell = self.cell_size();
        let i = ((p[0] - self.low[0]) / cell[0]).floor();
        let j = ((p[1] - self.low[1]) / cell[1]).floor();
        let r = self.resolution as f64;
        if i < 0.0 || j < 0.0 || i >= r || j >= r {
            return None;
        }
        Some(i as usize * self.resolution + j as usize)
    }

    /// Multinomial resampling of cells followed by uniform jitter within the
    /// chosen cell (half a cell width either side of its center).
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        let mut cumulative = Vec::with_capacity(self.log_probs.len());
        let mut acc = 0.0;
        for lp in &self.log_probs {
            acc += lp.exp();
            cumulative.push(acc);
        }
        let total = acc;
        let cell = self.cell_size();
        let mut out = Array2::zeros((n, 2));
        for mut row in out.rows_mut() {
            let u = rng.uniform() * total;
            let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let c = self.cell_center(k);
            row[0] = c[0] + (rng.uniform() - 0.5) * cell[0];
            row[1] = c[1] + (rng.uniform() - 0.5) * cell[1];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::math::normal_log_pdf;

    #[test]
    fn recovers_gaussian_moments() {
        let grid = DensityGrid::evaluate([-3.0, -3.0], [3.0, 3.0], 256, |p| {
            normal_log_pdf(p[0], 0.5, 0.4) + normal_log_pdf(p[1], -0.2, 0.7)
        })
        .unwrap();
        let total: f64 = grid.log_probs.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let s = grid.sample(40_000, &mut Rng::new(3));
        let m0 = s.column(0).mean().unwrap();
        let m1 = s.column(1).mean().unwrap();
        let sd0 = s.column(0).std(1.0);
        assert!((m0 - 0.5).abs() < 0.01, "{m0}");
        assert!((m1 + 0.2).abs() < 0.02, "{m1}");
        assert!((sd0 - 0.4).abs() < 0.01, "{sd0}");
    }

    #[test]
    fn cell_lookup_roundtrip() {
        let grid = DensityGrid::evaluate([-1.0, -1.0], [1.0, 1.0], 16, |_| 0.0).unwrap();
        for k in [0, 5, 17, 255] {
            assert_eq!(grid.cell_of(&grid.cell_center(k)), Some(k));
        }
        assert_eq!(grid.cell_of(&[1.5, 0.0]), None);
    }
}
