use serde::{Deserialize, Serialize};

/// Smallest spread used when scaling; constant features map to zero.
pub const IQR_FLOOR: f64 = 1e-6;

/// Per-feature median and interquartile range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RobustScaler {
    /// Fits on row-major samples of equal length.
    pub fn fit(samples: &[Vec<f64>]) -> Self {
        let dim = samples.first().map_or(0, Vec::len);
        let mut median = Vec::with_capacity(dim);
        let mut iqr = Vec::with_capacity(dim);
        let mut column = Vec::with_capacity(samples.len());
        for j in 0..dim {
            column.clear();
            column.extend(samples.iter().map(|s| s[j]));
            column.sort_by(f64::total_cmp);
            median.push(quantile(&column, 0.5));
            iqr.push((quantile(&column, 0.75) - quantile(&column, 0.25)).max(IQR_FLOOR));
        }
        RobustScaler { median, iqr }
    }

    pub fn identity(dim: usize) -> Self {
        RobustScaler { median: vec![0.0; dim], iqr: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.median.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.median).zip(&self.iqr) {
            *v = (*v - m) / s;
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply(&mut out);
        out
    }
}
