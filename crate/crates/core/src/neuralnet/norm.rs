use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this population standard deviation a series counts as constant.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Statistics of one instance-normalized series.
///
/// `scale` is the population standard deviation, or 1 for a (near) constant
/// series, so normalizing a constant series yields zeros and inverting zeros
/// gives the constant back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub scale: f64,
}

impl NormStats {
    pub fn of(series: &[f64]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyInput("instance norm series"));
        }
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let scale = if std < DEGENERATE_STD { 1.0 } else { std };
        Ok(NormStats { mean, scale })
    }

    pub fn is_degenerate(&self) -> bool {
        self.scale == 1.0
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

/// `(x - mean) / std` over the series, population standard deviation.
pub fn instance_norm(series: &[f64]) -> Result<(Vec<f64>, NormStats)> {
    let stats = NormStats::of(series)?;
    Ok((series.iter().map(|&x| stats.normalize(x)).collect(), stats))
}

/// Channelwise instance norm of a `window x channels` row-major block.
pub fn instance_norm_window(window: &[f64], channels: usize) -> Result<(Vec<f64>, Vec<NormStats>)> {
    if channels == 0 || window.len() % channels != 0 {
        return Err(Error::shape(
            "instance norm window",
            format!("multiple of {channels}"),
            window.len(),
        ));
    }
    let mut out = vec![0.0; window.len()];
    let mut stats = Vec::with_capacity(channels);
    let mut column = Vec::with_capacity(window.len() / channels);
    for c in 0..channels {
        column.clear();
        column.extend(window.iter().skip(c).step_by(channels));
        let s = NormStats::of(&column)?;
        for (o, &x) in out.iter_mut().skip(c).step_by(channels).zip(&column) {
            *o = s.normalize(x);
        }
        stats.push(s);
    }
    Ok((out, stats))
}
