//! Dense optical flow fields and their scalar summaries.

mod estimator;
pub mod flo;

pub use estimator::estimate_flow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("tile dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty tile")]
    Empty,
    #[error("invalid flow parameters: {0}")]
    Params(&'static str),
    #[error("flow component is not finite at pixel {0}")]
    NonFinite(usize),
}

/// Per-pixel displacement `(u, v)` in pixels/frame.
///
/// `u` is positive when content moves right between the first and second
/// tile, `v` positive when it moves down.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    uv: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            uv: vec![[0.0; 2]; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, uv: Vec<[f32; 2]>) -> Result<Self, FlowError> {
        if uv.len() != width * height {
            return Err(FlowError::DimensionMismatch(width, height, uv.len(), 1));
        }
        if let Some(i) = uv.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(FlowError::NonFinite(i));
        }
        Ok(Self { width, height, uv })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.uv[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[[f32; 2]] {
        &self.uv
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f32> + '_ {
        self.uv.iter().map(|[u, v]| (u * u + v * v).sqrt())
    }
}

/// Variational estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Smoothness weight; the regularizer is scaled by `alpha^2`.
    pub alpha: f32,
    /// Fixed-point iterations per pyramid level.
    pub iterations: u32,
    pub pyramid_levels: u32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            iterations: 100,
            pyramid_levels: 3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FlowError::Params("alpha must be positive"));
        }
        if self.iterations == 0 {
            return Err(FlowError::Params("iterations must be >= 1"));
        }
        if self.pyramid_levels == 0 {
            return Err(FlowError::Params("pyramid levels must be >= 1"));
        }
        Ok(())
    }
}

/// How a flow field collapses to one number per window and frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean per-pixel magnitude.
    #[default]
    Mean,
    /// 95th-percentile per-pixel magnitude.
    P95,
}

/// Mean per-pixel flow magnitude in pixels/frame.
pub fn aggregate_window_flow(field: &FlowField) -> f32 {
    aggregate_with(field, Aggregation::Mean)
}

pub fn aggregate_with(field: &FlowField, mode: Aggregation) -> f32 {
    if field.uv.is_empty() {
        return 0.0;
    }
    match mode {
        Aggregation::Mean => {
            let sum: f64 = field.magnitudes().map(f64::from).sum();
            (sum / field.uv.len() as f64) as f32
        }
        Aggregation::P95 => {
            let mut m: Vec<f64> = field.magnitudes().map(f64::from).collect();
            m.sort_by(f64::total_cmp);
            crate::stats::percentile_sorted(&m, 0.95) as f32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_zero_and_uniform() {
        assert_eq!(aggregate_window_flow(&FlowField::zeros(4, 3)), 0.0);
        let f = FlowField::from_vec(2, 2, vec![[3.0, 4.0]; 4]).unwrap();
        assert_eq!(aggregate_window_flow(&f), 5.0);
    }

    #[test]
    fn aggregate_half_moving() {
        let uv = (0..8).map(|i| if i % 2 == 0 { [2.0, 0.0] } else { [0.0, 0.0] }).collect();
        let f = FlowField::from_vec(4, 2, uv).unwrap();
        assert_eq!(aggregate_window_flow(&f), 1.0);
    }

    #[test]
    fn p95_aggregation() {
        let uv = (0..100).map(|i| [i as f32, 0.0]).collect();
        let f = FlowField::from_vec(10, 10, uv).unwrap();
        assert!((aggregate_with(&f, Aggregation::P95) - 94.05).abs() < 1e-4);
    }

    #[test]
    fn field_rejects_non_finite() {
        assert_eq!(
            FlowField::from_vec(2, 1, vec![[0.0, 0.0], [f32::NAN, 0.0]]),
            Err(FlowError::NonFinite(1))
        );
    }

    #[test]
    fn params_validation() {
        assert!(FlowParams::default().validate().is_ok());
        let bad = FlowParams {
            iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
