//! Savitzky-Golay smoothing of trajectories.
//!
//! Interior samples use the centred least-squares kernel. The first and last
//! `window / 2` samples are evaluated from the polynomial fitted to the
//! first (last) full window, so polynomials of degree `<= order` are
//! reproduced exactly everywhere and the length is preserved.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("window {window} must be odd and greater than order {order}")]
    InvalidWindow { window: usize, order: usize },
    #[error("window {window} exceeds trajectory length {len}")]
    WindowTooLarge { window: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavgolParams {
    pub window: usize,
    pub order: usize,
}

impl Default for SavgolParams {
    fn default() -> Self {
        Self { window: 11, order: 3 }
    }
}

/// Precomputed least-squares projection for one (window, order) pair.
#[derive(Debug, Clone)]
pub struct SavgolFilter {
    window: usize,
    order: usize,
    /// `(order + 1) x window` pseudo-inverse of the Vandermonde matrix.
    pinv: DMatrix<f64>,
}

impl SavgolFilter {
    pub fn new(params: SavgolParams) -> Result<Self, SmoothError> {
        let SavgolParams { window, order } = params;
        if window % 2 == 0 || order >= window {
            return Err(SmoothError::InvalidWindow { window, order });
        }
        let half = (window / 2) as f64;
        let vander = DMatrix::from_fn(window, order + 1, |r, c| (r as f64 - half).powi(c as i32));
        let pinv = vander.pseudo_inverse(1e-12).expect("Vandermonde of distinct nodes has full rank");
        Ok(Self { window, order, pinv })
    }

    /// Weights mapping a window's samples to the fitted value at offset `x`
    /// from the window centre.
    pub fn weights_at(&self, x: f64) -> Vec<f64> {
        (0..self.window)
            .map(|j| (0..=self.order).map(|c| x.powi(c as i32) * self.pinv[(c, j)]).sum())
            .collect()
    }

    pub fn smooth_series(&self, y: &[f64]) -> Result<Vec<f64>, SmoothError> {
        let n = y.len();
        let w = self.window;
        if n < w {
            return Err(SmoothError::WindowTooLarge { window: w, len: n });
        }
        let h = w / 2;
        let dot = |weights: &[f64], start: usize| -> f64 { weights.iter().zip(&y[start..start + w]).map(|(a, b)| a * b).sum() };
        let centre = self.weights_at(0.0);
        let mut out = vec![0.0; n];
        for i in 0..h {
            out[i] = dot(&self.weights_at(i as f64 - h as f64), 0);
            out[n - 1 - i] = dot(&self.weights_at((h - i) as f64), n - w);
        }
        for i in h..n - h {
            out[i] = dot(&centre, i - h);
        }
        Ok(out)
    }
}

/// Smooth latitude and longitude independently; timestamps are untouched.
pub fn savgol_smooth(traj: &Trajectory, params: SavgolParams) -> Result<Trajectory, SmoothError> {
    let filter = SavgolFilter::new(params)?;
    smooth_with(&filter, traj)
}

pub fn smooth_with(filter: &SavgolFilter, traj: &Trajectory) -> Result<Trajectory, SmoothError> {
    let lat: Vec<f64> = traj.states.iter().map(|s| s.pos.lat).collect();
    let lon: Vec<f64> = traj.states.iter().map(|s| s.pos.lon).collect();
    let lat = filter.smooth_series(&lat)?;
    let lon = filter.smooth_series(&lon)?;
    let mut out = traj.clone();
    for (k, s) in out.states.iter_mut().enumerate() {
        s.pos.lat = lat[k];
        s.pos.lon = lon[k];
    }
    Ok(out)
}
