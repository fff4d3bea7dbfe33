//! Central finite-difference oracle for checking analytic gradients.
//!
//! The oracle only ever evaluates the forward function, so it is
//! independent of every backward implementation it is used to check.

use crate::error::Result;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Check at most this many coordinates per tensor (all when `None`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-4, max_coords: None, seed: 0x5eed }
    }
}

/// Result for one checked tensor over the sampled coordinates.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or the absolute
    /// difference norm when both gradients vanish.
    pub fn relative_error(&self) -> f64 {
        let diff = norm(self.analytic.iter().zip(&self.numeric).map(|(a, n)| a - n));
        let scale = norm(self.analytic.iter().copied()).max(norm(self.numeric.iter().copied()));
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }

    /// Largest per-coordinate `|a − n| / max(|a|, |n|, floor)`.
    pub fn max_elementwise_error(&self, floor: f64) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .fold(0.0, f64::max)
    }
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick_coords(n: usize, max: Option<usize>, state: &mut u64) -> Vec<usize> {
    match max {
        Some(k) if k < n => {
            let mut picked: Vec<usize> = (0..k).map(|_| (splitmix(state) % n as u64) as usize).collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        }
        _ => (0..n).collect(),
    }
}

/// Compares the analytic gradient of the scalar `f` with respect to each
/// tensor in `wrt` against central differences of step `cfg.step`.
///
/// Every tensor in `wrt` must be a leaf with `requires_grad`; their
/// gradients are cleared before and after.
pub fn check_gradients<F>(f: F, wrt: &[Tensor<f64>], cfg: GradCheckConfig) -> Result<Vec<GradCheckReport>>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    wrt.iter().for_each(Tensor::zero_grad);
    let loss = f()?;
    loss.backward()?;
    let grads: Vec<Vec<f64>> = wrt.iter().map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()])).collect();
    drop(loss);
    wrt.iter().for_each(Tensor::zero_grad);

    let mut state = cfg.seed;
    let h = cfg.step;
    let mut reports = Vec::with_capacity(wrt.len());
    for (t, g) in wrt.iter().zip(grads) {
        let coords = pick_coords(t.numel(), cfg.max_coords, &mut state);
        let mut numeric = Vec::with_capacity(coords.len());
        for &i in &coords {
            let orig = t.data()[i];
            t.update_data(|d| d[i] = orig + h);
            let plus = no_grad(&f)?.item();
            t.update_data(|d| d[i] = orig - h);
            let minus = no_grad(&f)?.item();
            t.update_data(|d| d[i] = orig);
            numeric.push((plus - minus) / (2.0 * h));
        }
        let analytic = coords.iter().map(|&i| g[i]).collect();
        reports.push(GradCheckReport { coords, analytic, numeric });
    }
    Ok(reports)
}
