use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::toy::TrainLogRow;

/// Fraction of the log treated as the final window.
pub const FINAL_WINDOW: f64 = 0.2;

/// Gradient balance is reported as met when `|log10(g_t / g_n)|` is below this.
pub const BALANCE_LOG10_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryReport {
    pub rows: usize,
    /// Index of the first row in the final window.
    pub window_start: usize,
    pub g_t_mean: f64,
    pub g_n_mean: f64,
    /// `g_t_mean / g_n_mean` over the final window.
    pub ratio: f64,
    pub log10_ratio: f64,
    pub balanced: bool,
    pub p_vg_window_mean: f64,
    pub p_vg_window_std: f64,
    pub p_vg_trajectory: Vec<f64>,
}

/// Summarizes the final 20% of a training log. Needs at least 100 rows.
pub fn gradient_trajectory_report(log: &[TrainLogRow]) -> Result<TrajectoryReport> {
    if log.len() < 100 {
        return Err(Error::InsufficientData(alloc::format!(
            "trajectory report needs >= 100 log rows, got {}",
            log.len()
        )));
    }
    let window_len = ((log.len() as f64 * FINAL_WINDOW) as usize).max(1);
    let window_start = log.len() - window_len;
    let window = &log[window_start..];
    let n = window.len() as f64;
    let g_t_mean = window.iter().map(|r| r.g_t_mean).sum::<f64>() / n;
    let g_n_mean = window.iter().map(|r| r.g_n_mean).sum::<f64>() / n;
    let ratio = g_t_mean / g_n_mean;
    let log10_ratio = libm::log10(ratio);
    let p_vg_window_mean = window.iter().map(|r| r.p_vg).sum::<f64>() / n;
    let var = window
        .iter()
        .map(|r| (r.p_vg - p_vg_window_mean) * (r.p_vg - p_vg_window_mean))
        .sum::<f64>()
        / n;
    Ok(TrajectoryReport {
        rows: log.len(),
        window_start,
        g_t_mean,
        g_n_mean,
        ratio,
        log10_ratio,
        balanced: log10_ratio.abs() < BALANCE_LOG10_TOL,
        p_vg_window_mean,
        p_vg_window_std: math::sqrt(var),
        p_vg_trajectory: log.iter().map(|r| r.p_vg).collect(),
    })
}
