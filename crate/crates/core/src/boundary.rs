//! GB-CosFace: a virtual boundary score `p_v` separates the target score from
//! the non-target scores.
//!
//! Per sample, the balanced threshold `p̂_v = (p_y + p_n) / 2` equalizes the
//! target and non-target gradients. Across batches a running boundary `p_vg`
//! tracks the batch mean of `p̂_v` with rate `γ`, and the boundary actually
//! used is `p_v = α·p_vg + (1 - α)·p̂_v`. The loss is
//!
//! ```text
//! L = ½ softplus(2s(p_v - p_y + m)) + ½ softplus(2s(p_n - p_v + m))
//! ```
//!
//! with `p_v` held constant during differentiation. At `α = 0` this has the
//! same gradients as CosFace with scale `s` and margin `2m`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::margin::{GradientBundle, LossConfig, ScoreBundle};
use crate::math;
use crate::sphere;

/// Running global boundary `p_vg`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundaryState {
    p_vg: f64,
    gamma: f64,
    initialized: bool,
    update_count: u64,
}

impl BoundaryState {
    /// Fresh state; the first [`ema_update`] seeds `p_vg` with its input.
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            p_vg: 0.0,
            gamma,
            initialized: false,
            update_count: 0,
        })
    }

    /// State that already holds `p_vg`, e.g. a fixed boundary or a resumed run.
    pub fn seeded(p_vg: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !p_vg.is_finite() {
            return Err(Error::NonFiniteInput("p_vg"));
        }
        Ok(Self {
            p_vg,
            gamma,
            initialized: true,
            update_count: 0,
        })
    }

    pub fn p_vg(&self) -> f64 {
        self.p_vg
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "gamma must lie in (0, 1], got {gamma}"
        )))
    }
}

/// Per-sample quantities behind one GB-CosFace evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundaryDiagnostics {
    pub p_hat_v: f64,
    pub p_v: f64,
    /// `|∂L/∂p_y|`
    pub g_t: f64,
    /// `|Σ ∂L/∂p_i|`
    pub g_n: f64,
}

/// `p̂_v = (p_y + (1/s) ln Σ e^{s p_i}) / 2`.
pub fn balanced_threshold(scores: &ScoreBundle, s: f64) -> f64 {
    0.5 * (scores.p_y() + scores.p_n(s))
}

/// `p_vg <- (1 - γ) p_vg + γ p_vb`; the first update on a fresh state sets `p_vg = p_vb`.
pub fn ema_update(state: &BoundaryState, batch_mean_p_hat_v: f64) -> Result<BoundaryState> {
    if !batch_mean_p_hat_v.is_finite() {
        return Err(Error::NonFiniteInput("batch mean of p_hat_v"));
    }
    let p_vg = if state.initialized {
        (1.0 - state.gamma) * state.p_vg + state.gamma * batch_mean_p_hat_v
    } else {
        batch_mean_p_hat_v
    };
    Ok(BoundaryState {
        p_vg,
        gamma: state.gamma,
        initialized: true,
        update_count: state.update_count + 1,
    })
}

/// `α·p_vg + (1 - α)·p̂_v`.
pub fn mixed_boundary(p_hat_v: f64, state: &BoundaryState, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(alloc::format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if alpha > 0.0 && !state.initialized {
        return Err(Error::Uninitialized);
    }
    Ok(alpha * state.p_vg + (1.0 - alpha) * p_hat_v)
}

/// Antetype pair `(L_T1, L_N1)` at scale `s`:
/// target-vs-boundary and boundary-vs-non-target logistic losses.
pub fn antetype_loss(scores: &ScoreBundle, p_v: f64, cfg: &LossConfig) -> (f64, f64) {
    let (s, m) = (cfg.s, cfg.m);
    let p_n = scores.p_n(s);
    (
        math::softplus(s * (p_v - scores.p_y() + m)),
        math::softplus(s * (p_n - p_v + m)),
    )
}

/// Gradient of `L_T1 + L_N1` with `p_v` held fixed.
pub fn antetype_grad(scores: &ScoreBundle, p_v: f64, cfg: &LossConfig) -> GradientBundle {
    let (s, m) = (cfg.s, cfg.m);
    let p_n = scores.p_n(s);
    let g_t = s * math::sigmoid(s * (p_v - scores.p_y() + m));
    let g_n = s * math::sigmoid(s * (p_n - p_v + m));
    nontarget_split(scores, s, -g_t, g_n)
}

fn nontarget_split(scores: &ScoreBundle, s: f64, d_py: f64, g_n: f64) -> GradientBundle {
    let mut w = Vec::with_capacity(scores.p_nontarget().len());
    sphere::softmax_weights(scores.p_nontarget(), s, &mut w);
    GradientBundle {
        d_py,
        d_pi: w.into_iter().map(|w| g_n * w).collect(),
    }
}

/// GB-CosFace loss with a detached boundary `p_v`.
pub fn gb_cosface_loss(scores: &ScoreBundle, p_v: f64, cfg: &LossConfig) -> f64 {
    let (s, m) = (cfg.s, cfg.m);
    let p_n = scores.p_n(s);
    0.5 * math::softplus(2.0 * s * (p_v - scores.p_y() + m))
        + 0.5 * math::softplus(2.0 * s * (p_n - p_v + m))
}

/// Analytic gradient of [`gb_cosface_loss`] holding `p_v` fixed.
///
/// The non-target part flows through `p_n`, whose partials are the softmax
/// weights of `s·p_i`.
pub fn gb_cosface_grad(
    scores: &ScoreBundle,
    p_v: f64,
    cfg: &LossConfig,
) -> (GradientBundle, BoundaryDiagnostics) {
    let (s, m) = (cfg.s, cfg.m);
    let p_n = scores.p_n(s);
    let g_t = s * math::sigmoid(2.0 * s * (p_v - scores.p_y() + m));
    let g_n = s * math::sigmoid(2.0 * s * (p_n - p_v + m));
    let grad = nontarget_split(scores, s, -g_t, g_n);
    let diag = BoundaryDiagnostics {
        p_hat_v: 0.5 * (scores.p_y() + p_n),
        p_v,
        g_t: grad.d_py.abs(),
        g_n: grad.nontarget_sum().abs(),
    };
    (grad, diag)
}

/// `p̂_v -> p_v -> (loss, gradient)` for one sample. Does not touch `state`.
pub fn per_sample_step(
    scores: &ScoreBundle,
    state: &BoundaryState,
    cfg: &LossConfig,
) -> Result<(f64, GradientBundle, BoundaryDiagnostics)> {
    cfg.validate()?;
    let p_hat_v = balanced_threshold(scores, cfg.s);
    let p_v = mixed_boundary(p_hat_v, state, cfg.alpha)?;
    let loss = gb_cosface_loss(scores, p_v, cfg);
    let (grad, diag) = gb_cosface_grad(scores, p_v, cfg);
    Ok((loss, grad, diag))
}
