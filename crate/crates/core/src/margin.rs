//! The softmax-margin loss family on cosine scores.
//!
//! A single sample contributes
//!
//! ```text
//! L = -ln( e^{s·t} / (e^{s·t} + Σ_i e^{s·p_i}) ) = softplus(s·(p_n - t))
//! t = cos(θ_y + m_θ) - m_p,      p_n = (1/s) ln Σ_i e^{s·p_i}
//! ```
//!
//! Normalized softmax, CosFace and ArcFace are the parameter settings
//! `m_θ = m_p = 0`, `m_θ = 0` and `m_p = 0`. Gradients are taken with respect
//! to the cosine scores `p_y` and `p_i`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;
use crate::sphere;

/// Which member of the loss family a [`LossConfig`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    #[cfg_attr(feature = "serde", serde(rename = "normalized_softmax"))]
    NormalizedSoftmax,
    #[cfg_attr(feature = "serde", serde(rename = "cosface"))]
    CosFace,
    #[cfg_attr(feature = "serde", serde(rename = "arcface"))]
    ArcFace,
    #[cfg_attr(feature = "serde", serde(rename = "gb_cosface"))]
    GbCosFace,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NormalizedSoftmax,
        Variant::CosFace,
        Variant::ArcFace,
        Variant::GbCosFace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NormalizedSoftmax => "normalized_softmax",
            Variant::CosFace => "cosface",
            Variant::ArcFace => "arcface",
            Variant::GbCosFace => "gb_cosface",
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for every loss in the crate.
///
/// `m_theta` and `m_p` belong to the softmax family; `m`, `alpha` and `gamma`
/// to GB-CosFace. The defaults are the GB-CosFace training values
/// `s = 32, m = 0.16, α = 0.15, γ = 0.01`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LossConfig {
    pub s: f64,
    pub m_theta: f64,
    pub m_p: f64,
    pub m: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub variant: Variant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            s: 32.0,
            m_theta: 0.0,
            m_p: 0.0,
            m: 0.16,
            alpha: 0.15,
            gamma: 0.01,
            variant: Variant::GbCosFace,
        }
    }
}

impl LossConfig {
    pub fn normalized_softmax(s: f64) -> Self {
        Self {
            s,
            variant: Variant::NormalizedSoftmax,
            ..Self::default()
        }
    }

    pub fn cosface(s: f64, m_p: f64) -> Self {
        Self {
            s,
            m_p,
            variant: Variant::CosFace,
            ..Self::default()
        }
    }

    pub fn arcface(s: f64, m_theta: f64) -> Self {
        Self {
            s,
            m_theta,
            variant: Variant::ArcFace,
            ..Self::default()
        }
    }

    pub fn gb_cosface(s: f64, m: f64, alpha: f64, gamma: f64) -> Self {
        Self {
            s,
            m,
            alpha,
            gamma,
            variant: Variant::GbCosFace,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.s > 0.0) || !self.s.is_finite() {
            return bad(format!("scale s must be positive and finite, got {}", self.s));
        }
        for (name, v) in [("m_theta", self.m_theta), ("m_p", self.m_p), ("m", self.m)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        match self.variant {
            Variant::NormalizedSoftmax if self.m_theta != 0.0 || self.m_p != 0.0 => {
                bad("normalized softmax requires m_theta = m_p = 0".into())
            }
            Variant::CosFace if self.m_theta != 0.0 => bad("cosface requires m_theta = 0".into()),
            Variant::ArcFace if self.m_p != 0.0 => bad("arcface requires m_p = 0".into()),
            Variant::GbCosFace if self.m_theta != 0.0 || self.m_p != 0.0 => {
                bad("gb_cosface uses m; m_theta and m_p must be 0".into())
            }
            _ => Ok(()),
        }
    }
}

/// Target and non-target cosine scores of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBundle {
    p_y: f64,
    p_nontarget: Vec<f64>,
}

impl ScoreBundle {
    /// Scores must be finite cosines; at least one non-target is required.
    pub fn new(p_y: f64, p_nontarget: Vec<f64>) -> Result<Self> {
        const SLACK: f64 = 1e-9;
        if p_nontarget.is_empty() {
            return Err(Error::EmptyInput);
        }
        let in_range = |v: f64| v.is_finite() && (-1.0 - SLACK..=1.0 + SLACK).contains(&v);
        if !in_range(p_y) || !p_nontarget.iter().all(|&v| in_range(v)) {
            return Err(Error::InvalidParameter(
                "scores must be finite cosines in [-1, 1]".into(),
            ));
        }
        Ok(Self {
            p_y: math::clamp_unit(p_y),
            p_nontarget: p_nontarget.into_iter().map(math::clamp_unit).collect(),
        })
    }

    /// Splits a full score row at the target index.
    pub fn from_scores(scores: &[f64], target: usize) -> Result<Self> {
        if target >= scores.len() {
            return Err(Error::InvalidParameter(format!(
                "target {target} outside {} scores",
                scores.len()
            )));
        }
        let rest = scores
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .map(|(_, &v)| v)
            .collect();
        Self::new(scores[target], rest)
    }

    pub fn p_y(&self) -> f64 {
        self.p_y
    }

    pub fn p_nontarget(&self) -> &[f64] {
        &self.p_nontarget
    }

    /// Smooth maximum of the non-target scores, `(1/s) ln Σ e^{s p_i}`.
    pub fn p_n(&self, s: f64) -> f64 {
        sphere::logsumexp_unchecked(&self.p_nontarget, s)
    }

    pub fn max_nontarget(&self) -> f64 {
        self.p_nontarget
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn theta_y(&self) -> f64 {
        math::acos(self.p_y)
    }

    /// Copy with `p_y` replaced; used by perturbation checks.
    pub fn with_p_y(&self, p_y: f64) -> Self {
        Self {
            p_y,
            p_nontarget: self.p_nontarget.clone(),
        }
    }

    /// Copy with non-target `k` replaced.
    pub fn with_nontarget(&self, k: usize, value: f64) -> Self {
        let mut p = self.p_nontarget.clone();
        p[k] = value;
        Self {
            p_y: self.p_y,
            p_nontarget: p,
        }
    }
}

/// `∂L/∂p_y` and `∂L/∂p_i` for one sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientBundle {
    pub d_py: f64,
    pub d_pi: Vec<f64>,
}

impl GradientBundle {
    pub fn nontarget_sum(&self) -> f64 {
        self.d_pi.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.d_py.is_finite() && self.d_pi.iter().all(|g| g.is_finite())
    }
}

/// Full evaluation of a softmax-family loss at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxEval {
    pub loss: f64,
    pub grad: GradientBundle,
    /// The margin-adjusted target logit `cos(θ_y + m_θ) - m_p`.
    pub target_logit: f64,
    /// `∂L/∂(target logit)`; equals `d_py` unless an angular margin is present.
    pub d_target_logit: f64,
    /// `θ_y + m_θ` exceeded π and was clamped to π.
    pub angle_clamped: bool,
}

struct TargetLogit {
    value: f64,
    /// d(value)/d(p_y)
    slope: f64,
    clamped: bool,
}

fn target_logit(p_y: f64, cfg: &LossConfig) -> TargetLogit {
    if cfg.m_theta == 0.0 {
        return TargetLogit {
            value: p_y - cfg.m_p,
            slope: 1.0,
            clamped: false,
        };
    }
    let theta = math::acos(p_y);
    let shifted = theta + cfg.m_theta;
    if shifted > PI {
        return TargetLogit {
            value: -1.0 - cfg.m_p,
            slope: 0.0,
            clamped: true,
        };
    }
    // d cos(θ + m)/d cos θ = sin(θ + m) / sin θ; sin θ -> 0 only at p_y = ±1
    let sin_theta = math::sqrt((1.0 - p_y * p_y).max(0.0)).max(1e-12);
    TargetLogit {
        value: math::cos(shifted) - cfg.m_p,
        slope: math::sin(shifted) / sin_theta,
        clamped: false,
    }
}

fn require_softmax_variant(cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.variant == Variant::GbCosFace {
        return Err(Error::InvalidConfig(
            "gb_cosface is evaluated by the boundary module".into(),
        ));
    }
    Ok(())
}

/// Loss, gradient and diagnostics in one pass.
pub fn softmax_family_eval(scores: &ScoreBundle, cfg: &LossConfig) -> Result<SoftmaxEval> {
    require_softmax_variant(cfg)?;
    let s = cfg.s;
    let t = target_logit(scores.p_y, cfg);
    let p_n = scores.p_n(s);
    let z = s * (p_n - t.value);
    let loss = math::softplus(z);
    // σ(z) = Σ e^{s p_i} / (e^{s t} + Σ e^{s p_i})
    let g = s * math::sigmoid(z);
    let mut weights = Vec::with_capacity(scores.p_nontarget.len());
    sphere::softmax_weights(&scores.p_nontarget, s, &mut weights);
    let d_pi = weights.iter().map(|w| g * w).collect();
    Ok(SoftmaxEval {
        loss,
        grad: GradientBundle {
            d_py: -g * t.slope,
            d_pi,
        },
        target_logit: t.value,
        d_target_logit: -g,
        angle_clamped: t.clamped,
    })
}

/// Softmax-family loss value; rejects the GB-CosFace variant.
pub fn softmax_family_loss(scores: &ScoreBundle, cfg: &LossConfig) -> Result<f64> {
    Ok(softmax_family_eval(scores, cfg)?.loss)
}

/// Analytic gradient of [`softmax_family_loss`] with respect to the cosine scores.
pub fn softmax_family_grad(scores: &ScoreBundle, cfg: &LossConfig) -> Result<GradientBundle> {
    Ok(softmax_family_eval(scores, cfg)?.grad)
}

/// `ReLU(max p_i - (cos(θ_y + m_θ) - m_p))`, the `s -> ∞` limit of `L/s`.
pub fn hard_objective(scores: &ScoreBundle, cfg: &LossConfig) -> f64 {
    let t = target_logit(scores.p_y, cfg);
    (scores.max_nontarget() - t.value).max(0.0)
}
