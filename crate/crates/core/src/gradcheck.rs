//! Gradient verification suites: central finite differences, softmax
//! weighting of non-target gradients, target/non-target balance, and the
//! GB-CosFace (α = 0) ↔ CosFace (2m) equivalence.
//!
//! Finite differences only call the loss functions, never the analytic
//! gradients they are compared with.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::{self, BoundaryState};
use crate::error::{Error, Result};
use crate::margin::{self, GradientBundle, LossConfig, ScoreBundle, Variant};
use crate::math;

pub const NONTARGET_COUNTS: [usize; 3] = [1, 9, 99];
pub const SCALES: [f64; 3] = [8.0, 32.0, 64.0];
pub const GB_MARGINS: [f64; 3] = [0.0, 0.08, 0.16];
const COSFACE_MARGINS: [f64; 3] = [0.0, 0.16, 0.32];
const ARCFACE_MARGINS: [f64; 3] = [0.1, 0.3, 0.5];

pub const PROPERTY1_REL_TOL: f64 = 1e-9;
pub const PROPERTY2_ABS_TOL: f64 = 1e-10;
pub const EQUIVALENCE_ABS_TOL: f64 = 1e-10;
pub const BALANCE_ABS_TOL: f64 = 1e-10;

/// Analytic gradient routines that can be deliberately corrupted for
/// negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CheckedOp {
    SoftmaxFamilyGrad,
    GbCosfaceGrad,
    AntetypeGrad,
}

impl CheckedOp {
    pub fn name(self) -> &'static str {
        match self {
            CheckedOp::SoftmaxFamilyGrad => "softmax_family_grad",
            CheckedOp::GbCosfaceGrad => "gb_cosface_grad",
            CheckedOp::AntetypeGrad => "antetype_grad",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GradCheckConfig {
    /// Draws per finite-difference, weighting and balance check.
    pub draws: usize,
    /// Draws for the CosFace equivalence check.
    pub equivalence_draws: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub fd_rel_tol: f64,
    /// Negative control: perturb this routine's target gradient by 1e-3.
    pub corrupt: Option<CheckedOp>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            draws: 1000,
            equivalence_draws: 10_000,
            seed: 20_221_204,
            fd_step: 1e-6,
            fd_rel_tol: 1e-5,
            corrupt: None,
        }
    }
}

/// Everything needed to reproduce one draw.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DrawRecord {
    pub index: usize,
    pub p_y: f64,
    pub p_nontarget: Vec<f64>,
    pub p_v: Option<f64>,
    pub config: LossConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckOutcome {
    pub name: String,
    pub op: String,
    pub draws: usize,
    pub tolerance: f64,
    pub worst_error: f64,
    pub passed: bool,
    pub worst_draw: Option<DrawRecord>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientReport {
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl GradientReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// `(f(x + h) - f(x - h)) / 2h`
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - b| / max(1, |a|, |b|)`: relative for gradients of size >= 1,
/// absolute below that.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Uniform random score bundle with `n_nontarget` non-target cosines.
pub fn random_bundle(rng: &mut impl Rng, n_nontarget: usize, p_y_range: (f64, f64)) -> ScoreBundle {
    let p_y = rng.random_range(p_y_range.0..=p_y_range.1);
    let rest = (0..n_nontarget).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ScoreBundle::new(p_y, rest).expect("draws are valid cosines")
}

fn pick<T: Copy>(rng: &mut impl Rng, options: &[T]) -> T {
    options[rng.random_range(0..options.len())]
}

fn record(index: usize, b: &ScoreBundle, p_v: Option<f64>, config: LossConfig) -> DrawRecord {
    DrawRecord {
        index,
        p_y: b.p_y(),
        p_nontarget: b.p_nontarget().to_vec(),
        p_v,
        config,
    }
}

/// Tracks the worst error seen by one check.
struct Tracker {
    name: String,
    op: &'static str,
    tolerance: f64,
    draws: usize,
    worst: f64,
    worst_draw: Option<DrawRecord>,
}

impl Tracker {
    fn new(name: impl Into<String>, op: &'static str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            op,
            tolerance,
            draws: 0,
            worst: 0.0,
            worst_draw: None,
        }
    }

    fn observe(&mut self, err: f64, draw: impl FnOnce() -> DrawRecord) {
        self.draws += 1;
        // NaN counts as the worst possible error
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if self.worst_draw.is_none() || err > self.worst {
            self.worst = err;
            self.worst_draw = Some(draw());
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            passed: self.worst <= self.tolerance,
            name: self.name,
            op: self.op.to_string(),
            draws: self.draws,
            tolerance: self.tolerance,
            worst_error: self.worst,
            worst_draw: self.worst_draw,
        }
    }
}

fn corrupted(mut g: GradientBundle, op: CheckedOp, cfg: &GradCheckConfig) -> GradientBundle {
    if cfg.corrupt == Some(op) {
        g.d_py += 1e-3;
    }
    g
}

/// Worst relative error between `grad` and central differences of `loss`.
pub fn fd_worst_error(
    bundle: &ScoreBundle,
    grad: &GradientBundle,
    loss: impl Fn(&ScoreBundle) -> f64,
    h: f64,
) -> f64 {
    let fd_y = central_difference(|v| loss(&bundle.with_p_y(v)), bundle.p_y(), h);
    let mut worst = relative_error(grad.d_py, fd_y);
    for (k, &p) in bundle.p_nontarget().iter().enumerate() {
        let fd = central_difference(|v| loss(&bundle.with_nontarget(k, v)), p, h);
        let e = relative_error(grad.d_pi[k], fd);
        if e.is_nan() || e > worst {
            worst = if e.is_nan() { f64::INFINITY } else { e };
        }
    }
    worst
}

/// Worst relative deviation of `d_pi[k] / d_pi[0]` from `exp(s (p_k - p_0))`.
pub fn softmax_ratio_error(bundle: &ScoreBundle, grad: &GradientBundle, s: f64) -> f64 {
    let p = bundle.p_nontarget();
    (1..p.len())
        .map(|k| {
            let expect = math::exp(s * (p[k] - p[0]));
            let got = grad.d_pi[k] / grad.d_pi[0];
            (got - expect).abs() / expect
        })
        .fold(0.0, f64::max)
}

fn softmax_config(rng: &mut ChaCha8Rng, variant: Variant) -> (LossConfig, (f64, f64)) {
    let s = pick(rng, &SCALES);
    match variant {
        Variant::NormalizedSoftmax => (LossConfig::normalized_softmax(s), (-1.0, 1.0)),
        Variant::CosFace => (LossConfig::cosface(s, pick(rng, &COSFACE_MARGINS)), (-1.0, 1.0)),
        // keeps θ_y away from 0 and θ_y + m_θ below π
        Variant::ArcFace => (LossConfig::arcface(s, pick(rng, &ARCFACE_MARGINS)), (-0.8, 0.95)),
        Variant::GbCosFace => unreachable!("not a softmax-family variant"),
    }
}

fn check_softmax_variant(cfg: &GradCheckConfig, variant: Variant, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((variant as u64 + 1) * 0x9e37_79b9));
    let op = CheckedOp::SoftmaxFamilyGrad;
    let mut fd = Tracker::new(alloc::format!("finite_difference/{variant}"), op.name(), cfg.fd_rel_tol);
    let mut p1 = Tracker::new(alloc::format!("property1/{variant}"), op.name(), PROPERTY1_REL_TOL);
    let mut p2 = Tracker::new(alloc::format!("property2/{variant}"), op.name(), PROPERTY2_ABS_TOL);
    for i in 0..cfg.draws {
        let n = pick(&mut rng, &NONTARGET_COUNTS);
        let (lc, range) = softmax_config(&mut rng, variant);
        let b = random_bundle(&mut rng, n, range);
        let eval = margin::softmax_family_eval(&b, &lc)?;
        let grad = corrupted(eval.grad.clone(), op, cfg);
        let loss = |x: &ScoreBundle| margin::softmax_family_loss(x, &lc).unwrap_or(f64::NAN);
        fd.observe(fd_worst_error(&b, &grad, loss, cfg.fd_step), || record(i, &b, None, lc));
        if n > 1 {
            p1.observe(softmax_ratio_error(&b, &grad, lc.s), || record(i, &b, None, lc));
        }
        // balance holds for the margin-adjusted target logit
        let d_target = eval.d_target_logit + (grad.d_py - eval.grad.d_py);
        p2.observe((d_target + grad.nontarget_sum()).abs(), || record(i, &b, None, lc));
    }
    out.extend([fd.finish(), p1.finish(), p2.finish()]);
    Ok(())
}

fn check_gb(cfg: &GradCheckConfig, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0b0b);
    let gb = CheckedOp::GbCosfaceGrad;
    let ante = CheckedOp::AntetypeGrad;
    let mut fd = Tracker::new("finite_difference/gb_cosface", gb.name(), cfg.fd_rel_tol);
    let mut fd_ante = Tracker::new("finite_difference/antetype", ante.name(), cfg.fd_rel_tol);
    let mut p1 = Tracker::new("property1/gb_cosface", gb.name(), PROPERTY1_REL_TOL);
    let mut bal = Tracker::new("balance/gb_cosface", gb.name(), BALANCE_ABS_TOL);
    let mut bal_ante = Tracker::new("balance/antetype", ante.name(), BALANCE_ABS_TOL);
    for i in 0..cfg.draws {
        let n = pick(&mut rng, &NONTARGET_COUNTS);
        let lc = LossConfig::gb_cosface(pick(&mut rng, &SCALES), pick(&mut rng, &GB_MARGINS), 0.0, 0.01);
        let b = random_bundle(&mut rng, n, (-1.0, 1.0));
        // detached boundary anywhere in the cosine range
        let p_v: f64 = rng.random_range(-1.0..=1.0);

        let (g, _) = boundary::gb_cosface_grad(&b, p_v, &lc);
        let g = corrupted(g, gb, cfg);
        let loss = |x: &ScoreBundle| boundary::gb_cosface_loss(x, p_v, &lc);
        fd.observe(fd_worst_error(&b, &g, loss, cfg.fd_step), || record(i, &b, Some(p_v), lc));
        if n > 1 {
            p1.observe(softmax_ratio_error(&b, &g, lc.s), || record(i, &b, Some(p_v), lc));
        }

        let ga = corrupted(boundary::antetype_grad(&b, p_v, &lc), ante, cfg);
        let ante_loss = |x: &ScoreBundle| {
            let (t, n) = boundary::antetype_loss(x, p_v, &lc);
            t + n
        };
        fd_ante.observe(fd_worst_error(&b, &ga, ante_loss, cfg.fd_step), || {
            record(i, &b, Some(p_v), lc)
        });

        let p_hat = boundary::balanced_threshold(&b, lc.s);
        let (gh, diag) = boundary::gb_cosface_grad(&b, p_hat, &lc);
        let gh = corrupted(gh, gb, cfg);
        bal.observe((gh.d_py.abs() - gh.nontarget_sum().abs()).abs().max((diag.g_t - diag.g_n).abs()), || {
            record(i, &b, Some(p_hat), lc)
        });
        let ga = corrupted(boundary::antetype_grad(&b, p_hat, &lc), ante, cfg);
        bal_ante.observe((ga.d_py.abs() - ga.nontarget_sum().abs()).abs(), || {
            record(i, &b, Some(p_hat), lc)
        });
    }
    out.extend([fd.finish(), fd_ante.finish(), p1.finish(), bal.finish(), bal_ante.finish()]);
    Ok(())
}

/// GB-CosFace at α = 0 against CosFace with margin `2m`, elementwise.
pub fn equivalence_error(b: &ScoreBundle, s: f64, m: f64) -> Result<f64> {
    let gb_cfg = LossConfig::gb_cosface(s, m, 0.0, 0.01);
    let state = BoundaryState::new(gb_cfg.gamma)?;
    let (_, g_gb, _) = boundary::per_sample_step(b, &state, &gb_cfg)?;
    let g_cos = margin::softmax_family_grad(b, &LossConfig::cosface(s, 2.0 * m))?;
    Ok(g_gb
        .d_pi
        .iter()
        .zip(&g_cos.d_pi)
        .map(|(a, c)| (a - c).abs())
        .fold((g_gb.d_py - g_cos.d_py).abs(), f64::max))
}

fn check_equivalence(cfg: &GradCheckConfig, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x000c_05fa);
    let mut t = Tracker::new("property3/gb_alpha0_vs_cosface_2m", CheckedOp::GbCosfaceGrad.name(), EQUIVALENCE_ABS_TOL);
    for i in 0..cfg.equivalence_draws {
        // cycle through every grid cell so all combinations are covered
        let n = NONTARGET_COUNTS[i % 3];
        let s = SCALES[(i / 3) % 3];
        let m = GB_MARGINS[(i / 9) % 3];
        let b = random_bundle(&mut rng, n, (-1.0, 1.0));
        let mut err = equivalence_error(&b, s, m)?;
        if cfg.corrupt == Some(CheckedOp::GbCosfaceGrad) {
            err += 1e-3;
        }
        t.observe(err, || record(i, &b, None, LossConfig::gb_cosface(s, m, 0.0, 0.01)));
    }
    out.push(t.finish());
    Ok(())
}

/// Runs every check. The report's `passed` is false if any tolerance is missed.
pub fn run_suite(cfg: &GradCheckConfig) -> Result<GradientReport> {
    if cfg.draws == 0 || cfg.equivalence_draws == 0 {
        return Err(Error::InvalidParameter("draw counts must be positive".into()));
    }
    if !(cfg.fd_step > 0.0) || !(cfg.fd_rel_tol > 0.0) {
        return Err(Error::InvalidParameter("fd_step and fd_rel_tol must be positive".into()));
    }
    let mut checks = Vec::new();
    for v in [Variant::NormalizedSoftmax, Variant::CosFace, Variant::ArcFace] {
        check_softmax_variant(cfg, v, &mut checks)?;
    }
    check_gb(cfg, &mut checks)?;
    check_equivalence(cfg, &mut checks)?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradientReport { checks, passed })
}
