use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::boundary::{self, BoundaryState};
use crate::error::{Error, Result};
use crate::eval;
use crate::margin::{self, GradientBundle, LossConfig, ScoreBundle, Variant};
use crate::sphere::{self, PrototypeMatrix, SphereBatch};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for prototypes, applied to the batch-mean gradient.
    pub learning_rate: f64,
    /// Step size for embeddings, applied to each sample's own gradient. The
    /// small default keeps embeddings from collapsing onto their prototypes,
    /// much as a fixed-capacity backbone would.
    pub embedding_learning_rate: f64,
    pub momentum: f64,
    /// Epochs, as fractions of `epochs`, at which both rates are multiplied
    /// by `lr_decay_factor`. Empty means a constant rate.
    pub lr_decay_at: Vec<f64>,
    pub lr_decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 10,
            learning_rate: 0.007,
            embedding_learning_rate: 7e-5,
            momentum: 0.9,
            lr_decay_at: Vec::new(),
            lr_decay_factor: 0.1,
            seed: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidParameter(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !(self.embedding_learning_rate >= 0.0) {
            return bad("learning rates must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(alloc::format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.lr_decay_at.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("lr_decay_at entries are fractions in [0, 1]".into());
        }
        if !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be positive".into());
        }
        Ok(())
    }

    fn rate_multiplier(&self, epoch: usize) -> f64 {
        let passed = self
            .lr_decay_at
            .iter()
            .filter(|&&f| epoch as f64 >= f * self.epochs as f64)
            .count();
        let mut mult = 1.0;
        for _ in 0..passed {
            mult *= self.lr_decay_factor;
        }
        mult
    }
}

/// One row per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainLogRow {
    pub iter: usize,
    pub epoch: usize,
    pub loss: f64,
    pub g_t_mean: f64,
    pub g_n_mean: f64,
    pub p_v_mean: f64,
    /// Batch mean of the balanced threshold, the value fed to the EMA.
    pub p_hat_v_mean: f64,
    /// Global boundary after this step's update.
    pub p_vg: f64,
    pub intra_class_mean_cosine: f64,
    pub inter_class_max_cosine: f64,
}

/// Momentum SGD with buffers kept in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub embedding_learning_rate: f64,
    pub momentum: f64,
    pub prototype_velocity: Vec<f64>,
    pub embedding_velocity: Vec<f64>,
}

impl SgdMomentum {
    fn step(velocity: &mut [f64], params: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
        for ((v, p), g) in velocity.iter_mut().zip(params.iter_mut()).zip(grad) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub embeddings: SphereBatch,
    pub prototypes: PrototypeMatrix,
    pub boundary: BoundaryState,
    pub optimizer: SgdMomentum,
    pub epoch: usize,
    pub iter: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<TrainLogRow>,
}

fn random_prototypes(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<PrototypeMatrix> {
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(u) = sphere::normalize(&v) {
                data.extend_from_slice(u.as_slice());
                break;
            }
        }
    }
    PrototypeMatrix::new(dim, data, (0..n as u64).collect())
}

struct SampleResult {
    loss: f64,
    grad: GradientBundle,
    g_t: f64,
    g_n: f64,
    p_v: f64,
}

fn evaluate_sample(
    scores: &ScoreBundle,
    p_hat_v: f64,
    state: &BoundaryState,
    loss_cfg: &LossConfig,
) -> Result<SampleResult> {
    if loss_cfg.variant == Variant::GbCosFace {
        let (loss, grad, diag) = boundary::per_sample_step(scores, state, loss_cfg)?;
        Ok(SampleResult {
            loss,
            grad,
            g_t: diag.g_t,
            g_n: diag.g_n,
            p_v: diag.p_v,
        })
    } else {
        let e = margin::softmax_family_eval(scores, loss_cfg)?;
        Ok(SampleResult {
            loss: e.loss,
            g_t: e.grad.d_py.abs(),
            g_n: e.grad.nontarget_sum().abs(),
            grad: e.grad,
            p_v: p_hat_v,
        })
    }
}

/// Mini-batch training of free embeddings and prototypes.
///
/// `data` supplies the initial embeddings and the labels. Every step scores
/// the batch, evaluates the loss, back-propagates through `p = x·w`, applies
/// momentum SGD and re-normalizes the touched rows. The running boundary is
/// updated once per batch with the batch mean of `p̂_v`; a fresh boundary is
/// seeded from the first batch before its loss is evaluated.
pub fn train(data: &SphereBatch, loss_cfg: &LossConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    loss_cfg.validate()?;
    cfg.validate()?;
    let n_classes = data.n_classes();
    let dim = data.dim();
    if n_classes < 2 {
        return Err(Error::InsufficientData("training needs at least 2 classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = TrainState {
        embeddings: data.clone(),
        prototypes: random_prototypes(&mut rng, n_classes, dim)?,
        boundary: BoundaryState::new(loss_cfg.gamma)?,
        optimizer: SgdMomentum {
            learning_rate: cfg.learning_rate,
            embedding_learning_rate: cfg.embedding_learning_rate,
            momentum: cfg.momentum,
            prototype_velocity: alloc::vec![0.0; n_classes * dim],
            embedding_velocity: alloc::vec![0.0; data.len() * dim],
        },
        epoch: 0,
        iter: 0,
        seed: cfg.seed,
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs * data.len().div_ceil(cfg.batch_size));
    let mut scores = alloc::vec![0.0; n_classes];
    let mut proto_grad = alloc::vec![0.0; n_classes * dim];
    let mut emb_grad = alloc::vec![0.0; dim];
    let mut bundles: Vec<(usize, ScoreBundle, f64)> = Vec::with_capacity(cfg.batch_size);
    let mut results: Vec<SampleResult> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        let mult = cfg.rate_multiplier(epoch);
        let proto_lr = cfg.learning_rate * mult;
        let emb_lr = cfg.embedding_learning_rate * mult;
        order.shuffle(&mut rng);

        for batch in order.chunks(cfg.batch_size) {
            bundles.clear();
            for &k in batch {
                let label = state.embeddings.labels()[k];
                sphere::cosine_scores_into(state.embeddings.row(k), &state.prototypes, &mut scores)?;
                let b = ScoreBundle::from_scores(&scores, label)?;
                let p_hat_v = boundary::balanced_threshold(&b, loss_cfg.s);
                bundles.push((k, b, p_hat_v));
            }
            let p_vb = bundles.iter().map(|b| b.2).sum::<f64>() / bundles.len() as f64;
            let seeded_now = !state.boundary.is_initialized();
            if seeded_now {
                state.boundary = boundary::ema_update(&state.boundary, p_vb)?;
            }

            results.clear();
            for (_, b, p_hat_v) in &bundles {
                let r = evaluate_sample(b, *p_hat_v, &state.boundary, loss_cfg)?;
                if !r.loss.is_finite() || !r.grad.is_finite() {
                    return Err(Error::NonFiniteLoss { iter: state.iter });
                }
                results.push(r);
            }

            // backprop through p_j = x·w_j using pre-step parameters
            proto_grad.iter_mut().for_each(|g| *g = 0.0);
            let inv_b = 1.0 / batch.len() as f64;
            for ((k, _, _), r) in bundles.iter().zip(&results) {
                let label = state.embeddings.labels()[*k];
                let x = state.embeddings.row(*k);
                emb_grad.iter_mut().for_each(|g| *g = 0.0);
                let mut nontarget = r.grad.d_pi.iter();
                for j in 0..n_classes {
                    let d = if j == label {
                        r.grad.d_py
                    } else {
                        *nontarget.next().expect("one gradient per non-target")
                    };
                    let w = state.prototypes.row(j);
                    for (g, wj) in emb_grad.iter_mut().zip(w) {
                        *g += d * wj;
                    }
                    for (g, xi) in proto_grad[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                        *g += d * xi * inv_b;
                    }
                }
                let span = *k * dim..(*k + 1) * dim;
                SgdMomentum::step(
                    &mut state.optimizer.embedding_velocity[span.clone()],
                    &mut state.embeddings.flat_mut()[span.clone()],
                    &emb_grad,
                    emb_lr,
                    cfg.momentum,
                );
                sphere::normalize_in_place(&mut state.embeddings.flat_mut()[span])?;
            }
            SgdMomentum::step(
                &mut state.optimizer.prototype_velocity,
                state.prototypes.flat_mut(),
                &proto_grad,
                proto_lr,
                cfg.momentum,
            );
            for row in state.prototypes.flat_mut().chunks_exact_mut(dim) {
                sphere::normalize_in_place(row)?;
            }

            if !seeded_now {
                state.boundary = boundary::ema_update(&state.boundary, p_vb)?;
            }

            let n = results.len() as f64;
            let mean = |f: fn(&SampleResult) -> f64| results.iter().map(f).sum::<f64>() / n;
            let stats = eval::cluster_stats(&state.embeddings)?;
            log.push(TrainLogRow {
                iter: state.iter,
                epoch,
                loss: mean(|r| r.loss),
                g_t_mean: mean(|r| r.g_t),
                g_n_mean: mean(|r| r.g_n),
                p_v_mean: mean(|r| r.p_v),
                p_hat_v_mean: p_vb,
                p_vg: state.boundary.p_vg(),
                intra_class_mean_cosine: stats.intra_class_mean_cosine,
                inter_class_max_cosine: stats.inter_class_max_cosine,
            });
            state.iter += 1;
        }
    }
    state.epoch = cfg.epochs;
    Ok(TrainOutcome { state, log })
}
