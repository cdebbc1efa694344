use gbcosface_core::toy::{
    expected_cluster_radius, generate_dataset, gradient_trajectory_report, train, ToyDataset, TrainConfig,
};
use gbcosface_core::{Error, LossConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    c.clamp(-1.0, 1.0).acos()
}

fn short_run() -> TrainConfig {
    TrainConfig { epochs: 4, ..TrainConfig::default() }
}

#[test]
fn intra_class_angle_matches_monte_carlo() {
    let spec = ToyDataset { samples_per_id: 100, ..ToyDataset::default() };
    let g = generate_dataset(&spec).unwrap();
    let empirical = g
        .batch
        .rows()
        .zip(g.batch.labels())
        .map(|(r, &l)| angle(r, g.means[l].as_slice()))
        .sum::<f64>()
        / g.batch.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(1_000_003);
    let draws = 1_000_000;
    let mut total = 0.0;
    for _ in 0..draws {
        let v: Vec<f64> = (0..spec.dim)
            .map(|k| if k == 0 { 1.0 } else { 0.0 } + spec.concentration * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        total += (v[0] / n).clamp(-1.0, 1.0).acos();
    }
    let oracle = total / draws as f64;
    assert!((empirical - oracle).abs() < 0.2 * oracle, "{empirical} vs {oracle}");
}

#[test]
fn class_means_respect_separation() {
    for seed in 0..20 {
        let spec = ToyDataset { seed, ..ToyDataset::default() };
        let g = generate_dataset(&spec).unwrap();
        let min = 2.0 * expected_cluster_radius(spec.dim, spec.concentration);
        for a in 0..g.means.len() {
            for b in a + 1..g.means.len() {
                assert!(angle(g.means[a].as_slice(), g.means[b].as_slice()) >= min - 1e-12);
            }
        }
    }
}

#[test]
fn impossible_separation_is_reported() {
    let spec = ToyDataset { n_ids: 40, concentration: 0.6, ..ToyDataset::default() };
    assert!(matches!(generate_dataset(&spec), Err(Error::SeparationFailure { .. })));
}

#[test]
fn training_is_bitwise_deterministic() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    let a = train(&g.batch, &LossConfig::default(), &short_run()).unwrap();
    let b = train(&g.batch, &LossConfig::default(), &short_run()).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.state.embeddings.as_flat(), b.state.embeddings.as_flat());
    assert_eq!(a.state.prototypes.as_flat(), b.state.prototypes.as_flat());
}

#[test]
fn zero_alpha_run_tracks_cosface_with_double_margin() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let gb = train(&g.batch, &LossConfig::gb_cosface(32.0, 0.16, 0.0, 0.01), &cfg).unwrap();
    let cf = train(&g.batch, &LossConfig::cosface(32.0, 0.32), &cfg).unwrap();
    assert_eq!(gb.log.len(), cf.log.len());
    for (a, b) in gb.log.iter().zip(&cf.log) {
        assert!((a.loss - b.loss).abs() < 1e-8, "iter {}: {} vs {}", a.iter, a.loss, b.loss);
        assert!((a.g_t_mean - b.g_t_mean).abs() < 1e-8);
    }
    for (x, y) in gb.state.embeddings.as_flat().iter().zip(cf.state.embeddings.as_flat()) {
        assert!((x - y).abs() < 1e-8);
    }
    for (x, y) in gb.state.prototypes.as_flat().iter().zip(cf.state.prototypes.as_flat()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn rows_stay_on_the_sphere() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    for epochs in [1, 2, 5] {
        for loss in [LossConfig::default(), LossConfig::arcface(32.0, 0.5), LossConfig::normalized_softmax(16.0)] {
            let cfg = TrainConfig { epochs, embedding_learning_rate: 0.01, learning_rate: 0.1, ..TrainConfig::default() };
            let out = train(&g.batch, &loss, &cfg).unwrap();
            for row in out.state.embeddings.rows().chain(out.state.prototypes.rows()) {
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn smoothed_loss_falls_over_training() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    for alpha in [0.0, 0.15, 0.25] {
        let out = train(&g.batch, &LossConfig { alpha, ..LossConfig::default() }, &TrainConfig::default()).unwrap();
        let w = 2.0 / 51.0;
        let mut ema = out.log[0].loss;
        let mut start = None;
        for (k, r) in out.log.iter().enumerate() {
            ema = (1.0 - w) * ema + w * r.loss;
            if k == 49 {
                start = Some(ema);
            }
        }
        assert!(ema < start.unwrap(), "alpha={alpha}: {ema} >= {}", start.unwrap());
    }
}

#[test]
fn zero_alpha_log_is_exactly_balanced() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    let out = train(&g.batch, &LossConfig { alpha: 0.0, ..LossConfig::default() }, &TrainConfig::default()).unwrap();
    for r in &out.log {
        assert!((r.g_t_mean / r.g_n_mean - 1.0).abs() < 1e-9);
    }
    let rep = gradient_trajectory_report(&out.log).unwrap();
    assert!(rep.balanced);
}

#[test]
fn default_run_is_balanced_with_a_steady_boundary() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    let out = train(&g.batch, &LossConfig::default(), &TrainConfig::default()).unwrap();
    let rep = gradient_trajectory_report(&out.log).unwrap();
    assert!((0.8..=1.25).contains(&rep.ratio), "ratio {}", rep.ratio);
    assert!(rep.p_vg_window_std < 0.05 * rep.p_vg_window_mean);
    assert_eq!(out.state.boundary.update_count() as usize, out.log.len());
}

#[test]
fn first_batch_seeds_the_boundary() {
    let g = generate_dataset(&ToyDataset::default()).unwrap();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let out = train(&g.batch, &LossConfig::default(), &cfg).unwrap();
    // seeded from the batch mean of p_hat_v, so mixing leaves the batch mean unchanged
    assert!((out.log[0].p_v_mean - out.log[0].p_vg).abs() < 1e-12);
    assert!(out.state.boundary.is_initialized());
}
