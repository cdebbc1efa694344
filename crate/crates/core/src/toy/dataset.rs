use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::sphere::{self, SphereBatch, UnitVector};

/// Proposal budget for placing separated class means.
pub const MAX_PROPOSALS: usize = 10_000;

/// Synthetic identities: `n_ids` clusters of `samples_per_id` unit vectors.
///
/// A sample is `normalize(mean + concentration · z)` with `z ~ N(0, I)`, so
/// `concentration` is the noise scale (0 puts every sample on its mean).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ToyDataset {
    pub n_ids: usize,
    pub samples_per_id: usize,
    pub dim: usize,
    pub concentration: f64,
    pub seed: u64,
}

impl Default for ToyDataset {
    fn default() -> Self {
        Self {
            n_ids: 10,
            samples_per_id: 40,
            dim: 3,
            concentration: 0.3,
            seed: 17,
        }
    }
}

impl ToyDataset {
    pub fn validate(&self) -> Result<()> {
        if self.n_ids < 2 || self.samples_per_id < 2 || self.dim < 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "need n_ids >= 2, samples_per_id >= 2 and dim >= 2, got {}, {}, {}",
                self.n_ids,
                self.samples_per_id,
                self.dim
            )));
        }
        if !(self.concentration >= 0.0) || !self.concentration.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "concentration must be finite and >= 0, got {}",
                self.concentration
            )));
        }
        Ok(())
    }
}

/// Typical angular radius of a cluster: `atan(concentration · sqrt(dim - 1))`.
pub fn expected_cluster_radius(dim: usize, concentration: f64) -> f64 {
    math::atan(concentration * math::sqrt(dim.saturating_sub(1) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    /// Samples ordered by identity; row `k` has label `k / samples_per_id`.
    pub batch: SphereBatch,
    pub means: Vec<UnitVector>,
}

fn gaussian_direction(rng: &mut ChaCha8Rng, dim: usize) -> Result<UnitVector> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        match sphere::normalize(&v) {
            Ok(u) => return Ok(u),
            Err(Error::ZeroVector { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Deterministic in `spec.seed`.
///
/// Class means are drawn uniformly and kept only if they are at least
/// `2 · expected_cluster_radius` from every accepted mean.
pub fn generate_dataset(spec: &ToyDataset) -> Result<GeneratedDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let min_angle = 2.0 * expected_cluster_radius(spec.dim, spec.concentration);
    let min_cos = math::cos(min_angle.min(core::f64::consts::PI));

    let mut means: Vec<UnitVector> = Vec::with_capacity(spec.n_ids);
    let mut proposals = 0;
    while means.len() < spec.n_ids {
        if proposals == MAX_PROPOSALS {
            return Err(Error::SeparationFailure {
                placed: means.len(),
                requested: spec.n_ids,
                proposals,
            });
        }
        proposals += 1;
        let cand = gaussian_direction(&mut rng, spec.dim)?;
        let separated = means
            .iter()
            .all(|m| math::dot(m.as_slice(), cand.as_slice()) <= min_cos);
        if separated {
            means.push(cand);
        }
    }

    let total = spec.n_ids * spec.samples_per_id;
    let mut data = Vec::with_capacity(total * spec.dim);
    let mut labels = Vec::with_capacity(total);
    let mut buf = alloc::vec![0.0; spec.dim];
    for (id, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_id {
            for (b, &m) in buf.iter_mut().zip(mean.as_slice()) {
                let z: f64 = rng.sample(StandardNormal);
                *b = m + spec.concentration * z;
            }
            data.extend_from_slice(sphere::normalize(&buf)?.as_slice());
            labels.push(id);
        }
    }
    Ok(GeneratedDataset {
        batch: SphereBatch::new(spec.dim, data, labels, spec.n_ids)?,
        means,
    })
}
