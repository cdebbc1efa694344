//! Open-set verification: pairs, global-threshold decisions, TAR@FAR.
//!
//! Two samples are accepted as the same identity when their cosine similarity
//! is at least the threshold `T`. FAR is the accepted fraction of impostor
//! pairs and TAR the accepted fraction of genuine pairs.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sphere::{self, SphereBatch, UnitVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub genuine: Vec<(usize, usize)>,
    pub impostor: Vec<(usize, usize)>,
}

impl PairSet {
    /// Checks indices, self-pairs, repeats and labels against `batch`.
    pub fn validate(&self, batch: &SphereBatch) -> Result<()> {
        let labels = batch.labels();
        let mut seen = BTreeSet::new();
        for (kind, pairs, same) in [("genuine", &self.genuine, true), ("impostor", &self.impostor, false)] {
            for &(i, j) in pairs {
                if i >= labels.len() || j >= labels.len() {
                    return Err(Error::InvalidParameter(format!("{kind} pair ({i}, {j}) out of range")));
                }
                if i == j {
                    return Err(Error::InvalidParameter(format!("self-pair ({i}, {i})")));
                }
                if (labels[i] == labels[j]) != same {
                    return Err(Error::InvalidParameter(format!(
                        "{kind} pair ({i}, {j}) has labels {} and {}",
                        labels[i], labels[j]
                    )));
                }
                if !seen.insert((i.min(j), i.max(j))) {
                    return Err(Error::InvalidParameter(format!("pair ({i}, {j}) repeats")));
                }
            }
        }
        Ok(())
    }
}

fn members_by_class(batch: &SphereBatch) -> Vec<Vec<usize>> {
    let mut members = alloc::vec![Vec::new(); batch.n_classes()];
    for (i, &l) in batch.labels().iter().enumerate() {
        members[l].push(i);
    }
    members
}

fn take_capped(rng: &mut ChaCha8Rng, candidates: Vec<(usize, usize)>, cap: usize, out: &mut Vec<(usize, usize)>) {
    if candidates.len() <= cap {
        out.extend(candidates);
        return;
    }
    let mut picked = rand::seq::index::sample(rng, candidates.len(), cap).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|k| candidates[k]));
}

/// Genuine pairs within each class and impostor pairs between each pair of
/// classes, at most `max_pairs_per_class` of each. Groups that fit under the
/// cap are taken exhaustively; larger ones are sampled without replacement.
pub fn build_pairs(batch: &SphereBatch, max_pairs_per_class: usize, seed: u64) -> Result<PairSet> {
    let members = members_by_class(batch);
    let eligible = members.iter().filter(|m| m.len() >= 2).count();
    if eligible < 2 {
        return Err(Error::InsufficientData(format!(
            "need 2 identities with 2 samples each, found {eligible}"
        )));
    }
    if max_pairs_per_class == 0 {
        return Err(Error::InvalidParameter("max_pairs_per_class must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut genuine = Vec::new();
    for m in &members {
        let mut cand = Vec::new();
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                cand.push((i, j));
            }
        }
        take_capped(&mut rng, cand, max_pairs_per_class, &mut genuine);
    }
    let mut impostor = Vec::new();
    for (c, mc) in members.iter().enumerate() {
        for md in &members[c + 1..] {
            let cand: Vec<_> = mc.iter().flat_map(|&i| md.iter().map(move |&j| (i, j))).collect();
            take_capped(&mut rng, cand, max_pairs_per_class, &mut impostor);
        }
    }
    Ok(PairSet { genuine, impostor })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TarAtFar {
    pub far_level: f64,
    pub tar: f64,
    pub threshold: f64,
    pub achieved_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// One point per distinct similarity value, thresholds ascending.
    pub roc: Vec<RocPoint>,
    pub tar_at_far: Vec<TarAtFar>,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    /// Keeps at most `max_points` ROC points, evenly spaced by index and
    /// always including the thresholds used by `tar_at_far`.
    pub fn thinned_roc(&self, max_points: usize) -> Vec<RocPoint> {
        if self.roc.len() <= max_points || max_points < 2 {
            return self.roc.clone();
        }
        let last = self.roc.len() - 1;
        let mut keep: BTreeSet<usize> = (0..max_points)
            .map(|k| k * last / (max_points - 1))
            .collect();
        for t in &self.tar_at_far {
            if let Some(i) = self.roc.iter().position(|p| p.threshold == t.threshold) {
                keep.insert(i);
            }
        }
        keep.into_iter().map(|i| self.roc[i]).collect()
    }

    pub fn tar_at(&self, far_level: f64) -> Option<f64> {
        self.tar_at_far
            .iter()
            .find(|t| t.far_level == far_level)
            .map(|t| t.tar)
    }
}

/// Sorted-similarity view used to answer threshold queries by binary search.
struct Similarities {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl Similarities {
    fn count_at_least(sorted: &[f64], t: f64) -> usize {
        sorted.len() - sorted.partition_point(|&v| v < t)
    }

    fn far(&self, t: f64) -> f64 {
        Self::count_at_least(&self.impostor, t) as f64 / self.impostor.len() as f64
    }

    fn tar(&self, t: f64) -> f64 {
        Self::count_at_least(&self.genuine, t) as f64 / self.genuine.len() as f64
    }
}

/// Candidate thresholds: every observed similarity plus one value above the max.
fn candidate_thresholds(sims: &Similarities) -> Vec<f64> {
    let mut all: Vec<f64> = sims.genuine.iter().chain(&sims.impostor).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let top = *all.last().expect("non-empty");
    all.push(top.next_up());
    all
}

/// ROC sweep and TAR at each requested FAR level.
///
/// The threshold for level `f` is the smallest candidate `T` whose FAR is at
/// most `f`; FAR is therefore never exceeded, and ties resolve to the stricter
/// threshold.
pub fn tar_at_far(pairs: &PairSet, batch: &SphereBatch, far_levels: &[f64]) -> Result<VerificationReport> {
    if pairs.genuine.is_empty() || pairs.impostor.is_empty() {
        return Err(Error::EmptyPairs);
    }
    pairs.validate(batch)?;
    let sim = |&(i, j): &(usize, usize)| batch.cosine(i, j);
    tar_at_far_from_scores(
        pairs.genuine.iter().map(sim).collect(),
        pairs.impostor.iter().map(sim).collect(),
        far_levels,
    )
}

/// [`tar_at_far`] on precomputed genuine and impostor similarities.
pub fn tar_at_far_from_scores(
    mut genuine: Vec<f64>,
    mut impostor: Vec<f64>,
    far_levels: &[f64],
) -> Result<VerificationReport> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyPairs);
    }
    if genuine.iter().chain(&impostor).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("similarity"));
    }
    if far_levels.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
        return Err(Error::InvalidParameter("FAR levels must lie in (0, 1)".into()));
    }
    if far_levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("FAR levels must be sorted ascending".into()));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let sims = Similarities { genuine, impostor };

    let mut warnings = Vec::new();
    if let Some(&min_far) = far_levels.first() {
        let needed = 1.0 / min_far;
        if (sims.impostor.len() as f64) < needed {
            warnings.push(format!(
                "{} impostor pairs cannot resolve FAR {min_far:e}; at least {needed:.0} recommended",
                sims.impostor.len()
            ));
        }
    }

    let thresholds = candidate_thresholds(&sims);
    let roc: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            far: sims.far(t),
            tar: sims.tar(t),
        })
        .collect();

    // far is non-increasing along ascending thresholds, so the first point
    // satisfying the level is the smallest admissible threshold
    let tar_at_far = far_levels
        .iter()
        .map(|&f| {
            let k = roc.partition_point(|p| p.far > f);
            let p = roc[k.min(roc.len() - 1)];
            TarAtFar {
                far_level: f,
                tar: p.tar,
                threshold: p.threshold,
                achieved_far: p.far,
            }
        })
        .collect();

    Ok(VerificationReport {
        roc,
        tar_at_far,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    /// Mean over classes of the mean pairwise cosine within the class.
    pub intra_class_mean_cosine: f64,
    /// Largest cosine between two renormalized class mean directions.
    pub inter_class_max_cosine: f64,
    /// Mean direction per class; `None` for classes absent from the batch.
    pub class_means: Vec<Option<UnitVector>>,
    /// Classes with a single sample, which contribute no intra pairs.
    pub singleton_classes: Vec<usize>,
}

/// Intra- and inter-class cosine summaries of a labelled batch.
pub fn cluster_stats(batch: &SphereBatch) -> Result<ClusterStats> {
    let dim = batch.dim();
    let mut sums = alloc::vec![0.0; batch.n_classes() * dim];
    let mut counts = alloc::vec![0usize; batch.n_classes()];
    for (row, &l) in batch.rows().zip(batch.labels()) {
        counts[l] += 1;
        for (acc, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row) {
            *acc += x;
        }
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::InsufficientData(format!(
            "cluster statistics need 2 classes, found {present}"
        )));
    }

    let mut intra_sum = 0.0;
    let mut intra_classes = 0usize;
    let mut singleton_classes = Vec::new();
    let mut class_means = Vec::with_capacity(batch.n_classes());
    for (c, &k) in counts.iter().enumerate() {
        let sum = &sums[c * dim..(c + 1) * dim];
        if k == 0 {
            class_means.push(None);
            continue;
        }
        if k == 1 {
            singleton_classes.push(c);
        } else {
            // Σ_{i≠j} x_i·x_j = ‖Σ x‖² - Σ ‖x‖², rows are unit
            let s2: f64 = sum.iter().map(|v| v * v).sum();
            let kf = k as f64;
            intra_sum += (s2 - kf) / (kf * (kf - 1.0));
            intra_classes += 1;
        }
        class_means.push(Some(sphere::normalize(sum)?));
    }
    if intra_classes == 0 {
        return Err(Error::InsufficientData("every class is a singleton".into()));
    }

    let means: Vec<&UnitVector> = class_means.iter().flatten().collect();
    let mut inter = f64::NEG_INFINITY;
    for (a, ma) in means.iter().enumerate() {
        for mb in &means[a + 1..] {
            inter = inter.max(ma.dot(mb)?.clamp(-1.0, 1.0));
        }
    }

    Ok(ClusterStats {
        intra_class_mean_cosine: intra_sum / intra_classes as f64,
        inter_class_max_cosine: inter,
        class_means,
        singleton_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_by_two() -> SphereBatch {
        SphereBatch::from_raw_rows(
            2,
            vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, 0.1, 0.9],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap()
    }

    #[test]
    fn exhaustive_pair_counts() {
        let pairs = build_pairs(&two_by_two(), 100, 1).unwrap();
        assert_eq!(pairs.genuine.len(), 2);
        assert_eq!(pairs.impostor.len(), 4);
        pairs.validate(&two_by_two()).unwrap();
    }

    #[test]
    fn insufficient_data() {
        let b = SphereBatch::from_raw_rows(2, vec![1.0, 0.0, 0.0, 1.0], vec![0, 1], 2).unwrap();
        assert!(matches!(build_pairs(&b, 10, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn separable_scores() {
        let r = tar_at_far_from_scores(vec![0.9; 50], vec![0.1; 500], &[0.01]).unwrap();
        assert_eq!(r.tar_at_far[0].tar, 1.0);
        assert_eq!(r.tar_at_far[0].achieved_far, 0.0);
    }

    #[test]
    fn rejects_bad_levels_and_empty() {
        assert_eq!(tar_at_far_from_scores(vec![], vec![0.1], &[0.1]), Err(Error::EmptyPairs));
        assert!(tar_at_far_from_scores(vec![0.5], vec![0.1], &[0.0]).is_err());
        assert!(tar_at_far_from_scores(vec![0.5], vec![0.1], &[0.1, 0.01]).is_err());
    }

    #[test]
    fn warns_on_too_few_impostors() {
        let r = tar_at_far_from_scores(vec![0.5], vec![0.1; 10], &[0.01]).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn cluster_stats_examples() {
        let b = SphereBatch::from_raw_rows(2, vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0], vec![0, 0, 1, 1], 2)
            .unwrap();
        let st = cluster_stats(&b).unwrap();
        assert!((st.intra_class_mean_cosine - 1.0).abs() < 1e-12);
        assert_eq!(st.inter_class_max_cosine, -1.0);

        let b = SphereBatch::from_raw_rows(2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 0, 1], 2).unwrap();
        let st = cluster_stats(&b).unwrap();
        assert_eq!(st.singleton_classes, vec![1]);
    }
}
