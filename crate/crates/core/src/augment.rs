//! Masked-view generation and subject-pair sampling for pretraining.
//!
//! A masked view zeroes whole ROI rows (never individual cells); the
//! placeholder 0.0 is the per-cell mean after z-scoring.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, FeatureMap};
use crate::error::{Error, Result};

/// Placeholder written into masked ROI rows (the feature-wise mean in
/// normalized space).
pub const MASK_PLACEHOLDER: f64 = 0.0;

/// One augmented copy of a feature map with `k` ROI rows masked out.
#[derive(Debug, Clone)]
pub struct MaskedView {
    pub subject_id: String,
    /// 1-based view index within the K repetitions.
    pub view_index: usize,
    /// Masked ROI row indices, sorted, unique, in `[0, n_roi)`.
    pub mask: Vec<usize>,
    pub values: Array2<f64>,
}

impl MaskedView {
    pub fn n_roi(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_feat(&self) -> usize {
        self.values.ncols()
    }
}

/// Draw two distinct subjects uniformly without replacement.
pub fn sample_pair<'d, R: Rng>(
    d: &'d Dataset,
    rng: &mut R,
) -> Result<(&'d FeatureMap, &'d FeatureMap)> {
    let m = d.n_subjects();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "pair sampling needs at least 2 subjects, got {m}"
        )));
    }
    let first = rng.random_range(0..m);
    let mut second = rng.random_range(0..m - 1);
    if second >= first {
        second += 1;
    }
    Ok((&d.maps()[first], &d.maps()[second]))
}

/// Draw `count` distinct subject indices uniformly without replacement.
/// Returns all indices when `count >= M`.
pub fn sample_batch_subjects<R: Rng>(m: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    idx.truncate(count.min(m));
    idx
}

/// Generate `big_k` masked views of one map, each with an independent
/// uniformly drawn k-subset of ROI rows replaced by the placeholder.
pub fn make_views<R: Rng>(
    x: &FeatureMap,
    k: usize,
    big_k: usize,
    rng: &mut R,
) -> Result<Vec<MaskedView>> {
    let n_roi = x.n_roi();
    if k < 1 || k > n_roi - 1 {
        return Err(Error::InvalidArgument(format!(
            "k must be in [1, {}], got {k}",
            n_roi - 1
        )));
    }
    if big_k < 1 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let mut views = Vec::with_capacity(big_k);
    for view_index in 1..=big_k {
        let mut rows: Vec<usize> = (0..n_roi).collect();
        rows.shuffle(rng);
        let mut mask: Vec<usize> = rows[..k].to_vec();
        mask.sort_unstable();
        let mut values = x.values().clone();
        for &r in &mask {
            values.row_mut(r).fill(MASK_PLACEHOLDER);
        }
        views.push(MaskedView {
            subject_id: x.subject_id().to_string(),
            view_index,
            mask,
            values,
        });
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset(m: usize, n_roi: usize, n_feat: usize) -> Dataset {
        let maps = (0..m)
            .map(|s| {
                let values = Array2::from_shape_fn((n_roi, n_feat), |(r, c)| {
                    (s * 1000 + r * 10 + c) as f64 + 0.25
                });
                FeatureMap::new(
                    format!("sub{s}"),
                    values,
                    (0..n_roi).map(|i| format!("roi{i}")).collect(),
                    (0..n_feat).map(|i| format!("feat{i}")).collect(),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(maps, None, None).unwrap()
    }

    #[test]
    fn pair_with_two_subjects_is_forced() {
        let d = toy_dataset(2, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b) = sample_pair(&d, &mut rng).unwrap();
        assert_ne!(a.subject_id(), b.subject_id());
    }

    #[test]
    fn pair_sampling_is_deterministic_under_seed() {
        let d = toy_dataset(362, 3, 2);
        for _ in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let (a, b) = sample_pair(&d, &mut rng).unwrap();
            let mut rng2 = ChaCha8Rng::seed_from_u64(42);
            let (a2, b2) = sample_pair(&d, &mut rng2).unwrap();
            assert_eq!(a.subject_id(), a2.subject_id());
            assert_eq!(b.subject_id(), b2.subject_id());
        }
    }

    #[test]
    fn single_subject_errors() {
        let maps = vec![FeatureMap::new(
            "only",
            Array2::zeros((3, 2)),
            vec!["r0".into(), "r1".into(), "r2".into()],
            vec!["f0".into(), "f1".into()],
        )
        .unwrap()];
        let d = Dataset::new(maps, None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pair(&d, &mut rng).is_err());
    }

    #[test]
    fn views_have_exact_mask_counts() {
        let d = toy_dataset(1, 87, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let views = make_views(&d.maps()[0], 30, 50, &mut rng).unwrap();
        assert_eq!(views.len(), 50);
        for (i, v) in views.iter().enumerate() {
            assert_eq!(v.view_index, i + 1);
            assert_eq!(v.mask.len(), 30);
            let mut zeroed = 0;
            for r in 0..87 {
                let row = v.values.row(r);
                if v.mask.contains(&r) {
                    assert!(row.iter().all(|&x| x == MASK_PLACEHOLDER));
                    zeroed += 1;
                } else {
                    // untouched rows are bit-identical to the source
                    for (a, b) in row.iter().zip(d.maps()[0].values().row(r)) {
                        assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }
            assert_eq!(zeroed, 30);
        }
    }

    #[test]
    fn minimal_view() {
        let d = toy_dataset(1, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let views = make_views(&d.maps()[0], 1, 1, &mut rng).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].mask.len(), 1);
    }

    #[test]
    fn same_seed_gives_identical_mask_sequences() {
        let d = toy_dataset(1, 10, 4);
        let masks = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            make_views(&d.maps()[0], 3, 20, &mut rng)
                .unwrap()
                .into_iter()
                .map(|v| v.mask)
                .collect::<Vec<_>>()
        };
        assert_eq!(masks(99), masks(99));
    }

    #[test]
    fn k_out_of_range_errors() {
        let d = toy_dataset(1, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_views(&d.maps()[0], 0, 1, &mut rng).is_err());
        assert!(make_views(&d.maps()[0], 5, 1, &mut rng).is_err());
        assert!(make_views(&d.maps()[0], 1, 0, &mut rng).is_err());
    }

    #[test]
    fn mask_frequency_is_uniform() {
        let d = toy_dataset(1, 10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            let v = make_views(&d.maps()[0], 1, 1, &mut rng).unwrap();
            counts[v[0].mask[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.1).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn source_map_is_never_mutated() {
        let d = toy_dataset(1, 6, 3);
        let before = d.maps()[0].values().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let _ = make_views(&d.maps()[0], 2, 5, &mut rng).unwrap();
        assert_eq!(d.maps()[0].values(), &before);
    }
}
