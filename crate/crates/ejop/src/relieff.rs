//! Multi-class ReliefF feature weights, the diagonal-metric baseline.
//!
//! Normative algorithm (the standard multi-class formulation):
//!
//! - Feature differences are range-normalized: `diff(f, a, b) =
//!   |a_f - b_f| / (max_f - min_f)`, zero when the feature is constant.
//! - Point distance is the sum of `diff` over features.
//! - For each sampled point `x` (all `n` in dataset order, or `m` drawn
//!   without replacement from a seeded shuffle): find its `k` nearest
//!   same-class neighbors (self excluded, distance ties to the smaller id)
//!   and, per other class `c`, the `k` nearest members of `c`.
//! - Each feature's weight loses `diff(f, x, hit) / (m k)` per hit and gains
//!   `P(c) / (1 - P(class(x))) * diff(f, x, miss) / (m k)` per miss, with
//!   `P` the empirical class priors.
//! - Negative accumulated weights are clipped to 0 in the output used as a
//!   diagonal metric; the raw pre-clip weights are also returned.

use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{EjopError, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How many points ReliefF iterates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    /// Every training point, in dataset order (deterministic).
    All,
    /// `m` points drawn without replacement from a seeded shuffle.
    Count(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct ReliefFConfig {
    /// Neighbors per class (hits and misses alike).
    pub k_hits: usize,
    pub iterations: SampleCount,
    pub seed: u64,
}

impl Default for ReliefFConfig {
    fn default() -> Self {
        Self {
            k_hits: 10,
            iterations: SampleCount::All,
            seed: 0,
        }
    }
}

/// ReliefF output: `weights` is the nonnegative vector usable as a diagonal
/// metric, `raw` the unclipped accumulation.
#[derive(Debug, Clone)]
pub struct ReliefFWeights {
    pub weights: Vec<f64>,
    pub raw: Vec<f64>,
}

/// Run multi-class ReliefF over the dataset.
pub fn relieff_weights(ds: &LabeledDataset, config: &ReliefFConfig) -> Result<ReliefFWeights> {
    let n = ds.n();
    let d = ds.dim();
    let c = ds.class_count();
    if config.k_hits == 0 {
        return Err(EjopError::InvalidParam("k_hits must be at least 1".into()));
    }

    let mut class_sizes = vec![0usize; c];
    for &l in ds.labels() {
        class_sizes[l] += 1;
    }
    for (class, &size) in class_sizes.iter().enumerate() {
        if size < config.k_hits + 1 {
            return Err(EjopError::ClassTooSmall {
                class,
                size,
                needed: config.k_hits + 1,
            });
        }
    }

    let sampled: Vec<usize> = match config.iterations {
        SampleCount::All => (0..n).collect(),
        SampleCount::Count(m) => {
            if m > n {
                return Err(EjopError::SampleTooLarge {
                    requested: m,
                    available: n,
                });
            }
            if m == 0 {
                return Err(EjopError::InvalidParam("m must be at least 1".into()));
            }
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            order.shuffle(&mut rng);
            order.truncate(m);
            order
        }
    };
    let m = sampled.len();

    // Range normalization per feature; constant features contribute nothing.
    let mut inv_range = vec![0.0; d];
    let points = ds.points();
    for j in 0..d {
        let col = points.column(j);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            inv_range[j] = 1.0 / (hi - lo);
        }
    }
    let priors: Vec<f64> = class_sizes.iter().map(|&s| s as f64 / n as f64).collect();

    // Per-sample accumulation is parallel over fixed chunks; the chunk
    // partials are reduced in order so the result is worker-count
    // independent.
    let chunk_size = m.div_ceil(m.min(32));
    let partials: Vec<Vec<f64>> = sampled
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut acc = vec![0.0; d];
            for &s in chunk {
                accumulate_point(ds, s, config.k_hits, &priors, &inv_range, &mut acc);
            }
            acc
        })
        .collect();

    let norm = 1.0 / (m as f64 * config.k_hits as f64);
    let mut raw = vec![0.0; d];
    for partial in partials {
        for (w, p) in raw.iter_mut().zip(partial.iter()) {
            *w += p;
        }
    }
    raw.iter_mut().for_each(|w| *w *= norm);
    let weights = raw.iter().map(|&w| w.max(0.0)).collect();
    Ok(ReliefFWeights { weights, raw })
}

fn accumulate_point(
    ds: &LabeledDataset,
    s: usize,
    k: usize,
    priors: &[f64],
    inv_range: &[f64],
    acc: &mut [f64],
) {
    let n = ds.n();
    let d = ds.dim();
    let c = ds.class_count();
    let xs = ds.point(s);
    let own = ds.label(s);

    // Range-normalized Manhattan distances from the sampled point.
    let mut by_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); c];
    for i in 0..n {
        if i == s {
            continue;
        }
        let xi = ds.point(i);
        let mut dist = 0.0;
        for j in 0..d {
            dist += (xs[j] - xi[j]).abs() * inv_range[j];
        }
        by_class[ds.label(i)].push((dist, i));
    }
    for list in by_class.iter_mut() {
        list.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    }

    for (class, list) in by_class.iter().enumerate() {
        let nearest = &list[..k.min(list.len())];
        debug_assert_eq!(nearest.len(), k, "class sizes checked upfront");
        if class == own {
            for &(_, hit) in nearest {
                let xh = ds.point(hit);
                for j in 0..d {
                    acc[j] -= (xs[j] - xh[j]).abs() * inv_range[j];
                }
            }
        } else {
            let scale = priors[class] / (1.0 - priors[own]);
            for &(_, miss) in nearest {
                let xm = ds.point(miss);
                for j in 0..d {
                    acc[j] += scale * (xs[j] - xm[j]).abs() * inv_range[j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn informative_feature_outweighs_noise() {
        // Feature 0 separates the classes; feature 1 is noise.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 60;
        let mut pts = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        for i in 0..n {
            let class = (i % 2) as i64;
            pts[[i, 0]] = class as f64 * 2.0 + rng.gen_range(-0.3..0.3);
            pts[[i, 1]] = rng.gen_range(-1.0..1.0);
            labels.push(class);
        }
        let ds = validate_dataset(pts, &labels).unwrap();
        let out = relieff_weights(&ds, &ReliefFConfig::default()).unwrap();
        assert!(out.weights[0] > out.weights[1]);
        assert!(out.weights[1] < 0.05, "noise weight {}", out.weights[1]);
    }

    #[test]
    fn shuffled_labels_give_near_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let d = 3;
        let pts = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.0..1.0));
        let base_labels: Vec<i64> = (0..n).map(|i| (i % 3) as i64).collect();

        let mut mean = vec![0.0; d];
        let trials = 20;
        for seed in 0..trials {
            let mut labels = base_labels.clone();
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
            labels.shuffle(&mut shuffle_rng);
            let ds = validate_dataset(pts.clone(), &labels).unwrap();
            let out = relieff_weights(
                &ds,
                &ReliefFConfig {
                    k_hits: 5,
                    iterations: SampleCount::All,
                    seed: 0,
                },
            )
            .unwrap();
            for (m, w) in mean.iter_mut().zip(out.raw.iter()) {
                *m += w / trials as f64;
            }
        }
        for w in mean {
            assert!(w.abs() < 0.05, "null weight mean {w}");
        }
    }

    #[test]
    fn tiny_instance_matches_step_trace() {
        // n=6, d=2, k=1, m=all: small enough to re-derive independently.
        let pts = array![
            [0.0, 0.0],
            [0.1, 1.0],
            [0.2, 0.3],
            [1.0, 0.9],
            [1.1, 0.2],
            [0.9, 0.6]
        ];
        let labels = vec![0i64, 0, 0, 1, 1, 1];
        let ds = validate_dataset(pts.clone(), &labels).unwrap();
        let config = ReliefFConfig {
            k_hits: 1,
            iterations: SampleCount::All,
            seed: 0,
        };
        let out = relieff_weights(&ds, &config).unwrap();

        // Independent step-by-step reference.
        let n = 6;
        let d = 2;
        let mut range = vec![0.0; d];
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| pts[[i, j]]).collect();
            range[j] = col.iter().cloned().fold(f64::MIN, f64::max)
                - col.iter().cloned().fold(f64::MAX, f64::min);
        }
        let diff = |j: usize, a: usize, b: usize| (pts[[a, j]] - pts[[b, j]]).abs() / range[j];
        let dist = |a: usize, b: usize| (0..d).map(|j| diff(j, a, b)).sum::<f64>();
        let mut expected = vec![0.0; d];
        for s in 0..n {
            let own = labels[s];
            // Nearest same-class (excluding self) and nearest other-class.
            let mut hit = None;
            let mut miss = None;
            for i in 0..n {
                if i == s {
                    continue;
                }
                let entry = (dist(s, i), i);
                if labels[i] == own {
                    if hit.map_or(true, |h| entry < h) {
                        hit = Some(entry);
                    }
                } else if miss.map_or(true, |m| entry < m) {
                    miss = Some(entry);
                }
            }
            let hit = hit.unwrap().1;
            let miss = miss.unwrap().1;
            // Both priors are 1/2, so the miss scale is (1/2)/(1/2) = 1.
            for j in 0..d {
                expected[j] += (diff(j, s, miss) - diff(j, s, hit)) / (n as f64 * 1.0);
            }
        }
        for j in 0..d {
            assert_abs_diff_eq!(out.raw[j], expected[j], epsilon = 1e-15);
        }
    }

    #[test]
    fn column_permutation_permutes_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40;
        let pts = Array2::from_shape_fn((n, 3), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
        let ds = validate_dataset(pts.clone(), &labels).unwrap();
        let config = ReliefFConfig {
            k_hits: 3,
            iterations: SampleCount::All,
            seed: 0,
        };
        let base = relieff_weights(&ds, &config).unwrap();

        // Swap columns 0 and 2.
        let mut permuted = pts.clone();
        for i in 0..n {
            permuted[[i, 0]] = pts[[i, 2]];
            permuted[[i, 2]] = pts[[i, 0]];
        }
        let ds2 = validate_dataset(permuted, &labels).unwrap();
        let swapped = relieff_weights(&ds2, &config).unwrap();
        assert_abs_diff_eq!(base.raw[0], swapped.raw[2], epsilon = 1e-14);
        assert_abs_diff_eq!(base.raw[2], swapped.raw[0], epsilon = 1e-14);
        assert_abs_diff_eq!(base.raw[1], swapped.raw[1], epsilon = 1e-14);
    }

    #[test]
    fn relabeling_leaves_weights_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let pts = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..1.0));
        let labels_a: Vec<i64> = (0..n).map(|i| (i % 3) as i64).collect();
        // Same partition, renamed class ids.
        let labels_b: Vec<i64> = labels_a.iter().map(|&l| [7, 2, 5][l as usize]).collect();
        let config = ReliefFConfig {
            k_hits: 2,
            iterations: SampleCount::All,
            seed: 0,
        };
        let a = relieff_weights(&validate_dataset(pts.clone(), &labels_a).unwrap(), &config)
            .unwrap();
        let b = relieff_weights(&validate_dataset(pts, &labels_b).unwrap(), &config).unwrap();
        for (x, y) in a.raw.iter().zip(b.raw.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn small_class_rejected() {
        let pts = array![[0.0], [1.0], [2.0], [3.0]];
        let ds = validate_dataset(pts, &[0, 0, 0, 1]).unwrap();
        let err = relieff_weights(&ds, &ReliefFConfig::default()).unwrap_err();
        assert!(matches!(err, EjopError::ClassTooSmall { .. }));
    }

    #[test]
    fn oversampling_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = Array2::from_shape_fn((10, 2), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<i64> = (0..10).map(|i| (i % 2) as i64).collect();
        let ds = validate_dataset(pts, &labels).unwrap();
        let config = ReliefFConfig {
            k_hits: 2,
            iterations: SampleCount::Count(11),
            seed: 0,
        };
        assert!(matches!(
            relieff_weights(&ds, &config),
            Err(EjopError::SampleTooLarge { .. })
        ));
    }
}
