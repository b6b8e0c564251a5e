//! K-means with k-means++ seeding on z-scored (eps_r, sigma) features.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// In the original (eps_r, sigma) units.
    pub centroids: Vec<(f64, f64)>,
    /// Within-cluster sum of squares (z-scored) of the winning restart, after
    /// seeding and after every Lloyd iteration.
    pub wcss: Vec<f64>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ restarts; the run with the lowest final WCSS wins.
pub const RESTARTS: u64 = 10;

/// Clusters `(eps_r, sigma)` samples into `k` groups. Deterministic per seed.
pub fn cluster_materials(samples: &[(f64, f64)], k: usize, seed: u64) -> Result<Clustering> {
    let n = samples.len();
    if k == 0 || k > n {
        return Err(Error::arg(format!("k = {k} must be in 1..={n}")));
    }
    if samples.iter().any(|s| !s.0.is_finite() || !s.1.is_finite()) {
        return Err(Error::arg("samples must be finite"));
    }
    let mean = |f: fn(&(f64, f64)) -> f64| samples.iter().map(f).sum::<f64>() / n as f64;
    let mu = (mean(|s| s.0), mean(|s| s.1));
    let sd = |f: fn(&(f64, f64)) -> f64, m: f64| {
        let v = (samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let scale = (sd(|s| s.0, mu.0), sd(|s| s.1, mu.1));
    let z: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| ((s.0 - mu.0) / scale.0, (s.1 - mu.1) / scale.1))
        .collect();

    let (labels, centroids, wcss) = (0..RESTARTS)
        .map(|i| lloyd(&z, k, &mut rng::stage_rng(seed, "omr.kmeans", i)))
        .fold(None, |best: Option<Run>, run| match best {
            Some(b) if b.2.last() <= run.2.last() => Some(b),
            _ => Some(run),
        })
        .expect("at least one restart");
    let centroids = centroids
        .iter()
        .map(|c| (c.0 * scale.0 + mu.0, c.1 * scale.1 + mu.1))
        .collect();
    Ok(Clustering { labels, centroids, wcss })
}

type Run = (Vec<usize>, Vec<(f64, f64)>, Vec<f64>);

/// One k-means++ seeding followed by Lloyd iterations on z-scored samples.
fn lloyd(z: &[(f64, f64)], k: usize, r: &mut rng::StageRng) -> Run {
    let n = z.len();
    let mut centroids = vec![z[r.gen_range(0..n)]];
    let mut d2: Vec<f64> = z.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            // rounding can land on a zero-weight point; take the farthest instead
            if d2[idx] == 0.0 {
                idx = (0..n).max_by(|&a, &b| d2[a].total_cmp(&d2[b])).expect("n > 0");
            }
            idx
        } else {
            // every point coincides with a centroid
            centroids.len() % n
        };
        centroids.push(z[pick]);
        for (i, p) in z.iter().enumerate() {
            d2[i] = d2[i].min(dist2(*p, z[pick]));
        }
    }

    let mut labels: Vec<usize> = z.iter().map(|p| nearest(*p, &centroids).0).collect();
    let wcss_of = |labels: &[usize], centroids: &[(f64, f64)]| -> f64 {
        z.iter().zip(labels).map(|(p, &l)| dist2(*p, centroids[l])).sum()
    };
    let mut wcss = vec![wcss_of(&labels, &centroids)];
    for _ in 0..300 {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, &l) in z.iter().zip(&labels) {
            sums[l].0 += p.0;
            sums[l].1 += p.1;
            sums[l].2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            // an emptied cluster keeps its centroid
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let next: Vec<usize> = z
            .iter()
            .zip(&labels)
            .map(|(p, &l)| {
                let (j, d) = nearest(*p, &centroids);
                // keep the current label on ties so the loop terminates
                if d < dist2(*p, centroids[l]) {
                    j
                } else {
                    l
                }
            })
            .collect();
        let changed = next != labels;
        labels = next;
        wcss.push(wcss_of(&labels, &centroids));
        if !changed {
            break;
        }
    }
    (labels, centroids, wcss)
}

/// Fraction of samples whose cluster's majority class matches their class.
pub fn cluster_purity(labels: &[usize], truth: &[usize]) -> f64 {
    if labels.is_empty() {
        return 1.0;
    }
    let mut counts = std::collections::BTreeMap::<(usize, usize), usize>::new();
    for (&l, &t) in labels.iter().zip(truth) {
        *counts.entry((l, t)).or_default() += 1;
    }
    let mut best = std::collections::BTreeMap::<usize, usize>::new();
    for ((l, _), c) in counts {
        let b = best.entry(l).or_default();
        *b = (*b).max(c);
    }
    best.values().sum::<usize>() as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_obvious_groups() {
        let s = [(1.0, 0.01), (1.1, 0.012), (5.0, 2.0), (5.2, 2.1)];
        for seed in 0..10 {
            let c = cluster_materials(&s, 2, seed).unwrap();
            assert_eq!(c.labels[0], c.labels[1]);
            assert_eq!(c.labels[2], c.labels[3]);
            assert_ne!(c.labels[0], c.labels[2]);
        }
    }

    #[test]
    fn identical_points_and_k_equals_n() {
        let c = cluster_materials(&[(3.0, 0.5); 5], 1, 0).unwrap();
        assert_eq!(c.centroids, vec![(3.0, 0.5)]);
        assert_eq!(*c.wcss.last().unwrap(), 0.0);

        let s = [(1.0, 0.0), (2.0, 1.0), (4.0, 0.3), (7.0, 2.0)];
        let c = cluster_materials(&s, 4, 9).unwrap();
        let mut l = c.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3]);
        assert!(c.wcss.last().unwrap().abs() < 1e-24);
        assert!(cluster_materials(&s, 5, 0).is_err());
        assert!(cluster_materials(&s, 0, 0).is_err());
    }

    #[test]
    fn purity_counts_majorities() {
        assert_eq!(cluster_purity(&[0, 0, 1, 1], &[2, 2, 5, 5]), 1.0);
        assert_eq!(cluster_purity(&[0, 0, 0, 1], &[1, 1, 2, 2]), 0.75);
    }

    proptest! {
        #[test]
        fn wcss_never_increases_and_is_seed_deterministic(
            pts in prop::collection::vec((0.0f64..10.0, 0.0f64..3.0), 3..40),
            k in 1usize..4,
            seed in 0u64..1000,
        ) {
            let a = cluster_materials(&pts, k.min(pts.len()), seed).unwrap();
            for w in a.wcss.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            let b = cluster_materials(&pts, k.min(pts.len()), seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
