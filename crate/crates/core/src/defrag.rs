//! Cluster defragmentation: k-means over cluster embedding centroids, then
//! union of clusters whose centroids share a k-means assignment.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoise::{centroid, PrunedCluster};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step, in order.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; points.len()];
    let first = rng.random_range(0..points.len());
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("some positive weight")
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..points.len()).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    centers
}

/// Nearest center for every point (ties to the lower index) and the total cost.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Stops when assignments stop changing or after `max_iter` assignment
/// steps. A center left without points is moved onto the point farthest
/// from its current center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::config("k-means needs at least one point"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::config(format!("k = {k} is invalid for {} points", points.len())));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let max_iter = max_iter.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        let (next, dists) = assign(points, &centers);
        let inertia: f64 = dists.iter().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                inertia <= prev + 1e-9 * prev.max(1.0),
                "inertia rose from {prev} to {inertia}"
            );
        }
        trace.push(inertia);
        iterations += 1;
        let converged = next == assignments;
        assignments = next;
        if converged || iterations >= max_iter {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        let mut dists = dists;
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centers[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its (pre-update) center; ties to the lowest index
                let far = dists
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &d)| if d > dists[best] { i } else { best });
                centers[c] = points[far].clone();
                dists[far] = 0.0;
            }
        }
    }

    Ok(KMeansResult {
        assignments,
        centers,
        inertia: *trace.last().expect("at least one step"),
        inertia_trace: trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedCluster {
    /// Smallest id among the merged sources.
    pub id: usize,
    pub member_ids: Vec<String>,
    pub source_ids: Vec<usize>,
    /// Mean embedding over all members.
    pub emb_centroid: Vec<f64>,
}

/// Merges pruned clusters whose embedding centroids fall in the same
/// k-means cluster. With `k_d` or fewer clusters nothing is merged.
pub fn defragment(
    clusters: &[PrunedCluster],
    k_d: usize,
    seed: u64,
    max_iter: usize,
    embeddings: &HashMap<String, Vec<f64>>,
) -> Result<Vec<MergedCluster>> {
    if k_d == 0 {
        return Err(Error::config("k_d must be positive"));
    }
    let groups: Vec<Vec<&PrunedCluster>> = if clusters.len() <= k_d {
        clusters.iter().map(|c| vec![c]).collect()
    } else {
        let points: Vec<Vec<f64>> = clusters.iter().map(|c| c.emb_centroid.clone()).collect();
        let km = kmeans(&points, k_d, seed, max_iter)?;
        let mut by_label: BTreeMap<usize, Vec<&PrunedCluster>> = BTreeMap::new();
        for (c, &label) in clusters.iter().zip(&km.assignments) {
            by_label.entry(label).or_default().push(c);
        }
        by_label.into_values().collect()
    };

    let mut merged = groups
        .into_iter()
        .map(|mut group| {
            group.sort_by_key(|c| c.id);
            let member_ids: Vec<String> = group.iter().flat_map(|c| c.member_ids.iter().cloned()).collect();
            let vectors = member_ids
                .iter()
                .map(|m| {
                    embeddings
                        .get(m)
                        .map(Vec::as_slice)
                        .ok_or_else(|| Error::MissingEmbedding(m.clone()))
                })
                .collect::<Result<Vec<&[f64]>>>()?;
            Ok(MergedCluster {
                id: group[0].id,
                source_ids: group.iter().map(|c| c.id).collect(),
                emb_centroid: centroid(&vectors)?,
                member_ids,
            })
        })
        .collect::<Result<Vec<MergedCluster>>>()?;
    merged.sort_by_key(|m| m.id);
    Ok(merged)
}
