//! Semantic pruning of clusters by embedding similarity to their centroid.

use std::collections::HashMap;

use crate::embed::cosine;
use crate::error::{Error, Result};

/// Clusters whose size is below this are discarded.
pub const MIN_CLUSTER_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedCluster {
    pub id: usize,
    pub member_ids: Vec<String>,
    /// Mean embedding of the cluster members before pruning.
    pub emb_centroid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PruneOutcome {
    Kept(PrunedCluster),
    Discarded,
}

/// Which member count the minimum-size rule looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SizeRule {
    /// Size of the cluster as it came out of clustering.
    #[default]
    Source,
    /// Number of members left after pruning.
    Survivors,
}

/// Arithmetic mean of equal-length vectors.
pub fn centroid<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::config("centroid of an empty set"))?
        .as_ref();
    let mut mean = vec![0.0; first.len()];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: v.len(),
            });
        }
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Keeps members with `cosine(mean, member) > theta_sd / 100`.
///
/// The cluster is discarded when the size selected by `rule` is below
/// [`MIN_CLUSTER_SIZE`], or when no member survives.
pub fn prune_cluster(
    id: usize,
    member_ids: &[String],
    embeddings: &HashMap<String, Vec<f64>>,
    theta_sd: f64,
    rule: SizeRule,
) -> Result<PruneOutcome> {
    let vectors = member_ids
        .iter()
        .map(|m| {
            embeddings
                .get(m)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::MissingEmbedding(m.clone()))
        })
        .collect::<Result<Vec<&[f64]>>>()?;
    if vectors.is_empty() {
        return Ok(PruneOutcome::Discarded);
    }
    let mu = centroid(&vectors)?;
    let threshold = theta_sd / 100.0;
    let survivors: Vec<String> = member_ids
        .iter()
        .zip(&vectors)
        .filter(|(_, v)| cosine(&mu, v) > threshold)
        .map(|(m, _)| m.clone())
        .collect();
    let size = match rule {
        SizeRule::Source => member_ids.len(),
        SizeRule::Survivors => survivors.len(),
    };
    if size < MIN_CLUSTER_SIZE || survivors.is_empty() {
        return Ok(PruneOutcome::Discarded);
    }
    Ok(PruneOutcome::Kept(PrunedCluster {
        id,
        member_ids: survivors,
        emb_centroid: mu,
    }))
}
