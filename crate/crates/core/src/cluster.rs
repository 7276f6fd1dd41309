//! Per-window TF-IDF vectors and single-pass incremental clustering.
//!
//! Each document is compared against the centroids of the `ic_limit` most
//! recently updated clusters. It joins the most similar one when the cosine
//! similarity reaches the threshold, otherwise it opens a new cluster.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Term index and document frequencies for one window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    /// Number of documents containing `term`, 0 if unseen.
    pub fn df(&self, term: &str) -> usize {
        self.index_of(term).map_or(0, |i| self.df[i])
    }

    pub fn idf(&self, idx: usize) -> f64 {
        (self.n_docs as f64 / self.df[idx] as f64).ln()
    }
}

/// Counts, per term, the documents containing it. Term indices follow
/// lexicographic order.
pub fn build_vocab<S: AsRef<str>>(docs: &[Vec<S>]) -> Vocabulary {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen: Vec<&str> = Vec::new();
    for doc in docs {
        seen.clear();
        seen.extend(doc.iter().map(AsRef::as_ref));
        seen.sort_unstable();
        seen.dedup();
        for t in &seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Vocabulary {
        index,
        terms,
        df: df.into_values().collect(),
        n_docs: docs.len(),
    }
}

/// Sparse vector with strictly ascending indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds from pairs; sorts by index and sums duplicates.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, w) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => entries.push((i, w)),
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map_or(0.0, |p| self.entries[p].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut sum = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Copy scaled to unit length; the zero vector stays zero.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        SparseVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w / n)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SparseVector) {
        let mut merged = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                merged.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                merged.push(b[j]);
                j += 1;
            } else {
                merged.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
        self.entries = merged;
    }
}

/// Count times `ln(N / df)`, L2-normalized.
///
/// When every weight is zero (single-document windows, or documents made
/// only of terms present everywhere) the vector falls back to uniform weights
/// over the document's distinct terms so cosine stays defined.
pub fn tfidf<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> Result<SparseVector> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in doc {
        let t = t.as_ref();
        let idx = vocab.index_of(t).ok_or_else(|| Error::UnknownTerm(t.to_string()))?;
        *counts.entry(idx).or_default() += 1;
    }
    let raw: Vec<(usize, f64)> = counts
        .iter()
        .map(|(&idx, &c)| (idx, c as f64 * vocab.idf(idx)))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    if raw.is_empty() {
        let w = 1.0 / (counts.len() as f64).sqrt();
        return Ok(SparseVector {
            entries: counts.keys().map(|&i| (i, w)).collect(),
        });
    }
    Ok(SparseVector { entries: raw }.normalized())
}

/// Dot product of two unit vectors.
pub fn cosine_sparse(a: &SparseVector, b: &SparseVector) -> f64 {
    a.dot(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// Positions of member documents in the input order.
    pub members: Vec<usize>,
    /// Unnormalized sum of member vectors.
    pub tfidf_sum: SparseVector,
    pub last_update_seq: u64,
}

impl Cluster {
    /// `tfidf_sum / |members|`, normalized. Scaling cancels, so this is the
    /// normalized sum.
    pub fn centroid(&self) -> SparseVector {
        self.tfidf_sum.normalized()
    }
}

/// Candidate-set size for the incremental clusterer.
pub const UNBOUNDED: usize = usize::MAX;

/// Clusters `vectors` (already in timestamp order) in a single pass.
///
/// `theta_ic` is a percentage: a document joins its best candidate when the
/// cosine similarity is at least `theta_ic / 100`. Ties go to the lowest
/// cluster id. Only the `ic_limit` most recently updated clusters are
/// candidates.
pub fn incremental_cluster(vectors: &[SparseVector], theta_ic: f64, ic_limit: usize) -> Result<Vec<Cluster>> {
    if ic_limit == 0 {
        return Err(Error::config("ic_limit must be positive"));
    }
    if !theta_ic.is_finite() {
        return Err(Error::config("theta_ic must be finite"));
    }
    let threshold = theta_ic / 100.0;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut centroids: Vec<SparseVector> = Vec::new();
    // last_update_seq -> cluster id; iterating in reverse yields most recent first
    let mut recency: BTreeMap<u64, usize> = BTreeMap::new();

    for (seq, v) in vectors.iter().enumerate() {
        let seq = seq as u64;
        let mut best: Option<(usize, f64)> = None;
        for &cid in recency.values().rev().take(ic_limit) {
            let sim = cosine_sparse(v, &centroids[cid]);
            best = match best {
                Some((bid, bsim)) if bsim > sim || (bsim == sim && bid < cid) => Some((bid, bsim)),
                _ => Some((cid, sim)),
            };
        }
        match best {
            Some((cid, sim)) if sim >= threshold => {
                let c = &mut clusters[cid];
                recency.remove(&c.last_update_seq);
                c.members.push(seq as usize);
                c.tfidf_sum.add_assign(v);
                c.last_update_seq = seq;
                centroids[cid] = c.centroid();
                recency.insert(seq, cid);
            }
            _ => {
                let id = clusters.len();
                clusters.push(Cluster {
                    id,
                    members: vec![seq as usize],
                    tfidf_sum: v.clone(),
                    last_update_seq: seq,
                });
                centroids.push(v.normalized());
                recency.insert(seq, id);
            }
        }
    }
    Ok(clusters)
}
