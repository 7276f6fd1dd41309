//! Cluster scoring, infrequent-term elimination and keyword selection.
//!
//! A cluster's word score is the mean, over its distinct terms, of window
//! term counts summed across every token occurrence in the cluster. The
//! cluster score is `ln(word_score) * ln(size)`. Only the most frequent
//! `100 - theta_rp` percent of window terms may become keywords, and the
//! event at rank `n` receives `beta1 + beta2 * floor(n / beta3)` of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total occurrences of each term over a window's documents.
pub type WindowTermCounts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankParams {
    pub theta_rp: f64,
    pub count_rp: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub beta3: usize,
    #[serde(default)]
    pub word_norm: WordNorm,
}

impl Default for RankParams {
    fn default() -> Self {
        Self {
            theta_rp: 80.0,
            count_rp: 0,
            beta1: 3,
            beta2: 25,
            beta3: 3,
            word_norm: WordNorm::Distinct,
        }
    }
}

impl RankParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..100.0).contains(&self.theta_rp) {
            return Err(Error::config(format!("theta_rp must be in [0, 100), got {}", self.theta_rp)));
        }
        if self.beta3 == 0 {
            return Err(Error::config("beta3 must be at least 1"));
        }
        Ok(())
    }
}

/// What the word-score denominator counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordNorm {
    /// Distinct terms in the cluster.
    #[default]
    Distinct,
    /// Token occurrences in the cluster.
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEvent {
    pub rank: usize,
    pub cluster_id: usize,
    pub score: f64,
    pub keywords: Vec<String>,
    pub size: usize,
}

/// A cluster to be ranked: its id and the token lists of its members.
#[derive(Debug, Clone, Copy)]
pub struct RankInput<'a> {
    pub cluster_id: usize,
    pub docs: &'a [&'a [String]],
}

pub fn window_term_counts<S: AsRef<str>>(docs: &[&[S]]) -> WindowTermCounts {
    let mut counts = WindowTermCounts::new();
    for doc in docs {
        for t in doc.iter() {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
    }
    counts
}

pub fn cluster_word_score(docs: &[&[String]], counts: &WindowTermCounts, norm: WordNorm) -> f64 {
    let mut total = 0u64;
    let mut tokens = 0usize;
    let mut distinct: BTreeSet<&str> = BTreeSet::new();
    for doc in docs {
        for t in doc.iter() {
            total += counts.get(t).copied().unwrap_or(0);
            tokens += 1;
            distinct.insert(t);
        }
    }
    let m = match norm {
        WordNorm::Distinct => distinct.len(),
        WordNorm::Tokens => tokens,
    };
    if m == 0 {
        return 0.0;
    }
    total as f64 / m as f64
}

/// `ln(word_score) * ln(size)`; word scores below 1 are clamped to 1. The
/// second value reports whether clamping happened.
pub fn cluster_score(word_score: f64, cluster_size: usize) -> (f64, bool) {
    let clamped = word_score.is_nan() || word_score < 1.0;
    let ws = if clamped { 1.0 } else { word_score };
    let size = cluster_size.max(1) as f64;
    (ws.ln() * size.ln(), clamped)
}

/// Terms in the top `100 - theta_rp` percent by window count. Terms are
/// ordered by ascending count, ties by term, and the first
/// `floor(theta_rp/100 * T)` are dropped.
pub fn filter_infrequent(counts: &WindowTermCounts, theta_rp: f64) -> Result<BTreeSet<String>> {
    if !(0.0..100.0).contains(&theta_rp) {
        return Err(Error::config(format!("theta_rp must be in [0, 100), got {theta_rp}")));
    }
    let mut order: Vec<(&String, u64)> = counts.iter().map(|(t, &c)| (t, c)).collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let cut = ((theta_rp * order.len() as f64) / 100.0).floor() as usize;
    Ok(order[cut.min(order.len())..].iter().map(|(t, _)| (*t).clone()).collect())
}

pub fn keyword_budget(rank: usize, params: &RankParams) -> usize {
    params.beta1 + params.beta2 * (rank / params.beta3)
}

/// Distinct cluster terms ordered by window count (descending), ties by term.
fn terms_by_count<'a>(docs: &[&'a [String]], counts: &WindowTermCounts) -> Vec<&'a String> {
    let mut terms: Vec<&String> = docs.iter().flat_map(|d| d.iter()).collect();
    terms.sort_unstable();
    terms.dedup();
    terms.sort_by(|a, b| {
        let ca = counts.get(*a).copied().unwrap_or(0);
        let cb = counts.get(*b).copied().unwrap_or(0);
        cb.cmp(&ca).then_with(|| a.cmp(b))
    });
    terms
}

/// Scores, filters and ranks clusters, then picks each event's keywords.
pub fn rank_events(clusters: &[RankInput<'_>], counts: &WindowTermCounts, params: &RankParams) -> Result<Vec<RankedEvent>> {
    params.validate()?;
    let survivors = filter_infrequent(counts, params.theta_rp)?;
    let mut clamped = 0usize;
    let mut scored: Vec<(f64, &RankInput<'_>)> = clusters
        .iter()
        .map(|c| {
            let ws = cluster_word_score(c.docs, counts, params.word_norm);
            let (score, was_clamped) = cluster_score(ws, c.docs.len());
            clamped += usize::from(was_clamped);
            (score, c)
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} clusters had a word score below 1");
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cluster_id.cmp(&b.1.cluster_id)));

    let mut events = Vec::new();
    for (score, c) in scored {
        let terms: Vec<&String> = terms_by_count(c.docs, counts)
            .into_iter()
            .filter(|t| survivors.contains(*t))
            .collect();
        if terms.len() < params.count_rp {
            continue;
        }
        let rank = events.len() + 1;
        let budget = keyword_budget(rank, params);
        events.push(RankedEvent {
            rank,
            cluster_id: c.cluster_id,
            score,
            keywords: terms.into_iter().take(budget).cloned().collect(),
            size: c.docs.len(),
        });
    }
    Ok(events)
}

/// Ranker used when the ranking stage is ablated: clusters by size
/// (descending, ties by id), each with its `beta1` most frequent window terms.
pub fn rank_by_size(clusters: &[RankInput<'_>], counts: &WindowTermCounts, beta1: usize) -> Vec<RankedEvent> {
    let mut order: Vec<&RankInput<'_>> = clusters.iter().collect();
    order.sort_by(|a, b| b.docs.len().cmp(&a.docs.len()).then_with(|| a.cluster_id.cmp(&b.cluster_id)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedEvent {
            rank: i + 1,
            cluster_id: c.cluster_id,
            score: c.docs.len() as f64,
            keywords: terms_by_count(c.docs, counts).into_iter().take(beta1).cloned().collect(),
            size: c.docs.len(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn counts(pairs: &[(&str, u64)]) -> WindowTermCounts {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn term_counts() {
        let a = toks(&["a", "a", "b"]);
        let b = toks(&["b"]);
        assert_eq!(window_term_counts(&[&a[..], &b[..]]), counts(&[("a", 2), ("b", 2)]));
        assert!(window_term_counts::<String>(&[]).is_empty());
        let x = toks(&["x"]);
        assert_eq!(window_term_counts(&[&x[..]]), counts(&[("x", 1)]));
    }

    #[test]
    fn word_score_examples() {
        let a = toks(&["a"]);
        assert_eq!(cluster_word_score(&[&a], &counts(&[("a", 1)]), WordNorm::Distinct), 1.0);
        let d1 = toks(&["a", "b"]);
        let d2 = toks(&["a"]);
        let c = counts(&[("a", 5), ("b", 2)]);
        assert_eq!(cluster_word_score(&[&d1, &d2], &c, WordNorm::Distinct), 6.0);
        assert_eq!(cluster_word_score(&[&d1, &d2], &c, WordNorm::Tokens), 4.0);
        let doubled = counts(&[("a", 10), ("b", 4)]);
        assert_eq!(cluster_word_score(&[&d1, &d2], &doubled, WordNorm::Distinct), 12.0);
    }

    #[test]
    fn score_examples() {
        assert_eq!(cluster_score(50.0, 1).0, 0.0);
        assert_eq!(cluster_score(1.0, 40).0, 0.0);
        let (s, _) = cluster_score(std::f64::consts::E.powi(2), 4);
        assert!((s - 2.0 * 4f64.ln()).abs() < 1e-12);
        let (s, clamped) = cluster_score(0.5, 10);
        assert_eq!(s, 0.0);
        assert!(clamped);
        assert!(cluster_score(10.0, 5).0 > cluster_score(10.0, 2).0);
    }

    #[test]
    fn infrequent_filter() {
        let c: WindowTermCounts = (1..=10).map(|i| (format!("t{i:02}"), i as u64)).collect();
        let kept = filter_infrequent(&c, 80.0).unwrap();
        assert_eq!(kept.into_iter().collect::<Vec<_>>(), ["t09", "t10"]);
        assert_eq!(filter_infrequent(&c, 0.0).unwrap().len(), 10);
        let flat: WindowTermCounts = (0..7).map(|i| (format!("w{i}"), 3)).collect();
        let kept = filter_infrequent(&flat, 80.0).unwrap();
        // ceil(0.2 * 7) = 2, the lexicographically largest
        assert_eq!(kept.into_iter().collect::<Vec<_>>(), ["w5", "w6"]);
        assert!(filter_infrequent(&c, 100.0).is_err());
    }

    #[test]
    fn budgets() {
        let p = RankParams::default();
        assert_eq!(keyword_budget(1, &p), 3);
        assert_eq!(keyword_budget(3, &p), 28);
        assert_eq!(keyword_budget(6, &p), 53);
        assert_eq!(keyword_budget(100, &p), 828);
    }

    #[test]
    fn singleton_cluster_event() {
        let d = toks(&["a", "b", "c", "d"]);
        let docs = [&d[..]];
        let c = window_term_counts(&docs);
        let p = RankParams {
            theta_rp: 0.0,
            ..RankParams::default()
        };
        let ev = rank_events(&[RankInput { cluster_id: 0, docs: &docs }], &c, &p).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].score, 0.0);
        assert!(ev[0].keywords.len() <= 3);
    }

    #[test]
    fn larger_cluster_first_on_equal_word_score() {
        let d = toks(&["a", "b"]);
        let big: Vec<&[String]> = vec![&d[..]; 5];
        let small: Vec<&[String]> = vec![&d[..]; 2];
        let c = counts(&[("a", 7), ("b", 7)]);
        let p = RankParams {
            theta_rp: 0.0,
            ..RankParams::default()
        };
        let ev = rank_events(
            &[RankInput { cluster_id: 0, docs: &small }, RankInput { cluster_id: 1, docs: &big }],
            &c,
            &p,
        )
        .unwrap();
        assert_eq!(ev[0].cluster_id, 1);
        assert_eq!(ev[1].cluster_id, 0);
    }

    #[test]
    fn count_rp_drops_clusters_and_reranks() {
        let rare = toks(&["r1", "r2"]);
        let hot = toks(&["h1", "h2"]);
        let rare_docs: Vec<&[String]> = vec![&rare[..]; 4];
        let hot_docs: Vec<&[String]> = vec![&hot[..]; 2];
        // "rare" terms are below the frequency cut
        let c = counts(&[("r1", 1), ("r2", 1), ("h1", 9), ("h2", 9), ("x", 2)]);
        let p = RankParams {
            theta_rp: 50.0,
            count_rp: 1,
            ..RankParams::default()
        };
        let ev = rank_events(
            &[RankInput { cluster_id: 0, docs: &rare_docs }, RankInput { cluster_id: 1, docs: &hot_docs }],
            &c,
            &p,
        )
        .unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].rank, ev[0].cluster_id), (1, 1));
        assert_eq!(ev[0].keywords, ["h1", "h2"]);
    }

    #[test]
    fn size_ranker() {
        let d = toks(&["b", "a", "a"]);
        let three: Vec<&[String]> = vec![&d[..]; 3];
        let one: Vec<&[String]> = vec![&d[..]];
        let c = counts(&[("a", 6), ("b", 3)]);
        let ev = rank_by_size(&[RankInput { cluster_id: 4, docs: &one }, RankInput { cluster_id: 9, docs: &three }], &c, 1);
        assert_eq!(ev[0].cluster_id, 9);
        assert_eq!(ev[0].keywords, ["a"]);
        assert_eq!(ev[1].rank, 2);
    }
}
