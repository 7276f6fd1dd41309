//! Independent oracles shared by the module tests and the acceptance suite.
//! Each check panics on a mismatch and otherwise returns a short summary.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smm::autoenc::{dda_filter, init_params, loss_and_gradients, train, MlpParams, ScoredDoc, TrainConfig};
use smm::cluster::{build_vocab, incremental_cluster, tfidf, UNBOUNDED};
use smm::defrag::{kmeans, DEFAULT_MAX_ITER};
use smm::embed::stub_embed;
use smm::eval::{keyword_precision_top2, topic_recall_at_k, GoldenTopic};
use smm::rank::{
    cluster_score, cluster_word_score, filter_infrequent, keyword_budget, rank_by_size, rank_events, window_term_counts,
    RankInput, RankParams, WordNorm,
};

pub fn toks(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- autoencoder

/// Plain-loop forward pass: tanh on hidden layers, identity on the output.
pub fn naive_loss(p: &MlpParams, x: &[Vec<f64>]) -> f64 {
    let layers = p.weights.len();
    let mut total = 0.0;
    for row in x {
        let mut a = row.clone();
        for l in 0..layers {
            let w = &p.weights[l];
            let mut z = vec![0.0; w.ncols()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = p.biases[l][j] + (0..w.nrows()).map(|i| a[i] * w[[i, j]]).sum::<f64>();
            }
            a = if l + 1 < layers { z.iter().map(|v| v.tanh()).collect() } else { z };
        }
        total += a.iter().zip(row).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
    }
    total / x.len() as f64
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn gradient_check() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = {
        let mut p = init_params(&[6, 3, 6], 5).unwrap();
        // nonzero biases so their gradients are exercised away from the origin
        for b in p.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        p
    };
    let x: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let xm = Array2::from_shape_vec((5, 6), x.concat()).unwrap();
    let (loss, grads) = loss_and_gradients(&params, xm.view()).unwrap();
    assert!(rel_err(loss, naive_loss(&params, &x)) < 1e-12);

    let h = 1e-5;
    let fd = |plus: MlpParams, minus: MlpParams| (naive_loss(&plus, &x) - naive_loss(&minus, &x)) / (2.0 * h);
    let mut worst: f64 = 0.0;
    for l in 0..params.weights.len() {
        let cols = params.weights[l].ncols();
        for idx in 0..params.weights[l].len() {
            let (r, c) = (idx / cols, idx % cols);
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus.weights[l][[r, c]] += h;
            minus.weights[l][[r, c]] -= h;
            worst = worst.max(rel_err(grads.weights[l][[r, c]], fd(plus, minus)));
        }
        for j in 0..params.biases[l].len() {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus.biases[l][j] += h;
            minus.biases[l][j] -= h;
            worst = worst.max(rel_err(grads.biases[l][j], fd(plus, minus)));
        }
    }
    assert!(worst < 1e-4, "max relative gradient error {worst:e}");
    format!("max relative error {worst:.2e}")
}

pub fn training_halves_loss() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab: Vec<String> = (0..8).map(|i| format!("term{i}")).collect();
    let data: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let n = rng.random_range(2..5);
            let toks: Vec<&str> = (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            stub_embed(&toks, 32, 7).unwrap()
        })
        .collect();
    let params = init_params(&[32, 8, 32], 3).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let out = train(params, &data, &cfg).unwrap();
    let last = *out.epoch_losses.last().unwrap();
    assert!(last <= 0.5 * out.initial_loss, "loss {} -> {}", out.initial_loss, last);
    format!("loss {:.4} -> {:.4}", out.initial_loss, last)
}

/// Kept set by sorting on (error, id) and taking `theta * n / 100` in integers.
pub fn percentile_oracle(scored: &[ScoredDoc], theta: usize) -> Vec<String> {
    let mut idx: Vec<usize> = (0..scored.len()).collect();
    idx.sort_by(|&a, &b| {
        scored[a]
            .error
            .partial_cmp(&scored[b].error)
            .unwrap()
            .then(scored[a].doc_id.cmp(&scored[b].doc_id))
    });
    let keep = theta * scored.len() / 100;
    let mut ids: Vec<String> = idx[..keep].iter().map(|&i| scored[i].doc_id.clone()).collect();
    ids.sort();
    ids
}

pub fn dda_percentile_check() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut cases = 0;
    for n in 1..=1000usize {
        // coarse errors force ties
        let scored: Vec<ScoredDoc> = (0..n)
            .map(|i| ScoredDoc {
                doc_id: format!("d{:05}", (i * 7919) % 10007),
                error: f64::from(rng.random_range(0..50u32)) / 8.0,
            })
            .collect();
        for theta in [50usize, 80, 98, 100] {
            let kept: Vec<String> = dda_filter(&scored, theta as f64).unwrap().into_iter().collect();
            assert_eq!(kept.len(), theta * n / 100, "n = {n}, theta = {theta}");
            assert_eq!(kept, percentile_oracle(&scored, theta), "n = {n}, theta = {theta}");
            cases += 1;
        }
    }
    format!("{cases} cases")
}

// ------------------------------------------------------------------ clustering

/// Dense `count * ln(N / df)` vectors over the sorted term list, unit length.
pub fn dense_tfidf(docs: &[Vec<String>]) -> Vec<Vec<f64>> {
    let terms: Vec<&str> = {
        let mut t: Vec<&str> = docs.iter().flatten().map(String::as_str).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let n = docs.len() as f64;
    let df: Vec<f64> = terms
        .iter()
        .map(|t| docs.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64)
        .collect();
    docs.iter()
        .map(|d| {
            let mut v: Vec<f64> = terms
                .iter()
                .zip(&df)
                .map(|(t, df)| d.iter().filter(|x| x == t).count() as f64 * (n / df).ln())
                .collect();
            if v.iter().all(|&x| x == 0.0) {
                for (i, t) in terms.iter().enumerate() {
                    if d.iter().any(|x| x == t) {
                        v[i] = 1.0;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Scans the `limit` most recently updated clusters (all of them when the
/// limit is large). Similarities within `eps` of the best count as tied and
/// go to the lowest cluster id. Returns `None` when a best similarity lands
/// within `eps` of the threshold, where rounding could legitimately differ.
pub fn brute_force_clusters(vectors: &[Vec<f64>], threshold: f64, limit: usize, eps: f64) -> Option<Vec<Vec<usize>>> {
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut last: Vec<usize> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by_key(|&c| std::cmp::Reverse(last[c]));
        order.truncate(limit);
        let sims: Vec<(usize, f64)> = order.iter().map(|&c| (c, cos(v, &sums[c]))).collect();
        let top = sims.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        if (top - threshold).abs() < eps {
            return None;
        }
        let pick = sims.iter().filter(|s| top - s.1 < eps).map(|s| s.0).min();
        match pick {
            Some(c) if top >= threshold => {
                members[c].push(i);
                sums[c].iter_mut().zip(v).for_each(|(a, b)| *a += b);
                last[c] = i;
            }
            _ => {
                members.push(vec![i]);
                sums.push(v.clone());
                last.push(i);
            }
        }
    }
    Some(members)
}

/// Posts drawn mostly from one of eight small topics, plus shared filler.
pub fn random_window(rng: &mut ChaCha8Rng, n_docs: usize) -> Vec<Vec<String>> {
    let topics: Vec<Vec<String>> = (0..8)
        .map(|t| (0..5).map(|j| format!("t{t}w{j}")).collect())
        .collect();
    (0..n_docs)
        .map(|_| {
            let topic = &topics[rng.random_range(0..topics.len())];
            let len = rng.random_range(2..7);
            (0..len)
                .map(|_| {
                    if rng.random_bool(0.75) {
                        topic[rng.random_range(0..topic.len())].clone()
                    } else {
                        format!("bg{}", rng.random_range(0..40))
                    }
                })
                .collect()
        })
        .collect()
}

/// Compares against the brute-force scan for each `(theta, limit)` setting
/// on 50 random 200-document windows.
pub fn incremental_cluster_check(settings: &[(f64, usize)]) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut skipped = 0;
    for instance in 0..50 {
        let docs = random_window(&mut rng, 200);
        let vocab = build_vocab(&docs);
        let sparse: Vec<_> = docs.iter().map(|d| tfidf(d, &vocab).unwrap()).collect();
        let dense = dense_tfidf(&docs);
        for &(theta, limit) in settings {
            let Some(expected) = brute_force_clusters(&dense, theta / 100.0, limit, 1e-9) else {
                skipped += 1;
                continue;
            };
            let got: Vec<Vec<usize>> = incremental_cluster(&sparse, theta, limit)
                .unwrap()
                .into_iter()
                .map(|c| c.members)
                .collect();
            assert_eq!(got, expected, "instance {instance}, theta {theta}, limit {limit}");
            checked += 1;
        }
    }
    assert!(skipped * 20 <= checked, "{skipped} of {} runs were too close to call", checked + skipped);
    if skipped == 0 {
        format!("{checked} partitions identical")
    } else {
        format!("{checked} partitions identical, {skipped} runs at the threshold skipped")
    }
}

pub fn incremental_cluster_unbounded_check() -> String {
    incremental_cluster_check(&[(70.0, UNBOUNDED), (40.0, UNBOUNDED)])
}

// --------------------------------------------------------------------- k-means

pub type Partition = BTreeSet<BTreeSet<usize>>;

pub fn sse(points: &[Vec<f64>], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| {
            let dim = points[0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|d| g.iter().map(|&i| points[i][d]).sum::<f64>() / g.len() as f64)
                .collect();
            g.iter()
                .map(|&i| points[i].iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
                .sum::<f64>()
        })
        .sum()
}

/// All partitions of `0..n` into exactly `k` non-empty blocks, via
/// restricted growth strings.
pub fn partitions(n: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, k: usize, labels: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            if used == k {
                let mut groups = vec![Vec::new(); k];
                for (p, &l) in labels.iter().enumerate() {
                    groups[l].push(p);
                }
                out.push(groups);
            }
            return;
        }
        for l in 0..=used.min(k - 1) {
            labels.push(l);
            rec(i + 1, n, k, labels, used.max(l + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), 0, &mut out);
    out
}

fn as_partition(groups: &[Vec<usize>]) -> Partition {
    groups.iter().map(|g| g.iter().copied().collect()).collect()
}

/// Unique minimum-inertia partition; panics if the optimum is tied.
pub fn optimal_partition(points: &[Vec<f64>], k: usize) -> (Partition, f64) {
    let mut scored: Vec<(f64, Vec<Vec<usize>>)> = partitions(points.len(), k)
        .into_iter()
        .map(|g| (sse(points, &g), g))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    assert!(scored[1].0 - scored[0].0 > 1e-9, "fixture has a tied optimum");
    (as_partition(&scored[0].1), scored[0].0)
}

pub fn labels_to_partition(labels: &[usize]) -> Partition {
    let mut by: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by.entry(l).or_default().insert(i);
    }
    by.into_values().collect()
}

pub fn four_points() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]]
}

pub fn four_blobs() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0],
        vec![20.0, 0.5],
        vec![0.3, 0.2],
        vec![0.0, 20.0],
        vec![20.0, 20.0],
        vec![0.4, 19.6],
        vec![19.5, 0.0],
        vec![20.2, 19.9],
    ]
}

/// k-means from 20 seeds must land on the exhaustive optimum.
pub fn kmeans_recovers_optimum(points: &[Vec<f64>], k: usize) {
    let (best, cost) = optimal_partition(points, k);
    for seed in 0..20 {
        let r = kmeans(points, k, seed, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(labels_to_partition(&r.assignments), best, "seed {seed}");
        assert!((r.inertia - cost).abs() < 1e-9, "seed {seed}: inertia {} vs {cost}", r.inertia);
    }
}

pub fn kmeans_fixture_check() -> String {
    kmeans_recovers_optimum(&four_points(), 2);
    kmeans_recovers_optimum(&four_blobs(), 4);
    format!(
        "optimum unique among {} and {} partitions",
        partitions(4, 2).len(),
        partitions(8, 4).len()
    )
}

pub fn kmeans_inertia_check() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut steps = 0;
    for instance in 0..100 {
        let n = rng.random_range(5..60);
        let dim = rng.random_range(1..6);
        let k = rng.random_range(1..=n.min(8));
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let r = kmeans(&pts, k, instance, DEFAULT_MAX_ITER).unwrap();
        for w in r.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "instance {instance}: {} -> {}", w[0], w[1]);
        }
        steps += r.inertia_trace.len();
        let groups: Vec<Vec<usize>> = labels_to_partition(&r.assignments)
            .into_iter()
            .map(|g| g.into_iter().collect())
            .collect();
        // the group means cost no more than the centers the last step used
        assert!(sse(&pts, &groups) <= r.inertia + 1e-9);
    }
    format!("100 instances, {steps} assignment steps")
}

// --------------------------------------------------------------------- ranking

pub fn budget_check() -> String {
    let p = RankParams::default();
    assert_eq!((p.beta1, p.beta2, p.beta3), (3, 25, 3));
    let got: Vec<usize> = [1, 3, 6].iter().map(|&n| keyword_budget(n, &p)).collect();
    assert_eq!(got, [3, 28, 53]);
    for ws in [1.0, 2.5, 1e6] {
        assert_eq!(cluster_score(ws, 1).0, 0.0);
    }
    "budgets 3/28/53, singleton score 0".to_string()
}

/// Window of eight posts: three clusters plus one unclustered post.
///
/// counts: goal 4, ref 3, card 2, messi 2, cake 1, rain 1, tea 1 (T = 7)
/// A = {goal goal messi, goal messi, goal ref}: sum 4+4+2+4+2+4+3 = 23, 3 distinct
/// B = {ref card, ref card}: sum 10, 2 distinct
/// C = {rain}: sum 1, 1 distinct
/// theta_rp = 80 drops floor(5.6) = 5 terms: cake rain tea card messi
pub fn three_cluster_fixture() -> String {
    let a = [toks(&["goal", "goal", "messi"]), toks(&["goal", "messi"]), toks(&["goal", "ref"])];
    let b = [toks(&["ref", "card"]), toks(&["ref", "card"])];
    let c = [toks(&["rain"])];
    let loose = [toks(&["tea", "cake"])];
    let all: Vec<&[String]> = a.iter().chain(&b).chain(&c).chain(&loose).map(Vec::as_slice).collect();
    let counts = window_term_counts(&all);
    assert_eq!(counts.values().sum::<u64>(), 14);

    let da: Vec<&[String]> = a.iter().map(Vec::as_slice).collect();
    let db: Vec<&[String]> = b.iter().map(Vec::as_slice).collect();
    let dc: Vec<&[String]> = c.iter().map(Vec::as_slice).collect();
    assert_eq!(cluster_word_score(&da, &counts, WordNorm::Distinct), 23.0 / 3.0);
    assert_eq!(cluster_word_score(&da, &counts, WordNorm::Tokens), 23.0 / 7.0);
    assert_eq!(cluster_word_score(&db, &counts, WordNorm::Distinct), 5.0);

    let survivors: Vec<String> = filter_infrequent(&counts, 80.0).unwrap().into_iter().collect();
    assert_eq!(survivors, toks(&["goal", "ref"]));

    // ids deliberately out of score order
    let inputs = [
        RankInput { cluster_id: 4, docs: &dc },
        RankInput { cluster_id: 7, docs: &db },
        RankInput { cluster_id: 9, docs: &da },
    ];
    let got = rank_events(&inputs, &counts, &RankParams::default()).unwrap();
    let expected: [(usize, usize, f64, Vec<String>, usize); 3] = [
        (1, 9, (23.0f64 / 3.0).ln() * 3f64.ln(), toks(&["goal", "ref"]), 3),
        (2, 7, 5f64.ln() * 2f64.ln(), toks(&["ref"]), 2),
        (3, 4, 0.0, vec![], 1),
    ];
    assert_eq!(got.len(), 3);
    for (g, (rank, id, score, kw, size)) in got.iter().zip(&expected) {
        assert_eq!((g.rank, g.cluster_id, g.size, &g.keywords), (*rank, *id, *size, kw));
        assert!((g.score - score).abs() <= 1e-15 * score.abs(), "{} vs {score}", g.score);
    }

    // count_rp = 1 drops the cluster with no surviving terms
    let strict = RankParams {
        count_rp: 1,
        ..RankParams::default()
    };
    let got = rank_events(&inputs, &counts, &strict).unwrap();
    assert_eq!(got.iter().map(|e| e.cluster_id).collect::<Vec<_>>(), [9, 7]);

    // size ranking keeps every term and ignores scores
    let by_size = rank_by_size(&inputs, &counts, 3);
    assert_eq!(by_size.iter().map(|e| e.cluster_id).collect::<Vec<_>>(), [9, 7, 4]);
    assert_eq!(by_size[0].keywords, toks(&["goal", "ref", "messi"]));
    assert_eq!(by_size[1].keywords, toks(&["ref", "card"]));
    assert_eq!(by_size[2].keywords, toks(&["rain"]));
    "3-cluster window reproduced".to_string()
}

// ------------------------------------------------------------------ evaluation

pub fn topic(window_id: usize, mandatory: &[&str], optional: &[&str], forbidden: &[&str]) -> GoldenTopic {
    let set = |l: &[&str]| l.iter().map(|s| s.to_string()).collect();
    GoldenTopic {
        window_id,
        mandatory: set(mandatory),
        optional: set(optional),
        forbidden: set(forbidden),
    }
}

pub fn eval_fixture_check() -> String {
    let topics = [topic(1, &["goal", "messi"], &["barca"], &[]), topic(1, &["ref", "card"], &[], &[])];
    let events = [toks(&["goal", "messi", "barca"]), toks(&["weather", "rain"]), toks(&["ref", "card"])];
    assert_eq!(topic_recall_at_k(&events, &topics, 1), Some(0.5));
    assert_eq!(topic_recall_at_k(&events, &topics, 2), Some(0.5));
    assert_eq!(topic_recall_at_k(&events, &topics, 3), Some(1.0));

    let topics = [topic(1, &["goal"], &["messi"], &[])];
    let events = [toks(&["goal", "messi"]), toks(&["goal", "tea"]), toks(&["cake"])];
    assert_eq!(keyword_precision_top2(&events, &topics), Some(2.0 / 3.0));
    "recall@2 = 0.5, precision = 2/3".to_string()
}

pub fn eval_instance() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<GoldenTopic>)> {
    let term = (0..12u8).prop_map(|i| format!("w{i}"));
    let events = prop::collection::vec(prop::collection::vec(term.clone(), 0..6), 0..12);
    let topic = (
        prop::collection::btree_set(term.clone(), 1..3),
        prop::collection::btree_set(term.clone(), 0..3),
        prop::collection::btree_set(term, 0..2),
    )
        .prop_map(|(m, o, f)| GoldenTopic {
            window_id: 0,
            optional: o.difference(&m).cloned().collect(),
            forbidden: f.iter().filter(|t| !m.contains(*t) && !o.contains(*t)).cloned().collect(),
            mandatory: m,
        });
    (events, prop::collection::vec(topic, 1..5))
}

pub fn recall_monotone_check() -> String {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&eval_instance(), |(events, topics)| {
            let mut prev = 0.0;
            for k in 0..=events.len() + 1 {
                let r = topic_recall_at_k(&events, &topics, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= prev, "recall fell from {} to {} at k = {}", prev, r, k);
                prev = r;
            }
            Ok(())
        })
        .unwrap();
    "1000 random instances".to_string()
}
