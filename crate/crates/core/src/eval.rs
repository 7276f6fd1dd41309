//! Topic-recall and keyword-precision against golden topics.
//!
//! A golden topic is matched by an event whose keywords include every
//! mandatory term and no forbidden term. Recall@K is the share of a window's
//! topics matched by one of its top K events. Keyword precision pools the
//! distinct keywords of the two best events and counts those that appear
//! among the window's mandatory or optional terms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Preprocessor;
use crate::error::{Error, Result};
use crate::rank::RankedEvent;

/// Events that count toward keyword precision.
pub const PRECISION_TOP: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenTopic {
    pub window_id: usize,
    pub mandatory: BTreeSet<String>,
    #[serde(default)]
    pub optional: BTreeSet<String>,
    #[serde(default)]
    pub forbidden: BTreeSet<String>,
}

impl GoldenTopic {
    pub fn validate(&self) -> Result<()> {
        if self.mandatory.is_empty() {
            return Err(Error::config("golden topic has no mandatory keywords"));
        }
        let overlap = self
            .mandatory
            .intersection(&self.optional)
            .chain(self.mandatory.intersection(&self.forbidden))
            .chain(self.optional.intersection(&self.forbidden))
            .next();
        if let Some(term) = overlap {
            return Err(Error::config(format!("keyword {term:?} is in more than one set")));
        }
        Ok(())
    }

    /// Runs every keyword through the corpus cleanup and stemmer. Terms
    /// that clean to nothing are dropped.
    pub fn normalized(&self, pre: &Preprocessor) -> GoldenTopic {
        let norm = |set: &BTreeSet<String>| set.iter().filter_map(|t| pre.normalize_term(t)).collect();
        GoldenTopic {
            window_id: self.window_id,
            mandatory: norm(&self.mandatory),
            optional: norm(&self.optional),
            forbidden: norm(&self.forbidden),
        }
    }
}

/// One line of an event report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub window_index: usize,
    pub rank: usize,
    pub cluster_id: usize,
    pub score: f64,
    pub size: usize,
    /// Written as one space-separated string.
    #[serde(with = "space_joined")]
    pub keywords: Vec<String>,
}

mod space_joined {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[String], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.join(" "))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
        Ok(String::deserialize(d)?.split_whitespace().map(str::to_string).collect())
    }
}

impl EventRecord {
    pub fn new(window_index: usize, ev: &RankedEvent) -> Self {
        Self {
            window_index,
            rank: ev.rank,
            cluster_id: ev.cluster_id,
            score: ev.score,
            size: ev.size,
            keywords: ev.keywords.clone(),
        }
    }
}

pub fn topic_matches<S: AsRef<str>>(event_keywords: &[S], topic: &GoldenTopic) -> bool {
    let kw: BTreeSet<&str> = event_keywords.iter().map(AsRef::as_ref).collect();
    topic.mandatory.iter().all(|t| kw.contains(t.as_str())) && !topic.forbidden.iter().any(|t| kw.contains(t.as_str()))
}

/// Share of `topics` matched by at least one of the first `k` events.
/// `None` when there are no topics.
pub fn topic_recall_at_k<S: AsRef<str>>(events: &[Vec<S>], topics: &[GoldenTopic], k: usize) -> Option<f64> {
    if topics.is_empty() {
        return None;
    }
    let top = &events[..k.min(events.len())];
    let matched = topics.iter().filter(|t| top.iter().any(|e| topic_matches(e, t))).count();
    Some(matched as f64 / topics.len() as f64)
}

/// Precision of the pooled distinct keywords of the top two events. `None`
/// when there are no topics or no keywords.
pub fn keyword_precision_top2<S: AsRef<str>>(events: &[Vec<S>], topics: &[GoldenTopic]) -> Option<f64> {
    if topics.is_empty() {
        return None;
    }
    let extracted: BTreeSet<&str> = events
        .iter()
        .take(PRECISION_TOP)
        .flat_map(|e| e.iter().map(AsRef::as_ref))
        .collect();
    if extracted.is_empty() {
        return None;
    }
    let golden: BTreeSet<&str> = topics
        .iter()
        .flat_map(|t| t.mandatory.iter().chain(&t.optional))
        .map(String::as_str)
        .collect();
    let hits = extracted.iter().filter(|k| golden.contains(*k)).count();
    Some(hits as f64 / extracted.len() as f64)
}

/// Mean of the defined values; `None` when there are none.
pub fn mean_defined<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEval {
    pub window_index: usize,
    pub n_topics: usize,
    pub n_events: usize,
    /// Recall at each K of [`EvalReport::ks`].
    pub recall: Vec<Option<f64>>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub recall: Vec<Option<f64>>,
    pub precision: Option<f64>,
    pub windows: Vec<WindowEval>,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).and_then(|i| self.recall[i])
    }
}

pub fn evaluate_window<S: AsRef<str>>(window_index: usize, events: &[Vec<S>], topics: &[GoldenTopic], ks: &[usize]) -> WindowEval {
    WindowEval {
        window_index,
        n_topics: topics.len(),
        n_events: events.len(),
        recall: ks.iter().map(|&k| topic_recall_at_k(events, topics, k)).collect(),
        precision: keyword_precision_top2(events, topics),
    }
}

pub fn aggregate(ks: &[usize], windows: Vec<WindowEval>) -> EvalReport {
    let recall = (0..ks.len()).map(|i| mean_defined(windows.iter().map(|w| w.recall[i]))).collect();
    EvalReport {
        ks: ks.to_vec(),
        recall,
        precision: mean_defined(windows.iter().map(|w| w.precision)),
        windows,
    }
}

/// Evaluates every window that has golden topics or events. Events are
/// ordered by rank within each window; topics must already be normalized.
pub fn evaluate(events: &[EventRecord], topics: &[GoldenTopic], ks: &[usize]) -> EvalReport {
    let mut ev_by_window: BTreeMap<usize, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        ev_by_window.entry(e.window_index).or_default().push(e);
    }
    let mut topics_by_window: BTreeMap<usize, Vec<GoldenTopic>> = BTreeMap::new();
    for t in topics {
        topics_by_window.entry(t.window_id).or_default().push(t.clone());
    }
    let indices: BTreeSet<usize> = ev_by_window.keys().chain(topics_by_window.keys()).copied().collect();
    let windows = indices
        .into_iter()
        .map(|w| {
            let mut evs = ev_by_window.remove(&w).unwrap_or_default();
            evs.sort_by_key(|e| e.rank);
            let kws: Vec<Vec<String>> = evs.into_iter().map(|e| e.keywords.clone()).collect();
            let ts = topics_by_window.remove(&w).unwrap_or_default();
            evaluate_window(w, &kws, &ts, ks)
        })
        .collect();
    aggregate(ks, windows)
}

pub fn parse_goldens<R: BufRead>(reader: R) -> Result<Vec<GoldenTopic>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let topic: GoldenTopic = serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
        topic.validate().map_err(|e| Error::format(i + 1, e.to_string()))?;
        out.push(topic);
    }
    Ok(out)
}

pub fn read_goldens(path: &Path) -> Result<Vec<GoldenTopic>> {
    let file = std::fs::File::open(path).map_err(Error::at_path(path))?;
    parse_goldens(std::io::BufReader::new(file))
}

pub fn write_goldens<W: Write>(topics: &[GoldenTopic], mut w: W) -> Result<()> {
    for t in topics {
        serde_json::to_writer(&mut w, t).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(Error::at_path(path))?;
    parse_events(std::io::BufReader::new(file))
}

pub fn write_events<W: Write>(events: &[EventRecord], mut w: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportLine<'a> {
    scope: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    window_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_topics: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_events: Option<usize>,
    recall: BTreeMap<String, Option<f64>>,
    precision: Option<f64>,
}

fn recall_map(ks: &[usize], values: &[Option<f64>]) -> BTreeMap<String, Option<f64>> {
    ks.iter().zip(values).map(|(k, v)| (format!("@{k:02}"), *v)).collect()
}

/// One record per window followed by a `mean` record.
pub fn write_report_jsonl<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    let lines = report
        .windows
        .iter()
        .map(|win| ReportLine {
            scope: "window",
            window_index: Some(win.window_index),
            n_topics: Some(win.n_topics),
            n_events: Some(win.n_events),
            recall: recall_map(&report.ks, &win.recall),
            precision: win.precision,
        })
        .chain(std::iter::once(ReportLine {
            scope: "mean",
            window_index: None,
            n_topics: None,
            n_events: None,
            recall: recall_map(&report.ks, &report.recall),
            precision: report.precision,
        }));
    for line in lines {
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn format_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:>7}{:>7}", "window", "topics", "events");
    for k in &report.ks {
        let _ = write!(out, "{:>7}", format!("R@{k}"));
    }
    let _ = writeln!(out, "{:>8}", "P@2");
    for w in &report.windows {
        let _ = write!(out, "{:<8}{:>7}{:>7}", w.window_index, w.n_topics, w.n_events);
        for r in &w.recall {
            let _ = write!(out, "{:>7}", cell(*r));
        }
        let _ = writeln!(out, "{:>8}", cell(w.precision));
    }
    let _ = write!(out, "{:<8}{:>7}{:>7}", "mean", "", "");
    for r in &report.recall {
        let _ = write!(out, "{:>7}", cell(*r));
    }
    let _ = writeln!(out, "{:>8}", cell(report.precision));
    out
}
