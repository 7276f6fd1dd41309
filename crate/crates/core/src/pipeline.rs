//! End-to-end orchestration.
//!
//! Each window passes through the autoencoder filter, TF-IDF incremental
//! clustering, semantic pruning, defragmentation and ranking, in that order.
//! The autoencoder is fitted once, on documents stamped before
//! `train_before_ms`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autoenc::{self, MlpParams, TrainConfig};
use crate::cluster::{build_vocab, incremental_cluster, tfidf};
use crate::corpus::{aligned_start, window_split, CleanDoc, Preprocessor, RawPost, Window};
use crate::defrag::{defragment, DEFAULT_MAX_ITER};
use crate::denoise::{prune_cluster, PruneOutcome, SizeRule};
use crate::embed::{embed_table, EmbeddingProvider, FileEmbedder, ProviderKind, RemoteEmbedder, StubEmbedder, DEFAULT_DIM, DEFAULT_MAX_BATCH};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, EventRecord, GoldenTopic};
use crate::rank::{rank_by_size, rank_events, window_term_counts, RankInput, RankParams, RankedEvent, WordNorm};

/// Hyperparameter columns of the reference configuration table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    FaCup,
    SuperTuesday,
    UsElection,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "facup" => Ok(Preset::FaCup),
            "supertuesday" => Ok(Preset::SuperTuesday),
            "uselection" => Ok(Preset::UsElection),
            other => Err(Error::config(format!("unknown preset {other:?}"))),
        }
    }
}

/// Which member count the pruning size rule looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeRuleName {
    #[default]
    Source,
    Survivors,
}

impl From<SizeRuleName> for SizeRule {
    fn from(r: SizeRuleName) -> Self {
        match r {
            SizeRuleName::Source => SizeRule::Source,
            SizeRuleName::Survivors => SizeRule::Survivors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub theta_dda: f64,
    pub theta_ic: f64,
    pub ic_limit: usize,
    pub theta_sd: f64,
    pub k_d: usize,
    pub theta_rp: f64,
    pub count_rp: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub beta3: usize,

    /// Not a reference value; no window length is given for any dataset.
    pub window_minutes: u32,
    /// First window start. Defaults to the earliest post, floored to a
    /// multiple of the window length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<i64>,
    /// Autoencoder training cutoff. Defaults to the end of the first window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_before_ms: Option<i64>,
    pub filter_training_period: bool,

    pub provider: ProviderKind,
    pub embedding_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote_url: Option<String>,
    pub remote_max_batch: usize,
    pub seed: u64,

    pub ae_hidden: Vec<usize>,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,
    /// Load autoencoder parameters from here instead of training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_checkpoint: Option<PathBuf>,

    pub size_rule: SizeRuleName,
    pub word_norm: WordNorm,
    pub kmeans_max_iter: usize,
    pub dda_enabled: bool,
    pub rp_enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopwords_path: Option<PathBuf>,
    pub eval_ks: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            theta_dda: 98.0,
            theta_ic: 70.0,
            ic_limit: 64,
            theta_sd: 85.0,
            k_d: 16,
            theta_rp: 80.0,
            count_rp: 0,
            beta1: 3,
            beta2: 25,
            beta3: 3,
            window_minutes: 10,
            start_ms: None,
            train_before_ms: None,
            filter_training_period: false,
            provider: ProviderKind::Stub,
            embedding_dim: DEFAULT_DIM,
            embeddings_path: None,
            remote_url: None,
            remote_max_batch: DEFAULT_MAX_BATCH,
            seed: 1,
            ae_hidden: vec![512, 256, 512],
            ae_epochs: 30,
            ae_batch_size: 32,
            ae_learning_rate: 0.05,
            ae_checkpoint: None,
            size_rule: SizeRuleName::Source,
            word_norm: WordNorm::Distinct,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            dda_enabled: true,
            rp_enabled: true,
            stopwords_path: None,
            eval_ks: (1..=10).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self::default();
        match p {
            Preset::FaCup => base,
            Preset::SuperTuesday | Preset::UsElection => Self {
                theta_ic: 95.0,
                k_d: 100,
                count_rp: 1,
                ..base
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn window_len_ms(&self) -> i64 {
        i64::from(self.window_minutes) * 60_000
    }

    pub fn rank_params(&self) -> RankParams {
        RankParams {
            theta_rp: self.theta_rp,
            count_rp: self.count_rp,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            word_norm: self.word_norm,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.ae_epochs,
            batch_size: self.ae_batch_size,
            learning_rate: self.ae_learning_rate,
            seed: self.seed,
        }
    }

    pub fn ae_dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.ae_hidden);
        dims.push(input);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let pct = |name: &str, v: f64| {
            if (0.0..=100.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be a percentage, got {v}")))
            }
        };
        pct("theta_ic", self.theta_ic)?;
        pct("theta_sd", self.theta_sd)?;
        if !(self.theta_dda > 0.0 && self.theta_dda <= 100.0) {
            return Err(Error::config(format!("theta_dda must be in (0, 100], got {}", self.theta_dda)));
        }
        self.rank_params().validate()?;
        if self.ic_limit == 0 || self.k_d == 0 {
            return Err(Error::config("ic_limit and k_d must be positive"));
        }
        if self.window_minutes == 0 {
            return Err(Error::config("window_minutes must be positive"));
        }
        if self.embedding_dim == 0 || self.remote_max_batch == 0 {
            return Err(Error::config("embedding_dim and remote_max_batch must be positive"));
        }
        if self.ae_hidden.contains(&0) {
            return Err(Error::config("autoencoder layer widths must be positive"));
        }
        self.train_config().validate()?;
        match self.provider {
            ProviderKind::File if self.embeddings_path.is_none() => {
                Err(Error::config("provider \"file\" needs embeddings_path"))
            }
            ProviderKind::Remote if self.remote_url.is_none() => Err(Error::config("provider \"remote\" needs remote_url")),
            _ => Ok(()),
        }
    }

    pub fn preprocessor(&self) -> Result<Preprocessor> {
        match &self.stopwords_path {
            Some(p) => Preprocessor::from_stopword_file(p),
            None => Ok(Preprocessor::default()),
        }
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self.provider {
            ProviderKind::Stub => Box::new(StubEmbedder::new(self.embedding_dim, self.seed)?),
            ProviderKind::File => {
                let path = self.embeddings_path.as_ref().ok_or_else(|| Error::config("embeddings_path is not set"))?;
                Box::new(FileEmbedder::open(path)?)
            }
            ProviderKind::Remote => {
                let url = self.remote_url.as_ref().ok_or_else(|| Error::config("remote_url is not set"))?;
                Box::new(RemoteEmbedder::connect(url, self.remote_max_batch)?)
            }
        })
    }
}

/// Cleaned documents split into windows, plus the resolved time bounds.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub windows: Vec<Window>,
    pub dropped: usize,
    pub start_ms: i64,
    pub train_before_ms: i64,
}

impl Prepared {
    pub fn docs(&self) -> impl Iterator<Item = &CleanDoc> {
        self.windows.iter().flat_map(|w| w.docs.iter())
    }

    pub fn training_docs(&self) -> impl Iterator<Item = &CleanDoc> {
        let cutoff = self.train_before_ms;
        self.docs().filter(move |d| d.timestamp_ms < cutoff)
    }
}

pub fn prepare(cfg: &PipelineConfig, posts: &[RawPost]) -> Result<Prepared> {
    let pre = cfg.preprocessor()?;
    let (docs, dropped) = pre.preprocess_all(posts);
    let len = cfg.window_len_ms();
    let start_ms = match cfg.start_ms {
        Some(s) => s,
        None => aligned_start(posts.iter().map(|p| p.timestamp_ms).min().unwrap_or(0), len),
    };
    let windows = window_split(docs, start_ms, len)?;
    Ok(Prepared {
        windows,
        dropped,
        start_ms,
        train_before_ms: cfg.train_before_ms.unwrap_or(start_ms + len),
    })
}

/// Document counts through the stages of one window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub docs: usize,
    pub after_dda: usize,
    pub clusters: usize,
    pub kept_clusters: usize,
    pub after_denoise: usize,
    pub merged_clusters: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub index: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub counts: StageCounts,
    pub events: Vec<RankedEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub n_docs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub windows: Vec<WindowResult>,
    pub dropped_posts: usize,
    pub training: Option<TrainSummary>,
    pub eval: Option<EvalReport>,
}

impl RunReport {
    pub fn event_records(&self) -> Vec<EventRecord> {
        self.windows
            .iter()
            .flat_map(|w| w.events.iter().map(|e| EventRecord::new(w.index, e)))
            .collect()
    }
}

fn stage<T>(window: usize, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        window,
        stage,
        source: Box::new(e),
    })
}

/// Trains on the documents before the cutoff, or loads the configured checkpoint.
pub fn fit_autoencoder(
    cfg: &PipelineConfig,
    prepared: &Prepared,
    embeddings: &HashMap<String, Vec<f64>>,
    dim: usize,
) -> Result<(MlpParams, Option<TrainSummary>)> {
    if let Some(path) = &cfg.ae_checkpoint {
        let params = autoenc::load_checkpoint(path)?;
        if params.input_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: params.input_dim(),
            });
        }
        return Ok((params, None));
    }
    let data: Vec<Vec<f64>> = prepared
        .training_docs()
        .map(|d| embeddings.get(&d.id).cloned().ok_or_else(|| Error::MissingEmbedding(d.id.clone())))
        .collect::<Result<_>>()?;
    if data.is_empty() {
        return Err(Error::config(format!(
            "no documents before train_before_ms = {} to fit the autoencoder",
            prepared.train_before_ms
        )));
    }
    let params = autoenc::init_params(&cfg.ae_dims(dim), cfg.seed)?;
    let outcome = autoenc::train(params, &data, &cfg.train_config())?;
    let summary = TrainSummary {
        n_docs: data.len(),
        initial_loss: outcome.initial_loss,
        final_loss: *outcome.epoch_losses.last().expect("at least one epoch"),
    };
    log::info!(
        "autoencoder: {} docs, loss {:.4} -> {:.4}",
        summary.n_docs,
        summary.initial_loss,
        summary.final_loss
    );
    Ok((outcome.params, Some(summary)))
}

/// Runs the five stages on one window.
pub fn process_window(
    cfg: &PipelineConfig,
    window: &Window,
    embeddings: &HashMap<String, Vec<f64>>,
    ae: Option<&MlpParams>,
    train_before_ms: i64,
) -> Result<WindowResult> {
    let w = window.index;
    let mut counts = StageCounts {
        docs: window.docs.len(),
        ..StageCounts::default()
    };

    let filter = ae.filter(|_| cfg.filter_training_period || window.end_ms > train_before_ms);
    let docs: Vec<&CleanDoc> = match filter {
        Some(params) => {
            let scored = stage(
                w,
                "dda",
                window
                    .docs
                    .iter()
                    .map(|d| {
                        embeddings
                            .get(&d.id)
                            .map(|v| (d.id.as_str(), v.as_slice()))
                            .ok_or_else(|| Error::MissingEmbedding(d.id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
                    .and_then(|pairs| autoenc::score_docs(params, pairs)),
            )?;
            let keep = stage(w, "dda", autoenc::dda_filter(&scored, cfg.theta_dda))?;
            window.docs.iter().filter(|d| keep.contains(&d.id)).collect()
        }
        None => window.docs.iter().collect(),
    };
    counts.after_dda = docs.len();

    let token_lists: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    let term_counts = window_term_counts(&token_lists);
    let vocab = build_vocab(&token_lists.iter().map(|t| t.to_vec()).collect::<Vec<_>>());
    let vectors = stage(w, "cluster", token_lists.iter().map(|t| tfidf(t, &vocab)).collect::<Result<Vec<_>>>())?;
    let clusters = stage(w, "cluster", incremental_cluster(&vectors, cfg.theta_ic, cfg.ic_limit))?;
    counts.clusters = clusters.len();

    let mut pruned = Vec::new();
    for c in &clusters {
        let ids: Vec<String> = c.members.iter().map(|&i| docs[i].id.clone()).collect();
        if let PruneOutcome::Kept(p) = stage(w, "denoise", prune_cluster(c.id, &ids, embeddings, cfg.theta_sd, cfg.size_rule.into()))? {
            pruned.push(p);
        }
    }
    counts.kept_clusters = pruned.len();
    counts.after_denoise = pruned.iter().map(|p| p.member_ids.len()).sum();

    let merged = stage(
        w,
        "defrag",
        defragment(&pruned, cfg.k_d, cfg.seed.wrapping_add(w as u64), cfg.kmeans_max_iter, embeddings),
    )?;
    counts.merged_clusters = merged.len();

    let by_id: HashMap<&str, &[String]> = docs.iter().map(|d| (d.id.as_str(), d.tokens.as_slice())).collect();
    let member_tokens: Vec<Vec<&[String]>> = merged
        .iter()
        .map(|m| m.member_ids.iter().map(|id| by_id[id.as_str()]).collect())
        .collect();
    let inputs: Vec<RankInput<'_>> = merged
        .iter()
        .zip(&member_tokens)
        .map(|(m, docs)| RankInput {
            cluster_id: m.id,
            docs,
        })
        .collect();
    let events = if cfg.rp_enabled {
        stage(w, "rank", rank_events(&inputs, &term_counts, &cfg.rank_params()))?
    } else {
        rank_by_size(&inputs, &term_counts, cfg.beta1)
    };
    counts.events = events.len();
    log::debug!("window {w}: {counts:?}");

    Ok(WindowResult {
        index: w,
        start_ms: window.start_ms,
        end_ms: window.end_ms,
        counts,
        events,
    })
}

/// Runs the pipeline with the provider named in `cfg`.
pub fn run(cfg: &PipelineConfig, posts: &[RawPost], goldens: Option<&[GoldenTopic]>) -> Result<RunReport> {
    let provider = cfg.provider()?;
    run_with_provider(cfg, posts, goldens, provider.as_ref())
}

pub fn run_with_provider(
    cfg: &PipelineConfig,
    posts: &[RawPost],
    goldens: Option<&[GoldenTopic]>,
    provider: &dyn EmbeddingProvider,
) -> Result<RunReport> {
    cfg.validate()?;
    let prepared = prepare(cfg, posts)?;
    let all_docs: Vec<CleanDoc> = prepared.docs().cloned().collect();
    let embeddings = embed_table(provider, &all_docs)?;

    let (ae, training) = if cfg.dda_enabled && !all_docs.is_empty() {
        let (params, summary) = fit_autoencoder(cfg, &prepared, &embeddings, provider.dim())?;
        (Some(params), summary)
    } else {
        (None, None)
    };

    let windows = prepared
        .windows
        .iter()
        .map(|w| process_window(cfg, w, &embeddings, ae.as_ref(), prepared.train_before_ms))
        .collect::<Result<Vec<_>>>()?;

    let mut report = RunReport {
        windows,
        dropped_posts: prepared.dropped,
        training,
        eval: None,
    };
    if let Some(goldens) = goldens {
        let pre = cfg.preprocessor()?;
        let normalized: Vec<GoldenTopic> = goldens.iter().map(|g| g.normalized(&pre)).collect();
        report.eval = Some(evaluate(&report.event_records(), &normalized, &cfg.eval_ks));
    }
    Ok(report)
}
