//! Deterministic synthetic corpora with planted events and golden topics.
//!
//! Every term is a made-up consonant-vowel word that the preprocessor leaves
//! unchanged, so planted keywords survive cleanup verbatim. Event, chatter
//! and spam terms are reserved and never appear in background posts.
//!
//! Beyond events and background, a corpus may carry three kinds of noise:
//! chatter, a large recurring cluster of generic posts present in every
//! window; minor topics, many small conversations around shared background
//! terms; and spam, bursts of identical posts made of a few repeated tokens
//! that only appear after the training windows.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Preprocessor, RawPost};
use crate::error::{Error, Result};
use crate::eval::GoldenTopic;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub window_index: usize,
    pub n_keywords: usize,
    pub n_posts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatterConfig {
    pub posts_per_window: usize,
    pub core_terms: usize,
    pub extra_terms: usize,
}

/// Small conversations around a few shared background terms, in every window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorTopicConfig {
    pub per_window: usize,
    pub posts: (usize, usize),
    pub core_terms: usize,
    pub extra_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamConfig {
    pub posts_per_window: usize,
    pub distinct_terms: usize,
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub base_ms: i64,
    pub window_minutes: u32,
    pub window_count: usize,
    /// Leading windows without events or spam, used to train the autoencoder.
    pub train_windows: usize,
    /// Background vocabulary size.
    pub vocab_size: usize,
    /// Background posts across all windows, spread evenly.
    pub n_background: usize,
    pub background_terms: (usize, usize),
    pub event_background_terms: (usize, usize),
    /// Background terms each event draws its posts' extra terms from; 0
    /// samples from the whole background vocabulary.
    pub context_pool: usize,
    pub events: Vec<SynthEvent>,
    pub chatter: Option<ChatterConfig>,
    pub minor_topics: Option<MinorTopicConfig>,
    pub spam: Option<SpamConfig>,
    /// Adds capitals, punctuation, stopwords, hashtags and links to post text.
    pub surface_noise: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let events = (1..=4)
            .flat_map(|w| {
                [
                    SynthEvent {
                        window_index: w,
                        n_keywords: 3,
                        n_posts: 50,
                    },
                    SynthEvent {
                        window_index: w,
                        n_keywords: 3,
                        n_posts: 50,
                    },
                ]
            })
            .collect();
        Self {
            seed: 1,
            base_ms: 1_699_999_200_000,
            window_minutes: 10,
            window_count: 5,
            train_windows: 1,
            vocab_size: 300,
            n_background: 950,
            background_terms: (4, 10),
            event_background_terms: (2, 5),
            context_pool: 6,
            events,
            chatter: Some(ChatterConfig {
                posts_per_window: 45,
                core_terms: 8,
                extra_terms: 1,
            }),
            minor_topics: Some(MinorTopicConfig {
                per_window: 14,
                posts: (4, 6),
                core_terms: 4,
                extra_terms: 1,
            }),
            spam: Some(SpamConfig {
                posts_per_window: 20,
                distinct_terms: 2,
                repeat: 6,
            }),
            surface_noise: true,
        }
    }
}

impl SynthConfig {
    pub fn window_len_ms(&self) -> i64 {
        i64::from(self.window_minutes) * 60_000
    }

    /// End of the last training window.
    pub fn train_before_ms(&self) -> i64 {
        self.base_ms + self.train_windows as i64 * self.window_len_ms()
    }

    pub fn total_posts(&self) -> usize {
        let event_windows = self.window_count.saturating_sub(self.train_windows);
        self.n_background
            + self.events.iter().map(|e| e.n_posts).sum::<usize>()
            + self.chatter.as_ref().map_or(0, |c| c.posts_per_window * self.window_count)
            + self.minor_topic_sizes().iter().sum::<usize>() * self.window_count
            + self.spam.as_ref().map_or(0, |s| s.posts_per_window * event_windows)
    }

    /// Posts in each minor topic of a window; sizes cycle through the range.
    pub fn minor_topic_sizes(&self) -> Vec<usize> {
        match &self.minor_topics {
            Some(m) if m.posts.0 <= m.posts.1 => {
                let span = m.posts.1 - m.posts.0 + 1;
                (0..m.per_window).map(|j| m.posts.0 + j % span).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_minutes == 0 || self.window_count == 0 {
            return Err(Error::config("window_minutes and window_count must be positive"));
        }
        if self.train_windows > self.window_count {
            return Err(Error::config("train_windows exceeds window_count"));
        }
        for (name, (lo, hi)) in [
            ("background_terms", self.background_terms),
            ("event_background_terms", self.event_background_terms),
        ] {
            if lo > hi || hi > self.vocab_size {
                return Err(Error::config(format!(
                    "{name} range {lo}..={hi} does not fit a vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        if self.background_terms.0 == 0 {
            return Err(Error::config("background posts need at least one term"));
        }
        for e in &self.events {
            if e.window_index >= self.window_count {
                return Err(Error::config(format!("event window {} is out of range", e.window_index)));
            }
            if e.n_keywords == 0 {
                return Err(Error::config("events need at least one keyword"));
            }
        }
        if self.context_pool > 0 {
            if self.context_pool < self.event_background_terms.1 {
                return Err(Error::config("context_pool is smaller than event_background_terms"));
            }
            let busiest = (0..self.window_count)
                .map(|w| self.events.iter().filter(|e| e.window_index == w).count())
                .max()
                .unwrap_or(0);
            if busiest * self.context_pool > self.vocab_size {
                return Err(Error::config(format!(
                    "vocabulary of {} cannot hold {busiest} disjoint context pools of {}",
                    self.vocab_size, self.context_pool
                )));
            }
        }
        if let Some(c) = &self.chatter {
            if c.core_terms == 0 || c.extra_terms > self.vocab_size {
                return Err(Error::config("chatter needs core terms and extras within the vocabulary"));
            }
        }
        if let Some(m) = &self.minor_topics {
            if m.posts.0 > m.posts.1 || m.core_terms == 0 || m.core_terms + m.extra_terms > self.vocab_size {
                return Err(Error::config("minor topics need an ordered post range and terms within the vocabulary"));
            }
        }
        if let Some(s) = &self.spam {
            if s.distinct_terms == 0 || s.repeat == 0 {
                return Err(Error::config("spam needs at least one term repeated at least once"));
            }
        }
        Ok(())
    }
}

/// A generated corpus: posts sorted by timestamp and one golden topic per
/// planted event.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<RawPost>,
    pub goldens: Vec<GoldenTopic>,
    pub start_ms: i64,
    pub train_before_ms: i64,
    pub background_vocab: Vec<String>,
    pub reserved_vocab: Vec<String>,
}

struct WordSource {
    rng: ChaCha8Rng,
    pre: Preprocessor,
    seen: HashSet<String>,
}

impl WordSource {
    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(*CONSONANTS.choose(&mut self.rng).expect("non-empty") as char);
                w.push(*VOWELS.choose(&mut self.rng).expect("non-empty") as char);
            }
            if self.seen.contains(&w) || self.pre.is_stopword(&w) || self.pre.normalize_term(&w).as_deref() != Some(&w) {
                continue;
            }
            self.seen.insert(w.clone());
            return w;
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

struct Draft {
    timestamp_ms: i64,
    tokens: Vec<String>,
}

const NOISE_STOPWORDS: &[&str] = &["the", "at", "and", "is", "this", "so", "rt"];

fn surface(tokens: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(tokens.len() + 3);
    for (i, t) in tokens.iter().enumerate() {
        let mut t = t.clone();
        if i == 0 && rng.random_bool(0.3) {
            t[..1].make_ascii_uppercase();
        } else if rng.random_bool(0.05) {
            t.make_ascii_uppercase();
        }
        if rng.random_bool(0.1) {
            t.push(*[',', '!', '.', '?'].choose(rng).expect("non-empty"));
        }
        parts.push(t);
        if rng.random_bool(0.15) {
            parts.push(NOISE_STOPWORDS.choose(rng).expect("non-empty").to_string());
        }
    }
    if rng.random_bool(0.2) {
        parts.push(format!("#{}", tokens[0]));
    }
    if rng.random_bool(0.1) {
        parts.push(format!("https://t.co/{:08x}", rng.random::<u32>()));
    }
    parts.join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut words = WordSource {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        pre: Preprocessor::default(),
        seen: HashSet::new(),
    };
    let background = words.words(cfg.vocab_size);
    let event_keywords: Vec<Vec<String>> = cfg.events.iter().map(|e| words.words(e.n_keywords)).collect();
    let chatter_core = cfg.chatter.as_ref().map(|c| words.words(c.core_terms)).unwrap_or_default();
    let spam_terms: Vec<Vec<String>> = (0..cfg.window_count)
        .map(|w| match &cfg.spam {
            Some(s) if w >= cfg.train_windows => words.words(s.distinct_terms),
            _ => Vec::new(),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0fc0_ffee);
    let len = cfg.window_len_ms();
    let stamp = |rng: &mut ChaCha8Rng, w: usize| cfg.base_ms + w as i64 * len + rng.random_range(0..len);
    let mut drafts: Vec<Draft> = Vec::with_capacity(cfg.total_posts());

    let per_window = cfg.n_background / cfg.window_count;
    let remainder = cfg.n_background % cfg.window_count;
    for w in 0..cfg.window_count {
        let n = per_window + usize::from(w < remainder);
        for _ in 0..n {
            let k = rng.random_range(cfg.background_terms.0..=cfg.background_terms.1);
            let tokens = background.choose_multiple(&mut rng, k).cloned().collect();
            drafts.push(Draft {
                timestamp_ms: stamp(&mut rng, w),
                tokens,
            });
        }
    }

    let mut goldens = Vec::with_capacity(cfg.events.len());
    let mut pools_used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.window_count];
    for (event, keywords) in cfg.events.iter().zip(&event_keywords) {
        let pool: Vec<&String> = if cfg.context_pool > 0 {
            let used = &mut pools_used[event.window_index];
            let free: Vec<usize> = (0..background.len()).filter(|i| !used.contains(i)).collect();
            let picked: Vec<usize> = free.choose_multiple(&mut rng, cfg.context_pool).copied().collect();
            used.extend(picked.iter().copied());
            picked.iter().map(|&i| &background[i]).collect()
        } else {
            background.iter().collect()
        };
        for _ in 0..event.n_posts {
            let b = rng.random_range(cfg.event_background_terms.0..=cfg.event_background_terms.1);
            let mut tokens: Vec<String> = keywords.clone();
            tokens.extend(pool.choose_multiple(&mut rng, b).map(|t| (*t).clone()));
            tokens.shuffle(&mut rng);
            drafts.push(Draft {
                timestamp_ms: stamp(&mut rng, event.window_index),
                tokens,
            });
        }
        goldens.push(GoldenTopic {
            window_id: event.window_index,
            mandatory: keywords.iter().cloned().collect(),
            optional: if cfg.context_pool > 0 {
                pool.iter().map(|t| (*t).clone()).collect()
            } else {
                BTreeSet::new()
            },
            forbidden: BTreeSet::new(),
        });
    }

    if let Some(c) = &cfg.chatter {
        for w in 0..cfg.window_count {
            for _ in 0..c.posts_per_window {
                let mut tokens = chatter_core.clone();
                tokens.extend(background.choose_multiple(&mut rng, c.extra_terms).cloned());
                tokens.shuffle(&mut rng);
                drafts.push(Draft {
                    timestamp_ms: stamp(&mut rng, w),
                    tokens,
                });
            }
        }
    }

    let sizes = cfg.minor_topic_sizes();
    if let Some(m) = &cfg.minor_topics {
        for w in 0..cfg.window_count {
            for &n in &sizes {
                let core: Vec<&String> = background.choose_multiple(&mut rng, m.core_terms).collect();
                let rest: Vec<&String> = background.iter().filter(|t| !core.contains(t)).collect();
                for _ in 0..n {
                    let mut tokens: Vec<String> = core.iter().map(|t| (*t).clone()).collect();
                    tokens.extend(rest.choose_multiple(&mut rng, m.extra_terms).map(|t| (*t).clone()));
                    tokens.shuffle(&mut rng);
                    drafts.push(Draft {
                        timestamp_ms: stamp(&mut rng, w),
                        tokens,
                    });
                }
            }
        }
    }

    if let Some(s) = &cfg.spam {
        for (w, terms) in spam_terms.iter().enumerate().skip(cfg.train_windows) {
            for _ in 0..s.posts_per_window {
                let mut tokens: Vec<String> = terms.iter().flat_map(|t| std::iter::repeat_n(t.clone(), s.repeat)).collect();
                tokens.shuffle(&mut rng);
                drafts.push(Draft {
                    timestamp_ms: stamp(&mut rng, w),
                    tokens,
                });
            }
        }
    }

    // stable sort keeps generation order among equal timestamps
    drafts.sort_by_key(|d| d.timestamp_ms);
    let width = drafts.len().max(1).to_string().len();
    let posts = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| RawPost {
            id: format!("p{i:0width$}"),
            timestamp_ms: d.timestamp_ms,
            text: if cfg.surface_noise {
                surface(&d.tokens, &mut rng)
            } else {
                d.tokens.join(" ")
            },
        })
        .collect();

    let mut reserved: Vec<String> = event_keywords.into_iter().flatten().collect();
    reserved.extend(chatter_core);
    reserved.extend(spam_terms.into_iter().flatten());
    Ok(SynthCorpus {
        posts,
        goldens,
        start_ms: cfg.base_ms,
        train_before_ms: cfg.train_before_ms(),
        background_vocab: background,
        reserved_vocab: reserved,
    })
}
