//! Post ingestion, token cleanup and time windowing.
//!
//! Raw posts arrive as line-delimited JSON records. Each post is reduced to a
//! list of lowercase stemmed terms; posts that end up with fewer than two
//! terms are dropped. The surviving documents are then bucketed into
//! half-open, fixed-length time windows.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Minimum number of terms a cleaned post must keep.
pub const MIN_TOKENS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub timestamp_ms: i64,
    pub text: String,
}

/// A post after cleanup: at least [`MIN_TOKENS`] terms, each made of `[a-z0-9-]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanDoc {
    pub id: String,
    pub timestamp_ms: i64,
    pub tokens: Vec<String>,
    /// Original text, kept for encoders that work on sentences.
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub docs: Vec<CleanDoc>,
}

/// Posts read from a record stream plus the number of lines that were rejected.
#[derive(Debug, Default)]
pub struct ParsedPosts {
    pub posts: Vec<RawPost>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct PostRecord {
    id: String,
    created_at: i64,
    text: String,
}

/// Serialized form of a post, as read by [`parse_posts`].
#[derive(Serialize)]
pub struct PostRecordRef<'a> {
    pub id: &'a str,
    pub created_at: i64,
    pub text: &'a str,
}

/// Reads one post per line. Blank lines are ignored; malformed lines are
/// counted in [`ParsedPosts::skipped`] and otherwise skipped.
pub fn parse_posts<R: BufRead>(reader: R) -> Result<ParsedPosts> {
    let mut out = ParsedPosts::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PostRecord>(&line) {
            Ok(rec) if !rec.id.is_empty() && rec.created_at >= 0 => out.posts.push(RawPost {
                id: rec.id,
                timestamp_ms: rec.created_at,
                text: rec.text,
            }),
            Ok(_) => {
                log::warn!("line {}: empty id or negative timestamp", lineno + 1);
                out.skipped += 1;
            }
            Err(e) => {
                log::warn!("line {}: {e}", lineno + 1);
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

pub fn read_posts(path: &Path) -> Result<ParsedPosts> {
    let file = std::fs::File::open(path).map_err(Error::at_path(path))?;
    parse_posts(std::io::BufReader::new(file))
}

pub fn write_posts<W: Write>(posts: &[RawPost], mut w: W) -> Result<()> {
    for p in posts {
        let rec = PostRecordRef {
            id: &p.id,
            created_at: p.timestamp_ms,
            text: &p.text,
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Outcome of cleaning a single post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preprocessed {
    Doc(CleanDoc),
    Dropped,
}

/// Applies the token cleanup steps in order: drop `#`/`@` tokens, drop URLs
/// and non-ASCII code points, strip special characters and lowercase, drop
/// stopwords, then stem.
pub struct Preprocessor {
    stopwords: HashSet<String>,
    stemmer: Stemmer,
}

impl fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preprocessor")
            .field("stopwords", &self.stopwords.len())
            .finish()
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::with_stopword_list(BUNDLED_STOPWORDS)
    }
}

impl Preprocessor {
    /// Builds a preprocessor from a newline-separated stopword list.
    pub fn with_stopword_list(list: &str) -> Self {
        let stopwords = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .filter_map(clean_token)
            .collect();
        Self {
            stopwords,
            stemmer: Stemmer::create(Algorithm::English),
        }
    }

    pub fn from_stopword_file(path: &Path) -> Result<Self> {
        let list = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        Ok(Self::with_stopword_list(&list))
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.contains(term)
    }

    pub fn stem(&self, term: &str) -> String {
        self.stemmer.stem(term).into_owned()
    }

    /// Cleans a single keyword the same way post tokens are cleaned, without
    /// stopword removal. Used to normalize golden keywords.
    pub fn normalize_term(&self, term: &str) -> Option<String> {
        if term.contains(['#', '@']) || is_url(term) {
            return None;
        }
        clean_token(term).map(|t| self.stem(&t))
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter(|tok| !tok.contains(['#', '@']))
            .filter(|tok| !is_url(tok))
            .filter_map(clean_token)
            .filter(|tok| !self.stopwords.contains(tok))
            .map(|tok| self.stem(&tok))
            .collect()
    }

    pub fn preprocess(&self, post: &RawPost) -> Preprocessed {
        let tokens = self.tokens(&post.text);
        if tokens.len() < MIN_TOKENS {
            return Preprocessed::Dropped;
        }
        Preprocessed::Doc(CleanDoc {
            id: post.id.clone(),
            timestamp_ms: post.timestamp_ms,
            tokens,
            raw_text: post.text.clone(),
        })
    }

    /// Cleans every post, returning the kept documents and the drop count.
    pub fn preprocess_all(&self, posts: &[RawPost]) -> (Vec<CleanDoc>, usize) {
        let mut dropped = 0;
        let mut docs = Vec::with_capacity(posts.len());
        for post in posts {
            match self.preprocess(post) {
                Preprocessed::Doc(doc) => docs.push(doc),
                Preprocessed::Dropped => dropped += 1,
            }
        }
        (docs, dropped)
    }
}

fn is_url(tok: &str) -> bool {
    let lower = tok.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Keeps `[a-z0-9-]` after lowercasing ASCII; anything outside Basic Latin is
/// removed. Hyphens at either end are trimmed, so a lone "-" disappears.
fn clean_token(tok: &str) -> Option<String> {
    let kept: String = tok
        .chars()
        .filter(char::is_ascii)
        .map(|c| c.to_ascii_lowercase())
        .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '-')
        .collect();
    let trimmed = kept.trim_matches('-');
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// True when `term` could appear in a [`CleanDoc`].
pub fn is_clean_term(term: &str) -> bool {
    !term.is_empty()
        && term
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Buckets documents into contiguous windows `[start + i*len, start + (i+1)*len)`
/// covering `start_ms` through the latest timestamp. Empty windows in the
/// middle are kept. Documents stamped before `start_ms` are not assigned.
pub fn window_split(docs: Vec<CleanDoc>, start_ms: i64, window_len_ms: i64) -> Result<Vec<Window>> {
    if window_len_ms <= 0 {
        return Err(Error::config(format!(
            "window length must be positive, got {window_len_ms} ms"
        )));
    }
    let Some(max_ts) = docs.iter().map(|d| d.timestamp_ms).max() else {
        return Ok(Vec::new());
    };
    if max_ts < start_ms {
        return Ok(Vec::new());
    }
    let count = ((max_ts - start_ms) / window_len_ms + 1) as usize;
    let mut windows: Vec<Window> = (0..count)
        .map(|i| {
            let start = start_ms + i as i64 * window_len_ms;
            Window {
                index: i,
                start_ms: start,
                end_ms: start + window_len_ms,
                docs: Vec::new(),
            }
        })
        .collect();
    let mut skipped = 0usize;
    for doc in docs {
        if doc.timestamp_ms < start_ms {
            skipped += 1;
            continue;
        }
        let idx = ((doc.timestamp_ms - start_ms) / window_len_ms) as usize;
        windows[idx].docs.push(doc);
    }
    if skipped > 0 {
        log::warn!("{skipped} documents precede the first window and were not assigned");
    }
    for w in &mut windows {
        // stable: equal timestamps keep input order
        w.docs.sort_by_key(|d| d.timestamp_ms);
    }
    Ok(windows)
}

/// Start of the tumbling window containing `ts`, aligned to multiples of `window_len_ms`.
pub fn aligned_start(ts: i64, window_len_ms: i64) -> i64 {
    ts.div_euclid(window_len_ms) * window_len_ms
}
