//! `SMMEMB` text format: a `SMMEMB 1 <dim>` header line, then one
//! `<doc_id>\t<v1> <v2> ... <vdim>` line per document.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::{EmbeddingProvider, EmbeddingVector, ProviderKind};
use crate::corpus::CleanDoc;
use crate::error::{Error, Result};

const MAGIC: &str = "SMMEMB";
const VERSION: &str = "1";

pub fn write_embeddings<W: Write>(vectors: &[EmbeddingVector], dim: usize, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION} {dim}")?;
    let mut line = String::new();
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.values.len(),
            });
        }
        if v.doc_id.is_empty() || v.doc_id.contains(['\t', '\n', '\r']) {
            return Err(Error::config(format!("doc id {:?} cannot be stored", v.doc_id)));
        }
        line.clear();
        line.push_str(&v.doc_id);
        line.push('\t');
        for (i, x) in v.values.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::config(format!("non-finite value in {:?}", v.doc_id)));
            }
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{x}").expect("writing to a String");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_embeddings(vectors: &[EmbeddingVector], dim: usize, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::at_path(path))?;
    write_embeddings(vectors, dim, BufWriter::new(file))
}

/// Parses an `SMMEMB` stream. Returns the declared dimension and the vectors.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::format(1, "missing header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dim = match fields.as_slice() {
        [MAGIC, VERSION, dim] => dim
            .parse::<usize>()
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::format(1, format!("bad dimension {dim:?}")))?,
        _ => return Err(Error::format(1, format!("bad header {header:?}"))),
    };

    let mut table = HashMap::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(lineno, "missing tab after doc id"))?;
        if id.is_empty() {
            return Err(Error::format(lineno, "empty doc id"));
        }
        let values = rest
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format(lineno, format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::format(
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if table.insert(id.to_string(), values).is_some() {
            return Err(Error::format(lineno, format!("duplicate doc id {id:?}")));
        }
    }
    Ok((dim, table))
}

pub fn load_embeddings(path: &Path) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(Error::at_path(path))?;
    read_embeddings(std::io::BufReader::new(file))
}

/// Serves vectors loaded from an `SMMEMB` file, keyed by document id.
#[derive(Debug, Clone)]
pub struct FileEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl FileEmbedder {
    pub fn open(path: &Path) -> Result<Self> {
        let (dim, table) = load_embeddings(path)?;
        Ok(Self { dim, table })
    }

    pub fn from_table(dim: usize, table: HashMap<String, Vec<f64>>) -> Self {
        Self { dim, table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for FileEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::File
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_docs(&self, docs: &[CleanDoc]) -> Result<Vec<EmbeddingVector>> {
        docs.iter()
            .map(|d| {
                self.table
                    .get(&d.id)
                    .map(|v| EmbeddingVector {
                        doc_id: d.id.clone(),
                        values: v.clone(),
                    })
                    .ok_or_else(|| Error::MissingEmbedding(d.id.clone()))
            })
            .collect()
    }
}
