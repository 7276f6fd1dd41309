use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{l2_norm, EmbeddingProvider, EmbeddingVector, ProviderKind};
use crate::corpus::CleanDoc;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, token: &str) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Unit-length pseudo-random direction for a token.
fn token_direction(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, token));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = l2_norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// L2-normalized mean of the tokens' hashed directions.
///
/// Order-independent; repeated tokens pull the result toward their direction.
pub fn stub_embed<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if dim == 0 {
        return Err(Error::config("embedding dimension must be positive"));
    }
    let mut sum = vec![0.0; dim];
    for tok in tokens {
        for (s, d) in sum.iter_mut().zip(token_direction(tok.as_ref(), dim, seed)) {
            *s += d;
        }
    }
    let n = l2_norm(&sum);
    if n == 0.0 || !n.is_finite() {
        // only reachable with exactly cancelling directions
        return Err(Error::EmptyDocument);
    }
    sum.iter_mut().for_each(|x| *x /= n);
    Ok(sum)
}

/// Deterministic stand-in for a sentence encoder.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        Ok(Self { dim, seed })
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Stub
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_docs(&self, docs: &[CleanDoc]) -> Result<Vec<EmbeddingVector>> {
        docs.iter()
            .map(|d| {
                Ok(EmbeddingVector {
                    doc_id: d.id.clone(),
                    values: stub_embed(&d.tokens, self.dim, self.seed)?,
                })
            })
            .collect()
    }
}
