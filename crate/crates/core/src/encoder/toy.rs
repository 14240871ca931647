use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{chunk_document, ChunkPlan, EmbeddingMatrix, EmbeddingProvider};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::rng::{self, fnv1a};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

pub fn init_uniform<R: Rng>(shape: (usize, usize), rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-INIT_SCALE..=INIT_SCALE))
}

/// Explicit token list followed by `buckets` hashed rows for everything else.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    buckets: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    buckets: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::new(r.tokens, r.buckets)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            buckets: v.buckets,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.buckets == other.buckets
    }
}

impl Vocabulary {
    /// Duplicate tokens keep their first position.
    pub fn new(tokens: Vec<String>, buckets: usize) -> Self {
        let mut index = HashMap::with_capacity(tokens.len());
        let mut unique = Vec::with_capacity(tokens.len());
        for t in tokens {
            if !index.contains_key(&t) {
                index.insert(t.clone(), unique.len());
                unique.push(t);
            }
        }
        Self {
            tokens: unique,
            index,
            buckets: buckets.max(1),
        }
    }

    /// Pure hashing vocabulary.
    pub fn hashed(buckets: usize) -> Self {
        Self::new(Vec::new(), buckets)
    }

    /// Explicit entries for every distinct token of `docs`, in first-seen order.
    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = &'a Document>,
        buckets: usize,
    ) -> Self {
        Self::new(
            docs.into_iter()
                .flat_map(|d| d.tokens.iter().cloned())
                .collect(),
            buckets,
        )
    }

    pub fn lookup(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) => i,
            None => self.tokens.len() + (fnv1a(token.as_bytes()) % self.buckets as u64) as usize,
        }
    }

    /// Number of embedding rows this vocabulary addresses.
    pub fn rows(&self) -> usize {
        self.tokens.len() + self.buckets
    }

    pub fn explicit_tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }
}

/// Trainable parameters of the context-window encoder:
/// `h_t = mean(E[w_j] for j in window(t)) · P`, where the window spans
/// `radius` tokens either side of `t` clipped to `t`'s chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub vocab: Vocabulary,
    /// `rows × d_emb`
    pub embeddings: Array2<f64>,
    /// `d_emb × d_model`
    pub projection: Array2<f64>,
    pub radius: usize,
}

impl ToyEncoderParams {
    pub fn init(vocab: Vocabulary, d_emb: usize, d_model: usize, radius: usize, seed: u64) -> Self {
        let embeddings = init_uniform(
            (vocab.rows(), d_emb),
            &mut rng::substream(seed, rng::INIT, 0),
        );
        let projection = init_uniform((d_emb, d_model), &mut rng::substream(seed, rng::INIT, 1));
        Self {
            vocab,
            embeddings,
            projection,
            radius,
        }
    }

    pub fn d_emb(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn d_model(&self) -> usize {
        self.projection.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings
            .iter()
            .chain(self.projection.iter())
            .all(|v| v.is_finite())
    }

    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.lookup(t)).collect()
    }

    /// Window `[lo, hi)` of every token under `plan`.
    pub fn windows(&self, plan: &ChunkPlan) -> Vec<(usize, usize)> {
        let r = self.radius;
        let mut out = Vec::with_capacity(plan.num_tokens());
        for &(cs, ce) in &plan.chunks {
            for t in cs..ce {
                out.push((t.saturating_sub(r).max(cs), (t + r + 1).min(ce)));
            }
        }
        out
    }

    /// Window means of the token embeddings, `T × d_emb`.
    pub fn context_means(&self, ids: &[usize], windows: &[(usize, usize)]) -> Array2<f64> {
        let mut means = Array2::<f64>::zeros((windows.len(), self.d_emb()));
        for (t, &(lo, hi)) in windows.iter().enumerate() {
            let mut row = means.row_mut(t);
            for &id in &ids[lo..hi] {
                row += &self.embeddings.row(id);
            }
            row /= (hi - lo) as f64;
        }
        means
    }

    pub fn embed_with_plan(&self, doc: &Document, plan: &ChunkPlan) -> Result<EmbeddingMatrix> {
        if plan.num_tokens() != doc.len() {
            return Err(Error::RowCountMismatch {
                doc_id: doc.doc_id.clone(),
                rows: plan.num_tokens(),
                tokens: doc.len(),
            });
        }
        let ids = self.token_ids(&doc.tokens);
        let means = self.context_means(&ids, &self.windows(plan));
        Ok(EmbeddingMatrix::new(
            doc.doc_id.clone(),
            means.dot(&self.projection),
        ))
    }

    /// Embedding row of a single token (no context).
    pub fn token_row(&self, token: &str) -> ArrayView1<'_, f64> {
        self.embeddings.row(self.vocab.lookup(token))
    }
}

/// Embeds `doc` under `plan`, which must cover exactly the document's tokens.
pub fn embed_tokens(
    params: &ToyEncoderParams,
    doc: &Document,
    plan: &ChunkPlan,
) -> Result<EmbeddingMatrix> {
    params.embed_with_plan(doc, plan)
}

/// The toy encoder together with its chunk length.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub params: ToyEncoderParams,
    pub chunk_length: usize,
}

impl EmbeddingProvider for ToyEncoder {
    fn d_model(&self) -> usize {
        self.params.d_model()
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingMatrix> {
        self.params
            .embed_with_plan(doc, &chunk_document(doc.len(), self.chunk_length))
    }
}
