use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::encoder::{
    chunk_document, init_uniform, project_reduce, EmbeddingMatrix, EmbeddingProvider,
    ToyEncoderParams, Vocabulary,
};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_BUCKETS: usize = 1 << 16;
pub const DEFAULT_CHUNK_LENGTH: usize = 1024;
pub const DEFAULT_REDUCED_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_model: usize,
    pub radius: usize,
    pub buckets: usize,
    pub chunk_length: usize,
    pub d_reduced: usize,
    /// Give every training token its own embedding row instead of hashing.
    pub explicit_vocab: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_emb: 64,
            d_model: 64,
            radius: 3,
            buckets: DEFAULT_BUCKETS,
            chunk_length: DEFAULT_CHUNK_LENGTH,
            d_reduced: DEFAULT_REDUCED_DIM,
            explicit_vocab: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_emb == 0 || self.d_model == 0 || self.d_reduced == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.buckets == 0 || self.chunk_length == 0 {
            return Err(Error::Config(
                "hash buckets and chunk length must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn vocabulary<'a>(&self, docs: impl IntoIterator<Item = &'a Document>) -> Vocabulary {
        if self.explicit_vocab {
            Vocabulary::from_documents(docs, self.buckets)
        } else {
            Vocabulary::hashed(self.buckets)
        }
    }
}

/// Toy encoder plus the linear reducer used by the nearest-neighbour head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: ToyEncoderParams,
    /// `d_model × d_reduced`
    pub reducer: Array2<f64>,
    pub chunk_length: usize,
}

impl Model {
    pub fn init(cfg: &ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let encoder = ToyEncoderParams::init(vocab, cfg.d_emb, cfg.d_model, cfg.radius, seed);
        let reducer = init_uniform(
            (cfg.d_model, cfg.d_reduced),
            &mut rng::substream(seed, rng::INIT, 2),
        );
        Ok(Self {
            encoder,
            reducer,
            chunk_length: cfg.chunk_length,
        })
    }

    pub fn d_model(&self) -> usize {
        self.encoder.d_model()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.reducer.iter().all(|v| v.is_finite())
    }

    pub fn embed(&self, doc: &Document) -> Result<EmbeddingMatrix> {
        self.encoder
            .embed_with_plan(doc, &chunk_document(doc.len(), self.chunk_length))
    }

    pub fn reduce(&self, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        project_reduce(m, &self.reducer)
    }
}

impl EmbeddingProvider for Model {
    fn d_model(&self) -> usize {
        self.encoder.d_model()
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingMatrix> {
        Model::embed(self, doc)
    }
}
