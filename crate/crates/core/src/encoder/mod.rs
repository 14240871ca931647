//! Per-token document embeddings: a small trainable context-window encoder,
//! an adapter for embeddings precomputed by an external model, chunking of
//! long documents, and the linear reducer used by the nearest-neighbour head.

mod external;
mod toy;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub use external::{
    load_external_embeddings, read_external_entry, write_external_embeddings, ExternalEmbeddings,
    EXTERNAL_MAGIC, EXTERNAL_VERSION,
};
pub use toy::{embed_tokens, init_uniform, ToyEncoder, ToyEncoderParams, Vocabulary, INIT_SCALE};

/// Token representations for one document, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub doc_id: String,
    pub rows: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(doc_id: impl Into<String>, rows: Array2<f64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|v| v.is_finite())
    }
}

/// Anything that can produce token embeddings for a document.
pub trait EmbeddingProvider: Sync {
    fn d_model(&self) -> usize;
    fn embed(&self, doc: &Document) -> Result<EmbeddingMatrix>;
}

/// Half-open token ranges covering a document left to right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_length: usize,
    pub chunks: Vec<(usize, usize)>,
}

impl ChunkPlan {
    pub fn num_tokens(&self) -> usize {
        self.chunks.last().map_or(0, |&(_, end)| end)
    }
}

/// Greedy partition of `num_tokens` tokens into chunks of at most `chunk_length`.
pub fn chunk_document(num_tokens: usize, chunk_length: usize) -> ChunkPlan {
    let chunk_length = chunk_length.max(1);
    let chunks = (0..num_tokens)
        .step_by(chunk_length)
        .map(|start| (start, (start + chunk_length).min(num_tokens)))
        .collect();
    ChunkPlan {
        chunk_length,
        chunks,
    }
}

/// Row-wise linear map `rows · reducer`.
pub fn project_reduce(matrix: &EmbeddingMatrix, reducer: &Array2<f64>) -> Result<EmbeddingMatrix> {
    if reducer.nrows() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            found: reducer.nrows(),
        });
    }
    Ok(EmbeddingMatrix::new(
        matrix.doc_id.clone(),
        matrix.rows.dot(reducer),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chunking_examples() {
        assert_eq!(
            chunk_document(2300, 1024).chunks,
            [(0, 1024), (1024, 2048), (2048, 2300)]
        );
        assert!(chunk_document(0, 1024).chunks.is_empty());
        assert_eq!(chunk_document(1024, 1024).chunks, [(0, 1024)]);
    }

    proptest! {
        #[test]
        fn chunks_partition_exactly(n in 0usize..5000, len in 1usize..1500) {
            let plan = chunk_document(n, len);
            let mut next = 0;
            for &(s, e) in &plan.chunks {
                prop_assert_eq!(s, next);
                prop_assert!(e > s && e - s <= len);
                next = e;
            }
            prop_assert_eq!(next, n);
            prop_assert_eq!(plan.num_tokens(), n);
        }
    }

    #[test]
    fn identity_and_zero_reducers() {
        let m = EmbeddingMatrix::new("d", array![[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]]);
        let same = project_reduce(&m, &Array2::eye(3)).unwrap();
        assert_eq!(same, m);
        let zero = project_reduce(&m, &Array2::zeros((3, 2))).unwrap();
        assert!(zero.rows.iter().all(|&v| v == 0.0));
        assert_eq!(zero.dim(), 2);
        assert!(matches!(
            project_reduce(&m, &Array2::zeros((4, 2))),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_reducer_matches_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows = Array2::from_shape_fn((17, 8), |_| rng.gen_range(-1.0..1.0));
        let reducer = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
        let got = project_reduce(&EmbeddingMatrix::new("d", rows.clone()), &reducer).unwrap();
        for i in 0..17 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..8 {
                    acc += rows[[i, k]] * reducer[[k, j]];
                }
                assert!((got.rows[[i, j]] - acc).abs() < 1e-9);
            }
        }
    }
}
