//! Token classification heads over episode support sets.
//!
//! Labels are class indices: `0..n` for the episode's active argument types
//! (in `active_types` order) and `n` for NOTA, the "no argument" class.

mod kmeans;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};

pub use kmeans::{
    column_mean, kmeans_nota, KMeans, DEFAULT_KMEANS_ITERS, DEFAULT_NOTA_CLUSTERS,
    MAX_NOTA_CLUSTERS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Prototype head on the untrained encoder.
    BaselineNoFinetune,
    Protonet,
    Nnshot,
    Mnav,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [
        HeadKind::BaselineNoFinetune,
        HeadKind::Protonet,
        HeadKind::Nnshot,
        HeadKind::Mnav,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::BaselineNoFinetune => "baseline_no_finetune",
            HeadKind::Protonet => "protonet",
            HeadKind::Nnshot => "nnshot",
            HeadKind::Mnav => "mnav",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            HeadKind::BaselineNoFinetune => "Baseline",
            HeadKind::Protonet => "ProtoNet",
            HeadKind::Nnshot => "NNShot",
            HeadKind::Mnav => "ProtoNet-MNAV",
        }
    }

    pub fn needs_training(self) -> bool {
        self != HeadKind::BaselineNoFinetune
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown head `{s}`")))
    }
}

/// Embedded document with one class label per token.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDoc {
    pub embeddings: EmbeddingMatrix,
    pub labels: Vec<usize>,
}

impl LabeledDoc {
    pub fn new(embeddings: EmbeddingMatrix, labels: Vec<usize>) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::RowCountMismatch {
                doc_id: embeddings.doc_id.clone(),
                rows: embeddings.len(),
                tokens: labels.len(),
            });
        }
        Ok(Self { embeddings, labels })
    }
}

/// One vector per active type plus one or more NOTA vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub active_types: Vec<String>,
    /// `n × d`
    pub type_vectors: Array2<f64>,
    /// `k × d`
    pub nota_vectors: Array2<f64>,
}

impl PrototypeSet {
    pub fn n_types(&self) -> usize {
        self.type_vectors.nrows()
    }

    pub fn nota_label(&self) -> usize {
        self.n_types()
    }

    pub fn dim(&self) -> usize {
        self.type_vectors.ncols()
    }

    /// All vectors stacked: types first, then NOTA.
    pub fn stacked(&self) -> Array2<f64> {
        ndarray::concatenate(
            Axis(0),
            &[self.type_vectors.view(), self.nota_vectors.view()],
        )
        .expect("type and NOTA vectors share a dimension")
    }

    /// Replaces the NOTA vectors, e.g. with cluster centroids.
    pub fn with_nota(mut self, nota_vectors: Array2<f64>) -> Result<Self> {
        if nota_vectors.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: nota_vectors.ncols(),
            });
        }
        self.nota_vectors = nota_vectors;
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for k in 0..self.dim() {
            let _ = write!(out, ",dim_{k}");
        }
        out.push('\n');
        let multi = self.nota_vectors.nrows() > 1;
        let rows = self
            .active_types
            .iter()
            .cloned()
            .zip(self.type_vectors.outer_iter())
            .chain(self.nota_vectors.outer_iter().enumerate().map(|(i, v)| {
                (
                    if multi {
                        format!("NOTA_{i}")
                    } else {
                        "NOTA".to_string()
                    },
                    v,
                )
            }));
        for (label, v) in rows {
            out.push_str(&csv_field(&label));
            for x in v {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-token labels and distances to every candidate vector or class.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenAssignment {
    pub labels: Vec<usize>,
    /// Prototype heads: one column per stacked prototype (types, then NOTA
    /// vectors). Nearest-neighbour head: one column per class.
    pub distances: Array2<f64>,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Class means of the support tokens; the single NOTA vector is the mean of
/// all NOTA-labelled tokens.
pub fn compute_prototypes(support: &[LabeledDoc], active_types: &[String]) -> Result<PrototypeSet> {
    let n = active_types.len();
    let dim = support
        .first()
        .map(|s| s.embeddings.dim())
        .ok_or_else(|| Error::EmptyClass("support set is empty".into()))?;
    let mut sums = Array2::<f64>::zeros((n + 1, dim));
    let mut counts = vec![0usize; n + 1];
    for doc in support {
        check_dim(dim, doc.embeddings.dim())?;
        for (row, &label) in doc.embeddings.rows.outer_iter().zip(&doc.labels) {
            if label > n {
                return Err(Error::Config(format!("label {label} outside 0..={n}")));
            }
            let mut acc = sums.row_mut(label);
            acc += &row;
            counts[label] += 1;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            let name = active_types.get(c).map_or("NOTA", String::as_str);
            return Err(Error::EmptyClass(name.to_string()));
        }
        let mut row = sums.row_mut(c);
        row /= count as f64;
    }
    let nota = sums.slice(ndarray::s![n.., ..]).to_owned();
    let types = sums.slice(ndarray::s![..n, ..]).to_owned();
    Ok(PrototypeSet {
        active_types: active_types.to_vec(),
        type_vectors: types,
        nota_vectors: nota,
    })
}

pub(crate) fn sq_l2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn l1(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Index of the smallest value; the first one wins ties.
pub(crate) fn argmin(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Squared Euclidean distance to every prototype; nearest prototype wins,
/// lowest index on ties, and any NOTA vector winning gives NOTA.
pub fn protonet_classify(
    protos: &PrototypeSet,
    query: &EmbeddingMatrix,
) -> Result<TokenAssignment> {
    check_dim(protos.dim(), query.dim())?;
    let stacked = protos.stacked();
    let n = protos.n_types();
    let mut distances = Array2::<f64>::zeros((query.len(), stacked.nrows()));
    for (t, h) in query.rows.outer_iter().enumerate() {
        for (j, p) in stacked.outer_iter().enumerate() {
            distances[[t, j]] = sq_l2(h, p);
        }
    }
    let labels = distances
        .outer_iter()
        .map(|row| argmin(row).min(n))
        .collect();
    Ok(TokenAssignment { labels, distances })
}

/// Prototype classification with several NOTA centroids.
pub fn mnav_classify(protos: &PrototypeSet, query: &EmbeddingMatrix) -> Result<TokenAssignment> {
    protonet_classify(protos, query)
}

/// Prototypes whose NOTA vectors are `k` centroids of the support NOTA tokens.
pub fn mnav_prototypes(
    support: &[LabeledDoc],
    active_types: &[String],
    k: usize,
    seed: u64,
) -> Result<PrototypeSet> {
    let protos = compute_prototypes(support, active_types)?;
    let nota = nota_tokens(support, active_types.len());
    let km = kmeans_nota(nota.view(), k, seed, DEFAULT_KMEANS_ITERS)?;
    protos.with_nota(km.centroids)
}

/// Stacks the support tokens labelled NOTA.
pub fn nota_tokens(support: &[LabeledDoc], n_types: usize) -> Array2<f64> {
    let dim = support.first().map_or(0, |s| s.embeddings.dim());
    let rows: Vec<ArrayView1<f64>> = support
        .iter()
        .flat_map(|s| {
            s.embeddings
                .rows
                .outer_iter()
                .zip(&s.labels)
                .filter(move |(_, &l)| l == n_types)
                .map(|(r, _)| r)
        })
        .collect();
    if rows.is_empty() {
        return Array2::zeros((0, dim));
    }
    ndarray::stack(Axis(0), &rows).expect("support rows share a dimension")
}

/// L1 nearest neighbour among all support tokens (NOTA tokens included).
/// Distances are per-class minima; ties go to the lowest support token in
/// document-then-position order.
pub fn nnshot_classify(
    support: &[LabeledDoc],
    n_types: usize,
    query: &EmbeddingMatrix,
) -> Result<TokenAssignment> {
    let total: usize = support.iter().map(|s| s.labels.len()).sum();
    if total == 0 {
        return Err(Error::EmptyClass("support set has no tokens".into()));
    }
    for s in support {
        check_dim(query.dim(), s.embeddings.dim())?;
    }
    let mut distances = Array2::from_elem((query.len(), n_types + 1), f64::INFINITY);
    let mut labels = Vec::with_capacity(query.len());
    for (t, h) in query.rows.outer_iter().enumerate() {
        let mut best = (f64::INFINITY, n_types);
        for s in support {
            for (row, &label) in s.embeddings.rows.outer_iter().zip(&s.labels) {
                let d = l1(h, row);
                if d < distances[[t, label]] {
                    distances[[t, label]] = d;
                }
                if d < best.0 {
                    best = (d, label);
                }
            }
        }
        labels.push(best.1);
    }
    Ok(TokenAssignment { labels, distances })
}
