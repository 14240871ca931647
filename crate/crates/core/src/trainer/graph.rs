//! Forward pass and exact gradients of the episode loss.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use super::model::Model;
use crate::encoder::chunk_document;
use crate::error::{Error, Result};
use crate::evaluation::encode_spans;
use crate::heads::kmeans_nota;
use crate::heads::DEFAULT_KMEANS_ITERS;
use crate::sampler::Episode;

/// Token ids, context windows and class labels of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocInput {
    pub ids: Vec<usize>,
    pub windows: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
}

/// Parameter-independent view of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeInput {
    pub active_types: Vec<String>,
    pub support: Vec<DocInput>,
    pub query: Vec<DocInput>,
}

impl EpisodeInput {
    pub fn new(model: &Model, episode: &Episode) -> Self {
        let prep = |doc: &crate::corpus::Document| DocInput {
            ids: model.encoder.token_ids(&doc.tokens),
            windows: model
                .encoder
                .windows(&chunk_document(doc.len(), model.chunk_length)),
            labels: encode_spans(&doc.arguments, doc.len(), &episode.active_types),
        };
        Self {
            active_types: episode.active_types.clone(),
            support: episode.support.iter().map(prep).collect(),
            query: episode.query.iter().map(prep).collect(),
        }
    }

    pub fn n_types(&self) -> usize {
        self.active_types.len()
    }

    pub fn query_tokens(&self) -> usize {
        self.query.iter().map(|d| d.labels.len()).sum()
    }
}

/// Which distance defines the class logits during training.
#[derive(Debug, Clone, PartialEq)]
pub enum LossHead {
    /// Squared L2 to mean prototypes, NOTA included as a mean prototype.
    Prototype,
    /// Squared L2 to type prototypes; the NOTA logit uses the nearest of
    /// these fixed centroids and no gradient flows into them.
    MultiNota(Array2<f64>),
    /// L1 to the nearest support token of each class in the reduced space.
    NearestNeighbour,
}

/// Sparse gradient rows for the embedding table plus dense gradients for
/// the projection and the reducer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: BTreeMap<usize, Array1<f64>>,
    pub projection: Array2<f64>,
    pub reducer: Array2<f64>,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        Self {
            embeddings: BTreeMap::new(),
            projection: Array2::zeros(model.encoder.projection.raw_dim()),
            reducer: Array2::zeros(model.reducer.raw_dim()),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (row, g) in &other.embeddings {
            match self.embeddings.get_mut(row) {
                Some(acc) => *acc += g,
                None => {
                    self.embeddings.insert(*row, g.clone());
                }
            }
        }
        self.projection += &other.projection;
        self.reducer += &other.reducer;
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.embeddings.values_mut() {
            *g *= factor;
        }
        self.projection *= factor;
        self.reducer *= factor;
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.embeddings
            .values()
            .flat_map(|g| g.iter())
            .chain(self.projection.iter())
            .chain(self.reducer.iter())
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Dense copy of the embedding-table gradient.
    pub fn dense_embeddings(&self, rows: usize, cols: usize) -> Array2<f64> {
        let mut out = Array2::zeros((rows, cols));
        for (r, g) in &self.embeddings {
            out.row_mut(*r).assign(g);
        }
        out
    }
}

struct DocCache {
    means: Array2<f64>,
    hidden: Array2<f64>,
    reduced: Option<Array2<f64>>,
}

fn forward_doc(model: &Model, doc: &DocInput, reduce: bool) -> DocCache {
    let means = model.encoder.context_means(&doc.ids, &doc.windows);
    let hidden = means.dot(&model.encoder.projection);
    let reduced = reduce.then(|| hidden.dot(&model.reducer));
    DocCache {
        means,
        hidden,
        reduced,
    }
}

impl DocCache {
    fn features(&self) -> &Array2<f64> {
        self.reduced.as_ref().unwrap_or(&self.hidden)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn l1_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean softmax cross-entropy over rows, with logits `-distances`.
pub fn episode_loss(distances: &Array2<f64>, gold: &[usize]) -> f64 {
    loss_and_distance_grad(distances, gold).0
}

/// Loss and its gradient with respect to every distance entry.
pub fn loss_and_distance_grad(distances: &Array2<f64>, gold: &[usize]) -> (f64, Array2<f64>) {
    let rows = distances.nrows();
    let mut grad = Array2::zeros(distances.raw_dim());
    if rows == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for (t, row) in distances.outer_iter().enumerate() {
        let shift = row.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = row.iter().map(|d| (shift - d).exp()).collect();
        let z: f64 = weights.iter().sum();
        total += row[gold[t]] - shift + z.ln();
        for (j, w) in weights.iter().enumerate() {
            let p = w / z;
            grad[[t, j]] = (f64::from(u8::from(j == gold[t])) - p) / rows as f64;
        }
    }
    (total / rows as f64, grad)
}

/// K-means centroids of the support NOTA tokens under the current model.
pub fn nota_centroids(
    model: &Model,
    input: &EpisodeInput,
    k: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let n = input.n_types();
    let mut rows = Vec::new();
    for doc in &input.support {
        let cache = forward_doc(model, doc, false);
        for (t, &l) in doc.labels.iter().enumerate() {
            if l == n {
                rows.push(cache.hidden.row(t).to_owned());
            }
        }
    }
    let views: Vec<ArrayView1<f64>> = rows.iter().map(|r| r.view()).collect();
    let points = if views.is_empty() {
        Array2::zeros((0, model.d_model()))
    } else {
        ndarray::stack(ndarray::Axis(0), &views).expect("rows share a dimension")
    };
    Ok(kmeans_nota(points.view(), k, seed, DEFAULT_KMEANS_ITERS)?.centroids)
}

/// Loss only.
pub fn loss(model: &Model, input: &EpisodeInput, head: &LossHead) -> Result<f64> {
    run(model, input, head, false).map(|(l, _)| l)
}

/// Loss and exact gradients.
pub fn loss_and_gradients(
    model: &Model,
    input: &EpisodeInput,
    head: &LossHead,
) -> Result<(f64, Gradients)> {
    run(model, input, head, true).map(|(l, g)| (l, g.expect("gradients requested")))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn run(
    model: &Model,
    input: &EpisodeInput,
    head: &LossHead,
    want_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    let n = input.n_types();
    let classes = n + 1;
    let reduce = matches!(head, LossHead::NearestNeighbour);
    let support: Vec<DocCache> = input
        .support
        .iter()
        .map(|d| forward_doc(model, d, reduce))
        .collect();
    let query: Vec<DocCache> = input
        .query
        .iter()
        .map(|d| forward_doc(model, d, reduce))
        .collect();
    let total_q = input.query_tokens();
    if total_q == 0 {
        return Err(Error::Config("episode has no query tokens".into()));
    }
    let dim = support
        .first()
        .or(query.first())
        .map_or(0, |c| c.features().ncols());

    // flat query index -> (doc, row)
    let q_index: Vec<(usize, usize)> = input
        .query
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.labels.len()).map(move |t| (d, t)))
        .collect();
    let gold: Vec<usize> = input
        .query
        .iter()
        .flat_map(|d| d.labels.iter().copied())
        .collect();
    let mut distances = Array2::from_elem((total_q, classes), f64::INFINITY);

    // prototype state
    let mut centers = Array2::<f64>::zeros((classes, dim));
    let mut counts = vec![0usize; classes];
    let mut nearest_centroid = vec![0usize; total_q];
    // nearest-neighbour state: per (query token, class) the winning support token
    let mut nearest_support: Vec<Vec<Option<(usize, usize)>>> = Vec::new();

    match head {
        LossHead::Prototype | LossHead::MultiNota(_) => {
            for (doc, cache) in input.support.iter().zip(&support) {
                for (t, &l) in doc.labels.iter().enumerate() {
                    let mut row = centers.row_mut(l);
                    row += &cache.hidden.row(t);
                    counts[l] += 1;
                }
            }
            let own_nota = matches!(head, LossHead::Prototype);
            for c in 0..if own_nota { classes } else { n } {
                if counts[c] == 0 {
                    let name = input.active_types.get(c).map_or("NOTA", String::as_str);
                    return Err(Error::EmptyClass(name.to_string()));
                }
                let mut row = centers.row_mut(c);
                row /= counts[c] as f64;
            }
            for (qi, &(d, t)) in q_index.iter().enumerate() {
                let h = query[d].hidden.row(t);
                for c in 0..if own_nota { classes } else { n } {
                    distances[[qi, c]] = sq_dist(h, centers.row(c));
                }
                if let LossHead::MultiNota(centroids) = head {
                    for (k, mu) in centroids.outer_iter().enumerate() {
                        let dk = sq_dist(h, mu);
                        if dk < distances[[qi, n]] {
                            distances[[qi, n]] = dk;
                            nearest_centroid[qi] = k;
                        }
                    }
                }
            }
        }
        LossHead::NearestNeighbour => {
            nearest_support = vec![vec![None; classes]; total_q];
            for (qi, &(d, t)) in q_index.iter().enumerate() {
                let z = query[d].features().row(t);
                for (sd, (doc, cache)) in input.support.iter().zip(&support).enumerate() {
                    for (st, &l) in doc.labels.iter().enumerate() {
                        let dist = l1_dist(z, cache.features().row(st));
                        if dist < distances[[qi, l]] {
                            distances[[qi, l]] = dist;
                            nearest_support[qi][l] = Some((sd, st));
                        }
                    }
                }
            }
        }
    }

    let (loss, g_dist) = loss_and_distance_grad(&distances, &gold);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite episode loss {loss}")));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    let mut g_sup: Vec<Array2<f64>> = support
        .iter()
        .map(|c| Array2::zeros(c.features().raw_dim()))
        .collect();
    let mut g_qry: Vec<Array2<f64>> = query
        .iter()
        .map(|c| Array2::zeros(c.features().raw_dim()))
        .collect();

    match head {
        LossHead::Prototype | LossHead::MultiNota(_) => {
            let own_nota = matches!(head, LossHead::Prototype);
            let proto_classes = if own_nota { classes } else { n };
            let mut g_centers = Array2::<f64>::zeros((classes, dim));
            for (qi, &(d, t)) in q_index.iter().enumerate() {
                let h = query[d].hidden.row(t);
                let mut gq = g_qry[d].row_mut(t);
                for c in 0..proto_classes {
                    let w = 2.0 * g_dist[[qi, c]];
                    if w == 0.0 {
                        continue;
                    }
                    let diff = &h - &centers.row(c);
                    gq.scaled_add(w, &diff);
                    g_centers.row_mut(c).scaled_add(-w, &diff);
                }
                if let LossHead::MultiNota(centroids) = head {
                    let diff = &h - &centroids.row(nearest_centroid[qi]);
                    gq.scaled_add(2.0 * g_dist[[qi, n]], &diff);
                }
            }
            for (doc, g) in input.support.iter().zip(g_sup.iter_mut()) {
                for (t, &l) in doc.labels.iter().enumerate() {
                    if l < proto_classes {
                        g.row_mut(t)
                            .scaled_add(1.0 / counts[l] as f64, &g_centers.row(l));
                    }
                }
            }
        }
        LossHead::NearestNeighbour => {
            for (qi, &(d, t)) in q_index.iter().enumerate() {
                for c in 0..classes {
                    let Some((sd, st)) = nearest_support[qi][c] else {
                        continue;
                    };
                    let w = g_dist[[qi, c]];
                    if w == 0.0 {
                        continue;
                    }
                    let zq = query[d].features().row(t);
                    let zs = support[sd].features().row(st);
                    let signs: Array1<f64> =
                        zq.iter().zip(zs.iter()).map(|(a, b)| sign(a - b)).collect();
                    g_qry[d].row_mut(t).scaled_add(w, &signs);
                    g_sup[sd].row_mut(st).scaled_add(-w, &signs);
                }
            }
        }
    }

    let mut grads = Gradients::zeros(model);
    let docs = input
        .support
        .iter()
        .zip(&support)
        .zip(g_sup)
        .chain(input.query.iter().zip(&query).zip(g_qry));
    for ((doc, cache), g_feat) in docs {
        let g_hidden = if reduce {
            grads.reducer += &cache.hidden.t().dot(&g_feat);
            g_feat.dot(&model.reducer.t())
        } else {
            g_feat
        };
        backward_encoder(model, doc, cache, &g_hidden, &mut grads);
    }
    Ok((loss, Some(grads)))
}

fn backward_encoder(
    model: &Model,
    doc: &DocInput,
    cache: &DocCache,
    g_hidden: &Array2<f64>,
    grads: &mut Gradients,
) {
    grads.projection += &cache.means.t().dot(g_hidden);
    let g_means = g_hidden.dot(&model.encoder.projection.t());
    let d_emb = model.encoder.d_emb();
    for (t, &(lo, hi)) in doc.windows.iter().enumerate() {
        let g = g_means.row(t);
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let w = 1.0 / (hi - lo) as f64;
        for &id in &doc.ids[lo..hi] {
            let acc = grads
                .embeddings
                .entry(id)
                .or_insert_with(|| Array1::zeros(d_emb));
            acc.scaled_add(w, &g);
        }
    }
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor, row, col, analytic, numeric)` for entries above tolerance.
    pub failures: Vec<(&'static str, usize, usize, f64, f64)>,
}

/// Relative error with a floor on the denominator, so that two
/// near-zero values compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn param_mut<'m>(m: &'m mut Model, tensor: &str, r: usize, c: usize) -> &'m mut f64 {
    match tensor {
        "embeddings" => &mut m.encoder.embeddings[[r, c]],
        "projection" => &mut m.encoder.projection[[r, c]],
        _ => &mut m.reducer[[r, c]],
    }
}

/// Checks every parameter entry of `model` against central differences
/// with step `h`.
pub fn check_gradients(
    model: &Model,
    input: &EpisodeInput,
    head: &LossHead,
    h: f64,
    tolerance: f64,
) -> Result<GradCheck> {
    let (_, grads) = loss_and_gradients(model, input, head)?;
    let analytic_emb =
        grads.dense_embeddings(model.encoder.embeddings.nrows(), model.encoder.d_emb());
    let mut probe = model.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    let tensors: [(&'static str, &Array2<f64>); 3] = [
        ("embeddings", &analytic_emb),
        ("projection", &grads.projection),
        ("reducer", &grads.reducer),
    ];
    for (name, analytic) in tensors {
        for ((r, c), &a) in analytic.indexed_iter() {
            let original = *param_mut(&mut probe, name, r, c);
            *param_mut(&mut probe, name, r, c) = original + h;
            let plus = loss(&probe, input, head)?;
            *param_mut(&mut probe, name, r, c) = original - h;
            let minus = loss(&probe, input, head)?;
            *param_mut(&mut probe, name, r, c) = original;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(a, numeric);
            out.checked += 1;
            out.max_rel_error = out.max_rel_error.max(err);
            if err >= tolerance {
                out.failures.push((name, r, c, a, numeric));
            }
        }
    }
    Ok(out)
}
