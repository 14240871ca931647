use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{EmbeddingMatrix, EmbeddingProvider};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const EXTERNAL_MAGIC: &[u8; 4] = b"FDAE";
pub const EXTERNAL_VERSION: u32 = 1;

const HEADER_LEN: u64 = 4 + 4 + 4 + 8;

/// Path of the plain-text offset index that accompanies an embedding file.
pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

/// Writes `matrices` to `path` and an `offset\tdoc_id` index next to it.
pub fn write_external_embeddings(path: &Path, matrices: &[EmbeddingMatrix]) -> Result<()> {
    let d_model = matrices.first().map_or(0, EmbeddingMatrix::dim);
    if let Some(m) = matrices.iter().find(|m| m.dim() != d_model) {
        return Err(Error::DimensionMismatch {
            expected: d_model,
            found: m.dim(),
        });
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut index = String::new();
    w.write_all(EXTERNAL_MAGIC).map_err(io)?;
    w.write_all(&EXTERNAL_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(d_model as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(matrices.len() as u64).to_le_bytes())
        .map_err(io)?;
    let mut offset = HEADER_LEN;
    for m in matrices {
        index.push_str(&format!("{offset}\t{}\n", m.doc_id));
        let id = m.doc_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(id).map_err(io)?;
        w.write_all(&(m.len() as u64).to_le_bytes()).map_err(io)?;
        for v in m.rows.iter() {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
        offset += 4 + id.len() as u64 + 8 + (m.len() * d_model * 4) as u64;
    }
    w.flush().map_err(io)?;
    let idx = index_path(path);
    std::fs::write(&idx, index).map_err(|e| Error::io(&idx, e))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_header(r: &mut impl Read) -> std::io::Result<Option<(usize, u64)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EXTERNAL_MAGIC || read_u32(r)? != EXTERNAL_VERSION {
        return Ok(None);
    }
    Ok(Some((read_u32(r)? as usize, read_u64(r)?)))
}

/// Returns the doc id and row count of the entry at the reader's position,
/// leaving the reader at the start of the row data.
fn read_entry_head(r: &mut impl Read) -> Result<(String, usize)> {
    let fmt = |e: std::io::Error| Error::Format(format!("truncated embedding entry: {e}"));
    let id_len = read_u32(r).map_err(fmt)? as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(fmt)?;
    let id =
        String::from_utf8(id).map_err(|_| Error::Format("doc id is not valid UTF-8".into()))?;
    let rows = read_u64(r).map_err(fmt)? as usize;
    Ok((id, rows))
}

/// Reads the entry starting at byte `offset` of an embedding file.
pub fn read_external_entry(path: &Path, offset: u64, d_model: usize) -> Result<EmbeddingMatrix> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    r.seek(SeekFrom::Start(offset)).map_err(io)?;
    let (doc_id, rows) = read_entry_head(&mut r)?;
    let mut bytes = vec![0u8; rows * d_model * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated rows for {doc_id}: {e}")))?;
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let rows = Array2::from_shape_vec((rows, d_model), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(EmbeddingMatrix::new(doc_id, rows))
}

/// Precomputed embeddings read lazily from disk through an offset table.
#[derive(Debug, Clone)]
pub struct ExternalEmbeddings {
    path: PathBuf,
    d_model: usize,
    offsets: BTreeMap<String, (u64, usize)>,
}

impl ExternalEmbeddings {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.offsets.contains_key(doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.offsets.keys().map(String::as_str)
    }

    pub fn get(&self, doc_id: &str) -> Result<EmbeddingMatrix> {
        let &(offset, _) = self
            .offsets
            .get(doc_id)
            .ok_or_else(|| Error::MissingEmbedding(doc_id.to_string()))?;
        read_external_entry(&self.path, offset, self.d_model)
    }

    /// Checks that every corpus document is present with one row per token.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        corpus.iter().try_for_each(|d| self.check_doc(d))
    }

    fn check_doc(&self, doc: &Document) -> Result<()> {
        let &(_, rows) = self
            .offsets
            .get(&doc.doc_id)
            .ok_or_else(|| Error::MissingEmbedding(doc.doc_id.clone()))?;
        if rows != doc.len() {
            return Err(Error::RowCountMismatch {
                doc_id: doc.doc_id.clone(),
                rows,
                tokens: doc.len(),
            });
        }
        Ok(())
    }
}

impl EmbeddingProvider for ExternalEmbeddings {
    fn d_model(&self) -> usize {
        self.d_model
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingMatrix> {
        self.check_doc(doc)?;
        self.get(&doc.doc_id)
    }
}

/// Opens an embedding file, using its index when present and scanning
/// entry headers otherwise. When `expected_dim` is given the stored
/// dimension must match it.
pub fn load_external_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<ExternalEmbeddings> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let (d_model, count) = read_header(&mut r)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?
        .ok_or_else(|| Error::Format(format!("{} is not an embedding file", path.display())))?;
    if let Some(expected) = expected_dim {
        if expected != d_model {
            return Err(Error::DimensionMismatch {
                expected,
                found: d_model,
            });
        }
    }
    let idx = index_path(path);
    let starts: Vec<u64> = if idx.exists() {
        let f = File::open(&idx).map_err(|e| Error::io(&idx, e))?;
        let mut starts = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&idx, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let offset = line
                .split('\t')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad index line {}", n + 1)))?;
            starts.push(offset);
        }
        starts
    } else {
        Vec::new()
    };

    let mut offsets = BTreeMap::new();
    let record = |offsets: &mut BTreeMap<String, (u64, usize)>, id: String, at: u64, rows| {
        if offsets.insert(id.clone(), (at, rows)).is_some() {
            return Err(Error::DuplicateDocId(id));
        }
        Ok(())
    };
    if starts.is_empty() && count > 0 {
        let mut at = HEADER_LEN;
        for _ in 0..count {
            let (id, rows) = read_entry_head(&mut r)?;
            let data = (rows * d_model * 4) as u64;
            let next = at + 4 + id.len() as u64 + 8 + data;
            r.seek_relative(data as i64).map_err(io)?;
            record(&mut offsets, id, at, rows)?;
            at = next;
        }
    } else {
        if starts.len() as u64 != count {
            return Err(Error::Format(format!(
                "index lists {} entries, header declares {count}",
                starts.len()
            )));
        }
        for at in starts {
            r.seek(SeekFrom::Start(at)).map_err(io)?;
            let (id, rows) = read_entry_head(&mut r)?;
            record(&mut offsets, id, at, rows)?;
        }
    }
    Ok(ExternalEmbeddings {
        path: path.to_path_buf(),
        d_model,
        offsets,
    })
}
