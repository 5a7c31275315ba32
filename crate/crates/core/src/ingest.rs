//! Bundle file I/O, qrels parsing, and attention-derived importance.
//!
//! The bundle format is little-endian, versioned, and streaming-friendly:
//! one self-contained record per document, so corpora larger than memory
//! can be processed one document at a time.
//!
//! ```text
//! magic "MVEB" | version u32=1 | doc_count u64 | doc records...
//!
//! record: id_len u32 | id (UTF-8) | n u32 | d u32 | flags u32
//!         [grid_rows u32, grid_cols u32   if flags bit2]
//!         embeddings n*d f32 row-major
//!         [importance n f32               if flags bit0]
//!         [eos d f32                      if flags bit1]
//! ```
//!
//! Queries reuse the same container (a query is just a small multi-vector
//! set). Qrels are TSV lines `query_id<TAB>doc_id<TAB>grade`; lines starting
//! with `#` are comments.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::model::{validate, Matrix, PatchEmbeddingSet, QueryEmbeddingSet};

pub const MAGIC: [u8; 4] = *b"MVEB";
pub const VERSION: u32 = 1;

const FLAG_IMPORTANCE: u32 = 1;
const FLAG_EOS: u32 = 1 << 1;
const FLAG_GRID: u32 = 1 << 2;

/// Per-record element cap, guards against allocating on corrupt headers.
const MAX_RECORD_ELEMS: u64 = 1 << 28;

/// Relevance judgments: query_id -> doc_id -> grade.
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

/// Final-layer attention weights plus the positions needed to read off
/// per-patch importance.
#[derive(Debug, Clone)]
pub struct AttentionTensor {
    /// `H * S * S` weights, head-major then row-major.
    pub weights: Vec<f32>,
    pub heads: usize,
    pub seq_len: usize,
    /// Sequence position of the global token.
    pub eos_index: usize,
    /// Sequence positions of the patches, in patch order.
    pub patch_indices: Vec<usize>,
}

impl AttentionTensor {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(Error::Empty("attention heads"));
        }
        let s = self.seq_len;
        if self.weights.len() != self.heads * s * s {
            return Err(Error::DimensionMismatch {
                context: "attention weights",
                expected: self.heads * s * s,
                actual: self.weights.len(),
            });
        }
        if self.eos_index >= s {
            return Err(Error::IndexOutOfRange {
                context: "eos index",
                index: self.eos_index,
                bound: s,
            });
        }
        if self.patch_indices.is_empty() {
            return Err(Error::Empty("patch indices"));
        }
        let mut seen = vec![false; s];
        for &p in &self.patch_indices {
            if p >= s {
                return Err(Error::IndexOutOfRange {
                    context: "patch index",
                    index: p,
                    bound: s,
                });
            }
            if p == self.eos_index {
                return Err(Error::IndexOutOfRange {
                    context: "patch index collides with eos",
                    index: p,
                    bound: s,
                });
            }
            if seen[p] {
                return Err(Error::IndexOutOfRange {
                    context: "duplicate patch index",
                    index: p,
                    bound: s,
                });
            }
            seen[p] = true;
        }
        Ok(())
    }

    fn at(&self, head: usize, from: usize, to: usize) -> f32 {
        self.weights[(head * self.seq_len + from) * self.seq_len + to]
    }
}

/// Importance of patch `j` is the attention it receives from the global
/// token, averaged over heads: `(1/H) * sum_h A[h][eos][patch_j]`.
/// Output order follows `patch_indices`.
pub fn importance_from_attention(attn: &AttentionTensor) -> Result<Vec<f32>> {
    attn.validate()?;
    let h = attn.heads;
    let mut out = Vec::with_capacity(attn.patch_indices.len());
    for &p in &attn.patch_indices {
        let mut acc = 0.0f64;
        for head in 0..h {
            acc += f64::from(attn.at(head, attn.eos_index, p));
        }
        out.push((acc / h as f64) as f32);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// bundle writing

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize documents into the bundle format. Every document is validated
/// before any bytes are written.
pub fn write_bundle(docs: &[PatchEmbeddingSet], sink: &mut impl Write) -> Result<()> {
    for doc in docs {
        validate(doc).map_err(|e| e.for_doc(&doc.doc_id))?;
    }
    sink.write_all(&MAGIC)?;
    write_u32(sink, VERSION)?;
    write_u64(sink, docs.len() as u64)?;
    for doc in docs {
        let id = doc.doc_id.as_bytes();
        write_u32(sink, id.len() as u32)?;
        sink.write_all(id)?;
        write_u32(sink, doc.n_patches() as u32)?;
        write_u32(sink, doc.dim() as u32)?;
        let mut flags = 0;
        if doc.importance.is_some() {
            flags |= FLAG_IMPORTANCE;
        }
        if doc.eos_embedding.is_some() {
            flags |= FLAG_EOS;
        }
        if doc.grid_shape.is_some() {
            flags |= FLAG_GRID;
        }
        write_u32(sink, flags)?;
        if let Some((rows, cols)) = doc.grid_shape {
            write_u32(sink, rows as u32)?;
            write_u32(sink, cols as u32)?;
        }
        write_f32s(sink, doc.embeddings.as_slice())?;
        if let Some(imp) = &doc.importance {
            write_f32s(sink, imp)?;
        }
        if let Some(eos) = &doc.eos_embedding {
            write_f32s(sink, eos)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bundle reading

fn map_eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated
    } else {
        Error::Io(e)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(map_eof)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, len: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Deserialize a bundle. `read_bundle(write_bundle(docs)) == docs` bit for bit.
pub fn read_bundle(source: &mut impl Read) -> Result<Vec<PatchEmbeddingSet>> {
    let mut magic = [0u8; 4];
    read_exact(source, &mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(source)?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let doc_count = read_u64(source)?;
    let mut docs = Vec::new();
    for _ in 0..doc_count {
        docs.push(read_record(source)?);
    }
    Ok(docs)
}

fn read_record(r: &mut impl Read) -> Result<PatchEmbeddingSet> {
    let id_len = read_u32(r)? as usize;
    if id_len as u64 > MAX_RECORD_ELEMS {
        return Err(oversized("doc id"));
    }
    let mut id_bytes = vec![0u8; id_len];
    read_exact(r, &mut id_bytes)?;
    let doc_id = String::from_utf8(id_bytes)
        .map_err(|_| Error::Io(io::Error::new(io::ErrorKind::InvalidData, "doc id not UTF-8")))?;

    let n = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    if n == 0 || d == 0 {
        return Err(Error::DimensionMismatch {
            context: "bundle record shape",
            expected: 1,
            actual: 0,
        });
    }
    if (n as u64) * (d as u64) > MAX_RECORD_ELEMS {
        return Err(oversized("embedding matrix"));
    }
    let flags = read_u32(r)?;
    if flags & !(FLAG_IMPORTANCE | FLAG_EOS | FLAG_GRID) != 0 {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unknown flag bits {flags:#x}"),
        )));
    }

    let grid = if flags & FLAG_GRID != 0 {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if rows * cols != n {
            return Err(Error::DimensionMismatch {
                context: "bundle grid shape",
                expected: n,
                actual: rows * cols,
            });
        }
        Some((rows, cols))
    } else {
        None
    };

    let embeddings = Matrix::new(n, d, read_f32s(r, n * d)?)?;
    let importance = if flags & FLAG_IMPORTANCE != 0 {
        Some(read_f32s(r, n)?)
    } else {
        None
    };
    let eos_embedding = if flags & FLAG_EOS != 0 {
        Some(read_f32s(r, d)?)
    } else {
        None
    };

    Ok(PatchEmbeddingSet {
        doc_id,
        embeddings,
        importance,
        eos_embedding,
        grid_shape: grid,
    })
}

fn oversized(what: &str) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{what} exceeds the per-record size limit"),
    ))
}

/// Read queries from a bundle; the record id becomes the query id and
/// optional fields are ignored.
pub fn read_queries(source: &mut impl Read) -> Result<Vec<QueryEmbeddingSet>> {
    let docs = read_bundle(source)?;
    let queries: Vec<QueryEmbeddingSet> = docs
        .into_iter()
        .map(|d| QueryEmbeddingSet::new(d.doc_id, d.embeddings))
        .collect();
    for q in &queries {
        q.validate()?;
    }
    Ok(queries)
}

// ---------------------------------------------------------------------------
// qrels

/// Parse TSV relevance judgments. Each (query, doc) pair may appear once.
pub fn read_qrels(source: &mut impl Read) -> Result<Qrels> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut qrels = Qrels::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let grade: u32 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("grade {:?} is not a non-negative integer", fields[2]),
        })?;
        let row = qrels.entry(fields[0].to_owned()).or_default();
        if row.insert(fields[1].to_owned(), grade).is_some() {
            return Err(Error::DuplicateJudgment {
                line: line_no,
                query_id: fields[0].to_owned(),
                doc_id: fields[1].to_owned(),
            });
        }
    }
    Ok(qrels)
}

/// Write qrels in the same TSV layout `read_qrels` accepts.
pub fn write_qrels(qrels: &Qrels, sink: &mut impl Write) -> Result<()> {
    for (query_id, row) in qrels {
        for (doc_id, grade) in row {
            writeln!(sink, "{query_id}\t{doc_id}\t{grade}")?;
        }
    }
    Ok(())
}
