//! CEB1: the binary interchange format for per-chunk layer embeddings.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header (24 bytes)
//!   magic "CEB1" | version u16 | n_layers u16 | dim u32 | record_count u64 | flags u32
//! record
//!   author_id_len u16 | author_id UTF-8 | chunk_index u32 | n_tokens_pooled u32
//!   n_layers × dim f32, row-major
//!   if flags bit 0: sentence_count u16, then per sentence
//!     n_tokens u32 | n_layers × dim f32
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use persona_core::embedding::{ChunkEmbeddingSet, ChunkKey, SentenceEmbedding};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CEB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 24;
pub const FLAG_PER_SENTENCE: u32 = 1;
const RECORD_COUNT_OFFSET: u64 = 12;

#[derive(Debug, thiserror::Error)]
pub enum CebError {
    #[error("bad magic {0:?}, expected \"CEB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown flag bits {0:#x}")]
    UnknownFlags(u32),
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("file truncated at byte offset {offset} while reading {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("header declares {declared} records but the file holds {found}")]
    CountMismatch { declared: u64, found: String },
    #[error("record {key} holds a non-finite value")]
    NonFinite { key: ChunkKey },
    #[error("record {key}: {reason}")]
    InvalidRecord { key: ChunkKey, reason: String },
    #[error("duplicate record {0}")]
    DuplicateKey(ChunkKey),
    #[error("record {key} has shape {got_layers}×{got_dim}, file layout is {n_layers}×{dim}")]
    DimensionMismatch { key: ChunkKey, n_layers: usize, dim: usize, got_layers: usize, got_dim: usize },
    #[error("record {key}: per-sentence block {0}", if *.present { "present but the file layout has none" } else { "missing but the file layout requires one" })]
    SentenceBlockMismatch { key: ChunkKey, present: bool },
    #[error("author id at byte offset {offset} is not valid UTF-8")]
    InvalidAuthorId { offset: u64 },
    #[error("author id of {key} is longer than 65535 bytes")]
    AuthorIdTooLong { key: ChunkKey },
    #[error("record {key} has more than 65535 sentences")]
    TooManySentences { key: ChunkKey },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Shape shared by every record of one file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_layers: usize,
    pub dim: usize,
    pub per_sentence: bool,
}

impl Layout {
    pub fn of(rec: &ChunkEmbeddingSet) -> Self {
        Layout { n_layers: rec.n_layers, dim: rec.dim, per_sentence: rec.per_sentence.is_some() }
    }

    fn matrix_len(&self) -> usize {
        self.n_layers * self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub n_layers: u16,
    pub dim: u32,
    pub record_count: u64,
    pub flags: u32,
}

impl Header {
    pub fn layout(&self) -> Layout {
        Layout {
            n_layers: usize::from(self.n_layers),
            dim: self.dim as usize,
            per_sentence: self.flags & FLAG_PER_SENTENCE != 0,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.n_layers.to_le_bytes());
        b[8..12].copy_from_slice(&self.dim.to_le_bytes());
        b[12..20].copy_from_slice(&self.record_count.to_le_bytes());
        b[20..24].copy_from_slice(&self.flags.to_le_bytes());
        b
    }
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format:        CEB1 v{}", self.version)?;
        writeln!(f, "layers:        {}", self.n_layers)?;
        writeln!(f, "dim:           {}", self.dim)?;
        writeln!(f, "records:       {}", self.record_count)?;
        write!(f, "per-sentence:  {}", if self.flags & FLAG_PER_SENTENCE != 0 { "yes" } else { "no" })
    }
}

/// Streams records to a seekable sink; the record count is patched into the
/// header by [`CebWriter::finish`].
pub struct CebWriter<W: Write + Seek> {
    inner: W,
    layout: Layout,
    count: u64,
    scratch: Vec<u8>,
}

impl<W: Write + Seek> CebWriter<W> {
    pub fn new(mut inner: W, layout: Layout) -> std::result::Result<Self, CebError> {
        let n_layers = u16::try_from(layout.n_layers).map_err(|_| CebError::InvalidHeader("more than 65535 layers"))?;
        let dim = u32::try_from(layout.dim).map_err(|_| CebError::InvalidHeader("dimension exceeds u32"))?;
        let header = Header {
            version: VERSION,
            n_layers,
            dim,
            record_count: 0,
            flags: if layout.per_sentence { FLAG_PER_SENTENCE } else { 0 },
        };
        inner.write_all(&header.to_bytes())?;
        Ok(CebWriter { inner, layout, count: 0, scratch: Vec::new() })
    }

    pub fn write(&mut self, rec: &ChunkEmbeddingSet) -> std::result::Result<(), CebError> {
        let key = rec.key();
        if rec.n_layers != self.layout.n_layers || rec.dim != self.layout.dim {
            return Err(CebError::DimensionMismatch {
                key,
                n_layers: self.layout.n_layers,
                dim: self.layout.dim,
                got_layers: rec.n_layers,
                got_dim: rec.dim,
            });
        }
        if rec.per_sentence.is_some() != self.layout.per_sentence {
            return Err(CebError::SentenceBlockMismatch { key, present: rec.per_sentence.is_some() });
        }
        rec.validate().map_err(|e| CebError::InvalidRecord { key: key.clone(), reason: e.to_string() })?;
        let id_len = u16::try_from(rec.author_id.len()).map_err(|_| CebError::AuthorIdTooLong { key: key.clone() })?;

        let b = &mut self.scratch;
        b.clear();
        b.extend_from_slice(&id_len.to_le_bytes());
        b.extend_from_slice(rec.author_id.as_bytes());
        b.extend_from_slice(&rec.chunk_index.to_le_bytes());
        b.extend_from_slice(&rec.n_tokens_pooled.to_le_bytes());
        put_f32s(b, &rec.layers);
        if let Some(sentences) = &rec.per_sentence {
            let n = u16::try_from(sentences.len()).map_err(|_| CebError::TooManySentences { key })?;
            b.extend_from_slice(&n.to_le_bytes());
            for s in sentences {
                b.extend_from_slice(&s.n_tokens.to_le_bytes());
                put_f32s(b, &s.layers);
            }
        }
        self.inner.write_all(b)?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Patches the record count into the header and returns the sink.
    pub fn finish(mut self) -> std::result::Result<W, CebError> {
        self.inner.seek(SeekFrom::Start(RECORD_COUNT_OFFSET))?;
        self.inner.write_all(&self.count.to_le_bytes())?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    buf.reserve(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes `records` to `path` and returns how many were written.
pub fn write_embeddings<'a, I>(path: &Path, layout: Layout, records: I) -> Result<u64>
where
    I: IntoIterator<Item = &'a ChunkEmbeddingSet>,
{
    let wrap = |source| Error::Embeddings { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = CebWriter::new(BufWriter::new(file), layout).map_err(wrap)?;
    for rec in records {
        w.write(rec).map_err(wrap)?;
    }
    let count = w.count();
    w.finish().map_err(wrap)?;
    Ok(count)
}

/// Reader that tracks its byte offset so truncation can be located.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn fill(&mut self, buf: &mut [u8], what: &'static str) -> std::result::Result<(), CebError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(CebError::Truncated { offset: self.offset, what })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> std::result::Result<[u8; N], CebError> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }

    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, CebError> {
        self.array(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CebError> {
        self.array(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, CebError> {
        self.array(what).map(u64::from_le_bytes)
    }

    fn f32s(&mut self, n: usize, scratch: &mut Vec<u8>, what: &'static str) -> std::result::Result<Vec<f32>, CebError> {
        scratch.resize(n * 4, 0);
        self.fill(scratch, what)?;
        Ok(scratch.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    fn at_end(&mut self) -> std::result::Result<bool, CebError> {
        let mut b = [0u8; 1];
        loop {
            match self.inner.read(&mut b) {
                Ok(0) => return Ok(true),
                Ok(_) => return Ok(false),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

fn read_header_from<R: Read>(cur: &mut Cursor<R>) -> std::result::Result<Header, CebError> {
    let magic: [u8; 4] = cur.array("magic")?;
    if magic != MAGIC {
        return Err(CebError::BadMagic(magic));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(CebError::UnsupportedVersion(version));
    }
    let header = Header {
        version,
        n_layers: cur.u16("n_layers")?,
        dim: cur.u32("dim")?,
        record_count: cur.u64("record_count")?,
        flags: cur.u32("flags")?,
    };
    if header.flags & !FLAG_PER_SENTENCE != 0 {
        return Err(CebError::UnknownFlags(header.flags));
    }
    if header.record_count > 0 && (header.n_layers == 0 || header.dim == 0) {
        return Err(CebError::InvalidHeader("records present but layer count or dimension is zero"));
    }
    Ok(header)
}

/// Reads only the header.
pub fn read_header<R: Read>(reader: R) -> std::result::Result<Header, CebError> {
    read_header_from(&mut Cursor { inner: reader, offset: 0 })
}

/// A fully loaded embedding file, indexed by chunk key.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub header: Header,
    pub records: BTreeMap<ChunkKey, ChunkEmbeddingSet>,
}

impl EmbeddingStore {
    pub fn layout(&self) -> Layout {
        self.header.layout()
    }

    pub fn get(&self, author_id: &str, chunk_index: u32) -> Option<&ChunkEmbeddingSet> {
        self.records.get(&ChunkKey::new(author_id, chunk_index))
    }

    pub fn keys(&self) -> impl Iterator<Item = &ChunkKey> {
        self.records.keys()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn read_from<R: Read>(reader: R) -> std::result::Result<EmbeddingStore, CebError> {
    let mut cur = Cursor { inner: reader, offset: 0 };
    let header = read_header_from(&mut cur)?;
    let layout = header.layout();
    let size = layout.matrix_len();
    let mut scratch = Vec::new();
    let mut records = BTreeMap::new();
    for read in 0..header.record_count {
        let record_start = cur.offset;
        let id_len = match cur.u16("author id length") {
            Ok(n) => n,
            Err(CebError::Truncated { offset, .. }) if offset == record_start => {
                return Err(CebError::CountMismatch { declared: header.record_count, found: read.to_string() });
            }
            Err(e) => return Err(e),
        };
        let id_offset = cur.offset;
        let mut id = vec![0u8; usize::from(id_len)];
        cur.fill(&mut id, "author id")?;
        let author_id = String::from_utf8(id).map_err(|_| CebError::InvalidAuthorId { offset: id_offset })?;
        let chunk_index = cur.u32("chunk index")?;
        let key = ChunkKey::new(author_id.clone(), chunk_index);
        let n_tokens_pooled = cur.u32("token count")?;
        let layers = cur.f32s(size, &mut scratch, "layer matrix")?;
        let per_sentence = if layout.per_sentence {
            let n = cur.u16("sentence count")?;
            let mut sentences = Vec::with_capacity(usize::from(n));
            for _ in 0..n {
                let n_tokens = cur.u32("sentence token count")?;
                let layers = cur.f32s(size, &mut scratch, "sentence matrix")?;
                sentences.push(SentenceEmbedding { n_tokens, layers });
            }
            Some(sentences)
        } else {
            None
        };
        let rec = ChunkEmbeddingSet {
            author_id,
            chunk_index,
            n_layers: layout.n_layers,
            dim: layout.dim,
            layers,
            n_tokens_pooled,
            per_sentence,
        };
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !finite(&rec.layers) || rec.per_sentence.iter().flatten().any(|s| !finite(&s.layers)) {
            return Err(CebError::NonFinite { key });
        }
        rec.validate().map_err(|e| CebError::InvalidRecord { key: key.clone(), reason: e.to_string() })?;
        if records.insert(key.clone(), rec).is_some() {
            return Err(CebError::DuplicateKey(key));
        }
    }
    if !cur.at_end()? {
        return Err(CebError::CountMismatch {
            declared: header.record_count,
            found: format!("trailing bytes after byte offset {}", cur.offset),
        });
    }
    Ok(EmbeddingStore { header, records })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::with_capacity(1 << 20, file))
        .map_err(|source| Error::Embeddings { path: path.to_path_buf(), source })
}

pub fn read_embeddings_header(path: &Path) -> Result<Header> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_header(file).map_err(|source| Error::Embeddings { path: path.to_path_buf(), source })
}
