//! Append-only segment store.
//!
//! Raw bytes are kept exactly as appended. In file-backed mode a store is a
//! directory holding `segments.bin` (the concatenated bytes, no framing) and
//! `segments.meta`, one line per segment:
//!
//! ```text
//! segment_id<TAB>offset<TAB>length<TAB>timestamp<TAB>source_tag\n
//! ```
//!
//! Appends take `&mut self` and reads take `&self`, which gives the
//! single-writer/multi-reader contract for free.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type SegmentId = u64;

pub const DATA_FILE: &str = "segments.bin";
pub const META_FILE: &str = "segments.meta";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("segment bytes must be non-empty")]
    EmptySegment,
    #[error("timestamp {got} precedes last appended timestamp {last}")]
    TimestampRegression { last: u64, got: u64 },
    #[error("unknown segment {0}")]
    UnknownSegment(SegmentId),
    #[error("source tag {0:?} contains a tab or newline")]
    InvalidTag(String),
    #[error("corrupt metadata at line {line}: {reason}")]
    CorruptMetadata { line: usize, reason: String },
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub segment_id: SegmentId,
    pub bytes: Vec<u8>,
    pub timestamp: u64,
    pub source_tag: String,
}

/// A run of consecutive tokens sharing one window index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamWindow {
    pub window_index: u64,
    /// First and last segment touched by the window's tokens.
    pub segment_range: (SegmentId, SegmentId),
    pub token_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct SegmentMeta {
    offset: u64,
    length: u64,
    timestamp: u64,
    source_tag: String,
}

#[derive(Debug)]
struct Backing {
    data: File,
    meta: File,
}

#[derive(Debug, Default)]
pub struct StreamStore {
    data: Vec<u8>,
    metas: Vec<SegmentMeta>,
    backing: Option<Backing>,
    dir: Option<PathBuf>,
}

impl StreamStore {
    pub fn in_memory() -> Self {
        StreamStore::default()
    }

    /// Opens (or creates) a file-backed store rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let data_path = dir.join(DATA_FILE);
        let meta_path = dir.join(META_FILE);

        let mut data = Vec::new();
        if data_path.exists() {
            File::open(&data_path)?.read_to_end(&mut data)?;
        }
        let metas = if meta_path.exists() {
            parse_meta(BufReader::new(File::open(&meta_path)?))?
        } else {
            Vec::new()
        };

        let expected: u64 = metas.iter().map(|m| m.length).sum();
        if expected != data.len() as u64 {
            return Err(StoreError::CorruptMetadata {
                line: metas.len(),
                reason: format!(
                    "metadata covers {expected} bytes, data file holds {}",
                    data.len()
                ),
            });
        }

        let backing = Backing {
            data: OpenOptions::new()
                .create(true)
                .append(true)
                .open(&data_path)?,
            meta: OpenOptions::new()
                .create(true)
                .append(true)
                .open(&meta_path)?,
        };
        Ok(StreamStore {
            data,
            metas,
            backing: Some(backing),
            dir: Some(dir.to_path_buf()),
        })
    }

    /// Directory of a file-backed store.
    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.metas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metas.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.metas.last().map(|m| m.timestamp)
    }

    pub fn append(
        &mut self,
        bytes: &[u8],
        timestamp: u64,
        source_tag: &str,
    ) -> Result<SegmentId, StoreError> {
        if bytes.is_empty() {
            return Err(StoreError::EmptySegment);
        }
        if let Some(last) = self.last_timestamp() {
            if timestamp < last {
                return Err(StoreError::TimestampRegression {
                    last,
                    got: timestamp,
                });
            }
        }
        if source_tag.contains(['\t', '\n', '\r']) {
            return Err(StoreError::InvalidTag(source_tag.to_string()));
        }

        let segment_id = self.metas.len() as SegmentId;
        let meta = SegmentMeta {
            offset: self.data.len() as u64,
            length: bytes.len() as u64,
            timestamp,
            source_tag: source_tag.to_string(),
        };
        if let Some(backing) = self.backing.as_mut() {
            // Data first: a crash between the two writes leaves trailing bytes
            // that `open` reports, never a metadata line pointing past the end.
            backing.data.write_all(bytes)?;
            backing.data.flush()?;
            backing
                .meta
                .write_all(meta_line(segment_id, &meta).as_bytes())?;
            backing.meta.flush()?;
        }
        self.data.extend_from_slice(bytes);
        self.metas.push(meta);
        Ok(segment_id)
    }

    pub fn read(&self, segment_id: SegmentId) -> Result<Segment, StoreError> {
        let meta = self
            .metas
            .get(segment_id as usize)
            .ok_or(StoreError::UnknownSegment(segment_id))?;
        Ok(Segment {
            segment_id,
            bytes: self.slice(meta).to_vec(),
            timestamp: meta.timestamp,
            source_tag: meta.source_tag.clone(),
        })
    }

    /// Borrowed view of a segment's bytes.
    pub fn bytes(&self, segment_id: SegmentId) -> Result<&[u8], StoreError> {
        let meta = self
            .metas
            .get(segment_id as usize)
            .ok_or(StoreError::UnknownSegment(segment_id))?;
        Ok(self.slice(meta))
    }

    /// `(segment_id, timestamp, byte_length)` for every segment, by id.
    pub fn snapshot(&self) -> Vec<(SegmentId, u64, u64)> {
        self.metas
            .iter()
            .enumerate()
            .map(|(i, m)| (i as SegmentId, m.timestamp, m.length))
            .collect()
    }

    /// All segments in append order.
    pub fn segments(&self) -> Vec<Segment> {
        (0..self.metas.len() as SegmentId)
            .map(|id| self.read(id).expect("id in range"))
            .collect()
    }

    /// The metadata sidecar exactly as it is written to disk.
    pub fn metadata_text(&self) -> String {
        self.metas
            .iter()
            .enumerate()
            .map(|(i, m)| meta_line(i as SegmentId, m))
            .collect()
    }

    fn slice(&self, meta: &SegmentMeta) -> &[u8] {
        &self.data[meta.offset as usize..(meta.offset + meta.length) as usize]
    }
}

fn meta_line(segment_id: SegmentId, m: &SegmentMeta) -> String {
    format!(
        "{segment_id}\t{}\t{}\t{}\t{}\n",
        m.offset, m.length, m.timestamp, m.source_tag
    )
}

fn parse_meta(reader: impl BufRead) -> Result<Vec<SegmentMeta>, StoreError> {
    let mut metas: Vec<SegmentMeta> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let corrupt = |reason: &str| StoreError::CorruptMetadata {
            line: lineno,
            reason: reason.into(),
        };
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        if fields.len() != 5 {
            return Err(corrupt("expected 5 tab-separated fields"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| corrupt("non-numeric field"));
        let id = num(fields[0])?;
        let meta = SegmentMeta {
            offset: num(fields[1])?,
            length: num(fields[2])?,
            timestamp: num(fields[3])?,
            source_tag: fields[4].to_string(),
        };
        if id != metas.len() as u64 {
            return Err(corrupt("segment ids must be dense and increasing"));
        }
        let expected_offset = metas.last().map_or(0, |m| m.offset + m.length);
        if meta.offset != expected_offset {
            return Err(corrupt("offsets must be contiguous"));
        }
        if metas.last().is_some_and(|m| meta.timestamp < m.timestamp) {
            return Err(corrupt("timestamps must be non-decreasing"));
        }
        metas.push(meta);
    }
    Ok(metas)
}
