//! `PSTK` probability-stack files.
//!
//! Layout, all integers 32-bit little-endian unsigned:
//!
//! ```text
//! "PSTK" | version (=1) | H | W | K | K class ids | K*H*W f32 LE values
//! ```
//!
//! Values are class-major, then row-major.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{FusionError, ProbabilityStack};
use crate::taxonomy::SegmentClass;

pub const PSTK_MAGIC: [u8; 4] = *b"PSTK";
pub const PSTK_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PstkError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("class id {0} is not a SYNTAX class")]
    BadClassId(u32),
    #[error("invalid stack: {0}")]
    Invalid(#[from] FusionError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_pstk<W: Write>(mut out: W, stack: &ProbabilityStack) -> io::Result<()> {
    let mut buf = Vec::with_capacity(20 + 4 * (stack.classes().len() + stack.data().len()));
    buf.extend_from_slice(&PSTK_MAGIC);
    for v in [PSTK_VERSION, stack.height(), stack.width(), stack.classes().len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in stack.classes() {
        buf.extend_from_slice(&(c.id() as u32).to_le_bytes());
    }
    for v in stack.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn write_pstk_file(path: &Path, stack: &ProbabilityStack) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write_pstk(&mut f, stack)?;
    f.flush()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32, PstkError> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(PstkError::Truncated {
            expected: end as u64,
            found: self.bytes.len() as u64,
        })?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    }
}

pub fn read_pstk<R: Read>(mut input: R) -> Result<ProbabilityStack, PstkError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse(&bytes)
}

pub fn read_pstk_file(path: &Path) -> Result<ProbabilityStack, PstkError> {
    parse(&fs::read(path)?)
}

fn parse(bytes: &[u8]) -> Result<ProbabilityStack, PstkError> {
    let found = bytes.len() as u64;
    let magic: [u8; 4] = bytes
        .get(..4)
        .ok_or(PstkError::Truncated { expected: 4, found })?
        .try_into()
        .expect("4 bytes");
    if magic != PSTK_MAGIC {
        return Err(PstkError::BadMagic(magic));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32()?;
    if version != PSTK_VERSION {
        return Err(PstkError::UnsupportedVersion(version));
    }
    let (h, w, k) = (cur.u32()?, cur.u32()?, cur.u32()?);
    let expected = 20 + 4 * (k as u64 + k as u64 * h as u64 * w as u64);
    if found < expected {
        return Err(PstkError::Truncated { expected, found });
    }
    if found > expected {
        return Err(PstkError::TrailingBytes(found - expected));
    }
    let classes = (0..k)
        .map(|_| {
            let id = cur.u32()?;
            SegmentClass::from_id(id).map_err(|_| PstkError::BadClassId(id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let data = bytes[cur.pos..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(ProbabilityStack::new(w, h, classes, data)?)
}
