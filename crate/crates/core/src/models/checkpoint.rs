//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "KGDCKPT\0"
//! 8       4     format version (u32, currently 1)
//! 12      1     family tag (0 TransE, 1 DistMult, 2 ComplEx, 3 RotatE)
//! 13      3     zero padding
//! 16      8     dim (u64)
//! 24      8     number of entities (u64)
//! 32      8     number of relations (u64)
//! 40      ...   entity table, f64 row-major, entities × entity_width
//! ...     ...   relation table, f64 row-major, relations × relation_width
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a write/read round trip is
//! bit-exact.

use std::io::{Read, Write};

use super::{EmbeddingModel, Family};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KGDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &EmbeddingModel, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[model.family().tag(), 0, 0, 0])?;
    for n in [model.dim(), model.num_entities(), model.num_relations()] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for x in model.entity_table().iter().chain(model.relation_table()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_table<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("truncated table: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<EmbeddingModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    let family = Family::from_tag(b4[0])
        .ok_or_else(|| Error::Checkpoint(format!("unknown family tag {}", b4[0])))?;
    let dim = read_u64(&mut r)? as usize;
    let ne = read_u64(&mut r)? as usize;
    let nr = read_u64(&mut r)? as usize;
    let ents = read_table(&mut r, ne * family.entity_width(dim))?;
    let rels = read_table(&mut r, nr * family.relation_width(dim))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    EmbeddingModel::from_tables(family, dim, ne, nr, ents, rels)
}
