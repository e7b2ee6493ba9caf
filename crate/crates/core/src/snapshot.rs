//! Binary model snapshots.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset      size            field
//! 0           8               magic  b"B2VEMBED"
//! 8           4               format version (u32, currently 1)
//! 12          4               role tag (u32: 0 generator, 1 discriminator)
//! 16          8               |Z| (u64)
//! 24          8               dim (u64)
//! 32          8 * |Z| * dim   input table, f64, row-major
//! ...         8 * |Z| * dim   output table, f64, row-major
//! ...                         |Z| catalog entries: u32 byte length + UTF-8 id
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Catalog;
use crate::error::{Error, Result};
use crate::model::{EmbeddingModel, Role};

pub const MAGIC: &[u8; 8] = b"B2VEMBED";
pub const VERSION: u32 = 1;

fn role_tag(role: Role) -> u32 {
    match role {
        Role::Generator => 0,
        Role::Discriminator => 1,
    }
}

pub fn write_snapshot<W: Write>(mut w: W, model: &EmbeddingModel, catalog: &Catalog) -> Result<()> {
    if catalog.len() != model.n_items() {
        return Err(Error::CatalogMismatch(format!(
            "model has {} items, catalog {}",
            model.n_items(),
            catalog.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&role_tag(model.role()).to_le_bytes())?;
    w.write_all(&(model.n_items() as u64).to_le_bytes())?;
    w.write_all(&(model.dim() as u64).to_le_bytes())?;
    for v in model.input_table().iter().chain(model.output_table()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for item in catalog.items() {
        let len = u32::try_from(item.len())
            .map_err(|_| Error::Snapshot("catalog id longer than 4 GiB".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(item.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Snapshot(format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(EmbeddingModel, Catalog)> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let role = match u32::from_le_bytes(read_array(&mut r)?) {
        0 => Role::Generator,
        1 => Role::Discriminator,
        other => return Err(Error::Snapshot(format!("unknown role tag {other}"))),
    };
    let n_items = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let dim = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let len = n_items
        .checked_mul(dim)
        .ok_or_else(|| Error::Snapshot("table size overflows".into()))?;

    let mut read_table = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Snapshot(format!("truncated table: {e}")))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let input = read_table()?;
    let output = read_table()?;

    let mut items = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut bytes = vec![0u8; n];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Snapshot(format!("truncated catalog: {e}")))?;
        items.push(
            String::from_utf8(bytes).map_err(|_| Error::Snapshot("catalog id not UTF-8".into()))?,
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Snapshot("trailing bytes".into()));
    }

    let model = EmbeddingModel::from_tables(input, output, n_items, dim, role)
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    let catalog = Catalog::from_items(items).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok((model, catalog))
}

pub fn save(path: &Path, model: &EmbeddingModel, catalog: &Catalog) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), model, catalog)
}

pub fn load(path: &Path) -> Result<(EmbeddingModel, Catalog)> {
    read_snapshot(BufReader::new(File::open(path)?))
}
