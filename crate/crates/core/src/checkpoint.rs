//! Binary checkpoint format for parameter sets.
//!
//! Layout (all integers little-endian u32, values little-endian f32):
//!
//! ```text
//! magic   4 bytes  "SPTP"
//! version u32      1
//! count   u32      number of parameter records
//! record: name_len u32, name bytes (UTF-8),
//!         rank u32, rank extents (u32 each),
//!         product(extents) values (f32 each)
//! ```
//!
//! Records appear in parameter construction order. Values are stored as f32,
//! so a save/load round trip of an `f32` model is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::tensor::{ParameterSet, Scalar};
use crate::Error;

const MAGIC: &[u8; 4] = b"SPTP";
const VERSION: u32 = 1;

pub fn save<T: Scalar>(params: &ParameterSet<T>, path: &Path) -> Result<(), Error> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, shape, values) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &e in shape {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in values {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Restores values into an already-constructed parameter set; every record
/// must match an existing parameter's name and shape exactly.
pub fn load_into<T: Scalar>(params: &mut ParameterSet<T>, path: &Path) -> Result<(), Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;

    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], Error> {
        if *cursor + n > bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    let take_u32 = |cursor: &mut usize| -> Result<u32, Error> {
        let b = take(cursor, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = take_u32(&mut cursor)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = take_u32(&mut cursor)? as usize;
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {count} parameters, model has {}",
            params.len()
        )));
    }
    for _ in 0..count {
        let name_len = take_u32(&mut cursor)? as usize;
        let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = take_u32(&mut cursor)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(take_u32(&mut cursor)? as usize);
        }
        let expected = params
            .shape_of(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if expected != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: checkpoint shape {shape:?} does not match model shape {expected:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            let b = take(&mut cursor, 4)?;
            values.push(T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64));
        }
        params
            .set_values(&name, &values)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if cursor != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last record".into()));
    }
    Ok(())
}
