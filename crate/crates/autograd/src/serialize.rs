//! Flat tensor-blob format: a named list of n-dimensional arrays with an
//! explicit dtype tag. Checkpoint files embed one of these sections after
//! their own metadata header.

use std::io::{self, Read, Write};

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use crate::Scalar;

const MAGIC: &[u8; 4] = b"SNTB";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes; not a tensor blob section")]
    BadMagic,
    #[error("unsupported blob version {0}")]
    BadVersion(u16),
    #[error("dtype mismatch: file holds {file}, reader wants {wanted}")]
    DtypeMismatch { file: String, wanted: String },
    #[error("malformed blob section: {0}")]
    Malformed(String),
}

pub fn write_blobs<T: Scalar, W: Write>(
    mut w: W,
    entries: &[(String, ArrayD<T>)],
) -> Result<(), BlobError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let dtype = T::DTYPE.as_bytes();
    w.write_all(&(dtype.len() as u16).to_le_bytes())?;
    w.write_all(dtype)?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, arr) in entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(arr.ndim() as u32).to_le_bytes())?;
        for &d in arr.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let std = arr.as_standard_layout();
        let mut buf = Vec::with_capacity(arr.len() * T::BYTE_WIDTH);
        for &v in std.iter() {
            v.put_le(&mut buf);
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_blobs<T: Scalar, R: Read>(mut r: R) -> Result<Vec<(String, ArrayD<T>)>, BlobError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(BlobError::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(BlobError::BadVersion(version));
    }
    let dlen = read_u16(&mut r)? as usize;
    let mut dtype = vec![0u8; dlen];
    r.read_exact(&mut dtype)?;
    let dtype = String::from_utf8(dtype).map_err(|_| BlobError::Malformed("dtype".into()))?;
    if dtype != T::DTYPE {
        return Err(BlobError::DtypeMismatch {
            file: dtype,
            wanted: T::DTYPE.to_string(),
        });
    }
    let count = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| BlobError::Malformed("name".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r)? as usize);
        }
        let len: usize = dims.iter().product();
        let mut buf = vec![0u8; len * T::BYTE_WIDTH];
        r.read_exact(&mut buf)?;
        let mut vals = Vec::with_capacity(len);
        for chunk in buf.chunks_exact(T::BYTE_WIDTH) {
            vals.push(T::get_le(chunk));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&dims), vals)
            .map_err(|e| BlobError::Malformed(format!("shape: {e}")))?;
        out.push((name, arr));
    }
    Ok(out)
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_values_exactly() {
        let entries = vec![
            (
                "a.weight".to_string(),
                ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.5f32, -2.25, 0.0, 1e-7, 3.75, 9.0])
                    .unwrap(),
            ),
            ("b".to_string(), ArrayD::from_elem(IxDyn(&[]), 0.125f32)),
        ];
        let mut buf = Vec::new();
        write_blobs(&mut buf, &entries).unwrap();
        let back: Vec<(String, ArrayD<f32>)> = read_blobs(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a.weight");
        assert_eq!(back[0].1, entries[0].1);
        assert_eq!(back[1].1, entries[1].1);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let entries = vec![("x".to_string(), ArrayD::from_elem(IxDyn(&[1]), 1.0f32))];
        let mut buf = Vec::new();
        write_blobs(&mut buf, &entries).unwrap();
        let err = read_blobs::<f64, _>(&buf[..]).unwrap_err();
        assert!(matches!(err, BlobError::DtypeMismatch { .. }));
    }
}
