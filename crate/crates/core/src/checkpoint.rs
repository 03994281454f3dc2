//! Checkpoint files: a JSON metadata header (format version, variant
//! configuration, geometry, epoch, validation error, dtype) followed by the
//! tensor blob section. A checkpoint written by any variant reloads into an
//! identically configured build.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use smokeynet_autograd::{serialize, Scalar};
use thiserror::Error;

use crate::model::{ModelError, ModelGeometry, SmokeyNet, VariantConfig};

const MAGIC: &[u8; 4] = b"SMKC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("malformed checkpoint metadata: {0}")]
    BadMeta(#[from] serde_json::Error),
    #[error("tensor section: {0}")]
    Blob(#[from] serialize::BlobError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryMeta {
    pub rows: usize,
    pub cols: usize,
    pub tile_size: usize,
    pub in_channels: usize,
}

impl From<ModelGeometry> for GeometryMeta {
    fn from(g: ModelGeometry) -> Self {
        GeometryMeta {
            rows: g.rows,
            cols: g.cols,
            tile_size: g.tile_size,
            in_channels: g.in_channels,
        }
    }
}

impl From<GeometryMeta> for ModelGeometry {
    fn from(g: GeometryMeta) -> Self {
        ModelGeometry {
            rows: g.rows,
            cols: g.cols,
            tile_size: g.tile_size,
            in_channels: g.in_channels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub variant: VariantConfig,
    pub geometry: GeometryMeta,
    pub epoch: usize,
    pub validation_error: f64,
    pub dtype: String,
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &SmokeyNet<T>,
    epoch: usize,
    validation_error: f64,
) -> Result<(), CheckpointError> {
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        variant: model.config.clone(),
        geometry: model.geometry.into(),
        epoch,
        validation_error,
        dtype: T::DTYPE.to_string(),
    };
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    let meta_json = serde_json::to_vec(&meta)?;
    w.write_all(&(meta_json.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&meta_json).map_err(io_err)?;
    serialize::write_blobs(&mut w, &model.state())?;
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(CheckpointMeta, Vec<(String, ndarray::ArrayD<T>)>), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf).map_err(io_err)?;
    let version = u32::from_le_bytes(vbuf);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut lbuf = [0u8; 8];
    r.read_exact(&mut lbuf).map_err(io_err)?;
    let meta_len = u64::from_le_bytes(lbuf) as usize;
    let mut meta_json = vec![0u8; meta_len];
    r.read_exact(&mut meta_json).map_err(io_err)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_json)?;
    let blobs = serialize::read_blobs::<T, _>(&mut r)?;
    Ok((meta, blobs))
}

/// Read a checkpoint, rebuild the recorded variant, and restore its state.
pub fn load_model<T: Scalar>(path: &Path) -> Result<(CheckpointMeta, SmokeyNet<T>), CheckpointError> {
    let (meta, blobs) = read_checkpoint::<T>(path)?;
    let model = SmokeyNet::build(meta.variant.clone(), meta.geometry.clone().into(), 0)?;
    model.load_state(&blobs)?;
    Ok((meta, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InputBatch, ModelGeometry};
    use smokeynet_autograd::nn::{init::seed_stream, Ctx};
    use rand::Rng;

    #[test]
    fn checkpoint_roundtrip_restores_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch3.ckpt");
        let geometry = ModelGeometry {
            rows: 1,
            cols: 2,
            tile_size: 32,
            in_channels: 3,
        };
        let model =
            SmokeyNet::<f32>::build(VariantConfig::cnn_only(), geometry, 42).unwrap();
        save_checkpoint(&path, &model, 3, 0.125).unwrap();

        let (meta, restored) = load_model::<f32>(&path).unwrap();
        assert_eq!(meta.epoch, 3);
        assert_eq!(meta.validation_error, 0.125);
        assert_eq!(meta.variant, VariantConfig::cnn_only());
        assert_eq!(meta.dtype, "f32");

        let mut rng = seed_stream(1, "ckpt-test");
        let input = crate::model::input_array(1, 1, &geometry, 3, || rng.random::<f32>());
        let batch = InputBatch::new(input);
        let a = model.forward(&batch, &mut Ctx::eval()).unwrap();
        let b = restored.forward(&batch, &mut Ctx::eval()).unwrap();
        assert_eq!(*a.image_logit.data(), *b.image_logit.data());
    }

    #[test]
    fn non_checkpoint_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            read_checkpoint::<f32>(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
