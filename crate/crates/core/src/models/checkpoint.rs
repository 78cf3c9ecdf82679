//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SKATCKPT" | version u32 | architecture u32 | class_count u32
//! tensor_count u32 | per tensor: rank u32, dims u64 x rank
//! payload: f64 values of every tensor in order
//! metadata_len u64 | metadata JSON
//! sha256 of everything above (32 bytes)
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Architecture, Classifier, ModelError, TrainingMetadata};
use crate::autograd::Tensor;
use crate::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SKATCKPT";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

pub fn encode<T: Scalar>(model: &Classifier<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.architecture().code().to_le_bytes());
    out.extend_from_slice(&(model.class_count() as u32).to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&model.metadata).expect("metadata serializes");
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8], source: &str) -> Result<Classifier<T>, ModelError> {
    let fail = |reason: String| ModelError::Checkpoint {
        path: source.to_string(),
        reason,
    };
    if bytes.len() < CHECKPOINT_MAGIC.len() + 32 || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(fail("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32().map_err(fail)?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(fail(format!("unsupported format version {version}")));
    }
    let code = r.u32().map_err(fail)?;
    let architecture = Architecture::from_code(code).ok_or_else(|| fail(format!("unknown architecture id {code}")))?;
    let class_count = r.u32().map_err(fail)? as usize;
    let count = r.u32().map_err(fail)? as usize;
    let expected = architecture.parameter_shapes(class_count);
    if count != expected.len() {
        return Err(fail(format!("{architecture} has {} tensors, file lists {count}", expected.len())));
    }
    let mut shapes = Vec::with_capacity(count);
    for (name, want) in &expected {
        let rank = r.u32().map_err(fail)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64().map_err(fail)? as usize);
        }
        if &shape != want {
            return Err(fail(format!("{name}: shape {shape:?} does not fit {architecture} (expected {want:?})")));
        }
        shapes.push(shape);
    }
    let mut params = Vec::with_capacity(count);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8).map_err(fail)?;
        let data: Vec<T> = raw
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    let meta_len = r.u64().map_err(fail)? as usize;
    let meta = r.take(meta_len).map_err(fail)?;
    if r.pos != body.len() {
        return Err(fail(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let metadata: TrainingMetadata =
        serde_json::from_slice(meta).map_err(|e| fail(format!("metadata: {e}")))?;
    Classifier::from_parts(architecture, class_count, params, metadata).map_err(|e| fail(e.to_string()))
}

pub fn save_checkpoint<T: Scalar>(model: &Classifier<T>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Classifier<T>, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    decode(&bytes, &path.display().to_string())
}
