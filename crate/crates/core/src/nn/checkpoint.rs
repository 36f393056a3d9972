//! Checkpoint container for named parameter tensors. Layout: magic,
//! format version u32, metadata string (u32 length + UTF-8), entry count
//! u32, then per entry a u16 name length, the name, a u8 rank, u32 dims,
//! and the values as little-endian f64; a CRC32 over everything before it
//! closes the file.

use std::fs;
use std::path::Path;

use super::tensor::{NnError, Tensor};
use super::train::Model;

pub const CHECKPOINT_MAGIC: [u8; 4] = [0x48, 0x57, 0x4B, 0x43];
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Free-form caller metadata, typically the serialized run config.
    pub meta: String,
    pub entries: Vec<(String, Tensor)>,
}

fn corrupt(what: impl Into<String>) -> NnError {
    NnError::CorruptCheckpoint(what.into())
}

pub fn encode_checkpoint(meta: &str, entries: &[(String, Tensor)]) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        if name.len() > u16::MAX as usize {
            return Err(NnError::BadConfig(format!("entry name too long: {name}")));
        }
        if tensor.shape.len() > u8::MAX as usize {
            return Err(NnError::BadConfig(format!("rank too high: {name}")));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape.len() as u8);
        for &dim in &tensor.shape {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &value in &tensor.data {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt(format!("truncated reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, NnError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 12 {
        return Err(corrupt("file shorter than fixed header"));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(corrupt(format!(
            "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let mut cur = Cursor { bytes: body, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let meta_len = cur.u32("meta length")? as usize;
    let meta = std::str::from_utf8(cur.take(meta_len, "meta")?)
        .map_err(|e| corrupt(format!("meta not utf-8: {e}")))?
        .to_string();
    let n_entries = cur.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name_len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|e| corrupt(format!("name not utf-8: {e}")))?
            .to_string();
        let ndim = cur.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32("dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 8, "values")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    if cur.pos != body.len() {
        return Err(corrupt(format!(
            "{} trailing bytes after last entry",
            body.len() - cur.pos
        )));
    }
    Ok(Checkpoint {
        version,
        meta,
        entries,
    })
}

pub fn save_checkpoint(
    path: &Path,
    meta: &str,
    entries: &[(String, Tensor)],
) -> Result<(), NnError> {
    let bytes = encode_checkpoint(meta, entries)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Snapshot of a model's parameters, named by visit order as `param_000`,
/// `param_001`, and so on.
pub fn collect_params<X>(model: &mut (impl Model<X> + ?Sized)) -> Vec<(String, Tensor)> {
    let mut entries = Vec::new();
    model.visit_trainable(&mut |param, _| {
        entries.push((format!("param_{:03}", entries.len()), param.clone()));
    });
    entries
}

/// Writes checkpoint entries back into a model, matching by visit order and
/// verifying name and shape.
pub fn restore_params<X>(
    model: &mut (impl Model<X> + ?Sized),
    checkpoint: &Checkpoint,
) -> Result<(), NnError> {
    let mut index = 0usize;
    let mut failure: Option<NnError> = None;
    model.visit_trainable(&mut |param, _| {
        if failure.is_some() {
            return;
        }
        let Some((name, stored)) = checkpoint.entries.get(index) else {
            failure = Some(corrupt(format!(
                "model wants more than {} stored tensors",
                checkpoint.entries.len()
            )));
            return;
        };
        let want = format!("param_{index:03}");
        if *name != want {
            failure = Some(corrupt(format!("entry {index} named {name}, want {want}")));
            return;
        }
        if stored.shape != param.shape {
            failure = Some(corrupt(format!(
                "{name}: stored shape {:?}, model has {:?}",
                stored.shape, param.shape
            )));
            return;
        }
        param.data.copy_from_slice(&stored.data);
        index += 1;
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if index != checkpoint.entries.len() {
        return Err(corrupt(format!(
            "checkpoint has {} tensors, model visited {index}",
            checkpoint.entries.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Dense, Relu};
    use crate::nn::init::seeded_rng;
    use crate::nn::Sequential;

    fn sample_entries() -> Vec<(String, Tensor)> {
        vec![
            (
                "param_000".into(),
                Tensor::from_vec(&[2, 3], vec![1.5, -2.25, 0.0, 3.75, -0.5, 42.0]).unwrap(),
            ),
            ("param_001".into(), Tensor::zeros(&[4])),
            (
                "param_002".into(),
                Tensor::from_vec(&[1], vec![f64::MIN_POSITIVE]).unwrap(),
            ),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let entries = sample_entries();
        let bytes = encode_checkpoint("meta = \"demo\"", &entries).unwrap();
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.version, CHECKPOINT_VERSION);
        assert_eq!(loaded.meta, "meta = \"demo\"");
        assert_eq!(loaded.entries, entries);
        // Re-encoding the decoded content is byte-identical.
        assert_eq!(encode_checkpoint(&loaded.meta, &loaded.entries).unwrap(), bytes);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = encode_checkpoint("", &sample_entries()).unwrap();
        for flip in [0usize, 5, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[flip] ^= 0x40;
            assert!(
                matches!(
                    decode_checkpoint(&bad),
                    Err(NnError::CorruptCheckpoint(_))
                ),
                "flip at {flip} accepted"
            );
        }
        assert!(decode_checkpoint(&bytes[..10]).is_err());
        assert!(decode_checkpoint(&[]).is_err());
    }

    #[test]
    fn model_parameters_survive_a_save_load_cycle() {
        let mut rng = seeded_rng(17);
        let mut model = Sequential::new(vec![
            Box::new(Dense::new(4, 8, &mut rng)),
            Box::new(Relu::new()),
            Box::new(Dense::new(8, 3, &mut rng)),
        ]);
        let entries = collect_params(&mut model);
        assert_eq!(entries.len(), 4);
        let bytes = encode_checkpoint("", &entries).unwrap();

        let mut other = Sequential::new(vec![
            Box::new(Dense::new(4, 8, &mut rng)),
            Box::new(Relu::new()),
            Box::new(Dense::new(8, 3, &mut rng)),
        ]);
        restore_params(&mut other, &decode_checkpoint(&bytes).unwrap()).unwrap();
        assert_eq!(collect_params(&mut other), entries);

        let mut narrow = Sequential::new(vec![Box::new(Dense::new(4, 8, &mut rng))]);
        assert!(restore_params(&mut narrow, &decode_checkpoint(&bytes).unwrap()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("ckpt_roundtrip_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let entries = sample_entries();
        save_checkpoint(&path, "run 1", &entries).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.entries, entries);
        assert_eq!(loaded.meta, "run 1");
        std::fs::remove_dir_all(&dir).ok();
    }
}
