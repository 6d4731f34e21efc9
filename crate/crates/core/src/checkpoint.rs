//! Checkpoint container: a checksummed, length-prefixed record file holding
//! every tensor, optimizer moment, normalization buffer, and counter needed
//! to resume a run bit-exactly. Serialization order is fixed by the caller's
//! record order, so save → load → save is byte-identical.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::params::Params;
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
    Bytes(Vec<u8>),
}

impl RecordData {
    fn code(&self) -> u8 {
        match self {
            RecordData::F32(_) => 0,
            RecordData::F64(_) => 1,
            RecordData::U64(_) => 2,
            RecordData::Bytes(_) => 3,
        }
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: RecordData,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub records: Vec<Record>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Snapshot {
    pub fn push_tensor<S: Scalar>(&mut self, name: &str, t: &Tensor<S>) {
        let data = match S::DTYPE {
            Dtype::F32 => RecordData::F32(t.data().iter().map(|&v| v.to_f64() as f32).collect()),
            Dtype::F64 => RecordData::F64(t.data().iter().map(|&v| v.to_f64()).collect()),
        };
        self.records.push(Record { name: name.to_string(), shape: t.shape().to_vec(), data });
    }

    pub fn push_u64s(&mut self, name: &str, vs: &[u64]) {
        self.records.push(Record {
            name: name.to_string(),
            shape: vec![vs.len()],
            data: RecordData::U64(vs.to_vec()),
        });
    }

    pub fn push_u64(&mut self, name: &str, v: u64) {
        self.push_u64s(name, &[v]);
    }

    pub fn push_string(&mut self, name: &str, s: &str) {
        self.records.push(Record {
            name: name.to_string(),
            shape: vec![s.len()],
            data: RecordData::Bytes(s.as_bytes().to_vec()),
        });
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing record '{name}'")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.records.iter().any(|r| r.name == name)
    }

    pub fn tensor<S: Scalar>(&self, name: &str) -> Result<Tensor<S>> {
        let r = self.get(name)?;
        let vals: Vec<S> = match (&r.data, S::DTYPE) {
            (RecordData::F32(v), Dtype::F32) => v.iter().map(|&x| S::from_f64(x as f64)).collect(),
            (RecordData::F64(v), Dtype::F64) => v.iter().map(|&x| S::from_f64(x)).collect(),
            _ => {
                return Err(Error::Checkpoint(format!(
                    "record '{name}' holds a different dtype than requested"
                )))
            }
        };
        Tensor::from_vec(&r.shape, vals)
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.data {
            RecordData::U64(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("record '{name}' is not a u64 record"))),
        }
    }

    pub fn u64_scalar(&self, name: &str) -> Result<u64> {
        let v = self.u64s(name)?;
        if v.len() != 1 {
            return Err(Error::Checkpoint(format!("record '{name}' is not a scalar")));
        }
        Ok(v[0])
    }

    pub fn string(&self, name: &str) -> Result<String> {
        match &self.get(name)?.data {
            RecordData::Bytes(v) => String::from_utf8(v.clone())
                .map_err(|_| Error::Checkpoint(format!("record '{name}' is not UTF-8"))),
            _ => Err(Error::Checkpoint(format!("record '{name}' is not a byte record"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        for r in &self.records {
            put_u32(&mut payload, r.name.len() as u32);
            payload.extend_from_slice(r.name.as_bytes());
            payload.push(r.data.code());
            put_u32(&mut payload, r.shape.len() as u32);
            for &d in &r.shape {
                put_u64(&mut payload, d as u64);
            }
            match &r.data {
                RecordData::F32(v) => v.iter().for_each(|x| x.write_le(&mut payload)),
                RecordData::F64(v) => v.iter().for_each(|x| x.write_le(&mut payload)),
                RecordData::U64(v) => v.iter().for_each(|&x| put_u64(&mut payload, x)),
                RecordData::Bytes(v) => payload.extend_from_slice(v),
            }
        }
        let mut out = Vec::with_capacity(payload.len() + 20);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, crc32fast::hash(&payload));
        put_u64(&mut out, payload.len() as u64);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Snapshot> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:02x?}, expected {MAGIC:02x?}")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let want_crc = r.u32("checksum")?;
        let len = r.u64("payload length")? as usize;
        let payload = r.take(len, "payload")?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the payload",
                buf.len() - r.pos
            )));
        }
        let got_crc = crc32fast::hash(payload);
        if got_crc != want_crc {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch: stored {want_crc:#010x}, computed {got_crc:#010x}"
            )));
        }
        let mut pr = Reader { buf: payload, pos: 0 };
        let mut records = Vec::new();
        let mut seen = BTreeSet::new();
        while pr.pos < payload.len() {
            let name_len = pr.u32("record name length")? as usize;
            let name = String::from_utf8(pr.take(name_len, "record name")?.to_vec())
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
            if !seen.insert(name.clone()) {
                return Err(Error::Checkpoint(format!("duplicate record '{name}'")));
            }
            let code = pr.take(1, "dtype")?[0];
            let ndim = pr.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(pr.u64("dimension")? as usize);
            }
            let numel: usize = shape.iter().product();
            let data = match code {
                0 => {
                    let raw = pr.take(numel * 4, &format!("'{name}' f32 data"))?;
                    RecordData::F32(raw.chunks_exact(4).map(f32::read_le).collect())
                }
                1 => {
                    let raw = pr.take(numel * 8, &format!("'{name}' f64 data"))?;
                    RecordData::F64(raw.chunks_exact(8).map(f64::read_le).collect())
                }
                2 => {
                    let raw = pr.take(numel * 8, &format!("'{name}' u64 data"))?;
                    RecordData::U64(
                        raw.chunks_exact(8)
                            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                3 => RecordData::Bytes(pr.take(numel, &format!("'{name}' bytes"))?.to_vec()),
                other => {
                    return Err(Error::Checkpoint(format!(
                        "record '{name}' has unknown dtype code {other}"
                    )))
                }
            };
            records.push(Record { name, shape, data });
        }
        Ok(Snapshot { records })
    }

    /// Atomic save: write to a sibling temp file, then rename into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)
                .map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
            f.write_all(&bytes).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
            f.sync_all().map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Snapshot> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
            .read_to_end(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Snapshot::from_bytes(&buf)
    }
}

// ── Model and optimizer record helpers ───────────────────────────────────────

/// Record every parameter tensor of a model under `prefix/`.
pub fn record_params<S: Scalar>(snap: &mut Snapshot, prefix: &str, model: &mut dyn Params<S>) {
    model.visit_params("", &mut |name, v, _| {
        snap.push_tensor(&format!("{prefix}/{name}"), v);
    });
}

/// Restore parameters; validates that every tensor exists with the right
/// shape before touching the model, so a bad checkpoint leaves it intact.
pub fn restore_params<S: Scalar>(
    snap: &Snapshot,
    prefix: &str,
    model: &mut dyn Params<S>,
) -> Result<()> {
    let mut needed: Vec<(String, Vec<usize>)> = Vec::new();
    model.visit_params("", &mut |name, v, _| {
        needed.push((format!("{prefix}/{name}"), v.shape().to_vec()));
    });
    let mut loaded = Vec::with_capacity(needed.len());
    for (name, shape) in &needed {
        let t: Tensor<S> = snap.tensor(name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "record '{name}' has shape {:?}, model wants {:?}",
                t.shape(),
                shape
            )));
        }
        loaded.push(t);
    }
    let mut it = loaded.into_iter();
    model.visit_params("", &mut |_, v, _| {
        *v = it.next().expect("collected one tensor per parameter");
    });
    Ok(())
}

/// Record non-parameter state tensors (e.g. power-iteration vectors).
pub fn record_buffers<S: Scalar>(snap: &mut Snapshot, prefix: &str, model: &mut dyn Params<S>) {
    model.visit_buffers("", &mut |name, v| {
        snap.push_tensor(&format!("{prefix}/{name}"), v);
    });
}

pub fn restore_buffers<S: Scalar>(
    snap: &Snapshot,
    prefix: &str,
    model: &mut dyn Params<S>,
) -> Result<()> {
    let mut needed: Vec<(String, Vec<usize>)> = Vec::new();
    model.visit_buffers("", &mut |name, v| {
        needed.push((format!("{prefix}/{name}"), v.shape().to_vec()));
    });
    let mut loaded = Vec::with_capacity(needed.len());
    for (name, shape) in &needed {
        let t: Tensor<S> = snap.tensor(name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "buffer '{name}' has shape {:?}, model wants {:?}",
                t.shape(),
                shape
            )));
        }
        loaded.push(t);
    }
    let mut it = loaded.into_iter();
    model.visit_buffers("", &mut |_, v| {
        *v = it.next().expect("collected one tensor per buffer");
    });
    Ok(())
}

/// Record an Adam state: step count plus both moment vectors per parameter.
pub fn record_adam(snap: &mut Snapshot, prefix: &str, opt: &Adam) {
    snap.push_u64(&format!("{prefix}/step"), opt.step_count);
    for (name, (m, s)) in &opt.moments {
        snap.records.push(Record {
            name: format!("{prefix}/{name}.m"),
            shape: vec![m.len()],
            data: RecordData::F64(m.clone()),
        });
        snap.records.push(Record {
            name: format!("{prefix}/{name}.s"),
            shape: vec![s.len()],
            data: RecordData::F64(s.clone()),
        });
    }
}

/// Restore an Adam state recorded by `record_adam`. Record names under the
/// prefix define the moment keys, so the map round-trips exactly.
pub fn restore_adam(snap: &Snapshot, prefix: &str, opt: &mut Adam) -> Result<()> {
    opt.step_count = snap.u64_scalar(&format!("{prefix}/step"))?;
    opt.moments.clear();
    let lead = format!("{prefix}/");
    for r in &snap.records {
        let Some(rest) = r.name.strip_prefix(&lead) else { continue };
        let Some(param) = rest.strip_suffix(".m") else { continue };
        let m = match &r.data {
            RecordData::F64(v) => v.clone(),
            _ => {
                return Err(Error::Checkpoint(format!("moment '{}' is not f64", r.name)));
            }
        };
        let s_name = format!("{prefix}/{param}.s");
        let s = match &snap.get(&s_name)?.data {
            RecordData::F64(v) => v.clone(),
            _ => return Err(Error::Checkpoint(format!("moment '{s_name}' is not f64"))),
        };
        if s.len() != m.len() {
            return Err(Error::Checkpoint(format!("moment lengths differ for '{param}'")));
        }
        opt.moments.insert(param.to_string(), (m, s));
    }
    Ok(())
}
