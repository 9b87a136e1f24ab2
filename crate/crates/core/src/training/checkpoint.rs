//! Little-endian checkpoint files holding parameters, Adam moments and the step counter.
//!
//! Layout: `b"PARF1"`, u32 tensor count, then per tensor a u32 name length, the
//! UTF-8 name, a u8 dtype code (0 = f32, 1 = f64), a u8 rank, u32 dims and the raw
//! payload; a trailing u64 holds the optimizer step.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::adam::{AdamState, Moments};
use crate::error::{Error, Result};
use crate::model::ParfNet;
use crate::params::ParamStore;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"PARF1";
pub const MOMENT_M_SUFFIX: &str = ".adam.m";
pub const MOMENT_V_SUFFIX: &str = ".adam.v";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Raw little-endian payload.
    pub payload: Vec<u8>,
}

impl CheckpointTensor {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let mut payload = Vec::with_capacity(t.len() * T::BYTES);
        for &v in t.data() {
            v.write_le(&mut payload);
        }
        Self {
            name: name.into(),
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            payload,
        }
    }

    /// Decodes the payload, converting between widths when the stored dtype differs from `T`.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let data: Vec<T> = match self.dtype {
            DType::F32 => self.payload.chunks_exact(4).map(|b| T::lit(f64::from(f32::read_le(b)))).collect(),
            DType::F64 => self.payload.chunks_exact(8).map(|b| T::lit(f64::read_le(b))).collect(),
        };
        Tensor::from_vec(&self.shape, data)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<CheckpointTensor>,
    pub step: u64,
}

fn dtype_bytes(d: DType) -> usize {
    match d {
        DType::F32 => 4,
        DType::F64 => 8,
    }
}

impl Checkpoint {
    /// Parameters in registry order followed by their first and second moments.
    pub fn capture<T: Scalar>(store: &ParamStore<T>, adam: &AdamState<T>) -> Result<Self> {
        let mut tensors = Vec::with_capacity(3 * store.len());
        for (_, p) in store.iter() {
            tensors.push(CheckpointTensor::from_tensor(&p.name, &p.value));
        }
        for (_, p) in store.iter() {
            let moments = adam
                .moments
                .get(&p.name)
                .ok_or_else(|| Error::format(format!("optimizer has no moments for `{}`", p.name)))?;
            tensors.push(CheckpointTensor::from_tensor(format!("{}{MOMENT_M_SUFFIX}", p.name), &moments.m));
            tensors.push(CheckpointTensor::from_tensor(format!("{}{MOMENT_V_SUFFIX}", p.name), &moments.v));
        }
        Ok(Self {
            tensors,
            step: adam.step,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype as u8);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&t.payload);
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out
    }

    /// Exact size of [`Checkpoint::encode`] output.
    pub fn encoded_len(&self) -> usize {
        let body: usize = self
            .tensors
            .iter()
            .map(|t| 4 + t.name.len() + 2 + 4 * t.shape.len() + t.payload.len())
            .sum();
        MAGIC.len() + 4 + body + 8
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(5)?;
        if magic != MAGIC {
            if magic.starts_with(b"PARF") {
                return Err(Error::format(format!(
                    "unsupported checkpoint version `{}`",
                    char::from(magic[4])
                )));
            }
            return Err(Error::format("not a checkpoint file (bad magic)"));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format("tensor name is not valid UTF-8"))?;
            let dtype = match r.take(1)?[0] {
                0 => DType::F32,
                1 => DType::F64,
                code => return Err(Error::format(format!("unknown dtype code {code} for `{name}`"))),
            };
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let len = shape.iter().product::<usize>() * dtype_bytes(dtype);
            let payload = r.take(len)?.to_vec();
            tensors.push(CheckpointTensor {
                name,
                dtype,
                shape,
                payload,
            });
        }
        let step = u64::from_le_bytes(r.take(8)?.try_into().expect("eight bytes"));
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after the step counter",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { tensors, step })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Copies every tensor into `store` and `adam`. The file must hold exactly the
    /// expected names with matching shapes.
    pub fn restore<T: Scalar>(&self, store: &mut ParamStore<T>, adam: &mut AdamState<T>) -> Result<()> {
        let mut expected = BTreeSet::new();
        for (_, p) in store.iter() {
            expected.insert(p.name.clone());
            expected.insert(format!("{}{MOMENT_M_SUFFIX}", p.name));
            expected.insert(format!("{}{MOMENT_V_SUFFIX}", p.name));
        }
        let present: BTreeSet<String> = self.tensors.iter().map(|t| t.name.clone()).collect();
        let missing: Vec<_> = expected.difference(&present).cloned().collect();
        let extra: Vec<_> = present.difference(&expected).cloned().collect();
        if !missing.is_empty() || !extra.is_empty() || present.len() != self.tensors.len() {
            return Err(Error::format(format!(
                "checkpoint does not match the model; missing: [{}]; extra: [{}]",
                missing.join(", "),
                extra.join(", ")
            )));
        }
        let mut moments = std::collections::BTreeMap::new();
        for t in &self.tensors {
            let value = t.to_tensor::<T>()?;
            if let Some(base) = t.name.strip_suffix(MOMENT_M_SUFFIX) {
                check_shape(store, base, &t.name, &value)?;
                moments.entry(base.to_string()).or_insert_with(|| (None, None)).0 = Some(value);
            } else if let Some(base) = t.name.strip_suffix(MOMENT_V_SUFFIX) {
                check_shape(store, base, &t.name, &value)?;
                moments.entry(base.to_string()).or_insert_with(|| (None, None)).1 = Some(value);
            } else {
                check_shape(store, &t.name, &t.name, &value)?;
                let id = store.id(&t.name).expect("name checked above");
                *store.value_mut(id) = value;
            }
        }
        adam.moments = moments
            .into_iter()
            .map(|(name, (m, v))| {
                (
                    name,
                    Moments {
                        m: m.expect("both moments present"),
                        v: v.expect("both moments present"),
                    },
                )
            })
            .collect();
        adam.step = self.step;
        Ok(())
    }
}

fn check_shape<T: Scalar>(store: &ParamStore<T>, param: &str, entry: &str, value: &Tensor<T>) -> Result<()> {
    let id = store
        .id(param)
        .ok_or_else(|| Error::format(format!("`{entry}` does not belong to any parameter")))?;
    let want = store.value(id).shape();
    if value.shape() != want {
        return Err(Error::format(format!(
            "`{entry}` has shape {:?}, model expects {want:?}",
            value.shape()
        )));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(format!(
                "checkpoint truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn save_checkpoint<T: Scalar>(model: &ParfNet<T>, adam: &AdamState<T>, path: &Path) -> Result<()> {
    Checkpoint::capture(&model.params, adam)?.write(path)
}

pub fn load_checkpoint<T: Scalar>(model: &mut ParfNet<T>, adam: &mut AdamState<T>, path: &Path) -> Result<()> {
    Checkpoint::read(path)?.restore(&mut model.params, adam)
}
