//! `DUBM` checkpoint files.
//!
//! ```text
//! b"DUBM" | u32 version (=1)
//! descriptor block:
//!   u8 mode (0 du-bm3d, 1 unet-image) | u32 channels | u32 n | n x u32 widths
//!   u32 patch | u32 stride | u32 window | u32 group_size | f32 tau | u64 step
//! u32 tensor count
//!   per tensor: u16 name length | name (UTF-8) | u32 rank | rank x u32 extent | f32 data
//! u8 optimizer flag; if 1: u64 adam step, then per tensor first moments, then second moments
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::Mode;
use crate::error::{Error, Result};
use crate::matching::MatchConfig;
use crate::tensor::Tensor;
use crate::unet::{Descriptor, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DUBM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: Mode,
    pub matching: MatchConfig,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub step: u64,
}

impl Checkpoint {
    pub fn descriptor(&self) -> &Descriptor {
        self.params.descriptor()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);

        let d = self.params.descriptor();
        out.push(match self.mode {
            Mode::DuBm3d => 0,
            Mode::UnetImage => 1,
        });
        put_u32(&mut out, d.channels as u32);
        put_u32(&mut out, d.widths.len() as u32);
        for &w in &d.widths {
            put_u32(&mut out, w as u32);
        }
        let m = &self.matching;
        for v in [m.patch, m.stride, m.window, m.group_size] {
            put_u32(&mut out, v as u32);
        }
        out.extend_from_slice(&m.tau.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());

        let tensors = self.params.tensors();
        put_u32(&mut out, tensors.len() as u32);
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for &e in t.shape() {
                put_u32(&mut out, e as u32);
            }
            put_f32s(&mut out, t.data());
        }

        match &self.adam {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                out.extend_from_slice(&st.step.to_le_bytes());
                for m in &st.first {
                    put_f32s(&mut out, m);
                }
                for v in &st.second {
                    put_f32s(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::UnsupportedMagic {
                path: path.to_path_buf(),
                magic: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mode = match r.u8()? {
            0 => Mode::DuBm3d,
            1 => Mode::UnetImage,
            m => return Err(r.malformed(format!("unknown mode byte {m}"))),
        };
        let channels = r.u32()? as usize;
        let n = r.u32()? as usize;
        if n > 16 {
            return Err(r.malformed(format!("implausible depth {n}")));
        }
        let widths = (0..n)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let descriptor = Descriptor::new(channels, widths).map_err(|e| r.malformed(e.to_string()))?;
        let matching = MatchConfig {
            patch: r.u32()? as usize,
            stride: r.u32()? as usize,
            window: r.u32()? as usize,
            group_size: r.u32()? as usize,
            tau: r.f32()?,
        };
        matching.validate().map_err(|e| r.malformed(e.to_string()))?;
        let step = r.u64()?;

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.malformed("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(r.malformed(format!("implausible rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            let data = r.f32s(numel)?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let params = ModelParams::from_tensors(descriptor, tensors).map_err(|e| r.malformed(e.to_string()))?;

        let adam = match r.u8()? {
            0 => None,
            1 => {
                let adam_step = r.u64()?;
                let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.numel()).collect();
                let first = sizes.iter().map(|&n| r.f32s(n)).collect::<Result<Vec<_>>>()?;
                let second = sizes.iter().map(|&n| r.f32s(n)).collect::<Result<Vec<_>>>()?;
                Some(AdamState {
                    step: adam_step,
                    first,
                    second,
                })
            }
            f => return Err(r.malformed(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            mode,
            matching,
            params,
            adam,
            step,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedHeader {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.malformed("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}
