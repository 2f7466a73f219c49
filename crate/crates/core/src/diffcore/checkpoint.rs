//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "HFCK"
//! version      u16       1
//! config       u32 length + UTF-8 text
//! meta         u32 count, then per entry: u16 key length + key, u32 value length + value
//! params       u32 count, then per tensor:
//!                u16 name length + name, u8 rank, rank × u32 dims, numel × f64
//! optimizer    u8 present flag; when 1:
//!                u64 step, f64 weight_decay, f64 beta1, f64 beta2, f64 eps,
//!                f64 base_lr, f64 min_lr, u32 warmup_epochs, u32 total_epochs,
//!                u64 steps_per_epoch,
//!                then per param (same order): numel × f64 first moment,
//!                numel × f64 second moment
//! seed         u64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{OptimState, ParamStore, Tensor, WarmupCosine};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HFCK";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub meta: BTreeMap<String, String>,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<OptimState>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn capture(
        config: String,
        params: &ParamStore,
        optimizer: Option<&OptimState>,
        seed: u64,
    ) -> Self {
        Checkpoint {
            config,
            meta: BTreeMap::new(),
            params: params
                .iter()
                .map(|(_, name, t)| (name.to_string(), t.clone()))
                .collect(),
            optimizer: optimizer.cloned(),
            seed,
        }
    }

    /// Copies stored values into a store with the same names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} parameters stored, model has {}",
                    self.params.len(),
                    store.len()
                ),
            ));
        }
        for (name, t) in &self.params {
            let id = store
                .find(name)
                .ok_or_else(|| Error::format("checkpoint", format!("unknown parameter {name}")))?;
            store.set(id, t.clone())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        put_str32(&mut w, &self.config);
        w.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str16(&mut w, k);
            put_str32(&mut w, v);
        }
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            put_str16(&mut w, name);
            w.push(t.rank() as u8);
            for d in t.shape() {
                w.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            put_f64s(&mut w, t.data());
        }
        match &self.optimizer {
            None => w.push(0),
            Some(o) => {
                w.push(1);
                w.extend_from_slice(&o.step.to_le_bytes());
                for v in [o.weight_decay, o.beta1, o.beta2, o.eps, o.schedule.base_lr, o.schedule.min_lr] {
                    w.extend_from_slice(&v.to_le_bytes());
                }
                w.extend_from_slice(&o.schedule.warmup_epochs.to_le_bytes());
                w.extend_from_slice(&o.schedule.total_epochs.to_le_bytes());
                w.extend_from_slice(&o.schedule.steps_per_epoch.to_le_bytes());
                for (m, v) in o.first_moments.iter().zip(&o.second_moments) {
                    put_f64s(&mut w, m.data());
                    put_f64s(&mut w, v.data());
                }
            }
        }
        w.extend_from_slice(&self.seed.to_le_bytes());
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let config = r.str32()?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.str16()?;
            let v = r.str32()?;
            meta.insert(k, v);
        }
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str16()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = r.f64s(numel)?;
            let t = Tensor::new(shape, data).map_err(|e| Error::format("checkpoint", e.to_string()))?;
            params.push((name, t));
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let weight_decay = r.f64()?;
                let beta1 = r.f64()?;
                let beta2 = r.f64()?;
                let eps = r.f64()?;
                let base_lr = r.f64()?;
                let min_lr = r.f64()?;
                let warmup_epochs = r.u32()?;
                let total_epochs = r.u32()?;
                let steps_per_epoch = r.u64()?;
                let mut first_moments = Vec::with_capacity(n);
                let mut second_moments = Vec::with_capacity(n);
                for (_, p) in &params {
                    let m = r.f64s(p.numel())?;
                    let v = r.f64s(p.numel())?;
                    first_moments.push(Tensor::new(p.shape().to_vec(), m)?);
                    second_moments.push(Tensor::new(p.shape().to_vec(), v)?);
                }
                Some(OptimState {
                    schedule: WarmupCosine {
                        base_lr,
                        min_lr,
                        warmup_epochs,
                        total_epochs,
                        steps_per_epoch,
                    },
                    weight_decay,
                    beta1,
                    beta2,
                    eps,
                    step,
                    first_moments,
                    second_moments,
                })
            }
            other => return Err(Error::format("checkpoint", format!("bad optimizer flag {other}"))),
        };
        let seed = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint {
            config,
            meta,
            params,
            optimizer,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str16(w: &mut Vec<u8>, s: &str) {
    w.extend_from_slice(&(s.len() as u16).to_le_bytes());
    w.extend_from_slice(s.as_bytes());
}

fn put_str32(w: &mut Vec<u8>, s: &str) {
    w.extend_from_slice(&(s.len() as u32).to_le_bytes());
    w.extend_from_slice(s.as_bytes());
}

fn put_f64s(w: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.buf[self.pos..end];
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint", "invalid UTF-8"))
    }

    fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        self.string(n)
    }

    fn str32(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        self.string(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut store = ParamStore::new();
        store
            .add("enc.w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 1e-300, -0.0, f64::MAX]).unwrap())
            .unwrap();
        store.add("enc.b", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        let mut opt = OptimState::new(
            &store,
            WarmupCosine {
                base_lr: 2e-4,
                min_lr: 1e-5,
                warmup_epochs: 20,
                total_epochs: 420,
                steps_per_epoch: 7,
            },
            5e-4,
        );
        opt.step = 33;
        opt.first_moments[0].data_mut()[1] = 0.125;
        opt.second_moments[1].data_mut()[2] = 7.0e-9;
        let mut ck = Checkpoint::capture("c = 64\nk = 16\n".into(), &store, Some(&opt), 99);
        ck.meta.insert("epoch".into(), "3".into());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
