//! Binary checkpoint format.
//!
//! ```text
//! "SSIT"  version:u32  record_count:u32
//! record_count × { name_len:u32 name rank:u32 extents:u32×rank payload:f32×∏extents }
//! seed:u64 step:u64
//! echo_len:u32 echo (UTF-8 key=value lines)
//! ```
//!
//! All integers and floats are little-endian. Record names are `param/<name>`
//! for model parameters and `adam_g/m/<name>`, `adam_g/v/<name>`,
//! `adam_d/m/<name>`, `adam_d/v/<name>` for optimizer moments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::networks::ModelParams;
use crate::tensor::{AdamSlot, Tensor};

pub const MAGIC: &[u8; 4] = b"SSIT";
pub const VERSION: u32 = 1;

const PARAM: &str = "param/";
const ADAM_G: &str = "adam_g/";
const ADAM_D: &str = "adam_d/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub seed: u64,
    pub params: ModelParams<f32>,
    pub adam_g: BTreeMap<String, AdamSlot<f32>>,
    pub adam_d: BTreeMap<String, AdamSlot<f32>>,
    /// Training configuration as `key=value` lines.
    pub config_echo: String,
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) -> Result<()> {
    put_u32(out, name.len(), "name length")?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank(), "rank")?;
    for &e in t.shape() {
        put_u32(out, e, "extent")?;
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn text(&mut self, len: usize, what: &str) -> Result<String> {
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut records: Vec<(String, &Tensor<f32>)> = Vec::new();
        for (name, t) in self.params.iter() {
            records.push((format!("{PARAM}{name}"), t));
        }
        for (prefix, slots) in [(ADAM_G, &self.adam_g), (ADAM_D, &self.adam_d)] {
            for (name, slot) in slots {
                records.push((format!("{prefix}m/{name}"), &slot.m));
                records.push((format!("{prefix}v/{name}"), &slot.v));
            }
        }
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, records.len(), "record count")?;
        for (name, t) in records {
            put_record(&mut out, &name, t)?;
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        put_u32(&mut out, self.config_echo.len(), "config length")?;
        out.extend_from_slice(self.config_echo.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic (not an SSIT checkpoint)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version} (expected {VERSION})")));
        }
        let count = r.u32("record count")?;
        let mut params = ModelParams::new();
        let mut moments: [BTreeMap<String, (Option<Tensor<f32>>, Option<Tensor<f32>>)>; 2] = Default::default();
        for _ in 0..count {
            let name_len = r.u32("record name length")?;
            let name = r.text(name_len, "record name")?;
            let rank = r.u32("rank")?;
            let shape = (0..rank).map(|_| r.u32("extent")).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Checkpoint(format!("`{name}` extents {shape:?} overflow")))?;
            let payload = r.take(len, &name)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor = Tensor::new(shape, data)?;
            if let Some(p) = name.strip_prefix(PARAM) {
                params.insert(p, tensor);
                continue;
            }
            let (which, rest) = if let Some(rest) = name.strip_prefix(ADAM_G) {
                (0, rest)
            } else if let Some(rest) = name.strip_prefix(ADAM_D) {
                (1, rest)
            } else {
                return Err(Error::Checkpoint(format!("unknown record `{name}`")));
            };
            let entry = match rest.split_once('/') {
                Some(("m", p)) => &mut moments[which].entry(p.to_string()).or_default().0,
                Some(("v", p)) => &mut moments[which].entry(p.to_string()).or_default().1,
                _ => return Err(Error::Checkpoint(format!("unknown record `{name}`"))),
            };
            *entry = Some(tensor);
        }
        let seed = r.u64("rng seed")?;
        let step = r.u64("rng step")?;
        let echo_len = r.u32("config length")?;
        let config_echo = r.text(echo_len, "config echo")?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let [g, d] = moments.map(|slots| {
            slots
                .into_iter()
                .map(|(name, pair)| match pair {
                    (Some(m), Some(v)) => Ok((name, AdamSlot { m, v })),
                    _ => Err(Error::Checkpoint(format!("optimizer state for `{name}` lacks m or v"))),
                })
                .collect::<Result<BTreeMap<_, _>>>()
        });
        Ok(Self {
            step,
            seed,
            params,
            adam_g: g?,
            adam_d: d?,
            config_echo,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Value of a `key=value` line of the config echo.
    pub fn echo_value(&self, key: &str) -> Option<&str> {
        self.config_echo
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ModelParams::new();
        params.insert("g1.a.w", Tensor::new([2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, 1e-30, 7.0]).unwrap());
        params.insert("d2.b", Tensor::new([1], vec![0.25]).unwrap());
        let mut adam_g = BTreeMap::new();
        adam_g.insert(
            "g1.a.w".to_string(),
            AdamSlot {
                m: Tensor::full([2, 3], 0.5),
                v: Tensor::full([2, 3], 1e-9),
            },
        );
        Checkpoint {
            step: 42,
            seed: 7,
            params,
            adam_g,
            adam_d: BTreeMap::new(),
            config_echo: "size=32\nseed=7\n".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.echo_value("size"), Some("32"));
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SSIT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 3, 11, 20, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).unwrap_err().to_string().contains("trailing"));
    }
}
