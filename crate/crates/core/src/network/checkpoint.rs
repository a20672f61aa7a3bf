//! Binary checkpoint format.
//!
//! Little-endian, no padding:
//!
//! ```text
//! magic    "ICAP"           4 bytes
//! version  u32 = 1
//! n, H, d, k               u32 each
//! activation u8            0 = ReLU, 1 = Linear
//! per layer:
//!   rows u32, cols u32, rows*cols f64 (row-major)
//!   len u32, len f64
//! ```

use std::path::Path;

use super::{Activation, NetParams, NetShape};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

pub const MAGIC: &[u8; 4] = b"ICAP";
pub const VERSION: u32 = 1;

pub fn encode(p: &NetParams) -> Vec<u8> {
    let s = p.shape();
    let mut out = Vec::with_capacity(25 + 8 * (s.num_params() + 3 * s.depth));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [s.input_dim, s.hidden_width, s.depth, s.output_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match s.activation {
        Activation::Relu => 0,
        Activation::Linear => 1,
    });
    for (w, b) in p.weights().iter().zip(p.biases()) {
        out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        for v in b.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                field,
                format!("unexpected end of file: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn expect_u32(&mut self, field: &'static str, expected: usize) -> Result<()> {
        let at = self.pos;
        let v = self.u32(field)? as usize;
        if v != expected {
            return Err(Error::format(at, field, format!("expected {expected}, found {v}")));
        }
        Ok(())
    }

    fn f64s(&mut self, count: usize, field: &'static str) -> Result<Vec<f64>> {
        let need = count
            .checked_mul(8)
            .ok_or_else(|| Error::format(self.pos, field, "payload size overflows"))?;
        let start = self.pos;
        let raw = self.take(need, field)?;
        raw.chunks_exact(8)
            .enumerate()
            .map(|(i, c)| {
                let v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::format(start + 8 * i, field, "non-finite value"))
                }
            })
            .collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "magic", "not an ICAP checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, "version", format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 4];
    let names = ["input_dim", "hidden_width", "depth", "output_dim"];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = r.pos;
        *d = r.u32(names[i])? as usize;
        if *d == 0 || (i == 2 && *d < 2) {
            return Err(Error::format(at, names[i], format!("invalid value {d}")));
        }
    }
    let act_at = r.pos;
    let activation = match r.take(1, "activation")?[0] {
        0 => Activation::Relu,
        1 => Activation::Linear,
        other => {
            return Err(Error::format(act_at, "activation", format!("unknown code {other}")));
        }
    };
    let shape = NetShape {
        input_dim: dims[0],
        hidden_width: dims[1],
        depth: dims[2],
        output_dim: dims[3],
        activation,
    };

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..shape.depth {
        let (rows, cols) = shape.layer_dims(l);
        r.expect_u32("rows", rows)?;
        r.expect_u32("cols", cols)?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(r.pos, "weights", "layer size overflows"))?;
        let w = r.f64s(count, "weights")?;
        r.expect_u32("len", rows)?;
        let b = r.f64s(rows, "biases")?;
        weights.push(DenseMatrix::from_vec(rows, cols, w)?);
        biases.push(DenseVector::from(b));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos,
            "trailing",
            format!("{} unexpected trailing bytes", bytes.len() - r.pos),
        ));
    }
    NetParams::from_parts(shape, weights, biases)
}

pub fn save_checkpoint(p: &NetParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
