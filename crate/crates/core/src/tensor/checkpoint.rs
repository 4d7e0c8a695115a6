//! Flat binary snapshots of [`MlpParams`].
//!
//! Layout of one network (all integers little-endian):
//!
//! ```text
//! offset  size        field
//! 0       8           magic  b"FURLMLP\0"
//! 8       4           u32 format version (= 1)
//! 12      1           hidden activation (0 identity, 1 tanh, 2 relu)
//! 13      1           output activation
//! 14      2           reserved, zero
//! 16      4           u32 layer count L
//! 20      8·L         per layer: u32 input dim, u32 output dim
//! ...     8·P         per layer: weights row-major (out × in), then biases,
//!                     each as IEEE-754 f64 LE
//! ```
//!
//! A bundle of several networks is `b"FURLPACK"`, a u32 count, then the
//! networks back to back.

use alloc::vec::Vec;

use super::mlp::{Activation, MlpParams};
use crate::error::{Error, Result};

pub const MLP_MAGIC: &[u8; 8] = b"FURLMLP\0";
pub const PACK_MAGIC: &[u8; 8] = b"FURLPACK";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &MlpParams, out: &mut Vec<u8>) {
    out.extend_from_slice(MLP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(params.hidden_activation().code());
    out.push(params.output_activation().code());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for w in params.dims().windows(2) {
        out.extend_from_slice(&(w[0] as u32).to_le_bytes());
        out.extend_from_slice(&(w[1] as u32).to_le_bytes());
    }
    for x in params.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn to_bytes(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::new();
    encode(params, &mut out);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Checkpoint("length overflow"))?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Checkpoint("truncated"))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decode one network; returns it with the number of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<(MlpParams, usize)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MLP_MAGIC {
        return Err(Error::Checkpoint("bad magic"));
    }
    if r.u32()? != FORMAT_VERSION {
        return Err(Error::Checkpoint("unsupported version"));
    }
    let acts = r.take(4)?;
    let hidden = Activation::from_code(acts[0]).ok_or(Error::Checkpoint("unknown activation"))?;
    let output = Activation::from_code(acts[1]).ok_or(Error::Checkpoint("unknown activation"))?;
    let layers = r.u32()? as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::Checkpoint("implausible layer count"));
    }
    let mut dims = Vec::with_capacity(layers + 1);
    let mut count = 0usize;
    for l in 0..layers {
        let (i, o) = (r.u32()? as usize, r.u32()? as usize);
        if l == 0 {
            dims.push(i);
        } else if dims[l] != i {
            return Err(Error::Checkpoint("layer dimensions do not chain"));
        }
        dims.push(o);
        count = count
            .checked_add(i.checked_mul(o).and_then(|w| w.checked_add(o)).ok_or(Error::Checkpoint("length overflow"))?)
            .ok_or(Error::Checkpoint("length overflow"))?;
    }
    let raw = r.take(count.checked_mul(8).ok_or(Error::Checkpoint("length overflow"))?)?;
    let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter"));
    }
    Ok((MlpParams::from_raw(dims, hidden, output, data)?, r.pos))
}

pub fn encode_bundle(nets: &[&MlpParams]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PACK_MAGIC);
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for n in nets {
        encode(n, &mut out);
    }
    out
}

pub fn decode_bundle(buf: &[u8]) -> Result<Vec<MlpParams>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != PACK_MAGIC {
        return Err(Error::Checkpoint("bad bundle magic"));
    }
    let n = r.u32()? as usize;
    let mut nets = Vec::new();
    for _ in 0..n {
        let (net, used) = decode(&buf[r.pos..])?;
        r.pos += used;
        nets.push(net);
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes"));
    }
    Ok(nets)
}
