//! Portable binary tensor format.
//!
//! ```text
//! "PTEN" | 0x01 | rank: u8 | rank x u32 LE extents | prod(extents) x f64 LE
//! ```

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PTEN";
pub const VERSION: u8 = 0x01;

pub fn write_pten(mut w: impl Write, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| TensorError::Format(format!("rank {} exceeds 255", t.rank())))?;
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, rank])?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn encode_pten(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 8 * t.numel());
    write_pten(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

pub fn read_pten(mut r: impl Read) -> Result<Tensor> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head[..4] != MAGIC {
        return Err(TensorError::Format(format!("bad magic {:?}", &head[..4])));
    }
    if head[4] != VERSION {
        return Err(TensorError::Format(format!("unsupported version {}", head[4])));
    }
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(truncated)?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n = crate::tensor::check_shape(&shape)?;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(truncated)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(data, &shape)
}

pub fn decode_pten(bytes: &[u8]) -> Result<Tensor> {
    read_pten(bytes)
}

fn truncated(e: std::io::Error) -> TensorError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        TensorError::Format("truncated tensor".into())
    } else {
        TensorError::Io(e)
    }
}

pub fn save_pten(path: impl AsRef<std::path::Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pten(t))?;
    Ok(())
}

pub fn load_pten(path: impl AsRef<std::path::Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    decode_pten(&bytes)
}
