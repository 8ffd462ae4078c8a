//! Binary tensor container.
//!
//! Layout: magic `TTNT`, format version (u16), degree (u16), one u64 per
//! dimension, then the entries in row-major order as little-endian
//! `f64` pairs `(re, im)`.

use std::io::{Read, Write};

use super::{DenseTensor, C64};
use crate::error::{Result, TtnError};

const MAGIC: &[u8; 4] = b"TTNT";
const VERSION: u16 = 1;

pub fn write_tensor<W: Write>(w: &mut W, t: &DenseTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let degree = u16::try_from(t.degree())
        .map_err(|_| TtnError::Format(format!("degree {} too large", t.degree())))?;
    w.write_all(&degree.to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * t.len());
    for z in t.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TtnError::Format("bad tensor magic".into()));
    }
    let version = read_u16(r)?;
    if version != VERSION {
        return Err(TtnError::Format(format!(
            "unsupported tensor format version {version}"
        )));
    }
    let degree = read_u16(r)? as usize;
    let mut shape = Vec::with_capacity(degree);
    for _ in 0..degree {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let d = usize::try_from(u64::from_le_bytes(b))
            .map_err(|_| TtnError::Format("dimension overflows usize".into()))?;
        shape.push(d);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TtnError::Format("tensor size overflows".into()))?;
    let mut buf = vec![0u8; 16 * n];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    DenseTensor::new(shape, data)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for shape in [vec![], vec![3], vec![2, 3, 4]] {
            let t = DenseTensor::random(&shape, 99).unwrap();
            let mut buf = Vec::new();
            write_tensor(&mut buf, &t).unwrap();
            assert_eq!(buf.len(), 8 + 8 * shape.len() + 16 * t.len());
            let back = read_tensor(&mut buf.as_slice()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn header_layout() {
        let t = DenseTensor::scalar(C64::new(1.5, -2.0));
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"TTNT");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..8], &0u16.to_le_bytes());
        assert_eq!(&buf[8..16], &1.5f64.to_le_bytes());
        assert_eq!(&buf[16..24], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let t = DenseTensor::random(&[2, 2], 1).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_tensor(&mut bad.as_slice()),
            Err(TtnError::Format(_))
        ));
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_tensor(&mut buf.as_slice()), Err(TtnError::Io(_))));
    }
}
