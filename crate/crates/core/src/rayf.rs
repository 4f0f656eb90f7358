//! `RAYF` row-major binary arrays: magic `RAYF`, `u32` rank, `rank × u32`
//! dimensions, then the `f64` payload. Everything little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RAYF";

#[derive(Clone, Debug, PartialEq)]
pub struct RayArray {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl RayArray {
    pub fn new(dims: Vec<u32>, data: Vec<f64>) -> Result<RayArray> {
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if expected != data.len() {
            return Err(Error::Format(format!(
                "RAYF payload has {} values, dims {:?} need {}",
                data.len(),
                dims,
                expected
            )));
        }
        Ok(RayArray { dims, data })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<RayArray> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing RAYF magic".into()));
        }
        let rank = read_u32(r)? as usize;
        if rank > 16 {
            return Err(Error::Format(format!("implausible RAYF rank {rank}")));
        }
        let dims = (0..rank).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        RayArray::new(dims, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RayArray> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        RayArray::read_from(&mut f)
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(dims in proptest::collection::vec(1u32..5, 1..4), seed in any::<u64>()) {
            let count: usize = dims.iter().map(|&d| d as usize).product();
            let data: Vec<f64> = (0..count).map(|i| (i as f64 + seed as f64 * 1e-9).sin()).collect();
            let arr = RayArray::new(dims, data).unwrap();
            let mut buf = Vec::new();
            arr.write_to(&mut buf).unwrap();
            let back = RayArray::read_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(arr, back);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(RayArray::read_from(&mut &b"RAYX\0\0\0\0"[..]).is_err());
        let arr = RayArray::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let mut buf = Vec::new();
        arr.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(RayArray::read_from(&mut buf.as_slice()).is_err());
        assert!(RayArray::new(vec![3], vec![0.0; 2]).is_err());
    }
}
