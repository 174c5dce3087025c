use std::io::{Read, Write};

use crate::descriptor::Q;
use crate::{Error, Precision, Real, Result};

pub const DUMP_MAGIC: &[u8; 5] = b"DOLB1";

/// Population field in structure-of-arrays order (`data[i * cells + cell]`,
/// cells x fastest), tagged with the precision it was produced in.
///
/// On disk: magic, three `u64` extents, the precision in bits as `u8`, the
/// population count as `u32`, then the 19 arrays; all little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dims: [usize; 3],
    pub precision: Precision,
    pub data: Vec<f64>,
}

impl FieldDump {
    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn populations(&self, cell: usize) -> [f64; Q] {
        let n = self.num_cells();
        std::array::from_fn(|i| self.data[i * n + cell])
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(34);
        header.extend_from_slice(DUMP_MAGIC);
        for d in self.dims {
            header.extend_from_slice(&(d as u64).to_le_bytes());
        }
        header.push(self.precision.bits());
        header.extend_from_slice(&(Q as u32).to_le_bytes());
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.data.len() * self.precision.bytes());
        match self.precision {
            Precision::Single => self.data.iter().for_each(|&v| (v as f32).put_le(&mut body)),
            Precision::Double => self.data.iter().for_each(|&v| v.put_le(&mut body)),
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 34];
        r.read_exact(&mut header)?;
        if &header[..5] != DUMP_MAGIC {
            return Err(Error::Format("bad field dump magic".into()));
        }
        let dims: [usize; 3] =
            std::array::from_fn(|a| u64::from_le_bytes(header[5 + 8 * a..13 + 8 * a].try_into().unwrap()) as usize);
        let precision = Precision::from_bits(header[29])
            .ok_or_else(|| Error::Format(format!("unknown precision flag {}", header[29])))?;
        let q = u32::from_le_bytes(header[30..34].try_into().unwrap()) as usize;
        if q != Q {
            return Err(Error::Format(format!(
                "dump holds {q} populations per cell, expected {Q}"
            )));
        }
        let count = q * dims.iter().product::<usize>();
        let width = precision.bytes();
        let mut body = vec![0u8; count * width];
        r.read_exact(&mut body)?;
        let data = body
            .chunks_exact(width)
            .map(|b| match precision {
                Precision::Single => f32::get_le(b) as f64,
                Precision::Double => f64::get_le(b),
            })
            .collect();
        Ok(Self { dims, precision, data })
    }

    /// Largest absolute difference between two dumps of equal shape.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Format(format!(
                "dump extents differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
