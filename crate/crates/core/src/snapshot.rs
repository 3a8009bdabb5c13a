//! Binary field snapshots.
//!
//! Little-endian layout: magic `WCGL`, `version: u32`, `n: u32`, `N: u32`,
//! `t: f64`, `seed: u64`, then the `(2n+1)²` coefficients in row-major
//! `(m₁, m₂)` order, each as two `f64` (real part first).

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"WCGL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub seed: u64,
    pub field: SpectralField,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = self.field.grid;
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * g.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(g.n as u32).to_le_bytes());
        out.extend_from_slice(&(g.points as u32).to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for c in &self.field.coeffs {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("snapshot too short: {} bytes", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad snapshot magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let n = u32_at(8) as usize;
        let points = u32_at(12) as usize;
        let t = f64::from_bits(u64_at(16));
        let seed = u64_at(24);
        let grid = Grid::new(n, points).map_err(|e| Error::Format(format!("snapshot grid: {e}")))?;
        let expected = HEADER_LEN + 16 * grid.len();
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "snapshot has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut field = SpectralField::zeros(grid);
        for (i, c) in field.coeffs.iter_mut().enumerate() {
            let o = HEADER_LEN + 16 * i;
            *c = Complex64::new(f64::from_bits(u64_at(o)), f64::from_bits(u64_at(o + 8)));
        }
        Ok(Self { t, seed, field })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
