//! Binary snapshots: `"HFB1"`, then `d`, `n` (u64) and `L` (f64), all
//! little-endian, followed by `φ`, `γ`, `σ` as little-endian `(re, im)` f64
//! pairs in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{HfbError, Result};
use crate::linalg::{c, CMat, CVec};
use crate::state::HfbState;

pub const MAGIC: [u8; 4] = *b"HFB1";
pub const HEADER_LEN: usize = 4 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
    pub state: HfbState,
}

impl Snapshot {
    pub fn new(dim: usize, points: usize, length: f64, state: HfbState) -> Result<Self> {
        let total = total_points(dim, points)?;
        if state.len() != total {
            return Err(HfbError::SizeMismatch { expected: total, actual: state.len() });
        }
        Ok(Self { dim, points, length, state })
    }

    /// Quadrature weight `(L/n)^d` implied by the header.
    pub fn weight(&self) -> f64 {
        (self.length / self.points as f64).powi(self.dim as i32)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.state.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * (n + 2 * n * n));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.points as u64).to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        let mut push = |z: &crate::linalg::C64| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        };
        self.state.phi.iter().for_each(&mut push);
        for m in [&self.state.gamma, &self.state.sigma] {
            for i in 0..n {
                for j in 0..n {
                    push(&m[(i, j)]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(HfbError::Snapshot(format!("file of {} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(HfbError::Snapshot("bad magic, expected HFB1".into()));
        }
        let word = |k: usize| -> [u8; 8] { bytes[4 + 8 * k..12 + 8 * k].try_into().expect("8-byte slice") };
        let dim = u64::from_le_bytes(word(0)) as usize;
        let points = u64::from_le_bytes(word(1)) as usize;
        let length = f64::from_le_bytes(word(2));
        if !(length > 0.0 && length.is_finite()) {
            return Err(HfbError::Snapshot(format!("side length {length} must be positive")));
        }
        let n = total_points(dim, points).map_err(|e| HfbError::Snapshot(e.to_string()))?;
        let expected = HEADER_LEN + 16 * (n + 2 * n * n);
        if bytes.len() != expected {
            return Err(HfbError::Snapshot(format!("expected {expected} bytes for N = {n}, found {}", bytes.len())));
        }
        let mut values = bytes[HEADER_LEN..].chunks_exact(16).map(|ch| {
            let re = f64::from_le_bytes(ch[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(ch[8..].try_into().expect("8 bytes"));
            c(re, im)
        });
        let phi = CVec::from_iterator(n, values.by_ref().take(n));
        let gamma = CMat::from_row_iterator(n, n, values.by_ref().take(n * n));
        let sigma = CMat::from_row_iterator(n, n, values.by_ref().take(n * n));
        let weight = (length / points as f64).powi(dim as i32);
        Ok(Self { dim, points, length, state: HfbState { weight, phi, gamma, sigma } })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn total_points(dim: usize, points: usize) -> Result<usize> {
    if !(1..=3).contains(&dim) || points == 0 {
        return Err(HfbError::InvalidArgument(format!("bad grid header d = {dim}, n = {points}")));
    }
    points
        .checked_pow(dim as u32)
        .filter(|&n| n <= 1 << 16)
        .ok_or_else(|| HfbError::InvalidArgument(format!("grid {points}^{dim} too large")))
}
