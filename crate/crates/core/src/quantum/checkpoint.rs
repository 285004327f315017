//! Binary wavefunction snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "FERMIWF\0"
//!      8     1  version (1)
//!      9     8  z_min      f64
//!     17     8  z_max      f64
//!     25     8  n_points   u64
//!     33     8  t          f64
//!     41     8  kbar       f64
//!     49     8  absorbed   f64
//!     57  16·n  amplitudes (re f64, im f64) per grid point
//! ```

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Grid, Wavefunction};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FERMIWF\0";
pub const CHECKPOINT_VERSION: u8 = 1;
const HEADER_LEN: usize = 57;

pub fn to_bytes(psi: &Wavefunction) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * psi.amp.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&psi.grid.z_min.to_le_bytes());
    out.extend_from_slice(&psi.grid.z_max.to_le_bytes());
    out.extend_from_slice(&(psi.grid.n_points as u64).to_le_bytes());
    out.extend_from_slice(&psi.t.to_le_bytes());
    out.extend_from_slice(&psi.kbar.to_le_bytes());
    out.extend_from_slice(&psi.absorbed.to_le_bytes());
    for a in &psi.amp {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    out
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8-byte slice"))
}

pub fn from_bytes(b: &[u8]) -> Result<Wavefunction> {
    if b.len() < HEADER_LEN {
        return Err(Error::Format(format!("checkpoint too short ({} bytes)", b.len())));
    }
    if &b[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a wavefunction checkpoint (bad magic)".into()));
    }
    if b[8] != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", b[8])));
    }
    let n = u64::from_le_bytes(b[25..33].try_into().expect("8-byte slice")) as usize;
    let grid = Grid::new(f64_at(b, 9), f64_at(b, 17), n)
        .map_err(|e| Error::Format(format!("checkpoint grid: {e}")))?;
    let expected = HEADER_LEN + 16 * n;
    if b.len() != expected {
        return Err(Error::Format(format!("checkpoint has {} bytes, expected {expected}", b.len())));
    }
    let amp = (0..n)
        .map(|j| {
            let at = HEADER_LEN + 16 * j;
            Complex64::new(f64_at(b, at), f64_at(b, at + 8))
        })
        .collect();
    Ok(Wavefunction { grid, amp, t: f64_at(b, 33), kbar: f64_at(b, 41), absorbed: f64_at(b, 49) })
}

pub fn write_checkpoint(path: &Path, psi: &Wavefunction) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(psi))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Wavefunction> {
    let mut b = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut b)?;
    from_bytes(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::init_gaussian;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::new(-20.0, 60.0, 256).unwrap();
        let mut psi = init_gaussian(10.0, 1.0, 0.7, 1.0, &g).unwrap();
        psi.t = 12.5;
        psi.absorbed = 1e-9;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        write_checkpoint(&path, &psi).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), psi);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 57 + 16 * 256);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let g = Grid::new(-20.0, 60.0, 256).unwrap();
        let psi = init_gaussian(10.0, 1.0, 0.7, 1.0, &g).unwrap();
        let good = to_bytes(&psi);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let mut bad_version = good.clone();
        bad_version[8] = 9;
        for b in [&bad_magic[..], &bad_version[..], &good[..good.len() - 1], &good[..10]] {
            assert!(matches!(from_bytes(b), Err(Error::Format(_))));
        }
    }
}
