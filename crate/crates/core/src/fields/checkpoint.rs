//! Binary velocity checkpoints.
//!
//! Layout, all little-endian: magic `NNF1`, `u32 n`, `f64 box_length`,
//! `f64 time`, `u64 step`, then the three velocity components as `n^3` `f64`
//! physical values each, x fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{leray_project, Grid, SpectralField};

pub const MAGIC: &[u8; 4] = b"NNF1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub time: f64,
    pub step: u64,
    pub velocity: SpectralField,
}

pub fn encode(velocity: &SpectralField, time: f64, step: u64) -> Vec<u8> {
    let grid = velocity.grid();
    let n = grid.n();
    let mut buf = Vec::with_capacity(32 + 24 * n * n * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&grid.box_length().to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    buf.extend_from_slice(&step.to_le_bytes());
    for comp in velocity.to_physical() {
        for v in comp {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    if bytes.len() < 32 || &bytes[..4] != MAGIC {
        return Err("missing NNF1 header".to_string());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n = u32_at(4) as usize;
    let box_length = f64_at(8);
    let time = f64_at(16);
    let step = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let points = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| format!("grid size {n} too large"))?;
    let expected = points.checked_mul(24).and_then(|v| v.checked_add(32));
    if expected != Some(bytes.len()) {
        let expected = expected.map_or_else(|| "an unrepresentable number of".to_string(), |e| e.to_string());
        return Err(format!("expected {expected} bytes for n = {n}, found {}", bytes.len()));
    }
    let grid = Grid::new(n, box_length).map_err(|e| e.to_string())?;
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let base = 32 + c * 8 * points;
            (0..points).map(|p| f64_at(base + 8 * p)).collect()
        })
        .collect();
    let raw = SpectralField::from_physical(&grid, &comps).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        time,
        step,
        velocity: leray_project(&raw),
    })
}

pub fn write(path: &Path, velocity: &SpectralField, time: f64, step: u64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&encode(velocity, time, step))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_solenoidal, sobolev_norm};

    #[test]
    fn header_layout_is_exact() {
        let g = Grid::periodic(8).unwrap();
        let u = random_solenoidal(&g, 5, 2, 1.0).unwrap();
        let bytes = encode(&u, 0.25, 17);
        assert_eq!(&bytes[..4], b"NNF1");
        assert_eq!(&bytes[4..8], &8u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &std::f64::consts::TAU.to_le_bytes());
        assert_eq!(&bytes[16..24], &0.25f64.to_le_bytes());
        assert_eq!(&bytes[24..32], &17u64.to_le_bytes());
        assert_eq!(bytes.len(), 32 + 3 * 8 * 512);
        // first value is u_x at the origin
        let phys = u.to_physical();
        assert_eq!(&bytes[32..40], &phys[0][0].to_le_bytes());
        // x-fastest: second value is u_x at (dx, 0, 0)
        assert_eq!(&bytes[40..48], &phys[0][1].to_le_bytes());
    }

    #[test]
    fn decode_restores_norms() {
        let g = Grid::periodic(16).unwrap();
        let u = random_solenoidal(&g, 9, 5, 2.0).unwrap();
        let ck = decode(&encode(&u, 1.5, 3)).unwrap();
        assert_eq!(ck.time, 1.5);
        assert_eq!(ck.step, 3);
        for l in 0..=6 {
            let a = sobolev_norm(&u, l).unwrap();
            let b = sobolev_norm(&ck.velocity, l).unwrap();
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode(b"NNF2aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa").is_err());
        let g = Grid::periodic(8).unwrap();
        let mut bytes = encode(&SpectralField::zeros(&g, 3), 0.0, 0);
        bytes.pop();
        assert!(decode(&bytes).is_err());
    }
}
