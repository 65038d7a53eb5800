//! Binary field snapshots.
//!
//! Layout, all little-endian: the 7-byte magic `CHFLD1\0`, then `u32 N`,
//! `u32 m`, `u32 n`, `f64 L`, then `m * n^N` pairs of `f64` `(re, im)`,
//! component-major and axis-major within a component.

use std::io::{self, Read, Write};

use hartree_core::{Field, Grid, MultiField};
use num_complex::Complex64;

pub const MAGIC: &[u8; 7] = b"CHFLD1\0";

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot header is inconsistent: {0}")]
    Header(String),
    #[error(transparent)]
    Core(#[from] hartree_core::Error),
}

pub fn write_snapshot<W: Write>(mut w: W, mf: &MultiField) -> Result<(), SnapshotError> {
    let g = mf.grid();
    let header_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| SnapshotError::Header(format!("{v} does not fit in u32")))
    };
    w.write_all(MAGIC)?;
    w.write_all(&header_u32(g.dim())?.to_le_bytes())?;
    w.write_all(&header_u32(mf.len())?.to_le_bytes())?;
    w.write_all(&header_u32(g.points_per_dim())?.to_le_bytes())?;
    w.write_all(&g.box_length().to_le_bytes())?;
    for c in mf.components() {
        for z in c.data() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn snapshot_bytes(mf: &MultiField) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 20 + mf.len() * mf.grid().len() * 16);
    write_snapshot(&mut out, mf).expect("writing to memory cannot fail");
    out
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<MultiField, SnapshotError> {
    let mut magic = [0; 7];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let dim = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let length = read_f64(&mut r)?;
    if m == 0 || dim == 0 {
        return Err(SnapshotError::Header(format!("N = {dim}, m = {m}")));
    }
    let grid = Grid::new(dim, n, length)?;
    let mut comps = Vec::with_capacity(m);
    for _ in 0..m {
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            data.push(Complex64::new(re, im));
        }
        comps.push(Field::from_data(grid, data)?);
    }
    let mut rest = [0; 1];
    if r.read(&mut rest)? != 0 {
        return Err(SnapshotError::Header(
            "trailing bytes after field data".into(),
        ));
    }
    Ok(MultiField::new(comps)?)
}
