//! Binary field formats.
//!
//! PWF1 (real fields) and PWS1 (spectra) share a little-endian header:
//! 4-byte magic, u32 spatial dimension d, u32 n_t, u32 n_x per spatial axis,
//! f64 extent_t, f64 extent_x per spatial axis. The payload is row-major with
//! time outermost: f64 samples for PWF1, interleaved (re, im) f64 pairs for
//! PWS1.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField};
use num_complex::Complex64;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC_FIELD: &[u8; 4] = b"PWF1";
const MAGIC_SPECTRUM: &[u8; 4] = b"PWS1";

fn write_header(out: &mut impl Write, magic: &[u8; 4], grid: &Grid) -> Result<()> {
    out.write_all(magic)?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    out.write_all(&(grid.n_t() as u32).to_le_bytes())?;
    for &n in grid.n_x() {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    out.write_all(&grid.extent_t().to_le_bytes())?;
    for &e in grid.extent_x() {
        out.write_all(&e.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_header(input: &mut impl Read, magic: &[u8; 4]) -> Result<Grid> {
    let mut got = [0u8; 4];
    input.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let d = read_u32(input)? as usize;
    if d != 1 && d != 2 {
        return Err(Error::Format(format!("unsupported dimension {d}")));
    }
    let n_t = read_u32(input)? as usize;
    let mut n_x = Vec::with_capacity(d);
    for _ in 0..d {
        n_x.push(read_u32(input)? as usize);
    }
    let extent_t = read_f64(input)?;
    let mut extent_x = Vec::with_capacity(d);
    for _ in 0..d {
        extent_x.push(read_f64(input)?);
    }
    Grid::new(n_t, &n_x, extent_t, &extent_x)
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut out, MAGIC_FIELD, field.grid())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let grid = read_header(&mut input, MAGIC_FIELD)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut input)?);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after field payload".into()));
    }
    Field::from_values(&grid, values)
}

pub fn write_spectrum(path: impl AsRef<Path>, sf: &SpectralField) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut out, MAGIC_SPECTRUM, sf.grid())?;
    for v in sf.values() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectrum(path: impl AsRef<Path>) -> Result<SpectralField> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let grid = read_header(&mut input, MAGIC_SPECTRUM)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(&mut input)?;
        let im = read_f64(&mut input)?;
        values.push(Complex64::new(re, im));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after spectrum payload".into()));
    }
    SpectralField::from_values(&grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fourier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_roundtrip_is_bitwise() {
        let grid = Grid::new(8, &[16, 8], 1.5, &[2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Field::from_values(
            &grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let dir = std::env::temp_dir().join("pw_io_field_test.pwf");
        write_field(&dir, &f).unwrap();
        let back = read_field(&dir).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
        std::fs::remove_file(dir).ok();
    }

    #[test]
    fn spectrum_roundtrip_is_bitwise() {
        let grid = Grid::new(8, &[8], 1.0, &[1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = Field::from_values(
            &grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let sf = fourier(&f);
        let path = std::env::temp_dir().join("pw_io_spec_test.pws");
        write_spectrum(&path, &sf).unwrap();
        let back = read_spectrum(&path).unwrap();
        assert_eq!(back.grid(), sf.grid());
        assert_eq!(back.values(), sf.values());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn wrong_magic_rejected() {
        let grid = Grid::new(8, &[8], 1.0, &[1.0]).unwrap();
        let f = Field::zeros(&grid);
        let path = std::env::temp_dir().join("pw_io_magic_test.pwf");
        write_field(&path, &f).unwrap();
        let err = read_spectrum(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        std::fs::remove_file(path).ok();
    }
}
