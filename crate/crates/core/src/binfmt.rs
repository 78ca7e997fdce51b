//! Little-endian primitives shared by the binary file formats.

use std::io::{self, Read, Write};

pub(crate) fn write_u8<W: Write>(w: &mut W, v: u8) -> io::Result<()> {
    w.write_all(&[v])
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> io::Result<()> {
    for v in vs {
        write_f64(w, *v)?;
    }
    Ok(())
}

pub(crate) fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

pub(crate) fn read_bytes<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads `expected.len()` bytes and returns whether they match.
pub(crate) fn check_magic<R: Read>(r: &mut R, expected: &[u8]) -> io::Result<bool> {
    let mut buf = vec![0u8; expected.len()];
    r.read_exact(&mut buf)?;
    Ok(buf == expected)
}

/// Writes `rows`, `cols` and the entries in row-major order.
pub(crate) fn write_matrix<W: Write>(w: &mut W, m: &nalgebra::DMatrix<f64>) -> io::Result<()> {
    write_u64(w, m.nrows() as u64)?;
    write_u64(w, m.ncols() as u64)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write_f64(w, m[(i, j)])?;
        }
    }
    Ok(())
}

pub(crate) fn read_matrix<R: Read>(r: &mut R) -> io::Result<nalgebra::DMatrix<f64>> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let data = read_f64s(r, rows * cols)?;
    Ok(nalgebra::DMatrix::from_row_slice(rows, cols, &data))
}

pub(crate) fn write_vector<W: Write>(w: &mut W, v: &nalgebra::DVector<f64>) -> io::Result<()> {
    write_u64(w, v.len() as u64)?;
    write_f64s(w, v.as_slice())
}

pub(crate) fn read_vector<R: Read>(r: &mut R) -> io::Result<nalgebra::DVector<f64>> {
    let n = read_u64(r)? as usize;
    Ok(nalgebra::DVector::from_vec(read_f64s(r, n)?))
}
