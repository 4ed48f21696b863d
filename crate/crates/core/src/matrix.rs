//! Row-major dense matrix with a small versioned binary format, shared by
//! the feature table and model persistence.

use std::io::{Read, Write};

use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"CMTX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix { n_rows, n_cols, data: vec![S::zero(); n_rows * n_cols] }
    }

    /// Builds from a flat row-major buffer; panics on size mismatch.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix buffer size mismatch");
        Matrix { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix<S> {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { n_rows: idx.len(), n_cols: self.n_cols, data }
    }

    /// Appends the columns of `other` to the right of `self`; row counts must match.
    pub fn hstack(&self, other: &Matrix<S>) -> Matrix<S> {
        assert_eq!(self.n_rows, other.n_rows, "hstack row count mismatch");
        let cols = self.n_cols + other.n_cols;
        let mut data = Vec::with_capacity(self.n_rows * cols);
        for i in 0..self.n_rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Matrix { n_rows: self.n_rows, n_cols: cols, data }
    }

    /// Writes `magic, version, dtype, n_rows, n_cols` then the row-major
    /// payload, little-endian. dtype is the scalar width in bytes.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let width = std::mem::size_of::<S>() as u8;
        w.write_all(&[width])?;
        w.write_all(&(self.n_rows as u64).to_le_bytes())?;
        w.write_all(&(self.n_cols as u64).to_le_bytes())?;
        for &v in &self.data {
            match width {
                4 => w.write_all(&(v.into_f64() as f32).to_le_bytes())?,
                8 => w.write_all(&v.into_f64().to_le_bytes())?,
                _ => unreachable!("scalar width"),
            }
        }
        Ok(())
    }

    /// Reads a matrix written by [`Matrix::write_to`], converting the stored
    /// scalar width to `S` if they differ.
    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Matrix<S>> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad_data("bad matrix magic"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(bad_data(format!("unsupported matrix version {version}")));
        }
        let mut width = [0u8; 1];
        r.read_exact(&mut width)?;
        let n_rows = read_u64(r)? as usize;
        let n_cols = read_u64(r)? as usize;
        let n = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| bad_data("matrix size overflow"))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = match width[0] {
                4 => {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b)?;
                    f32::from_le_bytes(b) as f64
                }
                8 => {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    f64::from_le_bytes(b)
                }
                other => return Err(bad_data(format!("unsupported scalar width {other}"))),
            };
            data.push(S::from_f64_lossy(v));
        }
        Ok(Matrix { n_rows, n_cols, data })
    }
}

pub(crate) fn bad_data(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f64_is_bit_exact() {
        let m = Matrix::from_vec(2, 3, vec![1.5, -2.25, 0.0, 1e-300, 3.0, f64::MAX]);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back: Matrix<f64> = Matrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn f32_file_reads_into_f64() {
        let m = Matrix::from_vec(1, 2, vec![1.25f32, -8.5]);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back: Matrix<f64> = Matrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.row(0), &[1.25f64, -8.5]);
    }

    #[test]
    fn hstack_concatenates_columns() {
        let a = Matrix::from_vec(2, 1, vec![1.0, 2.0]);
        let b = Matrix::from_vec(2, 2, vec![3.0, 4.0, 5.0, 6.0]);
        let c = a.hstack(&b);
        assert_eq!(c.row(0), &[1.0, 3.0, 4.0]);
        assert_eq!(c.row(1), &[2.0, 5.0, 6.0]);
    }
}
