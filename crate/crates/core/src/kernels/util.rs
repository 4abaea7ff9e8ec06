//! Utility kernels: memset, gerand, porand, readfile, writefile.
//!
//! Random fills draw from ChaCha8 keyed by the stream seed, with one
//! ChaCha stream per fill so results depend only on `(seed, stream)`.

use std::fs;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::blas::gemm;
use super::view::{MatMut, MatRef};
use super::{KernelError, Scalar, Trans};

/// Deterministic random source for one fill.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills a contiguous buffer with values uniform in (0, 1).
pub fn fill_uniform<T: Scalar>(data: &mut [T], seed: u64, stream: u64) {
    let mut rng = rng_for(seed, stream);
    for v in data {
        *v = T::open_unit(rng.next_u64());
    }
}

pub fn memset<T: Scalar>(value: T, x: &mut [T]) {
    x.fill(value);
}

/// Fills the window of `a` with values uniform in (0, 1).
pub fn gerand<T: Scalar>(mut a: MatMut<'_, T>, seed: u64, stream: u64) {
    let mut rng = rng_for(seed, stream);
    for j in 0..a.cols() {
        for v in a.col_mut(j) {
            *v = T::open_unit(rng.next_u64());
        }
    }
}

/// Writes a random symmetric positive definite matrix `G^T G + n I` into the
/// full window of `a`, where `G` is uniform in (0, 1). Only the lower
/// triangle is computed; the upper triangle mirrors it exactly.
pub fn porand<T: Scalar>(mut a: MatMut<'_, T>, seed: u64, stream: u64) -> Result<(), KernelError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(KernelError::Dimension(format!(
            "porand: operand is {}x{}",
            n,
            a.cols()
        )));
    }
    let mut g = vec![T::ZERO; n * n];
    fill_uniform(&mut g, seed, stream);
    let gr = MatRef::from_slice(&g, n, n, n.max(1))?;
    for j in 0..n {
        for i in j..n {
            let s = dot_cols(gr, i, j);
            a.set(i, j, s);
        }
    }
    let shift = T::from_f64(n as f64);
    for j in 0..n {
        a.set(j, j, a.at(j, j) + shift);
        for i in j + 1..n {
            a.set(j, i, a.at(i, j));
        }
    }
    Ok(())
}

fn dot_cols<T: Scalar>(g: MatRef<'_, T>, i: usize, j: usize) -> T {
    let mut s = T::ZERO;
    for (&x, &y) in g.col(i).iter().zip(g.col(j)) {
        s += x * y;
    }
    s
}

/// Reads `rows x cols` little-endian values (column-major, no header) into
/// the window of `a`.
pub fn readfile<T: Scalar>(path: &str, mut a: MatMut<'_, T>) -> Result<(), KernelError> {
    let size = T::DTYPE.size();
    let bytes = fs::read(path).map_err(|e| KernelError::Io {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let need = a.rows() * a.cols() * size;
    if bytes.len() < need {
        return Err(KernelError::Io {
            path: path.into(),
            msg: format!("file holds {} bytes, {need} required", bytes.len()),
        });
    }
    let mut chunks = bytes.chunks_exact(size);
    for j in 0..a.cols() {
        for v in a.col_mut(j) {
            *v = T::read_le(chunks.next().expect("length checked"));
        }
    }
    Ok(())
}

/// Writes the window of `a` as little-endian values, column-major, no header.
pub fn writefile<T: Scalar>(path: &str, a: MatRef<'_, T>) -> Result<(), KernelError> {
    let mut out = Vec::with_capacity(a.rows() * a.cols() * T::DTYPE.size());
    for j in 0..a.cols() {
        for &v in a.col(j) {
            v.write_le(&mut out);
        }
    }
    fs::write(path, out).map_err(|e| KernelError::Io {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// `G^T G` through the reference gemm; used by tests as a second route to
/// the porand construction.
pub fn gram<T: Scalar>(g: MatRef<'_, T>) -> Result<Vec<T>, KernelError> {
    let n = g.cols();
    let mut out = vec![T::ZERO; n * n];
    gemm(
        Trans::Yes,
        Trans::No,
        T::ONE,
        g,
        g,
        T::ZERO,
        MatMut::from_slice(&mut out, n, n, n.max(1))?,
    )?;
    Ok(out)
}
