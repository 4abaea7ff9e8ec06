//! Reference BLAS subset: gemm, gemv, axpy, trsv, trsm, trmm, syrk.
//!
//! Vectors are `1 x n` views whose leading dimension is the increment.

use super::view::{MatMut, MatRef};
use super::{Diag, KernelError, Scalar, Side, Trans, Uplo};

/// Below this many multiply-adds gemm never splits across threads.
const PARALLEL_GEMM_MIN_WORK: usize = 1 << 15;

fn op_dims<T: Copy>(m: &MatRef<'_, T>, t: Trans) -> (usize, usize) {
    match t {
        Trans::No => (m.rows(), m.cols()),
        Trans::Yes => (m.cols(), m.rows()),
    }
}

fn dim_err(msg: String) -> KernelError {
    KernelError::Dimension(msg)
}

/// `C := alpha op(A) op(B) + beta C`.
///
/// Inside a rayon pool with more than one thread, the columns of `C` are
/// split across the workers.
pub fn gemm<T: Scalar>(
    transa: Trans,
    transb: Trans,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let (m, n) = (c.rows(), c.cols());
    let (am, k) = op_dims(&a, transa);
    let (bk, bn) = op_dims(&b, transb);
    if am != m || bk != k || bn != n {
        return Err(dim_err(format!(
            "gemm: op(A) {am}x{k}, op(B) {bk}x{bn}, C {m}x{n}"
        )));
    }
    let threads = rayon::current_num_threads();
    if threads > 1 && n > 1 && m * n * k >= PARALLEL_GEMM_MIN_WORK {
        let chunk = n.div_ceil(threads);
        gemm_split(transa, transb, alpha, a, b, beta, c, 0, chunk);
    } else {
        gemm_cols(transa, transb, alpha, a, b, beta, c, 0);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gemm_split<T: Scalar>(
    transa: Trans,
    transb: Trans,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: MatMut<'_, T>,
    col0: usize,
    chunk: usize,
) {
    if c.cols() <= chunk {
        gemm_cols(transa, transb, alpha, a, b, beta, c, col0);
        return;
    }
    let half = c.cols() / 2;
    let (left, right) = c.split_cols(half);
    rayon::join(
        || gemm_split(transa, transb, alpha, a, b, beta, left, col0, chunk),
        || gemm_split(transa, transb, alpha, a, b, beta, right, col0 + half, chunk),
    );
}

/// Computes columns `col0..col0 + c.cols()` of the product into `c`.
#[allow(clippy::too_many_arguments)]
fn gemm_cols<T: Scalar>(
    transa: Trans,
    transb: Trans,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    mut c: MatMut<'_, T>,
    col0: usize,
) {
    let k = op_dims(&a, transa).1;
    let opb = |l: usize, j: usize| match transb {
        Trans::No => b.at(l, j),
        Trans::Yes => b.at(j, l),
    };
    for jj in 0..c.cols() {
        let j = col0 + jj;
        let col = c.col_mut(jj);
        scale(col, beta);
        match transa {
            Trans::No => {
                for l in 0..k {
                    let t = alpha * opb(l, j);
                    for (ci, &ai) in col.iter_mut().zip(a.col(l)) {
                        *ci += t * ai;
                    }
                }
            }
            Trans::Yes => {
                for (i, ci) in col.iter_mut().enumerate() {
                    let acol = a.col(i);
                    let mut s = T::ZERO;
                    for (l, &al) in acol.iter().enumerate() {
                        s += al * opb(l, j);
                    }
                    *ci += alpha * s;
                }
            }
        }
    }
}

/// `x := beta x` with BLAS semantics: `beta = 0` overwrites without reading.
fn scale<T: Scalar>(x: &mut [T], beta: T) {
    if beta == T::ZERO {
        x.fill(T::ZERO);
    } else if beta != T::ONE {
        for v in x {
            *v *= beta;
        }
    }
}

fn vec_len<T: Copy>(x: &MatRef<'_, T>) -> usize {
    x.rows() * x.cols()
}

fn vec_at<T: Copy>(x: &MatRef<'_, T>, i: usize) -> T {
    if x.rows() == 1 {
        x.at(0, i)
    } else {
        x.at(i, 0)
    }
}

/// Runs `f` on the elements of a vector view as one contiguous slice,
/// gathering and scattering when the view is strided.
fn with_slice<T: Scalar, R>(x: &mut MatMut<'_, T>, f: impl FnOnce(&mut [T]) -> R) -> R {
    if let Some(s) = x.contiguous_mut() {
        return f(s);
    }
    let mut tmp = x.to_vec();
    let r = f(&mut tmp);
    let rows = x.rows();
    for (idx, v) in tmp.into_iter().enumerate() {
        x.set(idx % rows, idx / rows, v);
    }
    r
}

/// `y := alpha op(A) x + beta y`.
pub fn gemv<T: Scalar>(
    trans: Trans,
    alpha: T,
    a: MatRef<'_, T>,
    x: MatRef<'_, T>,
    beta: T,
    mut y: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let (m, n) = op_dims(&a, trans);
    if vec_len(&x) != n || y.rows() * y.cols() != m {
        return Err(dim_err(format!(
            "gemv: op(A) {m}x{n}, x {}, y {}",
            vec_len(&x),
            y.rows() * y.cols()
        )));
    }
    let xs: Vec<T> = (0..n).map(|i| vec_at(&x, i)).collect();
    with_slice(&mut y, |ys| {
        scale(ys, beta);
        match trans {
            Trans::No => {
                for (j, &xj) in xs.iter().enumerate() {
                    let t = alpha * xj;
                    for (yi, &aij) in ys.iter_mut().zip(a.col(j)) {
                        *yi += t * aij;
                    }
                }
            }
            Trans::Yes => {
                for (i, yi) in ys.iter_mut().enumerate() {
                    let s = dot(a.col(i), &xs);
                    *yi += alpha * s;
                }
            }
        }
    });
    Ok(())
}

/// `y := alpha x + y`.
pub fn axpy<T: Scalar>(
    alpha: T,
    x: MatRef<'_, T>,
    mut y: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let n = vec_len(&x);
    if y.rows() * y.cols() != n {
        return Err(dim_err(format!("axpy: x {n}, y {}", y.rows() * y.cols())));
    }
    with_slice(&mut y, |ys| {
        for (i, yi) in ys.iter_mut().enumerate() {
            *yi += alpha * vec_at(&x, i);
        }
    });
    Ok(())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn square<T: Copy>(a: &MatRef<'_, T>, what: &str) -> Result<usize, KernelError> {
    if a.rows() != a.cols() {
        return Err(dim_err(format!(
            "{what}: triangular operand is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(a.rows())
}

/// In-place triangular solve `op(A) x = b` on a contiguous vector.
pub fn trsv_slice<T: Scalar>(uplo: Uplo, trans: Trans, diag: Diag, a: MatRef<'_, T>, x: &mut [T]) {
    let n = a.rows();
    debug_assert_eq!(x.len(), n);
    let nonunit = diag == Diag::NonUnit;
    match (uplo, trans) {
        (Uplo::Lower, Trans::No) => {
            for j in 0..n {
                if nonunit {
                    x[j] /= a.at(j, j);
                }
                let t = x[j];
                for (xi, &aij) in x[j + 1..].iter_mut().zip(a.col_from(j, j + 1)) {
                    *xi -= t * aij;
                }
            }
        }
        (Uplo::Upper, Trans::No) => {
            for j in (0..n).rev() {
                if nonunit {
                    x[j] /= a.at(j, j);
                }
                let t = x[j];
                for (xi, &aij) in x[..j].iter_mut().zip(a.col(j)) {
                    *xi -= t * aij;
                }
            }
        }
        (Uplo::Lower, Trans::Yes) => {
            for i in (0..n).rev() {
                let mut s = x[i] - dot(a.col_from(i, i + 1), &x[i + 1..]);
                if nonunit {
                    s /= a.at(i, i);
                }
                x[i] = s;
            }
        }
        (Uplo::Upper, Trans::Yes) => {
            for i in 0..n {
                let mut s = x[i] - dot(&a.col(i)[..i], &x[..i]);
                if nonunit {
                    s /= a.at(i, i);
                }
                x[i] = s;
            }
        }
    }
}

/// In-place triangular product `x := op(A) x` on a contiguous vector.
pub fn trmv_slice<T: Scalar>(uplo: Uplo, trans: Trans, diag: Diag, a: MatRef<'_, T>, x: &mut [T]) {
    let n = a.rows();
    debug_assert_eq!(x.len(), n);
    let d = |i: usize| {
        if diag == Diag::NonUnit {
            a.at(i, i)
        } else {
            T::ONE
        }
    };
    match (uplo, trans) {
        (Uplo::Lower, Trans::No) => {
            for k in (0..n).rev() {
                let t = x[k];
                for (xi, &aik) in x[k + 1..].iter_mut().zip(a.col_from(k, k + 1)) {
                    *xi += t * aik;
                }
                x[k] = t * d(k);
            }
        }
        (Uplo::Upper, Trans::No) => {
            for k in 0..n {
                let t = x[k];
                for (xi, &aik) in x[..k].iter_mut().zip(a.col(k)) {
                    *xi += t * aik;
                }
                x[k] = t * d(k);
            }
        }
        (Uplo::Lower, Trans::Yes) => {
            for i in 0..n {
                x[i] = d(i) * x[i] + dot(a.col_from(i, i + 1), &x[i + 1..]);
            }
        }
        (Uplo::Upper, Trans::Yes) => {
            for i in (0..n).rev() {
                x[i] = d(i) * x[i] + dot(&a.col(i)[..i], &x[..i]);
            }
        }
    }
}

/// `x := op(A)^{-1} x` for a vector view.
pub fn trsv<T: Scalar>(
    uplo: Uplo,
    trans: Trans,
    diag: Diag,
    a: MatRef<'_, T>,
    mut x: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let n = square(&a, "trsv")?;
    if x.rows() * x.cols() != n {
        return Err(dim_err(format!(
            "trsv: A {n}x{n}, x {}",
            x.rows() * x.cols()
        )));
    }
    with_slice(&mut x, |xs| trsv_slice(uplo, trans, diag, a, xs));
    Ok(())
}

/// Is `op(A)` upper triangular?
fn effective_upper(uplo: Uplo, trans: Trans) -> bool {
    (uplo == Uplo::Upper) == (trans == Trans::No)
}

fn op_at<T: Copy>(a: &MatRef<'_, T>, trans: Trans, i: usize, j: usize) -> T {
    match trans {
        Trans::No => a.at(i, j),
        Trans::Yes => a.at(j, i),
    }
}

/// `B := alpha op(A)^{-1} B` (left) or `B := alpha B op(A)^{-1}` (right).
#[allow(clippy::too_many_arguments)]
pub fn trsm<T: Scalar>(
    side: Side,
    uplo: Uplo,
    transa: Trans,
    diag: Diag,
    alpha: T,
    a: MatRef<'_, T>,
    mut b: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let n_a = square(&a, "trsm")?;
    let (m, n) = (b.rows(), b.cols());
    let expected = if side == Side::Left { m } else { n };
    if n_a != expected {
        return Err(dim_err(format!(
            "trsm: A {n_a}x{n_a} does not match B {m}x{n}"
        )));
    }
    match side {
        Side::Left => {
            for j in 0..n {
                let col = b.col_mut(j);
                scale(col, alpha);
                trsv_slice(uplo, transa, diag, a, col);
            }
        }
        Side::Right => {
            for j in 0..n {
                scale(b.col_mut(j), alpha);
            }
            // X op(A) = B column by column.
            let upper = effective_upper(uplo, transa);
            let order: Box<dyn Iterator<Item = usize>> = if upper {
                Box::new(0..n)
            } else {
                Box::new((0..n).rev())
            };
            for j in order {
                let others: Box<dyn Iterator<Item = usize>> = if upper {
                    Box::new(0..j)
                } else {
                    Box::new(j + 1..n)
                };
                for k in others {
                    let t = op_at(&a, transa, k, j);
                    let (src, dst) = b.col_pair(k, j);
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d -= t * s;
                    }
                }
                if diag == Diag::NonUnit {
                    let inv = T::ONE / a.at(j, j);
                    for v in b.col_mut(j) {
                        *v *= inv;
                    }
                }
            }
        }
    }
    Ok(())
}

/// `B := alpha op(A) B` (left) or `B := alpha B op(A)` (right).
#[allow(clippy::too_many_arguments)]
pub fn trmm<T: Scalar>(
    side: Side,
    uplo: Uplo,
    transa: Trans,
    diag: Diag,
    alpha: T,
    a: MatRef<'_, T>,
    mut b: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let n_a = square(&a, "trmm")?;
    let (m, n) = (b.rows(), b.cols());
    let expected = if side == Side::Left { m } else { n };
    if n_a != expected {
        return Err(dim_err(format!(
            "trmm: A {n_a}x{n_a} does not match B {m}x{n}"
        )));
    }
    match side {
        Side::Left => {
            for j in 0..n {
                let col = b.col_mut(j);
                trmv_slice(uplo, transa, diag, a, col);
                scale(col, alpha);
            }
        }
        Side::Right => {
            // Column j of B op(A) combines columns k of B with op(A)[k, j];
            // visit j so that the columns read are still unmodified.
            let upper = effective_upper(uplo, transa);
            let order: Box<dyn Iterator<Item = usize>> = if upper {
                Box::new((0..n).rev())
            } else {
                Box::new(0..n)
            };
            for j in order {
                if diag == Diag::NonUnit {
                    let d = a.at(j, j);
                    for v in b.col_mut(j) {
                        *v *= d;
                    }
                }
                let others: Box<dyn Iterator<Item = usize>> = if upper {
                    Box::new(0..j)
                } else {
                    Box::new(j + 1..n)
                };
                for k in others {
                    let t = op_at(&a, transa, k, j);
                    let (src, dst) = b.col_pair(k, j);
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += t * s;
                    }
                }
            }
            for j in 0..n {
                scale(b.col_mut(j), alpha);
            }
        }
    }
    Ok(())
}

/// `C := alpha A A^T + beta C` (trans = N) or `C := alpha A^T A + beta C`,
/// updating only the `uplo` triangle of `C`.
pub fn syrk<T: Scalar>(
    uplo: Uplo,
    trans: Trans,
    alpha: T,
    a: MatRef<'_, T>,
    beta: T,
    mut c: MatMut<'_, T>,
) -> Result<(), KernelError> {
    let (n, k) = op_dims(&a, trans);
    if c.rows() != n || c.cols() != n {
        return Err(dim_err(format!(
            "syrk: op(A) {n}x{k}, C {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    for j in 0..n {
        let (lo, hi) = match uplo {
            Uplo::Lower => (j, n),
            Uplo::Upper => (0, j + 1),
        };
        let col = &mut c.col_mut(j)[lo..hi];
        scale(col, beta);
        match trans {
            Trans::No => {
                for l in 0..k {
                    let t = alpha * a.at(j, l);
                    for (ci, &ail) in col.iter_mut().zip(&a.col(l)[lo..hi]) {
                        *ci += t * ail;
                    }
                }
            }
            Trans::Yes => {
                let aj = a.col(j);
                for (off, ci) in col.iter_mut().enumerate() {
                    *ci += alpha * dot(a.col(lo + off), aj);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                v[i + j * rows] = f(i, j);
            }
        }
        v
    }

    #[test]
    fn gemm_identity() {
        // Column-major: [[1,0],[0,1]] and [[5,6],[7,8]].
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [5.0, 7.0, 6.0, 8.0];
        let mut c = [f64::NAN; 4];
        gemm(
            Trans::No,
            Trans::No,
            1.0,
            MatRef::from_slice(&a, 2, 2, 2).unwrap(),
            MatRef::from_slice(&b, 2, 2, 2).unwrap(),
            0.0,
            MatMut::from_slice(&mut c, 2, 2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn gemm_shape_mismatch() {
        let a = [0.0; 6];
        let mut c = [0.0; 4];
        let err = gemm(
            Trans::No,
            Trans::No,
            1.0,
            MatRef::from_slice(&a, 2, 3, 2).unwrap(),
            MatRef::from_slice(&a, 2, 3, 2).unwrap(),
            0.0,
            MatMut::from_slice(&mut c, 2, 2, 2).unwrap(),
        );
        assert!(matches!(err, Err(KernelError::Dimension(_))));
    }

    #[test]
    fn gemm_zero_sized_is_noop() {
        let a: [f64; 0] = [];
        let mut c: [f64; 0] = [];
        gemm(
            Trans::No,
            Trans::No,
            1.0,
            MatRef::from_slice(&a, 0, 5, 1).unwrap(),
            MatRef::from_slice(&a, 5, 0, 5).unwrap(),
            0.0,
            MatMut::from_slice(&mut c, 0, 0, 1).unwrap(),
        )
        .unwrap();
    }

    #[test]
    fn trsm_identity_leaves_b() {
        let a = mat(5, 5, |i, j| if i == j { 1.0 } else { 0.0 });
        let b0 = mat(5, 3, |i, j| (i * 3 + j) as f64 + 0.5);
        let mut b = b0.clone();
        trsm(
            Side::Left,
            Uplo::Lower,
            Trans::No,
            Diag::NonUnit,
            1.0,
            MatRef::from_slice(&a, 5, 5, 5).unwrap(),
            MatMut::from_slice(&mut b, 5, 3, 5).unwrap(),
        )
        .unwrap();
        assert_eq!(b, b0);
    }

    #[test]
    fn trmv_then_trsv_roundtrip_all_cases() {
        let n = 6;
        let a = mat(n, n, |i, j| {
            if i == j {
                2.0 + i as f64
            } else {
                0.1 * (i + 2 * j) as f64
            }
        });
        let ar = MatRef::from_slice(&a, n, n, n).unwrap();
        for uplo in [Uplo::Lower, Uplo::Upper] {
            for trans in [Trans::No, Trans::Yes] {
                for diag in [Diag::NonUnit, Diag::Unit] {
                    let x0: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
                    let mut x = x0.clone();
                    trmv_slice(uplo, trans, diag, ar, &mut x);
                    trsv_slice(uplo, trans, diag, ar, &mut x);
                    for (p, q) in x.iter().zip(&x0) {
                        assert!((p - q).abs() < 1e-12, "{uplo:?} {trans:?} {diag:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn strided_vector_axpy() {
        // x with increment 2, y with increment 3.
        let x = [1.0, -9.0, 2.0, -9.0, 3.0];
        let mut y = [10.0, 0.0, 0.0, 20.0, 0.0, 0.0, 30.0];
        axpy(
            2.0,
            MatRef::from_slice(&x, 1, 3, 2).unwrap(),
            MatMut::from_slice(&mut y, 1, 3, 3).unwrap(),
        )
        .unwrap();
        assert_eq!(y, [12.0, 0.0, 0.0, 24.0, 0.0, 0.0, 36.0]);
    }

    #[test]
    fn gemv_both_transposes() {
        let a = mat(2, 3, |i, j| (1 + i + 2 * j) as f64); // [[1,3,5],[2,4,6]]
        let ar = MatRef::from_slice(&a, 2, 3, 2).unwrap();
        let x = [1.0, 1.0, 1.0];
        let mut y = [1.0, 1.0];
        gemv(
            Trans::No,
            1.0,
            ar,
            MatRef::from_slice(&x, 1, 3, 1).unwrap(),
            2.0,
            MatMut::from_slice(&mut y, 1, 2, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(y, [11.0, 14.0]);
        let x2 = [1.0, 2.0];
        let mut y2 = [0.0; 3];
        gemv(
            Trans::Yes,
            1.0,
            ar,
            MatRef::from_slice(&x2, 1, 2, 1).unwrap(),
            0.0,
            MatMut::from_slice(&mut y2, 1, 3, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(y2, [5.0, 11.0, 17.0]);
    }

    #[test]
    fn syrk_touches_only_triangle() {
        let a = mat(3, 2, |i, j| (i + j + 1) as f64);
        let mut c = vec![-1.0; 9];
        syrk(
            Uplo::Lower,
            Trans::No,
            1.0,
            MatRef::from_slice(&a, 3, 2, 3).unwrap(),
            0.0,
            MatMut::from_slice(&mut c, 3, 3, 3).unwrap(),
        )
        .unwrap();
        // A = [[1,2],[2,3],[3,4]]; A A^T lower = [5, 8, 11; ., 13, 18; ., ., 25]
        assert_eq!(c, vec![5.0, 8.0, 11.0, -1.0, 13.0, 18.0, -1.0, -1.0, 25.0]);
    }
}
