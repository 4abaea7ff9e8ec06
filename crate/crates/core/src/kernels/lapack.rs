//! Reference LAPACK subset: getrf, gesv, trti2, trtri, potrf.

use super::blas::{trmm, trmv_slice, trsm};
use super::view::MatMut;
use super::{Diag, KernelError, Scalar, Side, Trans, Uplo};

/// Block size of the blocked triangular inversion.
pub const TRTRI_BLOCK: usize = 64;

fn numerical(msg: String) -> KernelError {
    KernelError::Numerical(msg)
}

/// LU factorization with partial pivoting, `P A = L U`, in place.
///
/// Returns the pivot sequence: at step `k`, row `k` was swapped with row
/// `pivots[k]`. An exactly zero pivot column is a numerical failure.
pub fn getrf<T: Scalar>(mut a: MatMut<'_, T>) -> Result<Vec<usize>, KernelError> {
    let (m, n) = (a.rows(), a.cols());
    let steps = m.min(n);
    let mut pivots = Vec::with_capacity(steps);
    for k in 0..steps {
        let col = a.col(k);
        let mut piv = k;
        let mut best = col[k].abs();
        for (i, v) in col.iter().enumerate().skip(k + 1) {
            let av = v.abs();
            if av > best {
                best = av;
                piv = i;
            }
        }
        if a.at(piv, k) == T::ZERO {
            return Err(numerical(format!("getrf: zero pivot in column {k}")));
        }
        pivots.push(piv);
        if piv != k {
            for j in 0..n {
                let t = a.at(k, j);
                a.set(k, j, a.at(piv, j));
                a.set(piv, j, t);
            }
        }
        let inv = T::ONE / a.at(k, k);
        for v in &mut a.col_mut(k)[k + 1..] {
            *v *= inv;
        }
        for j in k + 1..n {
            let t = a.at(k, j);
            let (lk, cj) = a.col_pair(k, j);
            for (d, &l) in cj[k + 1..].iter_mut().zip(&lk[k + 1..]) {
                *d -= l * t;
            }
        }
    }
    Ok(pivots)
}

/// Applies a `getrf` pivot sequence to the rows of `b`.
pub fn apply_pivots<T: Scalar>(pivots: &[usize], b: &mut MatMut<'_, T>) {
    for (k, &p) in pivots.iter().enumerate() {
        if p != k {
            for j in 0..b.cols() {
                let t = b.at(k, j);
                b.set(k, j, b.at(p, j));
                b.set(p, j, t);
            }
        }
    }
}

/// Solves `A X = B` through `getrf`; `A` is overwritten by its factors and
/// `B` by the solution.
pub fn gesv<T: Scalar>(mut a: MatMut<'_, T>, mut b: MatMut<'_, T>) -> Result<(), KernelError> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(KernelError::Dimension(format!(
            "gesv: A {}x{}, B {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let pivots = getrf(a.rb_mut())?;
    apply_pivots(&pivots, &mut b);
    trsm(
        Side::Left,
        Uplo::Lower,
        Trans::No,
        Diag::Unit,
        T::ONE,
        a.rb(),
        b.rb_mut(),
    )?;
    trsm(
        Side::Left,
        Uplo::Upper,
        Trans::No,
        Diag::NonUnit,
        T::ONE,
        a.rb(),
        b,
    )?;
    Ok(())
}

fn check_square<T: Copy>(a: &MatMut<'_, T>, what: &str) -> Result<usize, KernelError> {
    if a.rows() != a.cols() {
        return Err(KernelError::Dimension(format!(
            "{what}: operand is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(a.rows())
}

fn check_diagonal<T: Scalar>(a: &MatMut<'_, T>, diag: Diag, what: &str) -> Result<(), KernelError> {
    if diag == Diag::NonUnit {
        if let Some(i) = (0..a.rows()).find(|&i| a.at(i, i) == T::ZERO) {
            return Err(numerical(format!("{what}: zero diagonal element {i}")));
        }
    }
    Ok(())
}

/// Unblocked in-place inverse of a triangular matrix.
pub fn trti2<T: Scalar>(uplo: Uplo, diag: Diag, mut a: MatMut<'_, T>) -> Result<(), KernelError> {
    let n = check_square(&a, "trti2")?;
    check_diagonal(&a, diag, "trti2")?;
    let invert_diag = |a: &mut MatMut<'_, T>, j: usize| -> T {
        if diag == Diag::NonUnit {
            let inv = T::ONE / a.at(j, j);
            a.set(j, j, inv);
            -inv
        } else {
            -T::ONE
        }
    };
    match uplo {
        Uplo::Upper => {
            for j in 0..n {
                let ajj = invert_diag(&mut a, j);
                let (u00, mut x) = a.read_write_pair((0, 0, j, j), (0, j, j, 1));
                if j > 0 {
                    let xs = x.col_mut(0);
                    trmv_slice(Uplo::Upper, Trans::No, diag, u00, xs);
                    for v in xs {
                        *v *= ajj;
                    }
                }
            }
        }
        Uplo::Lower => {
            for j in (0..n).rev() {
                let ajj = invert_diag(&mut a, j);
                let r = n - j - 1;
                if r > 0 {
                    let (l22, mut x) = a.read_write_pair((j + 1, j + 1, r, r), (j + 1, j, r, 1));
                    let xs = x.col_mut(0);
                    trmv_slice(Uplo::Lower, Trans::No, diag, l22, xs);
                    for v in xs {
                        *v *= ajj;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Blocked in-place inverse of a triangular matrix (block size
/// [`TRTRI_BLOCK`]), built from trmm, trsm, and trti2.
pub fn trtri<T: Scalar>(uplo: Uplo, diag: Diag, mut a: MatMut<'_, T>) -> Result<(), KernelError> {
    let n = check_square(&a, "trtri")?;
    check_diagonal(&a, diag, "trtri")?;
    if n == 0 {
        return Ok(());
    }
    let nb = TRTRI_BLOCK;
    match uplo {
        Uplo::Upper => {
            for j in (0..n).step_by(nb) {
                let jb = nb.min(n - j);
                if j > 0 {
                    let (u00, a01) = a.read_write_pair((0, 0, j, j), (0, j, j, jb));
                    trmm(Side::Left, Uplo::Upper, Trans::No, diag, T::ONE, u00, a01)?;
                    let (u11, a01) = a.read_write_pair((j, j, jb, jb), (0, j, j, jb));
                    trsm(Side::Right, Uplo::Upper, Trans::No, diag, -T::ONE, u11, a01)?;
                }
                trti2(Uplo::Upper, diag, a.sub_mut(j, j, jb, jb))?;
            }
        }
        Uplo::Lower => {
            let last = ((n - 1) / nb) * nb;
            for j in (0..=last).rev().step_by(nb) {
                let jb = nb.min(n - j);
                let r = n - j - jb;
                if r > 0 {
                    let (l22, a21) = a.read_write_pair((j + jb, j + jb, r, r), (j + jb, j, r, jb));
                    trmm(Side::Left, Uplo::Lower, Trans::No, diag, T::ONE, l22, a21)?;
                    let (l11, a21) = a.read_write_pair((j, j, jb, jb), (j + jb, j, r, jb));
                    trsm(Side::Right, Uplo::Lower, Trans::No, diag, -T::ONE, l11, a21)?;
                }
                trti2(Uplo::Lower, diag, a.sub_mut(j, j, jb, jb))?;
            }
        }
    }
    Ok(())
}

/// Cholesky factorization `A = L L^T` (lower) or `A = U^T U` (upper).
pub fn potrf<T: Scalar>(uplo: Uplo, mut a: MatMut<'_, T>) -> Result<(), KernelError> {
    let n = check_square(&a, "potrf")?;
    for k in 0..n {
        let d = a.at(k, k);
        // Also rejects NaN.
        if !(d > T::ZERO) {
            return Err(numerical(format!(
                "potrf: leading minor {k} is not positive definite"
            )));
        }
        let d = d.sqrt();
        a.set(k, k, d);
        match uplo {
            Uplo::Lower => {
                for v in &mut a.col_mut(k)[k + 1..] {
                    *v /= d;
                }
                for j in k + 1..n {
                    let t = a.at(j, k);
                    let (lk, cj) = a.col_pair(k, j);
                    for (dst, &l) in cj[j..].iter_mut().zip(&lk[j..]) {
                        *dst -= l * t;
                    }
                }
            }
            Uplo::Upper => {
                for j in k + 1..n {
                    let v = a.at(k, j) / d;
                    a.set(k, j, v);
                }
                for j in k + 1..n {
                    let t = a.at(k, j);
                    for i in k + 1..=j {
                        let v = a.at(i, j) - a.at(k, i) * t;
                        a.set(i, j, v);
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn getrf_two_by_two_pivots() {
        // [[4,3],[6,3]] column-major.
        let mut a = [4.0, 6.0, 3.0, 3.0];
        let piv = getrf(MatMut::from_slice(&mut a, 2, 2, 2).unwrap()).unwrap();
        assert_eq!(piv, vec![1, 1]);
        // U first row is the pivot row [6, 3].
        assert_eq!(a[0], 6.0);
        assert_eq!(a[2], 3.0);
        // L21 = 4/6, U22 = 3 - (2/3)*3 = 1.
        assert!((a[1] - 4.0 / 6.0).abs() < 1e-15);
        assert!((a[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn getrf_zero_column_fails() {
        let mut a = [0.0, 0.0, 1.0, 2.0];
        let err = getrf(MatMut::from_slice(&mut a, 2, 2, 2).unwrap()).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn trti2_inverts_small_lower() {
        // L = [[2,0],[1,4]] -> L^{-1} = [[1/2,0],[-1/8,1/4]]
        let mut a = [2.0, 1.0, 99.0, 4.0];
        trti2(
            Uplo::Lower,
            Diag::NonUnit,
            MatMut::from_slice(&mut a, 2, 2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(a, [0.5, -0.125, 99.0, 0.25]);
    }

    #[test]
    fn trti2_singular() {
        let mut a = [1.0, 1.0, 0.0, 0.0];
        let err = trti2(
            Uplo::Lower,
            Diag::NonUnit,
            MatMut::from_slice(&mut a, 2, 2, 2).unwrap(),
        );
        assert!(err.unwrap_err().is_numerical());
    }

    #[test]
    fn potrf_small() {
        // [[4,2],[2,5]] = L L^T with L = [[2,0],[1,2]]
        let mut a = [4.0, 2.0, 2.0, 5.0];
        potrf(Uplo::Lower, MatMut::from_slice(&mut a, 2, 2, 2).unwrap()).unwrap();
        assert_eq!([a[0], a[1], a[3]], [2.0, 1.0, 2.0]);
        let mut u = [4.0, 2.0, 2.0, 5.0];
        potrf(Uplo::Upper, MatMut::from_slice(&mut u, 2, 2, 2).unwrap()).unwrap();
        assert_eq!([u[0], u[2], u[3]], [2.0, 1.0, 2.0]);
        let mut bad = [-1.0, 0.0, 0.0, 1.0];
        assert!(
            potrf(Uplo::Lower, MatMut::from_slice(&mut bad, 2, 2, 2).unwrap())
                .unwrap_err()
                .is_numerical()
        );
    }
}
