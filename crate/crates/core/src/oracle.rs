//! Naive reference routines the kernels are checked against.
//!
//! Everything here is written for clarity over speed: packed column-major
//! matrices, textbook loops, no blocking.

use crate::kernels::{Trans, Uplo};

/// Packed column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n, n);
        for i in 0..n {
            d.set(i, i, 1.0);
        }
        d
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut d = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                d.set(i, j, f(i, j));
            }
        }
        d
    }

    /// Copies the `rows x cols` window of a strided buffer.
    pub fn from_strided(data: &[f64], rows: usize, cols: usize, ld: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| data[i + j * ld])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.rows]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
    }

    pub fn transpose(&self) -> Dense {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn op(&self, t: Trans) -> Dense {
        match t {
            Trans::No => self.clone(),
            Trans::Yes => self.transpose(),
        }
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols)
                .map(|p| self.get(i, p) * other.get(p, j))
                .sum()
        })
    }

    /// The `uplo` triangle (diagonal included), zeros elsewhere; with
    /// `unit` the diagonal is replaced by ones.
    pub fn triangle(&self, uplo: Uplo, unit: bool) -> Dense {
        Self::from_fn(self.rows, self.cols, |i, j| {
            if i == j && unit {
                1.0
            } else if (uplo == Uplo::Lower && i >= j) || (uplo == Uplo::Upper && i <= j) {
                self.get(i, j)
            } else {
                0.0
            }
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Dense) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `alpha op(A) op(B) + beta C` by the triple loop, together with the
/// elementwise magnitude bound `|alpha| |op(A)| |op(B)| + |beta| |C|` used to
/// scale the comparison.
pub fn gemm(
    transa: Trans,
    transb: Trans,
    alpha: f64,
    a: &Dense,
    b: &Dense,
    beta: f64,
    c: &Dense,
) -> (Dense, Dense) {
    let (oa, ob) = (a.op(transa), b.op(transb));
    assert_eq!(oa.cols, ob.rows);
    let mut out = Dense::zeros(c.rows, c.cols);
    let mut bound = Dense::zeros(c.rows, c.cols);
    for j in 0..c.cols {
        for i in 0..c.rows {
            let mut s = 0.0;
            let mut m = 0.0;
            for p in 0..oa.cols {
                s += oa.get(i, p) * ob.get(p, j);
                m += (oa.get(i, p) * ob.get(p, j)).abs();
            }
            out.set(i, j, alpha * s + beta * c.get(i, j));
            bound.set(i, j, alpha.abs() * m + (beta * c.get(i, j)).abs());
        }
    }
    (out, bound)
}

/// `max |P A - L U| / max |A|` for a factorization stored LAPACK-style in
/// `lu`, with the row interchanges of `pivots`.
pub fn lu_residual(a: &Dense, lu: &Dense, pivots: &[usize]) -> f64 {
    let (m, n) = (a.rows, a.cols);
    let k = m.min(n);
    let l = Dense::from_fn(m, k, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => lu.get(i, j),
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => 0.0,
    });
    let u = Dense::from_fn(k, n, |i, j| if i <= j { lu.get(i, j) } else { 0.0 });
    let mut pa = a.clone();
    for (r, &p) in pivots.iter().enumerate() {
        for j in 0..n {
            let t = pa.get(r, j);
            pa.set(r, j, pa.get(p, j));
            pa.set(p, j, t);
        }
    }
    let scale = a.max_abs();
    let diff = pa.max_abs_diff(&l.matmul(&u));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `max |A X - B| / (n max|A| max|X|)`.
pub fn solve_residual(a: &Dense, x: &Dense, b: &Dense) -> f64 {
    let diff = a.matmul(x).max_abs_diff(b);
    let scale = a.rows as f64 * a.max_abs() * x.max_abs();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `max |T(A) T(X) - I|` for triangular `A` and its claimed inverse `X`.
pub fn inverse_residual(a: &Dense, x: &Dense, uplo: Uplo, unit: bool) -> f64 {
    let ta = a.triangle(uplo, unit);
    let tx = x.triangle(uplo, unit);
    ta.matmul(&tx).max_abs_diff(&Dense::identity(a.rows))
}

/// Floating-point operations of a naive gemm, counted one by one.
pub fn counted_gemm_flops(m: usize, n: usize, k: usize) -> u64 {
    let (mut muls, mut adds) = (0u64, 0u64);
    for _j in 0..n {
        for _i in 0..m {
            for _p in 0..k {
                muls += 1;
                adds += 1;
            }
        }
    }
    muls + adds
}

/// Operations of an unpivoted right-looking LU, counted one by one.
pub fn counted_getrf_flops(m: usize, n: usize) -> u64 {
    let mut ops = 0u64;
    for k in 0..m.min(n) {
        for _i in k + 1..m {
            ops += 1; // division by the pivot
            for _j in k + 1..n {
                ops += 2;
            }
        }
    }
    ops
}

/// Operations of a forward substitution, counted one by one.
pub fn counted_trsv_flops(n: usize) -> u64 {
    let mut ops = 0u64;
    for i in 0..n {
        for _j in 0..i {
            ops += 2;
        }
        ops += 1;
    }
    ops
}


/// Call lines inverting the lower triangle of the `n`×`n` matrix `name` (ld
/// `n`) in place, `nb` columns at a time. With `A00` the already inverted
/// leading block, each step computes `A10 := -inv(A11) A10 A00` and then
/// inverts `A11`.
pub fn blocked_lower_inverse(name: &str, n: usize, nb: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut j = 0;
    while j < n {
        let b = nb.min(n - j);
        let a11 = format!("{name}+{}", j + j * n);
        if j > 0 {
            lines.push(format!("dtrmm R L N N {b} {j} 1 {name} {n} {name}+{j} {n}"));
            lines.push(format!("dtrsm L L N N {b} {j} -1 {a11} {n} {name}+{j} {n}"));
        }
        lines.push(format!("dtrti2 L N {b} {a11} {n}"));
        j += b;
    }
    lines
}
