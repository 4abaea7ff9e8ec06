use std::sync::OnceLock;

use super::signature::{
    getrf_flops, potrf_flops, trti2_flops, ArgKind, ArgSpec, DataSpec, KernelBindings, KernelOp,
    ShapeRule, Signature, Structure, StructureRule,
};
use super::{Dtype, KernelError};

const TRANS: &[char] = &['N', 'T'];
const SIDE: &[char] = &['L', 'R'];
const UPLO: &[char] = &['L', 'U'];
const DIAG: &[char] = &['N', 'U'];

fn flag(name: &'static str, allowed: &'static [char]) -> ArgSpec {
    ArgSpec {
        name,
        kind: ArgKind::Flag { allowed },
    }
}

fn dim(name: &'static str) -> ArgSpec {
    ArgSpec {
        name,
        kind: ArgKind::Dim,
    }
}

fn scalar(name: &'static str) -> ArgSpec {
    ArgSpec {
        name,
        kind: ArgKind::Scalar,
    }
}

fn ld(name: &'static str, min: ShapeRule) -> ArgSpec {
    ArgSpec {
        name,
        kind: ArgKind::Ld { min },
    }
}

fn path(name: &'static str) -> ArgSpec {
    ArgSpec {
        name,
        kind: ArgKind::Path,
    }
}

/// A data argument with its leading-dimension argument.
fn matrix(
    name: &'static str,
    ld_name: &'static str,
    rows: ShapeRule,
    cols: ShapeRule,
    structure: StructureRule,
    writes: bool,
) -> [ArgSpec; 2] {
    [
        ArgSpec {
            name,
            kind: ArgKind::Data(DataSpec {
                rows,
                cols,
                ld: Some(ld_name),
                structure,
                writes,
            }),
        },
        ld(ld_name, rows),
    ]
}

/// A strided BLAS vector: a `1 x len` operand whose increment is its ld.
fn vector(name: &'static str, inc: &'static str, len: ShapeRule, writes: bool) -> [ArgSpec; 2] {
    matrix(
        name,
        inc,
        ShapeRule::One,
        len,
        StructureRule::Fixed(Structure::General),
        writes,
    )
}

fn general() -> StructureRule {
    StructureRule::Fixed(Structure::General)
}

fn tri() -> StructureRule {
    StructureRule::Triangular { uplo: "uplo" }
}

use ShapeRule::{Arg, Pick};

fn side_dim() -> ShapeRule {
    Pick {
        flag: "side",
        when: 'L',
        then: "m",
        otherwise: "n",
    }
}

fn cat(parts: Vec<Vec<ArgSpec>>) -> Vec<ArgSpec> {
    parts.into_iter().flatten().collect()
}

fn d(b: &KernelBindings, n: &str) -> Result<u64, KernelError> {
    b.dim(n)
}

fn gemm(dtype: Dtype) -> Signature {
    Signature {
        name: if dtype == Dtype::Double {
            "dgemm"
        } else {
            "sgemm"
        },
        dtype,
        args: cat(vec![
            vec![
                flag("transA", TRANS),
                flag("transB", TRANS),
                dim("m"),
                dim("n"),
                dim("k"),
                scalar("alpha"),
            ],
            matrix(
                "A",
                "ldA",
                Pick {
                    flag: "transA",
                    when: 'N',
                    then: "m",
                    otherwise: "k",
                },
                Pick {
                    flag: "transA",
                    when: 'N',
                    then: "k",
                    otherwise: "m",
                },
                general(),
                false,
            )
            .into(),
            matrix(
                "B",
                "ldB",
                Pick {
                    flag: "transB",
                    when: 'N',
                    then: "k",
                    otherwise: "n",
                },
                Pick {
                    flag: "transB",
                    when: 'N',
                    then: "n",
                    otherwise: "k",
                },
                general(),
                false,
            )
            .into(),
            vec![scalar("beta")],
            matrix("C", "ldC", Arg("m"), Arg("n"), general(), true).into(),
        ]),
        flops: "2*m*n*k",
        description: "General matrix-matrix product C := alpha op(A) op(B) + beta C",
        flop_fn: |b| Ok(2 * d(b, "m")? * d(b, "n")? * d(b, "k")?),
        op: KernelOp::Gemm,
    }
}

fn memset(dtype: Dtype) -> Signature {
    Signature {
        name: if dtype == Dtype::Double {
            "dmemset"
        } else {
            "smemset"
        },
        dtype,
        args: vec![
            scalar("value"),
            dim("n"),
            ArgSpec {
                name: "X",
                kind: ArgKind::Data(DataSpec {
                    rows: Arg("n"),
                    cols: ShapeRule::One,
                    ld: None,
                    structure: general(),
                    writes: true,
                }),
            },
        ],
        flops: "0",
        description: "Fill every entry of a contiguous buffer with one value",
        flop_fn: |_| Ok(0),
        op: KernelOp::Memset,
    }
}

fn gerand(dtype: Dtype) -> Signature {
    Signature {
        name: if dtype == Dtype::Double {
            "dgerand"
        } else {
            "sgerand"
        },
        dtype,
        args: cat(vec![
            vec![dim("m"), dim("n")],
            matrix("A", "ldA", Arg("m"), Arg("n"), general(), true).into(),
        ]),
        flops: "0",
        description: "Fill a matrix with random values uniform in (0, 1)",
        flop_fn: |_| Ok(0),
        op: KernelOp::Gerand,
    }
}

fn build() -> Vec<Signature> {
    let dbl = Dtype::Double;
    let trsm_like = |name: &'static str, op: KernelOp, description: &'static str| Signature {
        name,
        dtype: dbl,
        args: cat(vec![
            vec![
                flag("side", SIDE),
                flag("uplo", UPLO),
                flag("transA", TRANS),
                flag("diag", DIAG),
            ],
            vec![dim("m"), dim("n"), scalar("alpha")],
            matrix("A", "ldA", side_dim(), side_dim(), tri(), false).into(),
            matrix("B", "ldB", Arg("m"), Arg("n"), general(), true).into(),
        ]),
        flops: "m*m*n if side = L, m*n*n if side = R",
        description,
        flop_fn: |b| {
            let (m, n) = (d(b, "m")?, d(b, "n")?);
            Ok(if b.flag("side")? == 'L' {
                m * m * n
            } else {
                m * n * n
            })
        },
        op,
    };
    let trinv = |name: &'static str, op: KernelOp, description: &'static str| Signature {
        name,
        dtype: dbl,
        args: cat(vec![
            vec![flag("uplo", UPLO), flag("diag", DIAG), dim("n")],
            matrix("A", "ldA", Arg("n"), Arg("n"), tri(), true).into(),
        ]),
        flops: "(n^3 + 2*n)/3",
        description,
        flop_fn: |b| Ok(trti2_flops(d(b, "n")?)),
        op,
    };
    let file =
        |name: &'static str, op: KernelOp, writes: bool, description: &'static str| Signature {
            name,
            dtype: dbl,
            args: cat(vec![
                vec![path("filename"), dim("m"), dim("n")],
                matrix("A", "ldA", Arg("m"), Arg("n"), general(), writes).into(),
            ]),
            flops: "0",
            description,
            flop_fn: |_| Ok(0),
            op,
        };

    vec![
        gemm(dbl),
        gemm(Dtype::Single),
        Signature {
            name: "dgemv",
            dtype: dbl,
            args: cat(vec![
                vec![flag("trans", TRANS), dim("m"), dim("n"), scalar("alpha")],
                matrix("A", "ldA", Arg("m"), Arg("n"), general(), false).into(),
                vector(
                    "x",
                    "incx",
                    Pick {
                        flag: "trans",
                        when: 'N',
                        then: "n",
                        otherwise: "m",
                    },
                    false,
                )
                .into(),
                vec![scalar("beta")],
                vector(
                    "y",
                    "incy",
                    Pick {
                        flag: "trans",
                        when: 'N',
                        then: "m",
                        otherwise: "n",
                    },
                    true,
                )
                .into(),
            ]),
            flops: "2*m*n",
            description: "Matrix-vector product y := alpha op(A) x + beta y",
            flop_fn: |b| Ok(2 * d(b, "m")? * d(b, "n")?),
            op: KernelOp::Gemv,
        },
        Signature {
            name: "daxpy",
            dtype: dbl,
            args: cat(vec![
                vec![dim("n"), scalar("alpha")],
                vector("x", "incx", Arg("n"), false).into(),
                vector("y", "incy", Arg("n"), true).into(),
            ]),
            flops: "2*n",
            description: "Vector update y := alpha x + y",
            flop_fn: |b| Ok(2 * d(b, "n")?),
            op: KernelOp::Axpy,
        },
        Signature {
            name: "dtrsv",
            dtype: dbl,
            args: cat(vec![
                vec![
                    flag("uplo", UPLO),
                    flag("trans", TRANS),
                    flag("diag", DIAG),
                    dim("n"),
                ],
                matrix("A", "ldA", Arg("n"), Arg("n"), tri(), false).into(),
                vector("x", "incx", Arg("n"), true).into(),
            ]),
            flops: "n*n",
            description: "Triangular solve with a single right-hand side x := op(A)^-1 x",
            flop_fn: |b| Ok(d(b, "n")?.pow(2)),
            op: KernelOp::Trsv,
        },
        trsm_like(
            "dtrsm",
            KernelOp::Trsm,
            "Triangular solve B := alpha op(A)^-1 B or alpha B op(A)^-1",
        ),
        trsm_like(
            "dtrmm",
            KernelOp::Trmm,
            "Triangular product B := alpha op(A) B or alpha B op(A)",
        ),
        Signature {
            name: "dsyrk",
            dtype: dbl,
            args: cat(vec![
                vec![
                    flag("uplo", UPLO),
                    flag("trans", TRANS),
                    dim("n"),
                    dim("k"),
                    scalar("alpha"),
                ],
                matrix(
                    "A",
                    "ldA",
                    Pick {
                        flag: "trans",
                        when: 'N',
                        then: "n",
                        otherwise: "k",
                    },
                    Pick {
                        flag: "trans",
                        when: 'N',
                        then: "k",
                        otherwise: "n",
                    },
                    general(),
                    false,
                )
                .into(),
                vec![scalar("beta")],
                matrix("C", "ldC", Arg("n"), Arg("n"), general(), true).into(),
            ]),
            flops: "n*(n+1)*k",
            description: "Symmetric rank-k update C := alpha op(A) op(A)^T + beta C (one triangle)",
            flop_fn: |b| {
                let n = d(b, "n")?;
                Ok(n * (n + 1) * d(b, "k")?)
            },
            op: KernelOp::Syrk,
        },
        Signature {
            name: "dgetrf",
            dtype: dbl,
            args: cat(vec![
                vec![dim("m"), dim("n")],
                matrix("A", "ldA", Arg("m"), Arg("n"), general(), true).into(),
            ]),
            flops: "sum_{i<min(m,n)} (m-i-1)*(2*(n-i-1)+1); square: (4n^3 - 3n^2 - n)/6",
            description: "LU factorization with partial pivoting (pivots kept internal)",
            flop_fn: |b| Ok(getrf_flops(d(b, "m")?, d(b, "n")?)),
            op: KernelOp::Getrf,
        },
        Signature {
            name: "dgesv",
            dtype: dbl,
            args: cat(vec![
                vec![dim("n"), dim("nrhs")],
                matrix("A", "ldA", Arg("n"), Arg("n"), general(), true).into(),
                matrix("B", "ldB", Arg("n"), Arg("nrhs"), general(), true).into(),
            ]),
            flops: "getrf(n,n) + 2*n*n*nrhs",
            description: "Solve A X = B through LU factorization",
            flop_fn: |b| {
                let n = d(b, "n")?;
                Ok(getrf_flops(n, n) + 2 * n * n * d(b, "nrhs")?)
            },
            op: KernelOp::Gesv,
        },
        trinv("dtrti2", KernelOp::Trti2, "Unblocked triangular inversion"),
        trinv("dtrtri", KernelOp::Trtri, "Blocked triangular inversion"),
        Signature {
            name: "dpotrf",
            dtype: dbl,
            args: cat(vec![
                vec![flag("uplo", UPLO), dim("n")],
                matrix(
                    "A",
                    "ldA",
                    Arg("n"),
                    Arg("n"),
                    StructureRule::Fixed(Structure::SymmetricPd),
                    true,
                )
                .into(),
            ]),
            flops: "n*(n+1)*(2*n+1)/6",
            description: "Cholesky factorization of a symmetric positive definite matrix",
            flop_fn: |b| Ok(potrf_flops(d(b, "n")?)),
            op: KernelOp::Potrf,
        },
        memset(dbl),
        memset(Dtype::Single),
        gerand(dbl),
        gerand(Dtype::Single),
        Signature {
            name: "dporand",
            dtype: dbl,
            args: cat(vec![
                vec![dim("n")],
                matrix(
                    "A",
                    "ldA",
                    Arg("n"),
                    Arg("n"),
                    StructureRule::Fixed(Structure::SymmetricPd),
                    true,
                )
                .into(),
            ]),
            flops: "0",
            description: "Random symmetric positive definite matrix G^T G + n I",
            flop_fn: |_| Ok(0),
            op: KernelOp::Porand,
        },
        file(
            "dreadfile",
            KernelOp::Readfile,
            true,
            "Read a matrix from a raw little-endian binary file",
        ),
        file(
            "dwritefile",
            KernelOp::Writefile,
            false,
            "Write a matrix to a raw little-endian binary file",
        ),
    ]
}

fn registry() -> &'static [Signature] {
    static REGISTRY: OnceLock<Vec<Signature>> = OnceLock::new();
    REGISTRY.get_or_init(build)
}

pub fn lookup_signature(name: &str) -> Result<&'static Signature, KernelError> {
    registry()
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| KernelError::UnknownKernel(name.to_string()))
}

/// All registered signatures in registration order.
pub fn all_signatures() -> &'static [Signature] {
    registry()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::flop_count;
    use std::collections::HashSet;

    #[test]
    fn required_kernels_present() {
        for name in [
            "dgemm",
            "dtrsm",
            "dtrsv",
            "dtrmm",
            "dsyrk",
            "dgetrf",
            "dgesv",
            "dtrti2",
            "dtrtri",
            "daxpy",
            "dgemv",
            "dmemset",
            "dgerand",
            "dporand",
            "dreadfile",
            "dwritefile",
            "sgemm",
            "smemset",
            "sgerand",
        ] {
            assert!(lookup_signature(name).is_ok(), "{name}");
        }
        assert!(matches!(
            lookup_signature("zzz_unknown"),
            Err(KernelError::UnknownKernel(_))
        ));
    }

    #[test]
    fn dgemm_argument_order() {
        let names: Vec<_> = lookup_signature("dgemm")
            .unwrap()
            .args
            .iter()
            .map(|a| a.name)
            .collect();
        assert_eq!(
            names,
            [
                "transA", "transB", "m", "n", "k", "alpha", "A", "ldA", "B", "ldB", "beta", "C",
                "ldC"
            ]
        );
        let ms: Vec<_> = lookup_signature("dmemset")
            .unwrap()
            .args
            .iter()
            .map(|a| a.name)
            .collect();
        assert_eq!(ms, ["value", "n", "X"]);
    }

    #[test]
    fn signature_invariants() {
        for sig in all_signatures() {
            let mut seen = HashSet::new();
            for a in &sig.args {
                assert!(seen.insert(a.name), "{}: duplicate {}", sig.name, a.name);
            }
            let kind_of = |n: &str| sig.args.iter().find(|a| a.name == n).map(|a| &a.kind);
            for (_, a, data) in sig.data_args() {
                for id in data
                    .rows
                    .identifiers()
                    .into_iter()
                    .chain(data.cols.identifiers())
                {
                    assert!(
                        matches!(kind_of(id), Some(ArgKind::Dim | ArgKind::Flag { .. })),
                        "{}: {} refers to {id}",
                        sig.name,
                        a.name
                    );
                }
                if let Some(ld_name) = data.ld {
                    match kind_of(ld_name) {
                        Some(ArgKind::Ld { min }) => {
                            assert_eq!(*min, data.rows, "{}: {ld_name}", sig.name)
                        }
                        other => panic!("{}: {ld_name} is {other:?}", sig.name),
                    }
                }
            }
            for a in &sig.args {
                if let ArgKind::Flag { allowed } = a.kind {
                    assert!(!allowed.is_empty());
                }
            }
            // Every flop formula reads only bound dims.
            let mut b = KernelBindings::new();
            for a in &sig.args {
                match a.kind {
                    ArgKind::Flag { allowed } => b.set_flag(a.name, allowed[0]),
                    ArgKind::Dim => b.set_dim(a.name, 3),
                    _ => {}
                }
            }
            flop_count(sig, &b).unwrap();
            sig.derive_shapes(&b).unwrap();
        }
    }
}
