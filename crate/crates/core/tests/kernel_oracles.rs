use kernbench_core::kernels::blas::gemm;
use kernbench_core::kernels::lapack::{gesv, getrf, potrf, trti2, trtri};
use kernbench_core::kernels::util::{fill_uniform, porand};
use kernbench_core::kernels::{
    all_signatures, flop_count, lookup_signature, ArgKind, Diag, KernelBindings, KernelError,
    MatMut, MatRef, Trans, Uplo, Workspace,
};
use kernbench_core::oracle::{self, Dense};
use proptest::prelude::*;

fn uniform(rows: usize, cols: usize, seed: u64) -> Dense {
    let mut d = Dense::zeros(rows, cols);
    fill_uniform(&mut d.data, seed, 0);
    d
}

/// Stores `d` with leading dimension `ld`, filling the gaps with `guard`.
fn strided(d: &Dense, ld: usize, guard: f64) -> Vec<f64> {
    let mut out = vec![guard; ld * d.cols.max(1)];
    for j in 0..d.cols {
        for i in 0..d.rows {
            out[i + j * ld] = d.get(i, j);
        }
    }
    out
}

fn trans(t: bool) -> Trans {
    if t {
        Trans::Yes
    } else {
        Trans::No
    }
}

/// Cholesky factor of a random SPD matrix: a well-conditioned triangular
/// test matrix. Random triangular matrices with (0, 1) entries have condition
/// numbers growing exponentially with n and make inverse residuals
/// meaningless.
fn triangular(n: usize, uplo: Uplo, seed: u64) -> Dense {
    let mut a = Dense::zeros(n, n);
    let ld = n.max(1);
    porand(MatMut::from_slice(&mut a.data, n, n, ld).unwrap(), seed, 1).unwrap();
    potrf(
        Uplo::Lower,
        MatMut::from_slice(&mut a.data, n, n, ld).unwrap(),
    )
    .unwrap();
    let l = a.triangle(Uplo::Lower, false);
    match uplo {
        Uplo::Lower => l,
        Uplo::Upper => l.transpose(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gemm_matches_naive(
        m in 0usize..=64, n in 0usize..=64, k in 0usize..=64,
        ta: bool, tb: bool, pads in (0usize..4, 0usize..4, 0usize..4),
        alpha in -2.0f64..2.0, beta in prop::sample::select(vec![0.0, 1.0, -0.5]),
        seed: u64,
    ) {
        let (ta, tb) = (trans(ta), trans(tb));
        let a = if ta == Trans::No { uniform(m, k, seed) } else { uniform(k, m, seed) };
        let b = if tb == Trans::No { uniform(k, n, seed ^ 1) } else { uniform(n, k, seed ^ 1) };
        let c = uniform(m, n, seed ^ 2);
        let (lda, ldb, ldc) = (a.rows.max(1) + pads.0, b.rows.max(1) + pads.1, m.max(1) + pads.2);
        let (sa, sb) = (strided(&a, lda, 0.0), strided(&b, ldb, 0.0));
        let mut sc = strided(&c, ldc, -77.0);
        gemm(
            ta, tb, alpha,
            MatRef::from_slice(&sa, a.rows, a.cols, lda).unwrap(),
            MatRef::from_slice(&sb, b.rows, b.cols, ldb).unwrap(),
            beta,
            MatMut::from_slice(&mut sc, m, n, ldc).unwrap(),
        ).unwrap();
        let (expect, bound) = oracle::gemm(ta, tb, alpha, &a, &b, beta, &c);
        let got = Dense::from_strided(&sc, m, n, ldc);
        for idx in 0..m * n {
            let err = (got.data[idx] - expect.data[idx]).abs();
            prop_assert!(err <= 1e-13 * bound.data[idx], "element {idx}: {err} vs bound {}", bound.data[idx]);
        }
        for j in 0..n {
            for i in m..ldc {
                if i + j * ldc < sc.len() {
                    prop_assert_eq!(sc[i + j * ldc], -77.0);
                }
            }
        }
    }

    #[test]
    fn getrf_reconstructs(m in 0usize..=64, n in 0usize..=64, seed: u64) {
        let a = uniform(m, n, seed);
        let mut lu = a.clone();
        let piv = getrf(MatMut::from_slice(&mut lu.data, m, n, m.max(1)).unwrap()).unwrap();
        prop_assert!(oracle::lu_residual(&a, &lu, &piv) <= 1e-10);
    }

    #[test]
    fn gesv_residual(n in 1usize..=64, nrhs in 0usize..=16, seed: u64) {
        let a = uniform(n, n, seed);
        let b = uniform(n, nrhs, seed ^ 5);
        let (mut fa, mut x) = (a.clone(), b.clone());
        gesv(
            MatMut::from_slice(&mut fa.data, n, n, n).unwrap(),
            MatMut::from_slice(&mut x.data, n, nrhs, n).unwrap(),
        ).unwrap();
        prop_assert!(oracle::solve_residual(&a, &x, &b) <= 1e-8);
    }

    #[test]
    fn triangular_inverses(n in 0usize..=64, lower: bool, unit: bool, blocked: bool, seed: u64) {
        let uplo = if lower { Uplo::Lower } else { Uplo::Upper };
        let diag = if unit { Diag::Unit } else { Diag::NonUnit };
        let mut a = triangular(n, uplo, seed);
        if unit {
            // Keep the strictly triangular part small so unit-diagonal
            // inverses stay bounded.
            for v in &mut a.data {
                *v /= n as f64;
            }
        }
        let mut x = a.clone();
        let view = MatMut::from_slice(&mut x.data, n, n, n.max(1)).unwrap();
        if blocked { trtri(uplo, diag, view).unwrap() } else { trti2(uplo, diag, view).unwrap() }
        prop_assert!(oracle::inverse_residual(&a, &x, uplo, unit) < 1e-10);
    }
}

#[test]
fn gemm_flops_match_instrumented_count() {
    let sig = lookup_signature("dgemm").unwrap();
    for m in 0..=8 {
        for n in 0..=8 {
            for k in 0..=8 {
                let b = KernelBindings::new()
                    .with_flag("transA", 'N')
                    .with_flag("transB", 'N')
                    .with_dim("m", m)
                    .with_dim("n", n)
                    .with_dim("k", k);
                let counted = oracle::counted_gemm_flops(m as usize, n as usize, k as usize);
                assert_eq!(flop_count(sig, &b).unwrap(), counted, "m={m} n={n} k={k}");
            }
        }
    }
}

#[test]
fn factorization_flops_match_instrumented_count() {
    let getrf_sig = lookup_signature("dgetrf").unwrap();
    let trsv_sig = lookup_signature("dtrsv").unwrap();
    for m in 0..=8 {
        for n in 0..=8 {
            let b = KernelBindings::new().with_dim("m", m).with_dim("n", n);
            assert_eq!(
                flop_count(getrf_sig, &b).unwrap(),
                oracle::counted_getrf_flops(m as usize, n as usize)
            );
        }
        let b = KernelBindings::new()
            .with_flag("uplo", 'L')
            .with_flag("trans", 'N')
            .with_flag("diag", 'N')
            .with_dim("n", m);
        assert_eq!(
            flop_count(trsv_sig, &b).unwrap(),
            oracle::counted_trsv_flops(m as usize)
        );
    }
    let b = KernelBindings::new()
        .with_dim("m", 1000)
        .with_dim("n", 1000);
    assert_eq!(
        flop_count(getrf_sig, &b).unwrap(),
        (4 * 1000u64.pow(3) - 3 * 1000u64.pow(2) - 1000) / 6
    );
}

#[test]
fn dgemm_thousand_cubed_flops() {
    let b = KernelBindings::new()
        .with_flag("transA", 'N')
        .with_flag("transB", 'N')
        .with_dim("m", 1000)
        .with_dim("n", 1000)
        .with_dim("k", 1000);
    assert_eq!(
        flop_count(lookup_signature("dgemm").unwrap(), &b).unwrap(),
        2_000_000_000
    );
    let b = KernelBindings::new().with_dim("n", 0);
    assert_eq!(
        flop_count(lookup_signature("daxpy").unwrap(), &b).unwrap(),
        0
    );
}

#[test]
fn derived_shapes_follow_transposition() {
    let sig = lookup_signature("dgemm").unwrap();
    let b = KernelBindings::new()
        .with_flag("transA", 'T')
        .with_flag("transB", 'N')
        .with_dim("m", 2)
        .with_dim("n", 3)
        .with_dim("k", 5);
    let s: Vec<_> = sig
        .derive_shapes(&b)
        .unwrap()
        .iter()
        .map(|s| (s.arg, s.rows, s.cols, s.min_ld))
        .collect();
    assert_eq!(s, [("A", 5, 2, 5), ("B", 5, 3, 5), ("C", 2, 3, 2)]);
    let bad = b.clone().with_flag("transA", 'X');
    assert!(matches!(
        sig.derive_shapes(&bad),
        Err(KernelError::BadArgument { .. })
    ));
    let neg = b.with_dim("m", -1);
    assert!(matches!(
        sig.derive_shapes(&neg),
        Err(KernelError::BadArgument { .. })
    ));
}

#[test]
fn getrf_example_residual() {
    let a = Dense {
        rows: 2,
        cols: 2,
        data: vec![4.0, 6.0, 3.0, 3.0],
    };
    let mut lu = a.clone();
    let piv = getrf(MatMut::from_slice(&mut lu.data, 2, 2, 2).unwrap()).unwrap();
    assert_eq!((lu.get(0, 0), lu.get(0, 1)), (6.0, 3.0));
    assert!(oracle::lu_residual(&a, &lu, &piv) * a.max_abs() < 1e-12);
}

#[test]
fn trti2_fifty_residual() {
    let a = triangular(50, Uplo::Lower, 3);
    let mut x = a.clone();
    trti2(
        Uplo::Lower,
        Diag::NonUnit,
        MatMut::from_slice(&mut x.data, 50, 50, 50).unwrap(),
    )
    .unwrap();
    assert!(oracle::inverse_residual(&a, &x, Uplo::Lower, false) < 1e-10);
}

#[test]
fn porand_is_symmetric_and_factorizable() {
    for n in [1usize, 2, 17, 64, 255, 256] {
        let mut a = vec![0.0f64; n * n];
        porand(MatMut::from_slice(&mut a, n, n, n).unwrap(), 42, n as u64).unwrap();
        for j in 0..n {
            for i in 0..n {
                assert_eq!(a[i + j * n].to_bits(), a[j + i * n].to_bits());
            }
        }
        getrf(MatMut::from_slice(&mut a, n, n, n).unwrap()).unwrap();
    }
}

#[test]
fn blocked_inversion_matches_unblocked() {
    let n = 200;
    let l = triangular(n, Uplo::Lower, 31);
    let mut reference = l.clone();
    trti2(
        Uplo::Lower,
        Diag::NonUnit,
        MatMut::from_slice(&mut reference.data, n, n, n).unwrap(),
    )
    .unwrap();
    for nb in [20, 50, 100] {
        let mut ws = Workspace::new(0);
        ws.insert_f64("A", l.data.clone());
        for line in oracle::blocked_lower_inverse("A", n, nb) {
            ws.run(&line).unwrap();
        }
        let x = Dense::from_strided(ws.f64("A").unwrap(), n, n, n).triangle(Uplo::Lower, false);
        assert!(
            x.max_abs_diff(&reference) <= 1e-9,
            "nb={nb}: {}",
            x.max_abs_diff(&reference)
        );
    }
}

#[test]
fn workspace_identity_examples() {
    let mut ws = Workspace::new(0);
    ws.insert_f64("A", vec![1.0, 0.0, 0.0, 1.0]);
    ws.insert_f64("B", vec![5.0, 7.0, 6.0, 8.0]);
    ws.insert_f64("C", vec![0.0; 4]);
    ws.run("dgemm N N 2 2 2 1 A 2 B 2 0 C 2").unwrap();
    assert_eq!(ws.f64("C").unwrap(), &[5.0, 7.0, 6.0, 8.0]);

    let eye: Vec<f64> = (0..25)
        .map(|i| if i % 6 == 0 { 1.0 } else { 0.0 })
        .collect();
    let b: Vec<f64> = (0..15).map(|i| i as f64 * 0.25 - 1.0).collect();
    ws.insert_f64("I", eye);
    ws.insert_f64("X", b.clone());
    ws.run("dtrsm L L N N 5 3 1 I 5 X 5").unwrap();
    assert_eq!(ws.f64("X").unwrap(), b.as_slice());
}

const GUARD: f64 = -123456.75;

/// Runs every registered kernel on operands stored with padded leading
/// dimensions and checks that no element outside an operand window changes.
#[test]
fn kernels_never_write_outside_windows() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("in.bin");
    std::fs::write(&file, vec![0u8; 8 * 64]).unwrap();
    let out_file = dir.path().join("out.bin");
    let mut case = 0u64;
    for sig in all_signatures() {
        for variant in 0..8u64 {
            case += 1;
            let mut b = KernelBindings::new();
            let mut tokens: Vec<String> = Vec::new();
            for (pos, a) in sig.args.iter().enumerate() {
                match &a.kind {
                    ArgKind::Flag { allowed } => {
                        b.set_flag(a.name, allowed[(variant as usize + pos) % allowed.len()])
                    }
                    ArgKind::Dim => b.set_dim(a.name, 1 + ((case * 7 + pos as u64 * 3) % 6) as i64),
                    _ => {}
                }
            }
            let shapes = sig.derive_shapes(&b).unwrap();
            let mut ws = Workspace::new(case);
            let mut expected = Vec::new();
            for a in &sig.args {
                tokens.push(match &a.kind {
                    ArgKind::Flag { .. } => b.flag(a.name).unwrap().to_string(),
                    ArgKind::Dim => b.dim(a.name).unwrap().to_string(),
                    ArgKind::Scalar => "0.5".into(),
                    ArgKind::Path => {
                        if sig.name.contains("read") {
                            file.to_str().unwrap().into()
                        } else {
                            out_file.to_str().unwrap().into()
                        }
                    }
                    ArgKind::Ld { .. } => {
                        let data = sig
                            .data_args()
                            .find(|(_, _, d)| d.ld == Some(a.name))
                            .map(|(_, d, _)| d.name)
                            .unwrap();
                        let s = shapes.iter().find(|s| s.arg == data).unwrap();
                        (s.min_ld + 3).to_string()
                    }
                    ArgKind::Data(d) => {
                        let s = shapes.iter().find(|s| s.arg == a.name).unwrap();
                        let ld = if d.ld.is_some() {
                            s.min_ld + 3
                        } else {
                            s.min_ld
                        };
                        let len = ld * s.cols + 5;
                        let mut buf = vec![GUARD; len];
                        let mut window = vec![false; len];
                        for j in 0..s.cols {
                            for i in 0..s.rows {
                                // Diagonally dominant contents keep the
                                // factorizations and solves well defined.
                                buf[i + j * ld] = if i == j { 4.0 + s.rows as f64 } else { 0.25 };
                                window[i + j * ld] = true;
                            }
                        }
                        let name = format!("{}{}", a.name, expected.len());
                        expected.push((name.clone(), buf.clone(), window));
                        if sig.dtype == kernbench_core::kernels::Dtype::Single {
                            ws.insert_f32(&name, buf.iter().map(|&v| v as f32).collect());
                        } else {
                            ws.insert_f64(&name, buf);
                        }
                        name
                    }
                });
            }
            let line = format!("{} {}", sig.name, tokens.join(" "));
            ws.run(&line).unwrap_or_else(|e| panic!("{line}: {e}"));
            for (name, before, window) in expected {
                let after: Vec<f64> = match ws.f64(&name) {
                    Some(v) => v.to_vec(),
                    None => ws.f32(&name).unwrap().iter().map(|&v| v as f64).collect(),
                };
                for (idx, (&x, &y)) in before.iter().zip(&after).enumerate() {
                    if !window[idx] {
                        assert_eq!(x.to_bits(), y.to_bits(), "{line}: {name}[{idx}] written");
                    }
                }
            }
        }
    }
}
