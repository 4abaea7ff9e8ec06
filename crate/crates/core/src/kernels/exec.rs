use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use super::signature::{ArgKind, KernelBindings, KernelOp, Signature};
use super::view::{footprint, MatMut, MatRef};
use super::{blas, lapack, lookup_signature, util};
use super::{Diag, Dtype, KernelError, Scalar, Side, Trans, Uplo};

/// One argument of a kernel call; `D` is the representation of data
/// operands (a token before resolution, a [`RawRegion`] after).
#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue<D> {
    Flag(char),
    Int(i64),
    Real(f64),
    Data(D),
    Path(String),
}

impl<D: fmt::Display> fmt::Display for ArgValue<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Flag(c) => write!(f, "{c}"),
            ArgValue::Int(i) => write!(f, "{i}"),
            ArgValue::Real(r) => write!(f, "{r}"),
            ArgValue::Data(d) => write!(f, "{d}"),
            ArgValue::Path(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCall<D> {
    pub name: String,
    pub args: Vec<ArgValue<D>>,
}

impl KernelCall<String> {
    /// Parses `name arg...` tokens against the registry.
    pub fn parse(tokens: &[&str]) -> Result<Self, KernelError> {
        let (name, rest) = tokens
            .split_first()
            .ok_or_else(|| KernelError::UnknownKernel(String::new()))?;
        let sig = lookup_signature(name)?;
        Ok(KernelCall {
            name: name.to_string(),
            args: sig.parse_args(rest)?,
        })
    }
}

impl<D: fmt::Display> fmt::Display for KernelCall<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// Untyped view of caller-owned memory: `len` elements of `dtype` starting
/// at `ptr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRegion {
    ptr: *mut u8,
    len: usize,
    dtype: Dtype,
}

unsafe impl Send for RawRegion {}
unsafe impl Sync for RawRegion {}

impl RawRegion {
    /// # Safety
    /// `ptr` must be aligned for `dtype` and valid for reads and writes of
    /// `len` elements for as long as calls built from this region execute,
    /// and nothing else may access the memory during execution.
    pub unsafe fn new(ptr: *mut u8, len: usize, dtype: Dtype) -> Self {
        RawRegion { ptr, len, dtype }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn addr(&self) -> usize {
        self.ptr as usize
    }
}

/// Randomness context of one call: fills draw from `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallContext {
    pub seed: u64,
    pub stream: u64,
}

/// Element window of one operand, in bytes.
#[derive(Debug, Clone, Copy)]
struct Window {
    arg: &'static str,
    start: usize,
    row_bytes: usize,
    cols: usize,
    ld_bytes: usize,
    writes: bool,
}

impl Window {
    fn is_empty(&self) -> bool {
        self.row_bytes == 0 || self.cols == 0
    }

    fn end(&self) -> usize {
        self.start + (self.cols - 1) * self.ld_bytes + self.row_bytes
    }

    fn column(&self, j: usize) -> (usize, usize) {
        let s = self.start + j * self.ld_bytes;
        (s, s + self.row_bytes)
    }

    /// Exact test: do the two windows share an element?
    fn overlaps(&self, other: &Window) -> bool {
        if self.is_empty()
            || other.is_empty()
            || self.end() <= other.start
            || other.end() <= self.start
        {
            return false;
        }
        let (mut i, mut j) = (0, 0);
        while i < self.cols && j < other.cols {
            let (a0, a1) = self.column(i);
            let (b0, b1) = other.column(j);
            if a0 < b1 && b0 < a1 {
                return true;
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        false
    }
}

fn conflict(ws: &[Window], others: &[Window]) -> Option<&'static str> {
    for w in ws {
        for o in others {
            if (w.writes || o.writes) && w.overlaps(o) {
                return Some(if w.writes { w.arg } else { o.arg });
            }
        }
    }
    None
}

/// A call whose operands have been bound to memory and checked: shapes,
/// leading dimensions, capacities, element types, and aliasing of written
/// operands.
#[derive(Debug, Clone)]
pub struct ResolvedCall {
    sig: &'static Signature,
    args: Vec<ArgValue<RawRegion>>,
    bindings: KernelBindings,
    windows: Vec<Window>,
}

impl ResolvedCall {
    pub fn new(
        sig: &'static Signature,
        args: Vec<ArgValue<RawRegion>>,
    ) -> Result<Self, KernelError> {
        if args.len() != sig.args.len() {
            return Err(KernelError::BadArgument {
                arg: sig.name.into(),
                msg: format!("expected {} arguments, got {}", sig.args.len(), args.len()),
            });
        }
        for (spec, v) in sig.args.iter().zip(&args) {
            let ok = matches!(
                (&spec.kind, v),
                (ArgKind::Flag { .. }, ArgValue::Flag(_))
                    | (ArgKind::Dim | ArgKind::Ld { .. }, ArgValue::Int(_))
                    | (ArgKind::Scalar, ArgValue::Real(_))
                    | (ArgKind::Data(_), ArgValue::Data(_))
                    | (ArgKind::Path, ArgValue::Path(_))
            );
            if !ok {
                return Err(KernelError::BadArgument {
                    arg: spec.name.into(),
                    msg: "wrong kind of value".into(),
                });
            }
        }
        let bindings = sig.bindings(&args);
        let shapes = sig.derive_shapes(&bindings)?;
        let size = sig.dtype.size();
        let mut windows = Vec::with_capacity(shapes.len());
        for ((idx, spec, data), shape) in sig.data_args().zip(&shapes) {
            let ArgValue::Data(region) = &args[idx] else {
                unreachable!()
            };
            if region.dtype != sig.dtype {
                return Err(KernelError::BadArgument {
                    arg: spec.name.into(),
                    msg: format!("{} buffer passed to a {} kernel", region.dtype, sig.dtype),
                });
            }
            let ld = match data.ld {
                Some(ld_name) => {
                    let ArgValue::Int(v) = args[sig.arg_index(ld_name).expect("ld argument")]
                    else {
                        unreachable!()
                    };
                    usize::try_from(v).map_err(|_| KernelError::LeadingDimension {
                        ld: 0,
                        rows: shape.rows,
                    })?
                }
                None => shape.min_ld,
            };
            if ld < shape.min_ld {
                return Err(KernelError::LeadingDimension {
                    ld,
                    rows: shape.rows,
                });
            }
            let need = footprint(shape.rows, shape.cols, ld);
            if need > region.len {
                return Err(KernelError::Capacity {
                    needed: need,
                    available: region.len,
                });
            }
            windows.push(Window {
                arg: spec.name,
                start: region.addr(),
                row_bytes: shape.rows * size,
                cols: shape.cols,
                ld_bytes: ld * size,
                writes: data.writes,
            });
        }
        for (i, w) in windows.iter().enumerate() {
            if !w.writes {
                continue;
            }
            if windows
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && w.overlaps(o))
            {
                return Err(KernelError::Aliasing(w.arg.into()));
            }
        }
        Ok(ResolvedCall {
            sig,
            args,
            bindings,
            windows,
        })
    }

    pub fn signature(&self) -> &'static Signature {
        self.sig
    }

    pub fn bindings(&self) -> &KernelBindings {
        &self.bindings
    }

    pub fn flops(&self) -> u64 {
        (self.sig.flop_fn)(&self.bindings).expect("bindings checked at resolution")
    }

    fn flag(&self, name: &str) -> char {
        self.bindings
            .flag(name)
            .expect("flags checked at resolution")
    }

    fn real<T: Scalar>(&self, name: &str) -> T {
        match self.args[self.sig.arg_index(name).expect("scalar argument")] {
            ArgValue::Real(v) => T::from_f64(v),
            _ => unreachable!(),
        }
    }

    fn path(&self, name: &str) -> &str {
        match &self.args[self.sig.arg_index(name).expect("path argument")] {
            ArgValue::Path(p) => p,
            _ => unreachable!(),
        }
    }

    fn window(&self, name: &str) -> &Window {
        self.windows
            .iter()
            .find(|w| w.arg == name)
            .expect("data argument")
    }

    /// # Safety
    /// The region behind `name` must satisfy the [`RawRegion::new`] contract.
    unsafe fn view_ref<T: Scalar>(&self, name: &str) -> MatRef<'_, T> {
        let w = self.window(name);
        let size = std::mem::size_of::<T>();
        MatRef::from_raw_parts(
            w.start as *const T,
            w.row_bytes / size,
            w.cols,
            w.ld_bytes / size,
        )
    }

    /// # Safety
    /// As [`Self::view_ref`]; the window must be written by no other view.
    #[allow(clippy::mut_from_ref)]
    unsafe fn view_mut<T: Scalar>(&self, name: &str) -> MatMut<'_, T> {
        let w = self.window(name);
        let size = std::mem::size_of::<T>();
        MatMut::from_raw_parts(
            w.start as *mut T,
            w.row_bytes / size,
            w.cols,
            w.ld_bytes / size,
        )
    }

    fn run<T: Scalar>(&self, ctx: &CallContext) -> Result<(), KernelError> {
        let trans = |n: &str| Trans::from_char(self.flag(n)).expect("checked flag");
        let uplo = || Uplo::from_char(self.flag("uplo")).expect("checked flag");
        let diag = || Diag::from_char(self.flag("diag")).expect("checked flag");
        let side = || Side::from_char(self.flag("side")).expect("checked flag");
        // Safety: resolution verified capacities and that every written
        // window is element-disjoint from all other windows of the call.
        unsafe {
            match self.sig.op {
                KernelOp::Gemm => blas::gemm::<T>(
                    trans("transA"),
                    trans("transB"),
                    self.real("alpha"),
                    self.view_ref("A"),
                    self.view_ref("B"),
                    self.real("beta"),
                    self.view_mut("C"),
                ),
                KernelOp::Gemv => blas::gemv::<T>(
                    trans("trans"),
                    self.real("alpha"),
                    self.view_ref("A"),
                    self.view_ref("x"),
                    self.real("beta"),
                    self.view_mut("y"),
                ),
                KernelOp::Axpy => {
                    blas::axpy::<T>(self.real("alpha"), self.view_ref("x"), self.view_mut("y"))
                }
                KernelOp::Trsv => blas::trsv::<T>(
                    uplo(),
                    trans("trans"),
                    diag(),
                    self.view_ref("A"),
                    self.view_mut("x"),
                ),
                KernelOp::Trsm => blas::trsm::<T>(
                    side(),
                    uplo(),
                    trans("transA"),
                    diag(),
                    self.real("alpha"),
                    self.view_ref("A"),
                    self.view_mut("B"),
                ),
                KernelOp::Trmm => blas::trmm::<T>(
                    side(),
                    uplo(),
                    trans("transA"),
                    diag(),
                    self.real("alpha"),
                    self.view_ref("A"),
                    self.view_mut("B"),
                ),
                KernelOp::Syrk => blas::syrk::<T>(
                    uplo(),
                    trans("trans"),
                    self.real("alpha"),
                    self.view_ref("A"),
                    self.real("beta"),
                    self.view_mut("C"),
                ),
                KernelOp::Getrf => lapack::getrf::<T>(self.view_mut("A")).map(|_| ()),
                KernelOp::Gesv => lapack::gesv::<T>(self.view_mut("A"), self.view_mut("B")),
                KernelOp::Trti2 => lapack::trti2::<T>(uplo(), diag(), self.view_mut("A")),
                KernelOp::Trtri => lapack::trtri::<T>(uplo(), diag(), self.view_mut("A")),
                KernelOp::Potrf => lapack::potrf::<T>(uplo(), self.view_mut("A")),
                KernelOp::Memset => {
                    let mut x = self.view_mut::<T>("X");
                    util::memset(
                        self.real("value"),
                        x.contiguous_mut().expect("contiguous operand"),
                    );
                    Ok(())
                }
                KernelOp::Gerand => {
                    util::gerand::<T>(self.view_mut("A"), ctx.seed, ctx.stream);
                    Ok(())
                }
                KernelOp::Porand => util::porand::<T>(self.view_mut("A"), ctx.seed, ctx.stream),
                KernelOp::Readfile => {
                    util::readfile::<T>(self.path("filename"), self.view_mut("A"))
                }
                KernelOp::Writefile => {
                    util::writefile::<T>(self.path("filename"), self.view_ref("A"))
                }
            }
        }
    }
}

/// Runs one resolved call with the reference kernels.
pub fn execute_kernel(call: &ResolvedCall, ctx: &CallContext) -> Result<(), KernelError> {
    match call.sig.dtype {
        Dtype::Double => call.run::<f64>(ctx),
        Dtype::Single => call.run::<f32>(ctx),
    }
}

/// Runs calls concurrently on the current rayon pool.
///
/// Fails before running anything when a window written by one call
/// overlaps any window of another call. Otherwise returns one result per
/// call, in order.
pub fn execute_parallel(
    calls: &[(ResolvedCall, CallContext)],
) -> Result<Vec<Result<(), KernelError>>, KernelError> {
    for (i, (a, _)) in calls.iter().enumerate() {
        for (b, _) in &calls[i + 1..] {
            if let Some(arg) = conflict(&a.windows, &b.windows) {
                return Err(KernelError::Aliasing(format!(
                    "{arg} (across calls of a parallel block)"
                )));
            }
        }
    }
    Ok(calls
        .par_iter()
        .map(|(c, ctx)| execute_kernel(c, ctx))
        .collect())
}

/// Executes resolved calls; the reference kernels are the only backend
/// shipped, but the sampler is written against this trait.
pub trait KernelBackend: Send + Sync {
    fn name(&self) -> &str;
    fn execute(&self, call: &ResolvedCall, ctx: &CallContext) -> Result<(), KernelError>;
    fn execute_parallel(
        &self,
        calls: &[(ResolvedCall, CallContext)],
    ) -> Result<Vec<Result<(), KernelError>>, KernelError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

impl KernelBackend for ReferenceBackend {
    fn name(&self) -> &str {
        "reference"
    }

    fn execute(&self, call: &ResolvedCall, ctx: &CallContext) -> Result<(), KernelError> {
        execute_kernel(call, ctx)
    }

    fn execute_parallel(
        &self,
        calls: &[(ResolvedCall, CallContext)],
    ) -> Result<Vec<Result<(), KernelError>>, KernelError> {
        execute_parallel(calls)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Buffer {
    Double(Vec<f64>),
    Single(Vec<f32>),
}

/// Named, safely owned buffers plus a textual call interface, for driving
/// kernels without the sampler: `ws.run("dgemm N N 2 2 2 1 A 2 B 2 0 C 2")`.
///
/// Data tokens are `name` or `name+K` (offset in elements).
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    seed: u64,
    next_stream: u64,
    buffers: HashMap<String, Buffer>,
}

impl Workspace {
    pub fn new(seed: u64) -> Self {
        Workspace {
            seed,
            ..Default::default()
        }
    }

    pub fn insert_f64(&mut self, name: &str, data: Vec<f64>) {
        self.buffers.insert(name.to_string(), Buffer::Double(data));
    }

    pub fn insert_f32(&mut self, name: &str, data: Vec<f32>) {
        self.buffers.insert(name.to_string(), Buffer::Single(data));
    }

    pub fn f64(&self, name: &str) -> Option<&[f64]> {
        match self.buffers.get(name)? {
            Buffer::Double(v) => Some(v),
            Buffer::Single(_) => None,
        }
    }

    pub fn f32(&self, name: &str) -> Option<&[f32]> {
        match self.buffers.get(name)? {
            Buffer::Single(v) => Some(v),
            Buffer::Double(_) => None,
        }
    }

    fn region(&mut self, token: &str) -> Result<RawRegion, KernelError> {
        let bad = |msg: String| KernelError::BadArgument {
            arg: token.into(),
            msg,
        };
        let (name, off) = match token.split_once('+') {
            Some((n, k)) => (n, k.parse::<usize>().map_err(|_| bad("bad offset".into()))?),
            None => (token, 0),
        };
        let buf = self
            .buffers
            .get_mut(name)
            .ok_or_else(|| bad("no such buffer".into()))?;
        let (ptr, len, dtype) = match buf {
            Buffer::Double(v) => (v.as_mut_ptr() as *mut u8, v.len(), Dtype::Double),
            Buffer::Single(v) => (v.as_mut_ptr() as *mut u8, v.len(), Dtype::Single),
        };
        if off > len {
            return Err(bad(format!(
                "offset {off} past the end of a {len}-element buffer"
            )));
        }
        // Safety: the buffer is owned by `self`, which stays mutably borrowed
        // until the call finishes.
        Ok(unsafe { RawRegion::new(ptr.add(off * dtype.size()), len - off, dtype) })
    }

    /// Parses and executes one call line.
    pub fn run(&mut self, line: &str) -> Result<u64, KernelError> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let call = KernelCall::parse(&tokens)?;
        let sig = lookup_signature(&call.name)?;
        let args = call
            .args
            .into_iter()
            .map(|a| {
                Ok(match a {
                    ArgValue::Data(tok) => ArgValue::Data(self.region(&tok)?),
                    ArgValue::Flag(c) => ArgValue::Flag(c),
                    ArgValue::Int(i) => ArgValue::Int(i),
                    ArgValue::Real(r) => ArgValue::Real(r),
                    ArgValue::Path(p) => ArgValue::Path(p),
                })
            })
            .collect::<Result<Vec<_>, KernelError>>()?;
        let resolved = ResolvedCall::new(sig, args)?;
        let ctx = CallContext {
            seed: self.seed,
            stream: self.next_stream,
        };
        self.next_stream += 1;
        execute_kernel(&resolved, &ctx)?;
        Ok(resolved.flops())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(start: usize, rows: usize, cols: usize, ld: usize) -> Window {
        Window {
            arg: "w",
            start,
            row_bytes: rows,
            cols,
            ld_bytes: ld,
            writes: true,
        }
    }

    #[test]
    fn window_overlap_is_exact() {
        // Two vertically stacked 2x3 instances in a 4-row array.
        let top = window(0, 2, 3, 4);
        let bottom = window(2, 2, 3, 4);
        assert!(!top.overlaps(&bottom));
        assert!(!bottom.overlaps(&top));
        assert!(top.overlaps(&window(1, 2, 3, 4)));
        assert!(!top.overlaps(&window(10, 0, 3, 4)));
        // Different strides.
        assert!(window(0, 1, 5, 3).overlaps(&window(6, 1, 1, 1)));
        assert!(!window(0, 1, 5, 3).overlaps(&window(7, 2, 1, 1)));
    }

    #[test]
    fn workspace_gemm() {
        let mut ws = Workspace::new(1);
        ws.insert_f64("A", vec![1.0, 3.0, 2.0, 4.0]);
        ws.insert_f64("B", vec![5.0, 7.0, 6.0, 8.0]);
        ws.insert_f64("C", vec![0.0; 4]);
        let flops = ws.run("dgemm N N 2 2 2 1 A 2 B 2 0 C 2").unwrap();
        assert_eq!(flops, 16);
        assert_eq!(ws.f64("C").unwrap(), &[19.0, 43.0, 22.0, 50.0]);
    }

    #[test]
    fn resolution_errors() {
        let mut ws = Workspace::new(1);
        ws.insert_f64("A", vec![0.0; 16]);
        ws.insert_f32("S", vec![0.0; 16]);
        assert!(matches!(
            ws.run("dgemm N N 2 2 2 1 A 1 A+4 2 0 A+8 2"),
            Err(KernelError::LeadingDimension { .. })
        ));
        assert!(matches!(
            ws.run("dgemm N N 4 4 4 1 A 4 A 4 0 A+1 4"),
            Err(KernelError::Capacity { .. })
        ));
        assert!(matches!(
            ws.run("dgemm N N 2 2 2 1 A 2 A+4 2 0 A+2 2"),
            Err(KernelError::Aliasing(_))
        ));
        assert!(matches!(
            ws.run("dgemm N N 2 2 2 1 S 2 A+4 2 0 A+8 2"),
            Err(KernelError::BadArgument { .. })
        ));
        assert!(matches!(
            ws.run("dgemm X N 2 2 2 1 A 2 A+4 2 0 A+8 2"),
            Err(KernelError::BadArgument { .. })
        ));
        assert!(matches!(
            ws.run("dgemm N N -1 2 2 1 A 2 A+4 2 0 A+8 2"),
            Err(KernelError::BadArgument { .. })
        ));
        assert!(matches!(
            ws.run("nosuch 1"),
            Err(KernelError::UnknownKernel(_))
        ));
        // Reading the same operand twice is fine.
        ws.run("dgemm N N 2 2 2 1 A 2 A 2 0 A+8 2").unwrap();
        // Interleaved instances with element-disjoint windows are fine.
        ws.run("dmemset 2 2 A+0").unwrap();
        ws.run("dgemm N N 2 2 2 1 A 4 A 4 0 A+2 4").unwrap();
    }

    #[test]
    fn zero_sized_call_is_noop() {
        let mut ws = Workspace::new(1);
        ws.insert_f64("A", vec![]);
        assert_eq!(
            ws.run("dgemm N N 0 5 5 1 A 1 A 5 0 A 1").unwrap_err(),
            KernelError::Capacity {
                needed: 25,
                available: 0
            }
        );
        ws.run("dgemm N N 0 0 5 1 A 1 A 5 0 A 1").unwrap();
    }

    #[test]
    fn parallel_conflict_detected() {
        let mut a = vec![0.0f64; 8];
        let sig = lookup_signature("dmemset").unwrap();
        let region = unsafe { RawRegion::new(a.as_mut_ptr() as *mut u8, 8, Dtype::Double) };
        let call = |r: RawRegion| {
            ResolvedCall::new(
                sig,
                vec![ArgValue::Real(1.0), ArgValue::Int(4), ArgValue::Data(r)],
            )
            .unwrap()
        };
        let ctx = CallContext::default();
        let upper = unsafe { RawRegion::new(a.as_mut_ptr().add(4) as *mut u8, 4, Dtype::Double) };
        let shifted = unsafe { RawRegion::new(a.as_mut_ptr().add(3) as *mut u8, 5, Dtype::Double) };
        assert!(execute_parallel(&[(call(region), ctx), (call(shifted), ctx)]).is_err());
        let out = execute_parallel(&[(call(region), ctx), (call(upper), ctx)]).unwrap();
        assert!(out.iter().all(|r| r.is_ok()));
        assert_eq!(a, vec![1.0; 8]);
    }

    #[test]
    fn call_display_roundtrip() {
        let call = KernelCall::parse(&[
            "dtrsm", "l", "L", "N", "U", "3", "4", "1.5", "A", "3", "B+2", "5",
        ])
        .unwrap();
        assert_eq!(call.to_string(), "dtrsm L L N U 3 4 1.5 A 3 B+2 5");
    }
}
