use std::collections::HashMap;

use serde::Serialize;

use crate::kernels::{ArgValue, Dtype};

use super::{Along, Experiment, ExperimentError, Point, VaryWith};

/// Largest allocation of a single operand, in elements.
pub const ALLOCATION_CAP: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    /// One region shared by every call.
    Fixed,
    /// Instance `i` starts at element `i * stride`.
    Horizontal { stride: usize },
    /// Instance `i` starts at row `i * row_step` of a tall matrix.
    Vertical { row_step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperandPlan {
    pub name: String,
    pub dtype: Dtype,
    /// Largest instance extent over all calls and inner values.
    pub rows: usize,
    pub cols: usize,
    /// Leading dimension; replaces the call's own for varying operands.
    pub ld: usize,
    pub count: usize,
    pub layout: Layout,
    pub total: usize,
    /// Filled with a symmetric positive definite matrix before timing.
    pub spd: bool,
    #[serde(skip)]
    pub with: Vec<VaryWith>,
}

impl OperandPlan {
    pub fn is_varying(&self) -> bool {
        self.layout != Layout::Fixed
    }

    /// First element of instance `i`.
    pub fn instance_offset(&self, i: usize) -> usize {
        match self.layout {
            Layout::Fixed => 0,
            Layout::Horizontal { stride } => i * stride,
            Layout::Vertical { row_step } => i * row_step,
        }
    }

    /// Instance used at repetition `rep` and inner index `inner`.
    pub fn instance_index(
        &self,
        nreps: usize,
        rep: usize,
        inner: usize,
        inner_len: usize,
    ) -> usize {
        self.with.iter().fold(0, |idx, w| match w {
            VaryWith::Rep => idx * nreps + rep,
            VaryWith::Var(_) => idx * inner_len + inner,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryPlan {
    /// In allocation order.
    pub operands: Vec<OperandPlan>,
}

impl MemoryPlan {
    pub fn get(&self, name: &str) -> Option<&OperandPlan> {
        self.operands.iter().find(|o| o.name == name)
    }

    /// Number of initialization calls emitted before the measurements.
    pub fn setup_calls(&self) -> usize {
        self.operands
            .iter()
            .filter(|o| o.spd)
            .map(|o| o.count)
            .sum()
    }
}

#[derive(Default)]
struct Extent {
    rows: usize,
    cols: usize,
    ld: usize,
}

fn plan_err(operand: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Plan {
        operand: operand.to_string(),
        msg: msg.into(),
    }
}

/// Sizes and places every operand for one range value.
pub fn plan_memory(
    exp: &Experiment,
    range_value: Option<i64>,
) -> Result<MemoryPlan, ExperimentError> {
    let inner = exp.inner_points(range_value)?;
    let mut extents: HashMap<String, Extent> = HashMap::new();
    let mut has_ld: HashMap<String, bool> = HashMap::new();
    for (ci, call) in exp.calls.iter().enumerate() {
        let sig = call.signature();
        for &iv in &inner {
            let point = Point {
                range: range_value,
                inner: iv,
            };
            let args =
                call.evaluate(&exp.lookup(point))
                    .map_err(|(i, source)| ExperimentError::Expr {
                        context: format!(
                            "call {} (`{}`), argument `{}`",
                            ci + 1,
                            call.kernel,
                            sig.args[i].name
                        ),
                        source,
                    })?;
            let b = sig.bindings(&args);
            let shapes = sig
                .derive_shapes(&b)
                .map_err(|source| ExperimentError::Kernel {
                    context: format!("call {} (`{}`)", ci + 1, call.kernel),
                    source,
                })?;
            for ((_, spec, data), shape) in sig.data_args().zip(shapes) {
                let idx = sig
                    .arg_index(spec.name)
                    .expect("data argument is in the signature");
                let ArgValue::Data(name) = &args[idx] else {
                    unreachable!("data argument evaluates to a name")
                };
                let ld = match data.ld {
                    Some(l) => {
                        match args[sig.arg_index(l).expect("ld argument is in the signature")] {
                            ArgValue::Int(v) => usize::try_from(v).unwrap_or(0),
                            _ => 0,
                        }
                    }
                    None => 0,
                };
                has_ld.insert(name.clone(), data.ld.is_some());
                let e = extents.entry(name.clone()).or_default();
                e.rows = e.rows.max(shape.rows);
                e.cols = e.cols.max(shape.cols);
                e.ld = e.ld.max(ld);
            }
        }
    }
    let nreps = exp.nreps as usize;
    let inner_len = inner.len();
    let mut operands = Vec::new();
    for (name, dtype) in exp.operands() {
        let e = &extents[&name];
        let strided = has_ld[&name];
        let overflow = || plan_err(&name, "size overflows");
        let vary = exp.vary_of(&name);
        let (ld, count, layout, total, with) = match vary {
            None => {
                let ld = if strided {
                    e.ld.max(e.rows).max(1)
                } else {
                    e.rows
                };
                let total = ld.checked_mul(e.cols).ok_or_else(overflow)?;
                (ld, 1, Layout::Fixed, total, Vec::new())
            }
            Some(v) => {
                let count = v
                    .with
                    .iter()
                    .map(|w| match w {
                        VaryWith::Rep => nreps,
                        VaryWith::Var(_) => inner_len,
                    })
                    .try_fold(1usize, |a, b| a.checked_mul(b))
                    .ok_or_else(overflow)?;
                let pad = v
                    .pad
                    .eval_with(&exp.lookup(Point {
                        range: range_value,
                        inner: None,
                    }))
                    .map_err(|source| ExperimentError::Expr {
                        context: format!("vary `{name}` pad"),
                        source,
                    })?;
                let pad = usize::try_from(pad)
                    .map_err(|_| plan_err(&name, format!("pad {pad} is negative")))?;
                match v.along {
                    Along::Horizontal => {
                        let ld = e.rows.max(1);
                        let stride = ld
                            .checked_mul(e.cols)
                            .and_then(|s| s.checked_add(pad))
                            .ok_or_else(overflow)?;
                        let total = count.checked_mul(stride).ok_or_else(overflow)?;
                        (
                            ld,
                            count,
                            Layout::Horizontal { stride },
                            total,
                            v.with.clone(),
                        )
                    }
                    Along::Vertical => {
                        if !strided {
                            return Err(plan_err(
                                &name,
                                "vertical stacking needs a leading dimension",
                            ));
                        }
                        let row_step = e.rows.checked_add(pad).ok_or_else(overflow)?;
                        let ld = count.checked_mul(row_step).ok_or_else(overflow)?.max(1);
                        let total = ld.checked_mul(e.cols).ok_or_else(overflow)?;
                        (
                            ld,
                            count,
                            Layout::Vertical { row_step },
                            total,
                            v.with.clone(),
                        )
                    }
                }
            }
        };
        if total > ALLOCATION_CAP {
            return Err(plan_err(
                &name,
                format!("{total} elements exceed the cap of {ALLOCATION_CAP}"),
            ));
        }
        let spd = exp.needs_spd(&name);
        operands.push(OperandPlan {
            name,
            dtype,
            rows: e.rows,
            cols: e.cols,
            ld,
            count,
            layout,
            total,
            spd,
            with,
        });
    }
    Ok(MemoryPlan { operands })
}
