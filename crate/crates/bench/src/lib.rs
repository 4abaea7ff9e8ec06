//! Shared fixtures for the criterion benches.

use kernbench_core::kernels::util::fill_uniform;
use kernbench_core::kernels::Workspace;

/// A workspace holding an `n x n` problem: `A`, `B`, `C` of `n * n`
/// seeded uniform values.
pub fn square_workspace(n: usize) -> Workspace {
    let mut ws = Workspace::new(0);
    for (stream, name) in ["A", "B", "C"].into_iter().enumerate() {
        let mut data = vec![0.0; n * n];
        fill_uniform(&mut data, 7, stream as u64);
        ws.insert_f64(name, data);
    }
    ws
}
