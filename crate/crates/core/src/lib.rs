//! Kernel microbenchmarking: reference kernels, the sampler that times
//! them, experiment descriptions, and report analysis.

pub mod experiment;
pub mod expr;
pub mod kernels;
pub mod oracle;
pub mod plot;
pub mod report;
pub mod sampler;
