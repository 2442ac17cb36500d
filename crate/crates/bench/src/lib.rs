//! Criterion benchmarks for the residual and Jacobian assembly, the banded
//! LU, one Newton iteration and a full continuation solve. Run with
//! `cargo bench -p glpath-bench`.
