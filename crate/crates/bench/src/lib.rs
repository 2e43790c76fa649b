//! Benchmark-only crate: see `benches/averaging.rs`. Kept as a separate
//! workspace member so criterion and its dependency tree never burden the
//! core library or the CLI.
