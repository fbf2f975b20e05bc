//! Home of the `acceptance` test target (`tests/acceptance.rs`).
//!
//! It lives in its own package so that `cargo test --workspace` runs every
//! other test binary before it: cargo stops at the first failing binary,
//! and the acceptance run exits nonzero whenever a criterion fails.
