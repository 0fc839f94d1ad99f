//! Holds the `acceptance` test target. Kept in its own package so that
//! `cargo test --workspace` runs it after every other crate's tests.
