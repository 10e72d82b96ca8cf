//! Holds the `acceptance` test target; see `tests/acceptance.rs`.
//!
//! Run with `cargo test -p attnlab-acceptance --test acceptance`, optionally
//! followed by `-- <criterion numbers>` to run a subset.
