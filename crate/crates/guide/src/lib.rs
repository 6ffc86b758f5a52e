//! The book's chapters, included as module docs so `cargo test --doc`
//! compiles and runs every listing.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}
#[doc = include_str!("../../../book/src/operators.md")]
pub mod operators {}
#[doc = include_str!("../../../book/src/loop.md")]
pub mod closed_loop {}
#[doc = include_str!("../../../book/src/gain.md")]
pub mod gain {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/plugin.md")]
pub mod plugin {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
