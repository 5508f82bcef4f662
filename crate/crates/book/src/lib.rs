//! Doc-tests for the guide. Each chapter's Rust snippets compile and run
//! as part of `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/distributions.md")]
pub mod distributions {}

#[doc = include_str!("../../../book/src/beliefs.md")]
pub mod beliefs {}

#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}

#[doc = include_str!("../../../book/src/gaussian.md")]
pub mod gaussian {}

#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
