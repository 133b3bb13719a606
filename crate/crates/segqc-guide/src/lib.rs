//! mdbook cannot run a book's code listings as tests, so each chapter is
//! included here as module documentation and `cargo test --doc -p
//! segqc-guide` exercises every Rust snippet. A failing doctest names the
//! chapter module it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/volumes.md")]
pub mod volumes {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/degradations.md")]
pub mod degradations {}
#[doc = include_str!("../../../book/src/pairing.md")]
pub mod pairing {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/scoring.md")]
pub mod scoring {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
