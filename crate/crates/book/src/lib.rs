//! The guide in `book/`, compiled as doctests so its samples stay current.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/inference.md")]
pub mod inference {}

#[doc = include_str!("../../../book/src/queries.md")]
pub mod queries {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/ingest.md")]
pub mod ingest {}

#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}

#[doc = include_str!("../../../book/src/replay.md")]
pub mod replay {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
