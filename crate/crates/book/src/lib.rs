//! The guide in `book/`, compiled so its code samples run as doc-tests.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/demonstrations.md")]
pub mod demonstrations {}

#[doc = include_str!("../../../book/src/learning.md")]
pub mod learning {}

#[doc = include_str!("../../../book/src/stiffness.md")]
pub mod stiffness {}

#[doc = include_str!("../../../book/src/whole_body.md")]
pub mod whole_body {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
