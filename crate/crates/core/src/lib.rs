//! Activity-level decomposition of application packages.
//!
//! A package is split into a base bundle, holding the activities users
//! actually open plus everything they need, and one feature bundle per
//! remaining activity. Static closures over the call and resource graphs
//! decide the split; replaying scripts in a simulator repairs what static
//! analysis missed; a virtual runtime installs feature bundles on demand.

pub mod app_model;
pub mod corpus;
pub mod decomposer;
pub mod exec;
pub mod fixtures;
pub mod graphs;
pub mod recovery;
pub mod usage;
pub mod vruntime;

mod container;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/packages.md")]
    mod packages {}
    #[doc = include_str!("../../../book/src/closures.md")]
    mod closures {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/runtime.md")]
    mod runtime {}
    #[doc = include_str!("../../../book/src/usage.md")]
    mod usage {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
