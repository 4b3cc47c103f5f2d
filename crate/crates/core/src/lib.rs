//! Score-based structure learning for discrete Bayesian networks.
//!
//! Two searches share one precomputation pipeline:
//!
//! * [`ordsearch`] hill-climbs over variable orderings with adjacent swaps,
//!   picking each node's best bounded-in-degree parent set consistent with
//!   the current ordering;
//! * [`dagsearch`] hill-climbs over DAGs with edge addition, deletion and
//!   reversal.
//!
//! Both use tabu lists and random restarts. Counts come from an [`adtree`];
//! candidate parents, family enumeration and dominance pruning live in
//! [`families`].

pub mod adtree;
pub mod dagsearch;
pub mod data;
pub mod error;
pub mod families;
pub mod model;
pub mod ordsearch;
pub mod parent_set;
pub mod scoring;
pub mod search;

pub use error::{Error, Result};
pub use parent_set::ParentSet;
