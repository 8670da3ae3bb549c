//! Retrieval of traffic scenes with similar surrounding traffic from
//! highD-format naturalistic trajectory datasets, and analysis of how the
//! ego drivers responded to the retrieved scenes.
//!
//! Pipeline: [`dataset`] loads recordings, [`context`] turns a scene into a
//! set of 4-D points, [`metric`] compares sets with the Hausdorff distance,
//! [`search`] ranks every candidate scene against an example, and
//! [`response`] extracts and summarizes the trajectories that follow.

pub mod cli;
pub mod context;
pub mod dataset;
pub mod metric;
pub mod response;
pub mod search;

pub use context::{ContextParams, ContextSet, RelativeLane, SceneKey};
pub use dataset::{Dataset, Recording};
pub use metric::Distance;
pub use search::{search, SearchOptions, SearchQuery, SearchResult};
