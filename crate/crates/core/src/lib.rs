//! Detection of software supply chain smells in NPM and Maven dependency
//! trees.
//!
//! The analysis runs in three stages: [`extract`] turns a lockfile or
//! dependency-plugin output into a [`tree::DependencyTree`], [`registry`] and
//! [`repo`] collect metadata for every package, and [`smells`] turns the
//! collected facts into findings. Results are persisted as a [`pond`] file,
//! which [`report`], [`gate`] and [`aggregate`] consume without network access.

pub mod aggregate;
pub mod clock;
pub mod extract;
pub mod fixtures;
pub mod gate;
pub mod http;
pub mod model;
pub mod pipeline;
pub mod pond;
pub mod registry;
pub mod repo;
pub mod report;
pub mod smells;
pub mod tree;

pub use model::{Ecosystem, PackageCoordinate, Severity, SmellId};
