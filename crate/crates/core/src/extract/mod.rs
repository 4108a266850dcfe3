//! Dependency extraction: manifest bytes in, resolved [`DependencyTree`] out.
//!
//! [`DependencyTree`]: crate::tree::DependencyTree

mod maven;
mod npm;

use thiserror::Error;

pub use maven::{capture_maven_tree, dependency_tree_command, extract_maven};
pub use npm::extract_npm;

use crate::model::{CoordinateError, Ecosystem};
use crate::tree::DependencyTree;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("unsupported lockfile format: {0}")]
    UnsupportedLockfileVersion(String),
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("invalid package coordinate: {0}")]
    Coordinate(#[from] CoordinateError),
    #[error("build tool failed: {0}")]
    Tool(String),
}

pub fn extract(ecosystem: Ecosystem, bytes: &[u8]) -> Result<DependencyTree, ExtractError> {
    match ecosystem {
        Ecosystem::Npm => extract_npm(bytes),
        Ecosystem::Maven => extract_maven(bytes),
    }
}
