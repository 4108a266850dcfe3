//! Text output of `mvn dependency:tree` to [`DependencyTree`].
//!
//! Accepted line shapes, optionally prefixed with `[INFO] `:
//!
//! ```text
//! com.example:app:jar:1.0.0
//! +- org.slf4j:slf4j-api:jar:2.0.9:compile
//! |  \- org.example:inner:jar:tests:1.0:test (optional)
//! \- (junit:junit:jar:4.13.2:test - omitted for duplicate)
//! ```

use std::path::Path;
use std::process::Command;

use super::ExtractError;
use crate::model::{is_concrete_version, PackageCoordinate};
use crate::tree::{DependencyTree, TreeBuilder, TreeNode};

#[derive(Debug, PartialEq, Eq)]
struct Artifact {
    group: String,
    artifact: String,
    version: String,
    scope: Option<String>,
}

fn is_segment(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '+'))
}

/// `g:a:packaging:version`, `g:a:packaging:version:scope` or
/// `g:a:packaging:classifier:version:scope`.
fn parse_artifact(token: &str) -> Option<Artifact> {
    let parts: Vec<&str> = token.split(':').collect();
    let (group, artifact, version, scope) = match parts.as_slice() {
        [g, a, _packaging, v] => (g, a, v, None),
        [g, a, _packaging, v, s] => (g, a, v, Some(*s)),
        [g, a, _packaging, _classifier, v, s] => (g, a, v, Some(*s)),
        _ => return None,
    };
    if !parts[..parts.len() - usize::from(scope.is_some())]
        .iter()
        .all(|p| is_segment(p))
        || !is_concrete_version(version)
    {
        return None;
    }
    if let Some(s) = scope {
        if !is_segment(s) {
            return None;
        }
    }
    Some(Artifact {
        group: group.to_string(),
        artifact: artifact.to_string(),
        version: version.to_string(),
        scope: scope.map(str::to_string),
    })
}

/// Splits the tree-drawing prefix off a line; returns the depth and the rest.
fn split_prefix(line: &str) -> Option<(usize, &str)> {
    let bytes = line.as_bytes();
    let mut pos = 0;
    let mut depth = 0;
    loop {
        let rest = &bytes[pos..];
        if rest.starts_with(b"+- ") || rest.starts_with(b"\\- ") {
            return Some((depth + 1, &line[pos + 3..]));
        }
        if rest.starts_with(b"|  ") || rest.starts_with(b"   ") {
            pos += 3;
            depth += 1;
            continue;
        }
        return if depth == 0 { Some((0, line)) } else { None };
    }
}

/// Strips verbose-mode wrapping `(g:a:p:v:s - omitted for ...)` and trailing
/// annotations such as `(optional)`.
fn coordinate_token(body: &str) -> &str {
    let body = body.trim();
    if let Some(inner) = body.strip_prefix('(') {
        let end = inner.find([' ', ')']).unwrap_or(inner.len());
        return &inner[..end];
    }
    body.split_whitespace().next().unwrap_or("")
}

pub fn extract_maven(tree_text: &[u8]) -> Result<DependencyTree, ExtractError> {
    let text = std::str::from_utf8(tree_text)
        .map_err(|e| ExtractError::Malformed(format!("dependency tree is not UTF-8: {e}")))?;

    let mut builder: Option<TreeBuilder> = None;
    let mut stack: Vec<PackageCoordinate> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.strip_prefix("[INFO]") {
            Some(rest) => rest.strip_prefix(' ').unwrap_or(rest),
            None => raw,
        }
        .trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let malformed =
            |why: &str| ExtractError::Malformed(format!("line {}: {why}: `{}`", lineno + 1, raw.trim_end()));
        let (depth, body) = split_prefix(line).ok_or_else(|| malformed("bad tree prefix"))?;
        let artifact = parse_artifact(coordinate_token(body)).ok_or_else(|| malformed("not a maven coordinate"))?;
        let coord = PackageCoordinate::maven(&format!("{}:{}", artifact.group, artifact.artifact), &artifact.version)?;

        if depth == 0 {
            // Further reactor modules share the first module's root.
            if builder.is_none() {
                builder = Some(TreeBuilder::new(coord.clone()));
            }
            stack.clear();
            stack.push(builder.as_ref().unwrap().project().clone());
            continue;
        }

        let tree = builder
            .as_mut()
            .ok_or_else(|| malformed("dependency before any root coordinate"))?;
        if depth > stack.len() {
            return Err(malformed("indentation skips a level"));
        }
        stack.truncate(depth);
        let parent = stack[depth - 1].clone();
        tree.add_node(TreeNode {
            coordinate: coord.clone(),
            scope: artifact.scope,
            local: false,
        });
        tree.add_edge(parent, coord.clone());
        stack.push(coord);
    }

    builder
        .map(TreeBuilder::build)
        .ok_or_else(|| ExtractError::Malformed("no root coordinate found".into()))
}

/// Command line used to produce the tree text for `project_dir`.
pub fn dependency_tree_command(output_file: &Path) -> Vec<String> {
    vec![
        "mvn".to_string(),
        "-B".to_string(),
        "-q".to_string(),
        "org.apache.maven.plugins:maven-dependency-plugin:3.6.1:tree".to_string(),
        format!("-DoutputFile={}", output_file.display()),
    ]
}

/// Runs the dependency plugin in `project_dir` and returns the tree text
/// together with the exact command line that produced it.
pub fn capture_maven_tree(project_dir: &Path) -> Result<(Vec<u8>, Vec<String>), ExtractError> {
    let out = tempfile_path(project_dir);
    let argv = dependency_tree_command(&out);
    let status = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(project_dir)
        .status()
        .map_err(|e| ExtractError::Tool(format!("failed to run `{}`: {e}", argv.join(" "))))?;
    if !status.success() {
        return Err(ExtractError::Tool(format!("`{}` exited with {status}", argv.join(" "))));
    }
    let bytes = std::fs::read(&out).map_err(|e| ExtractError::Tool(format!("reading {}: {e}", out.display())))?;
    let _ = std::fs::remove_file(&out);
    Ok((bytes, argv))
}

fn tempfile_path(project_dir: &Path) -> std::path::PathBuf {
    project_dir.join("target").join("chainsmell-dependency-tree.txt")
}
