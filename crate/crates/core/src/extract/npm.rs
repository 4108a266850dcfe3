//! `package-lock.json` (lockfile versions 2 and 3) to [`DependencyTree`].

use std::collections::BTreeMap;

use serde::Deserialize;

use super::ExtractError;
use crate::model::{Ecosystem, PackageCoordinate, LOCAL_VERSION};
use crate::tree::{AliasBinding, DependencyTree, TreeBuilder, TreeNode};

const NODE_MODULES: &str = "node_modules/";

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Lockfile {
    name: Option<String>,
    version: Option<String>,
    lockfile_version: Option<u32>,
    packages: Option<BTreeMap<String, Entry>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Entry {
    name: Option<String>,
    version: Option<String>,
    resolved: Option<String>,
    #[serde(default)]
    link: bool,
    #[serde(default)]
    dev: bool,
    #[serde(default)]
    optional: bool,
    #[serde(default)]
    dev_optional: bool,
    #[serde(default)]
    peer: bool,
    #[serde(default)]
    dependencies: BTreeMap<String, String>,
    #[serde(default)]
    dev_dependencies: BTreeMap<String, String>,
    #[serde(default)]
    optional_dependencies: BTreeMap<String, String>,
    #[serde(default)]
    peer_dependencies: BTreeMap<String, String>,
}

impl Entry {
    /// Dependency declarations in a fixed order. Dev dependencies are only
    /// recorded by npm for the root and workspace members.
    fn declared(&self) -> impl Iterator<Item = (&String, &String)> {
        self.dependencies
            .iter()
            .chain(&self.optional_dependencies)
            .chain(&self.peer_dependencies)
            .chain(&self.dev_dependencies)
    }

    fn scope(&self) -> Option<String> {
        let scope = if self.dev_optional {
            "dev-optional"
        } else if self.dev {
            "dev"
        } else if self.optional {
            "optional"
        } else if self.peer {
            "peer"
        } else {
            return None;
        };
        Some(scope.to_string())
    }
}

/// Name an installed entry is reachable under: the path after the last
/// `node_modules/` (keeps the `@scope/` prefix).
fn install_name(path: &str) -> Option<&str> {
    path.rfind(NODE_MODULES).map(|idx| &path[idx + NODE_MODULES.len()..])
}

fn parent_dir(path: &str) -> &str {
    path.rsplit_once('/').map_or("", |(head, _)| head)
}

/// Real package name of an `npm:<name>@<version>` specifier.
fn alias_target(spec: &str) -> Option<&str> {
    let rest = spec.strip_prefix("npm:")?;
    // the scope's leading '@' is not a version separator
    let search_from = usize::from(rest.starts_with('@'));
    match rest[search_from..].find('@') {
        Some(at) => Some(&rest[..search_from + at]),
        None => Some(rest),
    }
}

struct Resolver<'a> {
    packages: &'a BTreeMap<String, Entry>,
    coords: BTreeMap<&'a str, PackageCoordinate>,
}

impl<'a> Resolver<'a> {
    /// Node's module resolution: look in `<dir>/node_modules/<dep>`, walking
    /// up to the project root. Links are followed to their target folder.
    fn resolve(&self, from: &str, dep: &str) -> Option<&'a str> {
        let mut dir = from;
        loop {
            let candidate = if dir.is_empty() {
                format!("{NODE_MODULES}{dep}")
            } else {
                format!("{dir}/{NODE_MODULES}{dep}")
            };
            if let Some((key, entry)) = self.packages.get_key_value(candidate.as_str()) {
                return Some(self.follow_link(key, entry));
            }
            if dir.is_empty() {
                return None;
            }
            dir = parent_dir(dir);
        }
    }

    fn follow_link(&self, key: &'a str, entry: &'a Entry) -> &'a str {
        if entry.link {
            if let Some(target) = entry.resolved.as_deref() {
                if let Some((target_key, _)) = self.packages.get_key_value(target) {
                    return target_key.as_str();
                }
            }
        }
        key
    }
}

pub fn extract_npm(lockfile_bytes: &[u8]) -> Result<DependencyTree, ExtractError> {
    let lock: Lockfile = serde_json::from_slice(lockfile_bytes)
        .map_err(|e| ExtractError::Malformed(format!("package-lock.json: {e}")))?;

    let version = lock.lockfile_version.unwrap_or(1);
    let packages = match (&lock.packages, version) {
        (Some(p), 2 | 3) => p,
        (None, v) => {
            return Err(ExtractError::UnsupportedLockfileVersion(format!(
                "lockfileVersion {v} without a \"packages\" map"
            )))
        }
        (Some(_), v) => return Err(ExtractError::UnsupportedLockfileVersion(format!("lockfileVersion {v}"))),
    };

    let empty = Entry::default();
    let root_entry = packages.get("").unwrap_or(&empty);
    let project_name = root_entry
        .name
        .clone()
        .or(lock.name.clone())
        .unwrap_or_else(|| "project".to_string());
    let project_version = root_entry
        .version
        .clone()
        .or(lock.version.clone())
        .unwrap_or_else(|| LOCAL_VERSION.to_string());
    let project = PackageCoordinate::npm(&project_name, &project_version)?;

    let mut builder = TreeBuilder::new(project.clone());
    let mut resolver = Resolver {
        packages,
        coords: BTreeMap::new(),
    };
    resolver.coords.insert("", project.clone());

    for (path, entry) in packages {
        if path.is_empty() || entry.link {
            continue;
        }
        let installed_as = install_name(path);
        let local = installed_as.is_none() || entry.resolved.as_deref().is_some_and(|r| r.starts_with("file:"));
        let name = entry
            .name
            .as_deref()
            .or(installed_as)
            .ok_or_else(|| ExtractError::Malformed(format!("entry `{path}` has no name")))?;
        let version = match (&entry.version, local) {
            (Some(v), _) => v.as_str(),
            (None, true) => LOCAL_VERSION,
            (None, false) => return Err(ExtractError::Malformed(format!("entry `{path}` has no version"))),
        };
        let coord = PackageCoordinate::new(Ecosystem::Npm, name, version)?;
        builder.add_node(TreeNode {
            coordinate: coord.clone(),
            scope: entry.scope(),
            local,
        });
        resolver.coords.insert(path.as_str(), coord);
    }

    for (path, entry) in packages {
        if entry.link {
            continue;
        }
        let parent = resolver.coords[path.as_str()].clone();
        for (dep, spec) in entry.declared() {
            let Some(target) = resolver.resolve(path, dep) else {
                continue;
            };
            let Some(child) = resolver.coords.get(target) else {
                continue;
            };
            if child == &parent {
                continue;
            }
            builder.add_edge(parent.clone(), child.clone());
            if alias_target(spec).is_some() || dep != &child.name {
                builder.add_alias(AliasBinding {
                    declared_name: dep.clone(),
                    actual: child.clone(),
                    declared_in: parent.clone(),
                });
            }
        }
    }

    // Workspace members are linked from the root's node_modules.
    for (path, entry) in packages {
        if entry.link && install_name(path).is_some_and(|n| format!("{NODE_MODULES}{n}") == *path) {
            let target = resolver.follow_link(path, entry);
            if let Some(child) = resolver.coords.get(target) {
                builder.add_edge(project.clone(), child.clone());
            }
        }
    }

    // Aliased entries nobody declares (e.g. pruned parents) still carry their
    // alias in the `name` field; attribute them to the project.
    for (path, entry) in packages {
        let (Some(real), Some(installed_as)) = (&entry.name, install_name(path)) else {
            continue;
        };
        if entry.link || real == installed_as {
            continue;
        }
        let actual = resolver.coords[path.as_str()].clone();
        let declared = packages.iter().any(|(from, e)| {
            !e.link
                && e.declared()
                    .any(|(dep, _)| dep == installed_as && resolver.resolve(from, dep) == Some(path.as_str()))
        });
        if !declared {
            builder.add_alias(AliasBinding {
                declared_name: installed_as.to_string(),
                actual,
                declared_in: project.clone(),
            });
        }
    }

    Ok(builder.build())
}
