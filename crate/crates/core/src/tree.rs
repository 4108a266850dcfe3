use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::PackageCoordinate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directness {
    Direct,
    Transitive,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeNode {
    pub coordinate: PackageCoordinate,
    /// Opaque dependency scope as reported by the package manager
    /// (`compile`, `test`, `dev`, ...). Never used for filtering.
    pub scope: Option<String>,
    /// Workspace or path dependency without a registry identity.
    pub local: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub parent: PackageCoordinate,
    pub child: PackageCoordinate,
    pub directness: Directness,
}

/// A dependency installed under a self-chosen name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AliasBinding {
    pub declared_name: String,
    pub actual: PackageCoordinate,
    pub declared_in: PackageCoordinate,
}

/// Resolved dependency graph of one project. Collections are kept sorted and
/// duplicate free so the serialized form is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    pub project: PackageCoordinate,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<Edge>,
    pub aliases: Vec<AliasBinding>,
}

impl DependencyTree {
    pub fn empty(project: PackageCoordinate) -> Self {
        DependencyTree {
            project,
            nodes: Vec::new(),
            edges: Vec::new(),
            aliases: Vec::new(),
        }
    }

    pub fn node(&self, coord: &PackageCoordinate) -> Option<&TreeNode> {
        self.nodes
            .binary_search_by(|n| n.coordinate.cmp(coord))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains(&self, coord: &PackageCoordinate) -> bool {
        self.node(coord).is_some()
    }

    pub fn aliases_of<'a>(&'a self, coord: &'a PackageCoordinate) -> impl Iterator<Item = &'a AliasBinding> + 'a {
        self.aliases.iter().filter(move |a| &a.actual == coord)
    }

    pub fn direct_dependencies(&self) -> impl Iterator<Item = &PackageCoordinate> {
        self.edges
            .iter()
            .filter(|e| e.directness == Directness::Direct)
            .map(|e| &e.child)
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn validate(&self) -> Result<(), String> {
        self.project.validate().map_err(|e| format!("project: {e}"))?;
        for pair in self.nodes.windows(2) {
            match pair[0].coordinate.cmp(&pair[1].coordinate) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => return Err(format!("duplicate node {}", pair[0].coordinate)),
                std::cmp::Ordering::Greater => return Err("nodes are not sorted".into()),
            }
        }
        for node in &self.nodes {
            node.coordinate.validate().map_err(|e| format!("node: {e}"))?;
        }
        if !is_strictly_sorted(&self.edges) {
            return Err("edges are not sorted or contain duplicates".into());
        }
        let known = |c: &PackageCoordinate| c == &self.project || self.contains(c);
        for edge in &self.edges {
            if !known(&edge.parent) || !known(&edge.child) {
                return Err(format!(
                    "edge {} -> {} has an endpoint outside the tree",
                    edge.parent, edge.child
                ));
            }
            let expect = if edge.parent == self.project {
                Directness::Direct
            } else {
                Directness::Transitive
            };
            if edge.directness != expect {
                return Err(format!(
                    "edge {} -> {} is marked {:?}",
                    edge.parent, edge.child, edge.directness
                ));
            }
        }
        if !is_strictly_sorted(&self.aliases) {
            return Err("aliases are not sorted or contain duplicates".into());
        }
        for alias in &self.aliases {
            if alias.declared_name == alias.actual.name {
                return Err(format!(
                    "alias `{}` has the same name as its target",
                    alias.declared_name
                ));
            }
            if !self.contains(&alias.actual) {
                return Err(format!("alias target {} is not a node", alias.actual));
            }
            if !known(&alias.declared_in) {
                return Err(format!(
                    "alias `{}` declared in unknown package {}",
                    alias.declared_name, alias.declared_in
                ));
            }
        }
        Ok(())
    }
}

fn is_strictly_sorted<T: Ord>(items: &[T]) -> bool {
    items.windows(2).all(|w| w[0] < w[1])
}

/// Accumulates nodes, edges and aliases in any order and produces a canonical
/// [`DependencyTree`].
#[derive(Debug)]
pub struct TreeBuilder {
    project: PackageCoordinate,
    nodes: BTreeMap<PackageCoordinate, TreeNode>,
    edges: BTreeSet<Edge>,
    aliases: BTreeSet<AliasBinding>,
}

impl TreeBuilder {
    pub fn new(project: PackageCoordinate) -> Self {
        TreeBuilder {
            project,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            aliases: BTreeSet::new(),
        }
    }

    pub fn project(&self) -> &PackageCoordinate {
        &self.project
    }

    /// First insertion wins when the same coordinate is seen again.
    pub fn add_node(&mut self, node: TreeNode) {
        self.nodes.entry(node.coordinate.clone()).or_insert(node);
    }

    pub fn add_edge(&mut self, parent: PackageCoordinate, child: PackageCoordinate) {
        let directness = if parent == self.project {
            Directness::Direct
        } else {
            Directness::Transitive
        };
        self.edges.insert(Edge {
            parent,
            child,
            directness,
        });
    }

    pub fn add_alias(&mut self, alias: AliasBinding) {
        if alias.declared_name != alias.actual.name {
            self.aliases.insert(alias);
        }
    }

    pub fn build(self) -> DependencyTree {
        DependencyTree {
            project: self.project,
            nodes: self.nodes.into_values().collect(),
            edges: self.edges.into_iter().collect(),
            aliases: self.aliases.into_iter().collect(),
        }
    }
}
