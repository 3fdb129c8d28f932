//! The category order: `child ⊆ parent`, parent being the more general
//! category. Multiple parents are allowed; cycles are rejected at load time.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::model::EntityId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("category `{0}` cannot be its own parent")]
    SelfEdge(String),
    #[error("category hierarchy has a cycle: {}", format_cycle(.0))]
    Cycle(Vec<EntityId>),
    #[error("no hierarchy path from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
}

fn format_cycle(cycle: &[EntityId]) -> String {
    cycle.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(" -> ")
}

/// Reports one directed cycle in a `(child, parent)` edge set, as the id
/// sequence starting and ending on the same category.
pub fn check_acyclic(edges: &[(EntityId, EntityId)]) -> Result<(), Vec<EntityId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }

    let mut succ: BTreeMap<&EntityId, BTreeSet<&EntityId>> = BTreeMap::new();
    for (child, parent) in edges {
        succ.entry(child).or_default().insert(parent);
        succ.entry(parent).or_default();
    }

    let mut marks: BTreeMap<&EntityId, Mark> = BTreeMap::new();
    for &root in succ.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // iterative DFS; the stack mirrors the current path
        let mut path: Vec<&EntityId> = vec![root];
        let mut iters = vec![succ[root].iter()];
        marks.insert(root, Mark::Active);
        while let Some(it) = iters.last_mut() {
            match it.next() {
                Some(&next) => match marks.get(next) {
                    Some(Mark::Active) => {
                        let start = path.iter().position(|n| *n == next).unwrap();
                        let mut cycle: Vec<EntityId> = path[start..].iter().map(|n| (*n).clone()).collect();
                        cycle.push(next.clone());
                        return Err(cycle);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Active);
                        path.push(next);
                        iters.push(succ[next].iter());
                    }
                },
                None => {
                    let done = path.pop().unwrap();
                    marks.insert(done, Mark::Done);
                    iters.pop();
                }
            }
        }
    }
    Ok(())
}

/// Immutable category DAG with precomputed ancestor closure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryHierarchy {
    parents: BTreeMap<EntityId, BTreeSet<EntityId>>,
    children: BTreeMap<EntityId, BTreeSet<EntityId>>,
    // reflexive: every node is its own ancestor
    ancestors: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

impl CategoryHierarchy {
    /// Builds the hierarchy over `nodes` from `(child, parent)` edges.
    pub fn new(
        nodes: impl IntoIterator<Item = EntityId>,
        edges: impl IntoIterator<Item = (EntityId, EntityId)>,
    ) -> Result<Self, HierarchyError> {
        let mut parents: BTreeMap<EntityId, BTreeSet<EntityId>> =
            nodes.into_iter().map(|n| (n, BTreeSet::new())).collect();
        let mut children: BTreeMap<EntityId, BTreeSet<EntityId>> =
            parents.keys().map(|n| (n.clone(), BTreeSet::new())).collect();

        let edges: Vec<(EntityId, EntityId)> = edges.into_iter().collect();
        for (child, parent) in &edges {
            for end in [child, parent] {
                if !parents.contains_key(end) {
                    return Err(HierarchyError::UnknownCategory(end.to_string()));
                }
            }
            if child == parent {
                return Err(HierarchyError::SelfEdge(child.to_string()));
            }
            parents.get_mut(child).unwrap().insert(parent.clone());
            children.get_mut(parent).unwrap().insert(child.clone());
        }
        check_acyclic(&edges).map_err(HierarchyError::Cycle)?;

        let mut ancestors = BTreeMap::new();
        for node in parents.keys() {
            let mut seen = BTreeSet::from([node.clone()]);
            let mut queue = VecDeque::from([node.clone()]);
            while let Some(n) = queue.pop_front() {
                for p in &parents[&n] {
                    if seen.insert(p.clone()) {
                        queue.push_back(p.clone());
                    }
                }
            }
            ancestors.insert(node.clone(), seen);
        }

        Ok(CategoryHierarchy { parents, children, ancestors })
    }

    pub fn contains(&self, category: &EntityId) -> bool {
        self.parents.contains_key(category)
    }

    pub fn categories(&self) -> impl Iterator<Item = &EntityId> {
        self.parents.keys()
    }

    /// All `(child, parent)` edges in id order.
    pub fn edges(&self) -> impl Iterator<Item = (&EntityId, &EntityId)> {
        self.parents
            .iter()
            .flat_map(|(child, ps)| ps.iter().map(move |p| (child, p)))
    }

    pub fn parents_of(&self, category: &EntityId) -> Option<&BTreeSet<EntityId>> {
        self.parents.get(category)
    }

    pub fn children_of(&self, category: &EntityId) -> Option<&BTreeSet<EntityId>> {
        self.children.get(category)
    }

    fn known(&self, category: &EntityId) -> Result<(), HierarchyError> {
        if self.contains(category) {
            Ok(())
        } else {
            Err(HierarchyError::UnknownCategory(category.to_string()))
        }
    }

    /// True iff `a == b` or `a` is an ancestor of `b` (a is more general).
    pub fn contains_or_equals(&self, a: &EntityId, b: &EntityId) -> Result<bool, HierarchyError> {
        self.known(a)?;
        self.known(b)?;
        Ok(self.ancestors[b].contains(a))
    }

    /// Ancestors of `category` including itself.
    pub fn ancestors_or_self(&self, category: &EntityId) -> Option<&BTreeSet<EntityId>> {
        self.ancestors.get(category)
    }

    /// Upward path `[from, ..., to]` along child→parent edges.
    ///
    /// Among several paths the shortest wins, ties broken by comparing the id
    /// sequences lexicographically.
    pub fn permission_chain(&self, from: &EntityId, to: &EntityId) -> Result<Vec<EntityId>, HierarchyError> {
        if !self.contains_or_equals(to, from)? {
            return Err(HierarchyError::NoPath { from: from.to_string(), to: to.to_string() });
        }
        // distance of every node to `to`, walking child edges backwards
        let mut dist: BTreeMap<&EntityId, usize> = BTreeMap::from([(to, 0)]);
        let mut queue = VecDeque::from([to]);
        while let Some(n) = queue.pop_front() {
            let d = dist[n];
            for c in &self.children[n] {
                if !dist.contains_key(c) {
                    dist.insert(c, d + 1);
                    queue.push_back(c);
                }
            }
        }

        let mut path = vec![from.clone()];
        let mut current = from;
        while current != to {
            let want = dist[current] - 1;
            // parents are ordered, so the first hit is the least id
            current = self.parents[current]
                .iter()
                .find(|p| dist.get(p) == Some(&want))
                .expect("a parent one step closer exists on a shortest path");
            path.push(current.clone());
        }
        Ok(path)
    }

    /// Downward path `[from, ..., to]` from a general category to a more
    /// specific one; always the reverse of `permission_chain(to, from)`.
    pub fn prohibition_chain(&self, from: &EntityId, to: &EntityId) -> Result<Vec<EntityId>, HierarchyError> {
        if !self.contains_or_equals(from, to)? {
            return Err(HierarchyError::NoPath { from: from.to_string(), to: to.to_string() });
        }
        let mut path = self.permission_chain(to, from)?;
        path.reverse();
        Ok(path)
    }
}
