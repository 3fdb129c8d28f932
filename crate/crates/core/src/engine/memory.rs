use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::model::Fact;

/// Identity of one insertion. A fact deleted and inserted again gets a new
/// handle, so refraction treats it as new.
pub type Handle = u64;

/// Deduplicated fact store, indexed by kind name.
#[derive(Debug, Clone, Default)]
pub struct WorkingMemory {
    handles: HashMap<Arc<Fact>, Handle>,
    entries: BTreeMap<Handle, (Arc<Fact>, Arc<str>)>,
    by_kind: HashMap<Arc<str>, BTreeMap<Handle, Arc<Fact>>>,
    next: Handle,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `fact` unless an equal one is present.
    pub fn insert(&mut self, fact: Fact, kind: &str) -> Option<(Handle, Arc<Fact>)> {
        if self.handles.contains_key(&fact) {
            return None;
        }
        let handle = self.next;
        self.next += 1;
        let fact = Arc::new(fact);
        let kind: Arc<str> = match self.by_kind.get_key_value(kind) {
            Some((k, _)) => k.clone(),
            None => Arc::from(kind),
        };
        self.handles.insert(fact.clone(), handle);
        self.by_kind.entry(kind.clone()).or_default().insert(handle, fact.clone());
        self.entries.insert(handle, (fact.clone(), kind));
        Some((handle, fact))
    }

    /// Removes the fact equal to `fact`, returning its handle and kind.
    pub fn remove(&mut self, fact: &Fact) -> Option<(Handle, Arc<str>)> {
        let handle = self.handles.remove(fact)?;
        let (_, kind) = self.entries.remove(&handle).expect("indexes agree");
        if let Some(m) = self.by_kind.get_mut(&kind) {
            m.remove(&handle);
        }
        Some((handle, kind))
    }

    pub fn handle_of(&self, fact: &Fact) -> Option<Handle> {
        self.handles.get(fact).copied()
    }

    pub fn get(&self, handle: Handle) -> Option<&Arc<Fact>> {
        self.entries.get(&handle).map(|(f, _)| f)
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.handles.contains_key(fact)
    }

    /// Facts of one kind in insertion order.
    pub fn of_kind(&self, kind: &str) -> impl Iterator<Item = (Handle, &Arc<Fact>)> {
        self.by_kind.get(kind).into_iter().flat_map(|m| m.iter().map(|(h, f)| (*h, f)))
    }

    /// Every fact in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (Handle, &Arc<Fact>)> {
        self.entries.iter().map(|(h, (f, _))| (*h, f))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn pca(c: &str) -> Fact {
        Fact::Pca(Pca::new(id("000001"), id(c)))
    }

    #[test]
    fn dedup_and_fresh_handles() {
        let mut m = WorkingMemory::new();
        let (h1, _) = m.insert(pca("clinician"), "Pca").unwrap();
        assert!(m.insert(pca("clinician"), "Pca").is_none());
        assert_eq!(m.len(), 1);
        assert_eq!(m.remove(&pca("clinician")).map(|(h, _)| h), Some(h1));
        assert!(m.remove(&pca("clinician")).is_none());
        let (h2, _) = m.insert(pca("clinician"), "Pca").unwrap();
        assert!(h2 > h1);
        assert!(m.contains(&pca("clinician")));
    }

    #[test]
    fn kind_index_keeps_insertion_order() {
        let mut m = WorkingMemory::new();
        m.insert(pca("b"), "Pca");
        m.insert(Fact::Entity(EntityRef::new(EntityKind::Category, id("x"))), "Category");
        m.insert(pca("a"), "Pca");
        let got: Vec<_> = m.of_kind("Pca").map(|(_, f)| (**f).clone()).collect();
        assert_eq!(got, vec![pca("b"), pca("a")]);
        assert_eq!(m.of_kind("Arca").count(), 0);
    }
}
