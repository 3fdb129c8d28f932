//! Entity, relation and result types shared by every other module.
//!
//! Entity references inside facts are plain [`EntityId`]s. They are resolved
//! through an immutable [`Registry`] built when a policy is loaded, which keeps
//! facts value-like: equality, hashing and serialization are all structural.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("entity id must not be empty")]
    EmptyId,
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: EntityKind, id: String },
}

/// Non-empty identifier of an entity, unique within its kind.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(Arc<str>);

impl EntityId {
    pub fn new(value: impl AsRef<str>) -> Result<Self, ModelError> {
        let value = value.as_ref();
        if value.is_empty() {
            return Err(ModelError::EmptyId);
        }
        Ok(EntityId(Arc::from(value)))
    }

    /// Wraps an already shared string without copying it.
    pub fn from_shared(value: Arc<str>) -> Result<Self, ModelError> {
        if value.is_empty() {
            return Err(ModelError::EmptyId);
        }
        Ok(EntityId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn shared(&self) -> Arc<str> {
        self.0.clone()
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        EntityId::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Shorthand for building ids from literals in tests and fixtures.
///
/// Panics on an empty string.
pub fn id(value: &str) -> EntityId {
    EntityId::new(value).expect("literal entity id must be non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Principal,
    Category,
    Action,
    Resource,
    Site,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Principal,
        EntityKind::Category,
        EntityKind::Action,
        EntityKind::Resource,
        EntityKind::Site,
    ];

    /// Name used for the kind in rule patterns (`Principal(...)`).
    pub fn type_name(self) -> &'static str {
        match self {
            EntityKind::Principal => "Principal",
            EntityKind::Category => "Category",
            EntityKind::Action => "Action",
            EntityKind::Resource => "Resource",
            EntityKind::Site => "Site",
        }
    }

    /// Token used in custom-fact configuration (`"optionType": "PRINCIPAL"`).
    pub fn option_type(self) -> &'static str {
        match self {
            EntityKind::Principal => "PRINCIPAL",
            EntityKind::Category => "CATEGORY",
            EntityKind::Action => "ACTION",
            EntityKind::Resource => "RESOURCE",
            EntityKind::Site => "SITE",
        }
    }

    pub fn from_type_name(name: &str) -> Option<Self> {
        EntityKind::ALL.into_iter().find(|k| k.type_name() == name)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Principal => "principal",
            EntityKind::Category => "category",
            EntityKind::Action => "action",
            EntityKind::Resource => "resource",
            EntityKind::Site => "site",
        })
    }
}

/// A typed reference to a registered entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: EntityId,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: EntityId) -> Self {
        EntityRef { kind, id }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Principal {
    pub id: EntityId,
    pub name: String,
    pub title: String,
}

macro_rules! named_entity {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub struct $name {
            pub id: EntityId,
            pub name: String,
        }
    };
}

named_entity!(Category);
named_entity!(Action);
named_entity!(Resource);
named_entity!(
    /// Sites are carried as data only; no relation or rule refers to them.
    Site
);

/// Entity listing entry, uniform across kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntitySummary {
    pub id: EntityId,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// Immutable entity registries, one per kind, ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    pub principals: BTreeMap<EntityId, Principal>,
    pub categories: BTreeMap<EntityId, Category>,
    pub actions: BTreeMap<EntityId, Action>,
    pub resources: BTreeMap<EntityId, Resource>,
    pub sites: BTreeMap<EntityId, Site>,
}

impl Registry {
    pub fn contains(&self, kind: EntityKind, id: &EntityId) -> bool {
        match kind {
            EntityKind::Principal => self.principals.contains_key(id),
            EntityKind::Category => self.categories.contains_key(id),
            EntityKind::Action => self.actions.contains_key(id),
            EntityKind::Resource => self.resources.contains_key(id),
            EntityKind::Site => self.sites.contains_key(id),
        }
    }

    pub fn resolve(&self, kind: EntityKind, id: &str) -> Result<EntityRef, ModelError> {
        let id = EntityId::new(id)?;
        if self.contains(kind, &id) {
            Ok(EntityRef::new(kind, id))
        } else {
            Err(ModelError::UnknownId { kind, id: id.to_string() })
        }
    }

    pub fn ids(&self, kind: EntityKind) -> Vec<EntityId> {
        match kind {
            EntityKind::Principal => self.principals.keys().cloned().collect(),
            EntityKind::Category => self.categories.keys().cloned().collect(),
            EntityKind::Action => self.actions.keys().cloned().collect(),
            EntityKind::Resource => self.resources.keys().cloned().collect(),
            EntityKind::Site => self.sites.keys().cloned().collect(),
        }
    }

    pub fn name(&self, kind: EntityKind, id: &EntityId) -> Option<&str> {
        match kind {
            EntityKind::Principal => self.principals.get(id).map(|e| e.name.as_str()),
            EntityKind::Category => self.categories.get(id).map(|e| e.name.as_str()),
            EntityKind::Action => self.actions.get(id).map(|e| e.name.as_str()),
            EntityKind::Resource => self.resources.get(id).map(|e| e.name.as_str()),
            EntityKind::Site => self.sites.get(id).map(|e| e.name.as_str()),
        }
    }

    pub fn summary(&self, kind: EntityKind, id: &EntityId) -> Option<EntitySummary> {
        if kind == EntityKind::Principal {
            return self.principals.get(id).map(|p| EntitySummary {
                id: p.id.clone(),
                name: p.name.clone(),
                title: Some(p.title.clone()),
            });
        }
        self.name(kind, id).map(|name| EntitySummary {
            id: id.clone(),
            name: name.to_string(),
            title: None,
        })
    }

    pub fn summaries(&self, kind: EntityKind) -> Vec<EntitySummary> {
        self.ids(kind)
            .iter()
            .filter_map(|id| self.summary(kind, id))
            .collect()
    }

    pub fn len(&self, kind: EntityKind) -> usize {
        match kind {
            EntityKind::Principal => self.principals.len(),
            EntityKind::Category => self.categories.len(),
            EntityKind::Action => self.actions.len(),
            EntityKind::Resource => self.resources.len(),
            EntityKind::Site => self.sites.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Grant,
    Deny,
    Undetermined,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Grant => "grant",
            Answer::Deny => "deny",
            Answer::Undetermined => "undetermined",
        })
    }
}

/// Sign of a computed authorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Grant,
    Deny,
}

impl From<Sign> for Answer {
    fn from(sign: Sign) -> Self {
        match sign {
            Sign::Grant => Answer::Grant,
            Sign::Deny => Answer::Deny,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Answer::from(*self).fmt(f)
    }
}

/// Which side survives when an Arca and a Barca collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    #[default]
    Permissions,
    Prohibitions,
}

impl std::str::FromStr for Priority {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "permissions" => Ok(Priority::Permissions),
            "prohibitions" => Ok(Priority::Prohibitions),
            other => Err(format!("unknown priority `{other}` (expected permissions or prohibitions)")),
        }
    }
}

/// An action on a resource.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permission {
    pub action: EntityId,
    pub resource: EntityId,
}

impl Permission {
    pub fn new(action: EntityId, resource: EntityId) -> Self {
        Permission { action, resource }
    }
}

/// Builds a permission after checking both ids against the registry.
pub fn make_permission(action: &str, resource: &str, registry: &Registry) -> Result<Permission, ModelError> {
    let action = registry.resolve(EntityKind::Action, action)?;
    let resource = registry.resolve(EntityKind::Resource, resource)?;
    Ok(Permission::new(action.id, resource.id))
}

/// Principal-category assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pca {
    pub principal: EntityId,
    pub category: EntityId,
}

/// Permission-category assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arca {
    pub category: EntityId,
    pub permission: Permission,
}

/// Banned action on a resource for a category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Barca {
    pub category: EntityId,
    pub permission: Permission,
}

impl Pca {
    pub fn new(principal: EntityId, category: EntityId) -> Self {
        Pca { principal, category }
    }
}

impl Arca {
    pub fn new(category: EntityId, permission: Permission) -> Self {
        Arca { category, permission }
    }
}

impl Barca {
    pub fn new(category: EntityId, permission: Permission) -> Self {
        Barca { category, permission }
    }
}

/// A computed authorization (grant) or prohibition (deny).
///
/// `chain[0]` is the principal's own category and the last element is the
/// category that holds the Arca or Barca. For grants consecutive elements are
/// (child, parent) pairs, for denies (parent, child).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Par {
    pub principal: EntityId,
    pub chain: Vec<EntityId>,
    pub permission: Permission,
    pub sign: Sign,
}

impl Par {
    fn sort_key(&self) -> (&EntityId, &EntityId, &EntityId, Sign, &[EntityId]) {
        (
            &self.principal,
            &self.permission.resource,
            &self.permission.action,
            self.sign,
            &self.chain,
        )
    }

    pub fn triple(&self) -> AuthTriple {
        AuthTriple {
            principal: self.principal.clone(),
            action: self.permission.action.clone(),
            resource: self.permission.resource.clone(),
            sign: self.sign,
        }
    }
}

// Ordered by principal, resource, action, sign, then chain.
impl Ord for Par {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Par {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The chain-free projection of a Par.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AuthTriple {
    pub principal: EntityId,
    pub action: EntityId,
    pub resource: EntityId,
    pub sign: Sign,
}

impl fmt::Display for AuthTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {}, {})", self.sign, self.principal, self.action, self.resource)
    }
}

/// Value of one custom-fact parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamValue {
    Bool(bool),
    Entity(EntityRef),
    Text(String),
}

impl Serialize for ParamValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamValue::Bool(b) => serializer.serialize_bool(*b),
            ParamValue::Entity(e) => serializer.serialize_str(e.id.as_str()),
            ParamValue::Text(t) => serializer.serialize_str(t),
        }
    }
}

/// A validated instance of a declared custom fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CustomFactInstance {
    pub fact: String,
    pub parameters: Vec<ParamValue>,
}

/// Anything that can live in working memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    Entity(EntityRef),
    Pca(Pca),
    Arca(Arca),
    Barca(Barca),
    Custom(CustomFactInstance),
}

impl Fact {
    /// Every entity reference the fact carries.
    pub fn references(&self) -> Vec<EntityRef> {
        let permission_refs = |p: &Permission| {
            [
                EntityRef::new(EntityKind::Action, p.action.clone()),
                EntityRef::new(EntityKind::Resource, p.resource.clone()),
            ]
        };
        match self {
            Fact::Entity(e) => vec![e.clone()],
            Fact::Pca(pca) => vec![
                EntityRef::new(EntityKind::Principal, pca.principal.clone()),
                EntityRef::new(EntityKind::Category, pca.category.clone()),
            ],
            Fact::Arca(Arca { category, permission }) | Fact::Barca(Barca { category, permission }) => {
                let mut refs = vec![EntityRef::new(EntityKind::Category, category.clone())];
                refs.extend(permission_refs(permission));
                refs
            }
            Fact::Custom(c) => c
                .parameters
                .iter()
                .filter_map(|p| match p {
                    ParamValue::Entity(e) => Some(e.clone()),
                    _ => None,
                })
                .collect(),
        }
    }

    /// First reference that does not resolve in `registry`, if any.
    pub fn unresolved(&self, registry: &Registry) -> Option<EntityRef> {
        self.references().into_iter().find(|r| !registry.contains(r.kind, &r.id))
    }
}

/// Structural fact identity used for duplicate suppression and deletion.
pub fn fact_equals(a: &Fact, b: &Fact) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        let mut r = Registry::default();
        for a in ["read", "create"] {
            r.actions.insert(id(a), Action { id: id(a), name: a.into() });
        }
        r.resources.insert(
            id("prescription"),
            Resource { id: id("prescription"), name: "Prescription".into() },
        );
        r
    }

    fn perm(a: &str, r: &str) -> Permission {
        Permission::new(id(a), id(r))
    }

    #[test]
    fn fact_equality_examples() {
        let a = Fact::Pca(Pca::new(id("000001"), id("clinician")));
        let b = Fact::Pca(Pca::new(id("000001"), id("clinician")));
        let c = Fact::Pca(Pca::new(id("000001"), id("read_all")));
        assert!(fact_equals(&a, &b));
        assert!(!fact_equals(&a, &c));

        let arca = Fact::Arca(Arca::new(id("clinician"), perm("read", "prescription")));
        let barca = Fact::Barca(Barca::new(id("clinician"), perm("read", "prescription")));
        assert!(!fact_equals(&arca, &barca));
    }

    #[test]
    fn make_permission_resolves_ids() {
        let r = registry();
        assert_eq!(make_permission("read", "prescription", &r).unwrap(), perm("read", "prescription"));
        assert_eq!(make_permission("create", "prescription", &r).unwrap(), perm("create", "prescription"));
        assert_eq!(
            make_permission("read", "no_such", &r),
            Err(ModelError::UnknownId { kind: EntityKind::Resource, id: "no_such".into() })
        );
    }

    #[test]
    fn empty_id_rejected() {
        assert_eq!(EntityId::new(""), Err(ModelError::EmptyId));
        assert!(serde_json::from_str::<EntityId>("\"\"").is_err());
    }

    #[test]
    fn par_orders_by_principal_resource_action_sign() {
        let grant = Par {
            principal: id("p1"),
            chain: vec![id("c")],
            permission: perm("write", "a"),
            sign: Sign::Grant,
        };
        let deny_b = Par { permission: perm("read", "b"), sign: Sign::Deny, ..grant.clone() };
        let grant_b = Par { permission: perm("read", "b"), ..grant.clone() };
        let mut v = vec![deny_b.clone(), grant_b.clone(), grant.clone()];
        v.sort();
        assert_eq!(v, vec![grant, grant_b, deny_b]);
    }

    #[test]
    fn unresolved_reference_reported() {
        let r = registry();
        let fact = Fact::Arca(Arca::new(id("clinician"), perm("read", "prescription")));
        assert_eq!(
            fact.unresolved(&r),
            Some(EntityRef::new(EntityKind::Category, id("clinician")))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_id() -> impl Strategy<Value = EntityId> {
            prop::sample::select(vec!["a", "b", "c"]).prop_map(id)
        }

        fn any_fact() -> impl Strategy<Value = Fact> {
            prop_oneof![
                (small_id(), small_id()).prop_map(|(p, c)| Fact::Pca(Pca::new(p, c))),
                (small_id(), small_id(), small_id())
                    .prop_map(|(c, a, r)| Fact::Arca(Arca::new(c, Permission::new(a, r)))),
                (small_id(), small_id(), small_id())
                    .prop_map(|(c, a, r)| Fact::Barca(Barca::new(c, Permission::new(a, r)))),
            ]
        }

        proptest! {
            #[test]
            fn fact_equals_is_an_equivalence(a in any_fact(), b in any_fact(), c in any_fact()) {
                prop_assert!(fact_equals(&a, &a));
                prop_assert_eq!(fact_equals(&a, &b), fact_equals(&b, &a));
                if fact_equals(&a, &b) && fact_equals(&b, &c) {
                    prop_assert!(fact_equals(&a, &c));
                }
            }
        }
    }
}
