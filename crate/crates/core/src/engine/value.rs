use std::fmt;
use std::sync::Arc;

use crate::model::*;

/// Runtime value of a rule expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Str(Arc<str>),
    Bool(bool),
    Entity(EntityRef),
    Permission(Permission),
    /// A matched relation or custom fact. Holds its own copy, so fields stay
    /// readable after the fact is deleted from memory.
    Fact(Arc<Fact>),
}

impl Value {
    /// Value a pattern binding receives for `fact`.
    pub fn of_fact(fact: &Arc<Fact>) -> Value {
        match &**fact {
            Fact::Entity(e) => Value::Entity(e.clone()),
            _ => Value::Fact(fact.clone()),
        }
    }

    /// The id carried by a category-like value (a plain id or an entity).
    pub fn as_id(&self) -> Option<EntityId> {
        match self {
            Value::Str(s) => EntityId::from_shared(s.clone()).ok(),
            Value::Entity(e) => Some(e.id.clone()),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Entity(e) => write!(f, "{}({})", e.kind.type_name(), e.id),
            Value::Permission(p) => write!(f, "{}:{}", p.action, p.resource),
            Value::Fact(fact) => write!(f, "{fact:?}"),
        }
    }
}

impl From<&ParamValue> for Value {
    fn from(p: &ParamValue) -> Self {
        match p {
            ParamValue::Bool(b) => Value::Bool(*b),
            ParamValue::Entity(e) => Value::Entity(e.clone()),
            ParamValue::Text(t) => Value::Str(Arc::from(t.as_str())),
        }
    }
}

/// One resolved step of a field path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seg {
    Id,
    Name,
    Title,
    Principal,
    Category,
    Permission,
    Action,
    Resource,
    /// Custom fact parameter by rank.
    Param(usize),
}

/// Follows one segment. `None` means the path does not apply to this value,
/// which the parser's type checks rule out for well-formed rules.
pub fn step(value: &Value, seg: Seg, registry: &Registry) -> Option<Value> {
    match (value, seg) {
        (Value::Entity(e), Seg::Id) => Some(Value::Str(e.id.shared())),
        (Value::Entity(e), Seg::Name) => registry.name(e.kind, &e.id).map(|n| Value::Str(Arc::from(n))),
        (Value::Entity(e), Seg::Title) if e.kind == EntityKind::Principal => {
            registry.principals.get(&e.id).map(|p| Value::Str(Arc::from(p.title.as_str())))
        }
        (Value::Permission(p), Seg::Action) => {
            Some(Value::Entity(EntityRef::new(EntityKind::Action, p.action.clone())))
        }
        (Value::Permission(p), Seg::Resource) => {
            Some(Value::Entity(EntityRef::new(EntityKind::Resource, p.resource.clone())))
        }
        (Value::Fact(f), seg) => match (&**f, seg) {
            (Fact::Pca(p), Seg::Principal) => {
                Some(Value::Entity(EntityRef::new(EntityKind::Principal, p.principal.clone())))
            }
            (Fact::Pca(p), Seg::Category) => {
                Some(Value::Entity(EntityRef::new(EntityKind::Category, p.category.clone())))
            }
            (Fact::Arca(Arca { category, .. }) | Fact::Barca(Barca { category, .. }), Seg::Category) => {
                Some(Value::Entity(EntityRef::new(EntityKind::Category, category.clone())))
            }
            (Fact::Arca(Arca { permission, .. }) | Fact::Barca(Barca { permission, .. }), Seg::Permission) => {
                Some(Value::Permission(permission.clone()))
            }
            (Fact::Custom(c), Seg::Param(i)) => c.parameters.get(i).map(Value::from),
            _ => None,
        },
        _ => None,
    }
}

pub fn follow(mut value: Value, path: &[Seg], registry: &Registry) -> Option<Value> {
    for seg in path {
        value = step(&value, *seg, registry)?;
    }
    Some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_through_relations() {
        let mut registry = Registry::default();
        registry.actions.insert(id("read"), Action { id: id("read"), name: "Read".into() });
        let arca = Arc::new(Fact::Arca(Arca::new(id("clinician"), Permission::new(id("read"), id("record")))));
        let v = Value::of_fact(&arca);
        assert_eq!(
            follow(v.clone(), &[Seg::Permission, Seg::Action, Seg::Id], &registry),
            Some(Value::Str("read".into()))
        );
        assert_eq!(
            follow(v.clone(), &[Seg::Permission, Seg::Action, Seg::Name], &registry),
            Some(Value::Str("Read".into()))
        );
        assert_eq!(
            follow(v.clone(), &[Seg::Category], &registry),
            Some(Value::Entity(EntityRef::new(EntityKind::Category, id("clinician"))))
        );
        assert_eq!(follow(v, &[Seg::Principal], &registry), None);
    }

    #[test]
    fn entity_patterns_bind_entities() {
        let f = Arc::new(Fact::Entity(EntityRef::new(EntityKind::Principal, id("000001"))));
        assert_eq!(Value::of_fact(&f), Value::Entity(EntityRef::new(EntityKind::Principal, id("000001"))));
        assert_eq!(Value::Str("".into()).as_id(), None);
    }
}
