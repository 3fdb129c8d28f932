//! Fact kinds visible to rules and the types of their fields.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::config::{CustomFactDecl, ParamType};
use crate::model::EntityKind;

/// Static type of a rule expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueType {
    Str,
    Bool,
    Entity(EntityKind),
    Permission,
    /// A relation or custom fact of the named kind.
    Fact(String),
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Str => f.write_str("String"),
            ValueType::Bool => f.write_str("Boolean"),
            ValueType::Entity(k) => f.write_str(k.type_name()),
            ValueType::Permission => f.write_str("Permission"),
            ValueType::Fact(k) => f.write_str(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FactKind {
    Entity(EntityKind),
    Pca,
    Arca,
    Barca,
    /// Custom fact, keyed by its configured fact id.
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KindSchema {
    pub name: String,
    pub fact: FactKind,
    /// Fields in constructor order.
    pub fields: Vec<(String, ValueType)>,
}

impl KindSchema {
    pub fn field(&self, name: &str) -> Option<(usize, &ValueType)> {
        self.fields
            .iter()
            .enumerate()
            .find(|(_, (n, _))| n == name)
            .map(|(i, (_, t))| (i, t))
    }

    /// Base entities come from the registry and cannot be built by rules.
    pub fn constructible(&self) -> bool {
        !matches!(self.fact, FactKind::Entity(_))
    }

    /// Type a pattern binding on this kind receives.
    pub fn binding_type(&self) -> ValueType {
        match self.fact {
            FactKind::Entity(k) => ValueType::Entity(k),
            _ => ValueType::Fact(self.name.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("custom fact `{fact}` maps to kind `{kind}`, which is already defined")]
    DuplicateKind { fact: String, kind: String },
    #[error("custom fact `{fact}` has two parameters named `{field}`")]
    DuplicateField { fact: String, field: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    kinds: BTreeMap<String, KindSchema>,
    custom: BTreeMap<String, String>,
}

/// `"CRITICAL_STATE"` → `"CriticalState"`.
pub fn kind_name_for_fact(fact_id: &str) -> String {
    fact_id
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let lower = w.to_ascii_lowercase();
            let mut chars = lower.chars();
            match chars.next() {
                Some(first) => first.to_ascii_uppercase().to_string() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect()
}

/// `"Responsible physician"` → `"responsiblePhysician"`.
pub fn field_name_for_label(label: &str) -> String {
    let camel = kind_name_for_fact(label);
    let mut chars = camel.chars();
    match chars.next() {
        Some(first) => first.to_ascii_lowercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

impl Schema {
    /// Base entities plus Pca, Arca and Barca.
    pub fn builtin() -> Self {
        let mut kinds = BTreeMap::new();
        for kind in EntityKind::ALL {
            let mut fields = vec![
                ("id".to_string(), ValueType::Str),
                ("name".to_string(), ValueType::Str),
            ];
            if kind == EntityKind::Principal {
                fields.push(("title".to_string(), ValueType::Str));
            }
            kinds.insert(
                kind.type_name().to_string(),
                KindSchema { name: kind.type_name().to_string(), fact: FactKind::Entity(kind), fields },
            );
        }
        let relation = |name: &str, fact: FactKind, fields: Vec<(&str, ValueType)>| KindSchema {
            name: name.to_string(),
            fact,
            fields: fields.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
        };
        kinds.insert(
            "Pca".into(),
            relation(
                "Pca",
                FactKind::Pca,
                vec![
                    ("principal", ValueType::Entity(EntityKind::Principal)),
                    ("category", ValueType::Entity(EntityKind::Category)),
                ],
            ),
        );
        for (name, fact) in [("Arca", FactKind::Arca), ("Barca", FactKind::Barca)] {
            kinds.insert(
                name.into(),
                relation(
                    name,
                    fact,
                    vec![
                        ("category", ValueType::Entity(EntityKind::Category)),
                        ("permission", ValueType::Permission),
                    ],
                ),
            );
        }
        Schema { kinds, custom: BTreeMap::new() }
    }

    pub fn with_custom_facts<'a>(decls: impl IntoIterator<Item = &'a CustomFactDecl>) -> Result<Self, SchemaError> {
        let mut schema = Schema::builtin();
        for decl in decls {
            schema.add_custom_fact(decl)?;
        }
        Ok(schema)
    }

    pub fn add_custom_fact(&mut self, decl: &CustomFactDecl) -> Result<(), SchemaError> {
        let name = kind_name_for_fact(&decl.fact);
        if self.kinds.contains_key(&name) {
            return Err(SchemaError::DuplicateKind { fact: decl.fact.clone(), kind: name });
        }
        let mut params: Vec<_> = decl.parameters.iter().collect();
        params.sort_by_key(|p| p.rank);
        let mut fields: Vec<(String, ValueType)> = Vec::new();
        for p in params {
            let field = field_name_for_label(&p.label);
            if fields.iter().any(|(n, _)| *n == field) {
                return Err(SchemaError::DuplicateField { fact: decl.fact.clone(), field });
            }
            let ty = match p.param_type {
                ParamType::Boolean => ValueType::Bool,
                ParamType::Text => ValueType::Str,
                ParamType::Selection => ValueType::Entity(p.option_type.unwrap_or(EntityKind::Principal)),
            };
            fields.push((field, ty));
        }
        self.custom.insert(decl.fact.clone(), name.clone());
        self.kinds.insert(
            name.clone(),
            KindSchema { name, fact: FactKind::Custom(decl.fact.clone()), fields },
        );
        Ok(())
    }

    pub fn kind(&self, name: &str) -> Option<&KindSchema> {
        self.kinds.get(name)
    }

    pub fn custom_kind(&self, fact_id: &str) -> Option<&KindSchema> {
        self.custom.get(fact_id).and_then(|k| self.kinds.get(k))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &KindSchema> {
        self.kinds.values()
    }

    /// Type of `segment` accessed on a value of type `ty`.
    pub fn member(&self, ty: &ValueType, segment: &str) -> Option<ValueType> {
        match ty {
            ValueType::Entity(k) => self.kinds[k.type_name()].field(segment).map(|(_, t)| t.clone()),
            ValueType::Permission => match segment {
                "action" => Some(ValueType::Entity(EntityKind::Action)),
                "resource" => Some(ValueType::Entity(EntityKind::Resource)),
                _ => None,
            },
            ValueType::Fact(kind) => self.kinds.get(kind)?.field(segment).map(|(_, t)| t.clone()),
            ValueType::Str | ValueType::Bool => None,
        }
    }
}
