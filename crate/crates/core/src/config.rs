//! Policy directory loading and validation.
//!
//! A policy directory holds one JSON array per file:
//!
//! | file               | record                                   | required |
//! |--------------------|------------------------------------------|----------|
//! | `principal.json`   | `{id, name, title}`                      | yes      |
//! | `category.json`    | `{id, name}`                             | yes      |
//! | `action.json`      | `{id, name}`                             | yes      |
//! | `resource.json`    | `{id, name}`                             | yes      |
//! | `site.json`        | `{id, name}`                             | no       |
//! | `hierarchy.json`   | `{child, parent}`                        | no       |
//! | `pca.json`         | `{principal, category}`                  | yes      |
//! | `arca.json`        | `{category, action, resource}`           | yes      |
//! | `barca.json`       | `{category, action, resource}`           | yes      |
//! | `customfacts.json` | custom fact declarations                 | yes      |
//!
//! Unknown fields are rejected unless loading is lenient. Validation collects
//! every problem instead of stopping at the first one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{check_acyclic, CategoryHierarchy};
use crate::model::*;
use crate::rulelang::{Schema, SchemaError};

pub const PRINCIPAL_FILE: &str = "principal.json";
pub const CATEGORY_FILE: &str = "category.json";
pub const ACTION_FILE: &str = "action.json";
pub const RESOURCE_FILE: &str = "resource.json";
pub const SITE_FILE: &str = "site.json";
pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const PCA_FILE: &str = "pca.json";
pub const ARCA_FILE: &str = "arca.json";
pub const BARCA_FILE: &str = "barca.json";
pub const CUSTOM_FACTS_FILE: &str = "customfacts.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParamType {
    Selection,
    Boolean,
    Text,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::Selection => "SELECTION",
            ParamType::Boolean => "BOOLEAN",
            ParamType::Text => "TEXT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDecl {
    #[serde(rename = "type")]
    pub param_type: ParamType,
    pub rank: u32,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "optionType", default, skip_serializing_if = "Option::is_none")]
    pub option_type: Option<EntityKind>,
}

/// Declaration of a dynamic fact that callers may inject per evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomFactDecl {
    pub fact: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub single: bool,
    #[serde(default)]
    pub parameters: Vec<ParamDecl>,
}

impl CustomFactDecl {
    pub fn param(&self, rank: u32) -> Option<&ParamDecl> {
        self.parameters.iter().find(|p| p.rank == rank)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{file}: file is missing")]
    MissingFile { file: String },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("{file}:{line}:{column}: malformed document: {message}")]
    Malformed { file: String, line: usize, column: usize, message: String },
    #[error("{file}[{index}]: unknown field `{field}`")]
    UnknownField { file: String, index: usize, field: String },
    #[error("{file}[{index}]: {message}")]
    InvalidRecord { file: String, index: usize, message: String },
    #[error("{file}: duplicate {kind} id `{id}`")]
    DuplicateId { file: String, kind: EntityKind, id: String },
    #[error("{file}[{index}]: unresolved {kind} reference `{id}`")]
    UnresolvedReference { file: String, index: usize, kind: EntityKind, id: String },
    #[error("{file}[{index}]: category `{id}` cannot be its own parent")]
    SelfEdge { file: String, index: usize, id: String },
    #[error("{file}: category hierarchy has a cycle: {}", .cycle.join(" -> "))]
    HierarchyCycle { file: String, cycle: Vec<String> },
    #[error("{file}: custom fact `{fact}`: {message}")]
    InvalidCustomFact { file: String, fact: String, message: String },
}

impl ConfigError {
    pub fn file(&self) -> &str {
        match self {
            ConfigError::MissingFile { file }
            | ConfigError::Io { file, .. }
            | ConfigError::Malformed { file, .. }
            | ConfigError::UnknownField { file, .. }
            | ConfigError::InvalidRecord { file, .. }
            | ConfigError::DuplicateId { file, .. }
            | ConfigError::UnresolvedReference { file, .. }
            | ConfigError::SelfEdge { file, .. }
            | ConfigError::HierarchyCycle { file, .. }
            | ConfigError::InvalidCustomFact { file, .. } => file,
        }
    }
}

/// Every problem found while loading or building a policy.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// A validated policy: registries, hierarchy, base relations and custom-fact
/// declarations. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyConfig {
    pub registry: Registry,
    pub hierarchy: CategoryHierarchy,
    pub pcas: BTreeSet<Pca>,
    pub arcas: BTreeSet<Arca>,
    pub barcas: BTreeSet<Barca>,
    /// Ordered by fact id; parameters ordered by rank.
    pub custom_facts: Vec<CustomFactDecl>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Ignore unknown fields instead of rejecting them.
    pub lenient: bool,
}

pub fn load_policy(dir: impl AsRef<Path>) -> Result<PolicyConfig, ConfigErrors> {
    load_policy_with(dir, LoadOptions::default())
}

#[derive(Deserialize)]
struct PrincipalRecord {
    id: String,
    name: Option<String>,
    title: Option<String>,
}

#[derive(Deserialize)]
struct NamedRecord {
    id: String,
    name: Option<String>,
}

#[derive(Deserialize)]
struct EdgeRecord {
    child: String,
    parent: String,
}

#[derive(Deserialize)]
struct PcaRecord {
    principal: String,
    category: String,
}

#[derive(Deserialize)]
struct PermRecord {
    category: String,
    action: String,
    resource: String,
}

struct Reader<'a> {
    dir: &'a Path,
    options: LoadOptions,
    errors: Vec<ConfigError>,
}

impl Reader<'_> {
    fn read<T: DeserializeOwned>(&mut self, file: &str, allowed: &[&str], required: bool) -> Vec<T> {
        let path = self.dir.join(file);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                if required {
                    self.errors.push(ConfigError::MissingFile { file: file.into() });
                }
                return Vec::new();
            }
            Err(e) => {
                self.errors.push(ConfigError::Io { file: file.into(), message: e.to_string() });
                return Vec::new();
            }
        };
        let doc: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                self.errors.push(ConfigError::Malformed {
                    file: file.into(),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                });
                return Vec::new();
            }
        };
        let serde_json::Value::Array(items) = doc else {
            self.errors.push(ConfigError::Malformed {
                file: file.into(),
                line: 1,
                column: 1,
                message: "expected an array of objects".into(),
            });
            return Vec::new();
        };
        let mut out = Vec::with_capacity(items.len());
        for (index, item) in items.into_iter().enumerate() {
            let Some(obj) = item.as_object() else {
                self.errors.push(ConfigError::InvalidRecord {
                    file: file.into(),
                    index,
                    message: "expected an object".into(),
                });
                continue;
            };
            if !self.options.lenient {
                let unknown: Vec<_> = obj.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect();
                if !unknown.is_empty() {
                    for field in unknown {
                        self.errors.push(ConfigError::UnknownField { file: file.into(), index, field });
                    }
                    continue;
                }
            }
            match serde_json::from_value::<T>(item) {
                Ok(v) => out.push(v),
                Err(e) => self.errors.push(ConfigError::InvalidRecord {
                    file: file.into(),
                    index,
                    message: e.to_string(),
                }),
            }
        }
        out
    }
}

pub fn load_policy_with(dir: impl AsRef<Path>, options: LoadOptions) -> Result<PolicyConfig, ConfigErrors> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(ConfigErrors(vec![ConfigError::Io {
            file: dir.display().to_string(),
            message: "not a readable directory".into(),
        }]));
    }
    let mut reader = Reader { dir, options, errors: Vec::new() };
    let named = &["id", "name"];
    let principals: Vec<PrincipalRecord> = reader.read(PRINCIPAL_FILE, &["id", "name", "title"], true);
    let categories: Vec<NamedRecord> = reader.read(CATEGORY_FILE, named, true);
    let actions: Vec<NamedRecord> = reader.read(ACTION_FILE, named, true);
    let resources: Vec<NamedRecord> = reader.read(RESOURCE_FILE, named, true);
    let sites: Vec<NamedRecord> = reader.read(SITE_FILE, named, false);
    let edges: Vec<EdgeRecord> = reader.read(HIERARCHY_FILE, &["child", "parent"], false);
    let pcas: Vec<PcaRecord> = reader.read(PCA_FILE, &["principal", "category"], true);
    let perm_fields = &["category", "action", "resource"];
    let arcas: Vec<PermRecord> = reader.read(ARCA_FILE, perm_fields, true);
    let barcas: Vec<PermRecord> = reader.read(BARCA_FILE, perm_fields, true);
    let customs: Vec<CustomFactDecl> =
        reader.read(CUSTOM_FACTS_FILE, &["fact", "description", "label", "single", "parameters"], true);

    let mut builder = PolicyBuilder::new();
    for p in principals {
        let name = p.name.unwrap_or_else(|| p.id.clone());
        builder.principal(&p.id, &name, p.title.as_deref().unwrap_or(""));
    }
    for (records, kind) in [
        (categories, EntityKind::Category),
        (actions, EntityKind::Action),
        (resources, EntityKind::Resource),
        (sites, EntityKind::Site),
    ] {
        for r in records {
            let name = r.name.unwrap_or_else(|| r.id.clone());
            builder.named(kind, &r.id, &name);
        }
    }
    for e in edges {
        builder.edge(&e.child, &e.parent);
    }
    for p in pcas {
        builder.pca(&p.principal, &p.category);
    }
    for a in arcas {
        builder.arca(&a.category, &a.action, &a.resource);
    }
    for b in barcas {
        builder.barca(&b.category, &b.action, &b.resource);
    }
    for c in customs {
        builder.custom_fact(c);
    }

    let mut errors = reader.errors;
    match builder.build() {
        Ok(policy) if errors.is_empty() => Ok(policy),
        Ok(_) => Err(ConfigErrors(errors)),
        Err(ConfigErrors(more)) => {
            errors.extend(more);
            Err(ConfigErrors(errors))
        }
    }
}

fn file_for(kind: EntityKind) -> &'static str {
    match kind {
        EntityKind::Principal => PRINCIPAL_FILE,
        EntityKind::Category => CATEGORY_FILE,
        EntityKind::Action => ACTION_FILE,
        EntityKind::Resource => RESOURCE_FILE,
        EntityKind::Site => SITE_FILE,
    }
}

/// Programmatic policy construction with the same validation as loading.
///
/// Records are attributed to the file they would live in, indexed in call
/// order, so errors read the same either way.
#[derive(Debug, Clone, Default)]
pub struct PolicyBuilder {
    entities: Vec<(EntityKind, String, String, String)>,
    edges: Vec<(String, String)>,
    pcas: Vec<(String, String)>,
    arcas: Vec<(String, String, String)>,
    barcas: Vec<(String, String, String)>,
    customs: Vec<CustomFactDecl>,
}

impl PolicyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn principal(&mut self, id: &str, name: &str, title: &str) -> &mut Self {
        self.entities.push((EntityKind::Principal, id.into(), name.into(), title.into()));
        self
    }

    pub fn named(&mut self, kind: EntityKind, id: &str, name: &str) -> &mut Self {
        self.entities.push((kind, id.into(), name.into(), String::new()));
        self
    }

    pub fn category(&mut self, id: &str) -> &mut Self {
        self.named(EntityKind::Category, id, id)
    }

    pub fn action(&mut self, id: &str) -> &mut Self {
        self.named(EntityKind::Action, id, id)
    }

    pub fn resource(&mut self, id: &str) -> &mut Self {
        self.named(EntityKind::Resource, id, id)
    }

    /// `child ⊆ parent`.
    pub fn edge(&mut self, child: &str, parent: &str) -> &mut Self {
        self.edges.push((child.into(), parent.into()));
        self
    }

    pub fn pca(&mut self, principal: &str, category: &str) -> &mut Self {
        self.pcas.push((principal.into(), category.into()));
        self
    }

    pub fn arca(&mut self, category: &str, action: &str, resource: &str) -> &mut Self {
        self.arcas.push((category.into(), action.into(), resource.into()));
        self
    }

    pub fn barca(&mut self, category: &str, action: &str, resource: &str) -> &mut Self {
        self.barcas.push((category.into(), action.into(), resource.into()));
        self
    }

    pub fn custom_fact(&mut self, decl: CustomFactDecl) -> &mut Self {
        self.customs.push(decl);
        self
    }

    pub fn build(&self) -> Result<PolicyConfig, ConfigErrors> {
        let mut errors = Vec::new();
        let mut registry = Registry::default();
        let mut counters: BTreeMap<EntityKind, usize> = BTreeMap::new();

        for (kind, raw_id, name, title) in &self.entities {
            let file = file_for(*kind);
            let index = {
                let c = counters.entry(*kind).or_default();
                *c += 1;
                *c - 1
            };
            let id = match EntityId::new(raw_id) {
                Ok(id) => id,
                Err(e) => {
                    errors.push(ConfigError::InvalidRecord { file: file.into(), index, message: e.to_string() });
                    continue;
                }
            };
            if registry.contains(*kind, &id) {
                errors.push(ConfigError::DuplicateId { file: file.into(), kind: *kind, id: raw_id.clone() });
                continue;
            }
            let name = name.clone();
            match kind {
                EntityKind::Principal => {
                    registry.principals.insert(id.clone(), Principal { id, name, title: title.clone() });
                }
                EntityKind::Category => {
                    registry.categories.insert(id.clone(), Category { id, name });
                }
                EntityKind::Action => {
                    registry.actions.insert(id.clone(), Action { id, name });
                }
                EntityKind::Resource => {
                    registry.resources.insert(id.clone(), Resource { id, name });
                }
                EntityKind::Site => {
                    registry.sites.insert(id.clone(), Site { id, name });
                }
            }
        }

        let mut resolve = |file: &str, index: usize, kind: EntityKind, raw: &str| -> Option<EntityId> {
            match registry.resolve(kind, raw) {
                Ok(r) => Some(r.id),
                Err(_) => {
                    errors.push(ConfigError::UnresolvedReference { file: file.into(), index, kind, id: raw.into() });
                    None
                }
            }
        };

        let mut edges = Vec::new();
        let mut self_edges = Vec::new();
        for (index, (child, parent)) in self.edges.iter().enumerate() {
            let c = resolve(HIERARCHY_FILE, index, EntityKind::Category, child);
            let p = resolve(HIERARCHY_FILE, index, EntityKind::Category, parent);
            if let (Some(c), Some(p)) = (c, p) {
                if c == p {
                    self_edges.push(ConfigError::SelfEdge { file: HIERARCHY_FILE.into(), index, id: c.to_string() });
                } else {
                    edges.push((c, p));
                }
            }
        }

        let mut pcas = BTreeSet::new();
        for (index, (p, c)) in self.pcas.iter().enumerate() {
            let p = resolve(PCA_FILE, index, EntityKind::Principal, p);
            let c = resolve(PCA_FILE, index, EntityKind::Category, c);
            if let (Some(p), Some(c)) = (p, c) {
                pcas.insert(Pca::new(p, c));
            }
        }

        let mut perms = |file: &str, rows: &[(String, String, String)]| {
            let mut out = Vec::new();
            for (index, (c, a, r)) in rows.iter().enumerate() {
                let c = resolve(file, index, EntityKind::Category, c);
                let a = resolve(file, index, EntityKind::Action, a);
                let r = resolve(file, index, EntityKind::Resource, r);
                if let (Some(c), Some(a), Some(r)) = (c, a, r) {
                    out.push((c, Permission::new(a, r)));
                }
            }
            out
        };
        let arcas: BTreeSet<Arca> = perms(ARCA_FILE, &self.arcas).into_iter().map(|(c, p)| Arca::new(c, p)).collect();
        let barcas: BTreeSet<Barca> =
            perms(BARCA_FILE, &self.barcas).into_iter().map(|(c, p)| Barca::new(c, p)).collect();
        errors.extend(self_edges);

        let hierarchy = match check_acyclic(&edges) {
            Err(cycle) => {
                errors.push(ConfigError::HierarchyCycle {
                    file: HIERARCHY_FILE.into(),
                    cycle: cycle.iter().map(|c| c.to_string()).collect(),
                });
                None
            }
            Ok(()) => CategoryHierarchy::new(registry.categories.keys().cloned(), edges).ok(),
        };

        let custom_facts = validate_decls(&self.customs, &mut errors);

        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        Ok(PolicyConfig {
            registry,
            hierarchy: hierarchy.expect("hierarchy validated above"),
            pcas,
            arcas,
            barcas,
            custom_facts,
        })
    }
}

fn validate_decls(decls: &[CustomFactDecl], errors: &mut Vec<ConfigError>) -> Vec<CustomFactDecl> {
    let mut out: Vec<CustomFactDecl> = Vec::new();
    let mut schema = Schema::builtin();
    for decl in decls {
        let fail = |message: String| ConfigError::InvalidCustomFact {
            file: CUSTOM_FACTS_FILE.into(),
            fact: decl.fact.clone(),
            message,
        };
        if decl.fact.trim().is_empty() {
            errors.push(fail("fact id must not be empty".into()));
            continue;
        }
        if out.iter().any(|d| d.fact == decl.fact) {
            errors.push(fail("declared twice".into()));
            continue;
        }
        let mut decl = decl.clone();
        decl.parameters.sort_by_key(|p| p.rank);
        let mut ok = true;
        for (expected, p) in decl.parameters.iter().enumerate() {
            if p.rank as usize != expected {
                errors.push(fail(format!("parameter ranks must be 0..{} without gaps", decl.parameters.len())));
                ok = false;
                break;
            }
        }
        for p in &decl.parameters {
            match (p.param_type, p.option_type) {
                (ParamType::Selection, None) => {
                    errors.push(fail(format!("SELECTION parameter at rank {} needs an optionType", p.rank)));
                    ok = false;
                }
                (ParamType::Boolean | ParamType::Text, Some(_)) => {
                    errors.push(fail(format!("optionType is only valid on SELECTION (rank {})", p.rank)));
                    ok = false;
                }
                _ => {}
            }
            if p.label.trim().is_empty() {
                errors.push(fail(format!("parameter at rank {} needs a label", p.rank)));
                ok = false;
            }
        }
        if ok {
            if let Err(e) = schema.add_custom_fact(&decl) {
                let message = match e {
                    SchemaError::DuplicateKind { kind, .. } => format!("kind name `{kind}` is already taken"),
                    SchemaError::DuplicateField { field, .. } => format!("two parameters map to field `{field}`"),
                };
                errors.push(fail(message));
                continue;
            }
            out.push(decl);
        }
    }
    out.sort_by(|a, b| a.fact.cmp(&b.fact));
    out
}

/// One custom fact as supplied by a caller: raw JSON parameter values by rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFactRequest {
    pub fact: String,
    #[serde(default)]
    pub parameters: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactValueError {
    #[error("unknown custom fact `{0}`")]
    UnknownFact(String),
    #[error("`{fact}` takes {expected} parameter(s), got {found}")]
    Arity { fact: String, expected: usize, found: usize },
    #[error("`{fact}` parameter {rank}: expected {expected}, got {found}")]
    TypeMismatch { fact: String, rank: usize, expected: ParamType, found: String },
    #[error("`{fact}` parameter {rank}: unknown {kind} `{id}`")]
    UnknownOption { fact: String, rank: usize, kind: EntityKind, id: String },
    #[error("`{0}` may appear only once")]
    DuplicateSingle(String),
}

/// Checks raw parameter values against a declaration.
pub fn validate_custom_fact_values(
    decl: &CustomFactDecl,
    values: &[serde_json::Value],
    registry: &Registry,
) -> Result<CustomFactInstance, FactValueError> {
    if values.len() != decl.parameters.len() {
        return Err(FactValueError::Arity {
            fact: decl.fact.clone(),
            expected: decl.parameters.len(),
            found: values.len(),
        });
    }
    let mut parameters = Vec::with_capacity(values.len());
    for (rank, value) in values.iter().enumerate() {
        let param = decl.param(rank as u32).expect("ranks are contiguous");
        let mismatch = || FactValueError::TypeMismatch {
            fact: decl.fact.clone(),
            rank,
            expected: param.param_type,
            found: value.to_string(),
        };
        let v = match param.param_type {
            ParamType::Boolean => match value {
                serde_json::Value::Bool(b) => ParamValue::Bool(*b),
                serde_json::Value::String(s) if s == "true" => ParamValue::Bool(true),
                serde_json::Value::String(s) if s == "false" => ParamValue::Bool(false),
                _ => return Err(mismatch()),
            },
            ParamType::Text => match value {
                serde_json::Value::String(s) => ParamValue::Text(s.clone()),
                _ => return Err(mismatch()),
            },
            ParamType::Selection => {
                let serde_json::Value::String(s) = value else {
                    return Err(mismatch());
                };
                let kind = param.option_type.expect("validated SELECTION has an optionType");
                let entity = registry.resolve(kind, s).map_err(|_| FactValueError::UnknownOption {
                    fact: decl.fact.clone(),
                    rank,
                    kind,
                    id: s.clone(),
                })?;
                ParamValue::Entity(entity)
            }
        };
        parameters.push(v);
    }
    Ok(CustomFactInstance { fact: decl.fact.clone(), parameters })
}

fn check_instance(decl: &CustomFactDecl, inst: &CustomFactInstance, registry: &Registry) -> Result<(), FactValueError> {
    if inst.parameters.len() != decl.parameters.len() {
        return Err(FactValueError::Arity {
            fact: decl.fact.clone(),
            expected: decl.parameters.len(),
            found: inst.parameters.len(),
        });
    }
    for (rank, (param, value)) in decl.parameters.iter().zip(&inst.parameters).enumerate() {
        let ok = match (param.param_type, value) {
            (ParamType::Boolean, ParamValue::Bool(_)) | (ParamType::Text, ParamValue::Text(_)) => true,
            (ParamType::Selection, ParamValue::Entity(e)) => {
                if Some(e.kind) != param.option_type {
                    false
                } else if !registry.contains(e.kind, &e.id) {
                    return Err(FactValueError::UnknownOption {
                        fact: decl.fact.clone(),
                        rank,
                        kind: e.kind,
                        id: e.id.to_string(),
                    });
                } else {
                    true
                }
            }
            _ => false,
        };
        if !ok {
            return Err(FactValueError::TypeMismatch {
                fact: decl.fact.clone(),
                rank,
                expected: param.param_type,
                found: format!("{value:?}"),
            });
        }
    }
    Ok(())
}

impl PolicyConfig {
    pub fn custom_fact(&self, fact: &str) -> Option<&CustomFactDecl> {
        self.custom_facts.iter().find(|d| d.fact == fact)
    }

    /// Validates a request list; every failing entry is reported by index.
    pub fn validate_custom_facts(
        &self,
        entries: &[CustomFactRequest],
    ) -> Result<Vec<CustomFactInstance>, Vec<(usize, FactValueError)>> {
        let mut out = Vec::new();
        let mut errors = Vec::new();
        let mut singles = BTreeSet::new();
        for (index, entry) in entries.iter().enumerate() {
            let Some(decl) = self.custom_fact(&entry.fact) else {
                errors.push((index, FactValueError::UnknownFact(entry.fact.clone())));
                continue;
            };
            if decl.single && !singles.insert(decl.fact.clone()) {
                errors.push((index, FactValueError::DuplicateSingle(decl.fact.clone())));
                continue;
            }
            match validate_custom_fact_values(decl, &entry.parameters, &self.registry) {
                Ok(inst) => out.push(inst),
                Err(e) => errors.push((index, e)),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(errors)
        }
    }

    /// Re-checks already typed instances against this policy.
    pub fn check_custom_facts(&self, instances: &[CustomFactInstance]) -> Result<(), (usize, FactValueError)> {
        let mut singles = BTreeSet::new();
        for (index, inst) in instances.iter().enumerate() {
            let decl = self
                .custom_fact(&inst.fact)
                .ok_or_else(|| (index, FactValueError::UnknownFact(inst.fact.clone())))?;
            if decl.single && !singles.insert(decl.fact.clone()) {
                return Err((index, FactValueError::DuplicateSingle(decl.fact.clone())));
            }
            check_instance(decl, inst, &self.registry).map_err(|e| (index, e))?;
        }
        Ok(())
    }

    /// Base entities and relations in a fixed order, ready to seed a session.
    pub fn base_facts(&self) -> Vec<Fact> {
        let mut facts = Vec::new();
        for kind in EntityKind::ALL {
            for id in self.registry.ids(kind) {
                facts.push(Fact::Entity(EntityRef::new(kind, id)));
            }
        }
        facts.extend(self.pcas.iter().cloned().map(Fact::Pca));
        facts.extend(self.arcas.iter().cloned().map(Fact::Arca));
        facts.extend(self.barcas.iter().cloned().map(Fact::Barca));
        facts
    }
}
