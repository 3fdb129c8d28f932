//! The bundled rule corpus and the custom facts it expects.

use std::sync::OnceLock;

use crate::config::CustomFactDecl;
use crate::model::Priority;
use crate::rulelang::{Schema, SchemaError};

/// Every bundled rule file, in load order.
pub const SOURCES: [(&str, &str); 10] = [
    ("add-custom-pcas", include_str!("../../rules/add-custom-pcas.drl")),
    ("responsible-physician", include_str!("../../rules/responsible-physician.drl")),
    ("critical-state-read-all", include_str!("../../rules/critical-state-read-all.drl")),
    (
        "critical-state-remove-read-prohibitions",
        include_str!("../../rules/critical-state-remove-read-prohibitions.drl"),
    ),
    ("sealed-and-locked", include_str!("../../rules/sealed-and-locked.drl")),
    ("sealed-break-the-glass", include_str!("../../rules/sealed-break-the-glass.drl")),
    ("conflicts-remove-barca", include_str!("../../rules/conflicts-remove-barca.drl")),
    ("conflicts-remove-arca", include_str!("../../rules/conflicts-remove-arca.drl")),
    ("pars-permissions", include_str!("../../rules/pars-permissions.drl")),
    ("pars-prohibitions", include_str!("../../rules/pars-prohibitions.drl")),
];

const STANDARD_FACTS: &str = include_str!("../../rules/customfacts.json");

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Name of the conflict rule file a priority setting loads.
pub fn conflict_rule(priority: Priority) -> &'static str {
    match priority {
        Priority::Permissions => "conflicts-remove-barca",
        Priority::Prohibitions => "conflicts-remove-arca",
    }
}

/// The corpus for one priority setting: everything except the other
/// conflict variant.
pub fn sources_for(priority: Priority) -> Vec<(&'static str, &'static str)> {
    let skip = conflict_rule(match priority {
        Priority::Permissions => Priority::Prohibitions,
        Priority::Prohibitions => Priority::Permissions,
    });
    SOURCES.iter().copied().filter(|(n, _)| *n != skip).collect()
}

/// Declarations of the custom facts the corpus rules match on.
pub fn standard_custom_facts() -> &'static [CustomFactDecl] {
    static DECLS: OnceLock<Vec<CustomFactDecl>> = OnceLock::new();
    DECLS.get_or_init(|| serde_json::from_str(STANDARD_FACTS).expect("bundled custom fact declarations are valid"))
}

pub fn standard_schema() -> Schema {
    Schema::with_custom_facts(standard_custom_facts()).expect("bundled custom fact declarations are consistent")
}

/// Schema for running the corpus against a policy: the policy's own
/// declarations, then any standard fact the policy does not declare.
pub fn schema_for(decls: &[CustomFactDecl]) -> Result<Schema, SchemaError> {
    let mut schema = Schema::with_custom_facts(decls)?;
    for std_decl in standard_custom_facts() {
        if !decls.iter().any(|d| d.fact == std_decl.fact) {
            schema.add_custom_fact(std_decl)?;
        }
    }
    Ok(schema)
}
