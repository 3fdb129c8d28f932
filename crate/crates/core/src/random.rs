//! Seeded random policies for property tests and the acceptance suite.
//!
//! Categories form a DAG by only adding edges from a higher index to a lower
//! one. Category 0 is named `clinician` and action 0 `read`, so the bundled
//! custom-fact rules have something to act on.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{PolicyBuilder, PolicyConfig};
use crate::engine::corpus;
use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub principals: usize,
    pub categories: usize,
    pub actions: usize,
    pub resources: usize,
    /// Upper bound for each relation's density, drawn per policy.
    pub density: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { principals: 10, categories: 8, actions: 5, resources: 5, density: 0.4 }
    }
}

/// Categories the custom-fact rules look up by id.
pub const SPECIAL_CATEGORIES: [&str; 3] = ["read_all", "sealed_resource", "responsible_physician"];

fn category_name(i: usize) -> String {
    if i == 0 {
        "clinician".into()
    } else {
        format!("c{i}")
    }
}

fn action_name(i: usize) -> String {
    if i == 0 {
        "read".into()
    } else {
        format!("a{i}")
    }
}

/// A policy drawn from `seed`. With `special`, the categories in
/// [`SPECIAL_CATEGORIES`] are added on top of the limit, unrelated to the rest.
pub fn random_policy(seed: u64, limits: Limits, special: bool) -> PolicyConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = rng.gen_range(1..=limits.principals);
    let nc = rng.gen_range(1..=limits.categories);
    let na = rng.gen_range(1..=limits.actions);
    let nr = rng.gen_range(1..=limits.resources);
    let mut density = || rng.gen_range(0.0..=limits.density);
    let (d_edge, d_pca, d_arca, d_barca) = (density(), density(), density(), density());

    let mut b = PolicyBuilder::new();
    let principals: Vec<String> = (0..np).map(|i| format!("p{i}")).collect();
    let categories: Vec<String> = (0..nc).map(category_name).collect();
    let actions: Vec<String> = (0..na).map(action_name).collect();
    let resources: Vec<String> = (0..nr).map(|i| format!("r{i}")).collect();
    for p in &principals {
        b.principal(p, &format!("Principal {p}"), "");
    }
    for c in &categories {
        b.category(c);
    }
    if special {
        for c in SPECIAL_CATEGORIES {
            b.category(c);
        }
    }
    for a in &actions {
        b.action(a);
    }
    for r in &resources {
        b.resource(r);
    }
    for child in 1..nc {
        for parent in 0..child {
            if rng.gen_bool(d_edge) {
                b.edge(&categories[child], &categories[parent]);
            }
        }
    }
    for p in &principals {
        for c in &categories {
            if rng.gen_bool(d_pca) {
                b.pca(p, c);
            }
        }
    }
    for c in &categories {
        for a in &actions {
            for r in &resources {
                if rng.gen_bool(d_arca) {
                    b.arca(c, a, r);
                }
                if rng.gen_bool(d_barca) {
                    b.barca(c, a, r);
                }
            }
        }
    }
    for decl in corpus::standard_custom_facts() {
        b.custom_fact(decl.clone());
    }
    b.build().expect("generated policies are valid")
}

/// Random instances of the standard custom facts over `policy`'s entities,
/// at most one CriticalState.
pub fn random_custom_facts(policy: &PolicyConfig, seed: u64) -> Vec<CustomFactInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reg = &policy.registry;
    let principals = reg.ids(EntityKind::Principal);
    let resources = reg.ids(EntityKind::Resource);
    let categories = reg.ids(EntityKind::Category);
    let entity = |kind, id: &EntityId| ParamValue::Entity(EntityRef::new(kind, id.clone()));
    let mut out = Vec::new();
    if rng.gen_bool(0.5) {
        out.push(CustomFactInstance { fact: "CRITICAL_STATE".into(), parameters: vec![ParamValue::Bool(rng.gen())] });
    }
    for _ in 0..rng.gen_range(0..=3) {
        let fact = ["BREAK_THE_GLASS", "RESPONSIBLE_PHYSICIAN", "SEALED_RESOURCE", "SET_PCA"]
            .choose(&mut rng)
            .unwrap();
        let p = principals.choose(&mut rng).unwrap();
        let parameters = match *fact {
            "BREAK_THE_GLASS" | "RESPONSIBLE_PHYSICIAN" => vec![entity(EntityKind::Principal, p)],
            "SEALED_RESOURCE" => vec![
                entity(EntityKind::Resource, resources.choose(&mut rng).unwrap()),
                ParamValue::Bool(rng.gen()),
            ],
            _ => vec![
                entity(EntityKind::Principal, p),
                entity(EntityKind::Category, categories.choose(&mut rng).unwrap()),
            ],
        };
        out.push(CustomFactInstance { fact: fact.to_string(), parameters });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_within_limits() {
        for seed in 0..50 {
            let a = random_policy(seed, Limits::default(), false);
            let b = random_policy(seed, Limits::default(), false);
            assert_eq!(a.pcas, b.pcas);
            assert_eq!(a.arcas, b.arcas);
            assert!(a.registry.len(EntityKind::Principal) <= 10);
            assert!(a.registry.len(EntityKind::Category) <= 8);
            assert!(a.registry.len(EntityKind::Action) <= 5);
            assert!(a.registry.len(EntityKind::Resource) <= 5);
            let cells = a.registry.len(EntityKind::Category)
                * a.registry.len(EntityKind::Action)
                * a.registry.len(EntityKind::Resource);
            assert!(a.arcas.len() <= cells);
        }
    }

    #[test]
    fn custom_facts_validate() {
        for seed in 0..50 {
            let p = random_policy(seed, Limits::default(), true);
            let facts = random_custom_facts(&p, seed);
            assert!(p.check_custom_facts(&facts).is_ok(), "seed {seed}: {facts:?}");
        }
    }
}
