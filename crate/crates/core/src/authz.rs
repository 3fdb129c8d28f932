//! Rule-free authorization: the axiom evaluated by enumeration.
//!
//! `(p, a, r)` is granted iff some category `c` of `p` sits below-or-at a
//! category `c'` holding an Arca for `(a, r)`. Prohibitions run the other
//! way: a Barca on `c'` denies every principal whose category `c` sits
//! above-or-at `c'`. This module keeps its own transitive closure so it can
//! serve as an independent oracle for the rule engine.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::PolicyConfig;
use crate::engine::{Engine, EngineError};
use crate::hierarchy::CategoryHierarchy;
use crate::model::*;

/// The relations a decision is computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseRelations<'h> {
    pub pcas: BTreeSet<Pca>,
    pub arcas: BTreeSet<Arca>,
    pub barcas: BTreeSet<Barca>,
    pub hierarchy: &'h CategoryHierarchy,
}

impl<'h> BaseRelations<'h> {
    pub fn from_policy(policy: &'h PolicyConfig) -> Self {
        BaseRelations {
            pcas: policy.pcas.clone(),
            arcas: policy.arcas.clone(),
            barcas: policy.barcas.clone(),
            hierarchy: &policy.hierarchy,
        }
    }
}

/// Reflexive-transitive closure of child ⊆ parent as (ancestor, descendant)
/// pairs, by Warshall's algorithm over the raw edge list.
fn closure(h: &CategoryHierarchy) -> BTreeSet<(EntityId, EntityId)> {
    let nodes: Vec<&EntityId> = h.categories().collect();
    let index: BTreeMap<&EntityId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = nodes.len();
    // reach[a][b]: a is an ancestor-or-self of b
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for (child, parent) in h.edges() {
        reach[index[parent]][index[child]] = true;
    }
    for k in 0..n {
        let via = reach[k].clone();
        for row in reach.iter_mut().filter(|row| row[k]) {
            for (r, v) in row.iter_mut().zip(&via) {
                *r |= *v;
            }
        }
    }
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] {
                out.insert((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }
    out
}

/// Every granted and denied `(principal, action, resource)` triple.
pub fn axiom_par(base: &BaseRelations<'_>) -> BTreeSet<AuthTriple> {
    let above = closure(base.hierarchy);
    let mut out = BTreeSet::new();
    for pca in &base.pcas {
        for arca in &base.arcas {
            if above.contains(&(arca.category.clone(), pca.category.clone())) {
                out.insert(triple(pca, &arca.permission, Sign::Grant));
            }
        }
        for barca in &base.barcas {
            if above.contains(&(pca.category.clone(), barca.category.clone())) {
                out.insert(triple(pca, &barca.permission, Sign::Deny));
            }
        }
    }
    out
}

fn triple(pca: &Pca, permission: &Permission, sign: Sign) -> AuthTriple {
    AuthTriple {
        principal: pca.principal.clone(),
        action: permission.action.clone(),
        resource: permission.resource.clone(),
        sign,
    }
}

/// Drops the side of each conflict that `priority` sacrifices, on a copy.
///
/// A conflict is an Arca at category `c` and a Barca for the same permission
/// at `c` or anything below it. Permissions priority removes such Barcas;
/// prohibitions priority removes such Arcas.
pub fn resolve_conflicts<'h>(base: &BaseRelations<'h>, priority: Priority) -> BaseRelations<'h> {
    let above = closure(base.hierarchy);
    let conflicting = |arca: &Arca, barca: &Barca| {
        arca.permission == barca.permission && above.contains(&(arca.category.clone(), barca.category.clone()))
    };
    let mut out = base.clone();
    match priority {
        Priority::Permissions => out.barcas.retain(|b| !base.arcas.iter().any(|a| conflicting(a, b))),
        Priority::Prohibitions => out.arcas.retain(|a| !base.barcas.iter().any(|b| conflicting(a, b))),
    }
    out
}

/// Answer for a single request after conflict resolution. When a principal
/// is both granted and denied through unrelated categories, the priority
/// setting decides which wins.
pub fn decide(
    base: &BaseRelations<'_>,
    registry: &Registry,
    principal: &str,
    action: &str,
    resource: &str,
    priority: Priority,
) -> Result<Answer, ModelError> {
    let principal = registry.resolve(EntityKind::Principal, principal)?.id;
    let action = registry.resolve(EntityKind::Action, action)?.id;
    let resource = registry.resolve(EntityKind::Resource, resource)?.id;
    let par = axiom_par(&resolve_conflicts(base, priority));
    let has = |sign| {
        par.contains(&AuthTriple {
            principal: principal.clone(),
            action: action.clone(),
            resource: resource.clone(),
            sign,
        })
    };
    let order = match priority {
        Priority::Permissions => [Sign::Grant, Sign::Deny],
        Priority::Prohibitions => [Sign::Deny, Sign::Grant],
    };
    Ok(order.into_iter().find(|s| has(*s)).map(Answer::from).unwrap_or(Answer::Undetermined))
}

/// Differences between the engine's Pars and the oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub engine_only: BTreeSet<AuthTriple>,
    pub oracle_only: BTreeSet<AuthTriple>,
}

impl EquivalenceReport {
    pub fn compare(engine: &BTreeSet<AuthTriple>, oracle: &BTreeSet<AuthTriple>) -> Self {
        EquivalenceReport {
            engine_only: engine.difference(oracle).cloned().collect(),
            oracle_only: oracle.difference(engine).cloned().collect(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.engine_only.is_empty() && self.oracle_only.is_empty()
    }
}

impl std::fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for t in &self.engine_only {
            writeln!(f, "engine only: {t}")?;
        }
        for t in &self.oracle_only {
            writeln!(f, "oracle only: {t}")?;
        }
        Ok(())
    }
}

pub fn project(pars: &BTreeSet<Par>) -> BTreeSet<AuthTriple> {
    pars.iter().map(Par::triple).collect()
}

/// Runs the engine, then the oracle on the relations the engine quiesced
/// with, and compares the two.
pub fn check_equivalence(
    policy: &PolicyConfig,
    custom_facts: &[CustomFactInstance],
    priority: Priority,
) -> Result<EquivalenceReport, EngineError> {
    check_equivalence_with(&Engine::new(policy)?, policy, custom_facts, priority)
}

pub fn check_equivalence_with(
    engine: &Engine,
    policy: &PolicyConfig,
    custom_facts: &[CustomFactInstance],
    priority: Priority,
) -> Result<EquivalenceReport, EngineError> {
    let eval = engine.evaluate(policy, custom_facts, priority)?;
    let snapshot = eval.base_relations(&policy.hierarchy);
    let oracle = axiom_par(&resolve_conflicts(&snapshot, priority));
    Ok(EquivalenceReport::compare(&project(&eval.pars), &oracle))
}

/// Checks that every Par is backed by the final relations: a Pca for the
/// principal at `chain[0]`, an Arca or Barca at the chain's end, and
/// hierarchy edges between consecutive links in the sign's direction.
pub fn par_provenance_violations(
    pars: &BTreeSet<Par>,
    relations: &BaseRelations<'_>,
) -> Vec<String> {
    let mut out = Vec::new();
    for par in pars {
        let (Some(first), Some(last)) = (par.chain.first(), par.chain.last()) else {
            out.push(format!("{}: empty chain", par.triple()));
            continue;
        };
        if !relations.pcas.contains(&Pca::new(par.principal.clone(), first.clone())) {
            out.push(format!("{}: no Pca for {first}", par.triple()));
        }
        let held = match par.sign {
            Sign::Grant => relations.arcas.contains(&Arca::new(last.clone(), par.permission.clone())),
            Sign::Deny => relations.barcas.contains(&Barca::new(last.clone(), par.permission.clone())),
        };
        if !held {
            out.push(format!("{}: {last} holds no matching relation", par.triple()));
        }
        for w in par.chain.windows(2) {
            let (child, parent) = match par.sign {
                Sign::Grant => (&w[0], &w[1]),
                Sign::Deny => (&w[1], &w[0]),
            };
            let edge = relations.hierarchy.parents_of(child).is_some_and(|ps| ps.contains(parent));
            if !edge {
                out.push(format!("{}: {} -> {} is not a hierarchy edge", par.triple(), w[0], w[1]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PolicyBuilder;

    fn chain_policy() -> PolicyConfig {
        let mut b = PolicyBuilder::new();
        b.principal("p1", "P1", "");
        for c in ["specialist", "resident", "intern"] {
            b.category(c);
        }
        b.action("read").resource("record");
        b.edge("specialist", "resident").edge("resident", "intern");
        b.pca("p1", "specialist").arca("intern", "read", "record");
        b.build().unwrap()
    }

    fn t(p: &str, a: &str, r: &str, sign: Sign) -> AuthTriple {
        AuthTriple { principal: id(p), action: id(a), resource: id(r), sign }
    }

    #[test]
    fn inherited_grant() {
        let policy = chain_policy();
        let base = BaseRelations::from_policy(&policy);
        assert_eq!(axiom_par(&base), BTreeSet::from([t("p1", "read", "record", Sign::Grant)]));
        assert_eq!(
            decide(&base, &policy.registry, "p1", "read", "record", Priority::Permissions),
            Ok(Answer::Grant)
        );
        assert!(decide(&base, &policy.registry, "p9", "read", "record", Priority::Permissions).is_err());
    }

    #[test]
    fn empty_relations() {
        let h = CategoryHierarchy::default();
        let base = BaseRelations { pcas: BTreeSet::new(), arcas: BTreeSet::new(), barcas: BTreeSet::new(), hierarchy: &h };
        assert!(axiom_par(&base).is_empty());
        let policy = chain_policy();
        let empty = BaseRelations { hierarchy: &policy.hierarchy, ..base };
        assert_eq!(
            decide(&empty, &policy.registry, "p1", "read", "record", Priority::Prohibitions),
            Ok(Answer::Undetermined)
        );
    }

    #[test]
    fn prohibition_propagates_upward() {
        let mut b = PolicyBuilder::new();
        b.principal("p1", "P1", "").category("rn").category("aprn").action("create").resource("prescription");
        b.edge("aprn", "rn").pca("p1", "rn").barca("aprn", "create", "prescription");
        let policy = b.build().unwrap();
        assert_eq!(
            axiom_par(&BaseRelations::from_policy(&policy)),
            BTreeSet::from([t("p1", "create", "prescription", Sign::Deny)])
        );
    }

    #[test]
    fn conflict_follows_priority() {
        let mut b = PolicyBuilder::new();
        b.principal("p1", "P1", "").category("c").action("read").resource("r");
        b.pca("p1", "c").arca("c", "read", "r").barca("c", "read", "r");
        let policy = b.build().unwrap();
        let base = BaseRelations::from_policy(&policy);
        let decide = |p| decide(&base, &policy.registry, "p1", "read", "r", p).unwrap();
        assert_eq!(decide(Priority::Permissions), Answer::Grant);
        assert_eq!(decide(Priority::Prohibitions), Answer::Deny);
        assert_eq!(
            axiom_par(&resolve_conflicts(&base, Priority::Permissions)),
            BTreeSet::from([t("p1", "read", "r", Sign::Grant)])
        );
        assert_eq!(
            axiom_par(&resolve_conflicts(&base, Priority::Prohibitions)),
            BTreeSet::from([t("p1", "read", "r", Sign::Deny)])
        );
        // inputs untouched
        assert_eq!(base.barcas.len(), 1);
        assert_eq!(base.arcas.len(), 1);
    }

    #[test]
    fn conflicts_only_along_the_hierarchy() {
        // Arca on a child does not cancel a Barca on its parent
        let mut b = PolicyBuilder::new();
        b.principal("p1", "P1", "").category("parent").category("child").action("read").resource("r");
        b.edge("child", "parent").pca("p1", "child").pca("p1", "parent");
        b.arca("child", "read", "r").barca("parent", "read", "r");
        let policy = b.build().unwrap();
        let base = BaseRelations::from_policy(&policy);
        let resolved = resolve_conflicts(&base, Priority::Permissions);
        assert_eq!(resolved.barcas.len(), 1);
        assert_eq!(resolve_conflicts(&base, Priority::Prohibitions).arcas.len(), 1);
    }

    #[test]
    fn equivalence_holds_on_chain_and_empty() {
        let policy = chain_policy();
        for p in [Priority::Permissions, Priority::Prohibitions] {
            assert!(check_equivalence(&policy, &[], p).unwrap().is_ok());
        }
        let empty = PolicyBuilder::new().build().unwrap();
        assert!(check_equivalence(&empty, &[], Priority::Permissions).unwrap().is_ok());
    }

    #[test]
    fn disabling_the_conflict_rule_is_caught() {
        let mut b = PolicyBuilder::new();
        b.principal("p1", "P1", "").category("c").action("read").resource("r");
        b.pca("p1", "c").arca("c", "read", "r").barca("c", "read", "r");
        let policy = b.build().unwrap();
        let sources: Vec<_> = crate::engine::corpus::sources_for(Priority::Permissions)
            .into_iter()
            .filter(|(n, _)| *n != "conflicts-remove-barca")
            .collect();
        let engine = Engine::with_sources(&policy, &sources, &sources).unwrap();
        let report = check_equivalence_with(&engine, &policy, &[], Priority::Permissions).unwrap();
        assert!(!report.is_ok());
        assert_eq!(report.engine_only, BTreeSet::from([t("p1", "read", "r", Sign::Deny)]));
        assert!(report.to_string().contains("p1"));
    }
}
