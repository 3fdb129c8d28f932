//! Forward-chaining evaluation of a policy with the bundled rule corpus.
//!
//! A [`Session`] holds working memory, an agenda and a Par sink. Evaluating a
//! policy seeds a fresh session with the base entities and relations plus
//! the caller's custom facts, fires to quiescence and returns the collected
//! Pars along with the relations left in memory.

mod compile;
pub mod corpus;
mod matcher;
mod memory;
mod session;
mod value;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

pub use compile::{CompiledRule, RuleSet};
pub use matcher::{Match, MatchContext, Matcher, NaiveMatcher, Pin};
pub use memory::{Handle, WorkingMemory};
pub use session::{Activation, FiringReport, ParSink, Session, DEFAULT_BUDGET};
pub use value::{Seg, Value};

use crate::authz::BaseRelations;
use crate::config::{FactValueError, PolicyConfig};
use crate::hierarchy::CategoryHierarchy;
use crate::model::*;
use crate::rulelang::{ParseError, SchemaError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("rule file {source_name}: {error}")]
    Parse { source_name: String, error: ParseError },
    #[error("rule {rule:?}: {message}")]
    Compile { rule: String, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("unresolved {kind} reference `{id}`")]
    UnresolvedReference { kind: EntityKind, id: String },
    #[error("fact kind not known to the rules: {0}")]
    UnknownFact(String),
    #[error("custom fact {index}: {error}")]
    InvalidCustomFact { index: usize, error: FactValueError },
    #[error("rule {rule:?} failed: {message}")]
    Action { rule: String, message: String },
    #[error("no quiescence after {budget} firings; last rules fired: {}", .last_fired.join(", "))]
    BudgetExhausted { budget: usize, last_fired: Vec<String> },
}

/// Outcome of one evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub pars: BTreeSet<Par>,
    pub report: FiringReport,
    /// Relations in working memory at quiescence.
    pub pcas: BTreeSet<Pca>,
    pub arcas: BTreeSet<Arca>,
    pub barcas: BTreeSet<Barca>,
}

impl Evaluation {
    pub fn base_relations<'h>(&self, hierarchy: &'h CategoryHierarchy) -> BaseRelations<'h> {
        BaseRelations {
            pcas: self.pcas.clone(),
            arcas: self.arcas.clone(),
            barcas: self.barcas.clone(),
            hierarchy,
        }
    }
}

/// Compiled corpora for both priority settings, reusable across requests.
#[derive(Debug, Clone)]
pub struct Engine {
    permissions: Arc<RuleSet>,
    prohibitions: Arc<RuleSet>,
    budget: usize,
}

impl Engine {
    /// The bundled corpus, typed against the policy's custom facts.
    pub fn new(policy: &PolicyConfig) -> Result<Self, EngineError> {
        Self::with_sources(
            policy,
            &corpus::sources_for(Priority::Permissions),
            &corpus::sources_for(Priority::Prohibitions),
        )
    }

    /// Custom rule sources per priority setting.
    pub fn with_sources(
        policy: &PolicyConfig,
        permissions: &[(&str, &str)],
        prohibitions: &[(&str, &str)],
    ) -> Result<Self, EngineError> {
        let schema = corpus::schema_for(&policy.custom_facts)?;
        Ok(Engine {
            permissions: Arc::new(RuleSet::parse(permissions.iter().copied(), schema.clone())?),
            prohibitions: Arc::new(RuleSet::parse(prohibitions.iter().copied(), schema)?),
            budget: DEFAULT_BUDGET,
        })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn rules(&self, priority: Priority) -> &RuleSet {
        match priority {
            Priority::Permissions => &self.permissions,
            Priority::Prohibitions => &self.prohibitions,
        }
    }

    pub fn evaluate(
        &self,
        policy: &PolicyConfig,
        custom_facts: &[CustomFactInstance],
        priority: Priority,
    ) -> Result<Evaluation, EngineError> {
        policy
            .check_custom_facts(custom_facts)
            .map_err(|(index, error)| EngineError::InvalidCustomFact { index, error })?;
        let mut session = Session::new(self.rules(priority), &policy.registry, &policy.hierarchy);
        session.set_budget(self.budget);
        session.insert_facts(policy.base_facts())?;
        session.insert_facts(custom_facts.iter().cloned().map(Fact::Custom))?;
        let report = session.fire_until_quiescent()?;

        let mut eval = Evaluation {
            pars: session.pars().iter().cloned().collect(),
            report,
            pcas: BTreeSet::new(),
            arcas: BTreeSet::new(),
            barcas: BTreeSet::new(),
        };
        for (_, fact) in session.memory().iter() {
            match &**fact {
                Fact::Pca(p) => {
                    eval.pcas.insert(p.clone());
                }
                Fact::Arca(a) => {
                    eval.arcas.insert(a.clone());
                }
                Fact::Barca(b) => {
                    eval.barcas.insert(b.clone());
                }
                _ => {}
            }
        }
        Ok(eval)
    }
}

/// One-shot evaluation with the bundled corpus.
pub fn evaluate(
    policy: &PolicyConfig,
    custom_facts: &[CustomFactInstance],
    priority: Priority,
) -> Result<Evaluation, EngineError> {
    Engine::new(policy)?.evaluate(policy, custom_facts, priority)
}
