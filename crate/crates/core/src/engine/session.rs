use std::cmp::Reverse;
use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use indexmap::IndexSet;

use super::compile::{CAction, RuleSet};
use super::matcher::{eval, Match, MatchContext, Matcher, NaiveMatcher, Pin};
use super::memory::{Handle, WorkingMemory};
use super::value::Value;
use super::EngineError;
use crate::hierarchy::CategoryHierarchy;
use crate::model::*;

pub const DEFAULT_BUDGET: usize = 100_000;

/// How many recent rule names a budget error reports.
const TRACE_LEN: usize = 10;

/// Result collector handed to rules as a global. Appending never touches
/// working memory, so it cannot create activations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParSink {
    pars: IndexSet<Par>,
}

impl ParSink {
    /// Returns false if an equal Par was already collected.
    pub fn add(&mut self, par: Par) -> bool {
        self.pars.insert(par)
    }

    pub fn len(&self) -> usize {
        self.pars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pars.is_empty()
    }

    /// In collection order.
    pub fn iter(&self) -> impl Iterator<Item = &Par> {
        self.pars.iter()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FiringReport {
    pub fired_count: usize,
    /// Select-and-fire cycles, counting the final one that found the agenda
    /// empty.
    pub iterations: usize,
}

/// A rule instantiation waiting to fire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activation {
    pub rule: usize,
    pub rule_name: String,
    pub salience: i32,
    /// One handle per positive pattern, in pattern order.
    pub handles: Vec<Handle>,
    slots: Vec<Option<Value>>,
    names: Arc<[String]>,
}

impl Activation {
    pub fn binding(&self, var: &str) -> Option<&Value> {
        let i = self.names.iter().position(|n| n == var)?;
        self.slots[i].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct AgendaKey {
    salience: Reverse<i32>,
    rule: usize,
    /// handles sorted newest first; newer tuples fire first
    recency: Reverse<Vec<Handle>>,
    handles: Vec<Handle>,
}

/// A stateful forward-chaining session over one policy.
pub struct Session<'a, M: Matcher = NaiveMatcher> {
    rules: &'a RuleSet,
    registry: &'a Registry,
    hierarchy: &'a CategoryHierarchy,
    matcher: M,
    memory: WorkingMemory,
    agenda: BTreeMap<AgendaKey, Activation>,
    fired: HashSet<(usize, Vec<Handle>)>,
    /// Set after bulk seeding; the agenda is rebuilt before the next use.
    dirty: bool,
    pars: ParSink,
    budget: usize,
    recent: VecDeque<String>,
}

impl<'a> Session<'a, NaiveMatcher> {
    pub fn new(rules: &'a RuleSet, registry: &'a Registry, hierarchy: &'a CategoryHierarchy) -> Self {
        Session::with_matcher(rules, registry, hierarchy, NaiveMatcher)
    }
}

impl<'a, M: Matcher> Session<'a, M> {
    pub fn with_matcher(rules: &'a RuleSet, registry: &'a Registry, hierarchy: &'a CategoryHierarchy, matcher: M) -> Self {
        Session {
            rules,
            registry,
            hierarchy,
            matcher,
            memory: WorkingMemory::new(),
            agenda: BTreeMap::new(),
            fired: HashSet::new(),
            // rules with an empty left-hand side are active from the start
            dirty: true,
            pars: ParSink::default(),
            budget: DEFAULT_BUDGET,
            recent: VecDeque::new(),
        }
    }

    pub fn set_budget(&mut self, budget: usize) {
        self.budget = budget;
    }

    pub fn memory(&self) -> &WorkingMemory {
        &self.memory
    }

    pub fn pars(&self) -> &ParSink {
        &self.pars
    }

    pub fn pars_mut(&mut self) -> &mut ParSink {
        &mut self.pars
    }

    fn ctx(&self) -> MatchContext<'_> {
        MatchContext { memory: &self.memory, registry: self.registry, hierarchy: self.hierarchy }
    }

    fn check(&self, fact: &Fact) -> Result<String, EngineError> {
        if let Some(r) = fact.unresolved(self.registry) {
            return Err(EngineError::UnresolvedReference { kind: r.kind, id: r.id.to_string() });
        }
        self.rules
            .kind_of(fact)
            .map(str::to_string)
            .ok_or_else(|| EngineError::UnknownFact(format!("{fact:?}")))
    }

    /// Adds a fact and updates the agenda. Returns whether memory changed.
    pub fn insert_fact(&mut self, fact: Fact) -> Result<bool, EngineError> {
        let kind = self.check(&fact)?;
        let Some((handle, fact)) = self.memory.insert(fact, &kind) else {
            return Ok(false);
        };
        if !self.dirty {
            self.on_insert(&kind, handle, &fact);
        }
        Ok(true)
    }

    /// Adds many facts at once; the agenda is rebuilt lazily in one pass.
    pub fn insert_facts(&mut self, facts: impl IntoIterator<Item = Fact>) -> Result<usize, EngineError> {
        let mut added = 0;
        for fact in facts {
            let kind = self.check(&fact)?;
            if self.memory.insert(fact, &kind).is_some() {
                added += 1;
            }
        }
        self.dirty = true;
        Ok(added)
    }

    /// Removes the equal fact if present. Returns whether memory changed.
    pub fn delete_fact(&mut self, fact: &Fact) -> bool {
        let Some((handle, kind)) = self.memory.remove(fact) else {
            return false;
        };
        if !self.dirty {
            self.agenda.retain(|k, _| !k.handles.contains(&handle));
            if let Some(rules) = self.rules.negative.get(&*kind) {
                for &r in rules {
                    self.recompute_rule(r);
                }
            }
        }
        true
    }

    fn activation(&self, rule: usize, m: Match) -> (AgendaKey, Activation) {
        let compiled = &self.rules.rules()[rule];
        let mut recency = m.handles.clone();
        recency.sort_unstable_by(|a, b| b.cmp(a));
        let key = AgendaKey {
            salience: Reverse(compiled.salience()),
            rule,
            recency: Reverse(recency),
            handles: m.handles.clone(),
        };
        let act = Activation {
            rule,
            rule_name: compiled.name().to_string(),
            salience: compiled.salience(),
            handles: m.handles,
            slots: m.slots,
            names: compiled.slot_names.clone(),
        };
        (key, act)
    }

    fn matches(&self, rule: usize, pin: Option<Pin<'_>>) -> Vec<(AgendaKey, Activation)> {
        let mut found = Vec::new();
        self.matcher.join(&self.rules.rules()[rule], self.ctx(), pin, &mut |m| found.push(m));
        found
            .into_iter()
            .filter(|m| !self.fired.contains(&(rule, m.handles.clone())))
            .map(|m| self.activation(rule, m))
            .collect()
    }

    fn on_insert(&mut self, kind: &str, handle: Handle, fact: &Arc<Fact>) {
        let mut new = Vec::new();
        if let Some(positions) = self.rules.positive.get(kind) {
            for &(rule, position) in positions {
                if self.rules.rules()[rule].negated.iter().any(|p| p.kind == kind) {
                    continue; // recomputed in full below
                }
                new.extend(self.matches(rule, Some(Pin { position, handle, fact })));
            }
        }
        self.agenda.extend(new);
        if let Some(rules) = self.rules.negative.get(kind) {
            for &r in rules {
                self.recompute_rule(r);
            }
        }
    }

    fn recompute_rule(&mut self, rule: usize) {
        self.agenda.retain(|k, _| k.rule != rule);
        let found = self.matches(rule, None);
        self.agenda.extend(found);
    }

    fn rebuild(&mut self) {
        self.agenda.clear();
        for rule in 0..self.rules.len() {
            let found = self.matches(rule, None);
            self.agenda.extend(found);
        }
        self.dirty = false;
    }

    /// Recomputes every activation from scratch, ignoring the incremental
    /// agenda. Ordered by salience, then rule order, then recency.
    pub fn match_activations(&self) -> Vec<Activation> {
        let mut all: Vec<_> = (0..self.rules.len()).flat_map(|r| self.matches(r, None)).collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.dedup_by(|a, b| a.0 == b.0);
        all.into_iter().map(|(_, a)| a).collect()
    }

    /// The maintained agenda, in firing order.
    pub fn agenda(&mut self) -> Vec<Activation> {
        if self.dirty {
            self.rebuild();
        }
        self.agenda.values().cloned().collect()
    }

    /// Fires the highest-priority activation. `None` when quiescent.
    pub fn fire_next(&mut self) -> Result<Option<Activation>, EngineError> {
        if self.dirty {
            self.rebuild();
        }
        let Some((_, act)) = self.agenda.pop_first() else {
            return Ok(None);
        };
        self.fired.insert((act.rule, act.handles.clone()));
        if self.recent.len() == TRACE_LEN {
            self.recent.pop_front();
        }
        self.recent.push_back(act.rule_name.clone());
        self.execute(&act)?;
        Ok(Some(act))
    }

    pub fn fire_until_quiescent(&mut self) -> Result<FiringReport, EngineError> {
        let mut report = FiringReport::default();
        loop {
            report.iterations += 1;
            if self.dirty {
                self.rebuild();
            }
            if self.agenda.is_empty() {
                return Ok(report);
            }
            if report.fired_count >= self.budget {
                return Err(EngineError::BudgetExhausted {
                    budget: self.budget,
                    last_fired: self.recent.iter().cloned().collect(),
                });
            }
            self.fire_next()?;
            report.fired_count += 1;
        }
    }

    fn execute(&mut self, act: &Activation) -> Result<(), EngineError> {
        let rule = &self.rules.rules()[act.rule];
        let fail = |message: String| EngineError::Action { rule: act.rule_name.clone(), message };
        for action in &rule.actions {
            match action {
                CAction::Insert(expr) => {
                    let value = eval(expr, None, &act.slots, self.ctx());
                    let Some(Value::Fact(fact)) = value else {
                        return Err(fail("insert needs a fact".into()));
                    };
                    self.insert_fact((*fact).clone()).map_err(|e| fail(e.to_string()))?;
                }
                CAction::Delete(slot) => match &act.slots[*slot] {
                    Some(Value::Fact(f)) => {
                        self.delete_fact(f);
                    }
                    Some(Value::Entity(e)) => {
                        self.delete_fact(&Fact::Entity(e.clone()));
                    }
                    _ => return Err(fail("delete needs a bound fact".into())),
                },
                CAction::CollectPar { principal, sign, from, to, permission } => {
                    let ctx = self.ctx();
                    let principal = eval(principal, None, &act.slots, ctx).and_then(|v| v.as_id());
                    let from = eval(from, None, &act.slots, ctx).and_then(|v| v.as_id());
                    let to = eval(to, None, &act.slots, ctx).and_then(|v| v.as_id());
                    let permission = eval(permission, None, &act.slots, ctx);
                    let (Some(principal), Some(from), Some(to), Some(Value::Permission(permission))) =
                        (principal, from, to, permission)
                    else {
                        return Err(fail("malformed Par arguments".into()));
                    };
                    let chain = match sign {
                        Sign::Grant => self.hierarchy.permission_chain(&from, &to),
                        Sign::Deny => self.hierarchy.prohibition_chain(&from, &to),
                    }
                    .map_err(|e| fail(e.to_string()))?;
                    self.pars.add(Par { principal, chain, permission, sign: *sign });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::corpus;
    use crate::hierarchy::CategoryHierarchy;

    struct Fixture {
        registry: Registry,
        hierarchy: CategoryHierarchy,
    }

    fn fixture() -> Fixture {
        let mut registry = Registry::default();
        registry.principals.insert(id("p1"), Principal { id: id("p1"), name: "P1".into(), title: String::new() });
        for c in ["specialist", "resident", "intern", "clinician"] {
            registry.categories.insert(id(c), Category { id: id(c), name: c.into() });
        }
        registry.actions.insert(id("read"), Action { id: id("read"), name: "read".into() });
        registry.resources.insert(id("record"), Resource { id: id("record"), name: "record".into() });
        let hierarchy = CategoryHierarchy::new(
            registry.categories.keys().cloned(),
            [(id("specialist"), id("resident")), (id("resident"), id("intern"))],
        )
        .unwrap();
        Fixture { registry, hierarchy }
    }

    fn entities(reg: &Registry) -> Vec<Fact> {
        EntityKind::ALL
            .into_iter()
            .flat_map(|k| reg.ids(k).into_iter().map(move |i| Fact::Entity(EntityRef::new(k, i))))
            .collect()
    }

    fn rules(src: &str) -> RuleSet {
        RuleSet::parse([("t", src)], corpus::standard_schema()).unwrap()
    }

    fn corpus_rules(p: Priority) -> RuleSet {
        RuleSet::parse(corpus::sources_for(p), corpus::standard_schema()).unwrap()
    }

    fn read_record() -> Permission {
        Permission::new(id("read"), id("record"))
    }

    #[test]
    fn insert_and_delete_report_changes() {
        let f = fixture();
        let rs = rules("");
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        let pca = Fact::Pca(Pca::new(id("p1"), id("clinician")));
        assert_eq!(s.insert_fact(pca.clone()), Ok(true));
        assert_eq!(s.insert_fact(pca.clone()), Ok(false));
        let bad = Fact::Pca(Pca::new(id("p1"), id("nowhere")));
        assert_eq!(
            s.insert_fact(bad),
            Err(EngineError::UnresolvedReference { kind: EntityKind::Category, id: "nowhere".into() })
        );
        assert!(s.delete_fact(&pca));
        assert!(!s.delete_fact(&pca));
        assert_eq!(s.insert_fact(pca.clone()), Ok(true));
        assert!(s.memory().contains(&pca));
    }

    #[test]
    fn set_pca_yields_one_activation() {
        let f = fixture();
        let rs = rules(corpus::source("add-custom-pcas").unwrap());
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        let set_pca = CustomFactInstance {
            fact: "SET_PCA".into(),
            parameters: vec![
                ParamValue::Entity(EntityRef::new(EntityKind::Principal, id("p1"))),
                ParamValue::Entity(EntityRef::new(EntityKind::Category, id("clinician"))),
            ],
        };
        s.insert_fact(Fact::Custom(set_pca)).unwrap();
        let acts = s.match_activations();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].rule_name, "Rule add customs Pcas");
        s.fire_until_quiescent().unwrap();
        assert!(s.memory().contains(&Fact::Pca(Pca::new(id("p1"), id("clinician")))));
    }

    #[test]
    fn salience_orders_the_agenda() {
        let f = fixture();
        let rs = rules(
            r#"rule "low" salience -100 when Principal() then end
               rule "high" when Principal() then end"#,
        );
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        let names: Vec<_> = s.match_activations().into_iter().map(|a| a.rule_name).collect();
        assert_eq!(names, vec!["high", "low"]);
    }

    #[test]
    fn refraction_two_step_trace() {
        // step 1 fires "copy" on (p1, specialist); it inserts Pca(p1, intern),
        // which creates exactly one new activation. The fired tuple never
        // comes back.
        let f = fixture();
        let rs = rules(
            r#"rule "copy" when
                 $p : Pca(category.id == "specialist")
               then
                 insert(new Pca($p.principal, categories.getCategoryById("intern")));
               end
               rule "see" when Pca(category.id == "intern") then end"#,
        );
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("specialist")))).unwrap();
        let before = s.match_activations();
        assert_eq!(before.iter().map(|a| a.rule_name.as_str()).collect::<Vec<_>>(), vec!["copy"]);
        let fired = s.fire_next().unwrap().unwrap();
        assert_eq!(fired.rule_name, "copy");
        let after = s.match_activations();
        assert_eq!(after.iter().map(|a| a.rule_name.as_str()).collect::<Vec<_>>(), vec!["see"]);
        assert_eq!(s.agenda(), after);
        s.fire_next().unwrap();
        assert!(s.match_activations().is_empty());
        assert_eq!(s.fire_next().unwrap(), None);
    }

    #[test]
    fn reinsert_after_delete_fires_again() {
        let f = fixture();
        let rs = rules(r#"rule "r" when Pca() then end"#);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        let pca = Fact::Pca(Pca::new(id("p1"), id("intern")));
        s.insert_fact(pca.clone()).unwrap();
        assert_eq!(s.fire_until_quiescent().unwrap().fired_count, 1);
        s.delete_fact(&pca);
        s.insert_fact(pca).unwrap();
        assert_eq!(s.fire_until_quiescent().unwrap().fired_count, 1);
    }

    #[test]
    fn recency_breaks_ties_newest_first() {
        let f = fixture();
        let rs = rules(r#"rule "r" when $p : Pca() then end"#);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("intern")))).unwrap();
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("resident")))).unwrap();
        let acts = s.match_activations();
        assert_eq!(
            acts[0].binding("$p"),
            Some(&Value::Fact(Arc::new(Fact::Pca(Pca::new(id("p1"), id("resident"))))))
        );
    }

    #[test]
    fn empty_lhs_fires_once() {
        let f = fixture();
        let rs = rules(r#"rule "always" when then end"#);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        assert_eq!(s.fire_until_quiescent().unwrap().fired_count, 1);
        assert_eq!(s.fire_until_quiescent().unwrap().fired_count, 0);
    }

    #[test]
    fn chain_fixture_collects_inherited_par() {
        let f = fixture();
        let rs = corpus_rules(Priority::Permissions);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("specialist")))).unwrap();
        s.insert_fact(Fact::Arca(Arca::new(id("intern"), read_record()))).unwrap();
        s.fire_until_quiescent().unwrap();
        let pars: Vec<_> = s.pars().iter().cloned().collect();
        assert_eq!(
            pars,
            vec![Par {
                principal: id("p1"),
                chain: vec![id("specialist"), id("resident"), id("intern")],
                permission: read_record(),
                sign: Sign::Grant,
            }]
        );
    }

    #[test]
    fn empty_memory_fires_nothing() {
        let f = fixture();
        let rs = corpus_rules(Priority::Permissions);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        let report = s.fire_until_quiescent().unwrap();
        assert_eq!(report.fired_count, 0);
        assert!(s.pars().is_empty());
    }

    #[test]
    fn conflict_removes_barca_before_pars() {
        let f = fixture();
        let rs = corpus_rules(Priority::Permissions);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        s.insert_facts([
            Fact::Pca(Pca::new(id("p1"), id("intern"))),
            Fact::Arca(Arca::new(id("intern"), read_record())),
            Fact::Barca(Barca::new(id("intern"), read_record())),
        ])
        .unwrap();
        s.fire_until_quiescent().unwrap();
        let signs: Vec<_> = s.pars().iter().map(|p| p.sign).collect();
        assert_eq!(signs, vec![Sign::Grant]);
        assert!(!s.memory().contains(&Fact::Barca(Barca::new(id("intern"), read_record()))));
    }

    #[test]
    fn budget_exhaustion_names_recent_rules() {
        let f = fixture();
        // each firing deletes and re-inserts the same fact, a fresh tuple every time
        let rs = rules(r#"rule "spin" when $p : Pca() then update($p); end"#);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.set_budget(25);
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("intern")))).unwrap();
        match s.fire_until_quiescent() {
            Err(EngineError::BudgetExhausted { budget: 25, last_fired }) => {
                assert_eq!(last_fired, vec!["spin".to_string(); 10]);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn sink_appends_create_no_activations() {
        let f = fixture();
        let rs = corpus_rules(Priority::Permissions);
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_facts(entities(&f.registry)).unwrap();
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("specialist")))).unwrap();
        let before = s.agenda().len();
        s.pars_mut().add(Par {
            principal: id("p1"),
            chain: vec![id("specialist")],
            permission: read_record(),
            sign: Sign::Grant,
        });
        assert_eq!(s.agenda().len(), before);
        assert_eq!(s.match_activations().len(), before);
    }

    #[test]
    fn negation_tracks_inserts_and_deletes() {
        let f = fixture();
        let rs = rules(
            r#"rule "orphan" when
                 $p : Pca($c : category)
                 not Arca(category == $c)
               then end"#,
        );
        let mut s = Session::new(&rs, &f.registry, &f.hierarchy);
        s.insert_fact(Fact::Pca(Pca::new(id("p1"), id("intern")))).unwrap();
        assert_eq!(s.agenda().len(), 1);
        let arca = Fact::Arca(Arca::new(id("intern"), read_record()));
        s.insert_fact(arca.clone()).unwrap();
        assert_eq!(s.agenda().len(), 0);
        assert_eq!(s.match_activations().len(), 0);
        s.delete_fact(&arca);
        assert_eq!(s.agenda(), s.match_activations());
        assert_eq!(s.agenda().len(), 1);
    }
}
