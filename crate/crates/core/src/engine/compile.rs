//! Lowers parsed rules into a slot-addressed form the matcher can run
//! without string lookups.

use std::collections::HashMap;
use std::sync::Arc;

use super::value::{Seg, Value};
use super::EngineError;
use crate::model::*;
use crate::rulelang::*;

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(Value),
    /// Path on the fact the pattern is currently matching.
    Field(Vec<Seg>),
    Var { slot: usize, path: Vec<Seg> },
    BuildPermission(Box<CExpr>, Box<CExpr>),
    New { kind: NewKind, args: Vec<CExpr> },
}

#[derive(Debug, Clone)]
pub(crate) enum NewKind {
    Pca,
    Arca,
    Barca,
    Custom(String),
}

#[derive(Debug, Clone)]
pub(crate) enum CConstraint {
    Compare { field: Vec<Seg>, negate: bool, operand: CExpr },
    Bind { slot: usize, field: Vec<Seg> },
    Within(CExpr, CExpr),
}

#[derive(Debug, Clone)]
pub(crate) struct CPattern {
    pub kind: String,
    pub binding: Option<usize>,
    pub constraints: Vec<CConstraint>,
}

#[derive(Debug, Clone)]
pub(crate) enum CAction {
    Insert(CExpr),
    Delete(usize),
    CollectPar { principal: CExpr, sign: Sign, from: CExpr, to: CExpr, permission: CExpr },
}

/// A rule ready to run.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub ast: RuleAst,
    pub(crate) patterns: Vec<CPattern>,
    pub(crate) negated: Vec<CPattern>,
    pub(crate) actions: Vec<CAction>,
    /// Variable name per slot.
    pub(crate) slot_names: Arc<[String]>,
}

impl CompiledRule {
    pub fn name(&self) -> &str {
        &self.ast.name
    }

    pub fn salience(&self) -> i32 {
        self.ast.salience
    }
}

struct Compiler<'a> {
    schema: &'a Schema,
    rule: &'a str,
    slots: Vec<(String, ValueType)>,
}

impl Compiler<'_> {
    fn fail(&self, message: impl Into<String>) -> EngineError {
        EngineError::Compile { rule: self.rule.to_string(), message: message.into() }
    }

    fn slot(&self, name: &str) -> Result<(usize, ValueType), EngineError> {
        self.slots
            .iter()
            .rposition(|(n, _)| n == name)
            .map(|i| (i, self.slots[i].1.clone()))
            .ok_or_else(|| self.fail(format!("unbound variable {name}")))
    }

    fn new_slot(&mut self, name: &str, ty: ValueType) -> usize {
        self.slots.push((name.to_string(), ty));
        self.slots.len() - 1
    }

    fn seg(&self, ty: &ValueType, name: &str) -> Result<(Seg, ValueType), EngineError> {
        let next = self
            .schema
            .member(ty, name)
            .ok_or_else(|| self.fail(format!("{ty} has no field `{name}`")))?;
        let entity_seg = |name: &str| match name {
            "id" => Some(Seg::Id),
            "name" => Some(Seg::Name),
            "title" => Some(Seg::Title),
            _ => None,
        };
        let seg = match ty {
            ValueType::Entity(_) => entity_seg(name),
            ValueType::Permission => match name {
                "action" => Some(Seg::Action),
                "resource" => Some(Seg::Resource),
                _ => None,
            },
            ValueType::Fact(kind) => {
                let ks = self.schema.kind(kind).ok_or_else(|| self.fail(format!("unknown kind {kind}")))?;
                match &ks.fact {
                    FactKind::Entity(_) => entity_seg(name),
                    FactKind::Pca => match name {
                        "principal" => Some(Seg::Principal),
                        "category" => Some(Seg::Category),
                        _ => None,
                    },
                    FactKind::Arca | FactKind::Barca => match name {
                        "category" => Some(Seg::Category),
                        "permission" => Some(Seg::Permission),
                        _ => None,
                    },
                    FactKind::Custom(_) => ks.field(name).map(|(i, _)| Seg::Param(i)),
                }
            }
            ValueType::Str | ValueType::Bool => None,
        };
        seg.map(|s| (s, next)).ok_or_else(|| self.fail(format!("{ty} has no field `{name}`")))
    }

    fn path(&self, mut ty: ValueType, path: &FieldPath) -> Result<(Vec<Seg>, ValueType), EngineError> {
        let mut segs = Vec::with_capacity(path.0.len());
        for name in &path.0 {
            let (s, next) = self.seg(&ty, name)?;
            segs.push(s);
            ty = next;
        }
        Ok((segs, ty))
    }

    fn expr(&self, e: &Expr, current: Option<&ValueType>) -> Result<CExpr, EngineError> {
        Ok(match e {
            Expr::Literal(Literal::Str(s)) => CExpr::Const(Value::Str(s.clone())),
            Expr::Literal(Literal::Bool(b)) => CExpr::Const(Value::Bool(*b)),
            Expr::Field(p) => {
                let ty = current.ok_or_else(|| self.fail("field access outside a pattern"))?;
                CExpr::Field(self.path(ty.clone(), p)?.0)
            }
            Expr::Var { name, path } => {
                let (slot, ty) = self.slot(name)?;
                CExpr::Var { slot, path: self.path(ty, path)?.0 }
            }
            Expr::CategoryById(c) => {
                let id = EntityId::new(c).map_err(|e| self.fail(e.to_string()))?;
                CExpr::Const(Value::Entity(EntityRef::new(EntityKind::Category, id)))
            }
            Expr::BuildPermission(a, r) => {
                CExpr::BuildPermission(Box::new(self.expr(a, current)?), Box::new(self.expr(r, current)?))
            }
            Expr::New { kind, args } => {
                let ks = self.schema.kind(kind).ok_or_else(|| self.fail(format!("unknown kind {kind}")))?;
                let kind = match &ks.fact {
                    FactKind::Pca => NewKind::Pca,
                    FactKind::Arca => NewKind::Arca,
                    FactKind::Barca => NewKind::Barca,
                    FactKind::Custom(f) => NewKind::Custom(f.clone()),
                    FactKind::Entity(_) => return Err(self.fail(format!("cannot construct {kind}"))),
                };
                let args = args.iter().map(|a| self.expr(a, current)).collect::<Result<_, _>>()?;
                CExpr::New { kind, args }
            }
        })
    }

    fn pattern(&mut self, p: &Pattern) -> Result<CPattern, EngineError> {
        let ks = self.schema.kind(&p.kind).ok_or_else(|| self.fail(format!("unknown kind {}", p.kind)))?;
        let current = ValueType::Fact(ks.name.clone());
        let mut constraints = Vec::with_capacity(p.constraints.len());
        for c in &p.constraints {
            constraints.push(match c {
                Constraint::FieldComparison { field, op, operand } => CConstraint::Compare {
                    field: self.path(current.clone(), field)?.0,
                    negate: *op == CmpOp::Ne,
                    operand: self.expr(operand, Some(&current))?,
                },
                Constraint::FieldBinding { var, field } => {
                    let (field, ty) = self.path(current.clone(), field)?;
                    CConstraint::Bind { slot: self.new_slot(var, ty), field }
                }
                Constraint::ContainsOrEquals(a, b) => {
                    CConstraint::Within(self.expr(a, Some(&current))?, self.expr(b, Some(&current))?)
                }
            });
        }
        let binding = p.binding.as_ref().map(|b| self.new_slot(b, ks.binding_type()));
        Ok(CPattern { kind: ks.name.clone(), binding, constraints })
    }

    fn action(&self, a: &ActionAst) -> Result<CAction, EngineError> {
        Ok(match a {
            ActionAst::Insert(e) => CAction::Insert(self.expr(e, None)?),
            ActionAst::Delete(v) => CAction::Delete(self.slot(v)?.0),
            ActionAst::CollectPar { principal, chain, from, to, permission } => CAction::CollectPar {
                principal: self.expr(principal, None)?,
                sign: match chain {
                    ChainKind::Permission => Sign::Grant,
                    ChainKind::Prohibition => Sign::Deny,
                },
                from: self.expr(from, None)?,
                to: self.expr(to, None)?,
                permission: self.expr(permission, None)?,
            },
        })
    }
}

pub(crate) fn compile_rule(ast: RuleAst, schema: &Schema) -> Result<CompiledRule, EngineError> {
    let mut c = Compiler { schema, rule: &ast.name, slots: Vec::new() };
    let patterns = ast.patterns.iter().map(|p| c.pattern(p)).collect::<Result<Vec<_>, _>>()?;
    let visible = c.slots.len();
    let mut negated = Vec::new();
    for p in &ast.negated_patterns {
        negated.push(c.pattern(p)?);
        // local to the negation: later patterns must not see these names
        let local: Vec<_> = c.slots.drain(visible..).collect();
        c.slots.extend(local.into_iter().map(|(_, ty)| (String::new(), ty)));
    }
    let actions = ast.actions.iter().map(|a| c.action(a)).collect::<Result<Vec<_>, _>>()?;
    let slot_names: Arc<[String]> = c.slots.into_iter().map(|(n, _)| n).collect();
    Ok(CompiledRule { patterns, negated, actions, slot_names, ast })
}

/// A compiled rule set with per-kind indexes for incremental matching.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
    schema: Schema,
    /// kind -> (rule, pattern position) for positive patterns
    pub(crate) positive: HashMap<String, Vec<(usize, usize)>>,
    /// kind -> rules with a negated pattern on it
    pub(crate) negative: HashMap<String, Vec<usize>>,
}

impl RuleSet {
    pub fn compile(asts: Vec<RuleAst>, schema: Schema) -> Result<Self, EngineError> {
        let mut rules: Vec<CompiledRule> = Vec::with_capacity(asts.len());
        for ast in asts {
            if rules.iter().any(|r| r.ast.name == ast.name) {
                return Err(EngineError::Compile { rule: ast.name, message: "duplicate rule name".into() });
            }
            rules.push(compile_rule(ast, &schema)?);
        }
        let mut positive: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut negative: HashMap<String, Vec<usize>> = HashMap::new();
        for (r, rule) in rules.iter().enumerate() {
            for (i, p) in rule.patterns.iter().enumerate() {
                positive.entry(p.kind.clone()).or_default().push((r, i));
            }
            for p in &rule.negated {
                let list = negative.entry(p.kind.clone()).or_default();
                if !list.contains(&r) {
                    list.push(r);
                }
            }
        }
        Ok(RuleSet { rules, schema, positive, negative })
    }

    /// Parses named sources in order and compiles them together.
    pub fn parse<'s>(sources: impl IntoIterator<Item = (&'s str, &'s str)>, schema: Schema) -> Result<Self, EngineError> {
        let mut asts = Vec::new();
        for (name, src) in sources {
            let parsed = parse_rules(src, &schema)
                .map_err(|error| EngineError::Parse { source_name: name.to_string(), error })?;
            asts.extend(parsed);
        }
        Self::compile(asts, schema)
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Kind name a fact is filed under, if the schema knows it.
    pub fn kind_of(&self, fact: &Fact) -> Option<&str> {
        match fact {
            Fact::Entity(e) => Some(e.kind.type_name()),
            Fact::Pca(_) => Some("Pca"),
            Fact::Arca(_) => Some("Arca"),
            Fact::Barca(_) => Some("Barca"),
            Fact::Custom(c) => self.schema.custom_kind(&c.fact).map(|k| k.name.as_str()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::corpus;

    #[test]
    fn slots_follow_binding_order() {
        let schema = corpus::standard_schema();
        let set = RuleSet::parse([("p", corpus::source("pars-permissions").unwrap())], schema).unwrap();
        let rule = &set.rules()[0];
        assert_eq!(&*rule.slot_names, &["$pid", "$principal", "$cid", "$category", "$pca", "$arca"]);
        assert_eq!(set.positive["Arca"], vec![(0, 3)]);
        assert!(set.negative.is_empty());
    }

    #[test]
    fn negated_slots_are_hidden_from_later_patterns() {
        let schema = corpus::standard_schema();
        let src = r#"rule "n" when
                       $p : Pca($c : category)
                       not Arca(category == $c, $perm : permission)
                     then delete($p); end"#;
        let set = RuleSet::parse([("n", src)], schema).unwrap();
        assert_eq!(&*set.rules()[0].slot_names, &["$c", "$p", ""]);
        assert_eq!(set.negative["Arca"], vec![0]);
    }

    #[test]
    fn duplicate_names_across_files() {
        let schema = corpus::standard_schema();
        let err = RuleSet::parse([("a", r#"rule "x" when then end"#), ("b", r#"rule "x" when then end"#)], schema)
            .unwrap_err();
        assert!(matches!(err, EngineError::Compile { .. }));
    }
}
