//! Pattern matching over working memory.

use std::sync::Arc;

use super::compile::{CConstraint, CExpr, CPattern, CompiledRule, NewKind};
use super::memory::{Handle, WorkingMemory};
use super::value::{follow, Value};
use crate::hierarchy::CategoryHierarchy;
use crate::model::*;

/// Read-only state a match runs against.
#[derive(Clone, Copy)]
pub struct MatchContext<'a> {
    pub memory: &'a WorkingMemory,
    pub registry: &'a Registry,
    pub hierarchy: &'a CategoryHierarchy,
}

/// Restricts one pattern position to a single fact; used to find only the
/// tuples a new fact takes part in.
#[derive(Clone)]
pub struct Pin<'f> {
    pub position: usize,
    pub handle: Handle,
    pub fact: &'f Arc<Fact>,
}

/// A satisfied tuple: the handle per positive pattern and the variable slots.
pub struct Match {
    pub handles: Vec<Handle>,
    pub slots: Vec<Option<Value>>,
}

pub trait Matcher {
    /// Calls `emit` for every tuple satisfying `rule`, optionally pinned.
    fn join(&self, rule: &CompiledRule, ctx: MatchContext<'_>, pin: Option<Pin<'_>>, emit: &mut dyn FnMut(Match));
}

/// Nested-loop join, checking each pattern's constraints as soon as it is
/// bound so failing prefixes are cut early.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveMatcher;

impl Matcher for NaiveMatcher {
    fn join(&self, rule: &CompiledRule, ctx: MatchContext<'_>, pin: Option<Pin<'_>>, emit: &mut dyn FnMut(Match)) {
        let mut slots = vec![None; rule.slot_names.len()];
        let mut handles = Vec::with_capacity(rule.patterns.len());
        walk(rule, ctx, pin.as_ref(), 0, &mut slots, &mut handles, emit);
    }
}

fn walk(
    rule: &CompiledRule,
    ctx: MatchContext<'_>,
    pin: Option<&Pin<'_>>,
    depth: usize,
    slots: &mut Vec<Option<Value>>,
    handles: &mut Vec<Handle>,
    emit: &mut dyn FnMut(Match),
) {
    if depth == rule.patterns.len() {
        let blocked = rule.negated.iter().any(|p| {
            ctx.memory.of_kind(&p.kind).any(|(_, f)| {
                let mut scratch = slots.clone();
                satisfies(p, f, &mut scratch, ctx)
            })
        });
        if !blocked {
            emit(Match { handles: handles.clone(), slots: slots.clone() });
        }
        return;
    }
    let pattern = &rule.patterns[depth];
    let mut try_fact = |handle: Handle, fact: &Arc<Fact>, slots: &mut Vec<Option<Value>>, handles: &mut Vec<Handle>| {
        let saved = slots.clone();
        if satisfies(pattern, fact, slots, ctx) {
            handles.push(handle);
            walk(rule, ctx, pin, depth + 1, slots, handles, emit);
            handles.pop();
        }
        *slots = saved;
    };
    match pin {
        Some(p) if p.position == depth => try_fact(p.handle, p.fact, slots, handles),
        _ => {
            for (h, f) in ctx.memory.of_kind(&pattern.kind) {
                try_fact(h, f, slots, handles);
            }
        }
    }
}

/// Checks one pattern against one fact, filling binding slots on success.
pub(crate) fn satisfies(p: &CPattern, fact: &Arc<Fact>, slots: &mut [Option<Value>], ctx: MatchContext<'_>) -> bool {
    let current = Value::of_fact(fact);
    for c in &p.constraints {
        let ok = match c {
            CConstraint::Compare { field, negate, operand } => {
                match (follow(current.clone(), field, ctx.registry), eval(operand, Some(&current), slots, ctx)) {
                    (Some(a), Some(b)) => (a == b) != *negate,
                    _ => false,
                }
            }
            CConstraint::Bind { slot, field } => match follow(current.clone(), field, ctx.registry) {
                Some(v) => {
                    slots[*slot] = Some(v);
                    true
                }
                None => false,
            },
            CConstraint::Within(a, b) => {
                let a = eval(a, Some(&current), slots, ctx).and_then(|v| v.as_id());
                let b = eval(b, Some(&current), slots, ctx).and_then(|v| v.as_id());
                match (a, b) {
                    (Some(a), Some(b)) => ctx.hierarchy.contains_or_equals(&a, &b).unwrap_or(false),
                    _ => false,
                }
            }
        };
        if !ok {
            return false;
        }
    }
    if let Some(slot) = p.binding {
        slots[slot] = Some(current);
    }
    true
}

/// Evaluates an expression; `None` when a path does not apply or a
/// constructor receives the wrong shape of value.
pub(crate) fn eval(e: &CExpr, current: Option<&Value>, slots: &[Option<Value>], ctx: MatchContext<'_>) -> Option<Value> {
    match e {
        CExpr::Const(v) => Some(v.clone()),
        CExpr::Field(path) => follow(current?.clone(), path, ctx.registry),
        CExpr::Var { slot, path } => follow(slots[*slot].clone()?, path, ctx.registry),
        CExpr::BuildPermission(a, r) => {
            match (eval(a, current, slots, ctx)?, eval(r, current, slots, ctx)?) {
                (Value::Entity(a), Value::Entity(r)) => Some(Value::Permission(Permission::new(a.id, r.id))),
                _ => None,
            }
        }
        CExpr::New { kind, args } => {
            let args: Vec<Value> = args.iter().map(|a| eval(a, current, slots, ctx)).collect::<Option<_>>()?;
            let fact = match (kind, args.as_slice()) {
                (NewKind::Pca, [Value::Entity(p), Value::Entity(c)]) => Fact::Pca(Pca::new(p.id.clone(), c.id.clone())),
                (NewKind::Arca, [Value::Entity(c), Value::Permission(p)]) => Fact::Arca(Arca::new(c.id.clone(), p.clone())),
                (NewKind::Barca, [Value::Entity(c), Value::Permission(p)]) => {
                    Fact::Barca(Barca::new(c.id.clone(), p.clone()))
                }
                (NewKind::Custom(fact), args) => Fact::Custom(CustomFactInstance {
                    fact: fact.clone(),
                    parameters: args
                        .iter()
                        .map(|v| match v {
                            Value::Bool(b) => Some(ParamValue::Bool(*b)),
                            Value::Entity(e) => Some(ParamValue::Entity(e.clone())),
                            Value::Str(s) => Some(ParamValue::Text(s.to_string())),
                            _ => None,
                        })
                        .collect::<Option<_>>()?,
                }),
                _ => return None,
            };
            Some(Value::Fact(Arc::new(fact)))
        }
    }
}
