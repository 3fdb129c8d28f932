use std::fmt;
use std::sync::Arc;

/// A parsed production rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleAst {
    pub name: String,
    pub salience: i32,
    pub patterns: Vec<Pattern>,
    /// Conditions that must match no fact (`not Kind(...)`).
    pub negated_patterns: Vec<Pattern>,
    pub actions: Vec<ActionAst>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub binding: Option<String>,
    pub kind: String,
    pub constraints: Vec<Constraint>,
}

/// Dotted member access, e.g. `permission.action.id`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FieldPath(pub Vec<String>);

impl FieldPath {
    pub fn new<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Self {
        FieldPath(segments.into_iter().map(Into::into).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Str(Arc<str>),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Literal(Literal),
    /// Field of the fact the enclosing pattern is matching.
    Field(FieldPath),
    /// Bound variable, optionally followed by member access.
    Var { name: String, path: FieldPath },
    /// `categories.getCategoryById("...")`
    CategoryById(String),
    /// `PermissionFactory.buildPermission(action, resource)`
    BuildPermission(Box<Expr>, Box<Expr>),
    /// `new Kind(args...)`, right-hand side only.
    New { kind: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    FieldComparison { field: FieldPath, op: CmpOp, operand: Expr },
    FieldBinding { var: String, field: FieldPath },
    /// `categories.containsOrEquals(a, b)`
    ContainsOrEquals(Expr, Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// `getPermissionChain`, yields a grant.
    Permission,
    /// `getProhibitionChain`, yields a deny.
    Prohibition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionAst {
    Insert(Expr),
    Delete(String),
    /// `pars.add(new Par(principal, categories.getXChain(from, to), permission))`
    CollectPar {
        principal: Expr,
        chain: ChainKind,
        from: Expr,
        to: Expr,
        permission: Expr,
    },
}
