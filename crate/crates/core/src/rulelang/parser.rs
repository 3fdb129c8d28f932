use std::collections::BTreeSet;
use std::sync::Arc;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::schema::{KindSchema, Schema, ValueType};
use super::{ParseError, ParseErrorKind};
use crate::model::EntityKind;

/// Attributes of the full rule language that this implementation refuses.
const UNSUPPORTED_ATTRIBUTES: [&str; 10] = [
    "no-loop",
    "ruleflow-group",
    "lock-on-active",
    "dialect",
    "agenda-group",
    "auto-focus",
    "activation-group",
    "date-effective",
    "date-expires",
    "duration",
];

/// Parses a rule file into ASTs in declaration order, checking every fact
/// kind, field path and variable against `schema`.
pub fn parse_rules(source: &str, schema: &Schema) -> Result<Vec<RuleAst>, ParseError> {
    let mut parser = Parser { toks: tokenize(source)?, pos: 0, schema };
    let mut rules = Vec::new();
    let mut names = BTreeSet::new();
    while parser.peek().tok != Tok::Eof {
        let at = parser.peek().clone();
        let rule = parser.rule()?;
        if !names.insert(rule.name.clone()) {
            return Err(ParseError::at(&at, ParseErrorKind::DuplicateRule(rule.name)));
        }
        rules.push(rule);
    }
    Ok(rules)
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    ty: ValueType,
    /// Bound to a whole matched fact (deletable) rather than a field.
    fact_binding: bool,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a Schema,
}

/// Where an expression appears; decides which forms are legal.
#[derive(Clone, Copy)]
enum Ctx<'k> {
    Pattern(&'k KindSchema),
    Action,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, expected: &[&str]) -> PResult<T> {
        let t = self.peek();
        Err(ParseError::at(
            t,
            ParseErrorKind::Syntax {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: t.tok.to_string(),
            },
        ))
    }

    fn expect(&mut self, tok: Tok, shown: &str) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            self.unexpected(&[shown])
        }
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w == word)
    }

    fn expect_word(&mut self, word: &str) -> PResult<Token> {
        if self.is_word(word) {
            Ok(self.bump())
        } else {
            self.unexpected(&[word])
        }
    }

    fn ident(&mut self, shown: &str) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(w) => {
                let w = w.clone();
                Ok((w, self.bump()))
            }
            _ => self.unexpected(&[shown]),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn rule(&mut self) -> PResult<RuleAst> {
        self.expect_word("rule")?;
        let name_tok = self.peek().clone();
        let name = match &name_tok.tok {
            Tok::Str(s) if !s.is_empty() => s.clone(),
            Tok::Str(_) => {
                return Err(ParseError::at(
                    &name_tok,
                    ParseErrorKind::Syntax { expected: vec!["non-empty rule name".into()], found: "\"\"".into() },
                ))
            }
            _ => return self.unexpected(&["rule name string"]),
        };
        self.bump();

        let mut salience = 0i32;
        while !self.is_word("when") {
            let at = self.peek().clone();
            let (word, _) = self.ident("when")?;
            if word == "salience" {
                let negative = self.eat(&Tok::Minus);
                let t = self.peek().clone();
                let Tok::Int(v) = t.tok else {
                    return self.unexpected(&["integer salience"]);
                };
                self.bump();
                let v = if negative { -v } else { v };
                salience = i32::try_from(v).map_err(|_| {
                    ParseError::at(&t, ParseErrorKind::TypeMismatch(format!("salience {v} out of range")))
                })?;
                continue;
            }
            // hyphenated attribute names arrive as ident (- ident)*
            let mut attr = word;
            while self.peek().tok == Tok::Minus && matches!(self.peek_at(1), Tok::Ident(_)) {
                self.bump();
                let (w, _) = self.ident("attribute name")?;
                attr.push('-');
                attr.push_str(&w);
            }
            if UNSUPPORTED_ATTRIBUTES.contains(&attr.as_str()) {
                return Err(ParseError::at(&at, ParseErrorKind::UnsupportedAttribute(attr)));
            }
            return Err(ParseError::at(
                &at,
                ParseErrorKind::Syntax { expected: vec!["salience".into(), "when".into()], found: format!("`{attr}`") },
            ));
        }
        self.expect_word("when")?;

        let mut scope: Vec<VarInfo> = Vec::new();
        let mut patterns = Vec::new();
        let mut negated_patterns = Vec::new();
        while !self.is_word("then") {
            if self.peek().tok == Tok::Eof {
                return self.unexpected(&["pattern", "then"]);
            }
            if self.is_word("not") {
                self.bump();
                // bindings inside a negation stay local to it
                let mut local = scope.clone();
                negated_patterns.push(self.pattern(&mut local, true)?);
            } else {
                patterns.push(self.pattern(&mut scope, false)?);
            }
        }
        self.expect_word("then")?;

        let mut actions = Vec::new();
        while !self.is_word("end") {
            if self.peek().tok == Tok::Eof {
                return self.unexpected(&["action", "end"]);
            }
            actions.extend(self.action(&scope)?);
        }
        self.expect_word("end")?;

        Ok(RuleAst { name, salience, patterns, negated_patterns, actions })
    }

    fn bind(&self, scope: &mut Vec<VarInfo>, at: &Token, var: VarInfo) -> PResult<()> {
        if scope.iter().any(|v| v.name == var.name) {
            return Err(ParseError::at(at, ParseErrorKind::DuplicateVariable(var.name)));
        }
        scope.push(var);
        Ok(())
    }

    fn pattern(&mut self, scope: &mut Vec<VarInfo>, negated: bool) -> PResult<Pattern> {
        let mut binding = None;
        let bind_tok = self.peek().clone();
        if let Tok::Var(v) = &bind_tok.tok {
            if *self.peek_at(1) == Tok::Colon {
                if negated {
                    return Err(ParseError::at(
                        &bind_tok,
                        ParseErrorKind::InvalidAction("a negated pattern cannot be bound".into()),
                    ));
                }
                binding = Some(v.clone());
                self.bump();
                self.bump();
            }
        }
        let (kind, kind_tok) = self.ident("fact kind")?;
        let schema = self.schema;
        let kind_schema = schema
            .kind(&kind)
            .ok_or_else(|| ParseError::at(&kind_tok, ParseErrorKind::UnknownFactKind(kind.clone())))?;
        self.expect(Tok::LParen, "(")?;
        let mut constraints = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                constraints.push(self.constraint(kind_schema, scope)?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, ")")?;
        if let Some(name) = &binding {
            self.bind(
                scope,
                &bind_tok,
                VarInfo { name: name.clone(), ty: kind_schema.binding_type(), fact_binding: true },
            )?;
        }
        Ok(Pattern { binding, kind, constraints })
    }

    fn constraint(&mut self, kind: &KindSchema, scope: &mut Vec<VarInfo>) -> PResult<Constraint> {
        let start = self.peek().clone();
        if let Tok::Var(var) = &start.tok {
            if *self.peek_at(1) == Tok::Colon {
                let var = var.clone();
                self.bump();
                self.bump();
                let (field, ty) = self.field_path(kind)?;
                self.bind(scope, &start, VarInfo { name: var.clone(), ty, fact_binding: false })?;
                return Ok(Constraint::FieldBinding { var, field });
            }
        }
        if self.is_word("categories") && *self.peek_at(1) == Tok::Dot {
            if matches!(self.peek_at(2), Tok::Ident(f) if f == "containsOrEquals") {
                self.bump();
                self.bump();
                self.bump();
                let (a, b) = self.category_args(Ctx::Pattern(kind), scope)?;
                return Ok(Constraint::ContainsOrEquals(a, b));
            }
            if let Tok::Ident(f) = self.peek_at(2).clone() {
                let ftok = self.toks[(self.pos + 2).min(self.toks.len() - 1)].clone();
                return Err(ParseError::at(&ftok, ParseErrorKind::UnknownFunction(format!("categories.{f}"))));
            }
        }
        if !matches!(&start.tok, Tok::Ident(w) if !matches!(w.as_str(), "when" | "then" | "end")) {
            return self.unexpected(&["field binding", "field path", "categories.containsOrEquals"]);
        }
        let (field, left_ty) = self.field_path(kind)?;
        let op_tok = self.peek().clone();
        let op = match op_tok.tok {
            Tok::EqEq => CmpOp::Eq,
            Tok::NotEq => CmpOp::Ne,
            _ => return self.unexpected(&["==", "!="]),
        };
        self.bump();
        let (operand, right_ty) = self.expr(Ctx::Pattern(kind), scope)?;
        if left_ty != right_ty {
            return Err(ParseError::at(
                &op_tok,
                ParseErrorKind::TypeMismatch(format!("cannot compare {left_ty} `{field}` with {right_ty}")),
            ));
        }
        Ok(Constraint::FieldComparison { field, op, operand })
    }

    /// `( expr , expr )` where both sides denote categories.
    fn category_args(&mut self, ctx: Ctx<'_>, scope: &[VarInfo]) -> PResult<(Expr, Expr)> {
        self.expect(Tok::LParen, "(")?;
        let a = self.category_expr(ctx, scope)?;
        self.expect(Tok::Comma, ",")?;
        let b = self.category_expr(ctx, scope)?;
        self.expect(Tok::RParen, ")")?;
        Ok((a, b))
    }

    fn category_expr(&mut self, ctx: Ctx<'_>, scope: &[VarInfo]) -> PResult<Expr> {
        let at = self.peek().clone();
        let (e, ty) = self.expr(ctx, scope)?;
        match ty {
            ValueType::Str | ValueType::Entity(EntityKind::Category) => Ok(e),
            other => Err(ParseError::at(
                &at,
                ParseErrorKind::TypeMismatch(format!("expected a category id, found {other}")),
            )),
        }
    }

    /// Member path, accepting `getX()` getters as sugar for `x`.
    fn path_segments(&mut self, mut segments: Vec<String>) -> PResult<FieldPath> {
        while self.peek().tok == Tok::Dot {
            self.bump();
            let (seg, _) = self.ident("field name")?;
            let getter = seg.len() > 3
                && seg.starts_with("get")
                && seg[3..].starts_with(|c: char| c.is_ascii_uppercase())
                && *self.peek_at(0) == Tok::LParen
                && *self.peek_at(1) == Tok::RParen;
            if getter {
                self.bump();
                self.bump();
                let rest = &seg[3..];
                segments.push(rest[..1].to_ascii_lowercase() + &rest[1..]);
            } else {
                segments.push(seg);
            }
        }
        Ok(FieldPath(segments))
    }

    fn resolve_path(&self, at: &Token, base: ValueType, path: &FieldPath) -> PResult<ValueType> {
        let mut ty = base;
        for seg in &path.0 {
            ty = self.schema.member(&ty, seg).ok_or_else(|| {
                ParseError::at(at, ParseErrorKind::InvalidField { ty: ty.to_string(), field: seg.clone() })
            })?;
        }
        Ok(ty)
    }

    fn field_path(&mut self, kind: &KindSchema) -> PResult<(FieldPath, ValueType)> {
        let at = self.peek().clone();
        let (first, _) = self.ident("field name")?;
        let path = self.path_segments(vec![first])?;
        let ty = self.resolve_path(&at, ValueType::Fact(kind.name.clone()), &path)?;
        Ok((path, ty))
    }

    fn lookup(&self, scope: &[VarInfo], at: &Token, name: &str) -> PResult<VarInfo> {
        scope
            .iter()
            .find(|v| v.name == name)
            .cloned()
            .ok_or_else(|| ParseError::at(at, ParseErrorKind::UnboundVariable(name.to_string())))
    }

    fn expr(&mut self, ctx: Ctx<'_>, scope: &[VarInfo]) -> PResult<(Expr, ValueType)> {
        let at = self.peek().clone();
        match at.tok.clone() {
            Tok::Str(s) => {
                self.bump();
                Ok((Expr::Literal(Literal::Str(Arc::from(s.as_str()))), ValueType::Str))
            }
            Tok::Var(name) => {
                self.bump();
                let var = self.lookup(scope, &at, &name)?;
                let path = self.path_segments(Vec::new())?;
                let ty = self.resolve_path(&at, var.ty, &path)?;
                Ok((Expr::Var { name, path }, ty))
            }
            Tok::Ident(word) => match word.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok((Expr::Literal(Literal::Bool(word == "true")), ValueType::Bool))
                }
                "Boolean" if *self.peek_at(1) == Tok::Dot => {
                    self.bump();
                    self.bump();
                    let (v, _) = self.ident("TRUE or FALSE")?;
                    match v.as_str() {
                        "TRUE" => Ok((Expr::Literal(Literal::Bool(true)), ValueType::Bool)),
                        "FALSE" => Ok((Expr::Literal(Literal::Bool(false)), ValueType::Bool)),
                        _ => Err(ParseError::at(
                            &at,
                            ParseErrorKind::Syntax {
                                expected: vec!["TRUE".into(), "FALSE".into()],
                                found: format!("`{v}`"),
                            },
                        )),
                    }
                }
                "categories" if *self.peek_at(1) == Tok::Dot => {
                    self.bump();
                    self.bump();
                    let (f, ftok) = self.ident("function name")?;
                    if f != "getCategoryById" {
                        return Err(ParseError::at(&ftok, ParseErrorKind::UnknownFunction(format!("categories.{f}"))));
                    }
                    self.expect(Tok::LParen, "(")?;
                    let Tok::Str(cat) = self.peek().tok.clone() else {
                        return self.unexpected(&["category id string"]);
                    };
                    self.bump();
                    self.expect(Tok::RParen, ")")?;
                    Ok((Expr::CategoryById(cat), ValueType::Entity(EntityKind::Category)))
                }
                "PermissionFactory" if *self.peek_at(1) == Tok::Dot => {
                    self.bump();
                    self.bump();
                    let (f, ftok) = self.ident("function name")?;
                    if f != "buildPermission" {
                        return Err(ParseError::at(
                            &ftok,
                            ParseErrorKind::UnknownFunction(format!("PermissionFactory.{f}")),
                        ));
                    }
                    self.expect(Tok::LParen, "(")?;
                    let action = self.typed_expr(ctx, scope, &ValueType::Entity(EntityKind::Action))?;
                    self.expect(Tok::Comma, ",")?;
                    let resource = self.typed_expr(ctx, scope, &ValueType::Entity(EntityKind::Resource))?;
                    self.expect(Tok::RParen, ")")?;
                    Ok((Expr::BuildPermission(Box::new(action), Box::new(resource)), ValueType::Permission))
                }
                "new" => {
                    if !matches!(ctx, Ctx::Action) {
                        return Err(ParseError::at(
                            &at,
                            ParseErrorKind::InvalidAction("`new` is only allowed in actions".into()),
                        ));
                    }
                    self.bump();
                    let (kind, ktok) = self.ident("fact kind")?;
                    let schema = self.schema;
                    let ks = schema
                        .kind(&kind)
                        .ok_or_else(|| ParseError::at(&ktok, ParseErrorKind::UnknownFactKind(kind.clone())))?;
                    if !ks.constructible() {
                        return Err(ParseError::at(
                            &ktok,
                            ParseErrorKind::InvalidAction(format!("`{kind}` facts cannot be constructed")),
                        ));
                    }
                    self.expect(Tok::LParen, "(")?;
                    let mut args = Vec::new();
                    for (i, (_, fty)) in ks.fields.iter().enumerate() {
                        if i > 0 {
                            self.expect(Tok::Comma, ",")?;
                        }
                        args.push(self.typed_expr(ctx, scope, fty)?);
                    }
                    self.expect(Tok::RParen, ")")?;
                    Ok((Expr::New { kind: kind.clone(), args }, ValueType::Fact(kind)))
                }
                _ => match ctx {
                    Ctx::Pattern(kind) => {
                        let (path, ty) = self.field_path(kind)?;
                        Ok((Expr::Field(path), ty))
                    }
                    Ctx::Action => self.unexpected(&["variable", "literal", "new", "categories.getCategoryById"]),
                },
            },
            _ => self.unexpected(&["expression"]),
        }
    }

    fn typed_expr(&mut self, ctx: Ctx<'_>, scope: &[VarInfo], want: &ValueType) -> PResult<Expr> {
        let at = self.peek().clone();
        let (e, ty) = self.expr(ctx, scope)?;
        if &ty != want {
            return Err(ParseError::at(&at, ParseErrorKind::TypeMismatch(format!("expected {want}, found {ty}"))));
        }
        Ok(e)
    }

    fn fact_var(&mut self, scope: &[VarInfo]) -> PResult<(String, VarInfo)> {
        let at = self.peek().clone();
        let Tok::Var(name) = at.tok.clone() else {
            return self.unexpected(&["fact variable"]);
        };
        self.bump();
        let var = self.lookup(scope, &at, &name)?;
        if !var.fact_binding {
            return Err(ParseError::at(
                &at,
                ParseErrorKind::InvalidAction(format!("`{name}` is bound to a field, not a fact")),
            ));
        }
        Ok((name, var))
    }

    fn action(&mut self, scope: &[VarInfo]) -> PResult<Vec<ActionAst>> {
        let at = self.peek().clone();
        let (word, _) = self.ident("insert, delete, update or pars.add")?;
        let actions = match word.as_str() {
            "insert" => {
                self.expect(Tok::LParen, "(")?;
                let eat = self.peek().clone();
                let (e, ty) = self.expr(Ctx::Action, scope)?;
                let ok = match &ty {
                    ValueType::Fact(k) => self.schema.kind(k).is_some_and(|k| k.constructible()),
                    _ => false,
                };
                if !ok {
                    return Err(ParseError::at(
                        &eat,
                        ParseErrorKind::InvalidAction(format!("cannot insert a value of type {ty}")),
                    ));
                }
                self.expect(Tok::RParen, ")")?;
                vec![ActionAst::Insert(e)]
            }
            "delete" | "retract" => {
                self.expect(Tok::LParen, "(")?;
                let (name, _) = self.fact_var(scope)?;
                self.expect(Tok::RParen, ")")?;
                vec![ActionAst::Delete(name)]
            }
            "update" => {
                self.expect(Tok::LParen, "(")?;
                let vtok = self.peek().clone();
                let (name, var) = self.fact_var(scope)?;
                if !matches!(var.ty, ValueType::Fact(_)) {
                    return Err(ParseError::at(
                        &vtok,
                        ParseErrorKind::InvalidAction(format!("`{name}` is a base entity and cannot be updated")),
                    ));
                }
                self.expect(Tok::RParen, ")")?;
                // value semantics: an update is a delete followed by a re-insert
                vec![
                    ActionAst::Delete(name.clone()),
                    ActionAst::Insert(Expr::Var { name, path: FieldPath::default() }),
                ]
            }
            "pars" => {
                self.expect(Tok::Dot, ".")?;
                self.expect_word("add")?;
                self.expect(Tok::LParen, "(")?;
                self.expect_word("new")?;
                self.expect_word("Par")?;
                self.expect(Tok::LParen, "(")?;
                let principal = self.typed_expr(Ctx::Action, scope, &ValueType::Entity(EntityKind::Principal))?;
                self.expect(Tok::Comma, ",")?;
                self.expect_word("categories")?;
                self.expect(Tok::Dot, ".")?;
                let (f, ftok) = self.ident("getPermissionChain or getProhibitionChain")?;
                let chain = match f.as_str() {
                    "getPermissionChain" => ChainKind::Permission,
                    "getProhibitionChain" => ChainKind::Prohibition,
                    _ => {
                        return Err(ParseError::at(&ftok, ParseErrorKind::UnknownFunction(format!("categories.{f}"))))
                    }
                };
                let (from, to) = self.category_args(Ctx::Action, scope)?;
                self.expect(Tok::Comma, ",")?;
                let permission = self.typed_expr(Ctx::Action, scope, &ValueType::Permission)?;
                self.expect(Tok::RParen, ")")?;
                self.expect(Tok::RParen, ")")?;
                vec![ActionAst::CollectPar { principal, chain, from, to, permission }]
            }
            _ => {
                return Err(ParseError::at(
                    &at,
                    ParseErrorKind::Syntax {
                        expected: vec!["insert".into(), "delete".into(), "update".into(), "pars.add".into()],
                        found: format!("`{word}`"),
                    },
                ))
            }
        };
        self.eat(&Tok::Semi);
        Ok(actions)
    }
}
