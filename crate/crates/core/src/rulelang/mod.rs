//! The production-rule language: `rule "name" [salience n] when ... then ... end`.
//!
//! Supported: patterns with `==`/`!=` field constraints, field bindings,
//! `categories.containsOrEquals` / `categories.getCategoryById`, negated
//! patterns (`not Kind(...)`), and the actions `insert`, `delete`, `update`
//! and `pars.add(new Par(...))`. Any other rule attribute is rejected.

mod ast;
mod lexer;
mod parser;
mod printer;
mod schema;

use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use parser::parse_rules;
pub use printer::print_rules;
pub use schema::{field_name_for_label, kind_name_for_fact, FactKind, KindSchema, Schema, SchemaError, ValueType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn at(token: &lexer::Token, kind: ParseErrorKind) -> Self {
        ParseError { line: token.line, column: token.column, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax { expected: Vec<String>, found: String },
    UnknownFactKind(String),
    UnboundVariable(String),
    DuplicateVariable(String),
    UnsupportedAttribute(String),
    InvalidField { ty: String, field: String },
    TypeMismatch(String),
    DuplicateRule(String),
    UnknownFunction(String),
    InvalidAction(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax { expected, found } if expected.is_empty() => write!(f, "syntax error: {found}"),
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "expected one of {}, found {found}", expected.join(", "))
            }
            ParseErrorKind::UnknownFactKind(k) => write!(f, "unknown fact kind `{k}`"),
            ParseErrorKind::UnboundVariable(v) => write!(f, "variable `{v}` is not bound"),
            ParseErrorKind::DuplicateVariable(v) => write!(f, "variable `{v}` is bound twice"),
            ParseErrorKind::UnsupportedAttribute(a) => write!(f, "unsupported rule attribute `{a}`"),
            ParseErrorKind::InvalidField { ty, field } => write!(f, "{ty} has no field `{field}`"),
            ParseErrorKind::TypeMismatch(m) => write!(f, "type mismatch: {m}"),
            ParseErrorKind::DuplicateRule(n) => write!(f, "duplicate rule name {n:?}"),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function `{n}`"),
            ParseErrorKind::InvalidAction(m) => write!(f, "invalid action: {m}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::corpus::{self, standard_schema};

    fn parse(src: &str) -> Result<Vec<RuleAst>, ParseError> {
        parse_rules(src, &standard_schema())
    }

    fn parse_one(src: &str) -> RuleAst {
        let mut rules = parse(src).unwrap();
        assert_eq!(rules.len(), 1);
        rules.pop().unwrap()
    }

    fn kind(src: &str) -> ParseErrorKind {
        parse(src).unwrap_err().kind
    }

    #[test]
    fn add_custom_pcas_listing() {
        let rule = parse_one(corpus::source("add-custom-pcas").unwrap());
        assert_eq!(rule.name, "Rule add customs Pcas");
        assert_eq!(rule.salience, 0);
        assert_eq!(rule.patterns.len(), 1);
        assert_eq!(rule.patterns[0].binding.as_deref(), Some("$pca"));
        assert_eq!(rule.patterns[0].kind, "SetPca");
        assert_eq!(
            rule.actions,
            vec![ActionAst::Insert(Expr::New {
                kind: "Pca".into(),
                args: vec![
                    Expr::Var { name: "$pca".into(), path: FieldPath::new(["principal"]) },
                    Expr::Var { name: "$pca".into(), path: FieldPath::new(["category"]) },
                ],
            })]
        );
    }

    #[test]
    fn pars_permissions_listing() {
        let rule = parse_one(corpus::source("pars-permissions").unwrap());
        assert_eq!(rule.salience, -100);
        assert_eq!(rule.patterns.len(), 4);
        assert!(matches!(
            &rule.actions[0],
            ActionAst::CollectPar { chain: ChainKind::Permission, .. }
        ));
        assert!(matches!(rule.patterns[3].constraints[0], Constraint::ContainsOrEquals(..)));
    }

    #[test]
    fn empty_lhs_is_allowed() {
        let rule = parse_one(r#"rule "x" when then end"#);
        assert_eq!(
            rule,
            RuleAst {
                name: "x".into(),
                salience: 0,
                patterns: vec![],
                negated_patterns: vec![],
                actions: vec![]
            }
        );
    }

    #[test]
    fn unsupported_attributes_are_rejected() {
        assert_eq!(
            kind(r#"rule "x" no-loop when then end"#),
            ParseErrorKind::UnsupportedAttribute("no-loop".into())
        );
        assert_eq!(
            kind("rule \"x\"\n  salience 5\n  agenda-group \"g\" when then end"),
            ParseErrorKind::UnsupportedAttribute("agenda-group".into())
        );
        assert!(matches!(kind(r#"rule "x" bogus when then end"#), ParseErrorKind::Syntax { .. }));
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse("rule \"x\"\nwhen\n  Nope()\nthen end").unwrap_err();
        assert_eq!((e.line, e.column), (3, 3));
        assert_eq!(e.kind, ParseErrorKind::UnknownFactKind("Nope".into()));

        let e = parse("rule \"x\" when\n  Pca(principal.id == $pid)\nthen end").unwrap_err();
        assert_eq!((e.line, e.column), (2, 23));
        assert_eq!(e.kind, ParseErrorKind::UnboundVariable("$pid".into()));

        let e = parse("rule \"x\" when Pca( then end").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax { .. }));
        assert!(e.to_string().starts_with("1:20:"));
    }

    #[test]
    fn static_checks() {
        assert_eq!(
            kind(r#"rule "x" when Pca(principal.nope == "a") then end"#),
            ParseErrorKind::InvalidField { ty: "Principal".into(), field: "nope".into() }
        );
        assert!(matches!(
            kind(r#"rule "x" when Pca(principal == "a") then end"#),
            ParseErrorKind::TypeMismatch(_)
        ));
        assert!(matches!(
            kind(r#"rule "x" when $p : Principal() then insert(new Pca($p, $p)); end"#),
            ParseErrorKind::TypeMismatch(_)
        ));
        assert!(matches!(
            kind(r#"rule "x" when $p : Principal($i : id) then delete($i); end"#),
            ParseErrorKind::InvalidAction(_)
        ));
        assert!(matches!(
            kind(r#"rule "x" when $p : Principal() then insert($p); end"#),
            ParseErrorKind::InvalidAction(_)
        ));
        assert_eq!(
            kind(r#"rule "x" when $a : Pca() $a : Arca() then end"#),
            ParseErrorKind::DuplicateVariable("$a".into())
        );
        assert_eq!(
            kind("rule \"x\" when then end\nrule \"x\" when then end"),
            ParseErrorKind::DuplicateRule("x".into())
        );
        assert_eq!(
            kind(r#"rule "x" when Pca(categories.isContainedBy(category.id, "a")) then end"#),
            ParseErrorKind::UnknownFunction("categories.isContainedBy".into())
        );
    }

    #[test]
    fn negated_pattern_bindings_stay_local() {
        let rule = parse_one(
            r#"rule "n" when
                 $p : Pca($c : category)
                 not Arca(category == $c, $perm : permission)
               then
                 delete($p);
               end"#,
        );
        assert_eq!(rule.negated_patterns.len(), 1);
        assert_eq!(
            kind(r#"rule "n" when not Arca($perm : permission) then insert(new Arca(categories.getCategoryById("a"), $perm)); end"#),
            ParseErrorKind::UnboundVariable("$perm".into())
        );
    }

    #[test]
    fn update_desugars_to_delete_and_insert() {
        let rule = parse_one(r#"rule "u" when $b : Barca() then update($b) end"#);
        assert_eq!(
            rule.actions,
            vec![
                ActionAst::Delete("$b".into()),
                ActionAst::Insert(Expr::Var { name: "$b".into(), path: FieldPath::default() }),
            ]
        );
    }

    #[test]
    fn boolean_aliases() {
        let a = parse_one(r#"rule "b" when CriticalState(criticalState == true) then end"#);
        let b = parse_one(r#"rule "b" when CriticalState(criticalState == Boolean.TRUE) then end"#);
        assert_eq!(a, b);
    }

    #[test]
    fn print_empty_and_default_salience() {
        assert_eq!(print_rules(&[]), "");
        let text = print_rules(&[parse_one(r#"rule "x" salience 0 when then end"#)]);
        assert!(!text.contains("salience"));
        let text = print_rules(&[parse_one(r#"rule "x" salience -7 when then end"#)]);
        assert!(text.contains("salience -7"));
    }

    #[test]
    fn sealed_listing_reaches_fixpoint_after_one_print() {
        let src = corpus::source("sealed-break-the-glass").unwrap();
        let parsed = parse(src).unwrap();
        assert_eq!(parsed[0].name, "Sealed resources");
        let printed = print_rules(&parsed);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(reparsed, parsed);
        assert_eq!(print_rules(&reparsed), printed);
    }

    #[test]
    fn corpus_round_trips() {
        for (name, src) in corpus::SOURCES {
            let parsed = parse(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            let printed = print_rules(&parsed);
            let reparsed = parse(&printed).unwrap_or_else(|e| panic!("{name} reprint: {e}\n{printed}"));
            assert_eq!(reparsed, parsed, "{name}");
        }
    }

    #[test]
    fn string_escapes_round_trip() {
        let rule = parse_one(r#"rule "say \"hi\"\t\\" when Category(id == "a\"b") then end"#);
        assert_eq!(rule.name, "say \"hi\"\t\\");
        let again = parse(&print_rules(std::slice::from_ref(&rule))).unwrap();
        assert_eq!(again, vec![rule]);
    }
}
