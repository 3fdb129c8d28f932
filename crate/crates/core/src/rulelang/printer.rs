use std::fmt::Write;

use super::ast::*;

/// Canonical text for a rule list. Salience 0 is omitted; `update` has
/// already been desugared and prints as delete + insert.
pub fn print_rules(rules: &[RuleAst]) -> String {
    let mut out = String::new();
    for (i, rule) in rules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_rule(&mut out, rule);
    }
    out
}

fn print_rule(out: &mut String, rule: &RuleAst) {
    let _ = writeln!(out, "rule {}", quote(&rule.name));
    if rule.salience != 0 {
        let _ = writeln!(out, "    salience {}", rule.salience);
    }
    out.push_str("    when\n");
    for p in &rule.patterns {
        let _ = writeln!(out, "        {}", pattern(p));
    }
    for p in &rule.negated_patterns {
        let _ = writeln!(out, "        not {}", pattern(p));
    }
    out.push_str("    then\n");
    for a in &rule.actions {
        let _ = writeln!(out, "        {};", action(a));
    }
    out.push_str("end\n");
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn pattern(p: &Pattern) -> String {
    let constraints: Vec<String> = p.constraints.iter().map(constraint).collect();
    let body = format!("{}({})", p.kind, constraints.join(", "));
    match &p.binding {
        Some(b) => format!("{b} : {body}"),
        None => body,
    }
}

fn constraint(c: &Constraint) -> String {
    match c {
        Constraint::FieldComparison { field, op, operand } => {
            let op = match op {
                CmpOp::Eq => "==",
                CmpOp::Ne => "!=",
            };
            format!("{field} {op} {}", expr(operand))
        }
        Constraint::FieldBinding { var, field } => format!("{var} : {field}"),
        Constraint::ContainsOrEquals(a, b) => {
            format!("categories.containsOrEquals({}, {})", expr(a), expr(b))
        }
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Literal(Literal::Str(s)) => quote(s),
        Expr::Literal(Literal::Bool(true)) => "Boolean.TRUE".into(),
        Expr::Literal(Literal::Bool(false)) => "Boolean.FALSE".into(),
        Expr::Field(path) => path.to_string(),
        Expr::Var { name, path } if path.is_empty() => name.clone(),
        Expr::Var { name, path } => format!("{name}.{path}"),
        Expr::CategoryById(c) => format!("categories.getCategoryById({})", quote(c)),
        Expr::BuildPermission(a, r) => {
            format!("PermissionFactory.buildPermission({}, {})", expr(a), expr(r))
        }
        Expr::New { kind, args } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            format!("new {kind}({})", args.join(", "))
        }
    }
}

fn action(a: &ActionAst) -> String {
    match a {
        ActionAst::Insert(e) => format!("insert({})", expr(e)),
        ActionAst::Delete(v) => format!("delete({v})"),
        ActionAst::CollectPar { principal, chain, from, to, permission } => {
            let f = match chain {
                ChainKind::Permission => "getPermissionChain",
                ChainKind::Prohibition => "getProhibitionChain",
            };
            format!(
                "pars.add(new Par({}, categories.{f}({}, {}), {}))",
                expr(principal),
                expr(from),
                expr(to),
                expr(permission)
            )
        }
    }
}
