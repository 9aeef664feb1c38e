//! Pretty-printer producing text the parser accepts back unchanged.

use std::fmt::Write;

use crate::ast::*;

const P_IMPLIES: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_NOT: u8 = 4;
const P_CMP: u8 = 5;
const P_ATOM: u8 = 6;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Implies(..) => P_IMPLIES,
        Expr::Or(..) => P_OR,
        Expr::And(..) => P_AND,
        Expr::Not(inner) if matches!(**inner, Expr::IsEmpty(_)) => P_CMP,
        Expr::Not(_) => P_NOT,
        Expr::Eq(..) | Expr::Ne(..) | Expr::IsEmpty(_) => P_CMP,
        _ => P_ATOM,
    }
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let p = prec(e);
    let paren = p < min;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Null => out.push_str("NULL"),
        Expr::Other => out.push('o'),
        Expr::Var(d) => write_designator(out, d),
        Expr::Eq(a, b) | Expr::Ne(a, b) => {
            write_expr(out, a, P_ATOM);
            out.push_str(if matches!(e, Expr::Eq(..)) {
                " = "
            } else {
                " != "
            });
            write_expr(out, b, P_ATOM);
        }
        Expr::IsEmpty(d) => {
            write_designator(out, d);
            out.push_str(" = {}");
        }
        Expr::Not(inner) => match inner.as_ref() {
            Expr::IsEmpty(d) => {
                write_designator(out, d);
                out.push_str(" != {}");
            }
            other => {
                out.push('!');
                let min = if prec(other) == P_NOT { P_NOT } else { P_ATOM };
                write_expr(out, other, min);
            }
        },
        Expr::And(a, b) => {
            write_expr(out, a, P_AND);
            out.push_str(" & ");
            write_expr(out, b, P_NOT);
        }
        Expr::Or(a, b) => {
            write_expr(out, a, P_OR);
            out.push_str(" | ");
            write_expr(out, b, P_AND);
        }
        Expr::Implies(a, b) => {
            write_expr(out, a, P_OR);
            out.push_str(" -> ");
            write_expr(out, b, P_IMPLIES);
        }
        Expr::Forall(q) | Expr::Exists(q) => {
            out.push_str(if matches!(e, Expr::Forall(_)) {
                "forall "
            } else {
                "exists "
            });
            let _ = write!(out, "{} : {} do ", q.var, q.ty);
            write_expr(out, &q.body, P_IMPLIES);
            out.push_str(" end");
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_designator(out: &mut String, d: &Designator) {
    out.push_str(&d.root);
    for a in &d.path {
        match a {
            Access::Field(f) => {
                out.push('.');
                out.push_str(f);
            }
            Access::Index(e) => {
                out.push('[');
                write_expr(out, e, P_IMPLIES);
                out.push(']');
            }
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, P_IMPLIES);
    s
}

pub fn designator_to_string(d: &Designator) -> String {
    let mut s = String::new();
    write_designator(&mut s, d);
    s
}

fn type_to_string(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Boolean => "boolean".into(),
        TypeExpr::Enum(m) => format!("enum {{{}}}", m.join(", ")),
        TypeExpr::Scalarset { size, with_other } => {
            let size = match size {
                SizeExpr::Lit(n) => n.to_string(),
                SizeExpr::Const(c) => c.clone(),
            };
            if *with_other {
                format!("scalarset({size}) with other")
            } else {
                format!("scalarset({size})")
            }
        }
        TypeExpr::Record(fields) => {
            let mut s = String::from("record");
            for (name, ty) in fields {
                let _ = write!(s, " {name} : {};", type_to_string(ty));
            }
            s.push_str(" end");
            s
        }
        TypeExpr::Array { index, elem } => {
            format!(
                "array [{}] of {}",
                type_to_string(index),
                type_to_string(elem)
            )
        }
        TypeExpr::Named(n) => n.clone(),
    }
}

fn write_stmts(out: &mut String, body: &[Stmt], indent: usize) {
    for s in body {
        write_stmt(out, s, indent);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Assign(d, e) => {
            let _ = writeln!(
                out,
                "{pad}{} := {};",
                designator_to_string(d),
                expr_to_string(e)
            );
        }
        Stmt::SetLit(d, e) => {
            let inner = e.as_ref().map(expr_to_string).unwrap_or_default();
            let _ = writeln!(out, "{pad}{} := {{{inner}}};", designator_to_string(d));
        }
        Stmt::Undefine(d) => {
            let _ = writeln!(out, "{pad}undefine {};", designator_to_string(d));
        }
        Stmt::For { var, ty, body } => {
            let _ = writeln!(out, "{pad}for {var} : {ty} do");
            write_stmts(out, body, indent + 1);
            let _ = writeln!(out, "{pad}end;");
        }
        Stmt::If {
            cond,
            then,
            otherwise,
        } => {
            let _ = writeln!(out, "{pad}if {} then", expr_to_string(cond));
            write_stmts(out, then, indent + 1);
            if !otherwise.is_empty() {
                let _ = writeln!(out, "{pad}else");
                write_stmts(out, otherwise, indent + 1);
            }
            let _ = writeln!(out, "{pad}end;");
        }
    }
}

fn params_to_string(params: &[Param]) -> String {
    params
        .iter()
        .map(|p| format!("{} : {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Renders a whole protocol in the input grammar.
pub fn pretty_print(p: &ProtocolDef) -> String {
    let mut out = String::new();
    out.push_str("const\n");
    for c in &p.consts {
        let _ = writeln!(out, "  {} : {};", c.name, c.value);
    }
    out.push_str("\ntype\n");
    for t in &p.types {
        let _ = writeln!(out, "  {} : {};", t.name, type_to_string(&t.ty));
    }
    out.push_str("\nvar\n");
    for v in &p.vars {
        let _ = writeln!(out, "  {} : {};", v.name, type_to_string(&v.ty));
    }
    for s in &p.startstates {
        out.push('\n');
        let name = if s.name.is_empty() {
            String::new()
        } else {
            format!(" \"{}\"", s.name)
        };
        if s.params.is_empty() {
            let _ = writeln!(out, "startstate{name}");
            write_stmts(&mut out, &s.body, 1);
            out.push_str("end;\n");
        } else {
            let _ = writeln!(
                out,
                "ruleset {} do startstate{name}",
                params_to_string(&s.params)
            );
            write_stmts(&mut out, &s.body, 1);
            out.push_str("end end;\n");
        }
    }
    for r in &p.rules {
        out.push('\n');
        let head = format!("rule \"{}\"", r.name);
        if r.params.is_empty() {
            let _ = writeln!(out, "{head}");
        } else {
            let _ = writeln!(out, "ruleset {} do {head}", params_to_string(&r.params));
        }
        let _ = writeln!(out, "  {}", expr_to_string(&r.guard));
        out.push_str("==>\n");
        write_stmts(&mut out, &r.body, 1);
        out.push_str(if r.params.is_empty() {
            "end;\n"
        } else {
            "end end;\n"
        });
    }
    for inv in &p.invariants {
        let _ = writeln!(
            out,
            "\ninvariant \"{}\"\n  {};",
            inv.name,
            expr_to_string(&inv.expr)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_protocol_syntax};

    fn roundtrip(src: &str) {
        let e = parse_expr(src).unwrap();
        let printed = expr_to_string(&e);
        assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
    }

    #[test]
    fn expression_roundtrips() {
        for src in [
            "a -> b -> c",
            "(a -> b) -> c",
            "a | (b | c)",
            "!(a & b) | !c",
            "!!a",
            "(a = b) = c",
            "S != {} & !(S = {})",
            "forall j : NODE do A[j] = false end -> x",
            "A[i = j].f = NULL",
            "CurPtr = o",
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn empty_protocol_prints_valid_text() {
        let text = pretty_print(&ProtocolDef::default());
        assert_eq!(
            parse_protocol_syntax(&text).unwrap(),
            ProtocolDef::default()
        );
    }
}
