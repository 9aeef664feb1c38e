//! Static checks run at load time: typing, scoping and locality.

use indexmap::IndexMap;

use crate::ast::*;
use crate::diag::Diagnostics;
use crate::types::{ETy, Scope, Ty, TypeEnv};

/// Runs every static check on a parsed protocol.
pub fn check_protocol(def: &ProtocolDef) -> Result<(), Diagnostics> {
    let env = TypeEnv::new(def, None).map_err(|e| {
        let span = def
            .types
            .iter()
            .find(|t| t.name == e.decl)
            .map(|t| t.span)
            .or_else(|| def.vars.iter().find(|v| v.name == e.decl).map(|v| v.span))
            .unwrap_or_default();
        Diagnostics::single(e.message, span)
    })?;
    let mut diags = Vec::new();
    for s in &def.startstates {
        let res =
            params_scope(&env, &s.params).and_then(|scope| check_stmts(&env, &s.body, &scope));
        if let Err(m) = res {
            diags.extend(Diagnostics::single(format!("startstate \"{}\": {m}", s.name), s.span).0);
        }
    }
    for r in &def.rules {
        let res = params_scope(&env, &r.params).and_then(|scope| {
            env.expect_bool(&r.guard, &scope)?;
            check_stmts(&env, &r.body, &scope)
        });
        if let Err(m) = res {
            diags.extend(Diagnostics::single(format!("rule \"{}\": {m}", r.name), r.span).0);
        }
    }
    for inv in &def.invariants {
        if let Err(m) = env.expect_bool(&inv.expr, &Scope::default()) {
            diags.extend(
                Diagnostics::single(format!("invariant \"{}\": {m}", inv.name), inv.span).0,
            );
        }
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Diagnostics(diags))
    }
}

fn params_scope(env: &TypeEnv, params: &[Param]) -> Result<Scope, String> {
    let mut scope = Scope::default();
    for p in params {
        if scope.get(&p.name).is_some() {
            return Err(format!("parameter `{}` bound twice", p.name));
        }
        scope.push(&p.name, env.domain(&p.ty)?);
    }
    Ok(scope)
}

fn check_stmts(env: &TypeEnv, body: &[Stmt], scope: &Scope) -> Result<(), String> {
    for s in body {
        check_stmt(env, s, scope)?;
    }
    Ok(())
}

fn lvalue_ty(env: &TypeEnv, d: &Designator, scope: &Scope) -> Result<Ty, String> {
    if !env.vars.contains_key(&d.root) || (d.path.is_empty() && scope.get(&d.root).is_some()) {
        return Err(format!("`{}` is not an assignable variable", d.root));
    }
    match env.designator_ty(d, scope)? {
        ETy::T(t) => Ok(t),
        ETy::AnyScalar => Err(format!("`{d}` is not assignable")),
    }
}

fn check_stmt(env: &TypeEnv, s: &Stmt, scope: &Scope) -> Result<(), String> {
    match s {
        Stmt::Assign(d, e) => {
            let lt = lvalue_ty(env, d, scope)?;
            if !lt.is_leaf() {
                return Err(format!("assignment to non-scalar `{d}` is not in subset"));
            }
            let ok = match env.expr_ty(e, scope)? {
                ETy::T(rt) => rt.is_leaf() && leaf_compatible(&lt, &rt),
                ETy::AnyScalar => matches!(lt, Ty::Scalar { .. }),
            };
            if !ok {
                return Err(format!(
                    "cannot assign `{e}` to `{d}` of type {}",
                    lt.describe()
                ));
            }
            Ok(())
        }
        Stmt::SetLit(d, e) => {
            let lt = lvalue_ty(env, d, scope)?;
            let Ty::Array { index, elem, .. } = &lt else {
                return Err(format!("set literal assigned to non-array `{d}`"));
            };
            if **elem != Ty::Bool {
                return Err(format!("set literal assigned to non-boolean array `{d}`"));
            }
            if let Some(e) = e {
                let ok = match env.expr_ty(e, scope)? {
                    ETy::T(Ty::Scalar { name, .. }) => name == *index,
                    ETy::AnyScalar => true,
                    _ => false,
                };
                if !ok {
                    return Err(format!("set element `{e}` must have type {index}"));
                }
            }
            Ok(())
        }
        Stmt::Undefine(d) => lvalue_ty(env, d, scope).map(|_| ()),
        Stmt::For { var, ty, body } => {
            let mut inner = scope.clone();
            inner.push(var, env.domain(ty)?);
            check_stmts(env, body, &inner)
        }
        Stmt::If {
            cond,
            then,
            otherwise,
        } => {
            env.expect_bool(cond, scope)?;
            check_stmts(env, then, scope)?;
            check_stmts(env, otherwise, scope)
        }
    }
}

fn leaf_compatible(a: &Ty, b: &Ty) -> bool {
    match (a, b) {
        (Ty::Bool, Ty::Bool) => true,
        (Ty::Enum { name: x, .. }, Ty::Enum { name: y, .. }) => x == y,
        (Ty::Scalar { name: x, .. }, Ty::Scalar { name: y, .. }) => x == y,
        _ => false,
    }
}

/// Locality of each agent-indexed array: `true` when every access inside a
/// rule uses exactly that rule's own agent parameter.
pub fn classify_locality(def: &ProtocolDef) -> IndexMap<String, bool> {
    let Some(agent) = def.agent_type_name() else {
        return IndexMap::new();
    };
    let agent_arrays: Vec<&str> = def
        .vars
        .iter()
        .filter(|v| match &v.ty {
            TypeExpr::Array { index, .. } => match index.as_ref() {
                TypeExpr::Named(n) => n == agent,
                _ => false,
            },
            _ => false,
        })
        .map(|v| v.name.as_str())
        .collect();
    let mut local: IndexMap<String, bool> =
        agent_arrays.iter().map(|n| (n.to_string(), true)).collect();
    for r in &def.rules {
        let own = r
            .params
            .iter()
            .find(|p| p.ty == agent)
            .map(|p| p.name.as_str());
        let mut visit = |d: &Designator, whole: bool| {
            if let Some(flag) = local.get_mut(&d.root) {
                let ok = !whole
                    && matches!(d.path.first(), Some(Access::Index(ix))
                        if own.is_some_and(|p| **ix == Expr::var(p)));
                if !ok {
                    *flag = false;
                }
            }
        };
        walk_expr_designators(&r.guard, &mut visit);
        walk_stmt_designators(&r.body, &mut visit);
    }
    local
}

/// Calls `f(d, whole)` on every designator; `whole` marks uses of an entire
/// array (emptiness tests and set literals).
pub fn walk_expr_designators(e: &Expr, f: &mut impl FnMut(&Designator, bool)) {
    match e {
        Expr::Var(d) => walk_designator(d, false, f),
        Expr::IsEmpty(d) => walk_designator(d, true, f),
        Expr::Eq(a, b)
        | Expr::Ne(a, b)
        | Expr::And(a, b)
        | Expr::Or(a, b)
        | Expr::Implies(a, b) => {
            walk_expr_designators(a, f);
            walk_expr_designators(b, f);
        }
        Expr::Not(a) => walk_expr_designators(a, f),
        Expr::Forall(q) | Expr::Exists(q) => walk_expr_designators(&q.body, f),
        Expr::Bool(_) | Expr::Null | Expr::Other => {}
    }
}

fn walk_designator(d: &Designator, whole: bool, f: &mut impl FnMut(&Designator, bool)) {
    f(d, whole);
    for a in &d.path {
        if let Access::Index(ix) = a {
            walk_expr_designators(ix, f);
        }
    }
}

pub fn walk_stmt_designators(body: &[Stmt], f: &mut impl FnMut(&Designator, bool)) {
    for s in body {
        match s {
            Stmt::Assign(d, e) => {
                walk_designator(d, false, f);
                walk_expr_designators(e, f);
            }
            Stmt::SetLit(d, e) => {
                walk_designator(d, true, f);
                if let Some(e) = e {
                    walk_expr_designators(e, f);
                }
            }
            Stmt::Undefine(d) => walk_designator(d, false, f),
            Stmt::For { body, .. } => walk_stmt_designators(body, f),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                walk_expr_designators(cond, f);
                walk_stmt_designators(then, f);
                walk_stmt_designators(otherwise, f);
            }
        }
    }
}

/// Checks an invariant predicate: boolean, closed, and free of agent-local
/// variables.
pub fn check_global_pred(def: &ProtocolDef, e: &Expr) -> Result<(), String> {
    let env = TypeEnv::new(def, None).map_err(|e| e.message)?;
    env.expect_bool(e, &Scope::default())?;
    let locality = classify_locality(def);
    let mut bad = None;
    walk_expr_designators(e, &mut |d, _| {
        if locality.get(&d.root).copied().unwrap_or(false) && bad.is_none() {
            bad = Some(d.root.clone());
        }
    });
    match bad {
        Some(v) => Err(format!(
            "pred may only mention global variables, but `{v}` is agent-local"
        )),
        None => Ok(()),
    }
}

/// Checks an index-set predicate with the single free agent variable `var`.
pub fn check_index_pred(def: &ProtocolDef, var: &str, e: &Expr) -> Result<(), String> {
    let env = TypeEnv::new(def, None).map_err(|e| e.message)?;
    let agent = def
        .agent_type_name()
        .ok_or("protocol has no agent scalarset")?;
    let mut scope = Scope::default();
    scope.push(var, env.domain(agent)?);
    env.expect_bool(e, &scope)
}

/// Checks a lemma body with the free agent variable `var`.
pub fn check_lemma(def: &ProtocolDef, var: &str, e: &Expr) -> Result<(), String> {
    check_index_pred(def, var, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_protocol;

    const GERMAN: &str = include_str!("../../../corpus/german/model.proto.m");

    #[test]
    fn german_locality() {
        let p = parse_protocol(GERMAN).unwrap();
        let loc = classify_locality(&p);
        assert!(loc["Cache"]);
        assert!(loc["Chan1"]);
        assert!(loc["Chan2"]);
        assert!(loc["Chan3"]);
        assert!(!loc["ShrSet"]);
        assert!(!loc["InvSet"]);
    }

    #[test]
    fn type_errors_are_reported() {
        let src = "type B : boolean; E : enum {A, C}; var x : boolean; rule \"r\" x = A ==> end";
        let err = parse_protocol(src).unwrap_err();
        assert!(err.first().message.contains("different types"), "{err}");
        let src = "type N : scalarset(2); var a : array [N] of boolean; rule \"r\" a[i] ==> end";
        let err = parse_protocol(src).unwrap_err();
        assert!(
            err.first().message.contains("unknown identifier `i`"),
            "{err}"
        );
    }

    #[test]
    fn pred_rejects_locals_and_free_index() {
        let p = parse_protocol(GERMAN).unwrap();
        let e = crate::parser::parse_expr("Cache[i].State = I").unwrap();
        assert!(check_global_pred(&p, &e).is_err());
        let e = crate::parser::parse_expr("forall j : NODE do Cache[j].State = I end").unwrap();
        assert!(check_global_pred(&p, &e)
            .unwrap_err()
            .contains("agent-local"));
        let e = crate::parser::parse_expr("ShrSet = {} & CurCmd = Empty").unwrap();
        assert!(check_global_pred(&p, &e).is_ok());
    }
}
