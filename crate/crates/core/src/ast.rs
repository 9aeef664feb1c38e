//! Abstract syntax for the guarded-command protocol language.

use std::fmt;

/// Byte/line span of a syntax element.
///
/// Spans never participate in AST equality, so a re-parsed pretty-printed
/// protocol compares equal to the original.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Span {
    pub fn join(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: self.line,
            col: self.col,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeExpr {
    Boolean,
    Enum(Vec<String>),
    /// `scalarset(size)`; `with_other` marks an abstracted agent domain that
    /// carries the extra environment value `o`.
    Scalarset {
        size: SizeExpr,
        with_other: bool,
    },
    Record(Vec<(String, TypeExpr)>),
    Array {
        index: Box<TypeExpr>,
        elem: Box<TypeExpr>,
    },
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SizeExpr {
    Lit(u32),
    Const(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub value: u32,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Designator {
    pub root: String,
    pub path: Vec<Access>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Access {
    Field(String),
    Index(Box<Expr>),
}

impl Designator {
    pub fn name(root: impl Into<String>) -> Self {
        Designator {
            root: root.into(),
            path: Vec::new(),
        }
    }

    pub fn is_plain(&self) -> bool {
        self.path.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quant {
    pub var: String,
    pub ty: String,
    pub body: Box<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Bool(bool),
    Null,
    /// The environment agent id `o` of an abstracted model.
    Other,
    Var(Designator),
    Eq(Box<Expr>, Box<Expr>),
    Ne(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Forall(Quant),
    Exists(Quant),
    /// `S = {}` over a boolean array.
    IsEmpty(Designator),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Designator::name(name))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::Eq(Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Not(Box::new(a))
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    /// Conjunction with the trivial cases folded away.
    pub fn and_simplified(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Bool(true), x) | (x, Expr::Bool(true)) => x,
            (Expr::Bool(false), _) | (_, Expr::Bool(false)) => Expr::Bool(false),
            (a, b) => Expr::and(a, b),
        }
    }

    pub fn or_simplified(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Bool(false), x) | (x, Expr::Bool(false)) => x,
            (Expr::Bool(true), _) | (_, Expr::Bool(true)) => Expr::Bool(true),
            (a, b) => Expr::or(a, b),
        }
    }

    pub fn not_simplified(a: Expr) -> Expr {
        match a {
            Expr::Bool(b) => Expr::Bool(!b),
            Expr::Not(inner) => *inner,
            other => Expr::not(other),
        }
    }

    /// Top-level conjuncts, flattened.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Leaves of the boolean structure: comparisons, quantifiers, emptiness
    /// tests and bare boolean designators.
    pub fn atoms(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Not(a) => walk(a, out),
                Expr::Bool(_) => {}
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Assign(Designator, Expr),
    /// `S := {e}` (or `S := {}`) over a boolean array.
    SetLit(Designator, Option<Expr>),
    For {
        var: String,
        ty: String,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then: Vec<Stmt>,
        otherwise: Vec<Stmt>,
    },
    Undefine(Designator),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub params: Vec<Param>,
    pub guard: Expr,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StartState {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantDecl {
    pub name: String,
    pub expr: Expr,
    pub span: Span,
}

/// A parsed protocol description.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProtocolDef {
    pub consts: Vec<ConstDecl>,
    pub types: Vec<TypeDecl>,
    pub vars: Vec<VarDecl>,
    pub rules: Vec<Rule>,
    pub startstates: Vec<StartState>,
    pub invariants: Vec<InvariantDecl>,
}

impl ProtocolDef {
    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn const_value(&self, name: &str) -> Option<u32> {
        self.consts.iter().find(|c| c.name == name).map(|c| c.value)
    }

    pub fn type_decl(&self, name: &str) -> Option<&TypeDecl> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn var_decl(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// The scalarset whose members are the protocol agents: the first
    /// declared scalarset type.
    pub fn agent_type(&self) -> Option<&TypeDecl> {
        self.types
            .iter()
            .find(|t| matches!(t.ty, TypeExpr::Scalarset { .. }))
    }

    pub fn agent_type_name(&self) -> Option<&str> {
        self.agent_type().map(|t| t.name.as_str())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::pretty::expr_to_string(self))
    }
}

impl fmt::Display for Designator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::pretty::designator_to_string(self))
    }
}

/// Replaces free occurrences of the index variable `var` by `with`.
pub fn subst_expr(e: &Expr, var: &str, with: &Expr) -> Expr {
    match e {
        Expr::Bool(_) | Expr::Null | Expr::Other => e.clone(),
        Expr::Var(d) => {
            if d.root == var && d.path.is_empty() {
                with.clone()
            } else {
                Expr::Var(subst_designator(d, var, with))
            }
        }
        Expr::Eq(a, b) => Expr::Eq(bx(subst_expr(a, var, with)), bx(subst_expr(b, var, with))),
        Expr::Ne(a, b) => Expr::Ne(bx(subst_expr(a, var, with)), bx(subst_expr(b, var, with))),
        Expr::Not(a) => Expr::Not(bx(subst_expr(a, var, with))),
        Expr::And(a, b) => Expr::And(bx(subst_expr(a, var, with)), bx(subst_expr(b, var, with))),
        Expr::Or(a, b) => Expr::Or(bx(subst_expr(a, var, with)), bx(subst_expr(b, var, with))),
        Expr::Implies(a, b) => {
            Expr::Implies(bx(subst_expr(a, var, with)), bx(subst_expr(b, var, with)))
        }
        Expr::Forall(q) => Expr::Forall(subst_quant(q, var, with)),
        Expr::Exists(q) => Expr::Exists(subst_quant(q, var, with)),
        Expr::IsEmpty(d) => Expr::IsEmpty(subst_designator(d, var, with)),
    }
}

fn subst_quant(q: &Quant, var: &str, with: &Expr) -> Quant {
    if q.var == var {
        return q.clone();
    }
    Quant {
        var: q.var.clone(),
        ty: q.ty.clone(),
        body: bx(subst_expr(&q.body, var, with)),
    }
}

pub fn subst_designator(d: &Designator, var: &str, with: &Expr) -> Designator {
    Designator {
        root: d.root.clone(),
        path: d
            .path
            .iter()
            .map(|a| match a {
                Access::Field(f) => Access::Field(f.clone()),
                Access::Index(e) => Access::Index(bx(subst_expr(e, var, with))),
            })
            .collect(),
    }
}

pub fn subst_stmts(body: &[Stmt], var: &str, with: &Expr) -> Vec<Stmt> {
    body.iter().map(|s| subst_stmt(s, var, with)).collect()
}

fn subst_stmt(s: &Stmt, var: &str, with: &Expr) -> Stmt {
    match s {
        Stmt::Assign(d, e) => {
            Stmt::Assign(subst_designator(d, var, with), subst_expr(e, var, with))
        }
        Stmt::SetLit(d, e) => Stmt::SetLit(
            subst_designator(d, var, with),
            e.as_ref().map(|e| subst_expr(e, var, with)),
        ),
        Stmt::For { var: v, ty, body } => {
            if v == var {
                s.clone()
            } else {
                Stmt::For {
                    var: v.clone(),
                    ty: ty.clone(),
                    body: subst_stmts(body, var, with),
                }
            }
        }
        Stmt::If {
            cond,
            then,
            otherwise,
        } => Stmt::If {
            cond: subst_expr(cond, var, with),
            then: subst_stmts(then, var, with),
            otherwise: subst_stmts(otherwise, var, with),
        },
        Stmt::Undefine(d) => Stmt::Undefine(subst_designator(d, var, with)),
    }
}

/// Whether `var` occurs free in `e`.
pub fn mentions_free(e: &Expr, var: &str) -> bool {
    match e {
        Expr::Bool(_) | Expr::Null | Expr::Other => false,
        Expr::Var(d) | Expr::IsEmpty(d) => designator_mentions(d, var),
        Expr::Eq(a, b)
        | Expr::Ne(a, b)
        | Expr::And(a, b)
        | Expr::Or(a, b)
        | Expr::Implies(a, b) => mentions_free(a, var) || mentions_free(b, var),
        Expr::Not(a) => mentions_free(a, var),
        Expr::Forall(q) | Expr::Exists(q) => q.var != var && mentions_free(&q.body, var),
    }
}

fn designator_mentions(d: &Designator, var: &str) -> bool {
    (d.root == var && d.path.is_empty())
        || d.path
            .iter()
            .any(|a| matches!(a, Access::Index(ix) if mentions_free(ix, var)))
}

/// Names bound by quantifiers anywhere inside `e`.
pub fn bound_names(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Forall(q) | Expr::Exists(q) => {
            out.push(q.var.clone());
            bound_names(&q.body, out);
        }
        Expr::Eq(a, b)
        | Expr::Ne(a, b)
        | Expr::And(a, b)
        | Expr::Or(a, b)
        | Expr::Implies(a, b) => {
            bound_names(a, out);
            bound_names(b, out);
        }
        Expr::Not(a) => bound_names(a, out),
        _ => {}
    }
}

/// Renames the binder `from` (and its bound occurrences) to `to`.
pub fn rename_binder(e: &Expr, from: &str, to: &str) -> Expr {
    let rename_q = |q: &Quant| {
        if q.var == from {
            Quant {
                var: to.to_string(),
                ty: q.ty.clone(),
                body: bx(subst_expr(
                    &rename_binder(&q.body, from, to),
                    from,
                    &Expr::var(to),
                )),
            }
        } else {
            Quant {
                var: q.var.clone(),
                ty: q.ty.clone(),
                body: bx(rename_binder(&q.body, from, to)),
            }
        }
    };
    match e {
        Expr::Forall(q) => Expr::Forall(rename_q(q)),
        Expr::Exists(q) => Expr::Exists(rename_q(q)),
        Expr::Eq(a, b) => Expr::Eq(
            bx(rename_binder(a, from, to)),
            bx(rename_binder(b, from, to)),
        ),
        Expr::Ne(a, b) => Expr::Ne(
            bx(rename_binder(a, from, to)),
            bx(rename_binder(b, from, to)),
        ),
        Expr::And(a, b) => Expr::And(
            bx(rename_binder(a, from, to)),
            bx(rename_binder(b, from, to)),
        ),
        Expr::Or(a, b) => Expr::Or(
            bx(rename_binder(a, from, to)),
            bx(rename_binder(b, from, to)),
        ),
        Expr::Implies(a, b) => Expr::Implies(
            bx(rename_binder(a, from, to)),
            bx(rename_binder(b, from, to)),
        ),
        Expr::Not(a) => Expr::Not(bx(rename_binder(a, from, to))),
        other => other.clone(),
    }
}

/// Rewrites `forall j : T do A[j] = false end` as `A = {}` (display and
/// abstraction output only).
pub fn resugar(e: &Expr) -> Expr {
    match e {
        Expr::Forall(q) => {
            if let Expr::Eq(lhs, rhs) = q.body.as_ref() {
                if let (Expr::Var(d), Expr::Bool(false)) = (lhs.as_ref(), rhs.as_ref()) {
                    if let [Access::Index(ix)] = d.path.as_slice() {
                        if **ix == Expr::var(&q.var) {
                            return Expr::IsEmpty(Designator::name(d.root.clone()));
                        }
                    }
                }
            }
            Expr::Forall(Quant {
                var: q.var.clone(),
                ty: q.ty.clone(),
                body: bx(resugar(&q.body)),
            })
        }
        Expr::Exists(q) => Expr::Exists(Quant {
            var: q.var.clone(),
            ty: q.ty.clone(),
            body: bx(resugar(&q.body)),
        }),
        Expr::Eq(a, b) => Expr::Eq(bx(resugar(a)), bx(resugar(b))),
        Expr::Ne(a, b) => Expr::Ne(bx(resugar(a)), bx(resugar(b))),
        Expr::And(a, b) => Expr::And(bx(resugar(a)), bx(resugar(b))),
        Expr::Or(a, b) => Expr::Or(bx(resugar(a)), bx(resugar(b))),
        Expr::Implies(a, b) => Expr::Implies(bx(resugar(a)), bx(resugar(b))),
        Expr::Not(a) => Expr::Not(bx(resugar(a))),
        other => other.clone(),
    }
}

fn bx<T>(t: T) -> Box<T> {
    Box::new(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_do_not_affect_equality() {
        let a = Span {
            start: 0,
            end: 4,
            line: 1,
            col: 1,
        };
        let b = Span {
            start: 9,
            end: 12,
            line: 3,
            col: 7,
        };
        assert_eq!(a, b);
    }

    #[test]
    fn subst_respects_shadowing() {
        let body = Expr::eq(Expr::var("i"), Expr::var("j"));
        let e = Expr::and(
            Expr::var("i"),
            Expr::Forall(Quant {
                var: "i".into(),
                ty: "NODE".into(),
                body: Box::new(body.clone()),
            }),
        );
        let out = subst_expr(&e, "i", &Expr::Other);
        match out {
            Expr::And(a, b) => {
                assert_eq!(*a, Expr::Other);
                assert_eq!(
                    *b,
                    Expr::Forall(Quant {
                        var: "i".into(),
                        ty: "NODE".into(),
                        body: Box::new(body)
                    })
                );
            }
            _ => panic!("shape changed"),
        }
    }

    #[test]
    fn resugar_empty_set() {
        let e = Expr::Forall(Quant {
            var: "j".into(),
            ty: "NODE".into(),
            body: Box::new(Expr::eq(
                Expr::Var(Designator {
                    root: "ShrSet".into(),
                    path: vec![Access::Index(Box::new(Expr::var("j")))],
                }),
                Expr::Bool(false),
            )),
        });
        assert_eq!(resugar(&e), Expr::IsEmpty(Designator::name("ShrSet")));
    }
}
