//! Grounding: slot layout, rule instances and compiled guards/actions for a
//! fixed instance size.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::ast::*;
use crate::check::{check_protocol, classify_locality};
use crate::diag::Diagnostics;
use crate::state::{Layout, PackedState, State, UNDEF};
use crate::types::{ETy, Scope, Ty, TypeEnv};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("read of undefined slot `{0}`")]
    UndefinedRead(String),
    #[error("index into `{0}` is out of range")]
    IndexOutOfRange(String),
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum ModelError {
    #[error("static type error:\n{0}")]
    StaticType(Diagnostics),
    #[error("instance size must be at least 1")]
    ZeroSize,
    #[error("cannot ground: {0}")]
    Unsupported(String),
}

/// One ground variable slot.
#[derive(Clone, Debug)]
pub struct SlotInfo {
    /// Display path, e.g. `Cache[1].State`.
    pub name: String,
    /// Index of the declared variable.
    pub var: usize,
    pub ty: Ty,
    /// Array indices along the path as (scalarset, id).
    pub indices: Vec<(String, u32)>,
    /// Slot distance between consecutive ids at each index level.
    pub strides: Vec<u32>,
    /// Agent id when the variable is an agent-indexed array.
    pub agent: Option<u32>,
    /// The variable is classified agent-local.
    pub local: bool,
    /// The slot's type is the agent scalarset.
    pub pointer: bool,
}

/// A compiled ground expression over value codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GExpr {
    Const(u8),
    Read(u32),
    ReadDyn {
        base: u32,
        stride: u32,
        count: u32,
        idx: Box<GExpr>,
    },
    Eq(Box<GExpr>, Box<GExpr>),
    Ne(Box<GExpr>, Box<GExpr>),
    Not(Box<GExpr>),
    And(Vec<GExpr>),
    Or(Vec<GExpr>),
    Implies(Box<GExpr>, Box<GExpr>),
}

pub const FALSE: u8 = 1;
pub const TRUE: u8 = 2;

fn bool_code(b: bool) -> u8 {
    if b {
        TRUE
    } else {
        FALSE
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GLoc {
    Slot(u32),
    Dyn {
        base: u32,
        stride: u32,
        count: u32,
        idx: GExpr,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GStmt {
    Assign {
        target: GLoc,
        value: GExpr,
    },
    If {
        cond: GExpr,
        then: Vec<GStmt>,
        otherwise: Vec<GStmt>,
    },
}

/// A rule bound to concrete parameter values.
#[derive(Clone, Debug)]
pub struct RuleInstance {
    /// Index into the protocol's rule list.
    pub rule: usize,
    pub name: String,
    /// Printable parameter values.
    pub args: Vec<String>,
    /// Parameter bindings as (name, type, code).
    pub binding: Vec<(String, Ty, u8)>,
    /// Id of the first agent-typed parameter.
    pub agent: Option<u32>,
    pub guard: GExpr,
    pub action: Vec<GStmt>,
}

impl RuleInstance {
    pub fn label(&self) -> String {
        if self.args.is_empty() {
            self.name.clone()
        } else {
            format!("{}({})", self.name, self.args.join(","))
        }
    }
}

impl fmt::Display for RuleInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug)]
pub struct StartInstance {
    pub name: String,
    pub args: Vec<String>,
    pub action: Vec<GStmt>,
}

/// A protocol instantiated at a fixed agent count.
#[derive(Clone, Debug)]
pub struct GroundModel {
    pub def: Arc<ProtocolDef>,
    pub env: TypeEnv,
    pub n: u32,
    pub slots: Vec<SlotInfo>,
    pub layout: Layout,
    pub rules: Vec<RuleInstance>,
    pub starts: Vec<StartInstance>,
    pub invariants: Vec<(String, GExpr)>,
    var_base: IndexMap<String, u32>,
    init: State,
}

/// Number of leaf slots of a type.
pub fn leaves(t: &Ty) -> u32 {
    match t {
        Ty::Record(fields) => fields.iter().map(|(_, t)| leaves(t)).sum(),
        Ty::Array { size, elem, .. } => size * leaves(elem),
        _ => 1,
    }
}

/// Code of `null` for a scalarset leaf.
pub fn null_code(t: &Ty) -> Option<u8> {
    match t {
        Ty::Scalar { size, .. } => Some(*size as u8 + 1),
        _ => None,
    }
}

/// Code of the Other agent for a scalarset declared `with other`.
pub fn other_code(t: &Ty) -> Option<u8> {
    match t {
        Ty::Scalar {
            size, other: true, ..
        } => Some(*size as u8 + 2),
        _ => None,
    }
}

/// Largest value code a leaf can hold.
pub fn max_code(t: &Ty) -> u8 {
    t.leaf_domain() as u8
}

/// Formats a value code of a leaf type.
pub fn format_value(t: &Ty, v: u8) -> String {
    if v == UNDEF {
        return "undefined".into();
    }
    match t {
        Ty::Bool => (v == TRUE).to_string(),
        Ty::Enum { members, .. } => members
            .get(v as usize - 1)
            .cloned()
            .unwrap_or_else(|| format!("?{v}")),
        Ty::Scalar { size, .. } => {
            let size = *size as u8;
            if v <= size {
                v.to_string()
            } else if v == size + 1 {
                "NULL".into()
            } else {
                "o".into()
            }
        }
        _ => format!("?{v}"),
    }
}

/// Values a parameter or quantifier of this type ranges over.
pub fn domain_codes(t: &Ty) -> Vec<u8> {
    match t {
        Ty::Bool => vec![FALSE, TRUE],
        Ty::Enum { members, .. } => (1..=members.len() as u8).collect(),
        Ty::Scalar { size, .. } => (1..=*size as u8).collect(),
        _ => Vec::new(),
    }
}

struct Cx<'a> {
    env: &'a TypeEnv,
    var_base: &'a IndexMap<String, u32>,
    slots: &'a [SlotInfo],
    binds: Vec<(String, Ty, u8)>,
}

type CResult<T> = Result<T, String>;

impl Cx<'_> {
    fn scope(&self) -> Scope {
        let mut s = Scope::default();
        for (n, t, _) in &self.binds {
            s.push(n, t.clone());
        }
        s
    }

    fn bound(&self, name: &str) -> Option<(&Ty, u8)> {
        self.binds
            .iter()
            .rev()
            .find(|(n, _, _)| n == name)
            .map(|(_, t, v)| (t, *v))
    }

    /// Resolves a designator to a (possibly dynamic) base slot and its type.
    fn locate(&self, d: &Designator) -> CResult<(u32, Option<(u32, u32, GExpr)>, Ty)> {
        let mut base = *self
            .var_base
            .get(&d.root)
            .ok_or_else(|| format!("unknown variable `{}`", d.root))?;
        let mut ty = self.env.vars[&d.root].clone();
        let mut dynamic: Option<(u32, u32, GExpr)> = None;
        for a in &d.path {
            match (a, ty) {
                (Access::Field(f), Ty::Record(fields)) => {
                    let mut off = 0;
                    let mut found = None;
                    for (n, t) in fields {
                        if *n == *f {
                            found = Some(t);
                            break;
                        }
                        off += leaves(&t);
                    }
                    base += off;
                    ty = found.ok_or_else(|| format!("no field `{f}` in `{d}`"))?;
                }
                (Access::Index(ix), Ty::Array { size, elem, .. }) => {
                    let stride = leaves(&elem);
                    match self.value(ix, None)? {
                        GExpr::Const(c) => {
                            if c == 0 || c as u32 > size {
                                return Err(format!("index `{ix}` of `{d}` is out of range"));
                            }
                            base += (c as u32 - 1) * stride;
                        }
                        g => {
                            if dynamic.is_some() {
                                return Err(format!(
                                    "`{d}` has more than one state-dependent index"
                                ));
                            }
                            dynamic = Some((stride, size, g));
                        }
                    }
                    ty = *elem;
                }
                _ => return Err(format!("bad access path in `{d}`")),
            }
        }
        Ok((base, dynamic, ty))
    }

    fn leaf_ty(&self, e: &Expr) -> Option<Ty> {
        match self.env.expr_ty(e, &self.scope()) {
            Ok(ETy::T(t)) => Some(t),
            _ => None,
        }
    }

    /// Compiles a value-producing expression; `expect` types bare `NULL`
    /// and `o` literals.
    fn value(&self, e: &Expr, expect: Option<&Ty>) -> CResult<GExpr> {
        match e {
            Expr::Null => {
                let t = expect.ok_or("cannot type `NULL` here")?;
                null_code(t)
                    .map(GExpr::Const)
                    .ok_or_else(|| "`NULL` needs a scalarset".into())
            }
            Expr::Other => match expect {
                Some(t) => other_code(t).map(GExpr::Const).ok_or_else(|| {
                    format!("`o` used with {}, which has no Other value", t.describe())
                }),
                None => {
                    let agent = self.env.agent.as_ref().ok_or("`o` without an agent type")?;
                    other_code(&self.env.types[agent])
                        .map(GExpr::Const)
                        .ok_or_else(|| "`o` used but the agent type has no Other value".into())
                }
            },
            Expr::Var(d) if d.path.is_empty() && self.bound(&d.root).is_some() => {
                Ok(GExpr::Const(self.bound(&d.root).unwrap().1))
            }
            Expr::Var(d)
                if d.path.is_empty()
                    && !self.var_base.contains_key(&d.root)
                    && self.env.enum_members.contains_key(&d.root) =>
            {
                Ok(GExpr::Const(self.env.enum_members[&d.root].1 as u8 + 1))
            }
            Expr::Var(d) => {
                let (base, dynamic, ty) = self.locate(d)?;
                if !ty.is_leaf() {
                    return Err(format!("`{d}` is not a scalar value"));
                }
                Ok(match dynamic {
                    None => GExpr::Read(base),
                    Some((stride, count, idx)) => GExpr::ReadDyn {
                        base,
                        stride,
                        count,
                        idx: Box::new(idx),
                    },
                })
            }
            other => self.boolean(other),
        }
    }

    fn boolean(&self, e: &Expr) -> CResult<GExpr> {
        match e {
            Expr::Bool(b) => Ok(GExpr::Const(bool_code(*b))),
            Expr::Var(_) => self.value(e, None),
            Expr::Eq(a, b) | Expr::Ne(a, b) => {
                let t = match (a.as_ref(), b.as_ref()) {
                    (Expr::Null | Expr::Other, x) | (x, _) => self.leaf_ty(x),
                };
                let ga = self.value(a, t.as_ref())?;
                let gb = self.value(b, t.as_ref())?;
                let eq = matches!(e, Expr::Eq(..));
                Ok(match (&ga, &gb) {
                    (GExpr::Const(x), GExpr::Const(y)) => GExpr::Const(bool_code((x == y) == eq)),
                    _ if eq => GExpr::Eq(Box::new(ga), Box::new(gb)),
                    _ => GExpr::Ne(Box::new(ga), Box::new(gb)),
                })
            }
            Expr::Not(a) => Ok(match self.boolean(a)? {
                GExpr::Const(c) => GExpr::Const(bool_code(c == FALSE)),
                g => GExpr::Not(Box::new(g)),
            }),
            Expr::And(..) => {
                let mut parts = Vec::new();
                for c in e.conjuncts() {
                    match self.boolean(c)? {
                        GExpr::Const(TRUE) => {}
                        GExpr::Const(_) => {
                            if parts.is_empty() {
                                return Ok(GExpr::Const(FALSE));
                            }
                            parts.push(GExpr::Const(FALSE));
                            break;
                        }
                        GExpr::And(inner) => parts.extend(inner),
                        g => parts.push(g),
                    }
                }
                Ok(match parts.len() {
                    0 => GExpr::Const(TRUE),
                    1 => parts.pop().unwrap(),
                    _ => GExpr::And(parts),
                })
            }
            Expr::Or(..) => {
                let mut parts = Vec::new();
                let mut flat = Vec::new();
                disjuncts(e, &mut flat);
                for c in flat {
                    match self.boolean(c)? {
                        GExpr::Const(FALSE) => {}
                        GExpr::Const(_) => {
                            if parts.is_empty() {
                                return Ok(GExpr::Const(TRUE));
                            }
                            parts.push(GExpr::Const(TRUE));
                            break;
                        }
                        GExpr::Or(inner) => parts.extend(inner),
                        g => parts.push(g),
                    }
                }
                Ok(match parts.len() {
                    0 => GExpr::Const(FALSE),
                    1 => parts.pop().unwrap(),
                    _ => GExpr::Or(parts),
                })
            }
            Expr::Implies(a, b) => {
                let ga = self.boolean(a)?;
                match ga {
                    GExpr::Const(FALSE) => Ok(GExpr::Const(TRUE)),
                    GExpr::Const(_) => self.boolean(b),
                    ga => match self.boolean(b)? {
                        GExpr::Const(TRUE) => Ok(GExpr::Const(TRUE)),
                        gb => Ok(GExpr::Implies(Box::new(ga), Box::new(gb))),
                    },
                }
            }
            Expr::Forall(q) | Expr::Exists(q) => {
                let dom = self.env.domain(&q.ty)?;
                let mut inner = Cx {
                    env: self.env,
                    var_base: self.var_base,
                    slots: self.slots,
                    binds: self.binds.clone(),
                };
                let mut compiled = Vec::new();
                for v in domain_codes(&dom) {
                    inner.binds.push((q.var.clone(), dom.clone(), v));
                    compiled.push(inner.boolean(&q.body)?);
                    inner.binds.pop();
                }
                Ok(fold_junction(compiled, matches!(e, Expr::Forall(_))))
            }
            Expr::IsEmpty(d) => {
                let (base, dynamic, ty) = self.locate(d)?;
                if dynamic.is_some() {
                    return Err(format!("`{d} = {{}}` with a state-dependent index"));
                }
                let Ty::Array { size, .. } = ty else {
                    return Err(format!("`{d}` is not an array"));
                };
                let parts = (0..size)
                    .map(|k| {
                        GExpr::Eq(
                            Box::new(GExpr::Read(base + k)),
                            Box::new(GExpr::Const(FALSE)),
                        )
                    })
                    .collect();
                Ok(fold_junction(parts, true))
            }
            Expr::Null | Expr::Other => Err(format!("`{e}` is not boolean")),
        }
    }

    fn stmts(&mut self, body: &[Stmt], out: &mut Vec<GStmt>) -> CResult<()> {
        for s in body {
            self.stmt(s, out)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<GStmt>) -> CResult<()> {
        match s {
            Stmt::Assign(d, e) => {
                let (base, dynamic, ty) = self.locate(d)?;
                let value = self.value(e, Some(&ty))?;
                out.push(GStmt::Assign {
                    target: loc(base, dynamic),
                    value,
                });
            }
            Stmt::Undefine(d) => {
                let (base, dynamic, ty) = self.locate(d)?;
                for k in 0..leaves(&ty) {
                    let slot = &self.slots[(base + k) as usize];
                    let v = if slot.pointer {
                        null_code(&slot.ty).unwrap()
                    } else {
                        UNDEF
                    };
                    let target = match &dynamic {
                        None => GLoc::Slot(base + k),
                        Some((stride, count, idx)) => GLoc::Dyn {
                            base: base + k,
                            stride: *stride,
                            count: *count,
                            idx: idx.clone(),
                        },
                    };
                    out.push(GStmt::Assign {
                        target,
                        value: GExpr::Const(v),
                    });
                }
            }
            Stmt::SetLit(d, e) => {
                let (base, dynamic, ty) = self.locate(d)?;
                if dynamic.is_some() {
                    return Err(format!("set literal on `{d}` with a state-dependent index"));
                }
                let Ty::Array { index, size, .. } = &ty else {
                    return Err(format!("set literal on non-array `{d}`"));
                };
                let elem = match e {
                    None => None,
                    Some(e) => Some(self.value(e, Some(&self.env.types[index]))?),
                };
                for k in 0..*size {
                    let value = match &elem {
                        None => GExpr::Const(FALSE),
                        Some(GExpr::Const(c)) => GExpr::Const(bool_code(*c as u32 == k + 1)),
                        Some(g) => {
                            GExpr::Eq(Box::new(g.clone()), Box::new(GExpr::Const(k as u8 + 1)))
                        }
                    };
                    out.push(GStmt::Assign {
                        target: GLoc::Slot(base + k),
                        value,
                    });
                }
            }
            Stmt::For { var, ty, body } => {
                let dom = self.env.domain(ty)?;
                for v in domain_codes(&dom) {
                    self.binds.push((var.clone(), dom.clone(), v));
                    let r = self.stmts(body, out);
                    self.binds.pop();
                    r?;
                }
            }
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                let c = self.boolean(cond)?;
                let mut t = Vec::new();
                let mut o = Vec::new();
                match c {
                    GExpr::Const(TRUE) => self.stmts(then, out)?,
                    GExpr::Const(_) => self.stmts(otherwise, out)?,
                    c => {
                        self.stmts(then, &mut t)?;
                        self.stmts(otherwise, &mut o)?;
                        out.push(GStmt::If {
                            cond: c,
                            then: t,
                            otherwise: o,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn loc(base: u32, dynamic: Option<(u32, u32, GExpr)>) -> GLoc {
    match dynamic {
        None => GLoc::Slot(base),
        Some((stride, count, idx)) => GLoc::Dyn {
            base,
            stride,
            count,
            idx,
        },
    }
}

fn disjuncts<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Or(a, b) => {
            disjuncts(a, out);
            disjuncts(b, out);
        }
        other => out.push(other),
    }
}

fn fold_junction(parts: Vec<GExpr>, conj: bool) -> GExpr {
    let (unit, zero) = if conj { (TRUE, FALSE) } else { (FALSE, TRUE) };
    let mut out = Vec::new();
    for g in parts {
        match g {
            GExpr::Const(c) if c == unit => {}
            GExpr::Const(_) if out.is_empty() => return GExpr::Const(zero),
            GExpr::Const(_) => {
                out.push(GExpr::Const(zero));
                break;
            }
            GExpr::And(inner) if conj => out.extend(inner),
            GExpr::Or(inner) if !conj => out.extend(inner),
            g => out.push(g),
        }
    }
    match out.len() {
        0 => GExpr::Const(unit),
        1 => out.pop().unwrap(),
        _ if conj => GExpr::And(out),
        _ => GExpr::Or(out),
    }
}

fn flatten(
    prefix: &str,
    var: usize,
    ty: &Ty,
    indices: &mut Vec<(String, u32)>,
    strides: &mut Vec<u32>,
    agent_ty: Option<&str>,
    local: bool,
    out: &mut Vec<SlotInfo>,
) {
    match ty {
        Ty::Record(fields) => {
            for (n, t) in fields {
                flatten(
                    &format!("{prefix}.{n}"),
                    var,
                    t,
                    indices,
                    strides,
                    agent_ty,
                    local,
                    out,
                );
            }
        }
        Ty::Array { index, size, elem } => {
            for k in 1..=*size {
                indices.push((index.clone(), k));
                strides.push(leaves(elem));
                flatten(
                    &format!("{prefix}[{k}]"),
                    var,
                    elem,
                    indices,
                    strides,
                    agent_ty,
                    local,
                    out,
                );
                indices.pop();
                strides.pop();
            }
        }
        leaf => {
            let agent = match indices.first() {
                Some((t, k)) if Some(t.as_str()) == agent_ty => Some(*k),
                _ => None,
            };
            let pointer =
                matches!(leaf, Ty::Scalar { name, .. } if Some(name.as_str()) == agent_ty);
            out.push(SlotInfo {
                name: prefix.to_string(),
                var,
                ty: leaf.clone(),
                indices: indices.clone(),
                strides: strides.clone(),
                agent,
                local,
                pointer,
            });
        }
    }
}

/// Enumerates all bindings of a parameter list, first parameter outermost.
fn bindings(env: &TypeEnv, params: &[Param]) -> CResult<Vec<Vec<(String, Ty, u8)>>> {
    let mut out = vec![Vec::new()];
    for p in params {
        let dom = env.domain(&p.ty)?;
        let mut next = Vec::new();
        for b in &out {
            for v in domain_codes(&dom) {
                let mut b = b.clone();
                b.push((p.name.clone(), dom.clone(), v));
                next.push(b);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Grounds `def` with `n` agents.
pub fn instantiate(def: &ProtocolDef, n: u32) -> Result<GroundModel, ModelError> {
    instantiate_arc(Arc::new(def.clone()), n)
}

pub fn instantiate_arc(def: Arc<ProtocolDef>, n: u32) -> Result<GroundModel, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroSize);
    }
    check_protocol(&def).map_err(ModelError::StaticType)?;
    let env = TypeEnv::new(&def, Some(n)).map_err(|e| ModelError::Unsupported(e.message))?;
    let locality = classify_locality(&def);
    let agent_ty = env.agent.clone();
    let mut slots = Vec::new();
    let mut var_base = IndexMap::new();
    for (k, (name, ty)) in env.vars.iter().enumerate() {
        var_base.insert(name.clone(), slots.len() as u32);
        let local = locality.get(name).copied().unwrap_or(false);
        flatten(
            name,
            k,
            ty,
            &mut Vec::new(),
            &mut Vec::new(),
            agent_ty.as_deref(),
            local,
            &mut slots,
        );
    }
    if slots.len() > u32::MAX as usize / 2 {
        return Err(ModelError::Unsupported("too many slots".into()));
    }
    let layout = Layout::new(&slots.iter().map(|s| max_code(&s.ty)).collect::<Vec<_>>());
    let init = State(
        slots
            .iter()
            .map(|s| {
                if s.pointer {
                    null_code(&s.ty).unwrap()
                } else {
                    UNDEF
                }
            })
            .collect(),
    );
    let mut model = GroundModel {
        def: def.clone(),
        env,
        n,
        slots,
        layout,
        rules: Vec::new(),
        starts: Vec::new(),
        invariants: Vec::new(),
        var_base,
        init,
    };
    let unsupported = |ctx: &str, m: String| ModelError::Unsupported(format!("{ctx}: {m}"));
    for (ri, r) in def.rules.iter().enumerate() {
        for b in bindings(&model.env, &r.params).map_err(|m| unsupported(&r.name, m))? {
            let mut cx = model.cx(b.clone());
            let guard = cx.boolean(&r.guard).map_err(|m| unsupported(&r.name, m))?;
            let mut action = Vec::new();
            cx.stmts(&r.body, &mut action)
                .map_err(|m| unsupported(&r.name, m))?;
            let agent = b
                .iter()
                .find(|(_, t, _)| model.env.is_agent_ty(t))
                .map(|(_, _, v)| *v as u32);
            model.rules.push(RuleInstance {
                rule: ri,
                name: r.name.clone(),
                args: b.iter().map(|(_, t, v)| format_value(t, *v)).collect(),
                binding: b,
                agent,
                guard,
                action,
            });
        }
    }
    for s in &def.startstates {
        for b in bindings(&model.env, &s.params).map_err(|m| unsupported(&s.name, m))? {
            let mut cx = model.cx(b.clone());
            let mut action = Vec::new();
            cx.stmts(&s.body, &mut action)
                .map_err(|m| unsupported(&s.name, m))?;
            model.starts.push(StartInstance {
                name: s.name.clone(),
                args: b.iter().map(|(_, t, v)| format_value(t, *v)).collect(),
                action,
            });
        }
    }
    for inv in &def.invariants {
        let g = model
            .compile(&inv.expr, &[])
            .map_err(|m| unsupported(&inv.name, m))?;
        model.invariants.push((inv.name.clone(), g));
    }
    Ok(model)
}

impl GroundModel {
    fn cx(&self, binds: Vec<(String, Ty, u8)>) -> Cx<'_> {
        Cx {
            env: &self.env,
            var_base: &self.var_base,
            slots: &self.slots,
            binds,
        }
    }

    /// The agent scalarset type, if any.
    pub fn agent_ty(&self) -> Option<&Ty> {
        self.env.agent.as_ref().map(|a| &self.env.types[a])
    }

    /// Binding of an agent-typed variable to an agent id.
    pub fn agent_binding(&self, var: &str, id: u32) -> (String, Ty, u8) {
        let ty = self
            .agent_ty()
            .cloned()
            .expect("protocol has an agent type");
        (var.to_string(), ty, id as u8)
    }

    /// Compiles a boolean expression under the given bindings.
    pub fn compile(&self, e: &Expr, binds: &[(String, Ty, u8)]) -> Result<GExpr, String> {
        self.env.expect_bool(e, &{
            let mut s = Scope::default();
            for (n, t, _) in binds {
                s.push(n, t.clone());
            }
            s
        })?;
        self.cx(binds.to_vec()).boolean(e)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    /// Slot range covered by a variable.
    pub fn var_slots(&self, var: &str) -> std::ops::Range<usize> {
        let base = self.var_base[var] as usize;
        base..base + leaves(&self.env.vars[var]) as usize
    }

    pub fn format_slot(&self, s: &State, slot: usize) -> String {
        format_value(&self.slots[slot].ty, s.get(slot))
    }

    /// Value code of a named leaf value such as `Empty`, `true` or `2`.
    pub fn parse_value(&self, slot: usize, text: &str) -> Option<u8> {
        let ty = &self.slots[slot].ty;
        (0..=max_code(ty)).find(|&v| format_value(ty, v) == text)
    }

    pub fn eval(&self, g: &GExpr, s: &State) -> Result<u8, EvalError> {
        match g {
            GExpr::Const(c) => Ok(*c),
            GExpr::Read(k) => self.read(s, *k as usize),
            GExpr::ReadDyn {
                base,
                stride,
                count,
                idx,
            } => {
                let slot = self.dyn_slot(s, *base, *stride, *count, idx)?;
                self.read(s, slot)
            }
            GExpr::Eq(a, b) => Ok(bool_code(self.eval(a, s)? == self.eval(b, s)?)),
            GExpr::Ne(a, b) => Ok(bool_code(self.eval(a, s)? != self.eval(b, s)?)),
            GExpr::Not(a) => Ok(bool_code(self.eval(a, s)? == FALSE)),
            GExpr::And(parts) => {
                for p in parts {
                    if self.eval(p, s)? == FALSE {
                        return Ok(FALSE);
                    }
                }
                Ok(TRUE)
            }
            GExpr::Or(parts) => {
                for p in parts {
                    if self.eval(p, s)? == TRUE {
                        return Ok(TRUE);
                    }
                }
                Ok(FALSE)
            }
            GExpr::Implies(a, b) => {
                if self.eval(a, s)? == FALSE {
                    Ok(TRUE)
                } else {
                    self.eval(b, s)
                }
            }
        }
    }

    pub fn eval_bool(&self, g: &GExpr, s: &State) -> Result<bool, EvalError> {
        Ok(self.eval(g, s)? == TRUE)
    }

    fn read(&self, s: &State, slot: usize) -> Result<u8, EvalError> {
        match s.get(slot) {
            UNDEF => Err(EvalError::UndefinedRead(self.slots[slot].name.clone())),
            v => Ok(v),
        }
    }

    fn dyn_slot(
        &self,
        s: &State,
        base: u32,
        stride: u32,
        count: u32,
        idx: &GExpr,
    ) -> Result<usize, EvalError> {
        let v = self.eval(idx, s)? as u32;
        if v == 0 || v > count {
            let name = &self.slots[base as usize].name;
            return Err(EvalError::IndexOutOfRange(name.clone()));
        }
        Ok((base + (v - 1) * stride) as usize)
    }

    /// Executes ground statements in place.
    pub fn exec(&self, body: &[GStmt], s: &mut State) -> Result<(), EvalError> {
        for st in body {
            match st {
                GStmt::Assign { target, value } => {
                    // A plain copy may move an undefined value.
                    let v = match value {
                        GExpr::Read(k) => s.get(*k as usize),
                        GExpr::ReadDyn {
                            base,
                            stride,
                            count,
                            idx,
                        } => s.get(self.dyn_slot(s, *base, *stride, *count, idx)?),
                        other => self.eval(other, s)?,
                    };
                    let slot = match target {
                        GLoc::Slot(k) => *k as usize,
                        GLoc::Dyn {
                            base,
                            stride,
                            count,
                            idx,
                        } => self.dyn_slot(s, *base, *stride, *count, idx)?,
                    };
                    s.set(slot, v);
                }
                GStmt::If {
                    cond,
                    then,
                    otherwise,
                } => {
                    if self.eval(cond, s)? == TRUE {
                        self.exec(then, s)?;
                    } else {
                        self.exec(otherwise, s)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Every initial state, one per startstate binding, in declaration order.
    pub fn initial_states(&self) -> Result<Vec<State>, EvalError> {
        self.starts
            .iter()
            .map(|st| {
                let mut s = self.init.clone();
                self.exec(&st.action, &mut s)?;
                Ok(s)
            })
            .collect()
    }

    pub fn enabled(&self, s: &State, ri: &RuleInstance) -> Result<bool, EvalError> {
        self.eval_bool(&ri.guard, s)
    }

    /// Fires a rule instance, returning the successor.
    pub fn fire(&self, s: &State, ri: &RuleInstance) -> Result<State, EvalError> {
        let mut next = s.clone();
        self.exec(&ri.action, &mut next)?;
        Ok(next)
    }

    /// Evaluates an expression under explicit bindings.
    pub fn eval_expr(
        &self,
        s: &State,
        binds: &[(String, Ty, u8)],
        e: &Expr,
    ) -> Result<bool, ExprError> {
        let g = self.compile(e, binds).map_err(ExprError::Compile)?;
        self.eval_bool(&g, s).map_err(ExprError::Eval)
    }

    /// Executes a statement list under explicit bindings.
    pub fn exec_action(
        &self,
        s: &State,
        binds: &[(String, Ty, u8)],
        body: &[Stmt],
    ) -> Result<State, ExprError> {
        let mut cx = self.cx(binds.to_vec());
        let mut g = Vec::new();
        cx.stmts(body, &mut g).map_err(ExprError::Compile)?;
        let mut next = s.clone();
        self.exec(&g, &mut next).map_err(ExprError::Eval)?;
        Ok(next)
    }

    /// Slots a rule instance can possibly write.
    pub fn write_set(&self, ri: &RuleInstance) -> Vec<usize> {
        let mut out = Vec::new();
        fn walk(body: &[GStmt], out: &mut Vec<usize>) {
            for st in body {
                match st {
                    GStmt::Assign {
                        target: GLoc::Slot(k),
                        ..
                    } => out.push(*k as usize),
                    GStmt::Assign {
                        target:
                            GLoc::Dyn {
                                base,
                                stride,
                                count,
                                ..
                            },
                        ..
                    } => out.extend((0..*count).map(|j| (base + j * stride) as usize)),
                    GStmt::If {
                        then, otherwise, ..
                    } => {
                        walk(then, out);
                        walk(otherwise, out);
                    }
                }
            }
        }
        walk(&ri.action, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn pack(&self, s: &State) -> PackedState {
        self.layout.pack(s)
    }

    pub fn unpack(&self, p: &PackedState) -> State {
        self.layout.unpack(p)
    }

    /// Rule instances with the given name, in instance order.
    pub fn instances_of<'a>(
        &'a self,
        name: &'a str,
    ) -> impl Iterator<Item = (usize, &'a RuleInstance)> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.name == name)
    }

    /// `Name(args)` lookup.
    pub fn find_instance(&self, label: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.label() == label)
    }

    /// Renders every slot as `path = value` lines.
    pub fn render_state(&self, s: &State) -> Vec<String> {
        (0..self.slots.len())
            .map(|k| format!("{} = {}", self.slots[k].name, self.format_slot(s, k)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("{0}")]
    Compile(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
