//! Resolved types and expression typing.

use indexmap::IndexMap;
use rustc_hash::FxHashMap;

use crate::ast::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Enum {
        name: String,
        members: Vec<String>,
    },
    Scalar {
        name: String,
        size: u32,
        other: bool,
    },
    Record(Vec<(String, Ty)>),
    Array {
        index: String,
        size: u32,
        elem: Box<Ty>,
    },
}

impl Ty {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Ty::Bool | Ty::Enum { .. } | Ty::Scalar { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            Ty::Bool => "boolean".into(),
            Ty::Enum { name, .. } | Ty::Scalar { name, .. } => name.clone(),
            Ty::Record(_) => "record".into(),
            Ty::Array { index, elem, .. } => format!("array [{index}] of {}", elem.describe()),
        }
    }

    /// Number of non-undefined values a leaf of this type can take.
    pub fn leaf_domain(&self) -> u32 {
        match self {
            Ty::Bool => 2,
            Ty::Enum { members, .. } => members.len() as u32,
            // ids, null, and o when the domain carries it
            Ty::Scalar { size, other, .. } => size + 1 + u32::from(*other),
            _ => 0,
        }
    }
}

/// A declaration that failed to resolve.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct DeclError {
    pub decl: String,
    pub message: String,
}

/// Typing result of an expression. `Null` and `Other` literals type as
/// `AnyScalar` and unify with every scalarset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ETy {
    T(Ty),
    AnyScalar,
}

/// Name resolution for one protocol at a fixed agent-domain size.
#[derive(Clone, Debug)]
pub struct TypeEnv {
    pub types: IndexMap<String, Ty>,
    pub vars: IndexMap<String, Ty>,
    pub enum_members: FxHashMap<String, (String, u32)>,
    pub agent: Option<String>,
}

impl TypeEnv {
    /// Resolves all declarations; `agent_size` overrides the size of the
    /// agent scalarset.
    pub fn new(def: &ProtocolDef, agent_size: Option<u32>) -> Result<TypeEnv, DeclError> {
        fn err(decl: &str) -> impl Fn(String) -> DeclError + '_ {
            move |message| DeclError {
                decl: decl.to_string(),
                message,
            }
        }
        let agent = def.agent_type_name().map(str::to_string);
        let mut env = TypeEnv {
            types: IndexMap::new(),
            vars: IndexMap::new(),
            enum_members: FxHashMap::default(),
            agent: agent.clone(),
        };
        for t in &def.types {
            if env.types.contains_key(&t.name) {
                return Err(err(&t.name)(format!("type `{}` declared twice", t.name)));
            }
            let ty = env
                .resolve(def, &t.name, &t.ty, agent_size)
                .map_err(err(&t.name))?;
            if let Ty::Enum { members, .. } = &ty {
                for (k, m) in members.iter().enumerate() {
                    if members[..k].contains(m) {
                        return Err(err(&t.name)(format!(
                            "enum member `{m}` repeated in `{}`",
                            t.name
                        )));
                    }
                    if let Some((other, _)) = env.enum_members.get(m) {
                        return Err(err(&t.name)(format!(
                            "enum member `{m}` already declared in `{other}`"
                        )));
                    }
                    env.enum_members
                        .insert(m.clone(), (t.name.clone(), k as u32));
                }
            }
            env.types.insert(t.name.clone(), ty);
        }
        for v in &def.vars {
            if env.vars.contains_key(&v.name) {
                return Err(err(&v.name)(format!(
                    "variable `{}` declared twice",
                    v.name
                )));
            }
            let ty = env
                .resolve(def, &v.name, &v.ty, agent_size)
                .map_err(err(&v.name))?;
            env.vars.insert(v.name.clone(), ty);
        }
        Ok(env)
    }

    fn resolve(
        &self,
        def: &ProtocolDef,
        decl: &str,
        t: &TypeExpr,
        agent_size: Option<u32>,
    ) -> Result<Ty, String> {
        Ok(match t {
            TypeExpr::Boolean => Ty::Bool,
            TypeExpr::Enum(members) => {
                if members.is_empty() {
                    return Err(format!("enum `{decl}` has no members"));
                }
                Ty::Enum {
                    name: decl.to_string(),
                    members: members.clone(),
                }
            }
            TypeExpr::Scalarset { size, with_other } => {
                let mut n = match size {
                    SizeExpr::Lit(n) => *n,
                    SizeExpr::Const(c) => def
                        .const_value(c)
                        .ok_or_else(|| format!("unknown constant `{c}`"))?,
                };
                if self.agent.as_deref() == Some(decl) {
                    if let Some(a) = agent_size {
                        n = a;
                    }
                }
                if n == 0 {
                    return Err(format!("scalarset `{decl}` must have a positive size"));
                }
                if n > 200 {
                    return Err(format!("scalarset `{decl}` of size {n} is too large"));
                }
                Ty::Scalar {
                    name: decl.to_string(),
                    size: n,
                    other: *with_other,
                }
            }
            TypeExpr::Record(fields) => {
                let mut out = Vec::new();
                for (name, ft) in fields {
                    if out.iter().any(|(n, _)| n == name) {
                        return Err(format!("field `{name}` repeated in `{decl}`"));
                    }
                    out.push((name.clone(), self.resolve(def, decl, ft, agent_size)?));
                }
                Ty::Record(out)
            }
            TypeExpr::Array { index, elem } => {
                let ix = self.resolve(def, decl, index, agent_size)?;
                let Ty::Scalar { name, size, .. } = ix else {
                    return Err(format!("array index of `{decl}` must be a scalarset"));
                };
                Ty::Array {
                    index: name,
                    size,
                    elem: Box::new(self.resolve(def, decl, elem, agent_size)?),
                }
            }
            TypeExpr::Named(n) => self
                .types
                .get(n)
                .cloned()
                .ok_or_else(|| format!("unknown type `{n}`"))?,
        })
    }

    /// Type of a parameter or quantifier domain.
    pub fn domain(&self, name: &str) -> Result<Ty, String> {
        if name == "boolean" {
            return Ok(Ty::Bool);
        }
        match self.types.get(name) {
            Some(t) if t.is_leaf() => Ok(t.clone()),
            Some(_) => Err(format!("`{name}` is not an enumerable type")),
            None => Err(format!("unknown type `{name}`")),
        }
    }

    pub fn agent_size(&self) -> u32 {
        self.agent
            .as_ref()
            .and_then(|a| match self.types.get(a) {
                Some(Ty::Scalar { size, .. }) => Some(*size),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn is_agent_ty(&self, t: &Ty) -> bool {
        matches!(t, Ty::Scalar { name, .. } if Some(name) == self.agent.as_ref())
    }

    /// Type of a designator. `scope` maps bound index names to their types.
    pub fn designator_ty(&self, d: &Designator, scope: &Scope) -> Result<ETy, String> {
        if d.path.is_empty() {
            if let Some(t) = scope.get(&d.root) {
                return Ok(ETy::T(t.clone()));
            }
            if let Some((en, _)) = self.enum_members.get(&d.root) {
                if !self.vars.contains_key(&d.root) {
                    return Ok(ETy::T(self.types[en].clone()));
                }
            }
        }
        let mut t = match self.vars.get(&d.root) {
            Some(t) => t.clone(),
            None => return Err(format!("unknown identifier `{}`", d.root)),
        };
        for a in &d.path {
            t = match (a, t) {
                (Access::Field(f), Ty::Record(fields)) => fields
                    .into_iter()
                    .find(|(n, _)| n == f)
                    .map(|(_, t)| t)
                    .ok_or_else(|| format!("no field `{f}` in `{d}`"))?,
                (Access::Index(ix), Ty::Array { index, elem, .. }) => {
                    let it = self.expr_ty(ix, scope)?;
                    let ok = match &it {
                        ETy::T(Ty::Scalar { name, .. }) => *name == index,
                        ETy::AnyScalar => true,
                        _ => false,
                    };
                    if !ok {
                        return Err(format!("index `{ix}` of `{d}` must have type {index}"));
                    }
                    *elem
                }
                (Access::Field(f), _) => {
                    return Err(format!("`.{f}` applied to a non-record in `{d}`"))
                }
                (Access::Index(_), _) => return Err(format!("indexing a non-array in `{d}`")),
            };
        }
        Ok(ETy::T(t))
    }

    pub fn expr_ty(&self, e: &Expr, scope: &Scope) -> Result<ETy, String> {
        match e {
            Expr::Bool(_) => Ok(ETy::T(Ty::Bool)),
            Expr::Null | Expr::Other => Ok(ETy::AnyScalar),
            Expr::Var(d) => self.designator_ty(d, scope),
            Expr::Eq(a, b) | Expr::Ne(a, b) => {
                let ta = self.expr_ty(a, scope)?;
                let tb = self.expr_ty(b, scope)?;
                let compatible = match (&ta, &tb) {
                    (ETy::T(x), ETy::T(y)) => x.is_leaf() && same_leaf(x, y),
                    (ETy::AnyScalar, ETy::T(Ty::Scalar { .. }))
                    | (ETy::T(Ty::Scalar { .. }), ETy::AnyScalar)
                    | (ETy::AnyScalar, ETy::AnyScalar) => true,
                    _ => false,
                };
                if !compatible {
                    return Err(format!("operands of `{e}` have different types"));
                }
                Ok(ETy::T(Ty::Bool))
            }
            Expr::Not(a) => {
                self.expect_bool(a, scope)?;
                Ok(ETy::T(Ty::Bool))
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                self.expect_bool(a, scope)?;
                self.expect_bool(b, scope)?;
                Ok(ETy::T(Ty::Bool))
            }
            Expr::Forall(q) | Expr::Exists(q) => {
                let dom = self.domain(&q.ty)?;
                let mut inner = scope.clone();
                inner.push(&q.var, dom);
                self.expect_bool(&q.body, &inner)?;
                Ok(ETy::T(Ty::Bool))
            }
            Expr::IsEmpty(d) => match self.designator_ty(d, scope)? {
                ETy::T(Ty::Array { elem, .. }) if *elem == Ty::Bool => Ok(ETy::T(Ty::Bool)),
                _ => Err(format!("`{d} = {{}}` needs a boolean array")),
            },
        }
    }

    pub fn expect_bool(&self, e: &Expr, scope: &Scope) -> Result<(), String> {
        match self.expr_ty(e, scope)? {
            ETy::T(Ty::Bool) => Ok(()),
            _ => Err(format!("`{e}` is not boolean")),
        }
    }
}

fn same_leaf(a: &Ty, b: &Ty) -> bool {
    match (a, b) {
        (Ty::Bool, Ty::Bool) => true,
        (Ty::Enum { name: x, .. }, Ty::Enum { name: y, .. }) => x == y,
        (Ty::Scalar { name: x, .. }, Ty::Scalar { name: y, .. }) => x == y,
        _ => false,
    }
}

/// Bound index variables, innermost last.
#[derive(Clone, Debug, Default)]
pub struct Scope(Vec<(String, Ty)>);

impl Scope {
    pub fn push(&mut self, name: &str, ty: Ty) {
        self.0.push((name.to_string(), ty));
    }

    pub fn get(&self, name: &str) -> Option<&Ty> {
        self.0.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}
