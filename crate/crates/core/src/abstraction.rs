//! Data-type reduction to c concrete agents plus a state-less Other agent,
//! lemma strengthening, the CMP loop body and a containment oracle.

use std::collections::HashSet;

use crate::ast::{Access, Designator, Expr, Param, ProtocolDef, Quant, SizeExpr, Stmt, TypeExpr};
use crate::explore::{
    canonical_reachable_states, reach, reachable_states, AgentTarget, Check, CheckKind, ReachError,
    ReachOptions, ReachReport, Trace,
};
use crate::flows::rule_set;
use crate::formats::{FlowSpec, InvSet, Lemma};
use crate::ground::{instantiate, GroundModel, ModelError};
use crate::state::State;
use crate::symmetry::Symmetry;
use crate::types::{Ty, TypeEnv};

/// Suffix of the Other copy of a rule.
pub const OTHER_SUFFIX: &str = "_o";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReduceOptions {
    /// Replace dropped literals by `false` instead of `true`. Only useful as
    /// a broken rewrite for negative tests.
    pub flip_polarity: bool,
    /// Omit Other rules whose guard is `true` and whose action is empty.
    pub elide: bool,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            flip_polarity: false,
            elide: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AbstractError {
    #[error("the number of concrete agents must be at least 1")]
    ZeroAgents,
    #[error("protocol has no agent scalarset")]
    NoAgent,
    #[error("protocol is already abstracted")]
    AlreadyAbstract,
    #[error("{context}: {message}")]
    Unsupported { context: String, message: String },
    #[error("abstract model: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Reach(#[from] ReachError),
}

/// The reduced protocol with bookkeeping about the Other rules.
#[derive(Clone, Debug)]
pub struct AbstractProtocol {
    pub def: ProtocolDef,
    pub c: u32,
    /// Names of the emitted Other rules.
    pub other_rules: Vec<String>,
    /// Rules whose Other copy was elided.
    pub elided: Vec<String>,
}

/// Replaces free occurrences of `var` by `to`, renaming binders that would
/// capture a variable of `to`.
pub fn subst(e: &Expr, var: &str, to: &Expr) -> Expr {
    let go = |x: &Expr| Box::new(subst(x, var, to));
    match e {
        Expr::Bool(_) | Expr::Null | Expr::Other => e.clone(),
        Expr::Var(d) if d.root == var && d.path.is_empty() => to.clone(),
        Expr::Var(d) => Expr::Var(subst_designator(d, var, to)),
        Expr::IsEmpty(d) => Expr::IsEmpty(subst_designator(d, var, to)),
        Expr::Eq(a, b) => Expr::Eq(go(a), go(b)),
        Expr::Ne(a, b) => Expr::Ne(go(a), go(b)),
        Expr::And(a, b) => Expr::And(go(a), go(b)),
        Expr::Or(a, b) => Expr::Or(go(a), go(b)),
        Expr::Implies(a, b) => Expr::Implies(go(a), go(b)),
        Expr::Not(a) => Expr::Not(go(a)),
        Expr::Forall(q) | Expr::Exists(q) => {
            let q = if q.var == var {
                q.clone()
            } else if crate::ast::mentions_free(to, &q.var) {
                let mut fresh = format!("{}_", q.var);
                while crate::ast::mentions_free(to, &fresh)
                    || crate::ast::mentions_free(&q.body, &fresh)
                {
                    fresh.push('_');
                }
                let body = subst(&q.body, &q.var, &Expr::var(&fresh));
                Quant {
                    var: fresh,
                    ty: q.ty.clone(),
                    body: Box::new(subst(&body, var, to)),
                }
            } else {
                Quant {
                    var: q.var.clone(),
                    ty: q.ty.clone(),
                    body: go(&q.body),
                }
            };
            if matches!(e, Expr::Forall(_)) {
                Expr::Forall(q)
            } else {
                Expr::Exists(q)
            }
        }
    }
}

fn subst_designator(d: &Designator, var: &str, to: &Expr) -> Designator {
    Designator {
        root: d.root.clone(),
        path: d
            .path
            .iter()
            .map(|a| match a {
                Access::Index(ix) => Access::Index(Box::new(subst(ix, var, to))),
                f => f.clone(),
            })
            .collect(),
    }
}

fn subst_stmts(body: &[Stmt], var: &str, to: &Expr) -> Vec<Stmt> {
    body.iter()
        .map(|st| match st {
            Stmt::Assign(d, e) => Stmt::Assign(subst_designator(d, var, to), subst(e, var, to)),
            Stmt::SetLit(d, e) => Stmt::SetLit(
                subst_designator(d, var, to),
                e.as_ref().map(|e| subst(e, var, to)),
            ),
            Stmt::Undefine(d) => Stmt::Undefine(subst_designator(d, var, to)),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => Stmt::If {
                cond: subst(cond, var, to),
                then: subst_stmts(then, var, to),
                otherwise: subst_stmts(otherwise, var, to),
            },
            Stmt::For { var: v, ty, body } if v == var => Stmt::For {
                var: v.clone(),
                ty: ty.clone(),
                body: body.clone(),
            },
            Stmt::For { var: v, ty, body } => Stmt::For {
                var: v.clone(),
                ty: ty.clone(),
                body: subst_stmts(body, var, to),
            },
        })
        .collect()
}

/// A designator with an `o` index names a slot the abstraction drops.
fn designator_dropped(d: &Designator) -> bool {
    d.path
        .iter()
        .any(|a| matches!(a, Access::Index(ix) if matches!(**ix, Expr::Other)))
}

/// Reads a dropped slot anywhere.
fn reads_dropped(e: &Expr) -> bool {
    match e {
        Expr::Bool(_) | Expr::Null | Expr::Other => false,
        Expr::Var(d) | Expr::IsEmpty(d) => {
            designator_dropped(d)
                || d.path
                    .iter()
                    .any(|a| matches!(a, Access::Index(ix) if reads_dropped(ix)))
        }
        Expr::Eq(a, b)
        | Expr::Ne(a, b)
        | Expr::And(a, b)
        | Expr::Or(a, b)
        | Expr::Implies(a, b) => reads_dropped(a) || reads_dropped(b),
        Expr::Not(a) => reads_dropped(a),
        Expr::Forall(q) | Expr::Exists(q) => reads_dropped(&q.body),
    }
}

fn has_quantifier_over(e: &Expr, ty: &str) -> bool {
    match e {
        Expr::Forall(q) | Expr::Exists(q) => q.ty == ty || has_quantifier_over(&q.body, ty),
        Expr::Eq(a, b)
        | Expr::Ne(a, b)
        | Expr::And(a, b)
        | Expr::Or(a, b)
        | Expr::Implies(a, b) => has_quantifier_over(a, ty) || has_quantifier_over(b, ty),
        Expr::Not(a) => has_quantifier_over(a, ty),
        _ => false,
    }
}

/// `forall j do S[j] = false end` over the agent type, as `S = {}`.
fn resugar_forall(q: &Quant) -> Option<Expr> {
    let (a, b) = match &*q.body {
        Expr::Eq(a, b) => (a, b),
        _ => return None,
    };
    let d = match (&**a, &**b) {
        (Expr::Var(d), Expr::Bool(false)) | (Expr::Bool(false), Expr::Var(d)) => d,
        _ => return None,
    };
    match d.path.as_slice() {
        [Access::Index(ix)] if matches!(&**ix, Expr::Var(v) if v.root == q.var && v.path.is_empty()) => {
            Some(Expr::IsEmpty(Designator::name(d.root.clone())))
        }
        _ => None,
    }
}

fn negate_literal(e: Expr) -> Expr {
    match e {
        Expr::Eq(a, b) => Expr::Ne(a, b),
        Expr::Ne(a, b) => Expr::Eq(a, b),
        Expr::Bool(b) => Expr::Bool(!b),
        other => Expr::not(other),
    }
}

struct Reducer<'a> {
    agent: &'a str,
    env: &'a TypeEnv,
    flip: bool,
    context: String,
    fresh: Vec<Param>,
    taken: Vec<String>,
}

impl Reducer<'_> {
    fn unsupported<T>(&self, message: impl Into<String>) -> Result<T, AbstractError> {
        Err(AbstractError::Unsupported {
            context: self.context.clone(),
            message: message.into(),
        })
    }

    fn dropped_literal(&self) -> Expr {
        Expr::Bool(!self.flip)
    }

    /// Negation normal form of `e` (or of `¬e` when `neg`), with every
    /// literal over a dropped slot replaced by the dropped-literal constant
    /// and agent quantifiers split into a concrete part and an `o` part.
    fn expr(&self, e: &Expr, neg: bool) -> Expr {
        match e {
            Expr::Bool(b) => Expr::Bool(*b ^ neg),
            Expr::Not(a) => self.expr(a, !neg),
            Expr::And(a, b) | Expr::Or(a, b) => {
                let (x, y) = (self.expr(a, neg), self.expr(b, neg));
                if matches!(e, Expr::And(..)) ^ neg {
                    Expr::and_simplified(x, y)
                } else {
                    Expr::or_simplified(x, y)
                }
            }
            Expr::Implies(a, b) => {
                if neg {
                    Expr::and_simplified(self.expr(a, false), self.expr(b, true))
                } else {
                    Expr::or_simplified(self.expr(a, true), self.expr(b, false))
                }
            }
            Expr::Forall(q) | Expr::Exists(q) => {
                let universal = matches!(e, Expr::Forall(_)) ^ neg;
                let body = self.expr(&q.body, neg);
                let conc = match body {
                    Expr::Bool(b) => Expr::Bool(b),
                    body => {
                        let q2 = Quant {
                            var: q.var.clone(),
                            ty: q.ty.clone(),
                            body: Box::new(body),
                        };
                        if universal {
                            resugar_forall(&q2).unwrap_or(Expr::Forall(q2))
                        } else {
                            Expr::Exists(q2)
                        }
                    }
                };
                if q.ty != self.agent {
                    return conc;
                }
                let o_part = self.expr(&subst(&q.body, &q.var, &Expr::Other), neg);
                if universal {
                    Expr::and_simplified(conc, o_part)
                } else {
                    Expr::or_simplified(conc, o_part)
                }
            }
            Expr::IsEmpty(d) if self.agent_array(d) => {
                if designator_dropped(d) {
                    return self.dropped_literal();
                }
                let lit = if neg { Expr::not(e.clone()) } else { e.clone() };
                if neg {
                    Expr::or_simplified(lit, self.dropped_literal())
                } else {
                    Expr::and_simplified(lit, self.dropped_literal())
                }
            }
            atom => {
                let unknown = matches!(atom, Expr::Eq(a, b) | Expr::Ne(a, b)
                    if matches!(**a, Expr::Other) && matches!(**b, Expr::Other));
                if unknown || reads_dropped(atom) {
                    self.dropped_literal()
                } else if neg {
                    negate_literal(atom.clone())
                } else {
                    atom.clone()
                }
            }
        }
    }

    fn agent_array(&self, d: &Designator) -> bool {
        matches!(self.env.vars.get(&d.root), Some(Ty::Array { index, .. }) if index == self.agent)
    }

    /// Static type of a designator's leaf.
    fn leaf_ty(&self, d: &Designator) -> Option<Ty> {
        let mut ty = self.env.vars.get(&d.root)?.clone();
        for a in &d.path {
            ty = match (a, ty) {
                (Access::Field(f), Ty::Record(fields)) => {
                    fields.into_iter().find(|(n, _)| n == f)?.1
                }
                (Access::Index(_), Ty::Array { elem, .. }) => *elem,
                _ => return None,
            };
        }
        Some(ty)
    }

    fn fresh_param(&mut self, prefix: &str, ty: &Ty) -> Result<String, AbstractError> {
        let ty_name = match ty {
            Ty::Bool => "boolean".to_string(),
            Ty::Enum { name, .. } if !name.is_empty() => name.clone(),
            Ty::Scalar { name, .. } if name != self.agent => name.clone(),
            other => {
                return self.unsupported(format!(
                    "cannot over-approximate a value of {}",
                    other.describe()
                ))
            }
        };
        let mut k = self.fresh.len() + 1;
        let name = loop {
            let n = format!("{prefix}{k}");
            if !self.taken.contains(&n) {
                break n;
            }
            k += 1;
        };
        self.taken.push(name.clone());
        self.fresh.push(Param {
            name: name.clone(),
            ty: ty_name,
        });
        Ok(name)
    }

    fn stmts(&mut self, body: &[Stmt]) -> Result<Vec<Stmt>, AbstractError> {
        let mut out = Vec::new();
        for st in body {
            match st {
                Stmt::Assign(d, e) => {
                    if designator_dropped(d) {
                        continue;
                    }
                    if d.path
                        .iter()
                        .any(|a| matches!(a, Access::Index(ix) if reads_dropped(ix)))
                    {
                        return self.unsupported(format!("index of `{d}` reads a dropped slot"));
                    }
                    if reads_dropped(e) || has_quantifier_over(e, self.agent) {
                        let ty = self.leaf_ty(d).ok_or_else(|| AbstractError::Unsupported {
                            context: self.context.clone(),
                            message: format!("cannot type `{d}`"),
                        })?;
                        let p = self.fresh_param("_v", &ty)?;
                        out.push(Stmt::Assign(d.clone(), Expr::var(&p)));
                    } else {
                        out.push(st.clone());
                    }
                }
                Stmt::SetLit(d, Some(Expr::Other)) => out.push(Stmt::SetLit(d.clone(), None)),
                Stmt::SetLit(_, Some(e)) if reads_dropped(e) => {
                    return self.unsupported("set literal element reads a dropped slot");
                }
                Stmt::SetLit(..) => out.push(st.clone()),
                Stmt::Undefine(d) => {
                    if !designator_dropped(d) {
                        out.push(st.clone());
                    }
                }
                Stmt::If {
                    cond,
                    then,
                    otherwise,
                } => {
                    let then = self.stmts(then)?;
                    let otherwise = self.stmts(otherwise)?;
                    if then.is_empty() && otherwise.is_empty() {
                        continue;
                    }
                    let cond = if reads_dropped(cond) || has_quantifier_over(cond, self.agent) {
                        Expr::var(&self.fresh_param("_c", &Ty::Bool)?)
                    } else {
                        cond.clone()
                    };
                    out.push(Stmt::If {
                        cond,
                        then,
                        otherwise,
                    });
                }
                Stmt::For { var, ty, body } => {
                    let conc = self.stmts(body)?;
                    if !conc.is_empty() {
                        out.push(Stmt::For {
                            var: var.clone(),
                            ty: ty.clone(),
                            body: conc,
                        });
                    }
                    if ty == self.agent {
                        let o_body = subst_stmts(body, var, &Expr::Other);
                        out.extend(self.stmts(&o_body)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn agent_param(def: &ProtocolDef, params: &[Param]) -> Option<usize> {
    let agent = def.agent_type_name()?;
    params.iter().position(|p| p.ty == agent)
}

fn reducer<'a>(
    agent: &'a str,
    env: &'a TypeEnv,
    opts: &ReduceOptions,
    context: String,
    taken: Vec<String>,
) -> Reducer<'a> {
    Reducer {
        agent,
        env,
        flip: opts.flip_polarity,
        context,
        fresh: Vec::new(),
        taken,
    }
}

fn names_in(params: &[Param]) -> Vec<String> {
    params.iter().map(|p| p.name.clone()).collect()
}

/// Builds the abstract protocol with agents `1..=c` and the Other agent `o`.
pub fn data_type_reduce(
    def: &ProtocolDef,
    c: u32,
    opts: &ReduceOptions,
) -> Result<AbstractProtocol, AbstractError> {
    if c == 0 {
        return Err(AbstractError::ZeroAgents);
    }
    let agent_decl = def.agent_type().ok_or(AbstractError::NoAgent)?;
    let agent = agent_decl.name.clone();
    let size = match &agent_decl.ty {
        TypeExpr::Scalarset {
            with_other: true, ..
        } => return Err(AbstractError::AlreadyAbstract),
        TypeExpr::Scalarset { size, .. } => size.clone(),
        _ => return Err(AbstractError::NoAgent),
    };
    let env = TypeEnv::new(def, Some(c)).map_err(|e| AbstractError::Check(e.to_string()))?;
    let mut out = def.clone();
    for t in &mut out.types {
        if t.name == agent {
            t.ty = TypeExpr::Scalarset {
                size: size.clone(),
                with_other: true,
            };
        }
    }
    if let SizeExpr::Const(name) = &size {
        for k in &mut out.consts {
            if &k.name == name {
                k.value = c;
            }
        }
    }

    let mut rules = Vec::new();
    let mut other_rules = Vec::new();
    let mut elided = Vec::new();
    for rule in &def.rules {
        let mut r = reducer(
            &agent,
            &env,
            opts,
            format!("rule `{}`", rule.name),
            names_in(&rule.params),
        );
        let mut conc = rule.clone();
        conc.guard = r.expr(&rule.guard, false);
        conc.body = r.stmts(&rule.body)?;
        conc.params.append(&mut r.fresh);
        rules.push(conc);

        let Some(k) = agent_param(def, &rule.params) else {
            continue;
        };
        let p = &rule.params[k].name;
        let mut r = reducer(
            &agent,
            &env,
            opts,
            format!("rule `{}{OTHER_SUFFIX}`", rule.name),
            names_in(&rule.params),
        );
        let guard = r.expr(&subst(&rule.guard, p, &Expr::Other), false);
        let body = r.stmts(&subst_stmts(&rule.body, p, &Expr::Other))?;
        if opts.elide && guard == Expr::Bool(true) && body.is_empty() {
            elided.push(rule.name.clone());
            continue;
        }
        let mut params: Vec<Param> = rule
            .params
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, p)| p.clone())
            .collect();
        params.extend(r.fresh);
        let name = format!("{}{OTHER_SUFFIX}", rule.name);
        other_rules.push(name.clone());
        rules.push(crate::ast::Rule {
            name,
            params,
            guard,
            body,
            span: rule.span,
        });
    }
    out.rules = rules;

    for st in &mut out.startstates {
        let mut r = reducer(
            &agent,
            &env,
            opts,
            format!("startstate `{}`", st.name),
            names_in(&st.params),
        );
        st.body = r.stmts(&st.body)?;
        st.params.extend(r.fresh);
    }
    Ok(AbstractProtocol {
        def: out,
        c,
        other_rules,
        elided,
    })
}

/// Reduces a global predicate: NNF with dropped literals replaced.
pub fn reduce_pred(
    def: &ProtocolDef,
    e: &Expr,
    opts: &ReduceOptions,
) -> Result<Expr, AbstractError> {
    let agent = def.agent_type_name().ok_or(AbstractError::NoAgent)?;
    let env = TypeEnv::new(def, None).map_err(|e| AbstractError::Check(e.to_string()))?;
    Ok(reducer(agent, &env, opts, "predicate".into(), Vec::new()).expr(e, false))
}

/// Abstract checks for an invariant set on the reduced model: invariants
/// are checked for agent 1 only, and assertions range over the concrete
/// agents plus `o`. Dropped literals follow their polarity in the whole
/// check formula. With `all_agents` each invariant is checked for every
/// concrete agent, which keeps the suite symmetric.
pub fn abstract_invariants(
    m: &GroundModel,
    flows: &[FlowSpec],
    set: &InvSet,
    opts: &ReduceOptions,
    all_agents: bool,
) -> Result<Vec<Check>, AbstractError> {
    let def = &m.def;
    let agent = def.agent_type_name().ok_or(AbstractError::NoAgent)?;
    let compile = |e: &Expr, binds: &[(String, Ty, u8)], what: &str| {
        m.compile(e, binds)
            .map_err(|err| AbstractError::Check(format!("{what}: {err}")))
    };
    // The predicate sits on the left of an implication, so its dropped
    // literals take the opposite polarity.
    let antecedent = ReduceOptions {
        flip_polarity: !opts.flip_polarity,
        ..*opts
    };
    let mut out = Vec::new();
    for inv in &set.invariants {
        if has_quantifier_over(&inv.index, agent) {
            return Err(AbstractError::Check(format!(
                "{}: index set quantifies over agents; add per-index reductions by hand",
                inv.name
            )));
        }
        let pred = compile(&reduce_pred(def, &inv.pred, &antecedent)?, &[], &inv.name)?;
        let last = if all_agents { m.n } else { 1 };
        let mut agents = Vec::new();
        for agent in 1..=last {
            let index = compile(&inv.index, &[m.agent_binding(&inv.var, agent)], &inv.name)?;
            let rules = rule_set(m, flows, agent, &inv.target).rules;
            agents.push(AgentTarget {
                agent,
                index,
                rules,
            });
        }
        out.push(Check {
            name: inv.name.clone(),
            kind: CheckKind::Flow { pred, agents },
        });
    }
    for a in &set.assertions {
        let inv = set.get(&a.inv).ok_or_else(|| {
            AbstractError::Check(format!("{}: unknown invariant `{}`", a.name, a.inv))
        })?;
        let pred = compile(&reduce_pred(def, &inv.pred, &antecedent)?, &[], &a.name)?;
        let mut members = Vec::new();
        for k in 1..=m.n {
            members.push(compile(
                &inv.index,
                &[m.agent_binding(&inv.var, k)],
                &a.name,
            )?);
        }
        let at_o = reduce_pred(def, &subst(&inv.index, &inv.var, &Expr::Other), opts)?;
        members.push(compile(&at_o, &[], &a.name)?);
        out.push(Check {
            name: a.name.clone(),
            kind: CheckKind::NonEmpty { pred, members },
        });
    }
    Ok(out)
}

/// Lemmas as properties `forall i: body` over the model's agents.
pub fn lemma_checks(m: &GroundModel, lemmas: &[Lemma]) -> Result<Vec<Check>, AbstractError> {
    let agent = m
        .def
        .agent_type_name()
        .ok_or(AbstractError::NoAgent)?
        .to_string();
    lemmas
        .iter()
        .map(|l| {
            let e = Expr::Forall(Quant {
                var: l.var.clone(),
                ty: agent.clone(),
                body: Box::new(l.body.clone()),
            });
            m.compile(&e, &[])
                .map(|g| Check::property(l.name.clone(), g))
                .map_err(|e| AbstractError::Check(format!("lemma {}: {e}", l.name)))
        })
        .collect()
}

/// Rewrites `e` assuming every fact holds: occurrences of a fact outside
/// quantifiers become `true`.
fn assume(e: &Expr, facts: &[&Expr]) -> Expr {
    if facts.contains(&e) {
        return Expr::Bool(true);
    }
    match e {
        Expr::Not(a) => Expr::not_simplified(assume(a, facts)),
        Expr::And(a, b) => Expr::and_simplified(assume(a, facts), assume(b, facts)),
        Expr::Or(a, b) => Expr::or_simplified(assume(a, facts), assume(b, facts)),
        Expr::Implies(a, b) => match (assume(a, facts), assume(b, facts)) {
            (Expr::Bool(true), b) => b,
            (Expr::Bool(false), _) | (_, Expr::Bool(true)) => Expr::Bool(true),
            (a, Expr::Bool(false)) => Expr::not_simplified(a),
            (a, b) => Expr::implies(a, b),
        },
        other => other.clone(),
    }
}

/// Conjoins every lemma, instantiated at the rule's agent parameter, into
/// each agent rule's guard. Lemma atoms that are guard conjuncts are folded
/// to `true`, so the Other copy keeps the lemma's consequent.
pub fn strengthen(def: &ProtocolDef, lemmas: &[Lemma]) -> ProtocolDef {
    let mut out = def.clone();
    for rule in &mut out.rules {
        let Some(k) = agent_param(def, &rule.params) else {
            continue;
        };
        let p = Expr::var(&rule.params[k].name);
        let guard = rule.guard.clone();
        let facts = guard.conjuncts();
        for l in lemmas {
            let inst = assume(&subst(&l.body, &l.var, &p), &facts);
            rule.guard = Expr::and_simplified(rule.guard.clone(), inst);
        }
    }
    out
}

/// One CMP loop body.
#[derive(Clone, Debug)]
pub struct CmpResult {
    pub abstract_protocol: AbstractProtocol,
    pub model: GroundModel,
    pub report: ReachReport,
}

impl CmpResult {
    pub fn passed(&self) -> bool {
        self.report.all_passed()
    }

    /// Trace text with steps fired by the Other agent marked.
    pub fn render_trace(&self, t: &Trace) -> String {
        let mut out = String::new();
        for line in t.to_text(&self.model).lines() {
            out.push_str(line);
            let rule = line
                .split_once(": ")
                .map(|(_, l)| l.split('(').next().unwrap_or(l));
            if line.starts_with("  ") && rule.is_some_and(|r| r.ends_with(OTHER_SUFFIX)) {
                out.push_str("   <- Other");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct CmpConfig {
    /// Declared invariants of the model to include.
    pub properties: Vec<String>,
    pub reduce: ReduceOptions,
}

/// Strengthens, reduces and model checks the abstract model once. With
/// symmetry on, concrete agent ids and data values are canonicalized.
pub fn cmp_iterate(
    def: &ProtocolDef,
    flows: &[FlowSpec],
    set: &InvSet,
    lemmas: &[Lemma],
    c: u32,
    cfg: &CmpConfig,
    opts: &ReachOptions,
) -> Result<CmpResult, AbstractError> {
    let strong = strengthen(def, lemmas);
    let abs = data_type_reduce(&strong, c, &cfg.reduce)?;
    let model = instantiate(&abs.def, c)?;
    let mut checks = abstract_invariants(&model, flows, set, &cfg.reduce, opts.symmetry)?;
    for name in &cfg.properties {
        let (_, g) = model
            .invariants
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| AbstractError::Check(format!("no declared invariant `{name}`")))?;
        checks.push(Check::property(name.clone(), g.clone()));
    }
    checks.extend(lemma_checks(&model, lemmas)?);
    let report = reach(&model, &checks, opts)?;
    Ok(CmpResult {
        abstract_protocol: abs,
        model,
        report,
    })
}

/// Maps concrete states at size N onto the abstract slot layout.
#[derive(Clone, Debug)]
pub struct Projection {
    /// Per abstract slot: the concrete slot and whether it holds an agent id.
    map: Vec<(usize, bool)>,
    c: u8,
}

impl Projection {
    pub fn new(concrete: &GroundModel, abs: &GroundModel) -> Result<Projection, String> {
        let map = abs
            .slots
            .iter()
            .map(|s| {
                let k = concrete
                    .slot_index(&s.name)
                    .ok_or_else(|| format!("no concrete slot `{}`", s.name))?;
                Ok((k, s.pointer))
            })
            .collect::<Result<_, String>>()?;
        Ok(Projection {
            map,
            c: abs.n as u8,
        })
    }

    pub fn apply(&self, concrete: &GroundModel, s: &State) -> State {
        let n = concrete.n as u8;
        State(
            self.map
                .iter()
                .map(|&(k, pointer)| {
                    let v = s.get(k);
                    if !pointer || v == 0 || v <= self.c {
                        v
                    } else if v == n + 1 {
                        self.c + 1
                    } else {
                        self.c + 2
                    }
                })
                .collect(),
        )
    }
}

/// Result of the containment oracle.
#[derive(Clone, Debug)]
pub struct Containment {
    pub concrete_states: usize,
    /// Canonical abstract states.
    pub abstract_states: usize,
    /// Distinct projected states.
    pub projected: usize,
    /// A concrete state whose projection the abstract model never reaches.
    pub witness: Option<State>,
}

impl Containment {
    pub fn holds(&self) -> bool {
        self.witness.is_none()
    }
}

/// Checks that every concrete reachable state at size `n` projects into the
/// abstract reachable set with `c` concrete agents.
pub fn containment_check(
    def: &ProtocolDef,
    n: u32,
    c: u32,
    opts: &ReduceOptions,
    budget_bytes: u64,
) -> Result<Containment, AbstractError> {
    let concrete = instantiate(def, n)?;
    let abs = data_type_reduce(def, c, opts)?;
    let am = instantiate(&abs.def, c)?;
    let proj = Projection::new(&concrete, &am).map_err(AbstractError::Check)?;
    let cstates = reachable_states(&concrete, budget_bytes)?;
    // The abstract model is symmetric, so comparing canonical forms decides
    // membership in the full reachable set.
    let sym = Symmetry::new(&am).map_err(ReachError::Symmetry)?;
    let astates = canonical_reachable_states(&am, &sym, budget_bytes)?;
    let mut seen = HashSet::new();
    let mut witness = None;
    for s in &cstates {
        let p = proj.apply(&concrete, s);
        if witness.is_none() && !astates.contains(&am.pack(&sym.canonicalize(&p))) {
            witness = Some(s.clone());
        }
        seen.insert(p);
    }
    Ok(Containment {
        concrete_states: cstates.len(),
        abstract_states: astates.len(),
        projected: seen.len(),
        witness,
    })
}
