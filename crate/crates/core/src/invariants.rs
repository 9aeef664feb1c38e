//! Flow-derived invariants: checking, splitting, coverage and diagnosis.

use std::fmt::{self, Write};

use serde_json::{json, Value};

use crate::ast::{Access, Designator, Expr, ProtocolDef, Span};
use crate::check::{check_global_pred, check_index_pred};
use crate::explore::{
    reach, AgentTarget, Check, CheckKind, Outcome, ReachError, ReachOptions, ReachReport, Trace,
};
use crate::flows::{
    blocked_flows, g_enabled, replay_flows, rule_set, validate_flow_coverage, BlockedRule,
    FlowError,
};
use crate::formats::{Assertion, FlowSpec, InvSet, Invariant};
use crate::ground::{ExprError, GroundModel, TRUE};
use crate::pretty::expr_to_string;
use crate::state::State;
use crate::types::Ty;

/// Compiles an invariant into an explorer check.
pub fn invariant_check(
    m: &GroundModel,
    flows: &[FlowSpec],
    inv: &Invariant,
) -> Result<Check, String> {
    let pred = m
        .compile(&inv.pred, &[])
        .map_err(|e| format!("{}: {e}", inv.name))?;
    let agents = (1..=m.n)
        .map(|a| {
            let index = m
                .compile(&inv.index, &[m.agent_binding(&inv.var, a)])
                .map_err(|e| format!("{}: {e}", inv.name))?;
            Ok(AgentTarget {
                agent: a,
                index,
                rules: rule_set(m, flows, a, &inv.target).rules,
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(Check {
        name: inv.name.clone(),
        kind: CheckKind::Flow { pred, agents },
    })
}

/// Compiles a nonemptiness assertion into an explorer check.
pub fn assertion_check(m: &GroundModel, set: &InvSet, a: &Assertion) -> Result<Check, String> {
    let inv = set
        .get(&a.inv)
        .ok_or_else(|| format!("{}: unknown invariant `{}`", a.name, a.inv))?;
    let pred = m
        .compile(&inv.pred, &[])
        .map_err(|e| format!("{}: {e}", a.name))?;
    let members = (1..=m.n)
        .map(|k| {
            m.compile(&inv.index, &[m.agent_binding(&inv.var, k)])
                .map_err(|e| format!("{}: {e}", a.name))
        })
        .collect::<Result<_, String>>()?;
    Ok(Check {
        name: a.name.clone(),
        kind: CheckKind::NonEmpty { pred, members },
    })
}

/// Declared `invariant` properties of the model.
pub fn declared_checks(m: &GroundModel) -> Vec<Check> {
    m.invariants
        .iter()
        .map(|(n, g)| Check::property(n.clone(), g.clone()))
        .collect()
}

/// Every invariant followed by every assertion of the set.
pub fn invset_checks(
    m: &GroundModel,
    flows: &[FlowSpec],
    set: &InvSet,
) -> Result<Vec<Check>, String> {
    let mut out = Vec::new();
    for inv in &set.invariants {
        out.push(invariant_check(m, flows, inv)?);
    }
    for a in &set.assertions {
        out.push(assertion_check(m, set, a)?);
    }
    Ok(out)
}

/// Checks one invariant at one state; `Some(i_f)` names the least agent
/// whose rule set is disabled.
pub fn check_invariant(
    m: &GroundModel,
    flows: &[FlowSpec],
    s: &State,
    inv: &Invariant,
) -> Result<Option<u32>, ExprError> {
    if !m.eval_expr(s, &[], &inv.pred)? {
        return Ok(None);
    }
    for a in 1..=m.n {
        if m.eval_expr(s, &[m.agent_binding(&inv.var, a)], &inv.index)?
            && !g_enabled(m, s, &rule_set(m, flows, a, &inv.target)).map_err(ExprError::Eval)?
        {
            return Ok(Some(a));
        }
    }
    Ok(None)
}

/// `pred ⇒ some agent satisfies index`.
pub fn check_assertion(m: &GroundModel, s: &State, inv: &Invariant) -> Result<bool, ExprError> {
    if !m.eval_expr(s, &[], &inv.pred)? {
        return Ok(true);
    }
    for a in 1..=m.n {
        if m.eval_expr(s, &[m.agent_binding(&inv.var, a)], &inv.index)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Names the agent that must stay enabled under the conflict condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    /// A global pointer variable: `{i | i = ptr}`.
    Pointer(String),
    /// A membership predicate in the index variable.
    Member(Expr),
}

impl Witness {
    pub fn index(&self, var: &str) -> Expr {
        match self {
            Witness::Pointer(p) => Expr::eq(Expr::var(var), Expr::var(p)),
            Witness::Member(e) => e.clone(),
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Pointer(p) => write!(f, "ptr {p}"),
            Witness::Member(e) => write!(f, "member {}", expr_to_string(e)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitRequest {
    pub target: String,
    pub conf: Expr,
    pub witness: Witness,
    /// Names of the two halves; defaults to `<target>.1` and `<target>.2`.
    pub names: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("no invariant named `{0}`")]
    Unknown(String),
    #[error("invariant `{0}` already exists")]
    Duplicate(String),
    #[error("conf: {0}")]
    Conf(String),
    #[error("witness: {0}")]
    Witness(String),
}

/// The result of one split.
#[derive(Clone, Debug)]
pub struct Split {
    pub set: InvSet,
    pub inv1: Invariant,
    pub inv2: Invariant,
}

fn trivially_nonempty(index: &Expr) -> bool {
    matches!(index, Expr::Bool(true))
}

/// Splits an invariant on a conflict condition.
///
/// `inv1` keeps the index set under `¬conf`; `inv2` takes the witness index
/// set under `conf`. Both replace the original in place, and its assertion
/// is replaced by assertions for both halves (skipping an index set that is
/// the constant `true`).
pub fn split_invariant(
    def: &ProtocolDef,
    set: &InvSet,
    req: &SplitRequest,
) -> Result<Split, SplitError> {
    let pos = set
        .invariants
        .iter()
        .position(|i| i.name == req.target)
        .ok_or_else(|| SplitError::Unknown(req.target.clone()))?;
    let inv = &set.invariants[pos];
    check_global_pred(def, &req.conf).map_err(SplitError::Conf)?;
    let index2 = req.witness.index(&inv.var);
    check_index_pred(def, &inv.var, &index2).map_err(SplitError::Witness)?;
    let (n1, n2) = req
        .names
        .clone()
        .unwrap_or_else(|| (format!("{}.1", inv.name), format!("{}.2", inv.name)));
    for n in [&n1, &n2] {
        if set.invariants.iter().any(|i| &i.name == n) {
            return Err(SplitError::Duplicate(n.clone()));
        }
    }
    let inv1 = Invariant {
        name: n1,
        pred: Expr::and_simplified(inv.pred.clone(), Expr::not_simplified(req.conf.clone())),
        var: inv.var.clone(),
        index: inv.index.clone(),
        target: inv.target.clone(),
        span: Span::default(),
    };
    let inv2 = Invariant {
        name: n2,
        pred: Expr::and_simplified(inv.pred.clone(), req.conf.clone()),
        var: inv.var.clone(),
        index: index2,
        target: inv.target.clone(),
        span: Span::default(),
    };
    let mut out = set.clone();
    out.invariants
        .splice(pos..=pos, [inv1.clone(), inv2.clone()]);
    let apos = out
        .assertions
        .iter()
        .position(|a| a.inv == inv.name)
        .unwrap_or(out.assertions.len());
    out.assertions.retain(|a| a.inv != inv.name);
    let fresh: Vec<Assertion> = [&inv1, &inv2]
        .into_iter()
        .filter(|i| !trivially_nonempty(&i.index))
        .map(|i| Assertion::for_invariant(&i.name))
        .collect();
    let apos = apos.min(out.assertions.len());
    out.assertions.splice(apos..apos, fresh);
    Ok(Split {
        set: out,
        inv1,
        inv2,
    })
}

/// The partition check: some invariant predicate holds.
pub fn partition_check(m: &GroundModel, set: &InvSet) -> Result<Check, String> {
    let preds = set
        .invariants
        .iter()
        .map(|i| m.compile(&i.pred, &[]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("partition predicate: {e}"))?;
    Ok(Check {
        name: "partition".into(),
        kind: CheckKind::Partition(preds),
    })
}

/// Checks that some invariant predicate holds in every reachable state.
pub fn check_partition_coverage(
    m: &GroundModel,
    set: &InvSet,
    opts: &ReachOptions,
) -> Result<ReachReport, ReachError> {
    let check = partition_check(m, set).map_err(ReachError::Compile)?;
    reach(m, &[check], opts)
}

/// Outcome of running the invariants and the s-deadlock check together.
#[derive(Clone, Debug)]
pub struct TheoremVerdict {
    /// False only if every invariant and assertion passed yet an s-deadlock
    /// was found.
    pub consistent: bool,
    pub invariants_pass: bool,
    pub sdeadlock_free: bool,
    pub report: ReachReport,
}

pub fn theorem_oracle(
    m: &GroundModel,
    flows: &[FlowSpec],
    set: &InvSet,
    opts: &ReachOptions,
) -> Result<TheoremVerdict, String> {
    let mut checks = invset_checks(m, flows, set)?;
    checks.push(Check::sdeadlock());
    let opts = ReachOptions {
        fail_fast: false,
        ..opts.clone()
    };
    let report = reach(m, &checks, &opts).map_err(|e| e.to_string())?;
    if !matches!(report.outcome, Outcome::Complete) {
        return Err(format!(
            "exploration did not complete: {:?}",
            report.outcome
        ));
    }
    let (dead, rest): (Vec<_>, Vec<_>) = report.checks.iter().partition(|c| c.kind == "sdeadlock");
    let invariants_pass = rest.iter().all(|c| c.verdict.passed());
    let sdeadlock_free = dead.iter().all(|c| c.verdict.passed());
    Ok(TheoremVerdict {
        consistent: !(invariants_pass && !sdeadlock_free),
        invariants_pass,
        sdeadlock_free,
        report,
    })
}

/// Advisory report for a failing invariant.
#[derive(Clone, Debug)]
pub struct DiagnosisReport {
    pub invariant: String,
    pub failing_agent: u32,
    /// Blocked next rules of the failing agent's open flow instances.
    pub blocked: Vec<BlockedRule>,
    /// The rule whose guard is examined for conflict material.
    pub blocking_rule: Option<String>,
    pub false_atoms: Vec<String>,
    /// Agents whose rule set is enabled at the final state.
    pub enabled_agents: Vec<u32>,
    pub witness_candidates: Vec<Witness>,
    /// Enabled rule instances of the failing agent that lie outside its
    /// rule set; nonempty means flows and protocol disagree.
    pub outside_enabled: Vec<String>,
    /// Agent rulesets that belong to no flow.
    pub uncovered: Vec<String>,
    pub trace: Trace,
}

impl DiagnosisReport {
    /// Flows and protocol disagree.
    pub fn mismatch(&self) -> bool {
        !self.outside_enabled.is_empty()
    }

    pub fn to_text(&self, m: &GroundModel) -> String {
        let mut out = self.trace.to_text(m);
        for b in &self.blocked {
            let _ = writeln!(out, "{b}");
        }
        let _ = writeln!(out, "DIAGNOSIS {}", self.invariant);
        let _ = writeln!(out, "  failing agent: {}", self.failing_agent);
        if let Some(r) = &self.blocking_rule {
            let _ = writeln!(out, "  blocked on: {r}({})", self.failing_agent);
        }
        let _ = writeln!(out, "  false atoms: [{}]", self.false_atoms.join(", "));
        let agents: Vec<String> = self.enabled_agents.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "  enabled agents: [{}]", agents.join(", "));
        let wits: Vec<String> = self
            .witness_candidates
            .iter()
            .map(Witness::to_string)
            .collect();
        let _ = writeln!(out, "  witness candidates: [{}]", wits.join(", "));
        if self.mismatch() {
            let _ = writeln!(
                out,
                "  flow/protocol mismatch: enabled outside the flows: [{}]",
                self.outside_enabled.join(", ")
            );
        }
        if !self.uncovered.is_empty() {
            let _ = writeln!(out, "  uncovered rules: [{}]", self.uncovered.join(", "));
        }
        out
    }

    pub fn to_json(&self, m: &GroundModel) -> Value {
        json!({
            "invariant": self.invariant,
            "failing_agent": self.failing_agent,
            "blocked": self.blocked.iter().map(|b| json!({
                "flow": b.flow,
                "agent": b.agent,
                "rule": b.rule,
                "guard_atoms_false": b.false_atoms,
                "flow_blocked": b.flow_blocked,
            })).collect::<Vec<_>>(),
            "blocking_rule": self.blocking_rule,
            "false_atoms": self.false_atoms,
            "enabled_agents": self.enabled_agents,
            "witness_candidates": self.witness_candidates.iter().map(|w| match w {
                Witness::Pointer(p) => json!({ "ptr": p }),
                Witness::Member(e) => json!({ "member": expr_to_string(e) }),
            }).collect::<Vec<_>>(),
            "outside_enabled": self.outside_enabled,
            "uncovered": self.uncovered,
            "trace": self.trace.to_json(m),
        })
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum DiagnosisError {
    #[error("no invariant named `{0}`")]
    Unknown(String),
    #[error("invariant `{0}` holds at the end of the trace")]
    Holds(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Builds the conf/ptr diagnosis for an invariant counterexample.
pub fn derive_diagnostics(
    m: &GroundModel,
    flows: &[FlowSpec],
    set: &InvSet,
    invariant: &str,
    trace: &Trace,
) -> Result<DiagnosisReport, DiagnosisError> {
    let inv = set
        .get(invariant)
        .ok_or_else(|| DiagnosisError::Unknown(invariant.into()))?;
    let s = trace.final_state();
    let i_f = check_invariant(m, flows, s, inv)?
        .ok_or_else(|| DiagnosisError::Holds(invariant.into()))?;
    let replay = replay_flows(m, &trace.steps, flows)?;
    let blocked: Vec<BlockedRule> = blocked_flows(m, s, flows, &replay)
        .map_err(ExprError::Eval)?
        .into_iter()
        .filter(|b| b.agent == i_f)
        .collect();
    // The instance that got furthest along its flow is the one holding the
    // agent up.
    let progress = |b: &BlockedRule| {
        replay.instances[b.instance]
            .fired
            .iter()
            .filter(|f| **f)
            .count()
    };
    let rl_f = blocked
        .iter()
        .filter(|b| b.flow_blocked)
        .rev()
        .max_by_key(|b| progress(b))
        .or(blocked.first());
    let mut enabled_agents = Vec::new();
    for a in 1..=m.n {
        if g_enabled(m, s, &rule_set(m, flows, a, &inv.target)).map_err(ExprError::Eval)? {
            enabled_agents.push(a);
        }
    }
    let rs = rule_set(m, flows, i_f, &inv.target);
    let mut outside_enabled = Vec::new();
    for (k, ri) in m.rules.iter().enumerate() {
        if ri.agent == Some(i_f)
            && !rs.rules.contains(&k)
            && m.enabled(s, ri).map_err(ExprError::Eval)?
        {
            outside_enabled.push(ri.label());
        }
    }
    Ok(DiagnosisReport {
        invariant: invariant.into(),
        failing_agent: i_f,
        blocking_rule: rl_f.map(|b| b.rule.clone()),
        false_atoms: rl_f.map(|b| b.false_atoms.clone()).unwrap_or_default(),
        blocked,
        witness_candidates: witness_candidates(m, s, &enabled_agents, &inv.var),
        enabled_agents,
        outside_enabled,
        uncovered: validate_flow_coverage(&m.def, flows),
        trace: trace.clone(),
    })
}

/// Global pointers whose value is an enabled agent, and global agent-indexed
/// boolean arrays with an entry set for an enabled agent.
fn witness_candidates(m: &GroundModel, s: &State, enabled: &[u32], var: &str) -> Vec<Witness> {
    let mut out = Vec::new();
    for (k, slot) in m.slots.iter().enumerate() {
        if slot.local {
            continue;
        }
        let v = s.get(k) as u32;
        if slot.pointer && slot.indices.is_empty() && enabled.contains(&v) {
            out.push(Witness::Pointer(slot.name.clone()));
        }
        let member = slot.agent.is_some() && matches!(slot.ty, Ty::Bool) && slot.indices.len() == 1;
        if member && v == TRUE as u32 && slot.agent.is_some_and(|a| enabled.contains(&a)) {
            let root = m.def.vars[slot.var].name.clone();
            let w = Witness::Member(Expr::Var(Designator {
                root,
                path: vec![Access::Index(Box::new(Expr::var(var)))],
            }));
            if !out.contains(&w) {
                out.push(w);
            }
        }
    }
    out
}
