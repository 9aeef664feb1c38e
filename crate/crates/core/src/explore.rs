//! Breadth-first reachability with on-the-fly checks and shortest traces.

use std::fmt::Write;
use std::time::{Duration, Instant};

use indexmap::IndexSet;
use rayon::prelude::*;
use rustc_hash::FxBuildHasher;
use serde_json::{json, Value};

use crate::ground::{EvalError, GExpr, GroundModel};
use crate::state::{PackedState, State};
use crate::symmetry::{Symmetry, SymmetryError};

/// Default memory budget for the visited set.
pub const DEFAULT_BUDGET: u64 = 4 << 30;

const CHUNK: usize = 1 << 14;
const NO_PARENT: u32 = u32::MAX;

/// Order in which rule instances are tried from each state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RuleOrder {
    /// Ruleset declaration order, then parameter values ascending.
    #[default]
    Declaration,
    /// Rulesets in reverse declaration order, parameter values ascending.
    ReverseRulesets,
}

#[derive(Clone, Debug)]
pub struct ReachOptions {
    pub symmetry: bool,
    pub fail_fast: bool,
    /// Worker threads; 0 selects the available parallelism.
    pub workers: usize,
    pub budget_bytes: u64,
    pub rule_order: RuleOrder,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            symmetry: false,
            fail_fast: false,
            workers: 0,
            budget_bytes: DEFAULT_BUDGET,
            rule_order: RuleOrder::Declaration,
        }
    }
}

/// One agent's share of a flow-derived invariant.
#[derive(Clone, Debug)]
pub struct AgentTarget {
    pub agent: u32,
    /// Membership of the agent in the invariant's index set.
    pub index: GExpr,
    /// Rule instances forming RS(agent).
    pub rules: Vec<usize>,
}

#[derive(Clone, Debug)]
pub enum CheckKind {
    /// A state predicate that must hold everywhere.
    Property(GExpr),
    /// `pred ⇒ ∀ agent ∈ index: g(RS(agent))`.
    Flow {
        pred: GExpr,
        agents: Vec<AgentTarget>,
    },
    /// `pred ⇒ ∃ member`.
    NonEmpty { pred: GExpr, members: Vec<GExpr> },
    /// Some rule instance is enabled.
    SDeadlock,
    /// The disjunction of the predicates holds.
    Partition(Vec<GExpr>),
}

impl CheckKind {
    pub fn label(&self) -> &'static str {
        match self {
            CheckKind::Property(_) => "property",
            CheckKind::Flow { .. } => "invariant",
            CheckKind::NonEmpty { .. } => "assertion",
            CheckKind::SDeadlock => "sdeadlock",
            CheckKind::Partition(_) => "partition",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
}

impl Check {
    pub fn property(name: impl Into<String>, g: GExpr) -> Check {
        Check {
            name: name.into(),
            kind: CheckKind::Property(g),
        }
    }

    pub fn sdeadlock() -> Check {
        Check {
            name: "s-deadlock".into(),
            kind: CheckKind::SDeadlock,
        }
    }

    /// Evaluates the check; `Ok(None)` means it holds, `Ok(Some(a))` that it
    /// fails (with the least failing agent for flow invariants, else 0).
    pub fn eval(
        &self,
        m: &GroundModel,
        s: &State,
        enabled: &[bool],
    ) -> Result<Option<u32>, EvalError> {
        match &self.kind {
            CheckKind::Property(g) => Ok((!m.eval_bool(g, s)?).then_some(0)),
            CheckKind::Flow { pred, agents } => {
                if !m.eval_bool(pred, s)? {
                    return Ok(None);
                }
                for t in agents {
                    if m.eval_bool(&t.index, s)? && !t.rules.iter().any(|&r| enabled[r]) {
                        return Ok(Some(t.agent));
                    }
                }
                Ok(None)
            }
            CheckKind::NonEmpty { pred, members } => {
                if !m.eval_bool(pred, s)? {
                    return Ok(None);
                }
                for g in members {
                    if m.eval_bool(g, s)? {
                        return Ok(None);
                    }
                }
                Ok(Some(0))
            }
            CheckKind::SDeadlock => Ok((!enabled.iter().any(|&e| e)).then_some(0)),
            CheckKind::Partition(preds) => {
                for g in preds {
                    if m.eval_bool(g, s)? {
                        return Ok(None);
                    }
                }
                Ok(Some(0))
            }
        }
    }
}

/// An initial state and a sequence of fired rule instances.
#[derive(Clone, Debug)]
pub struct Trace {
    pub check: String,
    /// Index of the initial state in `GroundModel::initial_states`.
    pub init: usize,
    /// Fired rule instances (indices into `GroundModel::rules`).
    pub steps: Vec<usize>,
    /// Every visited state, `steps.len() + 1` of them.
    pub states: Vec<State>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("a trace has at least one state")
    }

    pub fn labels(&self, m: &GroundModel) -> Vec<String> {
        self.steps.iter().map(|&r| m.rules[r].label()).collect()
    }

    /// Replays from the initial state and checks every guard and state.
    pub fn validate(&self, m: &GroundModel) -> Result<(), String> {
        let inits = m.initial_states().map_err(|e| e.to_string())?;
        let mut s = inits
            .get(self.init)
            .cloned()
            .ok_or("bad initial state index")?;
        if s != self.states[0] {
            return Err("initial state mismatch".into());
        }
        for (k, &r) in self.steps.iter().enumerate() {
            let ri = &m.rules[r];
            if !m.enabled(&s, ri).map_err(|e| e.to_string())? {
                return Err(format!("step {}: {} is not enabled", k + 1, ri.label()));
            }
            s = m.fire(&s, ri).map_err(|e| e.to_string())?;
            if s != self.states[k + 1] {
                return Err(format!("step {}: state mismatch", k + 1));
            }
        }
        Ok(())
    }

    /// The text rendering: header, numbered steps, then the final state.
    pub fn to_text(&self, m: &GroundModel) -> String {
        let mut out = format!("TRACE {} len={}\n", self.check, self.len());
        for (k, label) in self.labels(m).iter().enumerate() {
            let _ = writeln!(out, "  {}: {label}", k + 1);
        }
        out.push_str("  STATE:\n");
        for line in m.render_state(self.final_state()) {
            let _ = writeln!(out, "    {line}");
        }
        out
    }

    pub fn to_json(&self, m: &GroundModel) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|&r| json!({ "rule": m.rules[r].name, "args": m.rules[r].args }))
            .collect();
        let state: serde_json::Map<String, Value> = (0..m.slots.len())
            .map(|k| {
                (
                    m.slots[k].name.clone(),
                    Value::String(m.format_slot(self.final_state(), k)),
                )
            })
            .collect();
        json!({ "check": self.check, "len": self.len(), "steps": steps, "state": state })
    }
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Pass,
    /// First failure found, with a shortest trace and the failing agent for
    /// flow invariants.
    Fail {
        trace: Trace,
        agent: Option<u32>,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn trace(&self) -> Option<&Trace> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail { trace, .. } => Some(trace),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub kind: &'static str,
    pub verdict: Verdict,
}

#[derive(Clone, Debug)]
pub enum Outcome {
    /// The whole reachable set was explored.
    Complete,
    /// Stopped at the first failure.
    Stopped,
    /// The visited set outgrew the memory budget.
    OutOfBudget,
    /// A guard, action or check raised an evaluation error.
    Error {
        message: String,
        trace: Option<Trace>,
    },
}

#[derive(Clone, Debug)]
pub struct ReachReport {
    pub states: usize,
    pub transitions: u64,
    /// Number of BFS layers explored.
    pub depth: usize,
    pub checks: Vec<CheckReport>,
    pub outcome: Outcome,
    pub elapsed: Duration,
}

impl ReachReport {
    /// Every check passed on a complete exploration.
    pub fn all_passed(&self) -> bool {
        matches!(self.outcome, Outcome::Complete) && self.checks.iter().all(|c| c.verdict.passed())
    }

    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(|c| !c.verdict.passed())
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.check(name).map(|c| &c.verdict)
    }

    pub fn to_json(&self, m: &GroundModel) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| match &c.verdict {
                Verdict::Pass => json!({ "name": c.name, "kind": c.kind, "verdict": "pass" }),
                Verdict::Fail { trace, agent } => json!({
                    "name": c.name,
                    "kind": c.kind,
                    "verdict": "fail",
                    "failing_agent": agent,
                    "trace": trace.to_json(m),
                }),
            })
            .collect();
        let outcome = match &self.outcome {
            Outcome::Complete => json!("complete"),
            Outcome::Stopped => json!("stopped"),
            Outcome::OutOfBudget => json!("out_of_budget"),
            Outcome::Error { message, trace } => json!({
                "error": message,
                "trace": trace.as_ref().map(|t| t.to_json(m)),
            }),
        };
        json!({
            "states": self.states,
            "transitions": self.transitions,
            "depth": self.depth,
            "outcome": outcome,
            "checks": checks,
        })
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum ReachError {
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("initial states: {0}")]
    Init(EvalError),
    #[error("state space exceeds the memory budget after {0} states")]
    OutOfBudget(usize),
    #[error("cannot compile check: {0}")]
    Compile(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Enabled rule instances of `s` with their successors, in declaration
/// order.
pub fn successors(m: &GroundModel, s: &State) -> Result<Vec<(usize, State)>, EvalError> {
    let mut out = Vec::new();
    for (k, ri) in m.rules.iter().enumerate() {
        if m.enabled(s, ri)? {
            out.push((k, m.fire(s, ri)?));
        }
    }
    Ok(out)
}

/// Enabledness of every rule instance.
pub fn enabled_vector(m: &GroundModel, s: &State) -> Result<Vec<bool>, EvalError> {
    m.rules.iter().map(|ri| m.enabled(s, ri)).collect()
}

/// Instance indices in firing order.
pub fn instance_order(m: &GroundModel, order: RuleOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.rules.len()).collect();
    if order == RuleOrder::ReverseRulesets {
        // stable sort keeps parameter order within a ruleset
        idx.sort_by_key(|&k| std::cmp::Reverse(m.rules[k].rule));
    }
    idx
}

struct Expansion {
    failed: Vec<(usize, u32)>,
    succs: Vec<(u32, PackedState)>,
    error: Option<EvalError>,
}

fn expand(
    m: &GroundModel,
    sym: Option<&Symmetry>,
    order: &[usize],
    checks: &[Check],
    open: &[bool],
    p: &PackedState,
) -> Expansion {
    let s = m.unpack(p);
    let mut ex = Expansion {
        failed: Vec::new(),
        succs: Vec::new(),
        error: None,
    };
    let enabled = match enabled_vector(m, &s) {
        Ok(e) => e,
        Err(e) => {
            ex.error = Some(e);
            return ex;
        }
    };
    for (c, check) in checks.iter().enumerate() {
        if !open[c] {
            continue;
        }
        match check.eval(m, &s, &enabled) {
            Ok(None) => {}
            Ok(Some(a)) => ex.failed.push((c, a)),
            Err(e) => {
                ex.error = Some(e);
                return ex;
            }
        }
    }
    for &r in order {
        if !enabled[r] {
            continue;
        }
        match m.fire(&s, &m.rules[r]) {
            Ok(t) => {
                let t = match sym {
                    Some(sym) => sym.canonicalize(&t),
                    None => t,
                };
                ex.succs.push((r as u32, m.pack(&t)));
            }
            Err(e) => {
                ex.error = Some(e);
                return ex;
            }
        }
    }
    ex
}

struct Search<'a> {
    m: &'a GroundModel,
    sym: Option<Symmetry>,
    order: Vec<usize>,
    visited: IndexSet<PackedState, FxBuildHasher>,
    parents: Vec<(u32, u32)>,
}

impl Search<'_> {
    /// Rebuilds the trace to visited state `idx`.
    fn trace(&self, idx: usize, check: &str) -> Trace {
        let mut path = Vec::new();
        let mut cur = idx;
        let init = loop {
            let (parent, rule) = self.parents[cur];
            if parent == NO_PARENT {
                break rule as usize;
            }
            path.push((cur, rule as usize));
            cur = parent as usize;
        };
        path.reverse();
        let inits = self
            .m
            .initial_states()
            .expect("initial states evaluated before");
        let mut states = vec![inits[init].clone()];
        let mut steps = Vec::new();
        for (child, rule) in path {
            let s = states.last().unwrap();
            match &self.sym {
                None => {
                    steps.push(rule);
                    states.push(self.m.unpack(&self.visited[child]));
                }
                Some(sym) => {
                    // The stored edge fired from a representative; find the
                    // matching instance from the concrete state.
                    let want = &self.visited[child];
                    let (r, t) = self
                        .order
                        .iter()
                        .filter_map(|&r| {
                            let ri = &self.m.rules[r];
                            match self.m.enabled(s, ri) {
                                Ok(true) => self.m.fire(s, ri).ok().map(|t| (r, t)),
                                _ => None,
                            }
                        })
                        .find(|(_, t)| self.m.pack(&sym.canonicalize(t)) == *want)
                        .expect("symmetric replay finds a matching successor");
                    steps.push(r);
                    states.push(t);
                }
            }
        }
        Trace {
            check: check.to_string(),
            init,
            steps,
            states,
        }
    }
}

/// Explores the reachable states of `m`, evaluating `checks` on each.
pub fn reach(
    m: &GroundModel,
    checks: &[Check],
    opts: &ReachOptions,
) -> Result<ReachReport, ReachError> {
    let start = Instant::now();
    let sym = if opts.symmetry {
        Some(Symmetry::new(m)?)
    } else {
        None
    };
    let workers = if opts.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        opts.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ReachError::Pool(e.to_string()))?;
    let mut search = Search {
        m,
        sym,
        order: instance_order(m, opts.rule_order),
        visited: IndexSet::with_hasher(FxBuildHasher),
        parents: Vec::new(),
    };
    for (k, s) in m
        .initial_states()
        .map_err(ReachError::Init)?
        .into_iter()
        .enumerate()
    {
        let s = match &search.sym {
            Some(sym) => sym.canonicalize(&s),
            None => s,
        };
        if search.visited.insert(m.pack(&s)) {
            search.parents.push((NO_PARENT, k as u32));
        }
    }
    let bytes_per_state = (m.layout.words() * 8 + 48) as u64;
    let mut failed: Vec<Option<(usize, u32)>> = vec![None; checks.len()];
    let mut open = vec![true; checks.len()];
    let mut transitions = 0u64;
    let mut depth = 0usize;
    let mut outcome = Outcome::Complete;
    let mut layer_start = 0usize;
    'layers: while layer_start < search.visited.len() {
        let layer_end = search.visited.len();
        depth += 1;
        let mut lo = layer_start;
        while lo < layer_end {
            let hi = (lo + CHUNK).min(layer_end);
            let results: Vec<Expansion> = {
                let search = &search;
                let open = &open;
                pool.install(|| {
                    (lo..hi)
                        .into_par_iter()
                        .map(|idx| {
                            expand(
                                m,
                                search.sym.as_ref(),
                                &search.order,
                                checks,
                                open,
                                &search.visited[idx],
                            )
                        })
                        .collect()
                })
            };
            for (off, ex) in results.into_iter().enumerate() {
                let idx = lo + off;
                if let Some(e) = ex.error {
                    let trace = search.trace(idx, "error");
                    outcome = Outcome::Error {
                        message: e.to_string(),
                        trace: Some(trace),
                    };
                    break 'layers;
                }
                for (c, a) in ex.failed {
                    if failed[c].is_none() {
                        failed[c] = Some((idx, a));
                        open[c] = false;
                    }
                }
                transitions += ex.succs.len() as u64;
                for (r, p) in ex.succs {
                    let (_, new) = search.visited.insert_full(p);
                    if new {
                        search.parents.push((idx as u32, r));
                    }
                }
            }
            if search.visited.len() as u64 * bytes_per_state > opts.budget_bytes {
                outcome = Outcome::OutOfBudget;
                break 'layers;
            }
            let all_failed = !failed.is_empty() && failed.iter().all(Option::is_some);
            if all_failed || (opts.fail_fast && failed.iter().any(Option::is_some)) {
                outcome = Outcome::Stopped;
                break 'layers;
            }
            lo = hi;
        }
        layer_start = layer_end;
    }
    let reports = checks
        .iter()
        .zip(&failed)
        .map(|(check, f)| {
            let verdict = match f {
                None => Verdict::Pass,
                Some((idx, _)) => {
                    let trace = search.trace(*idx, &check.name);
                    let s = trace.final_state();
                    let agent = match &check.kind {
                        CheckKind::Flow { .. } => enabled_vector(m, s)
                            .ok()
                            .and_then(|en| check.eval(m, s, &en).ok().flatten()),
                        _ => None,
                    };
                    Verdict::Fail { trace, agent }
                }
            };
            CheckReport {
                name: check.name.clone(),
                kind: check.kind.label(),
                verdict,
            }
        })
        .collect();
    Ok(ReachReport {
        states: search.visited.len(),
        transitions,
        depth,
        checks: reports,
        outcome,
        elapsed: start.elapsed(),
    })
}

/// Searches for a reachable state with no enabled rule instance.
pub fn check_sdeadlock(m: &GroundModel, opts: &ReachOptions) -> Result<ReachReport, ReachError> {
    reach(m, &[Check::sdeadlock()], opts)
}

/// Every reachable state (raw, without symmetry), in BFS order.
/// Evaluation errors are reported as `Init`.
pub fn reachable_states(m: &GroundModel, budget_bytes: u64) -> Result<Vec<State>, ReachError> {
    Ok(bfs_states(m, budget_bytes, |s| s)?
        .iter()
        .map(|p| m.unpack(p))
        .collect())
}

/// Canonical representatives of the reachable states under the model's
/// scalarset symmetry.
pub fn canonical_reachable_states(
    m: &GroundModel,
    sym: &Symmetry,
    budget_bytes: u64,
) -> Result<IndexSet<PackedState, FxBuildHasher>, ReachError> {
    bfs_states(m, budget_bytes, |s| sym.canonicalize(&s))
}

fn bfs_states(
    m: &GroundModel,
    budget_bytes: u64,
    canon: impl Fn(State) -> State,
) -> Result<IndexSet<PackedState, FxBuildHasher>, ReachError> {
    let mut visited: IndexSet<PackedState, FxBuildHasher> = IndexSet::with_hasher(FxBuildHasher);
    for s in m.initial_states().map_err(ReachError::Init)? {
        visited.insert(m.pack(&canon(s)));
    }
    let bytes_per_state = (m.layout.words() * 8 + 48) as u64;
    let mut k = 0;
    while k < visited.len() {
        let s = m.unpack(&visited[k]);
        for (_, t) in successors(m, &s).map_err(ReachError::Init)? {
            visited.insert(m.pack(&canon(t)));
        }
        if visited.len() as u64 * bytes_per_state > budget_bytes {
            return Err(ReachError::OutOfBudget(visited.len()));
        }
        k += 1;
    }
    Ok(visited)
}
