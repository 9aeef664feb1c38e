//! Flow instances, trace replay, the g operator and blocked-flow detection.

use std::fmt;

use crate::ast::{resugar, ProtocolDef};
use crate::explore::Trace;
use crate::formats::{FlowSpec, Target};
use crate::ground::{EvalError, GroundModel};
use crate::pretty::expr_to_string;
use crate::state::State;

/// Most open instances allowed per (flow, agent) during replay.
pub const MAX_OPEN: usize = 4;

/// The rule instances an invariant's g operator ranges over for one agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentRuleSet {
    pub agent: u32,
    /// Indices into `GroundModel::rules`.
    pub rules: Vec<usize>,
}

/// RS(agent): the agent's flow rules, or an explicit list of rule names.
/// With no flows at all every rule of the agent is included.
pub fn rule_set(m: &GroundModel, flows: &[FlowSpec], agent: u32, target: &Target) -> AgentRuleSet {
    let wanted = |name: &str| match target {
        Target::Rules(names) => names.iter().any(|n| n == name),
        Target::All => flows.is_empty() || flows.iter().any(|f| f.contains(name)),
    };
    let rules = m
        .rules
        .iter()
        .enumerate()
        .filter(|(_, ri)| ri.agent == Some(agent) && wanted(&ri.name))
        .map(|(k, _)| k)
        .collect();
    AgentRuleSet { agent, rules }
}

/// Members of one flow for one agent.
pub fn flow_rule_set(m: &GroundModel, flow: &FlowSpec, agent: u32) -> AgentRuleSet {
    rule_set(m, std::slice::from_ref(flow), agent, &Target::All)
}

/// The g operator: some rule of the set is enabled.
pub fn g_enabled(m: &GroundModel, s: &State, rs: &AgentRuleSet) -> Result<bool, EvalError> {
    for &r in &rs.rules {
        if m.enabled(s, &m.rules[r])? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Rulesets over the agent type that belong to no flow.
pub fn validate_flow_coverage(def: &ProtocolDef, flows: &[FlowSpec]) -> Vec<String> {
    let agent = def.agent_type_name();
    def.rules
        .iter()
        .filter(|r| {
            r.params
                .first()
                .is_some_and(|p| Some(p.ty.as_str()) == agent)
        })
        .filter(|r| !flows.iter().any(|f| f.contains(&r.name)))
        .map(|r| r.name.clone())
        .collect()
}

/// One run of a flow by one agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowInstance {
    /// Index into the flow list used for replay.
    pub flow: usize,
    pub name: String,
    pub agent: u32,
    /// Per member of the flow.
    pub fired: Vec<bool>,
    /// Trace step (0-based) that opened the instance.
    pub opened_at: usize,
}

impl FlowInstance {
    pub fn new(flow: usize, spec: &FlowSpec, agent: u32, opened_at: usize) -> FlowInstance {
        FlowInstance {
            flow,
            name: spec.name.clone(),
            agent,
            fired: vec![false; spec.members.len()],
            opened_at,
        }
    }

    /// Every predecessor of `rule` has fired.
    pub fn precondition(&self, spec: &FlowSpec, rule: &str) -> bool {
        match spec.index_of(rule) {
            Some(k) => spec.predecessors(k).iter().all(|&p| self.fired[p]),
            None => false,
        }
    }

    pub fn has_fired(&self, spec: &FlowSpec, rule: &str) -> bool {
        spec.index_of(rule).map(|k| self.fired[k]).unwrap_or(false)
    }

    /// All required members have fired.
    pub fn is_closed(&self, spec: &FlowSpec) -> bool {
        self.fired
            .iter()
            .zip(&spec.optional)
            .all(|(f, opt)| *f || *opt)
    }
}

impl fmt::Display for FlowInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.agent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attribution {
    Instance(usize),
    /// The fired rule belongs to no flow of its agent.
    Outside,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub instances: Vec<FlowInstance>,
    /// One entry per trace step.
    pub steps: Vec<Attribution>,
}

impl Replay {
    /// Instances still waiting for a required member.
    pub fn open<'a>(
        &'a self,
        flows: &'a [FlowSpec],
    ) -> impl Iterator<Item = (usize, &'a FlowInstance)> + 'a {
        self.instances
            .iter()
            .enumerate()
            .filter(move |(_, inst)| !inst.is_closed(&flows[inst.flow]))
    }

    pub fn outside(&self) -> bool {
        self.steps.contains(&Attribution::Outside)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FlowError {
    #[error("step {step}: `{rule}` cannot be attributed to any flow instance")]
    UnattributableRule { step: usize, rule: String },
    #[error("step {step}: more than {MAX_OPEN} open `{flow}` instances for agent {agent}")]
    TooManyOpen {
        step: usize,
        flow: String,
        agent: u32,
    },
}

/// Replays fired rule instances into flow instances.
///
/// A fired rule joins the oldest open instance of its agent whose
/// precondition holds and which has not fired it yet. Otherwise it opens a
/// new instance of the first flow where it is minimal. An optional member
/// with no open home attaches to the most recently closed instance that
/// allows it.
pub fn replay_flows(
    m: &GroundModel,
    steps: &[usize],
    flows: &[FlowSpec],
) -> Result<Replay, FlowError> {
    let mut out = Replay {
        instances: Vec::new(),
        steps: Vec::new(),
    };
    for (step, &r) in steps.iter().enumerate() {
        let ri = &m.rules[r];
        let Some(agent) = ri.agent else {
            out.steps.push(Attribution::Outside);
            continue;
        };
        if !flows.iter().any(|f| f.contains(&ri.name)) {
            out.steps.push(Attribution::Outside);
            continue;
        }
        let unattributable = || FlowError::UnattributableRule {
            step: step + 1,
            rule: ri.label(),
        };
        let joinable = |inst: &FlowInstance| {
            let spec = &flows[inst.flow];
            inst.agent == agent
                && spec.contains(&ri.name)
                && !inst.is_closed(spec)
                && !inst.has_fired(spec, &ri.name)
                && inst.precondition(spec, &ri.name)
        };
        let target = if let Some(k) = out.instances.iter().position(joinable) {
            k
        } else if let Some(f) = flows.iter().position(|f| {
            f.index_of(&ri.name)
                .map(|k| f.is_minimal(k))
                .unwrap_or(false)
        }) {
            let open = out
                .instances
                .iter()
                .filter(|i| i.flow == f && i.agent == agent && !i.is_closed(&flows[f]))
                .count();
            if open >= MAX_OPEN {
                return Err(FlowError::TooManyOpen {
                    step: step + 1,
                    flow: flows[f].name.clone(),
                    agent,
                });
            }
            out.instances
                .push(FlowInstance::new(f, &flows[f], agent, step));
            out.instances.len() - 1
        } else {
            out.instances
                .iter()
                .rposition(|inst| {
                    let spec = &flows[inst.flow];
                    inst.agent == agent
                        && inst.is_closed(spec)
                        && spec
                            .index_of(&ri.name)
                            .map(|k| spec.optional[k])
                            .unwrap_or(false)
                        && inst.precondition(spec, &ri.name)
                })
                .ok_or_else(unattributable)?
        };
        let inst = &mut out.instances[target];
        let spec = &flows[inst.flow];
        assert!(
            inst.precondition(spec, &ri.name),
            "replay fired a rule before its predecessors"
        );
        inst.fired[spec.index_of(&ri.name).expect("member")] = true;
        out.steps.push(Attribution::Instance(target));
    }
    Ok(out)
}

/// Replays a counterexample trace.
pub fn replay_trace(
    m: &GroundModel,
    trace: &Trace,
    flows: &[FlowSpec],
) -> Result<Replay, FlowError> {
    replay_flows(m, &trace.steps, flows)
}

/// A next rule of an open instance whose guard is false.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockedRule {
    /// Index into `Replay::instances`.
    pub instance: usize,
    pub flow: String,
    pub agent: u32,
    pub rule: String,
    /// Top-level guard conjuncts that are false (or unreadable) at the state.
    pub false_atoms: Vec<String>,
    /// Every next rule of the instance is disabled.
    pub flow_blocked: bool,
}

impl fmt::Display for BlockedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLOCKED {}({}) at {} guard_atoms_false=[{}]",
            self.flow,
            self.agent,
            self.rule,
            self.false_atoms.join(", ")
        )
    }
}

/// Guard conjuncts of rule `name` for `agent` that do not hold at `s`.
/// Extra parameters are taken from the first instance of the rule.
pub fn false_guard_atoms(m: &GroundModel, s: &State, name: &str, agent: u32) -> Vec<String> {
    let Some((_, ri)) = m.instances_of(name).find(|(_, ri)| ri.agent == Some(agent)) else {
        return Vec::new();
    };
    let rule = &m.def.rules[ri.rule];
    rule.guard
        .conjuncts()
        .into_iter()
        .filter_map(|c| match m.eval_expr(s, &ri.binding, c) {
            Ok(true) => None,
            Ok(false) => Some(expr_to_string(&resugar(c))),
            Err(_) => Some(format!("{} (undefined)", expr_to_string(&resugar(c)))),
        })
        .collect()
}

/// Next rules (precondition true, not fired, every instance disabled) of the
/// open instances at `s`.
pub fn blocked_flows(
    m: &GroundModel,
    s: &State,
    flows: &[FlowSpec],
    replay: &Replay,
) -> Result<Vec<BlockedRule>, EvalError> {
    let mut out = Vec::new();
    for (k, inst) in replay.open(flows) {
        let spec = &flows[inst.flow];
        let mut found = Vec::new();
        let mut any_enabled = false;
        for (j, member) in spec.members.iter().enumerate() {
            if inst.fired[j] || !inst.precondition(spec, member) {
                continue;
            }
            let mut enabled = false;
            for (_, ri) in m
                .instances_of(member)
                .filter(|(_, ri)| ri.agent == Some(inst.agent))
            {
                if m.enabled(s, ri)? {
                    enabled = true;
                    break;
                }
            }
            if enabled {
                any_enabled = true;
            } else {
                found.push(BlockedRule {
                    instance: k,
                    flow: inst.name.clone(),
                    agent: inst.agent,
                    rule: member.clone(),
                    false_atoms: false_guard_atoms(m, s, member, inst.agent),
                    flow_blocked: false,
                });
            }
        }
        for mut b in found {
            b.flow_blocked = !any_enabled;
            out.push(b);
        }
    }
    Ok(out)
}
