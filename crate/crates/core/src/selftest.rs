//! Property suites over the bundled corpus, shared by `flowlock selftest`
//! and the test suites.

use std::collections::HashMap;
use std::fmt;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::corpus::{self, observed, PreparedRun};
use crate::explore::{reachable_states, ReachOptions, Trace};
use crate::flows::{replay_flows, Attribution, Replay};
use crate::formats::FlowSpec;
use crate::ground::{instantiate, GroundModel, RuleInstance};
use crate::parser::parse_protocol;
use crate::state::State;
use crate::symmetry::{SlotPerm, Symmetry};
use crate::types::Ty;

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    /// Random reachable states per sampled model.
    pub samples: usize,
    pub seed: u64,
    /// Worker count compared against a single worker.
    pub workers: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            samples: 1000,
            seed: 0x5eed,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        // Enough to diagnose; the count is reported separately.
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({} cases)", self.name, self.cases)?;
        for m in &self.failures {
            write!(f, "\n  {m}")?;
        }
        Ok(())
    }
}

/// Models whose reachable states are sampled.
const SAMPLED: &[(&str, u32)] = &[
    ("german/model.proto.m", 3),
    ("german_buggy/model.proto.m", 3),
    ("german_aux/model.proto.m", 3),
];

fn load_model(path: &str, n: u32) -> Result<GroundModel, String> {
    let src = corpus::file(path).ok_or_else(|| format!("{path}: missing"))?;
    let def = parse_protocol(src).map_err(|d| format!("{path}: {d}"))?;
    instantiate(&def, n).map_err(|e| format!("{path}: {e}"))
}

fn sample(m: &GroundModel, k: usize, rng: &mut StdRng) -> Result<Vec<State>, String> {
    let all = reachable_states(m, u64::MAX).map_err(|e| e.to_string())?;
    Ok(all
        .choose_multiple(rng, k.min(all.len()))
        .cloned()
        .collect())
}

/// Instance index by (rule, bound codes).
fn instance_index(m: &GroundModel) -> HashMap<(usize, Vec<u8>), usize> {
    m.rules
        .iter()
        .enumerate()
        .map(|(k, ri)| ((ri.rule, ri.binding.iter().map(|b| b.2).collect()), k))
        .collect()
}

fn permuted_codes(ri: &RuleInstance, p: &SlotPerm) -> Vec<u8> {
    ri.binding
        .iter()
        .map(|(_, ty, v)| match ty {
            Ty::Scalar { name, size, .. } if *v >= 1 && u32::from(*v) <= *size => {
                p.map_id(name, u32::from(*v)) as u8
            }
            _ => *v,
        })
        .collect()
}

/// Frame, locality and symmetry of rule execution on sampled states.
pub fn exec_properties(opts: &SelftestOptions) -> SuiteReport {
    let mut rep = SuiteReport::new("exec frame/locality/symmetry");
    let mut rng = StdRng::seed_from_u64(opts.seed);
    for &(path, n) in SAMPLED {
        let states = match load_model(path, n)
            .and_then(|m| sample(&m, opts.samples, &mut rng).map(|s| (m, s)))
        {
            Ok(x) => x,
            Err(e) => {
                rep.expect(false, || e);
                continue;
            }
        };
        let (m, states) = states;
        let sym = match Symmetry::new(&m) {
            Ok(s) => s,
            Err(e) => {
                rep.expect(false, || format!("{path}: {e}"));
                continue;
            }
        };
        let index = instance_index(&m);
        let writes: Vec<Vec<usize>> = m.rules.iter().map(|ri| m.write_set(ri)).collect();
        for s in &states {
            for (k, ri) in m.rules.iter().enumerate() {
                let Ok(true) = m.enabled(s, ri) else { continue };
                let next = match m.fire(s, ri) {
                    Ok(t) => t,
                    Err(e) => {
                        rep.expect(false, || format!("{path}: {} failed: {e}", ri.label()));
                        continue;
                    }
                };
                for slot in (0..s.len()).filter(|&j| s.get(j) != next.get(j)) {
                    rep.expect(writes[k].binary_search(&slot).is_ok(), || {
                        format!(
                            "{path}: {} wrote {} outside its write set",
                            ri.label(),
                            m.slots[slot].name
                        )
                    });
                    let info = &m.slots[slot];
                    rep.expect(!info.local || info.agent == ri.agent, || {
                        format!(
                            "{path}: {} wrote another agent's local {}",
                            ri.label(),
                            info.name
                        )
                    });
                }
                for p in &sym.perms {
                    let Some(&pk) = index.get(&(ri.rule, permuted_codes(ri, p))) else {
                        rep.expect(false, || {
                            format!("{path}: no permuted instance of {}", ri.label())
                        });
                        continue;
                    };
                    let ps = p.apply(s);
                    let pri = &m.rules[pk];
                    let ok = m.enabled(&ps, pri) == Ok(true)
                        && m.fire(&ps, pri).ok() == Some(p.apply(&next));
                    rep.expect(ok, || {
                        format!("{path}: {} does not commute with {:?}", ri.label(), p.ids)
                    });
                }
            }
        }
    }
    rep
}

/// Pack/unpack round trips and canonical form idempotence.
pub fn state_properties(opts: &SelftestOptions) -> SuiteReport {
    let mut rep = SuiteReport::new("pack/unpack and canonicalization");
    let mut rng = StdRng::seed_from_u64(opts.seed ^ 1);
    for &(path, n) in SAMPLED {
        let loaded =
            load_model(path, n).and_then(|m| sample(&m, opts.samples, &mut rng).map(|s| (m, s)));
        let (m, states) = match loaded {
            Ok(x) => x,
            Err(e) => {
                rep.expect(false, || e);
                continue;
            }
        };
        let sym = match Symmetry::new(&m) {
            Ok(s) => s,
            Err(e) => {
                rep.expect(false, || format!("{path}: {e}"));
                continue;
            }
        };
        for s in &states {
            rep.expect(m.unpack(&m.pack(s)) == *s, || {
                format!("{path}: pack/unpack changed a state")
            });
            let c = sym.canonicalize(s);
            rep.expect(sym.canonicalize(&c) == c, || {
                format!("{path}: canonicalize is not idempotent")
            });
            for p in &sym.perms {
                rep.expect(sym.canonicalize(&p.apply(s)) == c, || {
                    format!("{path}: canonical form differs under {:?}", p.ids)
                });
            }
        }
    }
    rep
}

/// Every manifest run, loaded.
fn prepared_runs() -> Result<Vec<(String, PreparedRun)>, String> {
    let mut out = Vec::new();
    for entry in corpus::entries() {
        let man = corpus::manifest(entry).map_err(|e| e.to_string())?;
        for run in &man.runs {
            let p = corpus::prepare(entry, run).map_err(|e| e.to_string())?;
            out.push((entry.to_string(), p));
        }
    }
    Ok(out)
}

fn failing_traces(
    opts: &SelftestOptions,
) -> Result<Vec<(GroundModel, Vec<FlowSpec>, Trace)>, String> {
    let mut out = Vec::new();
    for (_, run) in prepared_runs()? {
        let PreparedRun::Concrete { model, flows, .. } = &run else {
            continue;
        };
        if flows.is_empty() {
            continue;
        }
        let report = run
            .execute(&ReachOptions {
                workers: opts.workers,
                ..Default::default()
            })
            .map_err(|e| e.to_string())?;
        for c in &report.checks {
            if let Some(t) = c.verdict.trace() {
                out.push((model.clone(), flows.clone(), t.clone()));
            }
        }
    }
    Ok(out)
}

/// Replay grows monotonically and only fires rules whose predecessors fired.
pub fn replay_properties(opts: &SelftestOptions) -> SuiteReport {
    let mut rep = SuiteReport::new("replay monotonicity and preconditions");
    let traces = match failing_traces(opts) {
        Ok(t) => t,
        Err(e) => {
            rep.expect(false, || e);
            return rep;
        }
    };
    for (m, flows, trace) in &traces {
        let name = &trace.check;
        let mut prev: Option<Replay> = None;
        for k in 0..=trace.steps.len() {
            let cur = match replay_flows(m, &trace.steps[..k], flows) {
                Ok(r) => r,
                Err(e) => {
                    rep.expect(false, || format!("{name}: prefix {k}: {e}"));
                    break;
                }
            };
            if let Some(before) = &prev {
                let grew = before.instances.iter().zip(&cur.instances).all(|(a, b)| {
                    a.flow == b.flow
                        && a.agent == b.agent
                        && a.fired.iter().zip(&b.fired).all(|(x, y)| !*x || *y)
                });
                rep.expect(
                    grew && cur.instances.len() >= before.instances.len(),
                    || format!("{name}: replay shrank at step {k}"),
                );
                if let Attribution::Instance(t) = cur.steps[k - 1] {
                    let ri = &m.rules[trace.steps[k - 1]];
                    let inst = &cur.instances[t];
                    let spec = &flows[inst.flow];
                    let fired_before = before
                        .instances
                        .get(t)
                        .map(|i| i.fired.clone())
                        .unwrap_or_else(|| vec![false; spec.members.len()]);
                    let ok = inst.agent == ri.agent.unwrap_or(0)
                        && spec
                            .index_of(&ri.name)
                            .is_some_and(|j| spec.predecessors(j).iter().all(|&p| fired_before[p]));
                    rep.expect(ok, || {
                        format!(
                            "{name}: step {k} {} fired before its predecessors",
                            ri.label()
                        )
                    });
                }
            }
            prev = Some(cur);
        }
    }
    rep
}

fn verdicts(report: &crate::explore::ReachReport) -> Vec<(String, Option<corpus::Expected>)> {
    report
        .checks
        .iter()
        .map(|c| (c.name.clone(), observed(report, &c.name)))
        .collect()
}

/// Symmetry reduction leaves every corpus verdict unchanged.
pub fn symmetry_equivalence(opts: &SelftestOptions) -> SuiteReport {
    let mut rep = SuiteReport::new("verdicts with symmetry on and off");
    let runs = match prepared_runs() {
        Ok(r) => r,
        Err(e) => {
            rep.expect(false, || e);
            return rep;
        }
    };
    for (entry, run) in &runs {
        if let PreparedRun::Concrete { model, .. } = run {
            if model.n > 3 {
                continue;
            }
        }
        let base = ReachOptions {
            workers: opts.workers,
            ..Default::default()
        };
        let on = run.execute(&ReachOptions {
            symmetry: true,
            ..base.clone()
        });
        let off = run.execute(&base);
        match (on, off) {
            (Ok(a), Ok(b)) => rep.expect(verdicts(&a) == verdicts(&b), || {
                format!("{entry}: {}: verdicts differ", run.label())
            }),
            (a, b) => rep.expect(false, || {
                format!("{entry}: {}: {:?} / {:?}", run.label(), a.err(), b.err())
            }),
        }
    }
    rep
}

/// One worker and many workers agree on verdicts, counts and traces.
pub fn worker_equivalence(opts: &SelftestOptions) -> SuiteReport {
    let mut rep = SuiteReport::new("verdicts across worker counts");
    let runs = match prepared_runs() {
        Ok(r) => r,
        Err(e) => {
            rep.expect(false, || e);
            return rep;
        }
    };
    for (entry, run) in &runs {
        let one = run.execute(&ReachOptions {
            symmetry: true,
            workers: 1,
            ..Default::default()
        });
        let many = run.execute(&ReachOptions {
            symmetry: true,
            workers: opts.workers,
            ..Default::default()
        });
        match (one, many) {
            (Ok(a), Ok(b)) => {
                let same = a.states == b.states
                    && a.transitions == b.transitions
                    && a.checks.iter().zip(&b.checks).all(|(x, y)| {
                        x.verdict.trace().map(|t| &t.steps) == y.verdict.trace().map(|t| &t.steps)
                    });
                rep.expect(same, || format!("{entry}: {}: results differ", run.label()))
            }
            (a, b) => rep.expect(false, || {
                format!("{entry}: {}: {:?} / {:?}", run.label(), a.err(), b.err())
            }),
        }
    }
    rep
}

/// Every suite, in a fixed order.
pub fn run_all(opts: &SelftestOptions) -> Vec<SuiteReport> {
    vec![
        exec_properties(opts),
        replay_properties(opts),
        state_properties(opts),
        symmetry_equivalence(opts),
        worker_equivalence(opts),
    ]
}
