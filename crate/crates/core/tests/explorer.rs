use flowlock::corpus;
use flowlock::explore::{
    check_sdeadlock, enabled_vector, reach, reachable_states, successors, Check, Outcome,
    ReachOptions, RuleOrder,
};
use flowlock::ground::{instantiate, GroundModel};
use flowlock::parser::parse_protocol;
use flowlock::symmetry::Symmetry;
use std::collections::HashSet;

fn model(path: &str, n: u32) -> GroundModel {
    instantiate(&parse_protocol(corpus::must(path)).unwrap(), n).unwrap()
}

fn opts() -> ReachOptions {
    ReachOptions {
        workers: 2,
        ..Default::default()
    }
}

#[test]
fn init_successors() {
    let m = model("german/model.proto.m", 2);
    let s = &m.initial_states().unwrap()[0];
    // Oracle: evaluate every guard directly.
    let expected: Vec<String> = m
        .rules
        .iter()
        .filter(|ri| m.enabled(s, ri).unwrap())
        .map(|ri| ri.label())
        .collect();
    let got: Vec<String> = successors(&m, s)
        .unwrap()
        .iter()
        .map(|(r, _)| m.rules[*r].label())
        .collect();
    assert_eq!(got, expected);
    assert_eq!(
        got,
        ["SendReqS(1)", "SendReqS(2)", "SendReqE(1)", "SendReqE(2)"]
    );
    let after = &successors(&m, s).unwrap()[2].1;
    let labels: Vec<String> = successors(&m, after)
        .unwrap()
        .iter()
        .map(|(r, _)| m.rules[*r].label())
        .collect();
    assert!(labels.contains(&"RecvReqE(1)".to_string()));
}

#[test]
fn german_is_sdeadlock_free_and_buggy_is_not() {
    let m = model("german/model.proto.m", 2);
    let r = check_sdeadlock(&m, &opts()).unwrap();
    assert!(r.all_passed(), "{:?}", r.outcome);

    let b = model("german_buggy/model.proto.m", 2);
    let r = check_sdeadlock(&b, &opts()).unwrap();
    let trace = r.checks[0].verdict.trace().expect("buggy model deadlocks");
    trace.validate(&b).unwrap();
    assert!(successors(&b, trace.final_state()).unwrap().is_empty());
    assert!(trace
        .to_text(&b)
        .starts_with(&format!("TRACE s-deadlock len={}\n", trace.len())));
}

#[test]
fn trivial_protocol_never_deadlocks() {
    let p = parse_protocol(
        "type T : boolean; var x : T; startstate \"Init\" x := false; end; rule \"Flip\" true ==> x := !x; end;",
    )
    .unwrap();
    let m = instantiate(&p, 1).unwrap();
    let r = check_sdeadlock(&m, &opts()).unwrap();
    assert!(r.all_passed());
    assert_eq!(r.states, 2);
}

#[test]
fn declared_invariants_hold_on_german_n3() {
    let m = model("german/model.proto.m", 3);
    let checks: Vec<Check> = m
        .invariants
        .iter()
        .map(|(n, g)| Check::property(n.clone(), g.clone()))
        .collect();
    assert_eq!(checks.len(), 2);
    let r = reach(
        &m,
        &checks,
        &ReachOptions {
            symmetry: true,
            ..opts()
        },
    )
    .unwrap();
    assert!(r.all_passed());
}

#[test]
fn worker_count_and_symmetry_do_not_change_verdicts() {
    let m = model("german_buggy/model.proto.m", 2);
    let mut checks: Vec<Check> = m
        .invariants
        .iter()
        .map(|(n, g)| Check::property(n.clone(), g.clone()))
        .collect();
    checks.push(Check::sdeadlock());
    let base = reach(
        &m,
        &checks,
        &ReachOptions {
            workers: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let wide = reach(
        &m,
        &checks,
        &ReachOptions {
            workers: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(base.states, wide.states);
    assert_eq!(base.transitions, wide.transitions);
    for (a, b) in base.checks.iter().zip(&wide.checks) {
        assert_eq!(
            a.verdict.trace().map(|t| t.steps.clone()),
            b.verdict.trace().map(|t| t.steps.clone())
        );
    }
    let sym = reach(
        &m,
        &checks,
        &ReachOptions {
            symmetry: true,
            ..opts()
        },
    )
    .unwrap();
    for (a, b) in base.checks.iter().zip(&sym.checks) {
        assert_eq!(a.verdict.passed(), b.verdict.passed(), "{}", a.name);
        if let Some(t) = b.verdict.trace() {
            t.validate(&m).unwrap();
            assert_eq!(t.len(), a.verdict.trace().unwrap().len());
        }
    }
}

#[test]
fn symmetry_image_matches_raw_reachable_set() {
    let m = model("german/model.proto.m", 2);
    let sym = Symmetry::new(&m).unwrap();
    let raw = reachable_states(&m, u64::MAX).unwrap();
    let image: HashSet<_> = raw.iter().map(|s| sym.canonicalize(s)).collect();
    let r = reach(
        &m,
        &[],
        &ReachOptions {
            symmetry: true,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(r.states, image.len());
    let plain = reach(&m, &[], &opts()).unwrap();
    assert_eq!(plain.states, raw.len());
}

#[test]
fn sdeadlock_duality() {
    let m = model("german_buggy/model.proto.m", 2);
    for s in reachable_states(&m, u64::MAX).unwrap() {
        let en = enabled_vector(&m, &s).unwrap();
        let dead = Check::sdeadlock().eval(&m, &s, &en).unwrap().is_some();
        assert_eq!(dead, successors(&m, &s).unwrap().is_empty());
    }
}

#[test]
fn budget_is_enforced() {
    let m = model("german/model.proto.m", 2);
    let r = reach(
        &m,
        &[],
        &ReachOptions {
            budget_bytes: 1000,
            ..opts()
        },
    )
    .unwrap();
    assert!(matches!(r.outcome, Outcome::OutOfBudget));
    assert!(r.states > 0);
}

#[test]
fn reverse_order_keeps_state_count() {
    let m = model("german/model.proto.m", 2);
    let a = reach(&m, &[], &opts()).unwrap();
    let b = reach(
        &m,
        &[],
        &ReachOptions {
            rule_order: RuleOrder::ReverseRulesets,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.transitions, b.transitions);
}
