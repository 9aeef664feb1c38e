//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed. Run with `--nocapture` to see the lines.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use flowlock::abstraction::containment_check;
use flowlock::corpus::{self, FILES};
use flowlock::formats::{print_flows, print_invset, print_lemmas};
use flowlock::invariants::{check_partition_coverage, declared_checks, invset_checks};
use flowlock::selftest::{run_all, SelftestOptions};
use flowlock::{
    cmp_iterate, data_type_reduce, derive_diagnostics, instantiate, parse_flows, parse_invset,
    parse_lemmas, parse_protocol, pretty_print, reach, theorem_oracle, CmpConfig, FlowSpec,
    GroundModel, InvSet, ProtocolDef, ReachOptions, ReduceOptions, RuleOrder, Witness,
};

const DERIVATION_LIMIT: Duration = Duration::from_secs(60);
const BUGGY_LIMIT: Duration = Duration::from_secs(60);
const SAFETY_LIMIT: Duration = Duration::from_secs(60);
const CMP_LIMIT: Duration = Duration::from_secs(120);
const CMP_STATE_LIMIT: usize = 1_000_000;
const SELFTEST_SAMPLES: usize = 1000;
const BUDGET: u64 = 4 << 30;

fn def(entry: &str) -> ProtocolDef {
    parse_protocol(corpus::must(&format!("{entry}/model.proto.m"))).unwrap()
}

fn model(entry: &str, n: u32) -> GroundModel {
    instantiate(&def(entry), n).unwrap()
}

fn flows(entry: &str) -> Vec<FlowSpec> {
    parse_flows(corpus::must(&format!("{entry}/flows.flw"))).unwrap()
}

fn invs(path: &str) -> InvSet {
    parse_invset(corpus::must(path)).unwrap()
}

fn within(what: &str, t: Instant, limit: Duration) -> String {
    let e = t.elapsed();
    assert!(e < limit, "{what} took {e:.1?}, limit {limit:?}");
    format!("{e:.1?}")
}

fn derivation() -> String {
    let t0 = Instant::now();
    let m = model("german", 3);
    let fl = flows("german");
    let opts = ReachOptions {
        rule_order: RuleOrder::ReverseRulesets,
        ..Default::default()
    };

    let set = invs("german/inv1.invs");
    let r = reach(&m, &invset_checks(&m, &fl, &set).unwrap(), &opts).unwrap();
    let t = r
        .verdict("inv-1")
        .and_then(|v| v.trace())
        .expect("inv-1 fails");
    assert_eq!(t.len(), 3, "inv-1 trace length");
    let d = derive_diagnostics(&m, &fl, &set, "inv-1", t).unwrap();
    let exclusive_recv = d
        .blocked
        .iter()
        .any(|b| b.agent == d.failing_agent && b.flow == "Exclusive" && b.rule == "RecvReqE");
    assert!(exclusive_recv, "no Exclusive flow blocked on RecvReqE");
    assert_eq!(d.false_atoms, ["CurCmd = Empty"]);
    assert!(d
        .witness_candidates
        .contains(&Witness::Pointer("CurPtr".into())));

    let set = invs("german/iter2.invs");
    let r = reach(&m, &invset_checks(&m, &fl, &set).unwrap(), &opts).unwrap();
    assert!(r.verdict("inv-1.1").unwrap().passed());
    let t = r
        .verdict("inv-1.2")
        .and_then(|v| v.trace())
        .expect("inv-1.2 fails");
    let d = derive_diagnostics(&m, &fl, &set, "inv-1.2", t).unwrap();
    assert_eq!(d.blocking_rule.as_deref(), Some("SendGntE"));

    let set = invs("german/final.invs");
    let r = reach(&m, &invset_checks(&m, &fl, &set).unwrap(), &opts).unwrap();
    assert!(r.all_passed(), "final set fails");
    let took = within("derivation", t0, DERIVATION_LIMIT);
    format!(
        "inv-1 len 3 agent {}, final set holds, {took}",
        d.failing_agent
    )
}

fn buggy() -> String {
    let t0 = Instant::now();
    let o = ReachOptions {
        symmetry: true,
        ..Default::default()
    };
    let mut dead = Vec::new();
    for n in [2, 3] {
        let m = model("german_buggy", n);
        let v = theorem_oracle(
            &m,
            &flows("german_buggy"),
            &invs("german_buggy/final.invs"),
            &o,
        )
        .unwrap();
        assert!(!v.report.verdict("inv-1.2.2").unwrap().passed(), "N={n}");
        assert!(!v.sdeadlock_free, "N={n}: no s-deadlock");
        assert!(v.consistent, "N={n}");
        let t = v.report.verdict("s-deadlock").unwrap().trace().unwrap();
        dead.push(format!("N={n} s-deadlock at depth {}", t.len()));
    }
    let took = within("buggy", t0, BUGGY_LIMIT);
    format!("{}, {took}", dead.join(", "))
}

fn safety() -> String {
    let t0 = Instant::now();
    let o = ReachOptions {
        symmetry: true,
        ..Default::default()
    };
    let m = model("german", 3);
    let r = reach(&m, &declared_checks(&m), &o).unwrap();
    for p in ["CtrlProp", "DataProp"] {
        assert!(r.verdict(p).unwrap().passed(), "{p} fails on german");
    }
    let states = r.states;
    let bad = model("german_mutant_gnte", 3);
    let r = reach(&bad, &declared_checks(&bad), &o).unwrap();
    for p in ["CtrlProp", "DataProp"] {
        assert!(!r.verdict(p).unwrap().passed(), "{p} passes on the mutant");
    }
    let took = within("safety", t0, SAFETY_LIMIT);
    format!("hold on german ({states} states), fail on mutant, {took}")
}

fn partition() -> String {
    let fin = invs("german/final.invs");
    for n in 1..=3 {
        let r =
            check_partition_coverage(&model("german", n), &fin, &ReachOptions::default()).unwrap();
        assert!(r.all_passed(), "N={n}");
    }
    let missing = invs("german/missing_inv11.invs");
    let r =
        check_partition_coverage(&model("german", 2), &missing, &ReachOptions::default()).unwrap();
    let t = r
        .verdict("partition")
        .unwrap()
        .trace()
        .expect("gap not flagged");
    assert_eq!(t.len(), 0, "gap not at the initial state");
    "holds for N=1..3, gap without inv-1.1 at init".into()
}

fn send_gnte_o() -> String {
    let abs = data_type_reduce(&def("german"), 1, &ReduceOptions::default()).unwrap();
    let r = abs.def.rule("SendGntE_o").expect("no SendGntE_o");
    let guard = flowlock::pretty::expr_to_string(&r.guard);
    assert_eq!(
        guard,
        "CurCmd = ReqE & CurPtr = o & ExGntd = false & ShrSet = {}"
    );
    let text = pretty_print(&abs.def);
    let at = text.find("rule \"SendGntE_o\"").unwrap();
    let body = &text[at..];
    let body = &body[body.find("==>").unwrap()..body.find("end;").unwrap()];
    for line in [
        "ShrSet := {};",
        "ExGntd := true;",
        "CurCmd := Empty;",
        "undefine CurPtr;",
    ] {
        assert!(body.contains(line), "missing `{line}`");
    }
    guard
}

fn cmp_empty_lemmas() -> String {
    let t0 = Instant::now();
    let lemmas = parse_lemmas(corpus::must("german/empty.lemmas")).unwrap();
    assert!(lemmas.is_empty());
    let cfg = CmpConfig {
        properties: vec!["CtrlProp".into()],
        ..Default::default()
    };
    let opts = ReachOptions {
        symmetry: true,
        budget_bytes: BUDGET,
        ..Default::default()
    };
    let r = cmp_iterate(
        &def("german"),
        &flows("german"),
        &invs("german/final.invs"),
        &lemmas,
        2,
        &cfg,
        &opts,
    )
    .unwrap();
    let states = r.report.states;
    let failing: Vec<String> = r
        .report
        .checks
        .iter()
        .filter(|c| !c.verdict.passed())
        .map(|c| {
            let labels = c
                .verdict
                .trace()
                .map(|t| t.labels(&r.model))
                .unwrap_or_default();
            let other: Vec<&String> = labels.iter().filter(|l| l.contains("_o")).collect();
            format!(
                "{} at depth {} (Other steps: {other:?})",
                c.name,
                labels.len()
            )
        })
        .collect();
    let e = t0.elapsed();
    assert!(
        failing.is_empty(),
        "abstract states: {states}, failing: {}",
        failing.join(", ")
    );
    assert!(states < CMP_STATE_LIMIT, "abstract states: {states}");
    assert!(e < CMP_LIMIT, "took {e:.1?}");
    format!("abstract states: {states}, {e:.1?}")
}

fn containment() -> String {
    let g = def("german");
    let mut out = Vec::new();
    for c in [1, 2] {
        let r = containment_check(&g, 3, c, &ReduceOptions::default(), BUDGET).unwrap();
        assert!(r.holds(), "c={c}: projection escapes");
        out.push(format!("c={c} {} abstract states", r.abstract_states));
    }
    let flipped = ReduceOptions {
        flip_polarity: true,
        ..Default::default()
    };
    let r = containment_check(&g, 3, 1, &flipped, BUDGET).unwrap();
    assert!(!r.holds(), "flipped polarity still contains");
    format!("{}, flipped polarity violated", out.join(", "))
}

fn selftest() -> String {
    let opts = SelftestOptions {
        samples: SELFTEST_SAMPLES,
        ..Default::default()
    };
    let reports = run_all(&opts);
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.to_string())
        .collect();
    assert!(failed.is_empty(), "{}", failed.join("\n"));
    let cases: usize = reports.iter().map(|r| r.cases).sum();
    format!("{} suites, {cases} cases", reports.len())
}

fn parser() -> String {
    let a = parse_protocol(corpus::must("german/reference.proto.m")).unwrap();
    assert_eq!(a.rules.len(), 12);
    let mut files = 0;
    for (path, text) in FILES {
        let (t1, t2) = if path.ends_with(".proto.m") {
            let t1 = pretty_print(&parse_protocol(text).unwrap());
            (t1.clone(), pretty_print(&parse_protocol(&t1).unwrap()))
        } else if path.ends_with(".invs") {
            let t1 = print_invset(&parse_invset(text).unwrap());
            (t1.clone(), print_invset(&parse_invset(&t1).unwrap()))
        } else if path.ends_with(".flw") {
            let t1 = print_flows(&parse_flows(text).unwrap());
            (t1.clone(), print_flows(&parse_flows(&t1).unwrap()))
        } else if path.ends_with(".lemmas") {
            let t1 = print_lemmas(&parse_lemmas(text).unwrap());
            (t1.clone(), print_lemmas(&parse_lemmas(&t1).unwrap()))
        } else {
            continue;
        };
        assert_eq!(t1, t2, "{path} is not a fixpoint");
        files += 1;
    }
    format!("reference source parses, {files} corpus files round-trip")
}

type Criterion = (&'static str, fn() -> String);

const CRITERIA: [Criterion; 9] = [
    ("german derivation replay", derivation),
    ("buggy german s-deadlock", buggy),
    ("german safety properties", safety),
    ("partition coverage", partition),
    ("SendGntE_o golden", send_gnte_o),
    ("cmp c=2 without lemmas", cmp_empty_lemmas),
    ("abstraction containment", containment),
    ("selftest suites", selftest),
    ("parser round-trip", parser),
];

fn panic_text(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for (k, (name, f)) in CRITERIA.iter().enumerate() {
        let n = k + 1;
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(e) => {
                let msg = panic_text(e);
                println!("FAIL criterion {n}: {name}: {msg}");
                failed.push(n);
            }
        }
    }
    std::panic::set_hook(hook);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
