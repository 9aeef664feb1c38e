use std::collections::HashSet;

use flowlock::abstraction::{abstract_invariants, containment_check, reduce_pred, Projection};
use flowlock::ast::Expr;
use flowlock::corpus;
use flowlock::explore::{canonical_reachable_states, successors, CheckKind};
use flowlock::formats::{parse_flows, FlowSpec, InvSet};
use flowlock::pretty::{expr_to_string, pretty_print};
use flowlock::symmetry::Symmetry;
use flowlock::{
    cmp_iterate, data_type_reduce, instantiate, parse_expr, parse_invset, parse_lemmas,
    parse_protocol, strengthen, AbstractError, CmpConfig, GroundModel, ProtocolDef, ReachOptions,
    ReduceOptions, State,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

const BUDGET: u64 = 1 << 30;

fn german() -> ProtocolDef {
    parse_protocol(corpus::must("german/model.proto.m")).unwrap()
}

fn flows() -> Vec<FlowSpec> {
    parse_flows(corpus::must("german/flows.flw")).unwrap()
}

fn invs(path: &str) -> InvSet {
    parse_invset(corpus::must(path)).unwrap()
}

fn reduce(def: &ProtocolDef, c: u32) -> flowlock::AbstractProtocol {
    data_type_reduce(def, c, &ReduceOptions::default()).unwrap()
}

fn rule_text(def: &ProtocolDef, name: &str) -> String {
    let text = pretty_print(def);
    let at = text
        .find(&format!("rule \"{name}\""))
        .unwrap_or_else(|| panic!("no rule {name}"));
    let end = text[at..].find("end;").unwrap();
    text[at..at + end].to_string()
}

#[test]
fn send_gnte_o_matches_the_box() {
    let abs = reduce(&german(), 1);
    let r = abs.def.rule("SendGntE_o").expect("SendGntE_o");
    assert!(r.params.is_empty());
    assert_eq!(
        expr_to_string(&r.guard),
        "CurCmd = ReqE & CurPtr = o & ExGntd = false & ShrSet = {}"
    );
    let text = rule_text(&abs.def, "SendGntE_o");
    let action: Vec<&str> = text
        .split("==>")
        .nth(1)
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    assert_eq!(
        action,
        [
            "ShrSet := {};",
            "ExGntd := true;",
            "CurCmd := Empty;",
            "undefine CurPtr;"
        ]
    );
    // ShrSet := {o} only clears the concrete entries
    let m = instantiate(&abs.def, 1).unwrap();
    let ri = &m.rules[m.find_instance("SendGntE_o").unwrap()];
    let writes: Vec<String> = m
        .write_set(ri)
        .into_iter()
        .map(|k| m.slots[k].name.clone())
        .collect();
    assert!(writes.contains(&"ShrSet[1]".to_string()));
    assert!(!writes.iter().any(|w| w.contains("[o]")));
}

#[test]
fn local_only_rules_are_elided() {
    let abs = reduce(&german(), 1);
    // Oracle: rules whose guard and action touch only Cache/Chan entries at i.
    for name in ["SendReqS", "SendReqE", "SendInvAck", "RecvGntS", "RecvGntE"] {
        assert!(abs.elided.contains(&name.to_string()), "{name}");
        assert!(abs.def.rule(&format!("{name}_o")).is_none());
    }
    let kept = data_type_reduce(
        &german(),
        1,
        &ReduceOptions {
            elide: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(kept.elided.is_empty());
    let r = kept.def.rule("SendReqE_o").unwrap();
    assert_eq!(r.guard, Expr::Bool(true));
    assert!(r.body.is_empty());
    assert_eq!(
        kept.other_rules.len(),
        abs.other_rules.len() + abs.elided.len()
    );
}

#[test]
fn reduce_errors() {
    let g = german();
    assert!(matches!(
        data_type_reduce(&g, 0, &ReduceOptions::default()),
        Err(AbstractError::ZeroAgents)
    ));
    let abs = reduce(&g, 1);
    assert!(matches!(
        data_type_reduce(&abs.def, 1, &ReduceOptions::default()),
        Err(AbstractError::AlreadyAbstract)
    ));
    let flat =
        parse_protocol("type T : boolean; var x : T; rule \"r\" x ==> x := false; end;").unwrap();
    assert!(matches!(
        data_type_reduce(&flat, 1, &ReduceOptions::default()),
        Err(AbstractError::NoAgent)
    ));
}

fn nnf(e: &Expr) -> bool {
    match e {
        Expr::Not(a) => !matches!(
            a.as_ref(),
            Expr::Not(_)
                | Expr::And(..)
                | Expr::Or(..)
                | Expr::Implies(..)
                | Expr::Forall(_)
                | Expr::Exists(_)
        ),
        Expr::And(a, b) | Expr::Or(a, b) => nnf(a) && nnf(b),
        Expr::Implies(..) => false,
        Expr::Forall(q) | Expr::Exists(q) => nnf(&q.body),
        _ => true,
    }
}

#[test]
fn other_guards_are_in_negation_normal_form() {
    for c in 1..=2 {
        let abs = reduce(&strengthen(&german(), &noninterference()), c);
        for name in &abs.other_rules {
            let r = abs.def.rule(name).unwrap();
            assert!(nnf(&r.guard), "{name}: {}", expr_to_string(&r.guard));
        }
    }
    let d = german();
    let e = parse_expr("!(ShrSet[o] -> !(CurPtr = o))").unwrap();
    let r = reduce_pred(&d, &e, &ReduceOptions::default()).unwrap();
    assert!(nnf(&r), "{}", expr_to_string(&r));
}

fn noninterference() -> Vec<flowlock::Lemma> {
    parse_lemmas(corpus::must("german/noninterference.lemmas")).unwrap()
}

/// Concrete rule instances of agents above `c` paired with the Other
/// instances covering them. An Other copy may range over extra data values
/// standing in for dropped reads.
fn other_pairs(m: &GroundModel, am: &GroundModel, c: u32) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    for (k, ri) in m.rules.iter().enumerate() {
        let Some(a) = ri.agent else { continue };
        if a <= c {
            continue;
        }
        let agent_var = &m.def.rules[ri.rule].params[0].name;
        let rest: Vec<_> = ri.binding.iter().filter(|b| &b.0 != agent_var).collect();
        let other = format!("{}_o", ri.name);
        let found = (0..am.rules.len())
            .filter(|&o| {
                am.rules[o].name == other
                    && rest
                        .iter()
                        .all(|b| am.rules[o].binding.iter().any(|ob| ob == *b))
            })
            .collect();
        out.push((k, found));
    }
    out
}

fn sample(states: Vec<State>, n: usize) -> Vec<State> {
    let mut rng = StdRng::seed_from_u64(7);
    let mut s = states;
    s.shuffle(&mut rng);
    s.truncate(n);
    s
}

#[test]
fn other_guards_over_approximate() {
    let def = german();
    let c = 1;
    let m = instantiate(&def, 3).unwrap();
    let abs = reduce(&def, c);
    let am = instantiate(&abs.def, c).unwrap();
    let proj = Projection::new(&m, &am).unwrap();
    let pairs = other_pairs(&m, &am, c);
    assert!(!pairs.is_empty());
    let states = flowlock::explore::reachable_states(&m, BUDGET).unwrap();
    let mut checked = 0;
    for s in sample(states, 1000) {
        let p = proj.apply(&m, &s);
        let abs_succ: HashSet<State> = successors(&am, &p)
            .unwrap()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        for (k, others) in &pairs {
            let ri = &m.rules[*k];
            if !m.enabled(&s, ri).unwrap() {
                continue;
            }
            checked += 1;
            let next = proj.apply(&m, &m.fire(&s, ri).unwrap());
            if others.is_empty() {
                // elided: the step must leave the projection unchanged
                assert_eq!(next, p, "{}", ri.label());
            } else {
                let any = others
                    .iter()
                    .any(|&o| am.enabled(&p, &am.rules[o]).unwrap());
                assert!(any, "{}", ri.label());
                assert!(abs_succ.contains(&next), "{}", ri.label());
            }
        }
    }
    assert!(checked > 500);
}

#[test]
fn elision_keeps_the_reachable_set() {
    let def = german();
    for c in 1..=1 {
        let a = reduce(&def, c);
        let b = data_type_reduce(
            &def,
            c,
            &ReduceOptions {
                elide: false,
                ..Default::default()
            },
        )
        .unwrap();
        let am = instantiate(&a.def, c).unwrap();
        let bm = instantiate(&b.def, c).unwrap();
        let sa = canonical_reachable_states(&am, &Symmetry::new(&am).unwrap(), BUDGET).unwrap();
        let sb = canonical_reachable_states(&bm, &Symmetry::new(&bm).unwrap(), BUDGET).unwrap();
        assert_eq!(sa.len(), sb.len());
        assert!(sa.iter().all(|p| sb.contains(p)));
    }
}

#[test]
fn abstract_invariant_shapes() {
    let def = german();
    let am = instantiate(&reduce(&def, 2).def, 2).unwrap();
    let fin = invs("german/final.invs");
    let checks =
        abstract_invariants(&am, &flows(), &fin, &ReduceOptions::default(), false).unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "inv-1.1",
            "inv-1.2.1",
            "inv-1.2.2",
            "inv-1.2.1_nonempty",
            "inv-1.2.2_nonempty"
        ]
    );
    for c in &checks[..3] {
        let CheckKind::Flow { agents, .. } = &c.kind else {
            panic!("{} is not a flow check", c.name)
        };
        assert_eq!(agents.len(), 1);
        assert_eq!(agents[0].agent, 1);
    }
    let all = abstract_invariants(&am, &flows(), &fin, &ReduceOptions::default(), true).unwrap();
    let CheckKind::Flow { agents, .. } = &all[1].kind else {
        panic!()
    };
    assert_eq!(agents.len(), 2);

    // inv-1.2.1's assertion ranges over agents 1, 2 and o.
    let CheckKind::NonEmpty { members, .. } = &checks[3].kind else {
        panic!()
    };
    assert_eq!(members.len(), 3);
    let a = &checks[3];
    let init = am.initial_states().unwrap()[0].clone();
    let enabled = vec![false; am.rules.len()];
    let mut s = init.clone();
    let cur_cmd = am.slot_index("CurCmd").unwrap();
    let cur_ptr = am.slot_index("CurPtr").unwrap();
    s.set(cur_cmd, 1 + 1); // ReqS
    assert_eq!(am.format_slot(&s, cur_cmd), "ReqS");
    s.set(cur_ptr, 2 + 2); // o
    assert_eq!(am.format_slot(&s, cur_ptr), "o");
    assert_eq!(a.eval(&am, &s, &enabled).unwrap(), None);
    s.set(cur_ptr, 2 + 1); // NULL
    assert_eq!(am.format_slot(&s, cur_ptr), "NULL");
    assert_eq!(a.eval(&am, &s, &enabled).unwrap(), Some(0));
}

#[test]
fn multi_index_invariant_is_rejected() {
    let def = german();
    let am = instantiate(&reduce(&def, 1).def, 1).unwrap();
    let set = parse_invset(
        "inv bad {\n  pred: true;\n  index: forall j : NODE do ShrSet[j] end;\n  target: all;\n}\n",
    )
    .unwrap();
    assert!(matches!(
        abstract_invariants(&am, &flows(), &set, &ReduceOptions::default(), false),
        Err(AbstractError::Check(_))
    ));
}

#[test]
fn strengthen_examples() {
    let g = german();
    assert_eq!(strengthen(&g, &[]), g);
    let identity = parse_lemmas(corpus::must("german/identity.lemmas")).unwrap();
    assert_eq!(strengthen(&g, &identity), g);

    let gnte = parse_lemmas(corpus::must("german/gnte.lemmas")).unwrap();
    let s = strengthen(&g, &gnte);
    let send = s.rule("SendGntE").unwrap();
    let last = *send.guard.conjuncts().last().unwrap();
    assert_eq!(expr_to_string(last), "Chan2[i].Cmd = GntE -> ExGntd = true");
    assert_eq!(
        send.guard.conjuncts().len(),
        g.rule("SendGntE").unwrap().guard.conjuncts().len() + 1
    );
    // RecvGntE already requires Chan2[i].Cmd = GntE, so only the consequent remains.
    let recv = s.rule("RecvGntE").unwrap();
    assert_eq!(
        expr_to_string(recv.guard.conjuncts().last().unwrap()),
        "ExGntd = true"
    );
}

/// Successors of the strengthened model are successors of the original.
#[test]
fn strengthen_restricts_behaviour() {
    let g = german();
    let lemmas = noninterference();
    let m = instantiate(&g, 3).unwrap();
    let sm = instantiate(&strengthen(&g, &lemmas), 3).unwrap();
    let states = flowlock::explore::reachable_states(&m, BUDGET).unwrap();
    for s in sample(states, 500) {
        let orig: HashSet<(usize, State)> = successors(&m, &s).unwrap().into_iter().collect();
        for succ in successors(&sm, &s).unwrap() {
            assert!(orig.contains(&succ));
        }
    }
}

fn cmp(set: &str, lemmas: &str, props: &[&str]) -> flowlock::CmpResult {
    let l = if lemmas.is_empty() {
        Vec::new()
    } else {
        parse_lemmas(corpus::must(lemmas)).unwrap()
    };
    let cfg = CmpConfig {
        properties: props.iter().map(|p| p.to_string()).collect(),
        ..Default::default()
    };
    let opts = ReachOptions {
        symmetry: true,
        ..Default::default()
    };
    cmp_iterate(&german(), &flows(), &invs(set), &l, 2, &cfg, &opts).unwrap()
}

#[test]
fn cmp_with_noninterference_lemmas_passes() {
    let r = cmp(
        "german/final.invs",
        "german/noninterference.lemmas",
        &["CtrlProp"],
    );
    assert!(r.passed());
    for name in ["inv_ack_exclusive", "gnte_exgntd", "CtrlProp"] {
        assert!(r.report.verdict(name).unwrap().passed(), "{name}");
    }
}

#[test]
fn cmp_unsplit_invariant_fails_with_other_step() {
    let r = cmp("german/inv1.invs", "", &[]);
    assert!(!r.passed());
    let t = r.report.verdict("inv-1").unwrap().trace().unwrap();
    t.validate(&r.model).unwrap();
    assert!(r.render_trace(t).contains("<- Other"));
}

#[test]
fn cmp_reports_a_false_lemma() {
    let r = cmp("german/final.invs", "german/false.lemmas", &[]);
    assert!(!r.report.verdict("never_shared").unwrap().passed());
}

#[test]
fn containment_small_instances() {
    let def = german();
    let c = containment_check(&def, 3, 1, &ReduceOptions::default(), BUDGET).unwrap();
    assert!(c.holds());
    assert!(c.projected <= c.abstract_states * 2);
    let c = containment_check(&def, 2, 1, &ReduceOptions::default(), BUDGET).unwrap();
    assert!(c.holds());

    let flipped = ReduceOptions {
        flip_polarity: true,
        ..Default::default()
    };
    let bad = containment_check(&def, 3, 1, &flipped, BUDGET).unwrap();
    assert!(!bad.holds());
}
