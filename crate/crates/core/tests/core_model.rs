use flowlock::corpus;
use flowlock::ground::{instantiate, EvalError, ExprError, GroundModel, ModelError};
use flowlock::parser::{parse_expr, parse_protocol};
use flowlock::state::State;

fn german(n: u32) -> GroundModel {
    let p = parse_protocol(corpus::must("german/model.proto.m")).unwrap();
    instantiate(&p, n).unwrap()
}

fn value(m: &GroundModel, s: &State, slot: &str) -> String {
    m.format_slot(
        s,
        m.slot_index(slot)
            .unwrap_or_else(|| panic!("no slot {slot}")),
    )
}

fn fire(m: &GroundModel, s: &State, label: &str) -> State {
    let ri = &m.rules[m.find_instance(label).unwrap()];
    assert!(m.enabled(s, ri).unwrap(), "{label} not enabled");
    m.fire(s, ri).unwrap()
}

#[test]
fn instance_count_matches_ruleset_domains() {
    // Oracle: count rule headers in the source text; Store also ranges over DATA.
    let src = corpus::must("german/model.proto.m");
    let rules = src.matches("rule \"").count();
    let data_rules = src.matches("; d : DATA do rule").count();
    let n = 2;
    let expected = (rules - data_rules) * n + data_rules * n * 2;
    let m = german(2);
    assert_eq!(rules, 12);
    assert_eq!(m.rules.len(), expected);
    assert_eq!(m.rules.len(), 26);
}

#[test]
fn empty_protocol_and_zero_size() {
    let p = parse_protocol("type T : boolean; var x : T;").unwrap();
    assert!(instantiate(&p, 1).unwrap().rules.is_empty());
    let g = parse_protocol(corpus::must("german/model.proto.m")).unwrap();
    assert!(matches!(instantiate(&g, 0), Err(ModelError::ZeroSize)));
}

#[test]
fn initial_states() {
    let m = german(2);
    let init = m.initial_states().unwrap();
    assert_eq!(init.len(), 2);
    let s = &init[0];
    assert_eq!(value(&m, s, "Chan1[1].Cmd"), "Empty");
    assert_eq!(value(&m, s, "Cache[1].State"), "I");
    assert_eq!(value(&m, s, "CurCmd"), "Empty");
    assert_eq!(value(&m, s, "ExGntd"), "false");
    assert_eq!(value(&m, s, "Cache[1].Data"), "undefined");
    assert_eq!(value(&m, s, "CurPtr"), "NULL");
    assert_eq!(value(&m, &init[1], "MemData"), "2");
}

#[test]
fn guards_and_short_circuit() {
    let m = german(2);
    let s = &m.initial_states().unwrap()[0];
    let bind = [m.agent_binding("i", 1)];
    let sendreqs = parse_expr("Chan1[i].Cmd = Empty & Cache[i].State = I").unwrap();
    assert!(m.eval_expr(s, &bind, &sendreqs).unwrap());
    assert!(!m
        .enabled(s, &m.rules[m.find_instance("SendGntE(1)").unwrap()])
        .unwrap());
    assert!(m
        .enabled(s, &m.rules[m.find_instance("SendReqE(1)").unwrap()])
        .unwrap());
    assert!(!m
        .enabled(s, &m.rules[m.find_instance("RecvInvAck(1)").unwrap()])
        .unwrap());

    let guarded = parse_expr("Cache[1].State != I -> Cache[1].Data = AuxData");
    // integer literals are outside the subset, so bind the index instead
    assert!(guarded.is_err());
    let guarded = parse_expr("Cache[i].State != I -> Cache[i].Data = AuxData").unwrap();
    assert!(m.eval_expr(s, &bind, &guarded).unwrap());
    let bare = parse_expr("Cache[i].Data = AuxData").unwrap();
    assert_eq!(
        m.eval_expr(s, &bind, &bare),
        Err(ExprError::Eval(EvalError::UndefinedRead(
            "Cache[1].Data".into()
        )))
    );
}

#[test]
fn exec_action_examples() {
    let m = german(2);
    let s0 = m.initial_states().unwrap()[0].clone();
    let s1 = fire(&m, &s0, "SendReqE(1)");
    let changed: Vec<_> = (0..s0.len()).filter(|&k| s0.get(k) != s1.get(k)).collect();
    assert_eq!(changed, vec![m.slot_index("Chan1[1].Cmd").unwrap()]);
    assert_eq!(value(&m, &s1, "Chan1[1].Cmd"), "ReqE");

    let s2 = fire(&m, &s1, "RecvReqE(1)");
    assert_eq!(value(&m, &s2, "CurCmd"), "ReqE");
    assert_eq!(value(&m, &s2, "CurPtr"), "1");
    assert_eq!(value(&m, &s2, "Chan1[1].Cmd"), "Empty");
    for j in 1..=2 {
        assert_eq!(
            value(&m, &s2, &format!("InvSet[{j}]")),
            value(&m, &s1, &format!("ShrSet[{j}]"))
        );
    }
    assert!(!m
        .enabled(&s2, &m.rules[m.find_instance("RecvReqE(2)").unwrap()])
        .unwrap());
    assert_eq!(m.exec_action(&s2, &[], &[]).unwrap(), s2);
}
