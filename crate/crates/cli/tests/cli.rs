use std::path::PathBuf;
use std::process::{Command, Output};

const INV_COND: &str = "(CurCmd = ReqE | CurCmd = ReqS & ExGntd = true) & !(ShrSet = {})";

fn corpus(path: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    root.join(path).to_string_lossy().into_owned()
}

fn flowlock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlock"))
        .args(args)
        .env_remove("FLOWLOCK_WORKERS")
        .output()
        .expect("run flowlock")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn check_final_invset_passes() {
    let o = flowlock(&[
        "check",
        &corpus("german/model.proto.m"),
        "--n",
        "3",
        "--invs",
        &corpus("german/final.invs"),
        "--flows",
        &corpus("german/flows.flw"),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS inv-1.2.2 [invariant]"));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn buggy_sdeadlock_prints_trace() {
    let o = flowlock(&[
        "check",
        &corpus("german_buggy/model.proto.m"),
        "--n",
        "2",
        "--sdeadlock",
    ]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("FAIL s-deadlock"));
    assert!(out.contains("TRACE s-deadlock"));
    assert!(out.contains("SendInvAck"));
}

#[test]
fn usage_and_model_errors_exit_2() {
    let model = corpus("german/model.proto.m");
    let o = flowlock(&["check", &model, "--n", "0", "--sdeadlock"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least 1"));

    let o = flowlock(&["check", "/no/such/model.m", "--n", "2", "--sdeadlock"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot read"));

    let o = flowlock(&["check", &model, "--n", "2", "--prop", "NoSuchProp"]);
    assert_eq!(code(&o), 2);

    let o = flowlock(&["check", &model, "--n", "2"]);
    assert_eq!(code(&o), 2);

    let o = flowlock(&[
        "check",
        &model,
        "--n",
        "2",
        "--sdeadlock",
        "--budget",
        "lots",
    ]);
    assert_eq!(code(&o), 2);

    let o = flowlock(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parse_error_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.m");
    std::fs::write(&bad, "type T : boolean;\nvar x : T\nrule").unwrap();
    let o = flowlock(&["check", bad.to_str().unwrap(), "--n", "1", "--sdeadlock"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("bad.m:3:"), "{err}");
}

#[test]
fn budget_overrun_exits_3() {
    let o = flowlock(&[
        "check",
        &corpus("german/model.proto.m"),
        "--n",
        "3",
        "--sdeadlock",
        "--budget",
        "1K",
    ]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("OUT OF BUDGET"));
    assert!(stdout(&o).contains("states: "));
}

#[test]
fn bad_workers_env_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_flowlock"))
        .args(["selftest", "--samples", "1"])
        .env("FLOWLOCK_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

fn derive(invs: &str) -> Output {
    flowlock(&[
        "derive",
        &corpus("german/model.proto.m"),
        "--n",
        "3",
        "--flows",
        &corpus("german/flows.flw"),
        "--invs",
        &corpus(invs),
        "--order",
        "reverse",
    ])
}

#[test]
fn derive_iteration_one() {
    let o = derive("german/inv1.invs");
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("DIAGNOSIS inv-1"));
    assert!(out.contains("TRACE inv-1 len=3"));
    assert!(out.contains("blocked on: RecvReqE("));
    assert!(out.contains("false atoms: [CurCmd = Empty]"));
    assert!(out.contains("ptr CurPtr"));
}

#[test]
fn derive_iteration_two() {
    let o = derive("german/iter2.invs");
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("DIAGNOSIS inv-1.2\n"));
    assert!(out.contains("blocked on: SendGntE("));
    assert!(out.contains("ShrSet = {}"));
    assert!(out.contains("member ShrSet[i]"));
}

#[test]
fn derive_final_holds() {
    let o = derive("german/final.invs");
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("all invariants hold"));
}

#[test]
fn split_twice_reaches_a_passing_set() {
    let dir = tempfile::tempdir().unwrap();
    let model = corpus("german/model.proto.m");
    let a = dir.path().join("a.invs");
    let b = dir.path().join("b.invs");
    let o = flowlock(&[
        "split",
        "--model",
        &model,
        "--invs",
        &corpus("german/inv1.invs"),
        "--inv",
        "inv-1",
        "--conf",
        "!(CurCmd = Empty)",
        "--ptr",
        "CurPtr",
        "-o",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("inv inv-1.1 {"));
    assert!(out.contains("index: i = CurPtr;"));
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.contains("assert inv-1.2_nonempty;"));
    assert!(!text.contains("inv-1.1_nonempty"));

    let o = flowlock(&[
        "split",
        "--model",
        &model,
        "--invs",
        a.to_str().unwrap(),
        "--inv",
        "inv-1.2",
        "--conf",
        INV_COND,
        "--member",
        "ShrSet[i]",
        "-o",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = flowlock(&[
        "check",
        &model,
        "--n",
        "3",
        "--invs",
        b.to_str().unwrap(),
        "--flows",
        &corpus("german/flows.flw"),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS inv-1.2.2_nonempty"));
}

#[test]
fn split_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.invs");
    let base = [
        "split",
        "--model",
        &corpus("german/model.proto.m"),
        "--invs",
        &corpus("german/inv1.invs"),
        "-o",
        out.to_str().unwrap(),
    ]
    .map(String::from);
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = base.iter().map(String::as_str).collect();
        args.extend_from_slice(extra);
        flowlock(&args)
    };
    // both witnesses
    let o = run(&[
        "--inv",
        "inv-1",
        "--conf",
        "true",
        "--ptr",
        "CurPtr",
        "--member",
        "ShrSet[i]",
    ]);
    assert_eq!(code(&o), 2);
    // neither witness
    assert_eq!(code(&run(&["--inv", "inv-1", "--conf", "true"])), 2);
    // unknown invariant
    let o = run(&["--inv", "inv-9", "--conf", "true", "--ptr", "CurPtr"]);
    assert_eq!(code(&o), 2);
    // conf mentioning the index variable is not a global predicate
    let o = run(&["--inv", "inv-1", "--conf", "ShrSet[i]", "--ptr", "CurPtr"]);
    assert_eq!(code(&o), 2);
    // --names takes exactly two names
    let o = run(&[
        "--inv", "inv-1", "--conf", "true", "--ptr", "CurPtr", "--names", "a",
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    let o = run(&[
        "--inv",
        "inv-1",
        "--conf",
        "true",
        "--ptr",
        "CurPtr",
        "--names",
        "left,right",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("inv left {") && text.contains("inv right {"));
}

#[test]
fn abstract_emits_send_gnte_o() {
    let o = flowlock(&["abstract", &corpus("german/model.proto.m"), "--c", "1"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let at = out.find("rule \"SendGntE_o\"").expect("SendGntE_o emitted");
    let body: Vec<&str> = out[at..].lines().take(7).collect();
    assert_eq!(
        body[1].trim(),
        "CurCmd = ReqE & CurPtr = o & ExGntd = false & ShrSet = {}"
    );
    assert!(body.contains(&"  ExGntd := true;"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abs.proto.m");
    let o = flowlock(&[
        "abstract",
        &corpus("german/model.proto.m"),
        "--c",
        "1",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), out);
}

fn cmp(invs: &str, lemmas: Option<&str>, json: Option<&str>, workers: &str) -> Output {
    let mut args = vec![
        "cmp".to_string(),
        corpus("german/model.proto.m"),
        "--c".into(),
        "2".into(),
        "--invs".into(),
        corpus(invs),
        "--flows".into(),
        corpus("german/flows.flw"),
        "--prop".into(),
        "CtrlProp".into(),
        "--workers".into(),
        workers.into(),
    ];
    if let Some(l) = lemmas {
        args.extend(["--lemmas".into(), corpus(l)]);
    }
    if let Some(j) = json {
        args.extend(["--json".into(), j.into()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    flowlock(&args)
}

#[test]
fn cmp_with_lemmas_passes_and_json_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let j1 = dir.path().join("1.json");
    let j2 = dir.path().join("2.json");
    let o = cmp(
        "german/final.invs",
        Some("german/noninterference.lemmas"),
        Some(j1.to_str().unwrap()),
        "1",
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: pass"));
    let o = cmp(
        "german/final.invs",
        Some("german/noninterference.lemmas"),
        Some(j2.to_str().unwrap()),
        "0",
    );
    assert_eq!(code(&o), 0);
    let a = std::fs::read(&j1).unwrap();
    assert_eq!(a, std::fs::read(&j2).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "cmp");
    assert_eq!(v["outcome"], "complete");
}

#[test]
fn cmp_unsplit_inv1_fails_with_trace() {
    let o = cmp("german/inv1.invs", None, None, "0");
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("FAIL inv-1"));
    assert!(out.contains("TRACE inv-1"));
    assert!(out.contains("verdict: fail"));
}

#[test]
fn check_json_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.json", "b.json"]
        .iter()
        .map(|f| dir.path().join(f))
        .collect();
    for (p, w) in paths.iter().zip(["1", "4"]) {
        let o = flowlock(&[
            "check",
            &corpus("german_buggy/model.proto.m"),
            "--n",
            "2",
            "--invs",
            &corpus("german_buggy/final.invs"),
            "--flows",
            &corpus("german_buggy/flows.flw"),
            "--sdeadlock",
            "--workers",
            w,
            "--json",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 1);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema"], 1);
    let failing: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["verdict"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failing, ["inv-1.2.2", "s-deadlock"]);
}

#[test]
fn selftest_and_corpus_verify() {
    let o = flowlock(&["selftest", "--samples", "50"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS ").count(), 5);

    let o = flowlock(&["corpus", "verify", "--entry", "german_buggy"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).starts_with("OK   german_buggy"));

    let o = flowlock(&["corpus", "verify", "--entry", "no_such_entry"]);
    assert_eq!(code(&o), 2);
}
