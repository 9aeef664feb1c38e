//! `flowlock` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use flowlock::corpus;
use flowlock::formats::{
    print_invariant, print_invset, validate_flows, validate_invset, validate_lemmas,
};
use flowlock::invariants::{invset_checks, partition_check};
use flowlock::pretty::pretty_print;
use flowlock::selftest::{self, SelftestOptions};
use flowlock::{
    cmp_iterate, data_type_reduce, derive_diagnostics, instantiate, parse_expr, parse_flows,
    parse_invset, parse_lemmas, parse_protocol, reach, split_invariant, strengthen,
    validate_flow_coverage, Check, CmpConfig, Diagnostics, FlowSpec, GroundModel, InvSet, Lemma,
    Outcome, ProtocolDef, ReachError, ReachOptions, ReachReport, ReduceOptions, RuleOrder,
    SplitRequest, Verdict, Witness,
};

/// Like `print!`, but a closed stdout is not an error.
macro_rules! out {
    ($($t:tt)*) => { emit(&format!($($t)*)) };
}

macro_rules! outln {
    () => { emit("\n") };
    ($($t:tt)*) => { emit(&(format!($($t)*) + "\n")) };
}

const PASS: u8 = 0;
const FAIL: u8 = 1;
const USAGE: u8 = 2;
const BUDGET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "flowlock",
    version,
    about = "Flow-derived invariant checker for guarded-command protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore a concrete instance and check invariants, properties and s-deadlock.
    Check(CheckArgs),
    /// Check an invariant set and diagnose the first failing invariant.
    Derive(DeriveArgs),
    /// Split an invariant on a conflict condition and write the new set.
    Split(SplitArgs),
    /// Emit the strengthened, data-type reduced protocol.
    Abstract(AbstractArgs),
    /// Run one CMP iteration: strengthen, reduce and model check.
    Cmp(CmpArgs),
    /// Run the built-in property suites.
    Selftest(SelftestArgs),
    /// Corpus maintenance.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Run every documented corpus command and compare verdicts.
    Verify {
        /// Only this entry.
        #[arg(long)]
        entry: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Decl,
    Reverse,
}

/// Exploration flags shared by the model-checking commands.
#[derive(Args)]
struct RunArgs {
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, env = "FLOWLOCK_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Memory budget for the visited set, with optional K, M or G suffix.
    #[arg(long, value_parser = parse_budget, default_value = "4G")]
    budget: u64,
    /// Write a JSON report to this path.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Order in which rule instances are tried from each state.
    #[arg(long, value_enum, default_value = "decl")]
    order: Order,
}

impl RunArgs {
    fn options(&self, symmetry: bool, fail_fast: bool) -> ReachOptions {
        ReachOptions {
            symmetry,
            fail_fast,
            workers: self.workers,
            budget_bytes: self.budget,
            rule_order: match self.order {
                Order::Decl => RuleOrder::Declaration,
                Order::Reverse => RuleOrder::ReverseRulesets,
            },
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    model: PathBuf,
    /// Number of agents.
    #[arg(long)]
    n: u32,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    invs: Option<PathBuf>,
    /// Declared invariant of the model to check (repeatable).
    #[arg(long = "prop", value_name = "NAME")]
    props: Vec<String>,
    /// Check every declared invariant of the model.
    #[arg(long)]
    all_props: bool,
    /// Check partition coverage of the invariant set instead of the set itself.
    #[arg(long, requires = "invs")]
    partition: bool,
    /// Look for reachable s-deadlock states.
    #[arg(long)]
    sdeadlock: bool,
    /// Explore modulo agent and data symmetry.
    #[arg(long)]
    sym: bool,
    #[arg(long)]
    fail_fast: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct DeriveArgs {
    model: PathBuf,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    flows: PathBuf,
    #[arg(long)]
    invs: PathBuf,
    #[arg(long)]
    sym: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("witness").required(true).args(["ptr", "member"]))]
struct SplitArgs {
    /// Protocol the invariant set refers to.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    invs: PathBuf,
    /// Invariant to split.
    #[arg(long)]
    inv: String,
    /// Conflict condition (a global predicate).
    #[arg(long)]
    conf: String,
    /// Global pointer naming the agent that must stay enabled.
    #[arg(long)]
    ptr: Option<String>,
    /// Membership predicate over the invariant's index variable.
    #[arg(long)]
    member: Option<String>,
    /// Names of the two halves, comma separated.
    #[arg(long, value_name = "A,B", value_parser = parse_names)]
    names: Option<(String, String)>,
    /// Output invariant-set file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AbstractArgs {
    model: PathBuf,
    /// Number of concrete agents kept.
    #[arg(long)]
    c: u32,
    #[arg(long)]
    lemmas: Option<PathBuf>,
    /// Keep Other rules with a true guard and an empty action.
    #[arg(long)]
    no_elide: bool,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CmpArgs {
    model: PathBuf,
    #[arg(long)]
    c: u32,
    #[arg(long)]
    invs: PathBuf,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    lemmas: Option<PathBuf>,
    #[arg(long = "prop", value_name = "NAME")]
    props: Vec<String>,
    /// Explore without symmetry reduction.
    #[arg(long)]
    no_sym: bool,
    #[arg(long)]
    fail_fast: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random reachable states sampled per model.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, env = "FLOWLOCK_WORKERS", default_value_t = 0)]
    workers: usize,
}

fn parse_names(s: &str) -> Result<(String, String), String> {
    match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected two comma-separated names, got `{s}`")),
    }
}

fn parse_budget(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&s[..s.len() - 1], 10),
        Some('M') => (&s[..s.len() - 1], 20),
        Some('G') => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    let n: u64 = digits
        .parse()
        .map_err(|_| format!("invalid budget `{s}`"))?;
    n.checked_mul(1 << shift)
        .filter(|&b| b > 0)
        .ok_or_else(|| format!("invalid budget `{s}`"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn located(path: &Path, d: Diagnostics) -> anyhow::Error {
    let lines: Vec<String> =
        d.0.iter()
            .map(|d| format!("{}:{d}", path.display()))
            .collect();
    anyhow!(lines.join("\n"))
}

fn load_protocol(path: &Path) -> Result<ProtocolDef> {
    parse_protocol(&read(path)?).map_err(|d| located(path, d))
}

fn load_flows(def: &ProtocolDef, path: Option<&Path>) -> Result<Vec<FlowSpec>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let flows = parse_flows(&read(path)?).map_err(|d| located(path, d))?;
    validate_flows(def, &flows).map_err(|m| anyhow!("{}: {m}", path.display()))?;
    Ok(flows)
}

fn load_invset(def: &ProtocolDef, path: &Path) -> Result<InvSet> {
    let set = parse_invset(&read(path)?).map_err(|d| located(path, d))?;
    validate_invset(def, &set).map_err(|d| located(path, d))?;
    Ok(set)
}

fn load_lemmas(def: &ProtocolDef, path: Option<&Path>) -> Result<Vec<Lemma>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let lemmas = parse_lemmas(&read(path)?).map_err(|d| located(path, d))?;
    validate_lemmas(def, &lemmas).map_err(|m| anyhow!("{}: {m}", path.display()))?;
    Ok(lemmas)
}

fn property(m: &GroundModel, name: &str) -> Result<Check> {
    let (_, g) = m
        .invariants
        .iter()
        .find(|(n, _)| n == name)
        .ok_or_else(|| anyhow!("no declared invariant `{name}`"))?;
    Ok(Check::property(name, g.clone()))
}

fn write_json(path: Option<&Path>, command: &str, mut body: Value) -> Result<()> {
    let Some(path) = path else {
        return Ok(());
    };
    if let Value::Object(map) = &mut body {
        map.insert("schema".into(), json!(1));
        map.insert("command".into(), json!(command));
    }
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs reach, mapping a blown budget to exit code 3 after printing what was
/// explored.
fn explore(
    m: &GroundModel,
    checks: &[Check],
    opts: &ReachOptions,
) -> Result<Result<ReachReport, u8>> {
    match reach(m, checks, opts) {
        Ok(r) => Ok(Ok(r)),
        Err(ReachError::OutOfBudget(states)) => {
            outln!("OUT OF BUDGET after {states} states");
            Ok(Err(BUDGET))
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_report(m: &GroundModel, r: &ReachReport, render: &dyn Fn(&flowlock::Trace) -> String) {
    let mut out = String::new();
    for c in &r.checks {
        match &c.verdict {
            Verdict::Pass => {
                let _ = writeln!(out, "PASS {} [{}]", c.name, c.kind);
            }
            Verdict::Fail { trace, agent } => {
                let _ = match agent {
                    Some(a) => writeln!(out, "FAIL {} [{}] agent {a}", c.name, c.kind),
                    None => writeln!(out, "FAIL {} [{}]", c.name, c.kind),
                };
                out.push_str(&render(trace));
            }
        }
    }
    emit(&out);
    outln!(
        "states: {}  transitions: {}  depth: {}  time: {:.2}s",
        r.states,
        r.transitions,
        r.depth,
        r.elapsed.as_secs_f64()
    );
    match &r.outcome {
        Outcome::Complete => {}
        Outcome::Stopped => outln!("exploration stopped at the first failure"),
        Outcome::OutOfBudget => outln!("OUT OF BUDGET: counts above are partial"),
        Outcome::Error { message, trace } => {
            outln!("ERROR {message}");
            if let Some(t) = trace {
                out!("{}", t.to_text(m));
            }
        }
    }
}

fn exit_code(r: &ReachReport) -> u8 {
    match r.outcome {
        Outcome::Error { .. } => USAGE,
        _ if r.any_failed() => FAIL,
        Outcome::OutOfBudget => BUDGET,
        _ => PASS,
    }
}

fn cmd_check(a: &CheckArgs) -> Result<u8> {
    let def = load_protocol(&a.model)?;
    let flows = load_flows(&def, a.flows.as_deref())?;
    if !flows.is_empty() {
        for r in validate_flow_coverage(&def, &flows) {
            eprintln!("warning: rule {r} belongs to no flow");
        }
    }
    let m = instantiate(&def, a.n)?;
    let mut checks = Vec::new();
    if let Some(path) = &a.invs {
        let set = load_invset(&def, path)?;
        if a.partition {
            checks.push(partition_check(&m, &set).map_err(|e| anyhow!(e))?);
        } else {
            checks = invset_checks(&m, &flows, &set).map_err(|e| anyhow!(e))?;
        }
    }
    if a.all_props {
        checks.extend(
            m.invariants
                .iter()
                .map(|(n, g)| Check::property(n, g.clone())),
        );
    }
    for p in &a.props {
        checks.push(property(&m, p)?);
    }
    if a.sdeadlock {
        checks.push(Check::sdeadlock());
    }
    if checks.is_empty() {
        bail!("nothing to check: give --invs, --prop, --all-props or --sdeadlock");
    }
    let opts = a.run.options(a.sym, a.fail_fast);
    let r = match explore(&m, &checks, &opts)? {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    print_report(&m, &r, &|t| t.to_text(&m));
    write_json(a.run.json.as_deref(), "check", r.to_json(&m))?;
    Ok(exit_code(&r))
}

fn cmd_derive(a: &DeriveArgs) -> Result<u8> {
    let def = load_protocol(&a.model)?;
    let flows = load_flows(&def, Some(&a.flows))?;
    let set = load_invset(&def, &a.invs)?;
    let m = instantiate(&def, a.n)?;
    let checks = invset_checks(&m, &flows, &set).map_err(|e| anyhow!(e))?;
    let opts = a.run.options(a.sym, false);
    let r = match explore(&m, &checks, &opts)? {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    if let Outcome::Error { message, .. } = &r.outcome {
        bail!("{message}");
    }
    let failing = set
        .invariants
        .iter()
        .find_map(|inv| match r.verdict(&inv.name) {
            Some(Verdict::Fail { trace, .. }) => Some((inv.name.as_str(), trace)),
            _ => None,
        });
    if let Some((name, trace)) = failing {
        let d = derive_diagnostics(&m, &flows, &set, name, trace)?;
        emit(&d.to_text(&m));
        write_json(
            a.run.json.as_deref(),
            "derive",
            json!({ "states": r.states, "verdict": "fail", "diagnosis": d.to_json(&m) }),
        )?;
        return Ok(FAIL);
    }
    let failed: Vec<&str> = r
        .checks
        .iter()
        .filter(|c| !c.verdict.passed())
        .map(|c| c.name.as_str())
        .collect();
    let verdict = if !failed.is_empty() {
        for c in r.checks.iter().filter(|c| !c.verdict.passed()) {
            outln!("FAIL {} [{}]", c.name, c.kind);
            if let Some(t) = c.verdict.trace() {
                out!("{}", t.to_text(&m));
            }
        }
        outln!(
            "all invariants hold, but {} assertion(s) fail",
            failed.len()
        );
        "fail"
    } else if matches!(r.outcome, Outcome::Complete) {
        outln!("all invariants hold ({} states)", r.states);
        "pass"
    } else {
        outln!("OUT OF BUDGET after {} states", r.states);
        "incomplete"
    };
    write_json(
        a.run.json.as_deref(),
        "derive",
        json!({ "states": r.states, "verdict": verdict, "failed": failed }),
    )?;
    Ok(match verdict {
        "pass" => PASS,
        "fail" => FAIL,
        _ => BUDGET,
    })
}

fn cmd_split(a: &SplitArgs) -> Result<u8> {
    let def = load_protocol(&a.model)?;
    let set = load_invset(&def, &a.invs)?;
    let conf = parse_expr(&a.conf).map_err(|d| anyhow!("--conf: {d}"))?;
    let witness = match (&a.ptr, &a.member) {
        (Some(p), _) => Witness::Pointer(p.clone()),
        (None, Some(e)) => Witness::Member(parse_expr(e).map_err(|d| anyhow!("--member: {d}"))?),
        (None, None) => bail!("one of --ptr and --member is required"),
    };
    let req = SplitRequest {
        target: a.inv.clone(),
        conf,
        witness,
        names: a.names.clone(),
    };
    let split = split_invariant(&def, &set, &req)?;
    fs::write(&a.output, print_invset(&split.set))
        .with_context(|| format!("cannot write {}", a.output.display()))?;
    out!(
        "{}{}",
        print_invariant(&split.inv1),
        print_invariant(&split.inv2)
    );
    Ok(PASS)
}

fn cmd_abstract(a: &AbstractArgs) -> Result<u8> {
    let def = load_protocol(&a.model)?;
    let lemmas = load_lemmas(&def, a.lemmas.as_deref())?;
    let opts = ReduceOptions {
        elide: !a.no_elide,
        ..Default::default()
    };
    let abs = data_type_reduce(&strengthen(&def, &lemmas), a.c, &opts)?;
    let text = pretty_print(&abs.def);
    match &a.output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?
        }
        None => emit(&text),
    }
    if !abs.elided.is_empty() {
        eprintln!("elided Other rules: {}", abs.elided.join(", "));
    }
    Ok(PASS)
}

fn cmd_cmp(a: &CmpArgs) -> Result<u8> {
    let def = load_protocol(&a.model)?;
    let flows = load_flows(&def, a.flows.as_deref())?;
    let set = load_invset(&def, &a.invs)?;
    let lemmas = load_lemmas(&def, a.lemmas.as_deref())?;
    let cfg = CmpConfig {
        properties: a.props.clone(),
        ..Default::default()
    };
    let opts = a.run.options(!a.no_sym, a.fail_fast);
    let res = match cmp_iterate(&def, &flows, &set, &lemmas, a.c, &cfg, &opts) {
        Ok(res) => res,
        Err(flowlock::AbstractError::Reach(ReachError::OutOfBudget(states))) => {
            outln!("OUT OF BUDGET after {states} abstract states");
            return Ok(BUDGET);
        }
        Err(e) => return Err(e.into()),
    };
    print_report(&res.model, &res.report, &|t| res.render_trace(t));
    outln!(
        "abstract states: {}  verdict: {}",
        res.report.states,
        if res.passed() { "pass" } else { "fail" }
    );
    let mut body = res.report.to_json(&res.model);
    if let Value::Object(map) = &mut body {
        map.insert("c".into(), json!(a.c));
        map.insert(
            "other_rules".into(),
            json!(res.abstract_protocol.other_rules),
        );
        map.insert("elided".into(), json!(res.abstract_protocol.elided));
    }
    write_json(a.run.json.as_deref(), "cmp", body)?;
    Ok(exit_code(&res.report))
}

fn cmd_selftest(a: &SelftestArgs) -> Result<u8> {
    let opts = SelftestOptions {
        samples: a.samples,
        seed: a.seed,
        workers: a.workers,
    };
    let mut ok = true;
    for suite in selftest::run_all(&opts) {
        outln!("{suite}");
        for f in &suite.failures {
            outln!("  {f}");
        }
        ok &= suite.passed();
    }
    Ok(if ok { PASS } else { FAIL })
}

fn cmd_verify(entry: Option<&str>, run: &RunArgs) -> Result<u8> {
    let results = match entry {
        Some(e) => vec![corpus::verify_entry(e, run.workers)?],
        None => corpus::verify_all(run.workers)?,
    };
    let mut ok = true;
    let mut entries = Vec::new();
    for e in &results {
        outln!("{} {}", if e.ok() { "OK  " } else { "FAIL" }, e.entry);
        for f in &e.parsed {
            outln!("  parsed {f}");
        }
        let mut runs = Vec::new();
        for r in &e.runs {
            outln!(
                "  {} {} ({} states)",
                if r.ok() { "ok  " } else { "FAIL" },
                r.label,
                r.states
            );
            for (name, want, got) in &r.verdicts {
                if Some(*want) != *got {
                    outln!("    {name}: expected {want:?}, observed {got:?}");
                }
            }
            runs.push(json!({
                "label": r.label,
                "ok": r.ok(),
                "verdicts": r.verdicts.iter().map(|(n, w, g)| json!({
                    "check": n, "expected": w, "observed": g,
                })).collect::<Vec<_>>(),
            }));
        }
        ok &= e.ok();
        entries.push(json!({ "entry": e.entry, "ok": e.ok(), "runs": runs }));
    }
    write_json(
        run.json.as_deref(),
        "corpus verify",
        json!({ "entries": entries }),
    )?;
    Ok(if ok { PASS } else { FAIL })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { PASS });
        }
    };
    let res = match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Derive(a) => cmd_derive(a),
        Command::Split(a) => cmd_split(a),
        Command::Abstract(a) => cmd_abstract(a),
        Command::Cmp(a) => cmd_cmp(a),
        Command::Selftest(a) => cmd_selftest(a),
        Command::Corpus {
            command: CorpusCommand::Verify { entry, run },
        } => cmd_verify(entry.as_deref(), run),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}
