//! The bundled protocol corpus, embedded at build time, and the manifest
//! runner that checks its documented verdicts.

use crate::abstraction::{cmp_iterate, CmpConfig};
use crate::ast::ProtocolDef;
use crate::explore::{reach, Check, Outcome, ReachOptions, ReachReport};
use crate::formats::{parse_flows, parse_invset, parse_lemmas, FlowSpec, InvSet, Lemma};
use crate::ground::{instantiate, GroundModel};
use crate::invariants::{invset_checks, partition_check};
use crate::parser::parse_protocol;

macro_rules! corpus_files {
    ($($path:literal),* $(,)?) => {
        /// Every corpus file as (relative path, contents).
        pub const FILES: &[(&str, &str)] = &[
            $(($path, include_str!(concat!("../../../corpus/", $path)))),*
        ];
    };
}

corpus_files!(
    "german/reference.proto.m",
    "german/model.proto.m",
    "german/flows.flw",
    "german/flows_no_store.flw",
    "german/inv1.invs",
    "german/iter2.invs",
    "german/final.invs",
    "german/missing_inv11.invs",
    "german/empty.lemmas",
    "german/identity.lemmas",
    "german/gnte.lemmas",
    "german/noninterference.lemmas",
    "german/false.lemmas",
    "german/manifest.json",
    "german_buggy/model.proto.m",
    "german_buggy/flows.flw",
    "german_buggy/iter2.invs",
    "german_buggy/final.invs",
    "german_buggy/manifest.json",
    "german_aux/model.proto.m",
    "german_aux/flows.flw",
    "german_aux/final.invs",
    "german_aux/manifest.json",
    "german_mutant_gnte/model.proto.m",
    "german_mutant_gnte/manifest.json",
    "flash_templates/flash.invs",
    "flash_templates/manifest.json",
);

/// Looks up an embedded corpus file by its path relative to `corpus/`.
pub fn file(path: &str) -> Option<&'static str> {
    FILES.iter().find(|(p, _)| *p == path).map(|(_, c)| *c)
}

/// Like [`file`] but panics on a missing path; for tests and benches.
pub fn must(path: &str) -> &'static str {
    file(path).unwrap_or_else(|| panic!("corpus file `{path}` is not embedded"))
}

/// Names of the corpus entries (directories with a manifest).
pub fn entries() -> Vec<&'static str> {
    FILES
        .iter()
        .filter_map(|(p, _)| p.strip_suffix("/manifest.json"))
        .collect()
}

/// Expected verdict of one named check in a manifest run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Expected {
    Pass,
    Fail,
}

/// One documented command of a corpus entry.
#[derive(Clone, Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_model")]
    pub model: String,
    /// Concrete instance size.
    pub n: Option<u32>,
    /// Concrete agents of a cmp run.
    pub c: Option<u32>,
    pub flows: Option<String>,
    pub invs: Option<String>,
    pub lemmas: Option<String>,
    /// Declared invariants of the model to check.
    #[serde(default)]
    pub properties: Vec<String>,
    #[serde(default)]
    pub sdeadlock: bool,
    /// Check partition coverage of the invariant set instead of the set itself.
    #[serde(default)]
    pub partition: bool,
    #[serde(default)]
    pub symmetry: bool,
    /// Stop at the first violation.
    #[serde(default)]
    pub fail_fast: bool,
    pub expect: std::collections::BTreeMap<String, Expected>,
}

fn default_model() -> String {
    "model.proto.m".into()
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub description: String,
    /// Files that only need to parse.
    #[serde(default)]
    pub parse: Vec<String>,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("{0}: missing corpus file")]
    Missing(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Verdict comparison for one run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub label: String,
    /// (check, expected, observed); `None` when the check was not produced.
    pub verdicts: Vec<(String, Expected, Option<Expected>)>,
    pub states: usize,
}

impl RunResult {
    pub fn ok(&self) -> bool {
        self.verdicts.iter().all(|(_, e, got)| Some(*e) == *got)
    }
}

#[derive(Clone, Debug)]
pub struct EntryResult {
    pub entry: String,
    pub parsed: Vec<String>,
    pub runs: Vec<RunResult>,
}

impl EntryResult {
    pub fn ok(&self) -> bool {
        self.runs.iter().all(RunResult::ok)
    }
}

fn load(entry: &str, name: &str) -> Result<&'static str, VerifyError> {
    let path = format!("{entry}/{name}");
    file(&path).ok_or(VerifyError::Missing(path))
}

fn invalid(path: impl Into<String>, message: impl ToString) -> VerifyError {
    VerifyError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

pub fn manifest(entry: &str) -> Result<Manifest, VerifyError> {
    let src = load(entry, "manifest.json")?;
    serde_json::from_str(src).map_err(|e| invalid(format!("{entry}/manifest.json"), e))
}

fn parse_file(entry: &str, name: &str) -> Result<(), VerifyError> {
    let src = load(entry, name)?;
    let path = format!("{entry}/{name}");
    let r = if name.ends_with(".proto.m") {
        parse_protocol(src).map(drop)
    } else if name.ends_with(".flw") {
        parse_flows(src).map(drop)
    } else if name.ends_with(".invs") {
        parse_invset(src).map(drop)
    } else if name.ends_with(".lemmas") {
        parse_lemmas(src).map(drop)
    } else {
        return Err(invalid(path, "unknown file kind"));
    };
    r.map_err(|d| invalid(path, d))
}

/// A manifest run with its inputs loaded and compiled.
#[derive(Clone, Debug)]
pub enum PreparedRun {
    Concrete {
        label: String,
        model: GroundModel,
        flows: Vec<FlowSpec>,
        checks: Vec<Check>,
    },
    Cmp {
        label: String,
        def: ProtocolDef,
        flows: Vec<FlowSpec>,
        set: InvSet,
        lemmas: Vec<Lemma>,
        c: u32,
        cfg: CmpConfig,
    },
}

impl PreparedRun {
    pub fn label(&self) -> &str {
        match self {
            PreparedRun::Concrete { label, .. } | PreparedRun::Cmp { label, .. } => label,
        }
    }

    /// Explores with the given options. The run's own symmetry and
    /// fail-fast settings are not applied here.
    pub fn execute(&self, opts: &ReachOptions) -> Result<ReachReport, VerifyError> {
        match self {
            PreparedRun::Concrete {
                label,
                model,
                checks,
                ..
            } => reach(model, checks, opts).map_err(|e| invalid(label.as_str(), e)),
            PreparedRun::Cmp {
                label,
                def,
                flows,
                set,
                lemmas,
                c,
                cfg,
            } => cmp_iterate(def, flows, set, lemmas, *c, cfg, opts)
                .map(|r| r.report)
                .map_err(|e| invalid(label.as_str(), e)),
        }
    }
}

/// Loads and compiles one manifest run.
pub fn prepare(entry: &str, run: &RunSpec) -> Result<PreparedRun, VerifyError> {
    let ctx = |what: &str| format!("{entry}/{what}");
    let def = parse_protocol(load(entry, &run.model)?).map_err(|d| invalid(ctx(&run.model), d))?;
    let flows = match &run.flows {
        Some(f) => parse_flows(load(entry, f)?).map_err(|d| invalid(ctx(f), d))?,
        None => Vec::new(),
    };
    let set = match &run.invs {
        Some(f) => Some(parse_invset(load(entry, f)?).map_err(|d| invalid(ctx(f), d))?),
        None => None,
    };
    let source = run.invs.as_deref().unwrap_or(&run.model);
    match (run.n, run.c) {
        (Some(n), None) => {
            let model = instantiate(&def, n).map_err(|e| invalid(ctx(&run.model), e))?;
            let mut checks = Vec::new();
            if run.partition {
                let set = set
                    .as_ref()
                    .ok_or_else(|| invalid(ctx("manifest.json"), "partition needs invs"))?;
                checks.push(partition_check(&model, set).map_err(|e| invalid(ctx(source), e))?);
            } else if let Some(set) = &set {
                checks = invset_checks(&model, &flows, set).map_err(|e| invalid(ctx(source), e))?;
            }
            for p in &run.properties {
                let (_, g) = model
                    .invariants
                    .iter()
                    .find(|(name, _)| name == p)
                    .ok_or_else(|| {
                        invalid(ctx(&run.model), format!("no declared invariant `{p}`"))
                    })?;
                checks.push(Check::property(p.clone(), g.clone()));
            }
            if run.sdeadlock {
                checks.push(Check::sdeadlock());
            }
            let kind = if run.partition { " partition" } else { "" };
            Ok(PreparedRun::Concrete {
                label: format!("{source}{kind} N={n}"),
                model,
                flows,
                checks,
            })
        }
        (None, Some(c)) => {
            let set = set.ok_or_else(|| invalid(ctx("manifest.json"), "cmp needs invs"))?;
            let lemmas = match &run.lemmas {
                Some(f) => parse_lemmas(load(entry, f)?).map_err(|d| invalid(ctx(f), d))?,
                None => Vec::new(),
            };
            let cfg = CmpConfig {
                properties: run.properties.clone(),
                ..Default::default()
            };
            Ok(PreparedRun::Cmp {
                label: format!("cmp {source} c={c}"),
                def,
                flows,
                set,
                lemmas,
                c,
                cfg,
            })
        }
        _ => Err(invalid(
            ctx("manifest.json"),
            "a run needs exactly one of `n` and `c`",
        )),
    }
}

/// Observed verdict of a check; a pass only counts once the whole space
/// was explored.
pub fn observed(report: &ReachReport, name: &str) -> Option<Expected> {
    match report.verdict(name) {
        Some(v) if !v.passed() => Some(Expected::Fail),
        Some(_) if matches!(report.outcome, Outcome::Complete) => Some(Expected::Pass),
        _ => None,
    }
}

/// Runs one manifest command and compares its verdicts.
pub fn run_spec(entry: &str, run: &RunSpec, workers: usize) -> Result<RunResult, VerifyError> {
    let prepared = prepare(entry, run)?;
    let opts = ReachOptions {
        symmetry: run.symmetry,
        fail_fast: run.fail_fast,
        workers,
        ..Default::default()
    };
    let report = prepared.execute(&opts)?;
    let verdicts = run
        .expect
        .iter()
        .map(|(name, e)| (name.clone(), *e, observed(&report, name)))
        .collect();
    Ok(RunResult {
        label: prepared.label().to_string(),
        verdicts,
        states: report.states,
    })
}

/// Parses every listed file and runs every documented command of an entry.
pub fn verify_entry(entry: &str, workers: usize) -> Result<EntryResult, VerifyError> {
    let man = manifest(entry)?;
    if man.schema != 1 {
        return Err(invalid(
            format!("{entry}/manifest.json"),
            format!("unsupported schema {}", man.schema),
        ));
    }
    for f in &man.parse {
        parse_file(entry, f)?;
    }
    let runs = man
        .runs
        .iter()
        .map(|r| run_spec(entry, r, workers))
        .collect::<Result<_, _>>()?;
    Ok(EntryResult {
        entry: entry.into(),
        parsed: man.parse,
        runs,
    })
}

/// Verifies every corpus entry.
pub fn verify_all(workers: usize) -> Result<Vec<EntryResult>, VerifyError> {
    entries()
        .into_iter()
        .map(|e| verify_entry(e, workers))
        .collect()
}
