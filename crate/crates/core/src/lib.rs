//! Flow-derived invariants and s-deadlock checking for symmetric
//! guarded-command protocols.

pub mod abstraction;
pub mod ast;
pub mod check;
pub mod corpus;
pub mod diag;
pub mod explore;
pub mod flows;
pub mod formats;
pub mod ground;
pub mod invariants;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod selftest;
pub mod state;
pub mod symmetry;
pub mod types;

pub use abstraction::{
    cmp_iterate, containment_check, data_type_reduce, strengthen, AbstractError, AbstractProtocol,
    CmpConfig, CmpResult, ReduceOptions,
};
pub use ast::{Expr, ProtocolDef};
pub use diag::{Diagnostics, SourceDiagnostic};
pub use explore::{
    check_sdeadlock, reach, Check, CheckReport, Outcome, ReachError, ReachOptions, ReachReport,
    RuleOrder, Trace, Verdict,
};
pub use flows::{
    replay_flows, validate_flow_coverage, BlockedRule, FlowError, FlowInstance, Replay,
};
pub use formats::{parse_flows, parse_invset, parse_lemmas, FlowSpec, InvSet, Invariant, Lemma};
pub use ground::{instantiate, GroundModel, ModelError};
pub use invariants::{
    check_partition_coverage, derive_diagnostics, split_invariant, theorem_oracle, DiagnosisReport,
    SplitRequest, Witness,
};
pub use parser::{parse_expr, parse_protocol};
pub use pretty::pretty_print;
pub use state::State;
