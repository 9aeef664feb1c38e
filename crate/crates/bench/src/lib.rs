//! Fixtures shared by the benchmarks under benches/.

use flowlock::corpus;
use flowlock::explore::reachable_states;
use flowlock::{instantiate, parse_protocol, GroundModel, State};

/// Concrete German model with `n` agents.
pub fn german(n: u32) -> GroundModel {
    let def = parse_protocol(corpus::must("german/model.proto.m")).expect("corpus parses");
    instantiate(&def, n).expect("german instantiates")
}

/// Every reachable state of `m`, in discovery order.
pub fn states(m: &GroundModel) -> Vec<State> {
    reachable_states(m, u64::MAX).expect("fits in memory")
}
