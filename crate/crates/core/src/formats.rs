//! Flow, invariant-set and lemma file formats.

use std::fmt::Write;

use crate::ast::{mentions_free, Expr, ProtocolDef, Span};
use crate::check::{check_global_pred, check_index_pred, check_lemma};
use crate::diag::Diagnostics;
use crate::lexer::Tok;
use crate::parser::{Cursor, PResult};

/// A named partial order over rule names, per agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowSpec {
    pub name: String,
    pub params: Vec<String>,
    /// Member rule names in order of first mention.
    pub members: Vec<String>,
    /// Declared edges `a < b` as member indices.
    pub edges: Vec<(usize, usize)>,
    /// Members not needed for the flow to complete.
    pub optional: Vec<bool>,
    /// Transitive closure: `before[a][b]` iff a ≺ b.
    before: Vec<Vec<bool>>,
}

impl FlowSpec {
    pub fn index_of(&self, rule: &str) -> Option<usize> {
        self.members.iter().position(|m| m == rule)
    }

    pub fn contains(&self, rule: &str) -> bool {
        self.index_of(rule).is_some()
    }

    /// Whether member `a` strictly precedes member `b`.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.before[a][b]
    }

    /// All strict predecessors of member `b`.
    pub fn predecessors(&self, b: usize) -> Vec<usize> {
        (0..self.members.len())
            .filter(|&a| self.before[a][b])
            .collect()
    }

    pub fn is_minimal(&self, b: usize) -> bool {
        (0..self.members.len()).all(|a| !self.before[a][b])
    }

    fn close(&mut self) -> Result<(), String> {
        let n = self.members.len();
        let mut before = vec![vec![false; n]; n];
        for &(a, b) in &self.edges {
            before[a][b] = true;
        }
        for k in 0..n {
            for a in 0..n {
                if before[a][k] {
                    for b in 0..n {
                        if before[k][b] {
                            before[a][b] = true;
                        }
                    }
                }
            }
        }
        if let Some(a) = (0..n).find(|&a| before[a][a]) {
            return Err(format!(
                "cyclic order in flow `{}` through `{}`",
                self.name, self.members[a]
            ));
        }
        for (k, opt) in self.optional.iter().enumerate() {
            if *opt && (0..n).any(|b| before[k][b]) {
                return Err(format!(
                    "optional member `{}` of flow `{}` must be maximal",
                    self.members[k], self.name
                ));
            }
        }
        self.before = before;
        Ok(())
    }

    /// Builds a flow from chains of rule names.
    pub fn new(
        name: &str,
        param: &str,
        chains: &[&[&str]],
        optional: &[&str],
    ) -> Result<FlowSpec, String> {
        let mut f = FlowSpec {
            name: name.into(),
            params: vec![param.into()],
            members: Vec::new(),
            edges: Vec::new(),
            optional: Vec::new(),
            before: Vec::new(),
        };
        for chain in chains {
            let ids: Vec<usize> = chain.iter().map(|r| f.member(r)).collect();
            for w in ids.windows(2) {
                f.edges.push((w[0], w[1]));
            }
        }
        for r in optional {
            let k = f.member(r);
            f.optional[k] = true;
        }
        f.close()?;
        Ok(f)
    }

    fn member(&mut self, rule: &str) -> usize {
        match self.index_of(rule) {
            Some(k) => k,
            None => {
                self.members.push(rule.to_string());
                self.optional.push(false);
                self.members.len() - 1
            }
        }
    }
}

/// Which rules an invariant's g-operator ranges over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// All flow rules of the agent.
    All,
    Rules(Vec<String>),
}

/// `pred ⇒ ∀ i ∈ {i | index}: g(RS(i))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invariant {
    pub name: String,
    pub pred: Expr,
    /// Free index variable of `index`.
    pub var: String,
    pub index: Expr,
    pub target: Target,
    pub span: Span,
}

/// `pred ⇒ {i | index} ≠ {}` for the named invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assertion {
    pub name: String,
    pub inv: String,
    pub span: Span,
}

impl Assertion {
    pub fn for_invariant(inv: &str) -> Assertion {
        Assertion {
            name: format!("{inv}_nonempty"),
            inv: inv.to_string(),
            span: Span::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InvSet {
    pub invariants: Vec<Invariant>,
    pub assertions: Vec<Assertion>,
}

impl InvSet {
    pub fn get(&self, name: &str) -> Option<&Invariant> {
        self.invariants.iter().find(|i| i.name == name)
    }
}

/// `lem = ∀ var. body`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lemma {
    pub name: String,
    pub var: String,
    pub body: Expr,
}

impl Cursor {
    /// A dotted/dashed name such as `inv-1.2.1` built from adjacent tokens.
    fn compound_name(&mut self) -> PResult<String> {
        let mut name = match self.peek().clone() {
            Tok::Ident(s) => s,
            other => return self.error(format!("expected name, found {}", other.describe())),
        };
        let mut end = self.bump().span.end;
        loop {
            let span = self.span();
            if span.start != end {
                break;
            }
            let piece = match self.peek() {
                Tok::Ident(s) => s.clone(),
                Tok::Number(n) => n.to_string(),
                Tok::Minus => "-".into(),
                Tok::Dot => ".".into(),
                _ => break,
            };
            name.push_str(&piece);
            end = self.bump().span.end;
        }
        Ok(name)
    }

    fn rule_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected rule name, found {}", other.describe())),
        }
    }
}

/// Parses a flow file.
pub fn parse_flows(src: &str) -> Result<Vec<FlowSpec>, Diagnostics> {
    let mut cur = Cursor::new(src)?;
    let mut flows: Vec<FlowSpec> = Vec::new();
    while !cur.at_eof() {
        let start = cur.span();
        cur.expect_kw("flow")?;
        let name = cur.ident()?;
        if flows.iter().any(|f| f.name == name) {
            return cur.error(format!("flow `{name}` declared twice"));
        }
        cur.expect(&Tok::LParen)?;
        let mut params = vec![cur.ident()?];
        while cur.eat(&Tok::Comma) {
            params.push(cur.ident()?);
        }
        cur.expect(&Tok::RParen)?;
        cur.expect(&Tok::LBrace)?;
        let mut chains: Vec<Vec<String>> = Vec::new();
        let mut optional = Vec::new();
        while !cur.eat(&Tok::RBrace) {
            if cur.eat_kw("order") || cur.eat_kw("edges") {
                cur.expect(&Tok::Colon)?;
                loop {
                    let mut chain = vec![cur.rule_name()?];
                    while cur.eat(&Tok::Lt) {
                        chain.push(cur.rule_name()?);
                    }
                    chains.push(chain);
                    if !cur.eat(&Tok::Comma) {
                        break;
                    }
                }
            } else if cur.eat_kw("members") {
                cur.expect(&Tok::Colon)?;
                chains.push(vec![cur.rule_name()?]);
                while cur.eat(&Tok::Comma) {
                    chains.push(vec![cur.rule_name()?]);
                }
            } else if cur.eat_kw("optional") {
                cur.expect(&Tok::Colon)?;
                optional.push(cur.rule_name()?);
                while cur.eat(&Tok::Comma) {
                    optional.push(cur.rule_name()?);
                }
            } else {
                return cur.error(format!(
                    "expected `order`, `edges`, `members` or `optional`, found {}",
                    cur.peek().describe()
                ));
            }
            cur.expect(&Tok::Semi)?;
        }
        let refs: Vec<Vec<&str>> = chains
            .iter()
            .map(|c| c.iter().map(String::as_str).collect())
            .collect();
        let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
        let opt: Vec<&str> = optional.iter().map(String::as_str).collect();
        let mut flow = FlowSpec::new(&name, &params[0], &slices, &opt)
            .map_err(|m| Diagnostics::single(m, start.join(cur.prev_span())))?;
        flow.params = params;
        if flow.members.is_empty() {
            return Err(Diagnostics::single(
                format!("flow `{name}` has no rules"),
                start,
            ));
        }
        flows.push(flow);
    }
    Ok(flows)
}

/// Checks that every flow member names a rule of the protocol.
pub fn validate_flows(def: &ProtocolDef, flows: &[FlowSpec]) -> Result<(), String> {
    for f in flows {
        for m in &f.members {
            if def.rule(m).is_none() {
                return Err(format!("flow `{}` mentions unknown rule `{m}`", f.name));
            }
        }
    }
    Ok(())
}

/// Parses an invariant-set file.
pub fn parse_invset(src: &str) -> Result<InvSet, Diagnostics> {
    let mut cur = Cursor::new(src)?;
    let mut set = InvSet::default();
    while !cur.at_eof() {
        let start = cur.span();
        if cur.eat_kw("assert") {
            let name = cur.compound_name()?;
            cur.expect(&Tok::Semi)?;
            let Some(inv) = name.strip_suffix("_nonempty") else {
                return Err(Diagnostics::single(
                    "assertion names have the form `<inv>_nonempty`",
                    start.join(cur.prev_span()),
                ));
            };
            set.assertions.push(Assertion {
                name: name.clone(),
                inv: inv.to_string(),
                span: start.join(cur.prev_span()),
            });
            continue;
        }
        cur.expect_kw("inv")?;
        let name = cur.compound_name()?;
        if set.get(&name).is_some() {
            return cur.error(format!("invariant `{name}` declared twice"));
        }
        cur.expect(&Tok::LBrace)?;
        let (mut pred, mut index, mut target) = (None, None, Target::All);
        while !cur.eat(&Tok::RBrace) {
            let field_span = cur.span();
            let field = cur.ident()?;
            cur.expect(&Tok::Colon)?;
            match field.as_str() {
                "pred" => pred = Some((cur.expr()?, field_span.join(cur.prev_span()))),
                "index" => index = Some(cur.expr()?),
                "target" => {
                    if cur.eat_kw("all") {
                        target = Target::All;
                    } else {
                        cur.expect(&Tok::LBracket)?;
                        let mut rules = vec![cur.rule_name()?];
                        while cur.eat(&Tok::Comma) {
                            rules.push(cur.rule_name()?);
                        }
                        cur.expect(&Tok::RBracket)?;
                        target = Target::Rules(rules);
                    }
                }
                other => {
                    return Err(Diagnostics::single(
                        format!("unknown field `{other}`"),
                        field_span,
                    ))
                }
            }
            cur.expect(&Tok::Semi)?;
        }
        let span = start.join(cur.prev_span());
        let (pred, pred_span) = pred
            .ok_or_else(|| Diagnostics::single(format!("invariant `{name}` has no pred"), span))?;
        if mentions_free(&pred, "i") {
            return Err(Diagnostics::single(
                format!("pred of `{name}` mentions the index variable `i`; use the index field"),
                pred_span,
            ));
        }
        set.invariants.push(Invariant {
            name,
            pred,
            var: "i".into(),
            index: index.unwrap_or(Expr::Bool(true)),
            target,
            span,
        });
    }
    for a in &set.assertions {
        if set.get(&a.inv).is_none() {
            return Err(Diagnostics::single(
                format!("assertion `{}` has no invariant `{}`", a.name, a.inv),
                a.span,
            ));
        }
    }
    Ok(set)
}

/// Type- and scope-checks an invariant set against a protocol.
pub fn validate_invset(def: &ProtocolDef, set: &InvSet) -> Result<(), Diagnostics> {
    let mut diags = Vec::new();
    for inv in &set.invariants {
        let res = check_global_pred(def, &inv.pred)
            .map_err(|m| format!("pred of `{}`: {m}", inv.name))
            .and_then(|_| {
                check_index_pred(def, &inv.var, &inv.index)
                    .map_err(|m| format!("index of `{}`: {m}", inv.name))
            })
            .and_then(|_| match &inv.target {
                Target::All => Ok(()),
                Target::Rules(rs) => match rs.iter().find(|r| def.rule(r).is_none()) {
                    Some(r) => Err(format!("target of `{}` names unknown rule `{r}`", inv.name)),
                    None => Ok(()),
                },
            });
        if let Err(m) = res {
            diags.extend(Diagnostics::single(m, inv.span).0);
        }
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Diagnostics(diags))
    }
}

/// Parses a lemma file.
pub fn parse_lemmas(src: &str) -> Result<Vec<Lemma>, Diagnostics> {
    let mut cur = Cursor::new(src)?;
    let mut out = Vec::new();
    while !cur.at_eof() {
        cur.expect_kw("lemma")?;
        let name = cur.compound_name()?;
        cur.expect(&Tok::LBrace)?;
        cur.expect_kw("forall")?;
        let var = cur.ident()?;
        cur.expect(&Tok::Colon)?;
        let body = cur.expr()?;
        cur.expect(&Tok::Semi)?;
        cur.expect(&Tok::RBrace)?;
        out.push(Lemma { name, var, body });
    }
    Ok(out)
}

pub fn validate_lemmas(def: &ProtocolDef, lemmas: &[Lemma]) -> Result<(), String> {
    for l in lemmas {
        check_lemma(def, &l.var, &l.body).map_err(|m| format!("lemma `{}`: {m}", l.name))?;
    }
    Ok(())
}

pub fn print_flows(flows: &[FlowSpec]) -> String {
    let mut out = String::new();
    for f in flows {
        let _ = writeln!(out, "flow {}({}) {{", f.name, f.params.join(", "));
        let _ = writeln!(out, "  members: {};", f.members.join(", "));
        for &(a, b) in &f.edges {
            let _ = writeln!(out, "  edges: {} < {};", f.members[a], f.members[b]);
        }
        let opt: Vec<_> = (0..f.members.len())
            .filter(|&k| f.optional[k])
            .map(|k| f.members[k].as_str())
            .collect();
        if !opt.is_empty() {
            let _ = writeln!(out, "  optional: {};", opt.join(", "));
        }
        out.push_str("}\n");
    }
    out
}

pub fn print_invariant(inv: &Invariant) -> String {
    let target = match &inv.target {
        Target::All => "all".to_string(),
        Target::Rules(rs) => format!("[{}]", rs.join(", ")),
    };
    format!(
        "inv {} {{\n  pred: {};\n  index: {};\n  target: {};\n}}\n",
        inv.name, inv.pred, inv.index, target
    )
}

pub fn print_invset(set: &InvSet) -> String {
    let mut out = String::new();
    for inv in &set.invariants {
        out.push_str(&print_invariant(inv));
    }
    for a in &set.assertions {
        let _ = writeln!(out, "assert {};", a.name);
    }
    out
}

pub fn print_lemmas(lemmas: &[Lemma]) -> String {
    let mut out = String::new();
    for l in lemmas {
        let _ = writeln!(
            out,
            "lemma {} {{\n  forall {}: {};\n}}",
            l.name, l.var, l.body
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_with_dots_and_dashes() {
        let set = parse_invset(
            "inv inv-1.2.1 { pred: true; index: true; target: all; }\nassert inv-1.2.1_nonempty;",
        )
        .unwrap();
        assert_eq!(set.invariants[0].name, "inv-1.2.1");
        assert_eq!(set.assertions[0].inv, "inv-1.2.1");
    }

    #[test]
    fn cyclic_flow_rejected() {
        let err = parse_flows("flow F(i) { order: A < B; edges: B < A; }").unwrap_err();
        assert!(err.first().message.contains("cyclic"));
    }

    #[test]
    fn free_index_in_pred_rejected() {
        let err = parse_invset("inv x { pred: Cache[i].State = I; index: true; target: all; }")
            .unwrap_err();
        assert!(err.first().message.contains("index variable"));
    }

    #[test]
    fn identity_lemma() {
        let ls = parse_lemmas("lemma id { forall i: true; }").unwrap();
        assert_eq!(ls[0].body, Expr::Bool(true));
        assert_eq!(parse_lemmas("").unwrap(), vec![]);
    }
}
