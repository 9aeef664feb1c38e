//! Recursive-descent parser for the protocol description language.
//!
//! The accepted language is a Murphi subset: `const`, `type`, `var`,
//! `ruleset`, `rule`, `startstate` and `invariant` declarations with
//! assignments, `for`, `if` and `undefine` statements. Anything outside the
//! subset is rejected with a diagnostic.

use crate::ast::*;
use crate::check::check_protocol;
use crate::diag::Diagnostics;
use crate::lexer::{tokenize, Tok, Token};

const KEYWORDS: &[&str] = &[
    "const",
    "type",
    "var",
    "ruleset",
    "rule",
    "startstate",
    "invariant",
    "do",
    "end",
    "for",
    "if",
    "then",
    "else",
    "undefine",
    "forall",
    "exists",
    "boolean",
    "enum",
    "scalarset",
    "record",
    "array",
    "of",
    "true",
    "false",
    "NULL",
    "with",
    "other",
    "o",
];

const UNSUPPORTED: &[&str] = &[
    "procedure",
    "function",
    "alias",
    "switch",
    "case",
    "while",
    "repeat",
    "return",
    "begin",
    "elsif",
    "clear",
    "put",
    "error",
    "assert",
    "isundefined",
    "ismember",
    "multiset",
    "union",
    "choose",
    "liveness",
    "fairness",
    "include",
];

pub(crate) struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

pub(crate) type PResult<T> = Result<T, Diagnostics>;

impl Cursor {
    pub(crate) fn new(src: &str) -> PResult<Self> {
        Ok(Cursor {
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub(crate) fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    pub(crate) fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    pub(crate) fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    pub(crate) fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub(crate) fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostics::single(msg, self.span()))
    }

    pub(crate) fn expect(&mut self, t: &Tok) -> PResult<Span> {
        if self.peek() == t {
            Ok(self.bump().span)
        } else {
            let want = match t {
                Tok::Ident(s) => format!("`{s}`"),
                other => other.describe(),
            };
            self.error(format!("expected {want}, found {}", self.peek().describe()))
        }
    }

    pub(crate) fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.error(format!("expected `{kw}`, found {}", self.peek().describe()))
        }
    }

    pub(crate) fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected identifier, found {}", other.describe())),
        }
    }

    pub(crate) fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected string, found {}", other.describe())),
        }
    }

    fn number(&mut self) -> PResult<u32> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(n)
            }
            other => self.error(format!("expected number, found {}", other.describe())),
        }
    }

    fn reject_unsupported(&self) -> PResult<()> {
        if let Tok::Ident(s) = self.peek() {
            if UNSUPPORTED.contains(&s.as_str()) {
                return self.error(format!("`{s}` is not in subset"));
            }
        }
        Ok(())
    }

    // ---- types ----

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        self.reject_unsupported()?;
        if self.eat_kw("boolean") {
            return Ok(TypeExpr::Boolean);
        }
        if self.eat_kw("enum") {
            self.expect(&Tok::LBrace)?;
            let mut members = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                members.push(self.ident()?);
            }
            self.expect(&Tok::RBrace)?;
            return Ok(TypeExpr::Enum(members));
        }
        if self.eat_kw("scalarset") {
            self.expect(&Tok::LParen)?;
            let size = match self.peek().clone() {
                Tok::Number(n) => {
                    self.bump();
                    SizeExpr::Lit(n)
                }
                _ => SizeExpr::Const(self.ident()?),
            };
            self.expect(&Tok::RParen)?;
            let with_other = if self.eat_kw("with") {
                self.expect_kw("other")?;
                true
            } else {
                false
            };
            return Ok(TypeExpr::Scalarset { size, with_other });
        }
        if self.eat_kw("record") {
            let mut fields = Vec::new();
            while !self.is_kw("end") {
                let name = self.ident()?;
                self.expect(&Tok::Colon)?;
                let ty = self.type_expr()?;
                fields.push((name, ty));
                if !self.eat(&Tok::Semi) {
                    break;
                }
            }
            self.expect_kw("end")?;
            return Ok(TypeExpr::Record(fields));
        }
        if self.eat_kw("array") {
            self.expect(&Tok::LBracket)?;
            let index = self.type_expr()?;
            self.expect(&Tok::RBracket)?;
            self.expect_kw("of")?;
            let elem = self.type_expr()?;
            return Ok(TypeExpr::Array {
                index: Box::new(index),
                elem: Box::new(elem),
            });
        }
        if let Tok::Number(_) = self.peek() {
            return self.error("integer subrange types are not in subset");
        }
        Ok(TypeExpr::Named(self.ident()?))
    }

    // ---- expressions ----

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.expr()?;
            return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat(&Tok::And) {
            let rhs = self.not_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Bang) {
            let inner = self.not_expr()?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.primary()?;
        self.reject_arith()?;
        if self.eat(&Tok::Eq) {
            if self.peek() == &Tok::LBrace && self.peek_at(1) == &Tok::RBrace {
                let span = self.span();
                self.bump();
                self.bump();
                return match lhs {
                    Expr::Var(d) => Ok(Expr::IsEmpty(d)),
                    _ => Err(Diagnostics::single(
                        "`= {}` needs an array on the left",
                        span,
                    )),
                };
            }
            let rhs = self.primary()?;
            self.reject_arith()?;
            return Ok(Expr::Eq(Box::new(lhs), Box::new(rhs)));
        }
        if self.eat(&Tok::Ne) {
            if self.peek() == &Tok::LBrace && self.peek_at(1) == &Tok::RBrace {
                let span = self.span();
                self.bump();
                self.bump();
                return match lhs {
                    Expr::Var(d) => Ok(Expr::Not(Box::new(Expr::IsEmpty(d)))),
                    _ => Err(Diagnostics::single(
                        "`!= {}` needs an array on the left",
                        span,
                    )),
                };
            }
            let rhs = self.primary()?;
            self.reject_arith()?;
            return Ok(Expr::Ne(Box::new(lhs), Box::new(rhs)));
        }
        if self.peek() == &Tok::Lt {
            return self.error("ordering comparisons are not in subset");
        }
        Ok(lhs)
    }

    fn reject_arith(&self) -> PResult<()> {
        match self.peek() {
            Tok::Plus | Tok::Minus | Tok::Star => self.error("integer arithmetic is not in subset"),
            _ => Ok(()),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        self.reject_unsupported()?;
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Number(_) => self.error("integer literals are not in subset"),
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Bool(false))
                }
                "NULL" => {
                    self.bump();
                    Ok(Expr::Null)
                }
                "o" => {
                    self.bump();
                    Ok(Expr::Other)
                }
                "forall" | "exists" => {
                    self.bump();
                    let var = self.ident()?;
                    self.expect(&Tok::Colon)?;
                    let ty = self.type_name()?;
                    self.expect_kw("do")?;
                    let body = self.expr()?;
                    self.expect_kw("end")?;
                    let q = Quant {
                        var,
                        ty,
                        body: Box::new(body),
                    };
                    Ok(if s == "forall" {
                        Expr::Forall(q)
                    } else {
                        Expr::Exists(q)
                    })
                }
                _ => Ok(Expr::Var(self.designator()?)),
            },
            other => self.error(format!("expected expression, found {}", other.describe())),
        }
    }

    pub(crate) fn type_name(&mut self) -> PResult<String> {
        if self.eat_kw("boolean") {
            return Ok("boolean".to_string());
        }
        if let Tok::Number(_) = self.peek() {
            return self.error("integer subrange types are not in subset");
        }
        self.ident()
    }

    fn designator(&mut self) -> PResult<Designator> {
        let root = self.ident()?;
        let mut path = Vec::new();
        loop {
            if self.eat(&Tok::Dot) {
                path.push(Access::Field(self.ident()?));
            } else if self.eat(&Tok::LBracket) {
                let e = self.expr()?;
                self.expect(&Tok::RBracket)?;
                path.push(Access::Index(Box::new(e)));
            } else {
                break;
            }
        }
        Ok(Designator { root, path })
    }

    // ---- statements ----

    fn stmts(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if self.is_kw("end") || self.is_kw("else") || self.at_eof() {
                break;
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        self.reject_unsupported()?;
        if self.eat_kw("for") {
            let var = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.type_name()?;
            self.expect_kw("do")?;
            let body = self.stmts()?;
            self.expect_kw("end")?;
            return Ok(Stmt::For { var, ty, body });
        }
        if self.eat_kw("if") {
            let cond = self.expr()?;
            self.expect_kw("then")?;
            let then = self.stmts()?;
            let otherwise = if self.eat_kw("else") {
                self.stmts()?
            } else {
                Vec::new()
            };
            self.expect_kw("end")?;
            return Ok(Stmt::If {
                cond,
                then,
                otherwise,
            });
        }
        if self.eat_kw("undefine") {
            return Ok(Stmt::Undefine(self.designator()?));
        }
        let lhs = self.designator()?;
        self.expect(&Tok::Assign)?;
        if self.eat(&Tok::LBrace) {
            if self.eat(&Tok::RBrace) {
                return Ok(Stmt::SetLit(lhs, None));
            }
            let e = self.expr()?;
            self.expect(&Tok::RBrace)?;
            return Ok(Stmt::SetLit(lhs, Some(e)));
        }
        let rhs = self.expr()?;
        self.reject_arith()?;
        Ok(Stmt::Assign(lhs, rhs))
    }

    // ---- declarations ----

    fn params(&mut self) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        loop {
            let name = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.type_name()?;
            params.push(Param { name, ty });
            if !self.eat(&Tok::Semi) {
                break;
            }
        }
        Ok(params)
    }

    fn rule_items(&mut self, params: &[Param], def: &mut ProtocolDef) -> PResult<()> {
        loop {
            while self.eat(&Tok::Semi) {}
            if self.is_kw("rule") {
                let span = self.span();
                self.bump();
                let name = self.string()?;
                let guard = if self.peek() == &Tok::Fire {
                    Expr::Bool(true)
                } else {
                    self.expr()?
                };
                self.expect(&Tok::Fire)?;
                let body = self.stmts()?;
                let end = self.expect_kw("end")?;
                def.rules.push(Rule {
                    name,
                    params: params.to_vec(),
                    guard,
                    body,
                    span: span.join(end),
                });
            } else if self.is_kw("startstate") {
                let span = self.span();
                self.bump();
                let name = if let Tok::Str(_) = self.peek() {
                    self.string()?
                } else {
                    String::new()
                };
                let body = self.stmts()?;
                let end = self.expect_kw("end")?;
                def.startstates.push(StartState {
                    name,
                    params: params.to_vec(),
                    body,
                    span: span.join(end),
                });
            } else if self.is_kw("ruleset") {
                self.bump();
                let mut inner = params.to_vec();
                inner.extend(self.params()?);
                self.expect_kw("do")?;
                self.rule_items(&inner, def)?;
                self.expect_kw("end")?;
            } else {
                return Ok(());
            }
        }
    }

    fn protocol(&mut self) -> PResult<ProtocolDef> {
        let mut def = ProtocolDef::default();
        if self.at_eof() {
            return self.error("expected declaration");
        }
        while !self.at_eof() {
            self.reject_unsupported()?;
            if self.eat_kw("const") {
                while let Tok::Ident(s) = self.peek() {
                    if KEYWORDS.contains(&s.as_str()) {
                        break;
                    }
                    let span = self.span();
                    let name = self.ident()?;
                    self.expect(&Tok::Colon)?;
                    let value = self.number()?;
                    self.expect(&Tok::Semi)?;
                    def.consts.push(ConstDecl { name, value, span });
                }
            } else if self.eat_kw("type") {
                while let Tok::Ident(s) = self.peek() {
                    if KEYWORDS.contains(&s.as_str()) {
                        break;
                    }
                    let span = self.span();
                    let name = self.ident()?;
                    self.expect(&Tok::Colon)?;
                    let ty = self.type_expr()?;
                    self.expect(&Tok::Semi)?;
                    def.types.push(TypeDecl { name, ty, span });
                }
            } else if self.eat_kw("var") {
                while let Tok::Ident(s) = self.peek() {
                    if KEYWORDS.contains(&s.as_str()) {
                        break;
                    }
                    let span = self.span();
                    let name = self.ident()?;
                    self.expect(&Tok::Colon)?;
                    let ty = self.type_expr()?;
                    self.expect(&Tok::Semi)?;
                    def.vars.push(VarDecl { name, ty, span });
                }
            } else if self.is_kw("rule") || self.is_kw("startstate") || self.is_kw("ruleset") {
                self.rule_items(&[], &mut def)?;
            } else if self.is_kw("invariant") {
                let span = self.span();
                self.bump();
                let name = self.string()?;
                let expr = self.expr()?;
                def.invariants.push(InvariantDecl {
                    name,
                    expr,
                    span: span.join(self.prev_span()),
                });
            } else if self.eat(&Tok::Semi) {
            } else {
                return self.error(format!(
                    "expected declaration, found {}",
                    self.peek().describe()
                ));
            }
        }
        Ok(def)
    }
}

/// Parses protocol text without the static checks.
pub fn parse_protocol_syntax(src: &str) -> Result<ProtocolDef, Diagnostics> {
    let mut cur = Cursor::new(src)?;
    cur.protocol()
}

/// Parses and statically checks a protocol.
pub fn parse_protocol(src: &str) -> Result<ProtocolDef, Diagnostics> {
    let def = parse_protocol_syntax(src)?;
    check_protocol(&def)?;
    Ok(def)
}

/// Parses a standalone expression (used for CLI arguments).
pub fn parse_expr(src: &str) -> Result<Expr, Diagnostics> {
    let mut cur = Cursor::new(src)?;
    let e = cur.expr()?;
    if !cur.at_eof() {
        return cur.error(format!(
            "unexpected {} after expression",
            cur.peek().describe()
        ));
    }
    Ok(e)
}
