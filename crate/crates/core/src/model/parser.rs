//! Recursive-descent parsers for the descriptor document and the algorithm
//! statement language. See `fixtures/GRAMMAR.md` for the document grammar.

use super::ast::{BinaryOp, Expr, Stmt, UnaryOp};
use super::diag::{Diagnostic, DiagnosticKind, Diagnostics, Pos, Span};
use super::lexer::{tokenize, Tok, Token};
use super::system::*;
use super::value::{Value, ValueType};

type PResult<T> = Result<T, Diagnostic>;

const KEYWORDS: &[&str] = &[
    "AND", "OR", "NOT", "MOD", "TRUE", "FALSE", "SEL", "IF", "THEN", "ELSE", "ELSIF", "END_IF",
];

pub fn is_keyword(name: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(name))
}

struct Parser {
    toks: Vec<Token>,
    idx: usize,
    /// Newlines separate descriptor lines; statements ignore them.
    lines: bool,
}

impl Parser {
    fn new(toks: Vec<Token>, lines: bool) -> Self {
        Parser { toks, idx: 0, lines }
    }

    fn skip_ignored(&mut self) {
        if !self.lines {
            while self.toks[self.idx].tok == Tok::Newline {
                self.idx += 1;
            }
        }
    }

    fn peek(&mut self) -> &Token {
        self.skip_ignored();
        &self.toks[self.idx]
    }

    fn peek_tok(&mut self) -> Tok {
        self.peek().tok.clone()
    }

    fn pos(&mut self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        self.skip_ignored();
        let t = self.toks[self.idx].clone();
        if t.tok != Tok::Eof {
            self.idx += 1;
        }
        t
    }

    fn err<T>(&mut self, msg: impl Into<String>) -> PResult<T> {
        let p = self.pos();
        Err(Diagnostic::new(DiagnosticKind::Syntax, p, msg))
    }

    fn expect(&mut self, want: Tok) -> PResult<Token> {
        let t = self.peek().clone();
        if t.tok == want {
            Ok(self.bump())
        } else {
            Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected {want}, found {}", t.tok),
            ))
        }
    }

    fn at_kw(&mut self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Pos> {
        let t = self.peek().clone();
        if self.eat_kw(kw) {
            Ok(t.pos)
        } else {
            Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected `{kw}`, found {}", t.tok),
            ))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok((s, t.pos))
            }
            other => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected identifier, found {other}"),
            )),
        }
    }

    // ---- expressions ----------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&mut self) -> Option<BinaryOp> {
        let op = match &self.peek().tok {
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Percent => BinaryOp::Mod,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::Eq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            Tok::Ident(s) if s.eq_ignore_ascii_case("AND") => BinaryOp::And,
            Tok::Ident(s) if s.eq_ignore_ascii_case("OR") => BinaryOp::Or,
            Tok::Ident(s) if s.eq_ignore_ascii_case("MOD") => BinaryOp::Mod,
            _ => return None,
        };
        Some(op)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek().tok == Tok::Minus {
            let pos = self.bump().pos;
            if let Tok::Int(_) | Tok::Real(_) = self.peek_tok() {
                let t = self.bump();
                return number(&t.tok, true, pos).map(Expr::Lit);
            }
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_kw("NOT") {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(_) | Tok::Real(_) => {
                self.bump();
                number(&t.tok, false, t.pos).map(Expr::Lit)
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Lit(Value::Str(s.clone())))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => {
                self.bump();
                Ok(Expr::Lit(Value::Bool(true)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => {
                self.bump();
                Ok(Expr::Lit(Value::Bool(false)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("SEL") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let c = self.expr()?;
                self.expect(Tok::Comma)?;
                let if_false = self.expr()?;
                self.expect(Tok::Comma)?;
                let if_true = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::Cond(Box::new(c), Box::new(if_true), Box::new(if_false)))
            }
            Tok::Ident(s) if !is_keyword(s) => {
                self.bump();
                Ok(Expr::Var(s.clone()))
            }
            other => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected expression, found {other}"),
            )),
        }
    }

    // ---- statements -----------------------------------------------------

    /// Parses statements until one of the terminator keywords (not consumed)
    /// or end of input.
    fn statements(&mut self, terminators: &[&str]) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            if self.peek().tok == Tok::Eof || terminators.iter().any(|k| self.at_kw(k)) {
                return Ok(out);
            }
            out.push(self.statement()?);
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.eat_kw("IF") {
            return self.if_rest();
        }
        let (target, _) = self.ident()?;
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(Stmt::Assign { target, value })
    }

    /// After `IF` or `ELSIF`.
    fn if_rest(&mut self) -> PResult<Stmt> {
        let cond = self.expr()?;
        self.expect_kw("THEN")?;
        let then_branch = self.statements(&["ELSIF", "ELSE", "END_IF"])?;
        let else_branch = if self.eat_kw("ELSIF") {
            // ELSIF closes with the same END_IF; desugars to a nested IF.
            return Ok(Stmt::If { cond, then_branch, else_branch: vec![self.if_rest()?] });
        } else if self.eat_kw("ELSE") {
            self.statements(&["END_IF"])?
        } else {
            Vec::new()
        };
        self.expect_kw("END_IF")?;
        self.expect(Tok::Semi)?;
        Ok(Stmt::If { cond, then_branch, else_branch })
    }

    // ---- descriptor -----------------------------------------------------

    fn end_line(&mut self) -> PResult<()> {
        match self.peek().tok {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            ref other => {
                let msg = format!("expected end of line, found {other}");
                self.err(msg)
            }
        }
    }

    fn skip_blank(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.bump();
        }
    }

    fn recover_line(&mut self) {
        loop {
            match self.peek().tok {
                Tok::Newline => {
                    self.bump();
                    return;
                }
                Tok::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn literal(&mut self) -> PResult<Value> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Minus => {
                self.bump();
                let n = self.bump();
                number(&n.tok, true, t.pos)
            }
            Tok::Int(_) | Tok::Real(_) => {
                self.bump();
                number(&t.tok, false, t.pos)
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Value::Str(s.clone()))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => {
                self.bump();
                Ok(Value::Bool(true))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => {
                self.bump();
                Ok(Value::Bool(false))
            }
            other => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected literal, found {other}"),
            )),
        }
    }

    fn value_type(&mut self) -> PResult<ValueType> {
        let (name, pos) = self.ident()?;
        ValueType::from_keyword(&name).ok_or_else(|| {
            Diagnostic::new(DiagnosticKind::UnknownType, pos, format!("unknown value type `{name}`"))
        })
    }

    fn endpoint(&mut self) -> PResult<Endpoint> {
        let (instance, _) = self.ident()?;
        self.expect(Tok::Dot)?;
        let (port, _) = self.ident()?;
        Ok(Endpoint { instance, port })
    }

    fn conn_kind(&mut self) -> PResult<ConnKind> {
        if self.eat_kw("event") {
            Ok(ConnKind::Event)
        } else if self.eat_kw("data") {
            Ok(ConnKind::Data)
        } else {
            self.err("expected `event` or `data`")
        }
    }

    fn document(&mut self, diags: &mut Vec<Diagnostic>) -> SystemDescriptor {
        let mut sys = SystemDescriptor::default();
        loop {
            self.skip_blank();
            if self.peek().tok == Tok::Eof {
                break;
            }
            let res = if self.at_kw("fbtype") {
                self.fbtype(diags).map(|t| sys.fb_types.push(t))
            } else if self.at_kw("device") {
                self.device().map(|d| sys.devices.push(d))
            } else if self.at_kw("subapp") {
                self.subapp(diags).map(|s| sys.subapps.push(s))
            } else if self.at_kw("connect") {
                self.connection().map(|c| match c.kind {
                    ConnKind::Event => sys.event_connections.push(c),
                    ConnKind::Data => sys.data_connections.push(c),
                })
            } else if self.at_kw("dp") {
                self.dp().map(|d| sys.diagnostic_points.push(d))
            } else {
                let t = self.peek().clone();
                Err(Diagnostic::new(
                    DiagnosticKind::Syntax,
                    t.pos,
                    format!("expected a section keyword (fbtype, device, subapp, connect, dp), found {}", t.tok),
                ))
            };
            if let Err(d) = res {
                diags.push(d);
                self.recover_line();
            }
        }
        sys
    }

    fn device(&mut self) -> PResult<DeviceDecl> {
        let pos = self.expect_kw("device")?;
        let (name, _) = self.ident()?;
        self.end_line()?;
        Ok(DeviceDecl { name, span: pos.into() })
    }

    fn connection(&mut self) -> PResult<Connection> {
        let pos = self.expect_kw("connect")?;
        let kind = self.conn_kind()?;
        let from = self.endpoint()?;
        self.expect(Tok::Arrow)?;
        let to = self.endpoint()?;
        self.end_line()?;
        Ok(Connection { kind, from, to, span: pos.into() })
    }

    fn dp(&mut self) -> PResult<DiagnosticPointDecl> {
        let pos = self.expect_kw("dp")?;
        let id = self.unsigned()?;
        self.expect_kw("pathway")?;
        let (pathway, _) = self.ident()?;
        let role = if self.eat_kw("mainline") {
            DpRole::Mainline
        } else if self.eat_kw("branch") {
            DpRole::Branch
        } else {
            return self.err("expected `mainline` or `branch`");
        };
        let order = if self.eat_kw("order") { self.unsigned()? } else { id };
        self.expect_kw("on")?;
        let kind = self.conn_kind()?;
        let from = self.endpoint()?;
        self.expect(Tok::Arrow)?;
        let to = self.endpoint()?;
        self.end_line()?;
        Ok(DiagnosticPointDecl { id, pathway, role, order, kind, from, to, span: pos.into() })
    }

    fn unsigned(&mut self) -> PResult<u32> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(s) => {
                self.bump();
                s.parse().map_err(|_| {
                    Diagnostic::new(DiagnosticKind::BadValue, t.pos, format!("`{s}` is out of range"))
                })
            }
            other => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                t.pos,
                format!("expected unsigned integer, found {other}"),
            )),
        }
    }

    fn subapp(&mut self, diags: &mut Vec<Diagnostic>) -> PResult<SubAppDecl> {
        let pos = self.expect_kw("subapp")?;
        let (name, _) = self.ident()?;
        self.expect_kw("on")?;
        let (device, _) = self.ident()?;
        self.end_line()?;
        let mut instances = Vec::new();
        loop {
            self.skip_blank();
            if self.eat_kw("end_subapp") {
                self.end_line()?;
                break;
            }
            if self.peek().tok == Tok::Eof {
                return self.err("missing `end_subapp`");
            }
            match self.instance() {
                Ok(i) => instances.push(i),
                Err(d) => {
                    diags.push(d);
                    self.recover_line();
                }
            }
        }
        Ok(SubAppDecl { name, device, instances, span: pos.into() })
    }

    fn instance(&mut self) -> PResult<InstanceDecl> {
        let pos = self.expect_kw("instance")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::Colon)?;
        let (type_name, _) = self.ident()?;
        let mut params = Vec::new();
        if self.peek().tok == Tok::LParen {
            self.bump();
            loop {
                let (p, _) = self.ident()?;
                self.expect(Tok::Assign)?;
                params.push((p, self.literal()?));
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
        }
        self.end_line()?;
        Ok(InstanceDecl { name, type_name, params, span: pos.into() })
    }

    fn fbtype(&mut self, diags: &mut Vec<Diagnostic>) -> PResult<FbTypeDecl> {
        let pos = self.expect_kw("fbtype")?;
        let (name, _) = self.ident()?;
        let service = if self.eat_kw("basic") {
            None
        } else if self.eat_kw("service") {
            self.expect_kw("builtin")?;
            Some(self.ident()?.0)
        } else {
            return self.err("expected `basic` or `service`");
        };
        self.end_line()?;

        let mut interface = Vec::new();
        let mut vars = Vec::new();
        let mut algorithms = Vec::new();
        let mut ecc = Ecc::default();
        loop {
            self.skip_blank();
            if self.eat_kw("end_fbtype") {
                self.end_line()?;
                break;
            }
            if self.peek().tok == Tok::Eof {
                return self.err("missing `end_fbtype`");
            }
            let res = self.type_member(&mut interface, &mut vars, &mut algorithms, &mut ecc);
            if let Err(d) = res {
                diags.push(d);
                self.recover_line();
            }
        }
        let body = match service {
            Some(binding) => {
                if !algorithms.is_empty() || !ecc.states.is_empty() {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::BadEcc,
                        pos,
                        format!("service type `{name}` cannot declare states or algorithms"),
                    ));
                }
                FbBody::Service { binding }
            }
            None => FbBody::Basic { ecc, algorithms },
        };
        Ok(FbTypeDecl { name, interface, vars, body, span: pos.into() })
    }

    fn type_member(
        &mut self,
        interface: &mut Vec<PortDecl>,
        vars: &mut Vec<VarDecl>,
        algorithms: &mut Vec<AlgorithmDecl>,
        ecc: &mut Ecc,
    ) -> PResult<()> {
        let pos = self.pos();
        let span: Span = pos.into();
        if self.eat_kw("event") {
            let direction = self.direction()?;
            let (name, _) = self.ident()?;
            let mut with = Vec::new();
            if self.eat_kw("with") {
                loop {
                    with.push(self.ident()?.0);
                    if self.peek().tok == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.end_line()?;
            interface.push(PortDecl { name, direction, kind: PortKind::Event { with }, span });
        } else if self.eat_kw("data") {
            let direction = self.direction()?;
            let (name, _) = self.ident()?;
            let ty = self.value_type()?;
            let initial = self.initial(ty)?;
            self.end_line()?;
            interface.push(PortDecl { name, direction, kind: PortKind::Data { ty, initial }, span });
        } else if self.eat_kw("var") {
            let (name, _) = self.ident()?;
            let ty = self.value_type()?;
            let initial = self.initial(ty)?;
            self.end_line()?;
            vars.push(VarDecl { name, ty, initial, span });
        } else if self.eat_kw("algorithm") {
            let (name, _) = self.ident()?;
            if self.eat_kw("builtin") {
                let (host, _) = self.ident()?;
                self.end_line()?;
                algorithms.push(AlgorithmDecl { name, body: AlgorithmBody::Builtin(host), span });
            } else {
                self.end_line()?;
                self.lines = false;
                let body = self.statements(&["end_algorithm"]);
                self.lines = true;
                let body = body?;
                self.expect_kw("end_algorithm")?;
                self.end_line()?;
                algorithms.push(AlgorithmDecl { name, body: AlgorithmBody::Statements(body), span });
            }
        } else if self.eat_kw("state") {
            let (name, _) = self.ident()?;
            self.end_line()?;
            ecc.states.push(EcState { name, actions: Vec::new(), span });
        } else if self.eat_kw("action") {
            let algorithm = match self.peek_tok() {
                Tok::Ident(_) => Some(self.ident()?.0),
                _ => None,
            };
            let output = if self.peek().tok == Tok::Arrow {
                self.bump();
                Some(self.ident()?.0)
            } else {
                None
            };
            if algorithm.is_none() && output.is_none() {
                return self.err("empty action");
            }
            self.end_line()?;
            match ecc.states.last_mut() {
                Some(st) => st.actions.push(EcAction { algorithm, output }),
                None => {
                    return Err(Diagnostic::new(DiagnosticKind::BadEcc, pos, "action before any state"))
                }
            }
        } else if self.eat_kw("transition") {
            let (source, _) = self.ident()?;
            self.expect(Tok::Arrow)?;
            let (target, _) = self.ident()?;
            let trigger = if self.eat_kw("on") { Some(self.ident()?.0) } else { None };
            let guard = if self.eat_kw("when") { self.expr()? } else { Expr::Lit(Value::Bool(true)) };
            self.end_line()?;
            ecc.transitions.push(EcTransition { source, target, trigger, guard, span });
        } else {
            let t = self.peek().tok.clone();
            return self.err(format!("unexpected {t} in fbtype body"));
        }
        Ok(())
    }

    fn direction(&mut self) -> PResult<Direction> {
        if self.eat_kw("in") {
            Ok(Direction::In)
        } else if self.eat_kw("out") {
            Ok(Direction::Out)
        } else {
            self.err("expected `in` or `out`")
        }
    }

    fn initial(&mut self, ty: ValueType) -> PResult<Value> {
        if self.peek().tok != Tok::Eq {
            return Ok(ty.default_value());
        }
        self.bump();
        let pos = self.pos();
        let v = self.literal()?;
        let vt = v.value_type();
        v.coerce(ty).ok_or_else(|| {
            Diagnostic::new(
                DiagnosticKind::TypeMismatch,
                pos,
                format!("initial value of type {vt} does not fit {ty}"),
            )
        })
    }
}

fn number(tok: &Tok, negative: bool, pos: Pos) -> PResult<Value> {
    let sign = if negative { "-" } else { "" };
    match tok {
        Tok::Int(s) => format!("{sign}{s}").parse::<i64>().map(Value::Int).map_err(|_| {
            Diagnostic::new(DiagnosticKind::BadValue, pos, format!("integer `{sign}{s}` out of range"))
        }),
        Tok::Real(s) => {
            let x: f64 = format!("{sign}{s}").parse().map_err(|_| {
                Diagnostic::new(DiagnosticKind::BadValue, pos, format!("bad real `{s}`"))
            })?;
            if x.is_finite() {
                Ok(Value::Real(x))
            } else {
                Err(Diagnostic::new(DiagnosticKind::BadValue, pos, format!("real `{s}` is not finite")))
            }
        }
        other => Err(Diagnostic::new(
            DiagnosticKind::Syntax,
            pos,
            format!("expected number, found {other}"),
        )),
    }
}

/// Parses statement source into a statement list. Identifiers are resolved
/// later, during validation.
pub fn parse_algorithm(src: &str) -> Result<Vec<Stmt>, Diagnostic> {
    let mut p = Parser::new(tokenize(src)?, false);
    let stmts = p.statements(&[])?;
    p.expect(Tok::Eof)?;
    Ok(stmts)
}

pub fn parse_expression(src: &str) -> Result<Expr, Diagnostic> {
    let mut p = Parser::new(tokenize(src)?, false);
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

/// Parses a descriptor document without semantic checks.
pub fn parse_document(src: &str) -> Result<SystemDescriptor, Diagnostics> {
    let toks = tokenize(src).map_err(|d| Diagnostics(vec![d]))?;
    let mut p = Parser::new(toks, true);
    let mut diags = Vec::new();
    let sys = p.document(&mut diags);
    if diags.is_empty() {
        Ok(sys)
    } else {
        Err(Diagnostics(diags))
    }
}

/// Parses and validates a descriptor document.
pub fn parse_system(src: &str) -> Result<SystemDescriptor, Diagnostics> {
    let sys = parse_document(src)?;
    let diags = super::validate::validate(&sys);
    if diags.is_empty() {
        Ok(sys)
    } else {
        Err(Diagnostics(diags))
    }
}
