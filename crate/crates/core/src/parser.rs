//! Recursive-descent parser for the command language (language v1).
//!
//! Newline handling: a newline terminates a statement only where the
//! statement may legally end. Inside required positions (unclosed braces or
//! parentheses, after a binary operator, before a mandatory token) newlines
//! are skipped, so class bodies may span lines. The one optional suffix in
//! the grammar — `WHERE` — must start on the same line as its `SELECT`.
//!
//! Session mode additionally accepts `LET name = NEW ...` and resolves bare
//! identifiers in statement-head oid positions through the supplied binding
//! map; the core language (journal replay, `parse_statement`) accepts `#n`
//! forms only.

use std::collections::BTreeMap;

use crate::ast::{
    AttrDecl, BinOp, CtorDecl, Expr, Member, MethodDecl, Param, ProgressArgs, Projection,
    SessionStatement, Statement, UnOp,
};
use crate::error::{Error, Result};
use crate::token::{tokenize_raw, Kw, Punct, Token, TokenKind, MAX_INT_MAGNITUDE};
use crate::value::{Oid, TypeTag, Value};

/// Parse exactly one statement (an optional trailing `;` is allowed).
pub fn parse_statement(src: &str) -> Result<Statement> {
    parse_single(src, None)
}

/// Like [`parse_statement`], with session bindings for oid positions.
pub fn parse_statement_bound(src: &str, bindings: &BTreeMap<String, Oid>) -> Result<Statement> {
    parse_single(src, Some(bindings))
}

fn parse_single(src: &str, bindings: Option<&BTreeMap<String, Oid>>) -> Result<Statement> {
    let toks = tokenize_raw(src)?;
    let mut p = Parser::new(&toks, bindings);
    p.skip_separators();
    if p.peek().is_none() {
        return Err(p.err_here("expected statement"));
    }
    let stmt = p.statement()?;
    p.skip_newlines_only();
    if p.peek_raw_is_punct(Punct::Semi) {
        p.bump();
    }
    match p.peek() {
        None => Ok(stmt),
        Some(t) => Err(err_at(t, "unexpected input after statement")),
    }
}

/// Parse a whole script into an ordered statement sequence. Comments and
/// blank lines are skipped; parse errors carry the 1-based index of the
/// failing statement.
pub fn parse_script(src: &str) -> Result<Vec<Statement>> {
    let mut parser = ScriptParser::new(src)?;
    let mut out = Vec::new();
    while let Some(stmt) = parser.next_plain() {
        out.push(stmt?);
    }
    Ok(out)
}

/// Incremental script reader. The shell drives this one statement at a
/// time so that `LET` bindings established by earlier statements are
/// visible while later ones are parsed.
pub struct ScriptParser {
    toks: Vec<Token>,
    pos: usize,
    produced: usize,
}

impl ScriptParser {
    pub fn new(src: &str) -> Result<Self> {
        let toks = match tokenize_raw(src) {
            Ok(t) => t,
            Err(e) => {
                let idx = statement_index_of_lex_error(src, &e);
                return Err(e.at_statement(idx));
            }
        };
        Ok(ScriptParser {
            toks,
            pos: 0,
            produced: 0,
        })
    }

    /// 1-based index of the statement most recently returned.
    pub fn current_index(&self) -> usize {
        self.produced
    }

    pub fn next_plain(&mut self) -> Option<Result<Statement>> {
        match self.next_session(&BTreeMap::new(), false)? {
            Ok(SessionStatement::Plain(s)) => Some(Ok(s)),
            Ok(SessionStatement::Let { .. }) => unreachable!("session form disabled"),
            Err(e) => Some(Err(e)),
        }
    }

    /// Next statement in session mode; `bindings` resolves bare identifiers
    /// in oid positions. Pass `allow_let: false` to reject `LET`.
    pub fn next_session(
        &mut self,
        bindings: &BTreeMap<String, Oid>,
        allow_let: bool,
    ) -> Option<Result<SessionStatement>> {
        let binding_ctx = if allow_let { Some(bindings) } else { None };
        let mut p = Parser::new(&self.toks[self.pos..], binding_ctx);
        p.skip_separators();
        p.peek()?;
        self.produced += 1;
        let result = p
            .session_statement(allow_let)
            .and_then(|stmt| {
                // A statement ends only at a separator or end of input.
                match p.peek_raw() {
                    None => Ok(stmt),
                    Some(t) if t.kind == TokenKind::Newline => Ok(stmt),
                    Some(t) if t.is_punct(Punct::Semi) => Ok(stmt),
                    Some(t) => Err(err_at(t, "unexpected input after statement")),
                }
            })
            .map_err(|e| e.at_statement(self.produced));
        self.pos += p.pos;
        if result.is_err() {
            // Leave the cursor at end so iteration stops after an error.
            self.pos = self.toks.len();
        }
        Some(result)
    }
}

/// Statement index for a lexical error: count the complete statements in
/// the source prefix before the error position.
fn statement_index_of_lex_error(src: &str, err: &Error) -> usize {
    let Error::Parse { line, col, .. } = err else {
        return 1;
    };
    let mut offset = 0;
    let (mut l, mut c) = (1u32, 1u32);
    for ch in src.chars() {
        if l == *line && c == *col {
            break;
        }
        if ch == '\n' {
            l += 1;
            c = 1;
        } else {
            c += 1;
        }
        offset += ch.len_utf8();
    }
    let Ok(mut parser) = ScriptParser::new(&src[..offset]) else {
        return 1;
    };
    let mut complete = 0;
    while let Some(Ok(_)) = parser.next_plain() {
        complete += 1;
    }
    complete + 1
}

fn err_at(tok: &Token, msg: impl Into<String>) -> Error {
    Error::parse(tok.line, tok.col, msg)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    bindings: Option<&'a BTreeMap<String, Oid>>,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token], bindings: Option<&'a BTreeMap<String, Oid>>) -> Self {
        Parser {
            toks,
            pos: 0,
            bindings,
        }
    }

    // ---- cursor ------------------------------------------------------

    fn peek_raw(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_raw_is_punct(&self, p: Punct) -> bool {
        self.peek_raw().is_some_and(|t| t.is_punct(p))
    }

    /// Next significant token, looking through newlines without consuming.
    fn peek(&self) -> Option<&'a Token> {
        self.toks[self.pos..]
            .iter()
            .find(|t| t.kind != TokenKind::Newline)
    }

    fn peek_nth(&self, n: usize) -> Option<&'a Token> {
        self.toks[self.pos..]
            .iter()
            .filter(|t| t.kind != TokenKind::Newline)
            .nth(n)
    }

    /// Consume and return the next significant token.
    fn bump(&mut self) -> Option<&'a Token> {
        while let Some(t) = self.toks.get(self.pos) {
            self.pos += 1;
            if t.kind != TokenKind::Newline {
                return Some(t);
            }
        }
        None
    }

    fn skip_newlines_only(&mut self) {
        while self.peek_raw_is_newline() {
            self.pos += 1;
        }
    }

    fn peek_raw_is_newline(&self) -> bool {
        self.peek_raw().is_some_and(|t| t.kind == TokenKind::Newline)
    }

    fn skip_separators(&mut self) {
        while let Some(t) = self.peek_raw() {
            if t.kind == TokenKind::Newline || t.is_punct(Punct::Semi) {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Position for an "unexpected end of input" diagnostic: the start of
    /// the last token, which is always inside the source.
    fn err_here(&self, msg: impl Into<String>) -> Error {
        match self.peek().or_else(|| self.toks.last()) {
            Some(t) => Error::parse(t.line, t.col, msg),
            None => Error::parse(1, 1, msg),
        }
    }

    fn expect_punct(&mut self, p: Punct, what: &str) -> Result<&'a Token> {
        match self.peek() {
            Some(t) if t.is_punct(p) => Ok(self.bump().unwrap()),
            Some(t) => Err(err_at(t, format!("expected {what}, found `{}`", t.text))),
            None => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_kw(&mut self, k: Kw, what: &str) -> Result<&'a Token> {
        match self.peek() {
            Some(t) if t.is_kw(k) => Ok(self.bump().unwrap()),
            Some(t) => Err(err_at(t, format!("expected {what}, found `{}`", t.text))),
            None => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let name = t.text.clone();
                self.bump();
                Ok(name)
            }
            Some(t) => Err(err_at(t, format!("expected {what}, found `{}`", t.text))),
            None => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.peek().is_some_and(|t| t.is_punct(p)) {
            self.bump();
            true
        } else {
            false
        }
    }

    // ---- statements ---------------------------------------------------

    fn session_statement(&mut self, allow_let: bool) -> Result<SessionStatement> {
        if allow_let {
            if let Some(t) = self.peek() {
                if t.kind == TokenKind::Ident && t.text == "LET" {
                    self.bump();
                    let name = self.expect_ident("variable name after LET")?;
                    self.expect_punct(Punct::Eq, "`=`")?;
                    let pos = self.peek().map(|t| (t.line, t.col));
                    let stmt = self.statement()?;
                    if !matches!(stmt, Statement::New { .. }) {
                        let (line, col) = pos.unwrap_or((1, 1));
                        return Err(Error::parse(line, col, "LET binds the result of NEW only"));
                    }
                    return Ok(SessionStatement::Let { name, stmt });
                }
            }
        }
        self.statement().map(SessionStatement::Plain)
    }

    fn statement(&mut self) -> Result<Statement> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected statement"));
        };
        match t.kind {
            TokenKind::Kw(Kw::Create) => self.create_stmt(),
            TokenKind::Kw(Kw::Alter) => self.alter_stmt(),
            TokenKind::Kw(Kw::New) => self.new_stmt(),
            TokenKind::Kw(Kw::Progress) => self.progress_stmt(),
            TokenKind::Kw(Kw::Set) => self.set_stmt(),
            TokenKind::Kw(Kw::Call) => self.call_stmt(),
            TokenKind::Kw(Kw::Select) => self.select_stmt(),
            TokenKind::Kw(Kw::Destroy) => self.destroy_stmt(),
            _ => Err(err_at(t, format!("expected statement, found `{}`", t.text))),
        }
    }

    fn create_stmt(&mut self) -> Result<Statement> {
        self.bump(); // CREATE
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected CLASS or ROLE"));
        };
        match t.kind {
            TokenKind::Kw(Kw::Class) => {
                self.bump();
                let name = self.expect_ident("class name")?;
                let parent = if self.peek().is_some_and(|t| t.is_kw(Kw::Extends)) {
                    self.bump();
                    Some(self.expect_ident("parent class name")?)
                } else {
                    None
                };
                let members = self.member_block()?;
                Ok(Statement::CreateClass {
                    name,
                    parent,
                    members,
                })
            }
            TokenKind::Kw(Kw::Role) => {
                self.bump();
                let name = self.expect_ident("role name")?;
                self.expect_kw(Kw::For, "FOR")?;
                let base = self.expect_ident("base name")?;
                let members = self.member_block()?;
                Ok(Statement::CreateRole {
                    name,
                    base,
                    members,
                })
            }
            _ => Err(err_at(t, "expected CLASS or ROLE after CREATE")),
        }
    }

    fn alter_stmt(&mut self) -> Result<Statement> {
        self.bump(); // ALTER
        self.expect_kw(Kw::Class, "CLASS")?;
        let class = self.expect_ident("class name")?;
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected ADD or REPLACE"));
        };
        match t.kind {
            TokenKind::Kw(Kw::Add) => {
                self.bump();
                if self.peek().is_some_and(|t| t.is_kw(Kw::Method)) {
                    let method = self.method_decl()?;
                    Ok(Statement::AlterAddMethod { class, method })
                } else {
                    let attr = self.attr_decl()?;
                    Ok(Statement::AlterAddAttribute { class, attr })
                }
            }
            TokenKind::Kw(Kw::Replace) => {
                self.bump();
                if !self.peek().is_some_and(|t| t.is_kw(Kw::Method)) {
                    return Err(self.err_here("expected METHOD after REPLACE"));
                }
                let method = self.method_decl()?;
                Ok(Statement::AlterReplaceMethod { class, method })
            }
            _ => Err(err_at(t, "expected ADD or REPLACE")),
        }
    }

    fn member_block(&mut self) -> Result<Vec<Member>> {
        self.expect_punct(Punct::LBrace, "`{`")?;
        let mut members = Vec::new();
        loop {
            let Some(t) = self.peek() else {
                return Err(self.err_here("expected member declaration or `}`"));
            };
            match t.kind {
                TokenKind::Punct(Punct::RBrace) => {
                    self.bump();
                    return Ok(members);
                }
                TokenKind::Kw(Kw::Method) => members.push(Member::Method(self.method_decl()?)),
                TokenKind::Kw(Kw::Constructor) => members.push(Member::Ctor(self.ctor_decl()?)),
                TokenKind::Ident => members.push(Member::Attr(self.attr_decl()?)),
                _ => return Err(err_at(t, "expected member declaration or `}`")),
            }
        }
    }

    fn attr_decl(&mut self) -> Result<AttrDecl> {
        let name = self.expect_ident("attribute name")?;
        self.expect_punct(Punct::Colon, "`:`")?;
        let ty = self.type_ref()?;
        let default = if self.eat_punct(Punct::Eq) {
            Some(self.literal()?)
        } else {
            None
        };
        self.expect_punct(Punct::Semi, "`;`")?;
        Ok(AttrDecl { name, ty, default })
    }

    fn method_decl(&mut self) -> Result<MethodDecl> {
        self.bump(); // METHOD
        let name = self.expect_ident("method name")?;
        self.expect_punct(Punct::LParen, "`(`")?;
        let params = self.params()?;
        self.expect_punct(Punct::Colon, "`:`")?;
        let return_ty = self.type_ref()?;
        self.expect_punct(Punct::Eq, "`=`")?;
        let body = self.expr()?;
        self.expect_punct(Punct::Semi, "`;`")?;
        Ok(MethodDecl {
            name,
            params,
            return_ty,
            body,
        })
    }

    fn ctor_decl(&mut self) -> Result<CtorDecl> {
        self.bump(); // CONSTRUCTOR
        self.expect_punct(Punct::LParen, "`(`")?;
        let params = self.params()?;
        self.expect_punct(Punct::LBrace, "`{`")?;
        let mut assignments = Vec::new();
        loop {
            let Some(t) = self.peek() else {
                return Err(self.err_here("expected `attr := expr;` or `}`"));
            };
            match t.kind {
                TokenKind::Punct(Punct::RBrace) => {
                    self.bump();
                    return Ok(CtorDecl {
                        params,
                        assignments,
                    });
                }
                TokenKind::Ident => {
                    let attr = self.expect_ident("attribute name")?;
                    self.expect_punct(Punct::Assign, "`:=`")?;
                    let expr = self.expr()?;
                    self.expect_punct(Punct::Semi, "`;`")?;
                    assignments.push((attr, expr));
                }
                _ => return Err(err_at(t, "expected `attr := expr;` or `}`")),
            }
        }
    }

    /// Parameter list; the closing `)` is consumed.
    fn params(&mut self) -> Result<Vec<Param>> {
        let mut params = Vec::new();
        if self.eat_punct(Punct::RParen) {
            return Ok(params);
        }
        loop {
            let name = self.expect_ident("parameter name")?;
            self.expect_punct(Punct::Colon, "`:`")?;
            let ty = self.type_ref()?;
            params.push(Param { name, ty });
            if self.eat_punct(Punct::Comma) {
                continue;
            }
            self.expect_punct(Punct::RParen, "`)` or `,`")?;
            return Ok(params);
        }
    }

    fn type_ref(&mut self) -> Result<TypeTag> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected type"));
        };
        let tag = match t.kind {
            TokenKind::Kw(Kw::Int) => TypeTag::Int,
            TokenKind::Kw(Kw::Float) => TypeTag::Float,
            TokenKind::Kw(Kw::String) => TypeTag::Str,
            TokenKind::Kw(Kw::Bool) => TypeTag::Bool,
            TokenKind::Kw(Kw::Ref) => {
                self.bump();
                self.expect_punct(Punct::Lt, "`<`")?;
                let target = self.expect_ident("class name")?;
                self.expect_punct(Punct::Gt, "`>`")?;
                return Ok(TypeTag::Ref(target));
            }
            _ => return Err(err_at(t, format!("expected type, found `{}`", t.text))),
        };
        self.bump();
        Ok(tag)
    }

    fn literal(&mut self) -> Result<Value> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected literal"));
        };
        let v = match &t.kind {
            TokenKind::Int(mag) => {
                if *mag > i64::MAX as u64 {
                    return Err(err_at(t, "integer literal out of range"));
                }
                Value::Int(*mag as i64)
            }
            TokenKind::Float(x) => Value::Float(*x),
            TokenKind::Str(s) => Value::Str(s.clone()),
            TokenKind::Bool(b) => Value::Bool(*b),
            TokenKind::Kw(Kw::Null) => Value::Ref(None),
            _ => return Err(err_at(t, format!("expected literal, found `{}`", t.text))),
        };
        self.bump();
        Ok(v)
    }

    /// Statement-head oid slot: `#n`, or a bound identifier in session mode.
    fn oid_slot(&mut self) -> Result<Oid> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected object id"));
        };
        match &t.kind {
            TokenKind::OidLit(n) => {
                let oid = Oid(*n);
                self.bump();
                Ok(oid)
            }
            TokenKind::Ident if self.bindings.is_some() => {
                let name = t.text.clone();
                self.bump();
                match self.bindings.unwrap().get(&name) {
                    Some(oid) => Ok(*oid),
                    None => Err(Error::NameError(format!("unknown variable `{name}`"))),
                }
            }
            _ => Err(err_at(t, format!("expected object id, found `{}`", t.text))),
        }
    }

    fn new_stmt(&mut self) -> Result<Statement> {
        self.bump(); // NEW
        let mut oid = None;
        if let Some(t) = self.peek() {
            if let TokenKind::OidLit(n) = t.kind {
                self.bump();
                self.expect_punct(Punct::Eq, "`=`")?;
                oid = Some(Oid(n));
            }
        }
        let class = self.expect_ident("class name")?;
        self.expect_punct(Punct::LParen, "`(`")?;
        let inits = self.named_args()?;
        Ok(Statement::New { oid, class, inits })
    }

    fn progress_stmt(&mut self) -> Result<Statement> {
        self.bump(); // PROGRESS
        let oid = self.oid_slot()?;
        self.expect_kw(Kw::To, "TO")?;
        let target = self.expect_ident("target name")?;
        self.expect_punct(Punct::LParen, "`(`")?;
        let args = if self.peek().is_some_and(|t| t.is_punct(Punct::RParen)) {
            self.bump();
            ProgressArgs::Positional(Vec::new())
        } else {
            let named = self.peek().is_some_and(|t| t.kind == TokenKind::Ident)
                && self.peek_nth(1).is_some_and(|t| t.is_punct(Punct::Eq));
            if named {
                ProgressArgs::Named(self.named_args()?)
            } else {
                ProgressArgs::Positional(self.pos_args()?)
            }
        };
        Ok(Statement::Progress { oid, target, args })
    }

    /// `name = expr, ...` list; the closing `)` is consumed.
    fn named_args(&mut self) -> Result<Vec<(String, Expr)>> {
        let mut args = Vec::new();
        if self.eat_punct(Punct::RParen) {
            return Ok(args);
        }
        loop {
            let name = self.expect_ident("initializer name")?;
            self.expect_punct(Punct::Eq, "`=`")?;
            let expr = self.expr()?;
            args.push((name, expr));
            if self.eat_punct(Punct::Comma) {
                continue;
            }
            self.expect_punct(Punct::RParen, "`)` or `,`")?;
            return Ok(args);
        }
    }

    /// Positional expression list; the closing `)` is consumed.
    fn pos_args(&mut self) -> Result<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat_punct(Punct::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(Punct::Comma) {
                continue;
            }
            self.expect_punct(Punct::RParen, "`)` or `,`")?;
            return Ok(args);
        }
    }

    fn set_stmt(&mut self) -> Result<Statement> {
        self.bump(); // SET
        let oid = self.oid_slot()?;
        self.expect_punct(Punct::Dot, "`.`")?;
        let attr = self.expect_ident("attribute name")?;
        self.expect_punct(Punct::Eq, "`=`")?;
        let expr = self.expr()?;
        Ok(Statement::Set { oid, attr, expr })
    }

    fn call_stmt(&mut self) -> Result<Statement> {
        self.bump(); // CALL
        let oid = self.oid_slot()?;
        self.expect_punct(Punct::Dot, "`.`")?;
        let method = self.expect_ident("method name")?;
        self.expect_punct(Punct::LParen, "`(`")?;
        let args = self.pos_args()?;
        Ok(Statement::Call { oid, method, args })
    }

    fn select_stmt(&mut self) -> Result<Statement> {
        self.bump(); // SELECT
        let projection = if self.eat_punct(Punct::Star) {
            Projection::Star
        } else {
            let mut cols = vec![self.expect_ident("column name or `*`")?];
            while self.eat_punct(Punct::Comma) {
                cols.push(self.expect_ident("column name")?);
            }
            Projection::Columns(cols)
        };
        self.expect_kw(Kw::From, "FROM")?;
        let from = self.expect_ident("class or role name")?;
        // WHERE is the grammar's only optional statement suffix; it must
        // start on the same line, otherwise the statement ends here.
        let predicate = if self.peek_raw().is_some_and(|t| t.is_kw(Kw::Where)) {
            self.bump();
            Some(self.expr()?)
        } else {
            None
        };
        Ok(Statement::Select {
            projection,
            from,
            predicate,
        })
    }

    fn destroy_stmt(&mut self) -> Result<Statement> {
        self.bump(); // DESTROY
        let oid = self.oid_slot()?;
        Ok(Statement::Destroy { oid })
    }

    // ---- expressions ---------------------------------------------------

    fn expr(&mut self) -> Result<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.and_expr()?;
        while self.peek().is_some_and(|t| t.is_kw(Kw::Or)) {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.not_expr()?;
        while self.peek().is_some_and(|t| t.is_kw(Kw::And)) {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.peek().is_some_and(|t| t.is_kw(Kw::Not)) {
            self.bump();
            let operand = self.not_expr()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(operand)));
        }
        self.cmp_expr()
    }

    /// A single optional comparison: `a < b < c` is not grammatical.
    fn cmp_expr(&mut self) -> Result<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Punct(Punct::EqEq)) => BinOp::Eq,
            Some(TokenKind::Punct(Punct::Ne)) => BinOp::Ne,
            Some(TokenKind::Punct(Punct::Lt)) => BinOp::Lt,
            Some(TokenKind::Punct(Punct::Le)) => BinOp::Le,
            Some(TokenKind::Punct(Punct::Gt)) => BinOp::Gt,
            Some(TokenKind::Punct(Punct::Ge)) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Punct(Punct::Plus)) => BinOp::Add,
                Some(TokenKind::Punct(Punct::Minus)) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Punct(Punct::Star)) => BinOp::Mul,
                Some(TokenKind::Punct(Punct::Slash)) => BinOp::Div,
                Some(TokenKind::Punct(Punct::Percent)) => BinOp::Rem,
                _ => break,
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr> {
        if !self.peek().is_some_and(|t| t.is_punct(Punct::Minus)) {
            return self.postfix_expr();
        }
        self.bump();
        // Fold the sign into a directly following numeric literal so that
        // canonical forms like `-5` (and i64::MIN) parse back to literals.
        if let Some(t) = self.peek() {
            match t.kind {
                TokenKind::Int(mag) => {
                    debug_assert!(mag <= MAX_INT_MAGNITUDE);
                    self.bump();
                    return Ok(Expr::Literal(Value::Int((-(mag as i128)) as i64)));
                }
                TokenKind::Float(x) => {
                    self.bump();
                    return Ok(Expr::Literal(Value::Float(-x)));
                }
                _ => {}
            }
        }
        let operand = self.unary_expr()?;
        Ok(Expr::Unary(UnOp::Neg, Box::new(operand)))
    }

    fn postfix_expr(&mut self) -> Result<Expr> {
        let mut base = self.primary_expr()?;
        while self.peek().is_some_and(|t| t.is_punct(Punct::Dot)) {
            let dot = self.bump().unwrap();
            if matches!(base, Expr::Literal(_)) {
                return Err(err_at(dot, "cannot navigate from a literal"));
            }
            let attr = self.expect_ident("attribute name")?;
            base = Expr::Navigate(Box::new(base), attr);
        }
        Ok(base)
    }

    fn primary_expr(&mut self) -> Result<Expr> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected expression"));
        };
        let expr = match &t.kind {
            TokenKind::Int(mag) => {
                if *mag > i64::MAX as u64 {
                    return Err(err_at(t, "integer literal out of range"));
                }
                Expr::Literal(Value::Int(*mag as i64))
            }
            TokenKind::Float(x) => Expr::Literal(Value::Float(*x)),
            TokenKind::Str(s) => Expr::Literal(Value::Str(s.clone())),
            TokenKind::Bool(b) => Expr::Literal(Value::Bool(*b)),
            TokenKind::Kw(Kw::Null) => Expr::Literal(Value::Ref(None)),
            TokenKind::Kw(Kw::This) => Expr::This,
            TokenKind::OidLit(n) => Expr::OidLit(Oid(*n)),
            TokenKind::Ident => Expr::Name(t.text.clone()),
            TokenKind::Punct(Punct::LParen) => {
                self.bump();
                let inner = self.expr()?;
                self.expect_punct(Punct::RParen, "`)`")?;
                return Ok(inner);
            }
            _ => return Err(err_at(t, format!("expected expression, found `{}`", t.text))),
        };
        self.bump();
        Ok(expr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::canonicalize;

    #[test]
    fn role_with_empty_body() {
        let s = parse_statement("CREATE ROLE Top FOR Manager { }").unwrap();
        assert_eq!(
            s,
            Statement::CreateRole {
                name: "Top".into(),
                base: "Manager".into(),
                members: vec![],
            }
        );
        // Both brace spellings parse.
        assert_eq!(parse_statement("CREATE ROLE Top FOR Manager {}").unwrap(), s);
    }

    #[test]
    fn set_statement_direct_mapping() {
        let s = parse_statement("SET #2.salary = 10").unwrap();
        assert_eq!(
            s,
            Statement::Set {
                oid: Oid(2),
                attr: "salary".into(),
                expr: Expr::Literal(Value::Int(10)),
            }
        );
    }

    #[test]
    fn malformed_progress_is_a_parse_error() {
        assert!(matches!(
            parse_statement("PROGRESS TO"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn progress_named_vs_positional() {
        let s = parse_statement("PROGRESS #1 TO Manager(10)").unwrap();
        let Statement::Progress { args, .. } = &s else {
            panic!()
        };
        assert_eq!(
            args,
            &ProgressArgs::Positional(vec![Expr::Literal(Value::Int(10))])
        );
        let s = parse_statement("PROGRESS #1 TO Manager(bonus = 10)").unwrap();
        let Statement::Progress { args, .. } = &s else {
            panic!()
        };
        assert_eq!(
            args,
            &ProgressArgs::Named(vec![("bonus".into(), Expr::Literal(Value::Int(10)))])
        );
        // `x == 1` is an expression, not a named initializer.
        let s = parse_statement("PROGRESS #1 TO Manager(x == 1)").unwrap();
        let Statement::Progress {
            args: ProgressArgs::Positional(args),
            ..
        } = &s
        else {
            panic!()
        };
        assert_eq!(args.len(), 1);
    }

    #[test]
    fn class_body_spans_lines() {
        let src = "CREATE CLASS Employee\n{\n  name: STRING;\n  salary: INT = 0;\n  METHOD title(): STRING = \"Employee\";\n}";
        let s = parse_statement(src).unwrap();
        assert_eq!(
            canonicalize(&s),
            "CREATE CLASS Employee { name: STRING; salary: INT = 0; METHOD title(): STRING = \"Employee\"; }"
        );
    }

    #[test]
    fn script_splits_on_newlines_and_semicolons() {
        let stmts = parse_script("NEW A(); NEW B()\nNEW C()\n\n-- comment\nDESTROY #1").unwrap();
        assert_eq!(stmts.len(), 4);
        assert!(parse_script("-- only comments\n  -- more\n").unwrap().is_empty());
    }

    #[test]
    fn where_must_share_the_select_line() {
        let stmts = parse_script("SELECT * FROM Employee WHERE salary > 5").unwrap();
        assert_eq!(stmts.len(), 1);
        let err = parse_script("SELECT * FROM Employee\nWHERE salary > 5").unwrap_err();
        let Error::Parse { statement, .. } = err else {
            panic!()
        };
        assert_eq!(statement, Some(2));
    }

    #[test]
    fn script_error_carries_statement_index() {
        let err = parse_script("NEW A()\nNEW B()\nPROGRESS TO\n").unwrap_err();
        let Error::Parse { statement, .. } = err else {
            panic!()
        };
        assert_eq!(statement, Some(3));
        // Lexical errors get an index too.
        let err = parse_script("NEW A()\nSET #1.x = \"oops\n").unwrap_err();
        let Error::Parse { statement, .. } = err else {
            panic!()
        };
        assert_eq!(statement, Some(2));
    }

    #[test]
    fn negative_literals_fold() {
        let s = parse_statement("SET #1.x = -5").unwrap();
        let Statement::Set { expr, .. } = s else { panic!() };
        assert_eq!(expr, Expr::Literal(Value::Int(-5)));
        let s = parse_statement("SET #1.x = -9223372036854775808").unwrap();
        let Statement::Set { expr, .. } = s else { panic!() };
        assert_eq!(expr, Expr::Literal(Value::Int(i64::MIN)));
        // Unfolded, the same magnitude is out of range.
        assert!(parse_statement("SET #1.x = 9223372036854775808").is_err());
        // `- -5` is a negation of a negative literal, not a comment.
        let s = parse_statement("SET #1.x = - -5").unwrap();
        let Statement::Set { expr, .. } = s else { panic!() };
        assert_eq!(
            expr,
            Expr::Unary(UnOp::Neg, Box::new(Expr::Literal(Value::Int(-5))))
        );
    }

    #[test]
    fn literal_navigation_rejected() {
        assert!(parse_statement("SET #1.x = 1 .y").is_err());
        assert!(parse_statement("SET #1.x = (true).y").is_err());
        assert!(parse_statement("SET #1.x = \"s\".y").is_err());
        let ok = parse_statement("SET #1.x = #2.y").unwrap();
        let Statement::Set { expr, .. } = ok else { panic!() };
        assert_eq!(expr, Expr::Navigate(Box::new(Expr::OidLit(Oid(2))), "y".into()));
    }

    #[test]
    fn session_bindings_resolve_in_oid_positions() {
        let mut bindings = BTreeMap::new();
        bindings.insert("someEmployee".to_string(), Oid(1));
        let s = parse_statement_bound("PROGRESS someEmployee TO Manager(10)", &bindings).unwrap();
        let Statement::Progress { oid, .. } = s else { panic!() };
        assert_eq!(oid, Oid(1));
        let err = parse_statement_bound("DESTROY nobody", &bindings).unwrap_err();
        assert!(matches!(err, Error::NameError(_)));
        // Without bindings a bare identifier is a parse error.
        assert!(matches!(
            parse_statement("DESTROY nobody"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn let_binds_new_only() {
        let mut parser = ScriptParser::new("LET x = NEW Employee(name = \"Ann\")").unwrap();
        let stmt = parser.next_session(&BTreeMap::new(), true).unwrap().unwrap();
        let SessionStatement::Let { name, stmt } = stmt else {
            panic!()
        };
        assert_eq!(name, "x");
        assert!(matches!(stmt, Statement::New { .. }));

        let mut parser = ScriptParser::new("LET x = DESTROY #1").unwrap();
        assert!(parser.next_session(&BTreeMap::new(), true).unwrap().is_err());
        // Plain mode rejects LET outright.
        assert!(parse_statement("LET x = NEW Employee()").is_err());
    }

    #[test]
    fn trailing_semicolon_optional_in_single_statement_mode() {
        assert!(parse_statement("DESTROY #1;").is_ok());
        assert!(parse_statement("DESTROY #1; DESTROY #2").is_err());
    }

    #[test]
    fn explicit_oid_new_form() {
        let s = parse_statement("NEW #3 = Employee(name = \"Ann\")").unwrap();
        assert_eq!(
            s,
            Statement::New {
                oid: Some(Oid(3)),
                class: "Employee".into(),
                inits: vec![("name".into(), Expr::Literal(Value::Str("Ann".into())))],
            }
        );
    }

    #[test]
    fn round_trip_fixed_statements() {
        let sources = [
            "CREATE CLASS Employee { name: STRING; salary: INT = 0; METHOD title(): STRING = \"Employee\"; }",
            "CREATE CLASS Manager EXTENDS Employee { bonus: INT = 0; CONSTRUCTOR(b: INT) { bonus := b; salary := salary + b; } }",
            "CREATE ROLE Mentor FOR Employee { mentee: REF<Employee> = NULL; }",
            "ALTER CLASS Employee ADD email: STRING = \"\";",
            "ALTER CLASS Employee ADD METHOD pay(raise: INT): INT = salary + raise;",
            "ALTER CLASS Employee REPLACE METHOD title(): STRING = \"Staff\";",
            "NEW #3 = Employee(name = \"Ann\")",
            "NEW Employee()",
            "PROGRESS #1 TO Manager(10, 2.5)",
            "PROGRESS #1 TO Top()",
            "PROGRESS #1 TO Mentor(mentee = NULL)",
            "SET #1.salary = salary * 2 + this.bonus % 3",
            "SET #1.flag = NOT (a OR b) AND c == 1",
            "CALL #1.title()",
            "CALL #2.pay(5, boss.name)",
            "SELECT * FROM Employee",
            "SELECT oid FROM Manager",
            "SELECT name, salary FROM Employee WHERE salary > 5 AND NOT name == \"Bo\"",
            "DESTROY #4",
        ];
        for src in sources {
            let parsed = parse_statement(src).unwrap();
            let canonical = canonicalize(&parsed);
            assert_eq!(canonical, src, "canonical form differs");
            assert_eq!(parse_statement(&canonical).unwrap(), parsed);
        }
    }
}
