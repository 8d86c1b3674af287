//! Recursive-descent parser for textual LLBC (`.llbc` files).
//!
//! Conditions and scrutinees follow the operand discipline: every use of a
//! variable is an explicit `move`/`copy`/borrow, locals are declared in a
//! `let` block at the top of the body, and the return variable is named in
//! the signature.

use std::fmt;

use crate::ast::*;
use crate::lexer::{lex, LexError, Lexed, Tok};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, found {}", self.pos, self.expected.join(" or "), self.found)
    }
}

impl std::error::Error for ParseError {}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError { pos: e.pos, expected: vec!["token".into()], found: e.message }
    }
}

pub fn parse_program(src: &str) -> Result<LlbcProgram, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0 };
    p.program()
}

struct Parser {
    toks: Vec<Lexed>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(&[what])
        }
    }

    fn eat(&mut self, t: Tok) -> bool {
        if *self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn kw(&mut self, word: &str) -> bool {
        if let Tok::Ident(s) = self.peek() {
            if s == word {
                self.bump();
                return true;
            }
        }
        false
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.err(&[what]),
        }
    }

    fn program(&mut self) -> Result<LlbcProgram, ParseError> {
        let mut prog = LlbcProgram::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(prog),
                Tok::Ident(s) if s == "enum" => {
                    prog.type_decls.push(self.type_decl()?);
                }
                Tok::Ident(s) if s == "fn" => {
                    prog.fn_decls.push(self.fn_decl(false)?);
                }
                Tok::Ident(s) if s == "opaque" => {
                    self.bump();
                    prog.fn_decls.push(self.fn_decl(true)?);
                }
                _ => return self.err(&["`enum`", "`fn`", "`opaque`"]),
            }
        }
    }

    fn type_decl(&mut self) -> Result<TypeDecl, ParseError> {
        let pos = self.pos();
        self.bump(); // enum
        let name = self.ident("type name")?;
        let (regions, ty_params) = self.generic_params()?;
        if !regions.is_empty() {
            return Err(ParseError {
                pos,
                expected: vec!["type parameters only (data types cannot carry regions)".into()],
                found: format!("'{}", regions[0]),
            });
        }
        self.expect(Tok::LBrace, "`{`")?;
        let mut ctors = Vec::new();
        while !self.eat(Tok::RBrace) {
            let cname = self.ident("constructor name")?;
            let mut fields = Vec::new();
            if self.eat(Tok::LParen) {
                loop {
                    // Optional `name:` prefix before the field type.
                    let fname = match (self.peek(), self.peek2()) {
                        (Tok::Ident(n), Tok::Colon) => {
                            let n = n.clone();
                            self.bump();
                            self.bump();
                            Some(n)
                        }
                        _ => None,
                    };
                    let ty = self.ty()?;
                    fields.push(FieldDecl { name: fname, ty });
                    if !self.eat(Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
            }
            ctors.push(CtorDecl { name: cname, fields });
            if !self.eat(Tok::Comma) {
                self.expect(Tok::RBrace, "`}`")?;
                break;
            }
        }
        Ok(TypeDecl { name, pos, ty_params, ctors })
    }

    fn generic_params(&mut self) -> Result<(Vec<String>, Vec<String>), ParseError> {
        let mut regions = Vec::new();
        let mut tys = Vec::new();
        if self.eat(Tok::Lt) {
            loop {
                match self.peek().clone() {
                    Tok::Lifetime(n) => {
                        self.bump();
                        regions.push(n);
                    }
                    Tok::Ident(n) => {
                        self.bump();
                        tys.push(n);
                    }
                    _ => return self.err(&["lifetime", "type parameter"]),
                }
                if !self.eat(Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::Gt, "`>`")?;
        }
        Ok((regions, tys))
    }

    fn fn_decl(&mut self, opaque: bool) -> Result<FnDecl, ParseError> {
        let pos = self.pos();
        if !self.kw("fn") {
            return self.err(&["`fn`"]);
        }
        let name = self.ident("function name")?;
        let (region_params, ty_params) = self.generic_params()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let n = self.ident("argument name")?;
                self.expect(Tok::Colon, "`:`")?;
                let t = self.ty()?;
                args.push((n, t));
                if !self.eat(Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;

        let ret = if self.eat(Tok::Arrow) {
            if opaque {
                // Opaque declarations name only the return type.
                ("ret".to_string(), self.ty()?)
            } else {
                self.expect(Tok::LParen, "`(`")?;
                let n = self.ident("return variable name")?;
                self.expect(Tok::Colon, "`:`")?;
                let t = self.ty()?;
                self.expect(Tok::RParen, "`)`")?;
                (n, t)
            }
        } else {
            ("ret".to_string(), Ty::unit())
        };

        if opaque {
            self.expect(Tok::Semi, "`;`")?;
            return Ok(FnDecl { name, pos, region_params, ty_params, args, locals: Vec::new(), ret, body: None });
        }

        self.expect(Tok::LBrace, "`{`")?;
        let mut locals = Vec::new();
        while self.kw("let") {
            let n = self.ident("local name")?;
            self.expect(Tok::Colon, "`:`")?;
            let t = self.ty()?;
            locals.push((n, t));
            self.expect(Tok::Semi, "`;`")?;
        }
        let body = self.stmts_until_rbrace()?;
        Ok(FnDecl { name, pos, region_params, ty_params, args, locals, ret, body: Some(body) })
    }

    fn ty(&mut self) -> Result<Ty, ParseError> {
        match self.peek().clone() {
            Tok::Amp => {
                self.bump();
                let region = match self.peek().clone() {
                    Tok::Lifetime(n) => {
                        self.bump();
                        if n == "_" {
                            Region::Anon
                        } else {
                            Region::Var(n)
                        }
                    }
                    _ => Region::Anon,
                };
                if self.kw("mut") {
                    Ok(Ty::MutBorrow(region, Box::new(self.ty()?)))
                } else {
                    Ok(Ty::SharedBorrow(region, Box::new(self.ty()?)))
                }
            }
            Tok::LParen => {
                self.bump();
                let mut elems = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        elems.push(self.ty()?);
                        if !self.eat(Tok::Comma) {
                            break;
                        }
                        if *self.peek() == Tok::RParen {
                            break; // trailing comma
                        }
                    }
                }
                let pos = self.pos();
                self.expect(Tok::RParen, "`)`")?;
                if elems.len() == 1 {
                    return Err(ParseError {
                        pos,
                        expected: vec!["unit `()` or tuple of length >= 2".into()],
                        found: "unary tuple type".into(),
                    });
                }
                Ok(Ty::Tuple(elems))
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "bool" => Ok(Ty::Bool),
                    "i32" => Ok(Ty::I32),
                    "u32" => Ok(Ty::U32),
                    "Box" => {
                        self.expect(Tok::Lt, "`<`")?;
                        let inner = self.ty()?;
                        self.expect(Tok::Gt, "`>`")?;
                        Ok(Ty::Box(Box::new(inner)))
                    }
                    _ => {
                        if self.eat(Tok::Lt) {
                            let mut args = Vec::new();
                            loop {
                                args.push(self.ty()?);
                                if !self.eat(Tok::Comma) {
                                    break;
                                }
                            }
                            self.expect(Tok::Gt, "`>`")?;
                            Ok(Ty::Adt(name, args))
                        } else {
                            // Bare names parse as type applications; the ones
                            // naming an in-scope type parameter are rewritten
                            // to type variables during validation.
                            Ok(Ty::Adt(name, Vec::new()))
                        }
                    }
                }
            }
            _ => self.err(&["type"]),
        }
    }

    fn stmts_until_rbrace(&mut self) -> Result<Statement, ParseError> {
        let mut stmts = Vec::new();
        while !self.eat(Tok::RBrace) {
            stmts.push(self.stmt()?);
        }
        Ok(Statement::seq(stmts))
    }

    fn block(&mut self) -> Result<Statement, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        self.stmts_until_rbrace()
    }

    fn stmt(&mut self) -> Result<Statement, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if s == "nop" => {
                self.bump();
                self.expect(Tok::Semi, "`;`")?;
                Ok(Statement::Nop)
            }
            Tok::Ident(s) if s == "return" => {
                self.bump();
                self.expect(Tok::Semi, "`;`")?;
                Ok(Statement::Return { pos })
            }
            Tok::Ident(s) if s == "panic" => {
                self.bump();
                self.eat(Tok::Bang);
                self.expect(Tok::Semi, "`;`")?;
                Ok(Statement::Panic { pos })
            }
            Tok::Ident(s) if s == "assert" => {
                self.bump();
                self.expect(Tok::Bang, "`!`")?;
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.operand()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                // assert!(c) is sugar for a conditional panic.
                Ok(Statement::IfThenElse {
                    pos,
                    cond,
                    then_branch: Box::new(Statement::Nop),
                    else_branch: Box::new(Statement::Panic { pos }),
                })
            }
            Tok::Ident(s) if s == "free" => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let place = self.place()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(Statement::Free { pos, place })
            }
            Tok::Ident(s) if s == "if" => {
                self.bump();
                let cond = self.operand()?;
                let then_branch = Box::new(self.block()?);
                let else_branch = if self.kw("else") {
                    Box::new(self.block()?)
                } else {
                    Box::new(Statement::Nop)
                };
                Ok(Statement::IfThenElse { pos, cond, then_branch, else_branch })
            }
            Tok::Ident(s) if s == "match" => {
                self.bump();
                let place = self.place()?;
                self.expect(Tok::LBrace, "`{`")?;
                let mut arms = Vec::new();
                while !self.eat(Tok::RBrace) {
                    let ctor = self.ident("constructor name")?;
                    self.expect(Tok::FatArrow, "`=>`")?;
                    let body = self.block()?;
                    arms.push((ctor, body));
                    self.eat(Tok::Comma);
                }
                Ok(Statement::Match { pos, place, arms })
            }
            Tok::Ident(name)
                if matches!(self.peek2(), Tok::LParen | Tok::Lt)
                    && name.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
                    && !matches!(name.as_str(), "move" | "copy") =>
            {
                // Bare call `f(args);` discarding a unit result: sugar for
                // an assignment into the hidden unit local `_`.
                self.bump();
                let (region_args, ty_args) = self.generic_args()?;
                self.expect(Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.operand()?);
                        if !self.eat(Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(Statement::Call {
                    pos,
                    dest: Place::var("_"),
                    func: name,
                    region_args,
                    ty_args,
                    args,
                })
            }
            _ => {
                // assignment or call: `place = ...;`
                let place = self.place()?;
                self.expect(Tok::Eq, "`=`")?;
                let stmt = if let Tok::Ident(name) = self.peek().clone() {
                    let starts_lower = name.chars().next().is_some_and(|c| c.is_ascii_lowercase());
                    let callish = matches!(self.peek2(), Tok::LParen | Tok::Lt)
                        && starts_lower
                        && !matches!(name.as_str(), "move" | "copy" | "true" | "false");
                    if callish {
                        self.bump();
                        let (region_args, ty_args) = self.generic_args()?;
                        self.expect(Tok::LParen, "`(`")?;
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                args.push(self.operand()?);
                                if !self.eat(Tok::Comma) {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        Statement::Call { pos, dest: place, func: name, region_args, ty_args, args }
                    } else {
                        let rvalue = self.rvalue()?;
                        Statement::Assign { pos, place, rvalue }
                    }
                } else {
                    let rvalue = self.rvalue()?;
                    Statement::Assign { pos, place, rvalue }
                };
                self.expect(Tok::Semi, "`;`")?;
                Ok(stmt)
            }
        }
    }

    fn generic_args(&mut self) -> Result<(Vec<Region>, Vec<Ty>), ParseError> {
        let mut regions = Vec::new();
        let mut tys = Vec::new();
        if self.eat(Tok::Lt) {
            loop {
                if let Tok::Lifetime(n) = self.peek().clone() {
                    self.bump();
                    regions.push(if n == "_" { Region::Anon } else { Region::Var(n) });
                } else {
                    tys.push(self.ty()?);
                }
                if !self.eat(Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::Gt, "`>`")?;
        }
        Ok((regions, tys))
    }

    fn rvalue(&mut self) -> Result<Rvalue, ParseError> {
        match self.peek().clone() {
            Tok::Amp => {
                self.bump();
                if self.kw("mut") {
                    Ok(Rvalue::MutBorrowOf(self.place()?))
                } else if self.kw("reserved") {
                    Ok(Rvalue::ReservedBorrowOf(self.place()?))
                } else {
                    Ok(Rvalue::SharedBorrowOf(self.place()?))
                }
            }
            Tok::Bang => {
                self.bump();
                Ok(Rvalue::Not(self.operand()?))
            }
            _ => {
                let lhs = self.operand()?;
                let op = match self.peek() {
                    Tok::Plus => Some(BinOp::Add),
                    Tok::Minus => Some(BinOp::Sub),
                    Tok::Star => Some(BinOp::Mul),
                    Tok::Percent => Some(BinOp::Rem),
                    Tok::EqEq => Some(BinOp::Eq),
                    Tok::NotEq => Some(BinOp::Ne),
                    Tok::Lt => Some(BinOp::Lt),
                    Tok::Le => Some(BinOp::Le),
                    Tok::Gt => Some(BinOp::Gt),
                    Tok::Ge => Some(BinOp::Ge),
                    _ => None,
                };
                match op {
                    None => Ok(Rvalue::Use(lhs)),
                    Some(op) => {
                        self.bump();
                        Ok(Rvalue::Binop(op, lhs, self.operand()?))
                    }
                }
            }
        }
    }

    fn int_const(&mut self, negative: bool) -> Result<Operand, ParseError> {
        let pos = self.pos();
        let Tok::Int(n) = self.bump() else { unreachable!() };
        if n > i64::MAX as u64 {
            return Err(ParseError {
                pos,
                expected: vec!["integer in range".into()],
                found: format!("{n}"),
            });
        }
        let value = if negative { -(n as i64) } else { n as i64 };
        let width = match self.peek() {
            Tok::Ident(s) if s == "i32" => {
                self.bump();
                Some(IntWidth::I32)
            }
            Tok::Ident(s) if s == "u32" => {
                self.bump();
                Some(IntWidth::U32)
            }
            _ => None,
        };
        Ok(Operand::ConstInt(IntConst { value, width }))
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek().clone() {
            Tok::Int(_) => self.int_const(false),
            Tok::Minus => {
                self.bump();
                if matches!(self.peek(), Tok::Int(_)) {
                    self.int_const(true)
                } else {
                    self.err(&["integer literal"])
                }
            }
            Tok::LParen => {
                self.bump();
                let mut elems = Vec::new();
                let mut trailing_comma = false;
                if *self.peek() != Tok::RParen {
                    loop {
                        elems.push(self.operand()?);
                        if !self.eat(Tok::Comma) {
                            trailing_comma = false;
                            break;
                        }
                        trailing_comma = true;
                        if *self.peek() == Tok::RParen {
                            break;
                        }
                    }
                }
                let pos = self.pos();
                self.expect(Tok::RParen, "`)`")?;
                if elems.len() == 1 {
                    let found = if trailing_comma { "unary tuple" } else { "parenthesized operand" };
                    return Err(ParseError {
                        pos,
                        expected: vec!["unit `()` or tuple of length >= 2".into()],
                        found: found.into(),
                    });
                }
                Ok(Operand::Tuple(elems))
            }
            Tok::Ident(name) => match name.as_str() {
                "move" => {
                    self.bump();
                    Ok(Operand::Move(self.place()?))
                }
                "copy" => {
                    self.bump();
                    Ok(Operand::Copy(self.place()?))
                }
                "true" => {
                    self.bump();
                    Ok(Operand::ConstBool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Operand::ConstBool(false))
                }
                "Box" => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let inner = self.operand()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Operand::BoxNew(Box::new(inner)))
                }
                _ if name.chars().next().is_some_and(|c| c.is_ascii_uppercase()) => {
                    self.bump();
                    let mut fields = Vec::new();
                    if self.eat(Tok::LParen) {
                        if *self.peek() != Tok::RParen {
                            loop {
                                fields.push(self.operand()?);
                                if !self.eat(Tok::Comma) {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen, "`)`")?;
                    }
                    // The ADT name is resolved during validation.
                    Ok(Operand::Ctor { adt: String::new(), ctor: name, fields })
                }
                _ => self.err(&["operand"]),
            },
            _ => self.err(&["operand"]),
        }
    }

    fn place(&mut self) -> Result<Place, ParseError> {
        if self.eat(Tok::Star) {
            let mut inner = self.place()?;
            inner.path.push(Proj::Deref);
            return Ok(inner);
        }
        let mut place = match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let p = self.place()?;
                self.expect(Tok::RParen, "`)`")?;
                p
            }
            Tok::Ident(_) => Place::var(self.ident("place")?),
            _ => return self.err(&["place"]),
        };
        while self.eat(Tok::Dot) {
            match self.peek().clone() {
                Tok::Int(i) => {
                    self.bump();
                    place.path.push(Proj::TupleField(i as usize));
                }
                Tok::Ident(ctor) => {
                    self.bump();
                    self.expect(Tok::Dot, "`.`")?;
                    match self.peek().clone() {
                        Tok::Int(i) => {
                            self.bump();
                            place.path.push(Proj::Field { ctor, index: i as usize });
                        }
                        _ => return self.err(&["field index"]),
                    }
                }
                _ => return self.err(&["field index", "constructor name"]),
            }
        }
        Ok(place)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_function() {
        let p = parse_program("fn f() -> (r: i32) { r = 0i32; return; }").unwrap();
        assert_eq!(p.fn_decls.len(), 1);
        let f = &p.fn_decls[0];
        assert!(f.args.is_empty());
        assert_eq!(f.ret, ("r".to_string(), Ty::I32));
    }

    #[test]
    fn parses_choose_signature() {
        let src = "
            fn choose<'a, T>(b: bool, x: &'a mut T, y: &'a mut T) -> (r: &'a mut T) {
                if copy b { r = move x; return; } else { r = move y; return; }
            }";
        let p = parse_program(src).unwrap();
        let f = &p.fn_decls[0];
        assert_eq!(f.region_params, vec!["a".to_string()]);
        assert_eq!(f.ty_params, vec!["T".to_string()]);
        assert_eq!(f.args.len(), 3);
        // `T` stays a bare type application until validation scopes it.
        assert_eq!(
            f.args[1].1,
            Ty::MutBorrow(Region::Var("a".into()), Box::new(Ty::Adt("T".into(), vec![])))
        );
    }

    #[test]
    fn rejects_unary_tuple() {
        let err = parse_program("fn f() { x = (1,); return; }").unwrap_err();
        assert!(err.found.contains("unary tuple"), "{err}");
        let err2 = parse_program("fn f() { x = (1); return; }").unwrap_err();
        assert!(err2.found.contains("parenthesized"), "{err2}");
    }

    #[test]
    fn parses_enum_with_named_fields() {
        let src = "enum List<T> { Cons(hd: T, tl: Box<List<T>>), Nil }";
        let p = parse_program(src).unwrap();
        let t = &p.type_decls[0];
        assert_eq!(t.ty_params, vec!["T".to_string()]);
        assert_eq!(t.ctors.len(), 2);
        assert_eq!(t.ctors[0].fields[0].name.as_deref(), Some("hd"));
        assert_eq!(t.ctors[1].fields.len(), 0);
    }

    #[test]
    fn parses_match_and_call() {
        let src = "
            enum List<T> { Cons(T, Box<List<T>>), Nil }
            fn f<'a>(l: &'a mut List<u32>) -> (r: u32) {
                match *(l) {
                    Nil => { panic!; }
                    Cons => { r = g<'a, u32>(move l, copy (*(l)).Cons.0); return; }
                }
            }";
        let p = parse_program(src).unwrap();
        let f = &p.fn_decls[0];
        let Some(Statement::Match { arms, .. }) = &f.body else { panic!() };
        assert_eq!(arms.len(), 2);
        let Statement::Seq(call, _) = &arms[1].1 else { panic!("{:?}", arms[1].1) };
        let Statement::Call { func, region_args, ty_args, args, .. } = call.as_ref() else {
            panic!()
        };
        assert_eq!(func, "g");
        assert_eq!(region_args.len(), 1);
        assert_eq!(ty_args, &[Ty::U32]);
        assert_eq!(args.len(), 2);
    }

    #[test]
    fn assert_desugars_to_conditional_panic() {
        let p = parse_program("fn f(b: bool) { assert!(copy b); return; }").unwrap();
        let Some(Statement::Seq(first, _)) = &p.fn_decls[0].body else { panic!() };
        let Statement::IfThenElse { then_branch, else_branch, .. } = first.as_ref() else {
            panic!()
        };
        assert_eq!(**then_branch, Statement::Nop);
        assert!(matches!(**else_branch, Statement::Panic { .. }));
    }

    #[test]
    fn parses_opaque_decl() {
        let p = parse_program("opaque fn deserialize() -> Map;").unwrap();
        let f = &p.fn_decls[0];
        assert!(f.is_opaque());
        assert_eq!(f.ret.1, Ty::Adt("Map".into(), vec![]));
    }

    #[test]
    fn parse_error_has_position_and_expectations() {
        let err = parse_program("fn f() { x = ; }").unwrap_err();
        assert_eq!(err.pos.line, 1);
        assert!(!err.expected.is_empty());
    }

    #[test]
    fn deref_groupings_differ() {
        // `*(x.0)` : field then deref; `(*(x)).0` : deref then field.
        let p1 = parse_program("fn f() { y = copy *(x.0); return; }").unwrap();
        let p2 = parse_program("fn f() { y = copy (*(x)).0; return; }").unwrap();
        let get = |p: &LlbcProgram| {
            let Some(Statement::Seq(s, _)) = &p.fn_decls[0].body else { panic!() };
            let Statement::Assign { rvalue: Rvalue::Use(Operand::Copy(pl)), .. } = s.as_ref()
            else {
                panic!()
            };
            pl.path.clone()
        };
        assert_eq!(get(&p1), vec![Proj::TupleField(0), Proj::Deref]);
        assert_eq!(get(&p2), vec![Proj::Deref, Proj::TupleField(0)]);
    }
}
