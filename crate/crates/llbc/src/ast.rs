//! Abstract syntax for LLBC programs: types, places, operands, rvalues,
//! statements and declarations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Source position, 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A region annotation on a borrow type. `Var` is a declared region
/// parameter; `Inst` is a fresh instance minted during symbolic execution;
/// `Anon` is the unnamed region allowed on local-variable types.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Var(String),
    Inst(u32),
    Anon,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Var(n) => write!(f, "'{n}"),
            Region::Inst(i) => write!(f, "'#{i}"),
            Region::Anon => write!(f, "'_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Bool,
    I32,
    U32,
    MutBorrow(Region, Box<Ty>),
    SharedBorrow(Region, Box<Ty>),
    Box(Box<Ty>),
    Adt(String, Vec<Ty>),
    /// Zero or two-plus elements; the empty tuple is the unit type.
    Tuple(Vec<Ty>),
    Var(String),
}

impl Ty {
    pub fn unit() -> Ty {
        Ty::Tuple(Vec::new())
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Ty::Tuple(ts) if ts.is_empty())
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Ty::I32 | Ty::U32)
    }

    /// True if a borrow type occurs anywhere inside.
    pub fn contains_borrow(&self) -> bool {
        match self {
            Ty::Bool | Ty::I32 | Ty::U32 | Ty::Var(_) => false,
            Ty::MutBorrow(..) | Ty::SharedBorrow(..) => true,
            Ty::Box(t) => t.contains_borrow(),
            Ty::Adt(_, args) => args.iter().any(Ty::contains_borrow),
            Ty::Tuple(ts) => ts.iter().any(Ty::contains_borrow),
        }
    }

    /// True if the given region occurs anywhere inside.
    pub fn mentions_region(&self, r: &Region) -> bool {
        match self {
            Ty::Bool | Ty::I32 | Ty::U32 | Ty::Var(_) => false,
            Ty::MutBorrow(r2, t) | Ty::SharedBorrow(r2, t) => r2 == r || t.mentions_region(r),
            Ty::Box(t) => t.mentions_region(r),
            Ty::Adt(_, args) => args.iter().any(|t| t.mentions_region(r)),
            Ty::Tuple(ts) => ts.iter().any(|t| t.mentions_region(r)),
        }
    }

    /// Substitutes type variables and region variables.
    pub fn subst(&self, tys: &dyn Fn(&str) -> Option<Ty>, regs: &dyn Fn(&str) -> Option<Region>) -> Ty {
        match self {
            Ty::Bool | Ty::I32 | Ty::U32 => self.clone(),
            Ty::MutBorrow(r, t) => Ty::MutBorrow(subst_region(r, regs), Box::new(t.subst(tys, regs))),
            Ty::SharedBorrow(r, t) => {
                Ty::SharedBorrow(subst_region(r, regs), Box::new(t.subst(tys, regs)))
            }
            Ty::Box(t) => Ty::Box(Box::new(t.subst(tys, regs))),
            Ty::Adt(n, args) => Ty::Adt(n.clone(), args.iter().map(|t| t.subst(tys, regs)).collect()),
            Ty::Tuple(ts) => Ty::Tuple(ts.iter().map(|t| t.subst(tys, regs)).collect()),
            Ty::Var(v) => tys(v).unwrap_or_else(|| self.clone()),
        }
    }
}

fn subst_region(r: &Region, regs: &dyn Fn(&str) -> Option<Region>) -> Region {
    match r {
        Region::Var(n) => regs(n).unwrap_or_else(|| r.clone()),
        _ => r.clone(),
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => write!(f, "bool"),
            Ty::I32 => write!(f, "i32"),
            Ty::U32 => write!(f, "u32"),
            Ty::MutBorrow(r, t) => write!(f, "&{r} mut {t}"),
            Ty::SharedBorrow(r, t) => write!(f, "&{r} {t}"),
            Ty::Box(t) => write!(f, "Box<{t}>"),
            Ty::Adt(n, args) => {
                write!(f, "{n}")?;
                if !args.is_empty() {
                    write!(f, "<")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ">")?;
                }
                Ok(())
            }
            Ty::Tuple(ts) => {
                write!(f, "(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Ty::Var(v) => write!(f, "{v}"),
        }
    }
}

/// One step of a place path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Proj {
    /// Written `*` in source; validation resolves it to one of the three
    /// typed variants below.
    Deref,
    DerefMut,
    DerefShared,
    DerefBox,
    /// Field of a data-type constructor, e.g. `.Cons.0`.
    Field { ctor: String, index: usize },
    /// Tuple component, e.g. `.1`.
    TupleField(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Place {
    pub base: String,
    pub path: Vec<Proj>,
}

impl Place {
    pub fn var(name: impl Into<String>) -> Place {
        Place { base: name.into(), path: Vec::new() }
    }

    pub fn has_deref(&self) -> bool {
        self.path.iter().any(|p| {
            matches!(p, Proj::Deref | Proj::DerefMut | Proj::DerefShared | Proj::DerefBox)
        })
    }

    /// Derefs through borrows (not boxes), which block moves.
    pub fn has_borrow_deref(&self) -> bool {
        self.path
            .iter()
            .any(|p| matches!(p, Proj::Deref | Proj::DerefMut | Proj::DerefShared))
    }

    pub fn has_shared_deref(&self) -> bool {
        self.path.iter().any(|p| matches!(p, Proj::DerefShared))
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Derefs prefix the whole place; a dereffed prefix needs parens
        // before a field projection to keep the grouping on re-parse.
        fn is_deref(p: &Proj) -> bool {
            matches!(p, Proj::Deref | Proj::DerefMut | Proj::DerefShared | Proj::DerefBox)
        }
        fn go(f: &mut fmt::Formatter<'_>, base: &str, path: &[Proj]) -> fmt::Result {
            match path.split_last() {
                None => write!(f, "{base}"),
                Some((last, rest)) => {
                    if is_deref(last) {
                        write!(f, "*(")?;
                        go(f, base, rest)?;
                        return write!(f, ")");
                    }
                    let wrap = rest.last().is_some_and(is_deref);
                    if wrap {
                        write!(f, "(")?;
                    }
                    go(f, base, rest)?;
                    if wrap {
                        write!(f, ")")?;
                    }
                    match last {
                        Proj::Field { ctor, index } => write!(f, ".{ctor}.{index}"),
                        Proj::TupleField(i) => write!(f, ".{i}"),
                        _ => unreachable!(),
                    }
                }
            }
        }
        go(f, &self.base, &self.path)
    }
}

/// Integer constant; `width` is `None` until validation resolves it from
/// context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntConst {
    pub value: i64,
    pub width: Option<IntWidth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntWidth {
    I32,
    U32,
}

impl IntWidth {
    pub fn ty(self) -> Ty {
        match self {
            IntWidth::I32 => Ty::I32,
            IntWidth::U32 => Ty::U32,
        }
    }

    pub fn contains(self, v: i64) -> bool {
        match self {
            IntWidth::I32 => (i32::MIN as i64..=i32::MAX as i64).contains(&v),
            IntWidth::U32 => (0..=u32::MAX as i64).contains(&v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Move(Place),
    Copy(Place),
    ConstBool(bool),
    ConstInt(IntConst),
    /// `C(op, ...)`; the ADT name is resolved by validation.
    Ctor { adt: String, ctor: String, fields: Vec<Operand> },
    /// `Box(op)`.
    BoxNew(Box<Operand>),
    /// Zero or two-plus operands; `()` is the unit value.
    Tuple(Vec<Operand>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    /// Checked arithmetic fails (panics) on overflow; comparisons are total.
    pub fn is_checked_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rvalue {
    Use(Operand),
    MutBorrowOf(Place),
    SharedBorrowOf(Place),
    ReservedBorrowOf(Place),
    Not(Operand),
    Binop(BinOp, Operand, Operand),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Nop,
    Seq(Box<Statement>, Box<Statement>),
    Assign { pos: Pos, place: Place, rvalue: Rvalue },
    Call {
        pos: Pos,
        dest: Place,
        func: String,
        region_args: Vec<Region>,
        ty_args: Vec<Ty>,
        args: Vec<Operand>,
    },
    IfThenElse { pos: Pos, cond: Operand, then_branch: Box<Statement>, else_branch: Box<Statement> },
    Match { pos: Pos, place: Place, arms: Vec<(String, Statement)> },
    Return { pos: Pos },
    Panic { pos: Pos },
    Free { pos: Pos, place: Place },
}

impl Statement {
    pub fn seq(stmts: Vec<Statement>) -> Statement {
        let mut it = stmts.into_iter().rev();
        let Some(mut acc) = it.next() else { return Statement::Nop };
        for s in it {
            acc = Statement::Seq(Box::new(s), Box::new(acc));
        }
        acc
    }

    pub fn pos(&self) -> Pos {
        match self {
            Statement::Nop => Pos::default(),
            Statement::Seq(a, _) => a.pos(),
            Statement::Assign { pos, .. }
            | Statement::Call { pos, .. }
            | Statement::IfThenElse { pos, .. }
            | Statement::Match { pos, .. }
            | Statement::Return { pos }
            | Statement::Panic { pos }
            | Statement::Free { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnDecl {
    pub name: String,
    pub pos: Pos,
    pub region_params: Vec<String>,
    pub ty_params: Vec<String>,
    pub args: Vec<(String, Ty)>,
    pub locals: Vec<(String, Ty)>,
    pub ret: (String, Ty),
    /// `None` for opaque declarations.
    pub body: Option<Statement>,
}

impl FnDecl {
    pub fn is_opaque(&self) -> bool {
        self.body.is_none()
    }

    pub fn var_ty(&self, name: &str) -> Option<&Ty> {
        if self.ret.0 == name {
            return Some(&self.ret.1);
        }
        self.args
            .iter()
            .chain(self.locals.iter())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

/// A constructor field: positional, with an optional name used as a
/// naming hint by the synthesized output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: Option<String>,
    pub ty: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtorDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDecl {
    pub name: String,
    pub pos: Pos,
    pub ty_params: Vec<String>,
    pub ctors: Vec<CtorDecl>,
}

impl TypeDecl {
    pub fn ctor(&self, name: &str) -> Option<&CtorDecl> {
        self.ctors.iter().find(|c| c.name == name)
    }

    /// Field types of `ctor` instantiated with the given type arguments.
    pub fn ctor_field_tys(&self, ctor: &str, ty_args: &[Ty]) -> Option<Vec<Ty>> {
        let c = self.ctor(ctor)?;
        let lookup = |v: &str| {
            self.ty_params
                .iter()
                .position(|p| p == v)
                .and_then(|i| ty_args.get(i).cloned())
        };
        Some(c.fields.iter().map(|f| f.ty.subst(&lookup, &|_| None)).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlbcProgram {
    pub type_decls: Vec<TypeDecl>,
    pub fn_decls: Vec<FnDecl>,
    /// Function names grouped by mutual recursion, in dependency order.
    /// Computed by validation.
    #[serde(default)]
    pub fn_groups: Vec<Vec<String>>,
    /// Type names grouped by mutual recursion, in dependency order.
    #[serde(default)]
    pub type_groups: Vec<Vec<String>>,
}

impl LlbcProgram {
    pub fn type_decl(&self, name: &str) -> Option<&TypeDecl> {
        self.type_decls.iter().find(|t| t.name == name)
    }

    pub fn fn_decl(&self, name: &str) -> Option<&FnDecl> {
        self.fn_decls.iter().find(|f| f.name == name)
    }

    /// The ADT whose constructor set contains `ctor`, if unique.
    pub fn adt_of_ctor(&self, ctor: &str) -> Option<&TypeDecl> {
        self.type_decls.iter().find(|t| t.ctor(ctor).is_some())
    }

    /// True if `name` is in a recursion group with itself or others.
    pub fn fn_is_recursive(&self, name: &str) -> bool {
        self.fn_groups
            .iter()
            .any(|g| g.iter().any(|n| n == name) && (g.len() > 1 || fn_calls_self(self, name)))
    }
}

/// Clears source positions, for structural comparisons that should not
/// depend on layout.
pub fn strip_positions(p: &mut LlbcProgram) {
    fn strip_stmt(s: &mut Statement) {
        match s {
            Statement::Nop => {}
            Statement::Seq(a, b) => {
                strip_stmt(a);
                strip_stmt(b);
            }
            Statement::Assign { pos, .. }
            | Statement::Call { pos, .. }
            | Statement::Return { pos }
            | Statement::Panic { pos }
            | Statement::Free { pos, .. } => *pos = Pos::default(),
            Statement::IfThenElse { pos, then_branch, else_branch, .. } => {
                *pos = Pos::default();
                strip_stmt(then_branch);
                strip_stmt(else_branch);
            }
            Statement::Match { pos, arms, .. } => {
                *pos = Pos::default();
                arms.iter_mut().for_each(|(_, s)| strip_stmt(s));
            }
        }
    }
    for t in &mut p.type_decls {
        t.pos = Pos::default();
    }
    for f in &mut p.fn_decls {
        f.pos = Pos::default();
        if let Some(b) = &mut f.body {
            strip_stmt(b);
        }
    }
}

fn fn_calls_self(p: &LlbcProgram, name: &str) -> bool {
    fn stmt_calls(s: &Statement, name: &str) -> bool {
        match s {
            Statement::Seq(a, b) => stmt_calls(a, name) || stmt_calls(b, name),
            Statement::Call { func, .. } => func == name,
            Statement::IfThenElse { then_branch, else_branch, .. } => {
                stmt_calls(then_branch, name) || stmt_calls(else_branch, name)
            }
            Statement::Match { arms, .. } => arms.iter().any(|(_, s)| stmt_calls(s, name)),
            _ => false,
        }
    }
    p.fn_decl(name)
        .and_then(|f| f.body.as_ref())
        .map(|b| stmt_calls(b, name))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn place_display_nests_derefs() {
        let p = Place {
            base: "l".into(),
            path: vec![
                Proj::DerefMut,
                Proj::Field { ctor: "Cons".into(), index: 1 },
                Proj::DerefBox,
            ],
        };
        assert_eq!(p.to_string(), "*((*(l)).Cons.1)");
    }

    #[test]
    fn ty_region_search() {
        let a = Region::Var("a".into());
        let t = Ty::Tuple(vec![
            Ty::MutBorrow(a.clone(), Box::new(Ty::U32)),
            Ty::SharedBorrow(Region::Var("b".into()), Box::new(Ty::U32)),
        ]);
        assert!(t.mentions_region(&a));
        assert!(!t.mentions_region(&Region::Var("c".into())));
        assert!(t.contains_borrow());
    }

    #[test]
    fn seq_builder_right_nests() {
        let ret = Statement::Return { pos: Pos::default() };
        let s = Statement::seq(vec![Statement::Nop, Statement::Nop, ret.clone()]);
        match s {
            Statement::Seq(a, rest) => {
                assert_eq!(*a, Statement::Nop);
                match *rest {
                    Statement::Seq(b, r2) => {
                        assert_eq!(*b, Statement::Nop);
                        assert_eq!(*r2, ret);
                    }
                    _ => panic!("expected nested seq"),
                }
            }
            _ => panic!("expected seq"),
        }
    }
}
