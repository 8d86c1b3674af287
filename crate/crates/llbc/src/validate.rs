//! Static validation: name resolution, type checking, signature
//! restrictions, match completeness. Validation also resolves the parts the
//! parser leaves open: bare `*` derefs, unsuffixed integer constants, and
//! the ADT owning each constructor. Match arms are canonicalized into
//! declaration order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    DuplicateName,
    DuplicateVar,
    DuplicateCtor,
    UnknownType,
    UnknownVar,
    UnknownFn,
    UnknownCtor,
    TypeArity,
    UnaryTuple,
    SigRegionUndeclared,
    NestedBorrowSig,
    BorrowInAdtArg,
    BorrowInTypedecl,
    UnguardedRecursion,
    BadProjection,
    TypeMismatch,
    IntOutOfRange,
    AmbiguousInt,
    CopyNoncopyable,
    IncompleteMatch,
    DuplicateArm,
    MatchNonAdt,
    FreeNonBox,
    CallArity,
    MissingReturn,
    OpaqueWithBody,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagCode::DuplicateName => "DUPLICATE_NAME",
            DiagCode::DuplicateVar => "DUPLICATE_VAR",
            DiagCode::DuplicateCtor => "DUPLICATE_CTOR",
            DiagCode::UnknownType => "UNKNOWN_TYPE",
            DiagCode::UnknownVar => "UNKNOWN_VAR",
            DiagCode::UnknownFn => "UNKNOWN_FN",
            DiagCode::UnknownCtor => "UNKNOWN_CTOR",
            DiagCode::TypeArity => "TYPE_ARITY",
            DiagCode::UnaryTuple => "UNARY_TUPLE",
            DiagCode::SigRegionUndeclared => "SIG_REGION_UNDECLARED",
            DiagCode::NestedBorrowSig => "NESTED_BORROW_SIG",
            DiagCode::BorrowInAdtArg => "BORROW_IN_ADT_ARG",
            DiagCode::BorrowInTypedecl => "BORROW_IN_TYPEDECL",
            DiagCode::UnguardedRecursion => "UNGUARDED_RECURSION",
            DiagCode::BadProjection => "BAD_PROJECTION",
            DiagCode::TypeMismatch => "TYPE_MISMATCH",
            DiagCode::IntOutOfRange => "INT_OUT_OF_RANGE",
            DiagCode::AmbiguousInt => "AMBIGUOUS_INT",
            DiagCode::CopyNoncopyable => "COPY_NONCOPYABLE",
            DiagCode::IncompleteMatch => "INCOMPLETE_MATCH",
            DiagCode::DuplicateArm => "DUPLICATE_ARM",
            DiagCode::MatchNonAdt => "MATCH_NON_ADT",
            DiagCode::FreeNonBox => "FREE_NON_BOX",
            DiagCode::CallArity => "CALL_ARITY",
            DiagCode::MissingReturn => "MISSING_RETURN",
            DiagCode::OpaqueWithBody => "OPAQUE_WITH_BODY",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.pos, self.message)
    }
}

/// Structural type equality ignoring region annotations. Regions only
/// matter in signatures; within bodies, borrow values carry no regions.
pub fn ty_eq_erased(a: &Ty, b: &Ty) -> bool {
    match (a, b) {
        (Ty::Bool, Ty::Bool) | (Ty::I32, Ty::I32) | (Ty::U32, Ty::U32) => true,
        (Ty::MutBorrow(_, x), Ty::MutBorrow(_, y)) => ty_eq_erased(x, y),
        (Ty::SharedBorrow(_, x), Ty::SharedBorrow(_, y)) => ty_eq_erased(x, y),
        (Ty::Box(x), Ty::Box(y)) => ty_eq_erased(x, y),
        (Ty::Adt(n, xs), Ty::Adt(m, ys)) => {
            n == m && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| ty_eq_erased(x, y))
        }
        (Ty::Tuple(xs), Ty::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| ty_eq_erased(x, y))
        }
        (Ty::Var(x), Ty::Var(y)) => x == y,
        _ => false,
    }
}

struct Sigs {
    types: BTreeMap<String, TypeDecl>,
    ctor_owner: BTreeMap<String, String>,
    fns: BTreeMap<String, FnSig>,
}

#[derive(Clone)]
struct FnSig {
    region_params: Vec<String>,
    ty_params: Vec<String>,
    arg_tys: Vec<Ty>,
    ret_ty: Ty,
}

impl FnSig {
    fn instantiate(&self, ty_args: &[Ty], t: &Ty) -> Ty {
        let lookup = |v: &str| {
            self.ty_params.iter().position(|p| p == v).and_then(|i| ty_args.get(i).cloned())
        };
        t.subst(&lookup, &|_| None)
    }
}

/// Rewrites bare type applications that name an in-scope type parameter
/// into type variables.
fn scope_ty_params(t: &mut Ty, params: &[String]) {
    match t {
        Ty::Adt(name, args) if args.is_empty() && params.contains(name) => {
            *t = Ty::Var(name.clone());
        }
        Ty::Adt(_, args) => args.iter_mut().for_each(|a| scope_ty_params(a, params)),
        Ty::Tuple(ts) => ts.iter_mut().for_each(|a| scope_ty_params(a, params)),
        Ty::MutBorrow(_, inner) | Ty::SharedBorrow(_, inner) | Ty::Box(inner) => {
            scope_ty_params(inner, params)
        }
        _ => {}
    }
}

fn scope_stmt_ty_params(s: &mut Statement, params: &[String]) {
    match s {
        Statement::Seq(a, b) => {
            scope_stmt_ty_params(a, params);
            scope_stmt_ty_params(b, params);
        }
        Statement::Call { ty_args, .. } => {
            ty_args.iter_mut().for_each(|t| scope_ty_params(t, params))
        }
        Statement::IfThenElse { then_branch, else_branch, .. } => {
            scope_stmt_ty_params(then_branch, params);
            scope_stmt_ty_params(else_branch, params);
        }
        Statement::Match { arms, .. } => {
            arms.iter_mut().for_each(|(_, s)| scope_stmt_ty_params(s, params))
        }
        _ => {}
    }
}

fn mentions_var(s: &Statement, name: &str) -> bool {
    fn place_is(p: &Place, name: &str) -> bool {
        p.base == name
    }
    fn op_mentions(op: &Operand, name: &str) -> bool {
        match op {
            Operand::Move(p) | Operand::Copy(p) => place_is(p, name),
            Operand::Ctor { fields, .. } => fields.iter().any(|o| op_mentions(o, name)),
            Operand::BoxNew(inner) => op_mentions(inner, name),
            Operand::Tuple(ops) => ops.iter().any(|o| op_mentions(o, name)),
            _ => false,
        }
    }
    match s {
        Statement::Seq(a, b) => mentions_var(a, name) || mentions_var(b, name),
        Statement::Assign { place, rvalue, .. } => {
            place_is(place, name)
                || match rvalue {
                    Rvalue::Use(op) | Rvalue::Not(op) => op_mentions(op, name),
                    Rvalue::MutBorrowOf(p) | Rvalue::SharedBorrowOf(p) | Rvalue::ReservedBorrowOf(p) => {
                        place_is(p, name)
                    }
                    Rvalue::Binop(_, a, b) => op_mentions(a, name) || op_mentions(b, name),
                }
        }
        Statement::Call { dest, args, .. } => {
            place_is(dest, name) || args.iter().any(|o| op_mentions(o, name))
        }
        Statement::IfThenElse { cond, then_branch, else_branch, .. } => {
            op_mentions(cond, name) || mentions_var(then_branch, name) || mentions_var(else_branch, name)
        }
        Statement::Match { place, arms, .. } => {
            place_is(place, name) || arms.iter().any(|(_, s)| mentions_var(s, name))
        }
        Statement::Free { place, .. } => place_is(place, name),
        _ => false,
    }
}

pub fn validate(p: &mut LlbcProgram) -> Vec<Diagnostic> {
    // Scope type parameters before anything else looks at the types.
    for t in &mut p.type_decls {
        let params = t.ty_params.clone();
        for c in &mut t.ctors {
            for f in &mut c.fields {
                scope_ty_params(&mut f.ty, &params);
            }
        }
    }
    for f in &mut p.fn_decls {
        let params = f.ty_params.clone();
        for (_, t) in f.args.iter_mut().chain(f.locals.iter_mut()) {
            scope_ty_params(t, &params);
        }
        scope_ty_params(&mut f.ret.1, &params);
        if let Some(body) = &mut f.body {
            scope_stmt_ty_params(body, &params);
            // The bare-call sugar targets a hidden unit local `_`.
            if mentions_var(body, "_") && f.var_ty("_").is_none() {
                f.locals.push(("_".to_string(), Ty::unit()));
            }
        }
    }

    let mut diags = Vec::new();
    let mut sigs = Sigs { types: BTreeMap::new(), ctor_owner: BTreeMap::new(), fns: BTreeMap::new() };

    // Declaration-level checks and symbol tables.
    let mut seen = BTreeSet::new();
    for t in &p.type_decls {
        if !seen.insert(t.name.clone()) {
            diags.push(diag(DiagCode::DuplicateName, t.pos, format!("type `{}`", t.name)));
        }
        for c in &t.ctors {
            if sigs.ctor_owner.insert(c.name.clone(), t.name.clone()).is_some() {
                diags.push(diag(
                    DiagCode::DuplicateCtor,
                    t.pos,
                    format!("constructor `{}` declared more than once", c.name),
                ));
            }
        }
        sigs.types.insert(t.name.clone(), t.clone());
    }
    for f in &p.fn_decls {
        if !seen.insert(f.name.clone()) {
            diags.push(diag(DiagCode::DuplicateName, f.pos, format!("function `{}`", f.name)));
        }
        sigs.fns.insert(
            f.name.clone(),
            FnSig {
                region_params: f.region_params.clone(),
                ty_params: f.ty_params.clone(),
                arg_tys: f.args.iter().map(|(_, t)| t.clone()).collect(),
                ret_ty: f.ret.1.clone(),
            },
        );
    }

    for t in &p.type_decls {
        check_type_decl(&sigs, t, &mut diags);
    }
    check_type_recursion(p, &mut diags);

    let mut bodies: Vec<FnDecl> = std::mem::take(&mut p.fn_decls);
    for f in &mut bodies {
        check_fn(&sigs, f, &mut diags);
    }
    p.fn_decls = bodies;

    if diags.is_empty() {
        p.fn_groups = fn_sccs(p);
        p.type_groups = type_sccs(p);
    }
    diags
}

fn diag(code: DiagCode, pos: Pos, message: String) -> Diagnostic {
    Diagnostic { code, pos, message }
}

fn check_wf_ty(sigs: &Sigs, ty_params: &[String], t: &Ty, pos: Pos, diags: &mut Vec<Diagnostic>) {
    match t {
        Ty::Bool | Ty::I32 | Ty::U32 => {}
        Ty::MutBorrow(_, inner) | Ty::SharedBorrow(_, inner) => {
            check_wf_ty(sigs, ty_params, inner, pos, diags)
        }
        Ty::Box(inner) => {
            if inner.contains_borrow() {
                diags.push(diag(DiagCode::BorrowInAdtArg, pos, format!("`Box<{inner}>`")));
            }
            check_wf_ty(sigs, ty_params, inner, pos, diags);
        }
        Ty::Adt(name, args) => {
            match sigs.types.get(name) {
                None => diags.push(diag(DiagCode::UnknownType, pos, format!("`{name}`"))),
                Some(decl) => {
                    if decl.ty_params.len() != args.len() {
                        diags.push(diag(
                            DiagCode::TypeArity,
                            pos,
                            format!("`{name}` expects {} type arguments", decl.ty_params.len()),
                        ));
                    }
                }
            }
            for a in args {
                if a.contains_borrow() {
                    diags.push(diag(DiagCode::BorrowInAdtArg, pos, format!("`{name}<..{a}..>`")));
                }
                check_wf_ty(sigs, ty_params, a, pos, diags);
            }
        }
        Ty::Tuple(ts) => {
            if ts.len() == 1 {
                diags.push(diag(DiagCode::UnaryTuple, pos, "tuple of length 1".into()));
            }
            for e in ts {
                check_wf_ty(sigs, ty_params, e, pos, diags);
            }
        }
        Ty::Var(v) => {
            if !ty_params.contains(v) {
                diags.push(diag(DiagCode::UnknownType, pos, format!("type variable `{v}`")));
            }
        }
    }
}

fn check_type_decl(sigs: &Sigs, t: &TypeDecl, diags: &mut Vec<Diagnostic>) {
    for c in &t.ctors {
        for f in &c.fields {
            if f.ty.contains_borrow() {
                diags.push(diag(
                    DiagCode::BorrowInTypedecl,
                    t.pos,
                    format!("field of `{}::{}` has borrow type", t.name, c.name),
                ));
            }
            check_wf_ty(sigs, &t.ty_params, &f.ty, t.pos, diags);
        }
    }
}

/// Recursive type occurrences must pass through a `Box`.
fn check_type_recursion(p: &LlbcProgram, diags: &mut Vec<Diagnostic>) {
    // Edges through non-boxed field positions only.
    fn unboxed_refs(t: &Ty, out: &mut BTreeSet<String>) {
        match t {
            Ty::Adt(n, args) => {
                out.insert(n.clone());
                for a in args {
                    unboxed_refs(a, out);
                }
            }
            Ty::Tuple(ts) => ts.iter().for_each(|t| unboxed_refs(t, out)),
            Ty::MutBorrow(_, inner) | Ty::SharedBorrow(_, inner) => unboxed_refs(inner, out),
            Ty::Box(_) | Ty::Bool | Ty::I32 | Ty::U32 | Ty::Var(_) => {}
        }
    }
    let mut edges: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for t in &p.type_decls {
        let mut refs = BTreeSet::new();
        for c in &t.ctors {
            for f in &c.fields {
                unboxed_refs(&f.ty, &mut refs);
            }
        }
        edges.insert(&t.name, refs);
    }
    // A cycle in the unboxed graph means an infinite-size type.
    for t in &p.type_decls {
        let mut stack = vec![t.name.clone()];
        let mut visited = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if let Some(next) = edges.get(n.as_str()) {
                for m in next {
                    if *m == t.name {
                        diags.push(diag(
                            DiagCode::UnguardedRecursion,
                            t.pos,
                            format!("`{}` recursies without a Box indirection", t.name),
                        ));
                        stack.clear();
                        break;
                    }
                    if visited.insert(m.clone()) {
                        stack.push(m.clone());
                    }
                }
            }
        }
    }
}

/// Signature restriction: a borrow type never occurs inside another borrow.
fn check_sig_ty(
    sigs: &Sigs,
    f: &FnDecl,
    t: &Ty,
    under_borrow: bool,
    diags: &mut Vec<Diagnostic>,
) {
    match t {
        Ty::MutBorrow(r, inner) | Ty::SharedBorrow(r, inner) => {
            if under_borrow {
                diags.push(diag(DiagCode::NestedBorrowSig, f.pos, format!("in `{}`: `{t}`", f.name)));
            }
            match r {
                Region::Var(n) if f.region_params.contains(n) => {}
                _ => diags.push(diag(
                    DiagCode::SigRegionUndeclared,
                    f.pos,
                    format!("in `{}`: `{t}` must name a declared region", f.name),
                )),
            }
            check_sig_ty(sigs, f, inner, true, diags);
        }
        Ty::Tuple(ts) => ts.iter().for_each(|e| check_sig_ty(sigs, f, e, under_borrow, diags)),
        Ty::Box(inner) => check_sig_ty(sigs, f, inner, under_borrow, diags),
        Ty::Adt(_, args) => args.iter().for_each(|a| check_sig_ty(sigs, f, a, under_borrow, diags)),
        _ => {}
    }
}

struct FnCtx<'a> {
    sigs: &'a Sigs,
    fun: FnDecl,
    diags: Vec<Diagnostic>,
}

impl<'a> FnCtx<'a> {
    fn fail(&mut self, code: DiagCode, pos: Pos, msg: String) -> Option<Ty> {
        self.diags.push(diag(code, pos, msg));
        None
    }

    /// Resolves derefs in the place path and returns its type.
    fn check_place(&mut self, place: &mut Place, pos: Pos) -> Option<Ty> {
        let Some(mut ty) = self.fun.var_ty(&place.base).cloned() else {
            return self.fail(DiagCode::UnknownVar, pos, format!("`{}`", place.base));
        };
        for proj in place.path.iter_mut() {
            match proj {
                Proj::Deref | Proj::DerefMut | Proj::DerefShared | Proj::DerefBox => {
                    let resolved = match &ty {
                        Ty::MutBorrow(_, inner) => (Proj::DerefMut, (**inner).clone()),
                        Ty::SharedBorrow(_, inner) => (Proj::DerefShared, (**inner).clone()),
                        Ty::Box(inner) => (Proj::DerefBox, (**inner).clone()),
                        other => {
                            let msg = format!("cannot dereference value of type `{other}`");
                            self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                            return None;
                        }
                    };
                    if !matches!(proj, Proj::Deref) && *proj != resolved.0 {
                        let msg = format!("deref kind does not match type `{ty}`");
                        self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                        return None;
                    }
                    *proj = resolved.0;
                    ty = resolved.1;
                }
                Proj::Field { ctor, index } => {
                    let Ty::Adt(name, args) = &ty else {
                        let msg = format!("`.{ctor}.{index}` on non-ADT type `{ty}`");
                        self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                        return None;
                    };
                    let decl = self.sigs.types.get(name).cloned();
                    let Some(field_tys) =
                        decl.as_ref().and_then(|d| d.ctor_field_tys(ctor, args))
                    else {
                        let msg = format!("`{name}` has no constructor `{ctor}`");
                        self.diags.push(diag(DiagCode::UnknownCtor, pos, msg));
                        return None;
                    };
                    let Some(fty) = field_tys.get(*index) else {
                        let msg = format!("`{ctor}` has no field {index}");
                        self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                        return None;
                    };
                    ty = fty.clone();
                }
                Proj::TupleField(i) => {
                    let Ty::Tuple(ts) = &ty else {
                        let msg = format!("`.{i}` on non-tuple type `{ty}`");
                        self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                        return None;
                    };
                    let Some(fty) = ts.get(*i) else {
                        let msg = format!("tuple has no component {i}");
                        self.diags.push(diag(DiagCode::BadProjection, pos, msg));
                        return None;
                    };
                    ty = fty.clone();
                }
            }
        }
        Some(ty)
    }

    /// Types an operand, resolving integer widths and constructor owners.
    /// `expected` drives resolution of unsuffixed constants.
    fn check_operand(&mut self, op: &mut Operand, expected: Option<&Ty>, pos: Pos) -> Option<Ty> {
        match op {
            Operand::Move(_) | Operand::Copy(_) => {
                let is_copy = matches!(op, Operand::Copy(_));
                let (Operand::Move(pl) | Operand::Copy(pl)) = op else { unreachable!() };
                let ty = self.check_place(pl, pos)?;
                if is_copy && ty_definitely_noncopy(&ty) {
                    self.diags.push(diag(
                        DiagCode::CopyNoncopyable,
                        pos,
                        format!("cannot copy value of type `{ty}`"),
                    ));
                }
                self.expect_ty(&ty, expected, pos);
                Some(ty)
            }
            Operand::ConstBool(_) => {
                self.expect_ty(&Ty::Bool, expected, pos);
                Some(Ty::Bool)
            }
            Operand::ConstInt(c) => {
                let width = match (c.width, expected) {
                    (Some(w), _) => w,
                    (None, Some(Ty::I32)) => IntWidth::I32,
                    (None, Some(Ty::U32)) => IntWidth::U32,
                    (None, Some(other)) => {
                        return self.fail(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("integer constant where `{other}` expected"),
                        );
                    }
                    (None, None) => {
                        return self.fail(
                            DiagCode::AmbiguousInt,
                            pos,
                            format!("cannot infer width of `{}`; add i32/u32 suffix", c.value),
                        );
                    }
                };
                if !width.contains(c.value) {
                    self.diags.push(diag(
                        DiagCode::IntOutOfRange,
                        pos,
                        format!("`{}` does not fit {}", c.value, width.ty()),
                    ));
                }
                c.width = Some(width);
                let ty = width.ty();
                self.expect_ty(&ty, expected, pos);
                Some(ty)
            }
            Operand::Ctor { adt, ctor, fields } => {
                let (name, args) = match expected {
                    Some(Ty::Adt(n, a)) => (n.clone(), a.clone()),
                    Some(other) => {
                        return self.fail(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("constructor `{ctor}` where `{other}` expected"),
                        );
                    }
                    None => {
                        // fall back to the globally-unique owner
                        match self.sigs.ctor_owner.get(ctor.as_str()) {
                            Some(owner) => {
                                let decl = &self.sigs.types[owner];
                                if !decl.ty_params.is_empty() {
                                    return self.fail(
                                        DiagCode::TypeMismatch,
                                        pos,
                                        format!("cannot infer type arguments of `{ctor}`"),
                                    );
                                }
                                (owner.clone(), Vec::new())
                            }
                            None => {
                                return self.fail(
                                    DiagCode::UnknownCtor,
                                    pos,
                                    format!("`{ctor}`"),
                                )
                            }
                        }
                    }
                };
                let Some(field_tys) = self
                    .sigs
                    .types
                    .get(&name)
                    .and_then(|d| d.ctor_field_tys(ctor, &args))
                else {
                    return self.fail(
                        DiagCode::UnknownCtor,
                        pos,
                        format!("`{name}` has no constructor `{ctor}`"),
                    );
                };
                if field_tys.len() != fields.len() {
                    return self.fail(
                        DiagCode::CallArity,
                        pos,
                        format!("`{ctor}` expects {} fields, got {}", field_tys.len(), fields.len()),
                    );
                }
                *adt = name.clone();
                for (f, ft) in fields.iter_mut().zip(field_tys.iter()) {
                    self.check_operand(f, Some(ft), pos);
                }
                Some(Ty::Adt(name, args))
            }
            Operand::BoxNew(inner) => {
                let inner_expected = match expected {
                    Some(Ty::Box(t)) => Some((**t).clone()),
                    Some(other) => {
                        return self.fail(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("`Box(..)` where `{other}` expected"),
                        );
                    }
                    None => None,
                };
                let t = self.check_operand(inner, inner_expected.as_ref(), pos)?;
                Some(Ty::Box(Box::new(t)))
            }
            Operand::Tuple(ops) => {
                let elem_expected: Option<Vec<Ty>> = match expected {
                    Some(Ty::Tuple(ts)) if ts.len() == ops.len() => Some(ts.clone()),
                    Some(other) if !ops.is_empty() => {
                        return self.fail(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("tuple where `{other}` expected"),
                        );
                    }
                    Some(other) if !other.is_unit() => {
                        return self.fail(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("`()` where `{other}` expected"),
                        );
                    }
                    _ => None,
                };
                let mut tys = Vec::new();
                for (i, o) in ops.iter_mut().enumerate() {
                    let ex = elem_expected.as_ref().map(|v| v[i].clone());
                    tys.push(self.check_operand(o, ex.as_ref(), pos)?);
                }
                Some(Ty::Tuple(tys))
            }
        }
    }

    fn expect_ty(&mut self, actual: &Ty, expected: Option<&Ty>, pos: Pos) {
        if let Some(exp) = expected {
            if !ty_eq_erased(actual, exp) {
                self.diags.push(diag(
                    DiagCode::TypeMismatch,
                    pos,
                    format!("expected `{exp}`, found `{actual}`"),
                ));
            }
        }
    }

    fn check_rvalue(&mut self, rv: &mut Rvalue, expected: &Ty, pos: Pos) {
        match rv {
            Rvalue::Use(op) => {
                self.check_operand(op, Some(expected), pos);
            }
            Rvalue::MutBorrowOf(place) => {
                if let Some(ty) = self.check_place(place, pos) {
                    self.expect_ty(&Ty::MutBorrow(Region::Anon, Box::new(ty)), Some(expected), pos);
                }
            }
            Rvalue::SharedBorrowOf(_) | Rvalue::ReservedBorrowOf(_) => {
                let reserved = matches!(rv, Rvalue::ReservedBorrowOf(_));
                let (Rvalue::SharedBorrowOf(place) | Rvalue::ReservedBorrowOf(place)) = rv else {
                    unreachable!()
                };
                if let Some(ty) = self.check_place(place, pos) {
                    // A reserved borrow checks as a mutable borrow type.
                    let bty = if reserved {
                        Ty::MutBorrow(Region::Anon, Box::new(ty))
                    } else {
                        Ty::SharedBorrow(Region::Anon, Box::new(ty))
                    };
                    self.expect_ty(&bty, Some(expected), pos);
                }
            }
            Rvalue::Not(op) => {
                self.check_operand(op, Some(&Ty::Bool), pos);
                self.expect_ty(&Ty::Bool, Some(expected), pos);
            }
            Rvalue::Binop(op, a, b) => {
                if op.is_checked_arith() {
                    if !expected.is_integer() {
                        self.diags.push(diag(
                            DiagCode::TypeMismatch,
                            pos,
                            format!("arithmetic result assigned to `{expected}`"),
                        ));
                        return;
                    }
                    self.check_operand(a, Some(&expected.clone()), pos);
                    self.check_operand(b, Some(&expected.clone()), pos);
                } else {
                    // Comparison: operand types must agree; the side that
                    // can be typed without context goes first.
                    self.expect_ty(&Ty::Bool, Some(expected), pos);
                    let first_is_free =
                        matches!(a, Operand::ConstInt(IntConst { width: None, .. }));
                    if first_is_free {
                        if let Some(tb) = self.check_operand(b, None, pos) {
                            self.check_operand(a, Some(&tb), pos);
                        }
                    } else if let Some(ta) = self.check_operand(a, None, pos) {
                        self.check_operand(b, Some(&ta), pos);
                    }
                }
            }
        }
    }

    fn check_stmt(&mut self, s: &mut Statement) {
        match s {
            Statement::Nop | Statement::Return { .. } | Statement::Panic { .. } => {}
            Statement::Seq(a, b) => {
                self.check_stmt(a);
                self.check_stmt(b);
            }
            Statement::Assign { pos, place, rvalue } => {
                let pos = *pos;
                if let Some(dest_ty) = self.check_place(place, pos) {
                    self.check_rvalue(rvalue, &dest_ty, pos);
                }
            }
            Statement::Call { pos, dest, func, region_args, ty_args, args } => {
                let pos = *pos;
                let Some(sig) = self.sigs.fns.get(func.as_str()).cloned() else {
                    self.diags.push(diag(DiagCode::UnknownFn, pos, format!("`{func}`")));
                    return;
                };
                if !region_args.is_empty() && region_args.len() != sig.region_params.len() {
                    self.diags.push(diag(
                        DiagCode::CallArity,
                        pos,
                        format!(
                            "`{func}` has {} region parameters, got {}",
                            sig.region_params.len(),
                            region_args.len()
                        ),
                    ));
                }
                if ty_args.len() != sig.ty_params.len() {
                    self.diags.push(diag(
                        DiagCode::CallArity,
                        pos,
                        format!(
                            "`{func}` expects {} type arguments, got {}",
                            sig.ty_params.len(),
                            ty_args.len()
                        ),
                    ));
                    return;
                }
                for t in ty_args.iter() {
                    if t.contains_borrow() {
                        self.diags.push(diag(
                            DiagCode::BorrowInAdtArg,
                            pos,
                            format!("type argument `{t}` contains a borrow"),
                        ));
                    }
                    check_wf_ty(self.sigs, &self.fun.ty_params.clone(), t, pos, &mut self.diags);
                }
                if args.len() != sig.arg_tys.len() {
                    self.diags.push(diag(
                        DiagCode::CallArity,
                        pos,
                        format!("`{func}` expects {} arguments, got {}", sig.arg_tys.len(), args.len()),
                    ));
                    return;
                }
                for (a, t) in args.iter_mut().zip(sig.arg_tys.iter()) {
                    let inst = sig.instantiate(ty_args, t);
                    self.check_operand(a, Some(&inst), pos);
                }
                if let Some(dest_ty) = self.check_place(dest, pos) {
                    let ret = sig.instantiate(ty_args, &sig.ret_ty);
                    self.expect_ty(&ret, Some(&dest_ty), pos);
                }
            }
            Statement::IfThenElse { pos, cond, then_branch, else_branch } => {
                let pos = *pos;
                self.check_operand(cond, Some(&Ty::Bool), pos);
                self.check_stmt(then_branch);
                self.check_stmt(else_branch);
            }
            Statement::Match { pos, place, arms } => {
                let pos = *pos;
                if let Some(ty) = self.check_place(place, pos) {
                    let Ty::Adt(name, _) = &ty else {
                        self.diags.push(diag(
                            DiagCode::MatchNonAdt,
                            pos,
                            format!("match on value of type `{ty}`"),
                        ));
                        return;
                    };
                    let decl = self.sigs.types.get(name).cloned();
                    if let Some(decl) = decl {
                        let mut seen = BTreeSet::new();
                        for (ctor, _) in arms.iter() {
                            if decl.ctor(ctor).is_none() {
                                self.diags.push(diag(
                                    DiagCode::UnknownCtor,
                                    pos,
                                    format!("`{name}` has no constructor `{ctor}`"),
                                ));
                            } else if !seen.insert(ctor.clone()) {
                                self.diags.push(diag(
                                    DiagCode::DuplicateArm,
                                    pos,
                                    format!("constructor `{ctor}` matched twice"),
                                ));
                            }
                        }
                        for c in &decl.ctors {
                            if !seen.contains(&c.name) {
                                self.diags.push(diag(
                                    DiagCode::IncompleteMatch,
                                    pos,
                                    format!("missing arm for `{}`", c.name),
                                ));
                            }
                        }
                        // Canonicalize arm order to declaration order.
                        if seen.len() == arms.len() && seen.len() == decl.ctors.len() {
                            arms.sort_by_key(|(ctor, _)| {
                                decl.ctors.iter().position(|c| &c.name == ctor).unwrap_or(usize::MAX)
                            });
                        }
                    }
                }
                for (_, body) in arms.iter_mut() {
                    self.check_stmt(body);
                }
            }
            Statement::Free { pos, place } => {
                let pos = *pos;
                if let Some(ty) = self.check_place(place, pos) {
                    if !matches!(ty, Ty::Box(_)) {
                        self.diags.push(diag(
                            DiagCode::FreeNonBox,
                            pos,
                            format!("free of non-box type `{ty}`"),
                        ));
                    }
                }
            }
        }
    }
}

/// Types that can never be copied, regardless of instantiation.
fn ty_definitely_noncopy(t: &Ty) -> bool {
    match t {
        Ty::MutBorrow(..) | Ty::Box(_) => true,
        Ty::Tuple(ts) => ts.iter().any(ty_definitely_noncopy),
        _ => false,
    }
}

fn all_paths_exit(s: &Statement) -> bool {
    match s {
        Statement::Return { .. } | Statement::Panic { .. } => true,
        Statement::Seq(a, b) => all_paths_exit(a) || all_paths_exit(b),
        Statement::IfThenElse { then_branch, else_branch, .. } => {
            all_paths_exit(then_branch) && all_paths_exit(else_branch)
        }
        Statement::Match { arms, .. } => {
            !arms.is_empty() && arms.iter().all(|(_, s)| all_paths_exit(s))
        }
        _ => false,
    }
}

fn check_fn(sigs: &Sigs, f: &mut FnDecl, diags: &mut Vec<Diagnostic>) {
    // Distinct variable names.
    let mut names = BTreeSet::new();
    for (n, _) in f.args.iter().chain(f.locals.iter()).chain(std::iter::once(&f.ret)) {
        if !names.insert(n.clone()) {
            diags.push(diag(DiagCode::DuplicateVar, f.pos, format!("`{n}` in `{}`", f.name)));
        }
    }
    // Signature restrictions.
    for (_, t) in &f.args {
        check_sig_ty(sigs, f, t, false, diags);
        check_wf_ty(sigs, &f.ty_params, t, f.pos, diags);
    }
    check_sig_ty(sigs, f, &f.ret.1, false, diags);
    check_wf_ty(sigs, &f.ty_params, &f.ret.1, f.pos, diags);
    for (_, t) in &f.locals {
        check_wf_ty(sigs, &f.ty_params, t, f.pos, diags);
    }

    let Some(mut body) = f.body.take() else { return };
    let mut ctx = FnCtx { sigs, fun: f.clone(), diags: Vec::new() };
    ctx.fun.body = None;
    ctx.check_stmt(&mut body);
    diags.append(&mut ctx.diags);
    if diags.is_empty() && !all_paths_exit(&body) {
        diags.push(diag(
            DiagCode::MissingReturn,
            f.pos,
            format!("`{}` has a path that falls off the end of the body", f.name),
        ));
    }
    f.body = Some(body);
}

/// Strongly-connected components of the call graph, dependencies first.
fn fn_sccs(p: &LlbcProgram) -> Vec<Vec<String>> {
    let names: Vec<&str> = p.fn_decls.iter().map(|f| f.name.as_str()).collect();
    let index_of: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adj = vec![Vec::new(); names.len()];

    fn collect_calls(s: &Statement, out: &mut Vec<String>) {
        match s {
            Statement::Seq(a, b) => {
                collect_calls(a, out);
                collect_calls(b, out);
            }
            Statement::Call { func, .. } => out.push(func.clone()),
            Statement::IfThenElse { then_branch, else_branch, .. } => {
                collect_calls(then_branch, out);
                collect_calls(else_branch, out);
            }
            Statement::Match { arms, .. } => arms.iter().for_each(|(_, s)| collect_calls(s, out)),
            _ => {}
        }
    }
    for (i, f) in p.fn_decls.iter().enumerate() {
        if let Some(b) = &f.body {
            let mut calls = Vec::new();
            collect_calls(b, &mut calls);
            for c in calls {
                if let Some(&j) = index_of.get(c.as_str()) {
                    adj[i].push(j);
                }
            }
        }
    }
    tarjan(&adj).into_iter().map(|g| g.into_iter().map(|i| names[i].to_string()).collect()).collect()
}

fn type_sccs(p: &LlbcProgram) -> Vec<Vec<String>> {
    let names: Vec<&str> = p.type_decls.iter().map(|t| t.name.as_str()).collect();
    let index_of: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adj = vec![Vec::new(); names.len()];
    fn refs(t: &Ty, out: &mut Vec<String>) {
        match t {
            Ty::Adt(n, args) => {
                out.push(n.clone());
                args.iter().for_each(|a| refs(a, out));
            }
            Ty::Tuple(ts) => ts.iter().for_each(|t| refs(t, out)),
            Ty::Box(t) | Ty::MutBorrow(_, t) | Ty::SharedBorrow(_, t) => refs(t, out),
            _ => {}
        }
    }
    for (i, t) in p.type_decls.iter().enumerate() {
        let mut rs = Vec::new();
        for c in &t.ctors {
            for f in &c.fields {
                refs(&f.ty, &mut rs);
            }
        }
        for r in rs {
            if let Some(&j) = index_of.get(r.as_str()) {
                adj[i].push(j);
            }
        }
    }
    tarjan(&adj).into_iter().map(|g| g.into_iter().map(|i| names[i].to_string()).collect()).collect()
}

/// Tarjan's SCC algorithm; components are emitted dependencies-first.
fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct St<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<u32>>,
        low: Vec<u32>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: u32,
        out: Vec<Vec<usize>>,
    }
    fn visit(st: &mut St, v: usize) {
        st.index[v] = Some(st.next);
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for &w in &st.adj[v].to_vec() {
            if st.index[w].is_none() {
                visit(st, w);
                st.low[v] = st.low[v].min(st.low[w]);
            } else if st.on_stack[w] {
                st.low[v] = st.low[v].min(st.index[w].unwrap());
            }
        }
        if Some(st.low[v]) == st.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = st.stack.pop().unwrap();
                st.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            st.out.push(comp);
        }
    }
    let n = adj.len();
    let mut st = St {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(&mut st, v);
        }
    }
    st.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn validated(src: &str) -> (LlbcProgram, Vec<Diagnostic>) {
        let mut p = parse_program(src).unwrap();
        let diags = validate(&mut p);
        (p, diags)
    }

    const CHOOSE: &str = "
        fn choose<'a, T>(b: bool, x: &'a mut T, y: &'a mut T) -> (r: &'a mut T) {
            if copy b { r = move x; return; } else { r = move y; return; }
        }";

    #[test]
    fn well_formed_choose_is_clean() {
        let (_, diags) = validated(CHOOSE);
        assert_eq!(diags, vec![]);
    }

    #[test]
    fn nested_borrow_in_signature_rejected() {
        let (_, diags) = validated(
            "fn f<'a, 'b>(x: &'a mut &'b mut i32) { return; }",
        );
        assert!(diags.iter().any(|d| d.code == DiagCode::NestedBorrowSig), "{diags:?}");
    }

    #[test]
    fn incomplete_match_rejected() {
        let (_, diags) = validated(
            "enum List<T> { Cons(T, Box<List<T>>), Nil }
             fn f<'a>(l: &'a List<u32>) -> (r: u32) {
                 match *(l) { Cons => { r = 0u32; return; } }
             }",
        );
        assert!(diags.iter().any(|d| d.code == DiagCode::IncompleteMatch), "{diags:?}");
    }

    #[test]
    fn derefs_are_resolved_by_type() {
        let (p, diags) = validated(
            "fn f<'a>(x: &'a mut Box<u32>) -> (r: u32) {
                 r = copy *(*(x));
                 return;
             }",
        );
        assert_eq!(diags, vec![]);
        let Some(Statement::Seq(assign, _)) = &p.fn_decls[0].body else { panic!() };
        let Statement::Assign { rvalue: Rvalue::Use(Operand::Copy(pl)), .. } = assign.as_ref()
        else {
            panic!()
        };
        assert_eq!(pl.path, vec![Proj::DerefMut, Proj::DerefBox]);
    }

    #[test]
    fn int_widths_resolved_from_context() {
        let (p, diags) = validated("fn f() -> (r: u32) { r = 1 + 2; return; }");
        assert_eq!(diags, vec![]);
        let Some(Statement::Seq(assign, _)) = &p.fn_decls[0].body else { panic!() };
        let Statement::Assign { rvalue: Rvalue::Binop(_, a, _), .. } = assign.as_ref() else {
            panic!()
        };
        let Operand::ConstInt(c) = a else { panic!() };
        assert_eq!(c.width, Some(IntWidth::U32));
    }

    #[test]
    fn int_out_of_range_rejected() {
        let (_, diags) = validated("fn f() -> (r: u32) { r = -1; return; }");
        assert!(diags.iter().any(|d| d.code == DiagCode::IntOutOfRange), "{diags:?}");
    }

    #[test]
    fn borrow_in_adt_arg_rejected() {
        let (_, diags) = validated(
            "enum Opt<T> { Some(T), None }
             fn f<'a>(x: &'a mut u32) -> (r: ()) {
                 let o: Opt<&'_ mut u32>;
                 o = None;
                 return;
             }",
        );
        assert!(diags.iter().any(|d| d.code == DiagCode::BorrowInAdtArg), "{diags:?}");
    }

    #[test]
    fn borrow_in_typedecl_rejected() {
        let (_, diags) = validated("enum Holder { Hold(x: &'_ mut u32) }");
        assert!(diags.iter().any(|d| d.code == DiagCode::BorrowInTypedecl), "{diags:?}");
    }

    #[test]
    fn unguarded_recursion_rejected() {
        let (_, diags) = validated("enum Inf { Mk(Inf) }");
        assert!(diags.iter().any(|d| d.code == DiagCode::UnguardedRecursion), "{diags:?}");
        let (_, diags2) = validated("enum Fine { Mk(Box<Fine>), Done }");
        assert!(diags2.is_empty(), "{diags2:?}");
    }

    #[test]
    fn missing_return_rejected() {
        let (_, diags) = validated("fn f() { nop; }");
        assert!(diags.iter().any(|d| d.code == DiagCode::MissingReturn), "{diags:?}");
    }

    #[test]
    fn recursion_groups_are_computed() {
        let (p, diags) = validated(
            "fn a() { b(); return; }
             fn b() { a(); return; }
             fn leaf() { return; }
             fn top() { leaf(); a(); return; }",
        );
        assert_eq!(diags, vec![]);
        // a+b in one group; leaf before top.
        let groups = &p.fn_groups;
        let ab = groups.iter().find(|g| g.len() == 2).expect("mutual group");
        assert!(ab.contains(&"a".to_string()) && ab.contains(&"b".to_string()));
        let pos = |n: &str| groups.iter().position(|g| g.iter().any(|s| s == n)).unwrap();
        assert!(pos("leaf") < pos("top"));
        assert!(pos("a") < pos("top"));
    }

    #[test]
    fn diagnostics_are_order_stable() {
        let src = "fn f() { x = 1; y = 2; }";
        let (_, d1) = validated(src);
        let (_, d2) = validated(src);
        assert_eq!(d1, d2);
        assert!(!d1.is_empty());
    }

    #[test]
    fn match_arms_canonicalized_to_decl_order() {
        let (p, diags) = validated(
            "enum AB { A, B }
             fn f(x: AB) {
                 match x { B => { return; } A => { return; } }
             }",
        );
        assert_eq!(diags, vec![]);
        let Some(Statement::Match { arms, .. }) = &p.fn_decls[0].body else { panic!() };
        assert_eq!(arms[0].0, "A");
        assert_eq!(arms[1].0, "B");
    }
}
