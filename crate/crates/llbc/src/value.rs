//! Runtime values for the concrete and symbolic semantics.

use std::collections::BTreeSet;
use std::fmt;

use crate::ast::{Region, Ty};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }
    };
}

id_type!(LoanId, "l");
id_type!(SymId, "s");
id_type!(AbsId, "a");
id_type!(CallId, "c");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    Bool(bool),
    I32(i32),
    U32(u32),
}

impl Scalar {
    pub fn ty(&self) -> Ty {
        match self {
            Scalar::Bool(_) => Ty::Bool,
            Scalar::I32(_) => Ty::I32,
            Scalar::U32(_) => Ty::U32,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::I32(n) => write!(f, "{n}"),
            Scalar::U32(n) => write!(f, "{n}"),
        }
    }
}

/// A typed unknown introduced by arguments, calls and expansions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymValue {
    pub id: SymId,
    pub ty: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Scalar(Scalar),
    /// Exclusive borrow carrying the borrowed value.
    MutBorrow(LoanId, Box<Value>),
    /// Read-only borrow; the value stays with the lender.
    SharedBorrow(LoanId),
    /// Two-phase borrow awaiting activation.
    ReservedBorrow(LoanId),
    /// Marker left at the lender's site for a mutable borrow.
    MutLoan(LoanId),
    /// Marker plus retained value for any number of shared borrows.
    SharedLoan(BTreeSet<LoanId>, Box<Value>),
    /// Moved-out or otherwise unusable.
    Bottom,
    Ctor { adt: String, ctor: String, fields: Vec<Value> },
    Tuple(Vec<Value>),
    Boxed(Box<Value>),
    // Symbolic execution only:
    Symbolic(SymValue),
    /// Consumed call argument awaiting projection onto a region.
    ProjIn { value: Box<Value>, ty: Ty, region: Region },
    /// Callee-side view of a value produced for a region.
    ProjLoans { sym: SymValue, region: Region },
    /// Caller-side view of a returned value, paired with `ProjLoans`.
    ProjOut { sym: SymValue },
    /// Slot in a region abstraction that is irrelevant to its region.
    Ignored,
}

impl Value {
    pub fn unit() -> Value {
        Value::Tuple(Vec::new())
    }

    pub fn bool(b: bool) -> Value {
        Value::Scalar(Scalar::Bool(b))
    }

    pub fn sym(s: SymValue) -> Value {
        Value::Symbolic(s)
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Scalar(Scalar::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    fn walk(&self, f: &mut dyn FnMut(&Value) -> bool) {
        if !f(self) {
            return;
        }
        match self {
            Value::MutBorrow(_, v) | Value::SharedLoan(_, v) | Value::Boxed(v) => v.walk(f),
            Value::Ctor { fields, .. } => fields.iter().for_each(|v| v.walk(f)),
            Value::Tuple(vs) => vs.iter().for_each(|v| v.walk(f)),
            Value::ProjIn { value, .. } => value.walk(f),
            _ => {}
        }
    }

    fn any(&self, pred: &dyn Fn(&Value) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |v| {
            if pred(v) {
                found = true;
            }
            !found
        });
        found
    }

    pub fn contains_bottom(&self) -> bool {
        self.any(&|v| matches!(v, Value::Bottom))
    }

    pub fn contains_loan(&self) -> bool {
        self.any(&|v| matches!(v, Value::MutLoan(_) | Value::SharedLoan(..)))
    }

    pub fn contains_mut_loan(&self) -> bool {
        self.any(&|v| matches!(v, Value::MutLoan(_)))
    }

    pub fn contains_reserved(&self) -> bool {
        self.any(&|v| matches!(v, Value::ReservedBorrow(_)))
    }

    pub fn contains_mut_borrow(&self) -> bool {
        self.any(&|v| matches!(v, Value::MutBorrow(..)))
    }

    pub fn contains_any_borrow(&self) -> bool {
        self.any(&|v| {
            matches!(v, Value::MutBorrow(..) | Value::SharedBorrow(_) | Value::ReservedBorrow(_))
        })
    }

    pub fn contains_projector(&self) -> bool {
        self.any(&|v| {
            matches!(v, Value::ProjIn { .. } | Value::ProjLoans { .. } | Value::ProjOut { .. })
        })
    }

    pub fn contains_symbolic_like(&self) -> bool {
        self.any(&|v| {
            matches!(
                v,
                Value::Symbolic(_)
                    | Value::ProjIn { .. }
                    | Value::ProjLoans { .. }
                    | Value::ProjOut { .. }
                    | Value::Ignored
            )
        })
    }

    /// Loan ids reachable anywhere inside, including beneath borrows.
    pub fn all_loan_ids(&self) -> Vec<LoanId> {
        let mut out = Vec::new();
        self.walk(&mut |v| {
            match v {
                Value::MutLoan(l) => out.push(*l),
                Value::SharedLoan(ids, _) => out.extend(ids.iter().copied()),
                _ => {}
            }
            true
        });
        out
    }

    /// A loan is "outer" when reachable without passing through a borrow.
    /// Overwriting a value with outer loans would discard lender markers.
    pub fn has_no_outer_loans(&self) -> bool {
        match self {
            Value::MutLoan(_) | Value::SharedLoan(..) => false,
            Value::MutBorrow(..)
            | Value::SharedBorrow(_)
            | Value::ReservedBorrow(_)
            | Value::Scalar(_)
            | Value::Bottom
            | Value::Symbolic(_)
            | Value::ProjOut { .. }
            | Value::Ignored => true,
            Value::Ctor { fields, .. } => fields.iter().all(Value::has_no_outer_loans),
            Value::Tuple(vs) => vs.iter().all(Value::has_no_outer_loans),
            Value::Boxed(v) => v.has_no_outer_loans(),
            Value::ProjIn { .. } | Value::ProjLoans { .. } => false,
        }
    }

    /// Outer loan ids: reachable without passing through a borrow.
    pub fn outer_loan_ids(&self) -> Vec<LoanId> {
        fn go(v: &Value, out: &mut Vec<LoanId>) {
            match v {
                Value::MutLoan(l) => out.push(*l),
                Value::SharedLoan(ids, _) => out.extend(ids.iter().copied()),
                Value::Ctor { fields, .. } => fields.iter().for_each(|v| go(v, out)),
                Value::Tuple(vs) => vs.iter().for_each(|v| go(v, out)),
                Value::Boxed(v) => go(v, out),
                _ => {}
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    /// Replaces every occurrence of symbolic value `id` with `with`.
    pub fn subst_sym(&self, id: SymId, with: &Value) -> Value {
        match self {
            Value::Symbolic(s) if s.id == id => with.clone(),
            Value::MutBorrow(l, v) => Value::MutBorrow(*l, Box::new(v.subst_sym(id, with))),
            Value::SharedLoan(ids, v) => {
                Value::SharedLoan(ids.clone(), Box::new(v.subst_sym(id, with)))
            }
            Value::Boxed(v) => Value::Boxed(Box::new(v.subst_sym(id, with))),
            Value::Ctor { adt, ctor, fields } => Value::Ctor {
                adt: adt.clone(),
                ctor: ctor.clone(),
                fields: fields.iter().map(|v| v.subst_sym(id, with)).collect(),
            },
            Value::Tuple(vs) => Value::Tuple(vs.iter().map(|v| v.subst_sym(id, with)).collect()),
            Value::ProjIn { value, ty, region } => Value::ProjIn {
                value: Box::new(value.subst_sym(id, with)),
                ty: ty.clone(),
                region: region.clone(),
            },
            other => other.clone(),
        }
    }

    pub fn sym_ids(&self) -> Vec<SymId> {
        let mut out = Vec::new();
        self.walk(&mut |v| {
            match v {
                Value::Symbolic(s) => out.push(s.id),
                Value::ProjLoans { sym, .. } | Value::ProjOut { sym } => out.push(sym.id),
                _ => {}
            }
            true
        });
        out
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(s) => write!(f, "{s}"),
            Value::MutBorrow(l, v) => write!(f, "borrow^m {l} ({v})"),
            Value::SharedBorrow(l) => write!(f, "borrow^s {l}"),
            Value::ReservedBorrow(l) => write!(f, "borrow^r {l}"),
            Value::MutLoan(l) => write!(f, "loan^m {l}"),
            Value::SharedLoan(ids, v) => {
                write!(f, "loan^s {{")?;
                for (i, l) in ids.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "}} ({v})")
            }
            Value::Bottom => write!(f, "bot"),
            Value::Ctor { ctor, fields, .. } => {
                write!(f, "{ctor}")?;
                if !fields.is_empty() {
                    write!(f, "(")?;
                    for (i, v) in fields.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{v}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            Value::Tuple(vs) => {
                write!(f, "(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            Value::Boxed(v) => write!(f, "box({v})"),
            Value::Symbolic(s) => write!(f, "({} : {})", s.id, s.ty),
            Value::ProjIn { value, ty, region } => {
                write!(f, "proj_in[{region}] ({value} : {ty})")
            }
            Value::ProjLoans { sym, region } => {
                write!(f, "proj_loans[{region}] ({} : {})", sym.id, sym.ty)
            }
            Value::ProjOut { sym } => write!(f, "proj_out ({} : {})", sym.id, sym.ty),
            Value::Ignored => write!(f, "_"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(n: u32) -> LoanId {
        LoanId(n)
    }

    #[test]
    fn outer_loans_stop_at_borrows() {
        // A mutable loan alone is an outer loan.
        assert!(!Value::MutLoan(l(0)).has_no_outer_loans());
        // A loan beneath a borrow is not outer.
        let v = Value::MutBorrow(l(0), Box::new(Value::MutLoan(l(1))));
        assert!(v.has_no_outer_loans());
        // A shared loan inside a constructor field is outer.
        let v = Value::Ctor {
            adt: "List".into(),
            ctor: "Cons".into(),
            fields: vec![
                Value::Scalar(Scalar::I32(0)),
                Value::SharedLoan([l(2)].into(), Box::new(Value::Scalar(Scalar::I32(1)))),
            ],
        };
        assert!(!v.has_no_outer_loans());
        assert_eq!(v.outer_loan_ids(), vec![l(2)]);
    }

    #[test]
    fn subst_replaces_all_occurrences() {
        let s = SymValue { id: SymId(3), ty: Ty::U32 };
        let v = Value::Tuple(vec![
            Value::Symbolic(s.clone()),
            Value::MutBorrow(l(0), Box::new(Value::Symbolic(s))),
        ]);
        let out = v.subst_sym(SymId(3), &Value::Scalar(Scalar::U32(7)));
        assert!(!out.any(&|v| matches!(v, Value::Symbolic(_))));
        assert_eq!(out.all_loan_ids(), vec![]);
    }

    #[test]
    fn display_matches_dump_style() {
        let v = Value::MutBorrow(l(0), Box::new(Value::Scalar(Scalar::I32(0))));
        assert_eq!(v.to_string(), "borrow^m l0 (0)");
        let sl = Value::SharedLoan(
            [l(1), l(2)].into(),
            Box::new(Value::Tuple(vec![Value::Scalar(Scalar::I32(0)), Value::Scalar(Scalar::I32(1))])),
        );
        assert_eq!(sl.to_string(), "loan^s {l1,l2} ((0, 1))");
    }
}
