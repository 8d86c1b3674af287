//! Lazy environment reorganization: ending loans, activating reserved
//! borrows, and clearing loan obstructions demanded by rule premises.
//!
//! The engine is shared between the concrete and symbolic interpreters; a
//! `Machine` supplies the mode-specific pieces (region abstractions and
//! symbolic refinement).

use crate::ast::BinOp;
use crate::env::{path_not_borrowed, Env, EvalError, Loc, MemStuck, Need, VPath, VStep};
use crate::value::{AbsId, LoanId, SymId, Value};

/// Result of a checked arithmetic step.
pub enum BinopOut {
    Val(Value),
    /// Out-of-range result: the program panics.
    Overflow,
}

/// Mode-specific hooks used by the shared evaluation machinery.
pub trait Machine {
    /// Terminates the region abstraction, reintroducing retained borrows
    /// under ghost bindings. Only the symbolic mode supports this.
    fn end_abstraction(&mut self, env: &mut Env, abs: AbsId) -> Result<(), EvalError>;
    /// Structurally refines a symbolic value (symbolic mode only).
    fn expand(&mut self, env: &mut Env, sym: SymId) -> Result<(), EvalError>;
    /// Resolves an output projector against its loan projector.
    fn unfold(&mut self, env: &mut Env, sym: SymId) -> Result<(), EvalError>;
    /// Binary operation on evaluated operands.
    fn binop(&mut self, env: &mut Env, op: BinOp, lhs: Value, rhs: Value)
        -> Result<BinopOut, EvalError>;
    /// Boolean negation.
    fn not(&mut self, env: &mut Env, v: Value) -> Result<Value, EvalError>;
}

const REORG_FUEL: u32 = 100_000;

pub fn resolve_need(env: &mut Env, need: &Need, m: &mut dyn Machine) -> Result<(), EvalError> {
    match need {
        Need::EndLoan(l) => end_loan(env, *l, m),
        Need::Activate(l) => activate_reserved(env, *l, m),
        Need::Expand(s) => m.expand(env, *s),
        Need::Unfold(s) => m.unfold(env, *s),
    }
}

/// Runs a memory operation, resolving reorganization demands until it
/// succeeds or fails hard.
pub fn with_reorg<T>(
    env: &mut Env,
    m: &mut dyn Machine,
    f: impl Fn(&Env) -> Result<T, MemStuck>,
) -> Result<T, EvalError> {
    for _ in 0..REORG_FUEL {
        match f(env) {
            Ok(v) => return Ok(v),
            Err(MemStuck::Need(n)) => resolve_need(env, &n, m)?,
            Err(MemStuck::Err(e)) => return Err(e),
        }
    }
    Err(EvalError::StuckReorg("reorganization did not converge".into()))
}

/// The innermost enclosing obstruction that must be removed before the
/// value at `path` may be taken out of its context.
fn enclosing_obstruction(env: &Env, loc: Loc, path: &VPath) -> Option<Need> {
    let mut v = env.root(loc);
    for step in path {
        match (v, step) {
            (Value::MutBorrow(l, inner), VStep::MutBorrowInner) => {
                let _ = inner;
                return Some(Need::EndLoan(*l));
            }
            (Value::SharedLoan(ids, _), VStep::SharedLoanInner) => {
                return ids.iter().next().map(|l| Need::EndLoan(*l));
            }
            _ => {}
        }
        v = match (v, step) {
            (Value::MutBorrow(_, inner), VStep::MutBorrowInner) => inner,
            (Value::SharedLoan(_, inner), VStep::SharedLoanInner) => inner,
            (Value::Boxed(inner), VStep::BoxInner) => inner,
            (Value::ProjIn { value, .. }, VStep::ProjInInner) => value,
            (Value::Tuple(vs), VStep::TupleElem(i)) => &vs[*i],
            (Value::Ctor { fields, .. }, VStep::CtorField(i)) => &fields[*i],
            _ => return None,
        };
    }
    None
}

/// Loans inside a value, shallowest first, shared before mutable at equal
/// depth. Ending them in this order drains a value of loans.
fn loans_by_depth(v: &Value) -> Vec<LoanId> {
    fn go(v: &Value, depth: u32, out: &mut Vec<(u32, u8, LoanId)>) {
        match v {
            Value::MutLoan(l) => out.push((depth, 1, *l)),
            Value::SharedLoan(ids, inner) => {
                out.extend(ids.iter().map(|l| (depth, 0, *l)));
                go(inner, depth + 1, out);
            }
            Value::MutBorrow(_, inner) | Value::Boxed(inner) => go(inner, depth + 1, out),
            Value::Ctor { fields, .. } => fields.iter().for_each(|f| go(f, depth + 1, out)),
            Value::Tuple(vs) => vs.iter().for_each(|f| go(f, depth + 1, out)),
            Value::ProjIn { value, .. } => go(value, depth + 1, out),
            _ => {}
        }
    }
    let mut tagged = Vec::new();
    go(v, 0, &mut tagged);
    tagged.sort();
    tagged.into_iter().map(|(_, _, l)| l).collect()
}

/// Ends the loan `l`: terminates its borrow (returning the borrowed value
/// to the lender for mutable borrows, shrinking the loan-set for shared
/// ones). Recursively clears whatever blocks the termination.
pub fn end_loan(env: &mut Env, l: LoanId, m: &mut dyn Machine) -> Result<(), EvalError> {
    for _ in 0..REORG_FUEL {
        let Some((loc, path)) = env.find_borrow(l) else {
            if env.find_loan(l).is_none() {
                return Ok(()); // already ended
            }
            return Err(EvalError::StuckReorg(format!(
                "loan {l} has no borrow available in the environment"
            )));
        };
        // A borrow held by a region abstraction can only be returned by
        // ending the whole abstraction.
        if let Some(abs) = env.loc_in_abstraction(loc) {
            m.end_abstraction(env, abs)?;
            continue;
        }
        // The borrow's own context must not be borrowed.
        if !path_not_borrowed(&path) {
            let Some(need) = enclosing_obstruction(env, loc, &path) else {
                return Err(EvalError::StuckReorg(format!("cannot free context of borrow {l}")));
            };
            resolve_need(env, &need, m)?;
            continue;
        }
        match env.value_at(env.root(loc), &path).clone() {
            Value::MutBorrow(_, inner) => {
                if inner.contains_loan() {
                    let blocking = loans_by_depth(&inner);
                    let Some(first) = blocking.first() else {
                        return Err(EvalError::Internal("loan scan disagreed".into()));
                    };
                    end_loan(env, *first, m)?;
                    continue;
                }
                let Some((lloc, lpath)) = env.find_loan(l) else {
                    return Err(EvalError::StuckReorg(format!("no loan site for {l}")));
                };
                *env.value_at_mut(loc, &path) = Value::Bottom;
                *env.value_at_mut(lloc, &lpath) = (*inner).clone();
                if let Some(abs_id) = env.loc_in_abstraction(lloc) {
                    // The value flows back into a region abstraction.
                    if let Some(a) = env.abstraction_mut(abs_id) {
                        a.given_back.push((l, (*inner).clone()));
                    }
                }
                return Ok(());
            }
            Value::SharedBorrow(_) | Value::ReservedBorrow(_) => {
                let Some((lloc, lpath)) = env.find_loan(l) else {
                    return Err(EvalError::StuckReorg(format!("no loan site for {l}")));
                };
                *env.value_at_mut(loc, &path) = Value::Bottom;
                let slot = env.value_at_mut(lloc, &lpath);
                let Value::SharedLoan(ids, inner) = slot else {
                    return Err(EvalError::Internal(format!("loan site for {l} is not shared")));
                };
                ids.remove(&l);
                if ids.is_empty() {
                    let inner = std::mem::replace(&mut **inner, Value::Bottom);
                    *slot = inner;
                }
                return Ok(());
            }
            other => {
                return Err(EvalError::Internal(format!("find_borrow returned {other}")));
            }
        }
    }
    Err(EvalError::StuckReorg(format!("ending loan {l} did not converge")))
}

/// Strengthens a reserved borrow into a mutable one. Requires ending every
/// other borrow in the loan-set and clearing loans from the shared value.
pub fn activate_reserved(env: &mut Env, l: LoanId, m: &mut dyn Machine) -> Result<(), EvalError> {
    for _ in 0..REORG_FUEL {
        let Some((loc, path)) = env.find_borrow(l) else {
            return Err(EvalError::StuckReorg(format!("reserved borrow {l} not found")));
        };
        match env.value_at(env.root(loc), &path) {
            Value::MutBorrow(..) => return Ok(()), // already active
            Value::ReservedBorrow(_) => {}
            other => {
                return Err(EvalError::StuckReorg(format!(
                    "borrow {l} cannot be activated: {other}"
                )))
            }
        }
        if env.loc_in_abstraction(loc).is_some() {
            return Err(EvalError::StuckReorg(format!(
                "reserved borrow {l} is held by a region abstraction"
            )));
        }
        if !path_not_borrowed(&path) {
            let Some(need) = enclosing_obstruction(env, loc, &path) else {
                return Err(EvalError::StuckReorg(format!("cannot free context of borrow {l}")));
            };
            resolve_need(env, &need, m)?;
            continue;
        }
        let Some((lloc, lpath)) = env.find_loan(l) else {
            return Err(EvalError::StuckReorg(format!("no loan site for {l}")));
        };
        let Value::SharedLoan(ids, inner) = env.value_at(env.root(lloc), &lpath).clone() else {
            return Err(EvalError::Internal(format!("loan site for {l} is not shared")));
        };
        // All sibling borrows must end before the upgrade.
        if let Some(other) = ids.iter().find(|id| **id != l) {
            end_loan(env, *other, m)?;
            continue;
        }
        if inner.contains_loan() {
            let blocking = loans_by_depth(&inner);
            end_loan(env, blocking[0], m)?;
            continue;
        }
        *env.value_at_mut(lloc, &lpath) = Value::MutLoan(l);
        *env.value_at_mut(loc, &path) = Value::MutBorrow(l, inner);
        return Ok(());
    }
    Err(EvalError::StuckReorg(format!("activating {l} did not converge")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Ty;
    use crate::env::{Binding, Entry, FrameId, VarKey};
    use crate::value::Scalar;

    struct NoAbs;

    impl Machine for NoAbs {
        fn end_abstraction(&mut self, _: &mut Env, abs: AbsId) -> Result<(), EvalError> {
            Err(EvalError::StuckReorg(format!("abstraction {abs} cannot be ended here")))
        }
        fn expand(&mut self, _: &mut Env, s: SymId) -> Result<(), EvalError> {
            Err(EvalError::Internal(format!("expand {s} unsupported")))
        }
        fn unfold(&mut self, _: &mut Env, s: SymId) -> Result<(), EvalError> {
            Err(EvalError::Internal(format!("unfold {s} unsupported")))
        }
        fn binop(&mut self, _: &mut Env, _: BinOp, _: Value, _: Value) -> Result<BinopOut, EvalError> {
            unreachable!()
        }
        fn not(&mut self, _: &mut Env, _: Value) -> Result<Value, EvalError> {
            unreachable!()
        }
    }

    fn bind(env: &mut Env, name: &str, v: Value) {
        env.entries.push(Entry::Binding(Binding {
            key: VarKey { frame: FrameId(0), name: name.into() },
            value: v,
            ty: Some(Ty::U32),
            ghost: false,
        }));
    }

    fn num(n: i32) -> Value {
        Value::Scalar(Scalar::I32(n))
    }

    #[test]
    fn end_mut_restores_value_to_lender() {
        let mut env = Env::new();
        let l = env.fresh_loan();
        bind(&mut env, "x", Value::MutLoan(l));
        bind(&mut env, "px", Value::MutBorrow(l, Box::new(num(0))));
        end_loan(&mut env, l, &mut NoAbs).unwrap();
        assert_eq!(env.binding("x").unwrap().value, num(0));
        assert_eq!(env.binding("px").unwrap().value, Value::Bottom);
    }

    #[test]
    fn end_shared_shrinks_loan_set() {
        let mut env = Env::new();
        let l1 = env.fresh_loan();
        let l2 = env.fresh_loan();
        bind(&mut env, "x", Value::SharedLoan([l1, l2].into(), Box::new(num(5))));
        bind(&mut env, "p1", Value::SharedBorrow(l1));
        bind(&mut env, "p2", Value::SharedBorrow(l2));
        end_loan(&mut env, l1, &mut NoAbs).unwrap();
        assert_eq!(
            env.binding("x").unwrap().value,
            Value::SharedLoan([l2].into(), Box::new(num(5)))
        );
        end_loan(&mut env, l2, &mut NoAbs).unwrap();
        assert_eq!(env.binding("x").unwrap().value, num(5));
    }

    #[test]
    fn end_mut_first_clears_inner_loans() {
        // px_old -> borrow^m l1 (loan^m l2), px -> borrow^m l2 (0), x -> loan^m l1
        // Ending l1 must first end l2, mirroring the twisted-reborrow flow.
        let mut env = Env::new();
        let l1 = env.fresh_loan();
        let l2 = env.fresh_loan();
        bind(&mut env, "x", Value::MutLoan(l1));
        bind(&mut env, "px_old", Value::MutBorrow(l1, Box::new(Value::MutLoan(l2))));
        bind(&mut env, "px", Value::MutBorrow(l2, Box::new(num(0))));
        end_loan(&mut env, l1, &mut NoAbs).unwrap();
        assert_eq!(env.binding("x").unwrap().value, num(0));
        assert_eq!(env.binding("px").unwrap().value, Value::Bottom);
        assert_eq!(env.binding("px_old").unwrap().value, Value::Bottom);
    }

    #[test]
    fn activation_ends_sibling_shares_and_upgrades() {
        let mut env = Env::new();
        let lr = env.fresh_loan();
        let ls = env.fresh_loan();
        bind(&mut env, "x", Value::SharedLoan([lr, ls].into(), Box::new(num(7))));
        bind(&mut env, "r", Value::ReservedBorrow(lr));
        bind(&mut env, "s", Value::SharedBorrow(ls));
        activate_reserved(&mut env, lr, &mut NoAbs).unwrap();
        assert_eq!(env.binding("x").unwrap().value, Value::MutLoan(lr));
        assert_eq!(env.binding("r").unwrap().value, Value::MutBorrow(lr, Box::new(num(7))));
        assert_eq!(env.binding("s").unwrap().value, Value::Bottom);
    }

    #[test]
    fn ending_borrow_under_shared_loan_frees_enclosure_first() {
        // y -> loan^s {l2} (borrow^m l1 (3)), s -> borrow^s l2, x -> loan^m l1
        let mut env = Env::new();
        let l1 = env.fresh_loan();
        let l2 = env.fresh_loan();
        bind(&mut env, "x", Value::MutLoan(l1));
        bind(
            &mut env,
            "y",
            Value::SharedLoan([l2].into(), Box::new(Value::MutBorrow(l1, Box::new(num(3))))),
        );
        bind(&mut env, "s", Value::SharedBorrow(l2));
        end_loan(&mut env, l1, &mut NoAbs).unwrap();
        assert_eq!(env.binding("x").unwrap().value, num(3));
        assert_eq!(env.binding("s").unwrap().value, Value::Bottom);
        assert_eq!(env.binding("y").unwrap().value, Value::Bottom);
    }
}
