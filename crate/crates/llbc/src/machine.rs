//! Mode-independent evaluation: operands, rvalues and the assignment
//! discipline. The concrete and symbolic drivers both build on this.

use crate::ast::{Operand, Place, Rvalue};
use crate::env::{ghost_write, read_place, write_place, Env, EvalError};
use crate::reorg::{end_loan, with_reorg, BinopOut, Machine};
use crate::value::{Scalar, Value};

/// Reads a place, resolving reorganization demands.
pub fn read_resolved(env: &mut Env, place: &Place, m: &mut dyn Machine) -> Result<Value, EvalError> {
    with_reorg(env, m, |e| read_place(e, place))
}

pub fn read_for_match_resolved(
    env: &mut Env,
    place: &Place,
    m: &mut dyn Machine,
) -> Result<Value, EvalError> {
    with_reorg(env, m, |e| crate::env::read_place_for_match(e, place))
}

fn first_loan(v: &Value) -> Option<crate::value::LoanId> {
    v.all_loan_ids().into_iter().next()
}

fn first_mut_loan(v: &Value) -> Option<crate::value::LoanId> {
    fn go(v: &Value) -> Option<crate::value::LoanId> {
        match v {
            Value::MutLoan(l) => Some(*l),
            Value::SharedLoan(_, inner) | Value::MutBorrow(_, inner) | Value::Boxed(inner) => {
                go(inner)
            }
            Value::Ctor { fields, .. } => fields.iter().find_map(go),
            Value::Tuple(vs) => vs.iter().find_map(go),
            Value::ProjIn { value, .. } => go(value),
            _ => None,
        }
    }
    go(v)
}

fn first_reserved(v: &Value) -> Option<crate::value::LoanId> {
    fn go(v: &Value) -> Option<crate::value::LoanId> {
        match v {
            Value::ReservedBorrow(l) => Some(*l),
            Value::SharedLoan(_, inner) | Value::MutBorrow(_, inner) | Value::Boxed(inner) => {
                go(inner)
            }
            Value::Ctor { fields, .. } => fields.iter().find_map(go),
            Value::Tuple(vs) => vs.iter().find_map(go),
            Value::ProjIn { value, .. } => go(value),
            _ => None,
        }
    }
    go(v)
}

/// Forces any projectors in the value to resolve, so operands never carry
/// unexpanded call results.
fn unfold_projectors(
    env: &mut Env,
    place: &Place,
    m: &mut dyn Machine,
) -> Result<Value, EvalError> {
    loop {
        let v = read_resolved(env, place, m)?;
        let Some(sym) = find_proj_out(&v) else { return Ok(v) };
        m.unfold(env, sym)?;
    }
}

fn find_proj_out(v: &Value) -> Option<crate::value::SymId> {
    match v {
        Value::ProjOut { sym } => Some(sym.id),
        Value::MutBorrow(_, inner) | Value::SharedLoan(_, inner) | Value::Boxed(inner) => {
            find_proj_out(inner)
        }
        Value::Ctor { fields, .. } => fields.iter().find_map(find_proj_out),
        Value::Tuple(vs) => vs.iter().find_map(find_proj_out),
        _ => None,
    }
}

/// Ownership transfer out of a place: the value must be whole, loan-free
/// and reservation-free, and the path may not pass through a borrow.
pub fn eval_move(env: &mut Env, place: &Place, m: &mut dyn Machine) -> Result<Value, EvalError> {
    if place.has_borrow_deref() {
        return Err(EvalError::MoveThroughDeref { place: place.to_string() });
    }
    let v = loop {
        let v = unfold_projectors(env, place, m)?;
        if let Some(l) = first_loan(&v) {
            end_loan(env, l, m).map_err(|e| match e {
                EvalError::StuckReorg(d) => {
                    EvalError::MoveLoaned { place: place.to_string(), detail: d }
                }
                other => other,
            })?;
            continue;
        }
        if let Some(l) = first_reserved(&v) {
            end_loan(env, l, m)?;
            continue;
        }
        break v;
    };
    if v.contains_bottom() {
        return Err(EvalError::MoveIncomplete { place: place.to_string() });
    }
    let env2 = with_reorg(env, m, |e| write_place(e, place, Value::Bottom))?;
    *env = env2;
    Ok(v)
}

/// Duplication of a place's value: shared borrows are re-minted, unique
/// ownership may not be duplicated.
pub fn eval_copy(env: &mut Env, place: &Place, m: &mut dyn Machine) -> Result<Value, EvalError> {
    let v = loop {
        let v = unfold_projectors(env, place, m)?;
        if let Some(l) = first_mut_loan(&v) {
            end_loan(env, l, m)?;
            continue;
        }
        break v;
    };
    if v.contains_bottom() {
        return Err(EvalError::CopyNonCopyable { detail: format!("unusable value at {place}") });
    }
    if v.contains_mut_borrow() || v.contains_reserved() {
        return Err(EvalError::CopyNonCopyable {
            detail: format!("uniquely-owned value at {place}"),
        });
    }
    let (out, env2) = crate::env::copy_value(env, &v)?;
    *env = env2;
    Ok(out)
}

pub fn eval_operand(env: &mut Env, op: &Operand, m: &mut dyn Machine) -> Result<Value, EvalError> {
    match op {
        Operand::Move(p) => eval_move(env, p, m),
        Operand::Copy(p) => eval_copy(env, p, m),
        Operand::ConstBool(b) => Ok(Value::bool(*b)),
        Operand::ConstInt(c) => {
            let s = match c.width {
                Some(crate::ast::IntWidth::I32) => Scalar::I32(c.value as i32),
                Some(crate::ast::IntWidth::U32) => Scalar::U32(c.value as u32),
                None => return Err(EvalError::Internal("unresolved integer width".into())),
            };
            Ok(Value::Scalar(s))
        }
        Operand::Ctor { adt, ctor, fields } => {
            let mut vs = Vec::with_capacity(fields.len());
            for f in fields {
                vs.push(eval_operand(env, f, m)?);
            }
            Ok(Value::Ctor { adt: adt.clone(), ctor: ctor.clone(), fields: vs })
        }
        Operand::BoxNew(inner) => Ok(Value::Boxed(Box::new(eval_operand(env, inner, m)?))),
        Operand::Tuple(ops) => {
            let mut vs = Vec::with_capacity(ops.len());
            for o in ops {
                vs.push(eval_operand(env, o, m)?);
            }
            Ok(Value::Tuple(vs))
        }
    }
}

/// Outcome of an rvalue evaluation: a value, or an arithmetic panic.
pub enum RvalueOut {
    Val(Value),
    Panic,
}

pub fn eval_rvalue(env: &mut Env, rv: &Rvalue, m: &mut dyn Machine) -> Result<RvalueOut, EvalError> {
    match rv {
        Rvalue::Use(op) => Ok(RvalueOut::Val(eval_operand(env, op, m)?)),
        Rvalue::MutBorrowOf(place) => {
            if place.has_shared_deref() {
                return Err(EvalError::PathMismatch {
                    place: place.to_string(),
                    detail: "mutable borrow through a shared dereference".into(),
                });
            }
            let v = loop {
                let v = unfold_projectors(env, place, m)?;
                if let Some(l) = first_loan(&v) {
                    end_loan(env, l, m)?;
                    continue;
                }
                if let Some(l) = first_reserved(&v) {
                    end_loan(env, l, m)?;
                    continue;
                }
                break v;
            };
            if v.contains_bottom() {
                return Err(EvalError::PathMismatch {
                    place: place.to_string(),
                    detail: "mutable borrow of unusable value".into(),
                });
            }
            let l = env.fresh_loan();
            let env2 = with_reorg(env, m, |e| ghost_write(e, place, Value::MutLoan(l)))?;
            *env = env2;
            Ok(RvalueOut::Val(Value::MutBorrow(l, Box::new(v))))
        }
        Rvalue::SharedBorrowOf(place) | Rvalue::ReservedBorrowOf(place) => {
            let reserved = matches!(rv, Rvalue::ReservedBorrowOf(_));
            let v = loop {
                let v = unfold_projectors(env, place, m)?;
                if let Some(l) = first_mut_loan(&v) {
                    end_loan(env, l, m)?;
                    continue;
                }
                if let Some(l) = first_reserved(&v) {
                    end_loan(env, l, m)?;
                    continue;
                }
                break v;
            };
            if v.contains_bottom() {
                return Err(EvalError::PathMismatch {
                    place: place.to_string(),
                    detail: "borrow of unusable value".into(),
                });
            }
            let l = env.fresh_loan();
            let new_loan = match v {
                Value::SharedLoan(mut ids, inner) => {
                    ids.insert(l);
                    Value::SharedLoan(ids, inner)
                }
                other => Value::SharedLoan([l].into(), Box::new(other)),
            };
            let env2 = with_reorg(env, m, |e| ghost_write(e, place, new_loan.clone()))?;
            *env = env2;
            let b = if reserved { Value::ReservedBorrow(l) } else { Value::SharedBorrow(l) };
            Ok(RvalueOut::Val(b))
        }
        Rvalue::Not(op) => {
            let v = eval_operand(env, op, m)?;
            Ok(RvalueOut::Val(m.not(env, v)?))
        }
        Rvalue::Binop(op, a, b) => {
            let va = eval_operand(env, a, m)?;
            let vb = eval_operand(env, b, m)?;
            match m.binop(env, *op, va, vb)? {
                BinopOut::Val(v) => Ok(RvalueOut::Val(v)),
                BinopOut::Overflow => Ok(RvalueOut::Panic),
            }
        }
    }
}

/// Assignment discipline: the destination's old value must hold no outer
/// loans (ending them lazily), the old value is retained under a ghost
/// binding when it still carries ownership information, and the new value
/// is written in place.
pub fn assign_value(
    env: &mut Env,
    place: &Place,
    v: Value,
    m: &mut dyn Machine,
) -> Result<(), EvalError> {
    let old = loop {
        let old = with_reorg(env, m, |e| read_place(e, place))?;
        let outer = old.outer_loan_ids();
        match outer.first() {
            None => break old,
            Some(l) => {
                end_loan(env, *l, m).map_err(|e| match e {
                    EvalError::StuckReorg(d) => {
                        EvalError::AssignOverLoan { place: place.to_string(), detail: d }
                    }
                    other => other,
                })?;
            }
        }
    };
    let env2 = with_reorg(env, m, |e| write_place(e, place, v.clone()))?;
    *env = env2;
    // Retain the old value when it still carries borrow-graph information.
    if old.contains_any_borrow() || old.contains_loan() {
        env.push_ghost(&place.base, old);
    }
    Ok(())
}

/// `free` on a box: the destination becomes unusable.
pub fn eval_free(env: &mut Env, place: &Place, m: &mut dyn Machine) -> Result<(), EvalError> {
    let v = read_resolved(env, place, m)?;
    let v = match v {
        Value::SharedLoan(_, inner) => *inner,
        other => other,
    };
    if !matches!(v, Value::Boxed(_)) {
        return Err(EvalError::FreeNonBox { place: place.to_string() });
    }
    assign_value(env, place, Value::Bottom, m)
}
