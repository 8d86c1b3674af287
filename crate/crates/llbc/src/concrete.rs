//! Concrete execution of closed LLBC programs under the ownership-centric
//! semantics.

use crate::ast::{BinOp, FnDecl, LlbcProgram, Place, Statement, Ty};
use crate::env::{check_invariants, Env, EvalError, FrameId, Mode, Need};
use crate::machine::{
    assign_value, eval_free, eval_operand, eval_rvalue, read_for_match_resolved, RvalueOut,
};
use crate::reorg::{self, BinopOut, Machine};
use crate::value::{AbsId, Scalar, SymId, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Returned(Value),
    Panicked,
}

#[derive(Debug, Clone)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub env: Env,
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    FallThrough,
    Returned,
    Panicked,
}

const MAX_CALL_DEPTH: u32 = 4_000;

/// The concrete machine: no abstractions, no symbolic values, checked
/// scalar arithmetic.
struct ConcreteMachine;

impl Machine for ConcreteMachine {
    fn end_abstraction(&mut self, _env: &mut Env, abs: AbsId) -> Result<(), EvalError> {
        Err(EvalError::Internal(format!("region abstraction {abs} in concrete mode")))
    }

    fn expand(&mut self, _env: &mut Env, s: SymId) -> Result<(), EvalError> {
        Err(EvalError::Internal(format!("symbolic value {s} in concrete mode")))
    }

    fn unfold(&mut self, _env: &mut Env, s: SymId) -> Result<(), EvalError> {
        Err(EvalError::Internal(format!("projector over {s} in concrete mode")))
    }

    fn binop(&mut self, _env: &mut Env, op: BinOp, lhs: Value, rhs: Value) -> Result<BinopOut, EvalError> {
        concrete_binop(op, &lhs, &rhs)
    }

    fn not(&mut self, _env: &mut Env, v: Value) -> Result<Value, EvalError> {
        match v.as_bool() {
            Some(b) => Ok(Value::bool(!b)),
            None => Err(EvalError::Internal(format!("negation of non-boolean {v}"))),
        }
    }
}

/// Checked arithmetic and comparisons; out-of-range results panic.
pub fn concrete_binop(op: BinOp, lhs: &Value, rhs: &Value) -> Result<BinopOut, EvalError> {
    use Scalar::*;
    let (a, b) = match (lhs, rhs) {
        (Value::Scalar(a), Value::Scalar(b)) => (*a, *b),
        _ => {
            return Err(EvalError::Internal(format!("arithmetic on non-scalars {lhs}, {rhs}")));
        }
    };
    let arith_i = |f: fn(i32, i32) -> Option<i32>, a: i32, b: i32| match f(a, b) {
        Some(n) => BinopOut::Val(Value::Scalar(I32(n))),
        None => BinopOut::Overflow,
    };
    let arith_u = |f: fn(u32, u32) -> Option<u32>, a: u32, b: u32| match f(a, b) {
        Some(n) => BinopOut::Val(Value::Scalar(U32(n))),
        None => BinopOut::Overflow,
    };
    let cmp = |b: bool| BinopOut::Val(Value::bool(b));
    Ok(match (op, a, b) {
        (BinOp::Add, I32(x), I32(y)) => arith_i(i32::checked_add, x, y),
        (BinOp::Sub, I32(x), I32(y)) => arith_i(i32::checked_sub, x, y),
        (BinOp::Mul, I32(x), I32(y)) => arith_i(i32::checked_mul, x, y),
        (BinOp::Rem, I32(x), I32(y)) => arith_i(i32::checked_rem, x, y),
        (BinOp::Add, U32(x), U32(y)) => arith_u(u32::checked_add, x, y),
        (BinOp::Sub, U32(x), U32(y)) => arith_u(u32::checked_sub, x, y),
        (BinOp::Mul, U32(x), U32(y)) => arith_u(u32::checked_mul, x, y),
        (BinOp::Rem, U32(x), U32(y)) => arith_u(u32::checked_rem, x, y),
        (BinOp::Eq, x, y) => cmp(scalar_eq(x, y)?),
        (BinOp::Ne, x, y) => cmp(!scalar_eq(x, y)?),
        (BinOp::Lt, I32(x), I32(y)) => cmp(x < y),
        (BinOp::Le, I32(x), I32(y)) => cmp(x <= y),
        (BinOp::Gt, I32(x), I32(y)) => cmp(x > y),
        (BinOp::Ge, I32(x), I32(y)) => cmp(x >= y),
        (BinOp::Lt, U32(x), U32(y)) => cmp(x < y),
        (BinOp::Le, U32(x), U32(y)) => cmp(x <= y),
        (BinOp::Gt, U32(x), U32(y)) => cmp(x > y),
        (BinOp::Ge, U32(x), U32(y)) => cmp(x >= y),
        _ => {
            return Err(EvalError::Internal(format!("ill-typed arithmetic {a:?} {op:?} {b:?}")));
        }
    })
}

fn scalar_eq(a: Scalar, b: Scalar) -> Result<bool, EvalError> {
    use Scalar::*;
    match (a, b) {
        (Bool(x), Bool(y)) => Ok(x == y),
        (I32(x), I32(y)) => Ok(x == y),
        (U32(x), U32(y)) => Ok(x == y),
        _ => Err(EvalError::Internal("comparison across widths".into())),
    }
}

pub struct Interp<'p> {
    pub prog: &'p LlbcProgram,
    pub env: Env,
    pub checks: bool,
    pub trace: bool,
    trace_log: Vec<String>,
    depth: u32,
    machine: ConcreteMachine,
}

impl<'p> Interp<'p> {
    pub fn new(prog: &'p LlbcProgram) -> Interp<'p> {
        Interp {
            prog,
            env: Env::new(),
            checks: true,
            trace: false,
            trace_log: Vec::new(),
            depth: 0,
            machine: ConcreteMachine,
        }
    }

    fn check_env(&mut self, at: &str) -> Result<(), EvalError> {
        if !self.checks {
            return Ok(());
        }
        let diags = check_invariants(&self.env, self.prog, Mode::Concrete);
        if diags.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            Err(EvalError::InvariantViolation(format!("after {at}: {}", msgs.join("; "))))
        }
    }

    pub fn eval_statement(&mut self, s: &Statement) -> Result<Control, EvalError> {
        match s {
            Statement::Nop => Ok(Control::FallThrough),
            Statement::Seq(a, b) => match self.eval_statement(a)? {
                Control::FallThrough => self.eval_statement(b),
                exit => Ok(exit),
            },
            Statement::Assign { pos, place, rvalue } => {
                match eval_rvalue(&mut self.env, rvalue, &mut self.machine)? {
                    RvalueOut::Val(v) => {
                        assign_value(&mut self.env, place, v, &mut self.machine)?;
                        self.step_done(&format!("assign at {pos}"), place)?;
                        Ok(Control::FallThrough)
                    }
                    RvalueOut::Panic => Ok(Control::Panicked),
                }
            }
            Statement::Call { pos, dest, func, args, .. } => {
                let r = self.eval_call(dest, func, args)?;
                if r == Control::FallThrough {
                    self.step_done(&format!("call `{func}` at {pos}"), dest)?;
                }
                Ok(r)
            }
            Statement::IfThenElse { cond, then_branch, else_branch, .. } => {
                let v = eval_operand(&mut self.env, cond, &mut self.machine)?;
                match v.as_bool() {
                    Some(true) => self.eval_statement(then_branch),
                    Some(false) => self.eval_statement(else_branch),
                    None => Err(EvalError::Internal(format!("non-boolean condition {v}"))),
                }
            }
            Statement::Match { pos, place, arms } => {
                let v = read_for_match_resolved(&mut self.env, place, &mut self.machine)?;
                let Value::Ctor { ctor, .. } = &v else {
                    return Err(EvalError::PathMismatch {
                        place: place.to_string(),
                        detail: format!("match at {pos} on non-constructor value {v}"),
                    });
                };
                let Some((_, body)) = arms.iter().find(|(c, _)| c == ctor) else {
                    return Err(EvalError::Internal(format!("no arm for `{ctor}`")));
                };
                self.eval_statement(body)
            }
            Statement::Return { .. } => Ok(Control::Returned),
            Statement::Panic { .. } => Ok(Control::Panicked),
            Statement::Free { pos, place } => {
                eval_free(&mut self.env, place, &mut self.machine)?;
                self.step_done(&format!("free at {pos}"), place)?;
                Ok(Control::FallThrough)
            }
        }
    }

    fn step_done(&mut self, what: &str, _at: &Place) -> Result<(), EvalError> {
        if self.trace {
            self.trace_log.push(format!("-- {what}\n{}", self.env.dump()));
        }
        self.check_env(what)
    }

    /// Runs a call: binds arguments, locals and the return variable in a
    /// fresh frame, executes the body, then assigns the returned value.
    pub fn eval_call(
        &mut self,
        dest: &Place,
        func: &str,
        args: &[crate::ast::Operand],
    ) -> Result<Control, EvalError> {
        let Some(decl) = self.prog.fn_decl(func) else {
            return Err(EvalError::Internal(format!("unknown function `{func}`")));
        };
        if decl.is_opaque() {
            return Err(EvalError::OpaqueCall(func.to_string()));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(EvalError::RecursionLimit);
        }
        let mut arg_vals = Vec::with_capacity(args.len());
        for a in args {
            arg_vals.push(eval_operand(&mut self.env, a, &mut self.machine)?);
        }

        let caller_frame = self.env.cur_frame;
        self.env.push_frame();
        for ((name, ty), v) in decl.args.iter().zip(arg_vals) {
            self.env.push_binding(name, Some(ty.clone()), v);
        }
        for (name, ty) in &decl.locals {
            self.env.push_binding(name, Some(ty.clone()), Value::Bottom);
        }
        self.env.push_binding(&decl.ret.0, Some(decl.ret.1.clone()), Value::Bottom);

        self.depth += 1;
        let body = decl.body.as_ref().expect("non-opaque body");
        let control = self.eval_statement(body)?;
        self.depth -= 1;

        match control {
            Control::Panicked => Ok(Control::Panicked),
            Control::FallThrough => {
                Err(EvalError::Internal(format!("`{func}` fell off the end of its body")))
            }
            Control::Returned => {
                let v = self.finish_frame(decl)?;
                self.env.set_frame(caller_frame);
                assign_value(&mut self.env, dest, v, &mut self.machine)?;
                Ok(Control::FallThrough)
            }
        }
    }

    /// Return discipline: locals are blanked (ending loans they hold) so
    /// stray borrows of locals die before the frame is left; the return
    /// value is moved out; remaining frame bindings become ghosts.
    fn finish_frame(&mut self, decl: &FnDecl) -> Result<Value, EvalError> {
        for (name, _) in &decl.locals {
            let place = Place::var(name);
            assign_value(&mut self.env, &place, Value::Bottom, &mut self.machine)?;
        }
        let ret_place = Place::var(&decl.ret.0);
        let v = crate::machine::read_resolved(&mut self.env, &ret_place, &mut self.machine)?;
        let frame = self.env.cur_frame;
        for e in &mut self.env.entries {
            if let crate::env::Entry::Binding(b) = e {
                if b.key.frame == frame && !b.ghost {
                    b.ghost = true;
                    if b.key.name == decl.ret.0 {
                        b.value = Value::Bottom;
                    }
                }
            }
        }
        Ok(v)
    }
}

/// Executes a nullary entry function to completion.
pub fn run_program(prog: &LlbcProgram, entry: &str, checks: bool, trace: bool) -> Result<ExecResult, EvalError> {
    let Some(decl) = prog.fn_decl(entry) else {
        return Err(EvalError::Internal(format!("entry `{entry}` not found")));
    };
    if !decl.args.is_empty() {
        return Err(EvalError::Internal(format!("entry `{entry}` takes arguments")));
    }
    if decl.is_opaque() {
        return Err(EvalError::OpaqueCall(entry.to_string()));
    }
    let mut interp = Interp::new(prog);
    interp.checks = checks;
    interp.trace = trace;
    interp.env.set_frame(FrameId(0));
    for (name, ty) in &decl.locals {
        interp.env.push_binding(name, Some(ty.clone()), Value::Bottom);
    }
    interp.env.push_binding(&decl.ret.0, Some(decl.ret.1.clone()), Value::Bottom);

    let body = decl.body.as_ref().expect("non-opaque body");
    let control = interp.eval_statement(body)?;
    let outcome = match control {
        Control::Panicked => Outcome::Panicked,
        Control::Returned => {
            let v = interp.finish_frame(decl)?;
            Outcome::Returned(v)
        }
        Control::FallThrough => {
            return Err(EvalError::Internal(format!("`{entry}` fell off the end of its body")));
        }
    };
    Ok(ExecResult { outcome, env: interp.env, trace: interp.trace_log })
}

/// Convenience used by tests: a returned scalar, if any.
pub fn returned_scalar(r: &ExecResult) -> Option<Scalar> {
    match &r.outcome {
        Outcome::Returned(Value::Scalar(s)) => Some(*s),
        _ => None,
    }
}

pub fn ty_of_scalar(v: &Value) -> Option<Ty> {
    match v {
        Value::Scalar(s) => Some(s.ty()),
        _ => None,
    }
}

/// Public wrapper matching the reorganization contract: drives the
/// environment until the goal holds.
pub enum ReorgGoal {
    EndLoan(crate::value::LoanId),
    ActivateReservedAt(crate::value::LoanId),
}

pub fn reorganize_to(env: &mut Env, goal: ReorgGoal) -> Result<(), EvalError> {
    let mut m = ConcreteMachine;
    match goal {
        ReorgGoal::EndLoan(l) => reorg::end_loan(env, l, &mut m),
        ReorgGoal::ActivateReservedAt(l) => reorg::activate_reserved(env, l, &mut m),
    }
}

pub fn resolve_need_concrete(env: &mut Env, need: &Need) -> Result<(), EvalError> {
    let mut m = ConcreteMachine;
    reorg::resolve_need(env, need, &mut m)
}
