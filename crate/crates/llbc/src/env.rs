//! Ordered environments: variable bindings, ghost bindings and region
//! abstractions, plus the structured-memory operations over them.

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::{LlbcProgram, Place, Proj, Region, Ty};
use crate::validate::ty_eq_erased;
use crate::value::{AbsId, CallId, LoanId, SymId, SymValue, Value};

/// What a stuck memory operation needs before it can be retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Need {
    /// End the loan (returning the borrowed value to its lender).
    EndLoan(LoanId),
    /// Activate a reserved borrow into a mutable one.
    Activate(LoanId),
    /// Refine a symbolic value structurally.
    Expand(SymId),
    /// Resolve an output projector against its loan projector.
    Unfold(SymId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("PATH_MISMATCH at `{place}`: {detail}")]
    PathMismatch { place: String, detail: String },
    #[error("WRITE_THROUGH_SHARED at `{place}`")]
    WriteThroughShared { place: String },
    #[error("COPY_NONCOPYABLE: {detail}")]
    CopyNonCopyable { detail: String },
    #[error("MOVE_LOANED at `{place}`: {detail}")]
    MoveLoaned { place: String, detail: String },
    #[error("MOVE_THROUGH_DEREF at `{place}`")]
    MoveThroughDeref { place: String },
    #[error("MOVE_INCOMPLETE at `{place}`: value contains unusable parts")]
    MoveIncomplete { place: String },
    #[error("ASSIGN_OVER_LOAN at `{place}`: {detail}")]
    AssignOverLoan { place: String, detail: String },
    #[error("UNBOUND_VAR `{0}`")]
    UnboundVar(String),
    #[error("STUCK_REORG: {0}")]
    StuckReorg(String),
    #[error("OPAQUE_CALL_IN_CONCRETE_MODE `{0}`")]
    OpaqueCall(String),
    #[error("RECURSION_LIMIT")]
    RecursionLimit,
    #[error("EXPAND_UNSUPPORTED: {0}")]
    ExpandUnsupported(String),
    #[error("RESTRICTION_VIOLATION: {0}")]
    RestrictionViolation(String),
    #[error("UNTRANSLATABLE_VALUE: {0}")]
    UntranslatableValue(String),
    #[error("BACKWARD_STUCK: {0}")]
    BackwardStuck(String),
    #[error("FREE_NON_BOX at `{place}`")]
    FreeNonBox { place: String },
    #[error("INVARIANT_VIOLATION: {0}")]
    InvariantViolation(String),
    #[error("internal: {0}")]
    Internal(String),
}

/// Result of a memory operation: success, a reorganization demand, or a
/// hard error.
pub type MemResult<T> = Result<T, MemStuck>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemStuck {
    Need(Need),
    Err(EvalError),
}

impl From<EvalError> for MemStuck {
    fn from(e: EvalError) -> Self {
        MemStuck::Err(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FrameId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub frame: FrameId,
    pub name: String,
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frame.0 == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}@{}", self.name, self.frame.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub key: VarKey,
    pub value: Value,
    pub ty: Option<Ty>,
    pub ghost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOrigin {
    Arg(usize),
    Ret,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsSlot {
    pub value: Value,
    /// Instantiated static type of the slot, used to type give-backs.
    pub ty: Ty,
    pub origin: SlotOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsKind {
    /// Models the caller's stake in this function's own signature region.
    Input,
    /// Created by a call in the body.
    Call(CallId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstraction {
    pub id: AbsId,
    pub region: Region,
    pub kind: AbsKind,
    /// Index of the region among the callee's region parameters.
    pub region_index: usize,
    pub slots: Vec<AbsSlot>,
    /// Mutable loans this abstraction issued, in signature order; the
    /// values folded back for them are collected in `given_back`.
    pub give_back_order: Vec<LoanId>,
    pub given_back: Vec<(LoanId, Value)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Binding(Binding),
    Abstraction(Abstraction),
}

/// Where a value lives: a binding or an abstraction slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc {
    pub entry: usize,
    /// Slot index for abstraction entries; unused for bindings.
    pub slot: usize,
}

/// A path from a root value to a sub-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VStep {
    MutBorrowInner,
    SharedLoanInner,
    BoxInner,
    TupleElem(usize),
    CtorField(usize),
    ProjInInner,
}

pub type VPath = Vec<VStep>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Env {
    pub entries: Vec<Entry>,
    pub cur_frame: FrameId,
    next_frame: u32,
    next_loan: u32,
    next_sym: u32,
    next_abs: u32,
    next_region: u32,
    next_call: u32,
    next_ghost: u32,
    /// Naming hints for symbolic values, carried into the synthesized code.
    pub sym_hints: BTreeMap<SymId, String>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn fresh_loan(&mut self) -> LoanId {
        self.next_loan += 1;
        LoanId(self.next_loan - 1)
    }

    pub fn fresh_sym(&mut self, ty: Ty, hint: Option<&str>) -> SymValue {
        self.next_sym += 1;
        let id = SymId(self.next_sym - 1);
        if let Some(h) = hint {
            self.sym_hints.insert(id, h.to_string());
        }
        SymValue { id, ty }
    }

    pub fn fresh_abs(&mut self) -> AbsId {
        self.next_abs += 1;
        AbsId(self.next_abs - 1)
    }

    pub fn fresh_region(&mut self) -> Region {
        self.next_region += 1;
        Region::Inst(self.next_region - 1)
    }

    pub fn fresh_call(&mut self) -> CallId {
        self.next_call += 1;
        CallId(self.next_call - 1)
    }

    pub fn push_frame(&mut self) -> FrameId {
        self.next_frame += 1;
        let f = FrameId(self.next_frame);
        self.cur_frame = f;
        f
    }

    pub fn set_frame(&mut self, f: FrameId) {
        self.cur_frame = f;
    }

    pub fn push_binding(&mut self, name: &str, ty: Option<Ty>, value: Value) {
        self.entries.push(Entry::Binding(Binding {
            key: VarKey { frame: self.cur_frame, name: name.to_string() },
            value,
            ty,
            ghost: false,
        }));
    }

    pub fn push_ghost(&mut self, hint: &str, value: Value) {
        self.next_ghost += 1;
        let name = format!("{hint}_old{}", self.next_ghost - 1);
        self.entries.push(Entry::Binding(Binding {
            key: VarKey { frame: self.cur_frame, name },
            value,
            ty: None,
            ghost: true,
        }));
    }

    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.entries.iter().rev().find_map(|e| match e {
            Entry::Binding(b) if !b.ghost && b.key.frame == self.cur_frame && b.key.name == name => {
                Some(b)
            }
            _ => None,
        })
    }

    fn binding_index(&self, name: &str) -> Option<usize> {
        self.entries.iter().enumerate().rev().find_map(|(i, e)| match e {
            Entry::Binding(b) if !b.ghost && b.key.frame == self.cur_frame && b.key.name == name => {
                Some(i)
            }
            _ => None,
        })
    }

    pub fn abstraction(&self, id: AbsId) -> Option<&Abstraction> {
        self.entries.iter().find_map(|e| match e {
            Entry::Abstraction(a) if a.id == id => Some(a),
            _ => None,
        })
    }

    pub fn abstraction_mut(&mut self, id: AbsId) -> Option<&mut Abstraction> {
        self.entries.iter_mut().find_map(|e| match e {
            Entry::Abstraction(a) if a.id == id => Some(a),
            _ => None,
        })
    }

    pub fn abstraction_entry_index(&self, id: AbsId) -> Option<usize> {
        self.entries.iter().position(|e| matches!(e, Entry::Abstraction(a) if a.id == id))
    }

    /// All value roots in environment order.
    pub fn roots(&self) -> Vec<(Loc, &Value)> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            match e {
                Entry::Binding(b) => out.push((Loc { entry: i, slot: 0 }, &b.value)),
                Entry::Abstraction(a) => {
                    for (j, s) in a.slots.iter().enumerate() {
                        out.push((Loc { entry: i, slot: j }, &s.value));
                    }
                }
            }
        }
        out
    }

    pub fn root(&self, loc: Loc) -> &Value {
        match &self.entries[loc.entry] {
            Entry::Binding(b) => &b.value,
            Entry::Abstraction(a) => &a.slots[loc.slot].value,
        }
    }

    pub fn root_mut(&mut self, loc: Loc) -> &mut Value {
        match &mut self.entries[loc.entry] {
            Entry::Binding(b) => &mut b.value,
            Entry::Abstraction(a) => &mut a.slots[loc.slot].value,
        }
    }

    pub fn loc_in_abstraction(&self, loc: Loc) -> Option<AbsId> {
        match &self.entries[loc.entry] {
            Entry::Abstraction(a) => Some(a.id),
            _ => None,
        }
    }

    pub fn value_at<'a>(&self, mut v: &'a Value, path: &VPath) -> &'a Value
    where
        Self: Sized,
    {
        for step in path {
            v = step_value(v, *step);
        }
        v
    }

    pub fn value_at_mut(&mut self, loc: Loc, path: &VPath) -> &mut Value {
        let mut v = self.root_mut(loc);
        for step in path {
            v = step_value_mut(v, *step);
        }
        v
    }

    /// First value (env order, depth-first) satisfying the predicate.
    pub fn find_value(&self, pred: &dyn Fn(&Value) -> bool) -> Option<(Loc, VPath)> {
        fn go(v: &Value, pred: &dyn Fn(&Value) -> bool, path: &mut VPath) -> Option<VPath> {
            if pred(v) {
                return Some(path.clone());
            }
            let recurse = |inner: &Value, step: VStep, path: &mut VPath| {
                path.push(step);
                let r = go(inner, pred, path);
                path.pop();
                r
            };
            match v {
                Value::MutBorrow(_, inner) => recurse(inner, VStep::MutBorrowInner, path),
                Value::SharedLoan(_, inner) => recurse(inner, VStep::SharedLoanInner, path),
                Value::Boxed(inner) => recurse(inner, VStep::BoxInner, path),
                Value::ProjIn { value, .. } => recurse(value, VStep::ProjInInner, path),
                Value::Tuple(vs) => {
                    for (i, inner) in vs.iter().enumerate() {
                        if let Some(p) = recurse(inner, VStep::TupleElem(i), path) {
                            return Some(p);
                        }
                    }
                    None
                }
                Value::Ctor { fields, .. } => {
                    for (i, inner) in fields.iter().enumerate() {
                        if let Some(p) = recurse(inner, VStep::CtorField(i), path) {
                            return Some(p);
                        }
                    }
                    None
                }
                _ => None,
            }
        }
        for (loc, root) in self.roots() {
            let mut path = Vec::new();
            if let Some(p) = go(root, pred, &mut path) {
                return Some((loc, p));
            }
        }
        None
    }

    /// Location of the borrow value for a loan id, with its kind.
    pub fn find_borrow(&self, l: LoanId) -> Option<(Loc, VPath)> {
        self.find_value(&move |v| {
            matches!(v,
                Value::MutBorrow(l2, _) | Value::SharedBorrow(l2) | Value::ReservedBorrow(l2)
                if *l2 == l)
        })
    }

    /// Location of the loan value for a loan id.
    pub fn find_loan(&self, l: LoanId) -> Option<(Loc, VPath)> {
        self.find_value(&move |v| match v {
            Value::MutLoan(l2) => *l2 == l,
            Value::SharedLoan(ids, _) => ids.contains(&l),
            _ => false,
        })
    }

    /// The retained value of the shared loan owning `l`.
    pub fn shared_loan_value(&self, l: LoanId) -> Option<Value> {
        let (loc, path) = self.find_loan(l)?;
        match self.value_at(self.root(loc), &path) {
            Value::SharedLoan(_, inner) => Some((**inner).clone()),
            _ => None,
        }
    }

    /// Replaces every occurrence of symbolic value `id` everywhere.
    pub fn subst_sym(&mut self, id: SymId, with: &Value) {
        for e in &mut self.entries {
            match e {
                Entry::Binding(b) => b.value = b.value.subst_sym(id, with),
                Entry::Abstraction(a) => {
                    for s in &mut a.slots {
                        s.value = s.value.subst_sym(id, with);
                    }
                    for (_, v) in &mut a.given_back {
                        *v = v.subst_sym(id, with);
                    }
                }
            }
        }
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e {
                Entry::Binding(b) => {
                    let ghost = if b.ghost { " (ghost)" } else { "" };
                    out.push_str(&format!("{} -> {}{}\n", b.key, b.value, ghost));
                }
                Entry::Abstraction(a) => {
                    let vals: Vec<String> = a.slots.iter().map(|s| s.value.to_string()).collect();
                    out.push_str(&format!("A({}) {{ {} }}\n", a.region, vals.join(", ")));
                }
            }
        }
        out
    }
}

fn step_value(v: &Value, step: VStep) -> &Value {
    match (v, step) {
        (Value::MutBorrow(_, inner), VStep::MutBorrowInner) => inner,
        (Value::SharedLoan(_, inner), VStep::SharedLoanInner) => inner,
        (Value::Boxed(inner), VStep::BoxInner) => inner,
        (Value::ProjIn { value, .. }, VStep::ProjInInner) => value,
        (Value::Tuple(vs), VStep::TupleElem(i)) => &vs[i],
        (Value::Ctor { fields, .. }, VStep::CtorField(i)) => &fields[i],
        _ => panic!("value path desynchronized: {v} / {step:?}"),
    }
}

fn step_value_mut(v: &mut Value, step: VStep) -> &mut Value {
    match (v, step) {
        (Value::MutBorrow(_, inner), VStep::MutBorrowInner) => inner,
        (Value::SharedLoan(_, inner), VStep::SharedLoanInner) => inner,
        (Value::Boxed(inner), VStep::BoxInner) => inner,
        (Value::ProjIn { value, .. }, VStep::ProjInInner) => value,
        (Value::Tuple(vs), VStep::TupleElem(i)) => &mut vs[i],
        (Value::Ctor { fields, .. }, VStep::CtorField(i)) => &mut fields[i],
        (v, step) => panic!("value path desynchronized: {v} / {step:?}"),
    }
}

/// A context is "not borrowed" when it passes through no mutable-borrow
/// interior and no shared-loan interior; only such positions may have
/// their borrows ended.
pub fn path_not_borrowed(path: &VPath) -> bool {
    !path.iter().any(|s| matches!(s, VStep::MutBorrowInner | VStep::SharedLoanInner))
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

/// Reads the value at a place, following the path through borrows, boxes
/// and shared loans.
pub fn read_place(env: &Env, place: &Place) -> MemResult<Value> {
    let b = env
        .binding(&place.base)
        .ok_or_else(|| MemStuck::Err(EvalError::UnboundVar(place.base.clone())))?;
    let mut cur = b.value.clone();
    let mut remaining = place.path.as_slice();
    while !remaining.is_empty() {
        // Reading may look through a shared loan when the path continues.
        if let Value::SharedLoan(_, inner) = &cur {
            cur = (**inner).clone();
            continue;
        }
        let (proj, rest) = remaining.split_first().unwrap();
        let stuck = |detail: &str| {
            MemStuck::Err(EvalError::PathMismatch {
                place: place.to_string(),
                detail: detail.to_string(),
            })
        };
        match proj {
            Proj::DerefMut | Proj::Deref => match cur {
                Value::MutBorrow(_, inner) => cur = *inner,
                Value::MutLoan(l) => return Err(MemStuck::Need(Need::EndLoan(l))),
                Value::ReservedBorrow(l) => return Err(MemStuck::Need(Need::Activate(l))),
                Value::Symbolic(s) => return Err(MemStuck::Need(Need::Expand(s.id))),
                Value::ProjOut { sym } => return Err(MemStuck::Need(Need::Unfold(sym.id))),
                Value::Bottom => return Err(stuck("dereference of unusable value")),
                other => return Err(stuck(&format!("mutable dereference of {other}"))),
            },
            Proj::DerefShared => match cur {
                Value::SharedBorrow(l) => match env.shared_loan_value(l) {
                    Some(v) => cur = v,
                    None => return Err(stuck(&format!("no shared loan for {l}"))),
                },
                Value::MutLoan(l) => return Err(MemStuck::Need(Need::EndLoan(l))),
                Value::ReservedBorrow(l) => return Err(MemStuck::Need(Need::Activate(l))),
                Value::Symbolic(s) => return Err(MemStuck::Need(Need::Expand(s.id))),
                Value::ProjOut { sym } => return Err(MemStuck::Need(Need::Unfold(sym.id))),
                Value::Bottom => return Err(stuck("dereference of unusable value")),
                other => return Err(stuck(&format!("shared dereference of {other}"))),
            },
            Proj::DerefBox => match cur {
                Value::Boxed(inner) => cur = *inner,
                Value::MutLoan(l) => return Err(MemStuck::Need(Need::EndLoan(l))),
                Value::Symbolic(s) => return Err(MemStuck::Need(Need::Expand(s.id))),
                Value::Bottom => return Err(stuck("dereference of unusable value")),
                other => return Err(stuck(&format!("box dereference of {other}"))),
            },
            Proj::Field { ctor, index } => match cur {
                Value::Ctor { ctor: c, mut fields, .. } => {
                    if &c != ctor {
                        return Err(stuck(&format!("value is `{c}`, path expects `{ctor}`")));
                    }
                    if *index >= fields.len() {
                        return Err(stuck("field index out of range"));
                    }
                    cur = fields.swap_remove(*index);
                }
                Value::MutLoan(l) => return Err(MemStuck::Need(Need::EndLoan(l))),
                Value::Symbolic(s) => return Err(MemStuck::Need(Need::Expand(s.id))),
                Value::Bottom => return Err(stuck("projection from unusable value")),
                other => return Err(stuck(&format!("field projection on {other}"))),
            },
            Proj::TupleField(i) => match cur {
                Value::Tuple(mut vs) => {
                    if *i >= vs.len() {
                        return Err(stuck("tuple index out of range"));
                    }
                    cur = vs.swap_remove(*i);
                }
                Value::MutLoan(l) => return Err(MemStuck::Need(Need::EndLoan(l))),
                Value::Symbolic(s) => return Err(MemStuck::Need(Need::Expand(s.id))),
                Value::Bottom => return Err(stuck("projection from unusable value")),
                other => return Err(stuck(&format!("tuple projection on {other}"))),
            },
        }
        remaining = rest;
    }
    Ok(cur)
}

/// Like `read_place`, but peels one shared-loan layer at the top, as
/// matching is allowed on immutably-shared values.
pub fn read_place_for_match(env: &Env, place: &Place) -> MemResult<Value> {
    let v = read_place(env, place)?;
    match v {
        Value::SharedLoan(_, inner) => Ok(*inner),
        other => Ok(other),
    }
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Resolves a place to a (root, value-path) location for writing.
/// `ghost` permits traversing shared borrows and shared loans.
fn resolve_for_write(env: &Env, place: &Place, ghost: bool) -> MemResult<(Loc, VPath)> {
    let entry = env
        .binding_index(&place.base)
        .ok_or_else(|| MemStuck::Err(EvalError::UnboundVar(place.base.clone())))?;
    let mut loc = Loc { entry, slot: 0 };
    let mut vpath: VPath = Vec::new();
    let mut remaining = place.path.as_slice();
    loop {
        let cur = env.value_at(env.root(loc), &vpath);
        if remaining.is_empty() {
            return Ok((loc, vpath));
        }
        if let Value::SharedLoan(..) = cur {
            if ghost {
                vpath.push(VStep::SharedLoanInner);
                continue;
            }
            // Plain writes may not touch shared data; the caller must end
            // the sharing first.
            let ids = match cur {
                Value::SharedLoan(ids, _) => ids.iter().next().copied(),
                _ => None,
            };
            return Err(MemStuck::Need(Need::EndLoan(ids.expect("nonempty loan set"))));
        }
        let (proj, rest) = remaining.split_first().unwrap();
        let stuck = |detail: String| {
            MemStuck::Err(EvalError::PathMismatch { place: place.to_string(), detail })
        };
        match (proj, cur) {
            (Proj::DerefMut | Proj::Deref, Value::MutBorrow(..)) => {
                vpath.push(VStep::MutBorrowInner)
            }
            (Proj::DerefBox, Value::Boxed(_)) => vpath.push(VStep::BoxInner),
            (Proj::DerefShared, Value::SharedBorrow(l)) => {
                if !ghost {
                    return Err(MemStuck::Err(EvalError::WriteThroughShared {
                        place: place.to_string(),
                    }));
                }
                // Jump to the owner of the loan and keep walking there.
                let Some((owner_loc, owner_path)) = env.find_loan(*l) else {
                    return Err(stuck(format!("no shared loan for {l}")));
                };
                loc = owner_loc;
                vpath = owner_path;
                vpath.push(VStep::SharedLoanInner);
                remaining = rest;
                continue;
            }
            (Proj::Field { ctor, index }, Value::Ctor { ctor: c, fields, .. }) => {
                if c != ctor {
                    return Err(stuck(format!("value is `{c}`, path expects `{ctor}`")));
                }
                if *index >= fields.len() {
                    return Err(stuck("field index out of range".into()));
                }
                vpath.push(VStep::CtorField(*index));
            }
            (Proj::TupleField(i), Value::Tuple(vs)) => {
                if *i >= vs.len() {
                    return Err(stuck("tuple index out of range".into()));
                }
                vpath.push(VStep::TupleElem(*i));
            }
            (_, Value::MutLoan(l)) => return Err(MemStuck::Need(Need::EndLoan(*l))),
            (_, Value::ReservedBorrow(l)) => return Err(MemStuck::Need(Need::Activate(*l))),
            (_, Value::Symbolic(s)) => return Err(MemStuck::Need(Need::Expand(s.id))),
            (_, Value::ProjOut { sym }) => return Err(MemStuck::Need(Need::Unfold(sym.id))),
            (_, Value::Bottom) => return Err(stuck("write into unusable value".into())),
            (p, v) => return Err(stuck(format!("{p:?} does not apply to {v}"))),
        }
        remaining = rest;
    }
}

/// Writes `v` at the place, replacing only the selected sub-value.
/// The path may not traverse shared borrows.
pub fn write_place(env: &Env, place: &Place, v: Value) -> MemResult<Env> {
    let mut env2 = env.clone();
    let (loc, vpath) = resolve_for_write(env, place, false)?;
    *env2.value_at_mut(loc, &vpath) = v;
    Ok(env2)
}

/// Book-keeping write: also allowed to follow shared borrows, updating the
/// value beneath the owning shared loan.
pub fn ghost_write(env: &Env, place: &Place, v: Value) -> MemResult<Env> {
    let mut env2 = env.clone();
    let (loc, vpath) = resolve_for_write(env, place, true)?;
    *env2.value_at_mut(loc, &vpath) = v;
    Ok(env2)
}

/// Reads the current value at the place and replaces it, returning the old
/// value (ghost traversal rules).
pub fn ghost_swap(env: &Env, place: &Place, v: Value) -> MemResult<(Value, Env)> {
    let mut env2 = env.clone();
    let (loc, vpath) = resolve_for_write(env, place, true)?;
    let slot = env2.value_at_mut(loc, &vpath);
    let old = std::mem::replace(slot, v);
    Ok((old, env2))
}

// ---------------------------------------------------------------------------
// Copying
// ---------------------------------------------------------------------------

/// Duplicates a value. Copying a shared borrow mints a fresh loan id and
/// augments the owning loan-set; mutable borrows, reserved borrows,
/// mutable loans, boxes and unusable values cannot be copied.
pub fn copy_value(env: &Env, v: &Value) -> Result<(Value, Env), EvalError> {
    fn go(env: &mut Env, v: &Value) -> Result<Value, EvalError> {
        match v {
            Value::Scalar(s) => Ok(Value::Scalar(*s)),
            Value::SharedBorrow(l) => {
                let fresh = env.fresh_loan();
                let Some((loc, path)) = env.find_loan(*l) else {
                    return Err(EvalError::Internal(format!("no shared loan for {l}")));
                };
                match env.value_at_mut(loc, &path) {
                    Value::SharedLoan(ids, _) => {
                        ids.insert(fresh);
                    }
                    _ => unreachable!("find_loan returned a non-loan"),
                }
                Ok(Value::SharedBorrow(fresh))
            }
            Value::SharedLoan(_, inner) => go(env, inner),
            Value::Ctor { adt, ctor, fields } => Ok(Value::Ctor {
                adt: adt.clone(),
                ctor: ctor.clone(),
                fields: fields.iter().map(|f| go(env, f)).collect::<Result<_, _>>()?,
            }),
            Value::Tuple(vs) => {
                Ok(Value::Tuple(vs.iter().map(|f| go(env, f)).collect::<Result<_, _>>()?))
            }
            Value::Symbolic(s) => {
                if s.ty.contains_borrow() || matches!(s.ty, Ty::Box(_)) {
                    Err(EvalError::CopyNonCopyable {
                        detail: format!("symbolic value of type {}", s.ty),
                    })
                } else {
                    Ok(Value::Symbolic(s.clone()))
                }
            }
            Value::MutBorrow(..)
            | Value::ReservedBorrow(_)
            | Value::MutLoan(_)
            | Value::Bottom
            | Value::Boxed(_) => Err(EvalError::CopyNonCopyable { detail: format!("{v}") }),
            Value::ProjIn { .. } | Value::ProjLoans { .. } | Value::ProjOut { .. } | Value::Ignored => {
                Err(EvalError::CopyNonCopyable { detail: format!("{v}") })
            }
        }
    }
    let mut env2 = env.clone();
    let out = go(&mut env2, v)?;
    Ok((out, env2))
}

// ---------------------------------------------------------------------------
// Invariant checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Concrete,
    Symbolic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantDiag {
    pub code: &'static str,
    pub detail: String,
}

impl fmt::Display for InvariantDiag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

#[derive(Default)]
struct InvCollector {
    diags: Vec<InvariantDiag>,
    mut_loans: BTreeMap<LoanId, u32>,
    shared_loan_ids: BTreeMap<LoanId, u32>,
    mut_borrows: BTreeMap<LoanId, u32>,
    shared_borrows: BTreeMap<LoanId, u32>,
    sym_tys: BTreeMap<SymId, Ty>,
}

impl InvCollector {
    fn push(&mut self, code: &'static str, detail: String) {
        self.diags.push(InvariantDiag { code, detail });
    }

    fn sym(&mut self, s: &SymValue) {
        match self.sym_tys.get(&s.id) {
            None => {
                self.sym_tys.insert(s.id, s.ty.clone());
            }
            Some(t) if ty_eq_erased(t, &s.ty) => {}
            Some(t) => {
                let detail = format!("{} used at {} and {}", s.id, t, s.ty);
                self.push("SYM_TYPE_MISMATCH", detail);
            }
        }
    }

    fn visit(&mut self, v: &Value, in_abs: bool, under_shared: bool) {
        match v {
            Value::MutLoan(l) => {
                *self.mut_loans.entry(*l).or_default() += 1;
                if under_shared {
                    self.push("MUT_LOAN_IN_SHARED", format!("loan^m {l} inside a shared value"));
                }
            }
            Value::SharedLoan(ids, inner) => {
                if ids.is_empty() {
                    self.push("EMPTY_LOAN_SET", "shared loan with empty id set".into());
                }
                for l in ids {
                    *self.shared_loan_ids.entry(*l).or_default() += 1;
                }
                self.visit(inner, in_abs, true);
            }
            Value::MutBorrow(l, inner) => {
                *self.mut_borrows.entry(*l).or_default() += 1;
                self.visit(inner, in_abs, under_shared);
            }
            Value::SharedBorrow(l) | Value::ReservedBorrow(l) => {
                *self.shared_borrows.entry(*l).or_default() += 1;
            }
            Value::Symbolic(s) => self.sym(s),
            Value::ProjLoans { sym, .. } => {
                self.sym(sym);
                if !in_abs {
                    self.push("PROJ_OUTSIDE_ABS", format!("{v} outside a region abstraction"));
                }
            }
            Value::ProjOut { sym } => self.sym(sym),
            Value::ProjIn { value, .. } => {
                if !in_abs {
                    self.push("PROJ_OUTSIDE_ABS", format!("{v} outside a region abstraction"));
                }
                self.visit(value, in_abs, under_shared);
            }
            Value::Ignored => {
                if !in_abs {
                    self.push("IGNORED_OUTSIDE_ABS", "ignored value outside an abstraction".into());
                }
            }
            Value::Ctor { fields, .. } => {
                for f2 in fields {
                    self.visit(f2, in_abs, under_shared);
                }
            }
            Value::Tuple(vs) => {
                for f2 in vs {
                    self.visit(f2, in_abs, under_shared);
                }
            }
            Value::Boxed(inner) => self.visit(inner, in_abs, under_shared),
            Value::Scalar(_) | Value::Bottom => {}
        }
    }
}

/// Checks the per-step environment invariants: loan/borrow consistency,
/// no mutable loans inside shared values, well-typed bindings, and
/// mode-appropriate value forms.
pub fn check_invariants(env: &Env, prog: &LlbcProgram, mode: Mode) -> Vec<InvariantDiag> {
    let mut c = InvCollector::default();
    for e in &env.entries {
        match e {
            Entry::Binding(b) => {
                c.visit(&b.value, false, false);
                if mode == Mode::Concrete && b.value.contains_symbolic_like() {
                    c.push("SYMBOLIC_IN_CONCRETE", format!("{} -> {}", b.key, b.value));
                }
                if let Some(ty) = &b.ty {
                    if !b.ghost && !value_conforms(env, prog, &b.value, ty) {
                        c.push("ILL_TYPED", format!("{} -> {} is not a `{}`", b.key, b.value, ty));
                    }
                }
            }
            Entry::Abstraction(a) => {
                if mode == Mode::Concrete {
                    c.push("ABS_IN_CONCRETE", format!("region abstraction {} in concrete mode", a.id));
                }
                for s in &a.slots {
                    c.visit(&s.value, true, false);
                }
            }
        }
    }

    let InvCollector { mut diags, mut_loans, shared_loan_ids, mut_borrows, shared_borrows, .. } = c;

    // Loan/borrow bijection: each mutable loan pairs with exactly one
    // mutable borrow; each id in a shared loan-set pairs with exactly one
    // shared or reserved borrow.
    for (l, n) in &mut_loans {
        if *n > 1 {
            diags.push(InvariantDiag { code: "DOUBLE_LOAN", detail: format!("loan^m {l} appears {n} times") });
        }
        match mut_borrows.get(l) {
            Some(1) => {}
            Some(n) => diags.push(InvariantDiag {
                code: "DOUBLE_BORROW",
                detail: format!("borrow^m {l} appears {n} times"),
            }),
            None => diags.push(InvariantDiag {
                code: "ORPHAN_LOAN",
                detail: format!("loan^m {l} has no matching borrow"),
            }),
        }
    }
    for (l, n) in &shared_loan_ids {
        if *n > 1 {
            diags.push(InvariantDiag { code: "DOUBLE_LOAN", detail: format!("shared id {l} appears {n} times") });
        }
        match shared_borrows.get(l) {
            Some(1) => {}
            Some(n) => diags.push(InvariantDiag {
                code: "DOUBLE_BORROW",
                detail: format!("borrow^s/r {l} appears {n} times"),
            }),
            None => diags.push(InvariantDiag {
                code: "ORPHAN_LOAN",
                detail: format!("shared id {l} has no matching borrow"),
            }),
        }
    }
    for (l, _) in &mut_borrows {
        if !mut_loans.contains_key(l) {
            diags.push(InvariantDiag {
                code: "DANGLING_BORROW",
                detail: format!("borrow^m {l} has no matching loan"),
            });
        }
    }
    for (l, _) in &shared_borrows {
        if !shared_loan_ids.contains_key(l) {
            diags.push(InvariantDiag {
                code: "DANGLING_BORROW",
                detail: format!("borrow^s/r {l} has no matching loan"),
            });
        }
    }
    diags
}

/// Structural typing of a runtime value against a static type. Loans and
/// unusable values conform to any type; shared loans are transparent.
pub fn value_conforms(env: &Env, prog: &LlbcProgram, v: &Value, ty: &Ty) -> bool {
    match v {
        Value::Bottom | Value::MutLoan(_) | Value::Ignored => true,
        Value::SharedLoan(_, inner) => value_conforms(env, prog, inner, ty),
        Value::Scalar(s) => ty_eq_erased(&s.ty(), ty) || matches!(ty, Ty::Var(_)),
        Value::MutBorrow(_, inner) => match ty {
            Ty::MutBorrow(_, t) => value_conforms(env, prog, inner, t),
            Ty::Var(_) => true,
            _ => false,
        },
        Value::ReservedBorrow(_) => matches!(ty, Ty::MutBorrow(..) | Ty::SharedBorrow(..) | Ty::Var(_)),
        Value::SharedBorrow(l) => {
            matches!(ty, Ty::SharedBorrow(..) | Ty::Var(_)) && env.find_loan(*l).is_some()
        }
        Value::Boxed(inner) => match ty {
            Ty::Box(t) => value_conforms(env, prog, inner, t),
            Ty::Var(_) => true,
            _ => false,
        },
        Value::Tuple(vs) => match ty {
            Ty::Tuple(ts) => {
                ts.len() == vs.len()
                    && vs.iter().zip(ts).all(|(v, t)| value_conforms(env, prog, v, t))
            }
            Ty::Var(_) => vs.is_empty(),
            _ => false,
        },
        Value::Ctor { adt, ctor, fields } => match ty {
            Ty::Adt(name, args) if name == adt => {
                let Some(decl) = prog.type_decl(name) else { return false };
                let Some(ftys) = decl.ctor_field_tys(ctor, args) else { return false };
                ftys.len() == fields.len()
                    && fields.iter().zip(&ftys).all(|(v, t)| value_conforms(env, prog, v, t))
            }
            Ty::Var(_) => true,
            _ => false,
        },
        Value::Symbolic(s) => ty_eq_erased(&s.ty, ty) || matches!(ty, Ty::Var(_)),
        Value::ProjOut { sym } => ty_eq_erased(&sym.ty, ty) || matches!(ty, Ty::Var(_)),
        Value::ProjIn { .. } | Value::ProjLoans { .. } => true,
    }
}
