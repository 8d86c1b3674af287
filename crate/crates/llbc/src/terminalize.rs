//! Continuation-duplication pre-pass: rewrites a body so that every
//! conditional and match is in terminal position (no successor statement
//! inside any enclosing sequence). The synthesis stage requires this shape;
//! semantics are preserved because the continuation is copied into every
//! branch.

use crate::ast::Statement;

pub fn terminalize(s: Statement) -> Statement {
    with_continuation(s, Statement::Nop)
}

fn is_nop(s: &Statement) -> bool {
    matches!(s, Statement::Nop)
}

fn with_continuation(s: Statement, k: Statement) -> Statement {
    match s {
        Statement::Seq(a, b) => {
            let tail = with_continuation(*b, k);
            with_continuation(*a, tail)
        }
        Statement::IfThenElse { pos, cond, then_branch, else_branch } => Statement::IfThenElse {
            pos,
            cond,
            then_branch: Box::new(with_continuation(*then_branch, k.clone())),
            else_branch: Box::new(with_continuation(*else_branch, k)),
        },
        Statement::Match { pos, place, arms } => Statement::Match {
            pos,
            place,
            arms: arms
                .into_iter()
                .map(|(c, body)| (c, with_continuation(body, k.clone())))
                .collect(),
        },
        // Exits never fall through; the continuation is dead.
        Statement::Return { .. } | Statement::Panic { .. } => s,
        Statement::Nop => k,
        atomic => {
            if is_nop(&k) {
                atomic
            } else {
                Statement::Seq(Box::new(atomic), Box::new(k))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::*;

    fn ret() -> Statement {
        Statement::Return { pos: Pos::default() }
    }

    fn assign(var: &str) -> Statement {
        Statement::Assign {
            pos: Pos::default(),
            place: Place::var(var),
            rvalue: Rvalue::Use(Operand::ConstBool(true)),
        }
    }

    fn ite(t: Statement, e: Statement) -> Statement {
        Statement::IfThenElse {
            pos: Pos::default(),
            cond: Operand::ConstBool(true),
            then_branch: Box::new(t),
            else_branch: Box::new(e),
        }
    }

    /// No conditional or match has a successor inside a sequence.
    fn terminal_shape(s: &Statement) -> bool {
        fn ok(s: &Statement, last: bool) -> bool {
            match s {
                Statement::Seq(a, b) => ok(a, false) && ok(b, last),
                Statement::IfThenElse { then_branch, else_branch, .. } => {
                    last && ok(then_branch, true) && ok(else_branch, true)
                }
                Statement::Match { arms, .. } => last && arms.iter().all(|(_, s)| ok(s, true)),
                _ => true,
            }
        }
        ok(s, true)
    }

    #[test]
    fn continuation_is_pushed_into_branches() {
        let s = Statement::seq(vec![ite(assign("a"), assign("b")), assign("c"), ret()]);
        let t = terminalize(s);
        assert!(terminal_shape(&t));
        let Statement::IfThenElse { then_branch, else_branch, .. } = &t else {
            panic!("expected terminal if, got {t:?}")
        };
        let expected_then = Statement::seq(vec![assign("a"), assign("c"), ret()]);
        let expected_else = Statement::seq(vec![assign("b"), assign("c"), ret()]);
        assert_eq!(**then_branch, expected_then);
        assert_eq!(**else_branch, expected_else);
    }

    #[test]
    fn already_terminal_body_unchanged() {
        let s = Statement::seq(vec![assign("a"), ite(ret(), ret())]);
        let t = terminalize(s.clone());
        assert_eq!(t, s);
    }

    #[test]
    fn idempotent() {
        let nested = Statement::seq(vec![
            Statement::Match {
                pos: Pos::default(),
                place: Place::var("p"),
                arms: vec![("C1".into(), assign("a")), ("C2".into(), assign("b"))],
            },
            Statement::seq(vec![assign("r1"), assign("r2"), ret()]),
        ]);
        let once = terminalize(nested);
        let twice = terminalize(once.clone());
        assert!(terminal_shape(&once));
        assert_eq!(once, twice);
    }

    #[test]
    fn dead_code_after_return_dropped() {
        let s = Statement::seq(vec![ret(), assign("dead")]);
        assert_eq!(terminalize(s), ret());
    }
}
