//! Textual printer for LLBC programs; the inverse of the parser.

use std::fmt::Write;

use crate::ast::*;

pub fn pretty_llbc(p: &LlbcProgram) -> String {
    let mut out = String::new();
    for t in &p.type_decls {
        print_type_decl(&mut out, t);
        out.push('\n');
    }
    for f in &p.fn_decls {
        print_fn_decl(&mut out, f);
        out.push('\n');
    }
    out
}

fn print_type_decl(out: &mut String, t: &TypeDecl) {
    let _ = write!(out, "enum {}", t.name);
    if !t.ty_params.is_empty() {
        let _ = write!(out, "<{}>", t.ty_params.join(", "));
    }
    let _ = writeln!(out, " {{");
    for c in &t.ctors {
        let _ = write!(out, "    {}", c.name);
        if !c.fields.is_empty() {
            out.push('(');
            for (i, f) in c.fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if let Some(n) = &f.name {
                    let _ = write!(out, "{n}: ");
                }
                let _ = write!(out, "{}", f.ty);
            }
            out.push(')');
        }
        let _ = writeln!(out, ",");
    }
    let _ = writeln!(out, "}}");
}

fn print_fn_decl(out: &mut String, f: &FnDecl) {
    if f.is_opaque() {
        let _ = write!(out, "opaque fn {}", f.name);
    } else {
        let _ = write!(out, "fn {}", f.name);
    }
    if !f.region_params.is_empty() || !f.ty_params.is_empty() {
        out.push('<');
        let mut first = true;
        for r in &f.region_params {
            if !first {
                out.push_str(", ");
            }
            first = false;
            let _ = write!(out, "'{r}");
        }
        for t in &f.ty_params {
            if !first {
                out.push_str(", ");
            }
            first = false;
            out.push_str(t);
        }
        out.push('>');
    }
    out.push('(');
    for (i, (n, t)) in f.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{n}: {t}");
    }
    out.push(')');
    if f.is_opaque() {
        if !f.ret.1.is_unit() {
            let _ = write!(out, " -> {}", f.ret.1);
        }
        let _ = writeln!(out, ";");
        return;
    }
    if !f.ret.1.is_unit() || f.ret.0 != "ret" {
        let _ = write!(out, " -> ({}: {})", f.ret.0, f.ret.1);
    }
    let _ = writeln!(out, " {{");
    for (n, t) in &f.locals {
        let _ = writeln!(out, "    let {n}: {t};");
    }
    if let Some(body) = &f.body {
        print_stmt(out, body, 1);
    }
    let _ = writeln!(out, "}}");
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_stmt(out: &mut String, s: &Statement, level: usize) {
    match s {
        Statement::Nop => {
            indent(out, level);
            let _ = writeln!(out, "nop;");
        }
        Statement::Seq(a, b) => {
            print_stmt(out, a, level);
            print_stmt(out, b, level);
        }
        Statement::Assign { place, rvalue, .. } => {
            indent(out, level);
            let _ = writeln!(out, "{place} = {};", rvalue_str(rvalue));
        }
        Statement::Call { dest, func, region_args, ty_args, args, .. } => {
            indent(out, level);
            let _ = write!(out, "{dest} = {func}");
            if !region_args.is_empty() || !ty_args.is_empty() {
                out.push('<');
                let mut first = true;
                for r in region_args {
                    if !first {
                        out.push_str(", ");
                    }
                    first = false;
                    let _ = write!(out, "{r}");
                }
                for t in ty_args {
                    if !first {
                        out.push_str(", ");
                    }
                    first = false;
                    let _ = write!(out, "{t}");
                }
                out.push('>');
            }
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&operand_str(a));
            }
            let _ = writeln!(out, ");");
        }
        Statement::IfThenElse { cond, then_branch, else_branch, .. } => {
            indent(out, level);
            let _ = writeln!(out, "if {} {{", operand_str(cond));
            print_stmt(out, then_branch, level + 1);
            indent(out, level);
            if matches!(**else_branch, Statement::Nop) {
                let _ = writeln!(out, "}}");
            } else {
                let _ = writeln!(out, "}} else {{");
                print_stmt(out, else_branch, level + 1);
                indent(out, level);
                let _ = writeln!(out, "}}");
            }
        }
        Statement::Match { place, arms, .. } => {
            indent(out, level);
            let _ = writeln!(out, "match {place} {{");
            for (ctor, body) in arms {
                indent(out, level + 1);
                let _ = writeln!(out, "{ctor} => {{");
                print_stmt(out, body, level + 2);
                indent(out, level + 1);
                let _ = writeln!(out, "}}");
            }
            indent(out, level);
            let _ = writeln!(out, "}}");
        }
        Statement::Return { .. } => {
            indent(out, level);
            let _ = writeln!(out, "return;");
        }
        Statement::Panic { .. } => {
            indent(out, level);
            let _ = writeln!(out, "panic!;");
        }
        Statement::Free { place, .. } => {
            indent(out, level);
            let _ = writeln!(out, "free({place});");
        }
    }
}

fn rvalue_str(rv: &Rvalue) -> String {
    match rv {
        Rvalue::Use(op) => operand_str(op),
        Rvalue::MutBorrowOf(p) => format!("&mut {p}"),
        Rvalue::SharedBorrowOf(p) => format!("&{p}"),
        Rvalue::ReservedBorrowOf(p) => format!("&reserved {p}"),
        Rvalue::Not(op) => format!("!{}", operand_str(op)),
        Rvalue::Binop(op, a, b) => {
            format!("{} {} {}", operand_str(a), op.symbol(), operand_str(b))
        }
    }
}

pub fn operand_str(op: &Operand) -> String {
    match op {
        Operand::Move(p) => format!("move {p}"),
        Operand::Copy(p) => format!("copy {p}"),
        Operand::ConstBool(b) => b.to_string(),
        Operand::ConstInt(c) => match c.width {
            Some(IntWidth::I32) => format!("{}i32", c.value),
            Some(IntWidth::U32) => format!("{}u32", c.value),
            None => c.value.to_string(),
        },
        Operand::Ctor { ctor, fields, .. } => {
            if fields.is_empty() {
                ctor.clone()
            } else {
                let fs: Vec<String> = fields.iter().map(operand_str).collect();
                format!("{ctor}({})", fs.join(", "))
            }
        }
        Operand::BoxNew(inner) => format!("Box({})", operand_str(inner)),
        Operand::Tuple(ops) => {
            let fs: Vec<String> = ops.iter().map(operand_str).collect();
            format!("({})", fs.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn print_parse_round_trip_on_sample() {
        let src = "
            enum List<T> { Cons(hd: T, tl: Box<List<T>>), Nil }
            fn list_nth_mut<'a, T>(l: &'a mut List<T>, i: u32) -> (r: &'a mut T) {
                let b: bool;
                let i0: u32;
                let tl: &'_ mut List<T>;
                match *(l) {
                    Nil => { panic!; }
                    Cons => {
                        b = copy i == 0u32;
                        if copy b {
                            r = &mut (*(l)).Cons.0;
                            return;
                        } else {
                            i0 = copy i - 1u32;
                            tl = &mut *((*(l)).Cons.1);
                            r = list_nth_mut<'a, T>(move tl, copy i0);
                            return;
                        }
                    }
                }
            }";
        let mut p1 = parse_program(src).unwrap();
        let printed = pretty_llbc(&p1);
        let mut p2 = parse_program(&printed).unwrap();
        crate::ast::strip_positions(&mut p1);
        crate::ast::strip_positions(&mut p2);
        assert_eq!(p1, p2, "printed form:\n{printed}");
    }

    #[test]
    fn opaque_and_unit_ret_round_trip() {
        let src = "opaque fn ser(m: Map) -> u32;\nfn t() { nop; return; }\n";
        let mut p1 = parse_program(src).unwrap();
        let mut p2 = parse_program(&pretty_llbc(&p1)).unwrap();
        crate::ast::strip_positions(&mut p1);
        crate::ast::strip_positions(&mut p2);
        assert_eq!(p1, p2);
    }
}
