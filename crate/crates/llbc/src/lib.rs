//! Low-Level Borrow Calculus: textual frontend, ownership-centric concrete
//! interpreter, symbolic borrow checker with region abstractions, and
//! synthesis of equivalent pure functional programs.

pub mod ast;
pub mod env;
pub mod json;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod terminalize;
pub mod validate;
pub mod value;
