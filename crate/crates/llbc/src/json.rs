//! JSON serialization of the LLBC AST (`.llbc.json` files), for interop
//! with external frontends.

use crate::ast::LlbcProgram;

pub fn to_json(p: &LlbcProgram) -> String {
    serde_json::to_string_pretty(p).expect("AST serialization cannot fail")
}

pub fn from_json(src: &str) -> Result<LlbcProgram, serde_json::Error> {
    serde_json::from_str(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn json_round_trip() {
        let src = "
            enum Pair { MkPair(a: u32, b: u32) }
            fn f<'a>(x: &'a mut Pair) -> (r: u32) {
                r = copy (*(x)).MkPair.0;
                return;
            }";
        let p = parse_program(src).unwrap();
        let json = to_json(&p);
        let p2 = from_json(&json).unwrap();
        assert_eq!(p, p2);
    }
}
