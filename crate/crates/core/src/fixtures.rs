//! The bundled worked example: a five-state POMDP with a "fail" sink,
//! horizon 3, threshold 0.28, and the supervisors drawn for it.

use crate::io::{parse_dfa, parse_model};
use crate::model::Pomdp;
use crate::pctl::{parse_spec, BoundedUntilSpec};
use crate::supervisor::ZaDfa;

pub const MODEL_JSON: &str = include_str!("../fixtures/worked-example/model.json");
pub const SPEC: &str = include_str!("../fixtures/worked-example/spec.pctl");

pub fn worked_example() -> Pomdp {
    parse_model(MODEL_JSON).expect("bundled model parses")
}

pub fn spec() -> BoundedUntilSpec {
    parse_spec(SPEC).expect("bundled spec parses")
}

macro_rules! dfa_fixture {
    ($name:ident, $file:literal) => {
        pub fn $name() -> ZaDfa {
            parse_dfa(include_str!(concat!("../fixtures/worked-example/", $file))).expect("bundled supervisor parses")
        }
    };
}

dfa_fixture!(fmin, "fmin.json");
dfa_fixture!(f1, "f1.json");
dfa_fixture!(f2, "f2.json");
dfa_fixture!(f3, "f3.json");
dfa_fixture!(f4, "f4.json");
dfa_fixture!(f5, "f5.json");
