//! Supervisor synthesis for partially observable MDPs under bounded-until
//! probability bounds.
//!
//! A supervisor is a DFA over observation/action pairs that disables
//! actions after each observed history. [`synthesis::synthesize`] learns one
//! with L*, checking candidates exactly on the belief tree or by Monte-Carlo
//! tree search.

pub mod alphabet;
pub mod exact;
pub mod fixtures;
pub mod io;
pub mod learner;
pub mod model;
pub mod pctl;
pub mod pomcp;
pub mod supervisor;
pub mod synthesis;
