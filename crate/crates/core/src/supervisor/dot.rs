//! Graphviz export.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{ProductMdp, ZaDfa};

#[derive(Clone, Copy, Debug, Default)]
pub struct DotOptions {
    /// Print symbols in the 1-based digit coding instead of `z/a` pairs.
    pub digits: bool,
}

pub trait ToDot {
    fn to_dot(&self, opts: DotOptions) -> String;
}

impl ToDot for ZaDfa {
    fn to_dot(&self, opts: DotOptions) -> String {
        let ab = &self.alphabet;
        let mut out = String::from("digraph zadfa {\n  rankdir=LR;\n  node [shape=circle];\n");
        out.push_str("  __start [shape=point];\n");
        let _ = writeln!(out, "  __start -> q{};", self.initial);
        for q in 0..self.num_states() {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  q{} [shape={}];", q, shape);
        }
        for q in 0..self.num_states() {
            let mut grouped: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for s in ab.symbols() {
                if let Some(t) = self.delta[q][s.0] {
                    let label = match (opts.digits, ab.digit(s)) {
                        (true, Some(c)) => c.to_string(),
                        _ => ab.pair_name(s),
                    };
                    grouped.entry(t).or_default().push(label);
                }
            }
            for (t, labels) in grouped {
                let _ = writeln!(out, "  q{} -> q{} [label=\"{}\"];", q, t, labels.join(","));
            }
        }
        out.push_str("}\n");
        out
    }
}

impl ToDot for ProductMdp {
    fn to_dot(&self, _opts: DotOptions) -> String {
        let mut out = String::from("digraph product {\n  node [shape=ellipse];\n");
        for (i, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "  n{} [label=\"{}\"];", i, name);
        }
        for (i, edges) in self.edges.iter().enumerate() {
            for e in edges {
                for &(j, p) in &e.successors {
                    let _ = writeln!(out, "  n{} -> n{} [label=\"#{} {}\"];", i, j, e.symbol.0 + 1, p);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
