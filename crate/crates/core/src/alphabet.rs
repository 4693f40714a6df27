//! The za-alphabet: (observation, action) pairs in observation-major order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index into an [`Alphabet`]; `z * |A| + a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol(pub usize);

pub type Word = Vec<Symbol>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("symbol `{0}` is not in the alphabet")]
    UnknownSymbol(String),
    #[error("digit coding needs an alphabet of at most 9 symbols, got {0}")]
    DigitsUnavailable(usize),
    #[error("empty policy string")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub observations: Vec<String>,
    pub actions: Vec<String>,
}

impl Alphabet {
    pub fn new(observations: Vec<String>, actions: Vec<String>) -> Self {
        Alphabet { observations, actions }
    }

    pub fn len(&self) -> usize {
        self.observations.len() * self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbol(&self, z: usize, a: usize) -> Symbol {
        Symbol(z * self.actions.len() + a)
    }

    pub fn observation(&self, s: Symbol) -> usize {
        s.0 / self.actions.len()
    }

    pub fn action(&self, s: Symbol) -> usize {
        s.0 % self.actions.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.len()).map(Symbol)
    }

    pub fn pair_name(&self, s: Symbol) -> String {
        format!(
            "{}/{}",
            self.observations[self.observation(s)],
            self.actions[self.action(s)]
        )
    }

    /// 1-based digit, available when the alphabet has at most 9 symbols.
    pub fn digit(&self, s: Symbol) -> Option<char> {
        if self.len() <= 9 {
            char::from_digit(s.0 as u32 + 1, 10)
        } else {
            None
        }
    }

    /// Digit coding when available, `z:a,z:a` pairs otherwise.
    pub fn format_word(&self, w: &[Symbol]) -> String {
        if w.is_empty() {
            return "ε".to_string();
        }
        if self.len() <= 9 {
            w.iter().filter_map(|&s| self.digit(s)).collect()
        } else {
            w.iter()
                .map(|&s| {
                    format!(
                        "{}:{}",
                        self.observations[self.observation(s)],
                        self.actions[self.action(s)]
                    )
                })
                .collect::<Vec<_>>()
                .join(",")
        }
    }

    /// Accepts the digit coding (`"124"`) or explicit pairs (`"z1:a1,z1:a2"`).
    pub fn parse_word(&self, text: &str) -> Result<Word, WordError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(WordError::Empty);
        }
        if text.contains(':') {
            return text
                .split(',')
                .map(|pair| {
                    let (z, a) = pair
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| WordError::UnknownSymbol(pair.to_string()))?;
                    let zi = self.observations.iter().position(|o| o == z.trim());
                    let ai = self.actions.iter().position(|x| x == a.trim());
                    match (zi, ai) {
                        (Some(z), Some(a)) => Ok(self.symbol(z, a)),
                        _ => Err(WordError::UnknownSymbol(pair.to_string())),
                    }
                })
                .collect();
        }
        if self.len() > 9 {
            return Err(WordError::DigitsUnavailable(self.len()));
        }
        text.chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d >= 1 && (d as usize) <= self.len() => Ok(Symbol(d as usize - 1)),
                _ => Err(WordError::UnknownSymbol(c.to_string())),
            })
            .collect()
    }

    /// All words of length exactly `n`, in lexicographic order.
    pub fn words_of_length(&self, n: usize) -> Vec<Word> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|w| {
                    self.symbols().map(move |s| {
                        let mut w2 = w.clone();
                        w2.push(s);
                        w2
                    })
                })
                .collect();
        }
        out
    }

    /// All words of length at most `n`, shortest first.
    pub fn words_up_to(&self, n: usize) -> Vec<Word> {
        (0..=n).flat_map(|i| self.words_of_length(i)).collect()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
