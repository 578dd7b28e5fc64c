//! Strategy expressions: which retrieval functions may be used, in which
//! order and for how many steps.
//!
//! ```text
//! adaptive                 learned policy over all functions
//! f_s^t                    sparse only, policy decides when to answer
//! (f_s|f_l)                alternation between sparse and link
//! f_s ∘ f_l^{n-1}          one sparse step, then link until the answer
//! f_d^3 > f_l^2            exactly 3 dense then 2 link steps, then answer
//! ```
//!
//! An integer count fixes the number of steps in a stage. A symbolic count
//! (`t`, `n`, `{n-1}`) or a missing one on the last stage leaves the length
//! to the policy, which may also answer. A missing count on an earlier
//! stage means one step.

use std::fmt;

use crate::env::Func;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Fixed(usize),
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub funcs: Vec<Func>,
    pub count: Count,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategySpec {
    pub text: String,
    pub stages: Vec<Stage>,
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl StrategySpec {
    pub fn adaptive() -> Self {
        StrategySpec {
            text: "adaptive".into(),
            stages: vec![Stage {
                funcs: Func::RETRIEVAL.to_vec(),
                count: Count::Open,
            }],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).spec()
    }

    /// Parse a comma-separated list of expressions. Commas inside
    /// parentheses or braces do not split.
    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut start = 0;
        for (i, c) in text.char_indices() {
            match c {
                '(' | '{' => depth += 1,
                ')' | '}' => depth -= 1,
                ',' if depth == 0 => {
                    out.push(Self::parse(&text[start..i]).map_err(|e| shift(e, start))?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        out.push(Self::parse(&text[start..]).map_err(|e| shift(e, start))?);
        Ok(out)
    }

    /// Functions used anywhere in the expression.
    pub fn funcs(&self) -> Vec<Func> {
        let mut v: Vec<Func> = Func::RETRIEVAL
            .into_iter()
            .filter(|f| self.stages.iter().any(|s| s.funcs.contains(f)))
            .collect();
        v.dedup();
        v
    }
}

fn shift(e: Error, by: usize) -> Error {
    match e {
        Error::Strategy { position, message } => Error::Strategy {
            position: position + by,
            message,
        },
        other => other,
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Strategy {
            position: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn spec(mut self) -> Result<StrategySpec> {
        self.skip_ws();
        if self.rest().trim() == "adaptive" {
            return Ok(StrategySpec::adaptive());
        }
        let mut stages = Vec::new();
        let mut open_at = None;
        loop {
            let (stage, explicit) = self.stage()?;
            if stage.count == Count::Open {
                open_at = Some((stages.len(), explicit));
            }
            stages.push(stage);
            if !(self.eat("∘") || self.eat(">")) {
                break;
            }
            if let Some((_, pos)) = open_at {
                return Err(Error::Strategy {
                    position: pos,
                    message: "an open step count is only allowed on the last stage".into(),
                });
            }
        }
        self.skip_ws();
        if !self.rest().is_empty() {
            return self.err(format!("unexpected `{}`", self.rest()));
        }
        // a missing count on the last stage is open
        let last = stages.len() - 1;
        for (i, s) in stages.iter_mut().enumerate() {
            if s.count == Count::Fixed(0) {
                s.count = if i == last {
                    Count::Open
                } else {
                    Count::Fixed(1)
                };
            }
        }
        Ok(StrategySpec {
            text: self.src.trim().to_string(),
            stages,
        })
    }

    /// Returns the stage and the position of its count. A missing count is
    /// encoded as `Fixed(0)` until the caller resolves it.
    fn stage(&mut self) -> Result<(Stage, usize)> {
        self.skip_ws();
        let funcs = if self.eat("(") {
            let mut fs = vec![self.func()?];
            while self.eat("|") {
                fs.push(self.func()?);
            }
            if !self.eat(")") {
                return self.err("expected `)`");
            }
            let _ = self.eat("_Π") || self.eat("_Pi") || self.eat("_pi");
            fs
        } else {
            vec![self.func()?]
        };
        let mut sorted = funcs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != funcs.len() {
            return self.err("a function appears twice in one alternation");
        }
        self.skip_ws();
        let at = self.pos;
        let count = if self.eat("^") {
            self.count()?
        } else {
            Count::Fixed(0)
        };
        Ok((Stage { funcs, count }, at))
    }

    fn func(&mut self) -> Result<Func> {
        for (tok, f) in [
            ("f_s", Func::Sparse),
            ("f_d", Func::Dense),
            ("f_l", Func::Link),
        ] {
            if self.eat(tok) {
                return Ok(f);
            }
        }
        self.skip_ws();
        self.err("expected one of f_s, f_d, f_l")
    }

    fn count(&mut self) -> Result<Count> {
        self.skip_ws();
        for sym in ["{n-1}", "{n−1}", "n-1", "n−1", "t", "n"] {
            if self.eat(sym) {
                return Ok(Count::Open);
            }
        }
        let digits: String = self
            .rest()
            .chars()
            .take_while(char::is_ascii_digit)
            .collect();
        if digits.is_empty() {
            return self.err("expected a step count");
        }
        let n: usize = digits.parse().map_err(|_| Error::Strategy {
            position: self.pos,
            message: "step count too large".into(),
        })?;
        if n == 0 {
            return self.err("step count must be positive");
        }
        self.pos += digits.len();
        Ok(Count::Fixed(n))
    }
}

/// Progress through a strategy during one episode.
#[derive(Debug, Clone)]
pub struct StrategyCursor<'s> {
    spec: &'s StrategySpec,
    stage: usize,
    used: usize,
}

/// What the runner may do at the current step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    /// Retrieve with one of these functions; answering is not allowed.
    Retrieve(Vec<Func>),
    /// Let the policy choose among these functions or answer.
    Decide(Vec<Func>),
    /// Every stage is used up.
    Answer,
}

impl<'s> StrategyCursor<'s> {
    pub fn new(spec: &'s StrategySpec) -> Self {
        StrategyCursor {
            spec,
            stage: 0,
            used: 0,
        }
    }

    pub fn directive(&self) -> Directive {
        match self.spec.stages.get(self.stage) {
            None => Directive::Answer,
            Some(s) => match s.count {
                Count::Open => Directive::Decide(s.funcs.clone()),
                Count::Fixed(_) => Directive::Retrieve(s.funcs.clone()),
            },
        }
    }

    /// Record one retrieval step.
    pub fn advance(&mut self) {
        if let Some(s) = self.spec.stages.get(self.stage) {
            self.used += 1;
            if let Count::Fixed(n) = s.count {
                if self.used >= n {
                    self.stage += 1;
                    self.used = 0;
                }
            }
        }
    }

    /// Abandon the current stage (none of its functions can act).
    pub fn skip_stage(&mut self) {
        self.stage += 1;
        self.used = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stages(s: &str) -> Vec<Stage> {
        StrategySpec::parse(s).unwrap().stages
    }

    #[test]
    fn single_function_forms() {
        assert_eq!(
            stages("f_s^t"),
            vec![Stage {
                funcs: vec![Func::Sparse],
                count: Count::Open
            }]
        );
        assert_eq!(stages("f_d")[0].count, Count::Open);
        assert_eq!(stages("f_d^3")[0].count, Count::Fixed(3));
    }

    #[test]
    fn alternation_and_composition() {
        let s = stages("(f_s|f_d|f_l)_Π^n");
        assert_eq!(s[0].funcs, vec![Func::Sparse, Func::Dense, Func::Link]);
        assert_eq!(s[0].count, Count::Open);
        let s = stages("f_s ∘ f_l^{n-1}");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].count, Count::Fixed(1));
        assert_eq!(s[1].count, Count::Open);
        let s = stages("f_d^2>f_l^1");
        assert_eq!(s[0].count, Count::Fixed(2));
        assert_eq!(s[1].count, Count::Fixed(1));
        assert_eq!(
            StrategySpec::parse("adaptive").unwrap(),
            StrategySpec::adaptive()
        );
    }

    #[test]
    fn errors_carry_positions() {
        let pos = |s: &str| match StrategySpec::parse(s) {
            Err(Error::Strategy { position, .. }) => position,
            other => panic!("{s}: {other:?}"),
        };
        assert_eq!(pos("f_x"), 0);
        assert_eq!(pos("(f_s|f_q)"), 5);
        assert_eq!(pos("(f_s|f_d"), 8);
        assert_eq!(pos("f_s^"), 4);
        assert_eq!(pos("f_s^0"), 4);
        assert_eq!(pos("f_s^t ∘ f_l"), 3);
        assert_eq!(pos("(f_s|f_s)"), 9);
        assert_eq!(pos("f_s f_d"), 4);
    }

    #[test]
    fn list_parsing() {
        let v = StrategySpec::parse_list("f_s^t,(f_s|f_d|f_l)").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].text, "(f_s|f_d|f_l)");
        match StrategySpec::parse_list("f_s,f_q") {
            Err(Error::Strategy { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cursor_walks_stages() {
        let s = StrategySpec::parse("f_s^2 ∘ (f_d|f_l)").unwrap();
        let mut c = StrategyCursor::new(&s);
        assert_eq!(c.directive(), Directive::Retrieve(vec![Func::Sparse]));
        c.advance();
        assert_eq!(c.directive(), Directive::Retrieve(vec![Func::Sparse]));
        c.advance();
        assert_eq!(
            c.directive(),
            Directive::Decide(vec![Func::Dense, Func::Link])
        );
        for _ in 0..10 {
            c.advance();
        }
        assert_eq!(
            c.directive(),
            Directive::Decide(vec![Func::Dense, Func::Link])
        );
        let s = StrategySpec::parse("f_l^1").unwrap();
        let mut c = StrategyCursor::new(&s);
        c.advance();
        assert_eq!(c.directive(), Directive::Answer);
    }
}
