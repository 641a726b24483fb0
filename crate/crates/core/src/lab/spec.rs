//! The generator and claim mini-languages.
//!
//! Generators: `zero`, `linear:0.3`, `linear2:0.2,0.4`, `abs:0.5`,
//! `euclid:0.5`, `kink:0.5,0.2`, `step-linear:0.2,0.4` (optional third value:
//! switch time, default `T/2`), `ylin:0.3`.
//!
//! Claims: `const(c)`, `coord(k)`, `ind(w1>=-1)`, `ind(0>=w1>=-1)`,
//! `sum(a,b,...)`, `scale(c,a)`. Coordinates are 1-based; `x` is an alias for
//! `w1`.

use std::fmt;
use std::str::FromStr;

use crate::claims::{indicator, Claim, Event};
use crate::generators::Generator;
use crate::lattice::Point;
use crate::oracles::{DriftSpec, OracleError, TerminalFunction};

use super::LabError;

fn parse_error(input: &str, message: impl Into<String>) -> LabError {
    LabError::Parse { input: input.to_string(), message: message.into() }
}

/// A parsed generator description.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Zero,
    Linear(Vec<f64>),
    StepLinear { before: f64, after: f64, switch: Option<f64> },
    Abs(f64),
    Euclid(f64),
    Kink { up: f64, down: f64 },
    YLinear(f64),
}

impl FromStr for GeneratorSpec {
    type Err = LabError;

    fn from_str(input: &str) -> Result<Self, LabError> {
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, a),
            None => (s.as_str(), ""),
        };
        let values: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.parse::<f64>().map_err(|_| parse_error(input, format!("`{a}` is not a number"))))
                .collect::<Result<_, _>>()?
        };
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(parse_error(input, format!("non-finite coefficient {v}")));
        }
        let arity = |n: usize| -> Result<(), LabError> {
            if values.len() == n {
                Ok(())
            } else {
                Err(parse_error(input, format!("`{name}` takes {n} value(s), got {}", values.len())))
            }
        };
        let spec = match name {
            "zero" => {
                arity(0)?;
                Self::Zero
            }
            "linear" => {
                arity(1)?;
                Self::Linear(values)
            }
            "abs" => {
                arity(1)?;
                Self::Abs(values[0])
            }
            "euclid" => {
                arity(1)?;
                Self::Euclid(values[0])
            }
            "ylin" => {
                arity(1)?;
                Self::YLinear(values[0])
            }
            "kink" => {
                arity(2)?;
                Self::Kink { up: values[0], down: values[1] }
            }
            "step-linear" => match values.len() {
                2 => Self::StepLinear { before: values[0], after: values[1], switch: None },
                3 => Self::StepLinear { before: values[0], after: values[1], switch: Some(values[2]) },
                n => return Err(parse_error(input, format!("`step-linear` takes 2 or 3 values, got {n}"))),
            },
            other => match other.strip_prefix("linear").and_then(|d| d.parse::<usize>().ok()) {
                Some(d) if d >= 1 => {
                    arity(d)?;
                    Self::Linear(values)
                }
                _ => return Err(parse_error(input, format!("unknown generator `{other}`"))),
            },
        };
        Ok(spec)
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Linear(b) if b.len() == 1 => write!(f, "linear:{}", b[0]),
            Self::Linear(b) => write!(f, "linear{}:{}", b.len(), join(b)),
            Self::StepLinear { before, after, switch: None } => write!(f, "step-linear:{before},{after}"),
            Self::StepLinear { before, after, switch: Some(s) } => write!(f, "step-linear:{before},{after},{s}"),
            Self::Abs(k) => write!(f, "abs:{k}"),
            Self::Euclid(k) => write!(f, "euclid:{k}"),
            Self::Kink { up, down } => write!(f, "kink:{up},{down}"),
            Self::YLinear(c) => write!(f, "ylin:{c}"),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl GeneratorSpec {
    /// Dimension the spec pins down, if any.
    pub fn fixed_dimension(&self) -> Option<usize> {
        match self {
            Self::Linear(b) => Some(b.len()),
            Self::StepLinear { .. } | Self::Kink { .. } => Some(1),
            _ => None,
        }
    }

    fn switch_time(&self, horizon: f64) -> f64 {
        match self {
            Self::StepLinear { switch: Some(s), .. } => *s,
            _ => 0.5 * horizon,
        }
    }

    pub fn build(&self, dimension: usize, horizon: f64) -> Result<Generator, LabError> {
        if let Some(d) = self.fixed_dimension() {
            if d != dimension {
                return Err(LabError::Config(format!("generator `{self}` is {d}-dimensional, lattice is {dimension}-dimensional")));
            }
        }
        if let Self::StepLinear { switch: Some(s), .. } = self {
            if !(*s > 0.0 && *s < horizon) {
                return Err(LabError::Config(format!("switch time {s} must lie in (0, {horizon})")));
            }
        }
        let g = match self {
            Self::Zero => Generator::zero(dimension),
            Self::Linear(b) => Generator::linear(b.clone()),
            Self::StepLinear { before, after, .. } => Generator::step_linear(*before, *after, self.switch_time(horizon)),
            Self::Abs(k) => Generator::abs(*k, dimension),
            Self::Euclid(k) => Generator::euclid(*k, dimension),
            Self::Kink { up, down } => Generator::kink(*up, *down),
            Self::YLinear(c) => Generator::y_linear(*c, dimension),
        };
        Ok(g.relabel(self.to_string()))
    }

    /// `y`-independent and linear in `z`.
    pub fn is_linear(&self) -> bool {
        match self {
            Self::Zero | Self::Linear(_) | Self::StepLinear { .. } => true,
            Self::Abs(k) | Self::Euclid(k) => *k == 0.0,
            Self::Kink { up, down } => up + down == 0.0,
            Self::YLinear(c) => *c == 0.0,
        }
    }

    /// The drift `b(t)` of a linear driver `g = b(t) . z`.
    pub fn drift(&self, dimension: usize, horizon: f64) -> Result<Option<DriftSpec>, OracleError> {
        let constant = |b: Vec<f64>| DriftSpec::constant(b, horizon).map(Some);
        match self {
            Self::Zero => constant(vec![0.0; dimension]),
            Self::Linear(b) => constant(b.clone()),
            Self::StepLinear { before, after, .. } => {
                DriftSpec::piecewise(horizon, vec![self.switch_time(horizon)], vec![vec![*before], vec![*after]]).map(Some)
            }
            Self::Kink { up, down } if up + down == 0.0 => constant(vec![*up]),
            Self::Abs(k) | Self::Euclid(k) if *k == 0.0 => constant(vec![0.0; dimension]),
            Self::YLinear(c) if *c == 0.0 => constant(vec![0.0; dimension]),
            _ => Ok(None),
        }
    }

    /// `(g(., 1), g(., -1))` as drifts, for 1-D drivers of the form
    /// `g(t, 1) z+ + g(t, -1) z-`.
    pub fn sides(&self, horizon: f64) -> Result<Option<(DriftSpec, DriftSpec)>, OracleError> {
        let pair = |up: f64, down: f64| -> Result<Option<(DriftSpec, DriftSpec)>, OracleError> {
            Ok(Some((DriftSpec::constant(vec![up], horizon)?, DriftSpec::constant(vec![down], horizon)?)))
        };
        match self {
            Self::Zero => pair(0.0, 0.0),
            Self::Linear(b) if b.len() == 1 => pair(b[0], -b[0]),
            Self::StepLinear { .. } => {
                let up = self.drift(1, horizon)?.expect("linear family");
                Ok(Some((up.clone(), up.negated())))
            }
            Self::Abs(k) | Self::Euclid(k) => pair(*k, *k),
            Self::Kink { up, down } => pair(*up, *down),
            _ => Ok(None),
        }
    }

    /// The symbolic form of `g(t, y, a z)` for a unit direction `a`.
    pub fn restrict(&self, a: &[f64]) -> Option<GeneratorSpec> {
        Some(match self {
            Self::Zero => Self::Zero,
            Self::Linear(b) if b.len() == a.len() => Self::Linear(vec![b.iter().zip(a).map(|(b, a)| b * a).sum()]),
            Self::Abs(k) => Self::Abs(k * a.iter().map(|v| v.abs()).sum::<f64>()),
            Self::Euclid(k) => Self::Euclid(*k),
            Self::YLinear(c) => Self::YLinear(*c),
            _ => return None,
        })
    }
}

/// Which lattice coordinate a claim variable `w_k` reads.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateMap {
    Identity,
    /// Every variable reads `a . W_T`.
    Projection(Vec<f64>),
}

impl CoordinateMap {
    pub fn is_axis(&self) -> bool {
        self.axis().is_some()
    }

    /// A projection onto a coordinate axis, as a zero-based index.
    fn axis(&self) -> Option<usize> {
        match self {
            Self::Identity => None,
            Self::Projection(a) => {
                let ones: Vec<usize> = a.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(k, _)| k).collect();
                (ones.len() == 1 && a.iter().filter(|v| **v != 0.0).count() == 1).then(|| ones[0])
            }
        }
    }
}

/// A parsed claim description.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimExpr {
    Const(f64),
    /// 1-based coordinate.
    Coord(usize),
    /// `I{lower <= w_var <= upper}`, 1-based `var`.
    Ind { var: usize, lower: Option<f64>, upper: Option<f64> },
    Sum(Vec<ClaimExpr>),
    Scale(f64, Box<ClaimExpr>),
}

impl fmt::Display for ClaimExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "const({c})"),
            Self::Coord(k) => write!(f, "coord({k})"),
            Self::Ind { var, lower: Some(l), upper: None } => write!(f, "ind(w{var}>={l})"),
            Self::Ind { var, lower: None, upper: Some(u) } => write!(f, "ind(w{var}<={u})"),
            Self::Ind { var, lower: Some(l), upper: Some(u) } => write!(f, "ind({u}>=w{var}>={l})"),
            Self::Ind { lower: None, upper: None, .. } => write!(f, "const(1)"),
            Self::Sum(parts) => {
                write!(f, "sum(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Self::Scale(c, inner) => write!(f, "scale({c},{inner})"),
        }
    }
}

struct Parser<'a> {
    input: &'a str,
    s: Vec<char>,
    pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Number(f64),
    Var(usize),
}

impl<'a> Parser<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, LabError> {
        Err(parse_error(self.input, format!("{} at offset {}", message.into(), self.pos)))
    }

    fn eat(&mut self, token: &str) -> bool {
        let t: Vec<char> = token.chars().collect();
        if self.s[self.pos..].starts_with(&t) {
            self.pos += t.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), LabError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.fail(format!("expected `{token}`"))
        }
    }

    fn number(&mut self) -> Result<f64, LabError> {
        let start = self.pos;
        let at = |p: usize| self.s.get(p).copied();
        let mut p = self.pos;
        if matches!(at(p), Some('+' | '-')) {
            p += 1;
        }
        while matches!(at(p), Some(c) if c.is_ascii_digit() || c == '.') {
            p += 1;
        }
        if matches!(at(p), Some('e' | 'E')) {
            let mut q = p + 1;
            if matches!(at(q), Some('+' | '-')) {
                q += 1;
            }
            if matches!(at(q), Some(c) if c.is_ascii_digit()) {
                while matches!(at(q), Some(c) if c.is_ascii_digit()) {
                    q += 1;
                }
                p = q;
            }
        }
        let text: String = self.s[start..p].iter().collect();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = p;
                Ok(v)
            }
            _ => self.fail("expected a number"),
        }
    }

    fn index(&mut self) -> Result<usize, LabError> {
        let start = self.pos;
        while matches!(self.s.get(self.pos), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let text: String = self.s[start..self.pos].iter().collect();
        match text.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => {
                self.pos = start;
                self.fail("expected a 1-based index")
            }
        }
    }

    fn term(&mut self) -> Result<Term, LabError> {
        if self.eat("w") {
            Ok(Term::Var(self.index()?))
        } else if self.eat("x") {
            Ok(Term::Var(1))
        } else {
            Ok(Term::Number(self.number()?))
        }
    }

    fn op(&mut self) -> Option<bool> {
        if self.eat(">=") {
            Some(true)
        } else if self.eat("<=") {
            Some(false)
        } else {
            None
        }
    }

    /// `a op b [op c]` with a single variable; `true` marks `>=`.
    fn chain(&mut self) -> Result<ClaimExpr, LabError> {
        let mut terms = vec![self.term()?];
        let mut ops = Vec::new();
        while let Some(ge) = self.op() {
            ops.push(ge);
            terms.push(self.term()?);
        }
        if ops.is_empty() || ops.len() > 2 {
            return self.fail("an indicator needs one or two comparisons");
        }
        if ops.len() == 2 && ops[0] != ops[1] {
            return self.fail("mixed `>=` and `<=` in one chain");
        }
        let vars: Vec<usize> = terms.iter().filter_map(|t| if let Term::Var(k) = t { Some(*k) } else { None }).collect();
        if vars.len() != 1 {
            return self.fail("an indicator needs exactly one variable");
        }
        // Rewrite as a >= chain: terms in decreasing order.
        if !ops[0] {
            terms.reverse();
        }
        let pos = terms.iter().position(|t| matches!(t, Term::Var(_))).expect("one variable");
        let num = |t: &Term| if let Term::Number(v) = t { *v } else { unreachable!() };
        let upper = (pos > 0).then(|| num(&terms[pos - 1]));
        let lower = (pos + 1 < terms.len()).then(|| num(&terms[pos + 1]));
        Ok(ClaimExpr::Ind { var: vars[0], lower, upper })
    }

    fn expr(&mut self) -> Result<ClaimExpr, LabError> {
        if self.eat("const(") {
            let c = self.number()?;
            self.expect(")")?;
            Ok(ClaimExpr::Const(c))
        } else if self.eat("coord(") {
            let k = self.index()?;
            self.expect(")")?;
            Ok(ClaimExpr::Coord(k))
        } else if self.eat("ind(") {
            let e = self.chain()?;
            self.expect(")")?;
            Ok(e)
        } else if self.eat("sum(") {
            let mut parts = vec![self.expr()?];
            while self.eat(",") {
                parts.push(self.expr()?);
            }
            self.expect(")")?;
            Ok(ClaimExpr::Sum(parts))
        } else if self.eat("scale(") {
            let c = self.number()?;
            self.expect(",")?;
            let inner = self.expr()?;
            self.expect(")")?;
            Ok(ClaimExpr::Scale(c, Box::new(inner)))
        } else {
            self.fail("expected const, coord, ind, sum or scale")
        }
    }
}

impl FromStr for ClaimExpr {
    type Err = LabError;

    fn from_str(input: &str) -> Result<Self, LabError> {
        let s: Vec<char> = input.chars().filter(|c| !c.is_whitespace()).collect();
        let mut p = Parser { input, s, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.s.len() {
            return p.fail("trailing input");
        }
        Ok(e)
    }
}

impl ClaimExpr {
    /// Largest 1-based coordinate used.
    pub fn max_coordinate(&self) -> usize {
        match self {
            Self::Const(_) => 0,
            Self::Coord(k) | Self::Ind { var: k, .. } => *k,
            Self::Sum(parts) => parts.iter().map(Self::max_coordinate).max().unwrap_or(0),
            Self::Scale(_, inner) => inner.max_coordinate(),
        }
    }

    /// The two summands of a top-level binary sum.
    pub fn pair(&self) -> Option<(&ClaimExpr, &ClaimExpr)> {
        match self {
            Self::Sum(parts) if parts.len() == 2 => Some((&parts[0], &parts[1])),
            _ => None,
        }
    }

    /// Builds the lattice claim. Axis-aligned thresholds compare exactly on
    /// integer node offsets.
    pub fn compile(&self, map: &CoordinateMap) -> Claim {
        let claim = self.compile_inner(map);
        claim.relabel(self.to_string())
    }

    fn compile_inner(&self, map: &CoordinateMap) -> Claim {
        let axis = |var: usize| match map {
            CoordinateMap::Identity => Some(var - 1),
            CoordinateMap::Projection(_) => map.axis(),
        };
        match self {
            Self::Const(c) => Claim::constant(*c),
            Self::Coord(k) => match (axis(*k), map) {
                (Some(j), _) => Claim::coordinate(j),
                (None, CoordinateMap::Projection(a)) => Claim::of_projection("proj", a.clone(), |x| x),
                (None, CoordinateMap::Identity) => unreachable!(),
            },
            Self::Ind { var, lower, upper } => {
                let (lower, upper) = (*lower, *upper);
                let event = match (axis(*var), map) {
                    (Some(j), _) => Event::new("ind", move |p: &Point| {
                        lower.is_none_or(|l| p.w_at_least(j, l)) && upper.is_none_or(|u| p.w_at_most(j, u))
                    }),
                    (None, CoordinateMap::Projection(a)) => {
                        let a = a.clone();
                        Event::new("ind", move |p: &Point| {
                            let s = p.projection(&a);
                            lower.is_none_or(|l| s >= l) && upper.is_none_or(|u| s <= u)
                        })
                    }
                    (None, CoordinateMap::Identity) => unreachable!(),
                };
                indicator(&event)
            }
            Self::Sum(parts) => {
                let mut it = parts.iter().map(|p| p.compile_inner(map));
                let first = it.next().expect("sum has a part");
                it.fold(first, |acc, c| acc.plus(&c))
            }
            Self::Scale(c, inner) => inner.compile_inner(map).scale(*c),
        }
    }

    /// The same function of the Gaussian terminal vector, for the oracles.
    pub fn terminal(&self, map: &CoordinateMap, dimension: usize) -> TerminalFunction {
        let direction = |var: usize| match map {
            CoordinateMap::Identity => {
                let mut a = vec![0.0; dimension];
                a[var - 1] = 1.0;
                a
            }
            CoordinateMap::Projection(a) => a.clone(),
        };
        match self {
            Self::Const(c) => TerminalFunction::Constant(*c),
            Self::Coord(k) => TerminalFunction::Linear(direction(*k)),
            Self::Ind { var, lower, upper } => {
                TerminalFunction::Interval { direction: direction(*var), lower: *lower, upper: *upper }
            }
            Self::Sum(parts) => TerminalFunction::Sum(parts.iter().map(|p| p.terminal(map, dimension)).collect()),
            Self::Scale(c, inner) => inner.terminal(map, dimension).scaled(*c),
        }
    }
}
