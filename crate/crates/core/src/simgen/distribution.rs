//! Failure and censoring laws of the simulation scenarios.
//!
//! Every law is described through its cumulative hazard `H`, and sampled as
//! `H⁻¹(E)` with `E ~ Exp(1)`. Piecewise laws glue the hazards of their pieces
//! at the breakpoints, which keeps the survival function continuous.
//!
//! Text form, as accepted by [`DistributionSpec::parse`]:
//!
//! ```text
//! exp(rate)            weibull(shape, scale)     loglogistic(shape, scale)
//! lognormal(mu, sigma) uniform(a, b)             lomax(shape, scale)
//! pwexp([t1, ...], [r0, r1, ...])                piecewise([t1, ...], [law0, law1, ...])
//! min(law, law)        never
//! ```

use std::fmt;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// Rate parameterization, mean `1/rate`.
    Exponential { rate: f64 },
    /// `S(t) = exp(-(t/scale)^shape)`.
    Weibull { shape: f64, scale: f64 },
    /// `S(t) = 1 / (1 + (t/scale)^shape)`.
    LogLogistic { shape: f64, scale: f64 },
    /// `log T ~ N(mu, sigma²)`.
    LogNormal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    /// `S(t) = (1 + t/scale)^(-shape)`.
    Lomax { shape: f64, scale: f64 },
    /// Constant hazard `rates[j]` between consecutive breakpoints.
    PiecewiseExponential { breakpoints: Vec<f64>, rates: Vec<f64> },
    /// Hazard of `pieces[j]` between consecutive breakpoints.
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<DistributionSpec>,
    },
    MinOf(Box<DistributionSpec>, Box<DistributionSpec>),
    /// All mass at `+inf`: a censoring law that never censors.
    Never,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Scenario(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_breakpoints(breakpoints: &[f64], n_pieces: usize) -> Result<()> {
    if n_pieces != breakpoints.len() + 1 {
        return Err(Error::Scenario(format!(
            "{} breakpoints need {} pieces, got {n_pieces}",
            breakpoints.len(),
            breakpoints.len() + 1
        )));
    }
    if breakpoints.iter().any(|t| !(t.is_finite() && *t > 0.0))
        || breakpoints.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Scenario("breakpoints must be positive and strictly increasing".into()));
    }
    Ok(())
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        use DistributionSpec::*;
        match self {
            Exponential { rate } => positive("rate", *rate),
            Weibull { shape, scale } | LogLogistic { shape, scale } | Lomax { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::Scenario(format!("mu must be finite, got {mu}")));
                }
                positive("sigma", *sigma)
            }
            Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a >= 0.0 && a < b) {
                    return Err(Error::Scenario(format!("uniform needs 0 <= a < b, got ({a}, {b})")));
                }
                Ok(())
            }
            PiecewiseExponential { breakpoints, rates } => {
                check_breakpoints(breakpoints, rates.len())?;
                rates.iter().try_for_each(|&r| positive("rate", r))
            }
            Piecewise { breakpoints, pieces } => {
                check_breakpoints(breakpoints, pieces.len())?;
                for p in pieces {
                    if matches!(p, MinOf(..) | Never | Uniform { .. }) {
                        return Err(Error::Scenario(format!("`{p}` cannot be a piecewise component")));
                    }
                    p.validate()?;
                }
                Ok(())
            }
            MinOf(a, b) => {
                a.validate()?;
                b.validate()
            }
            Never => Ok(()),
        }
    }

    /// `H(t)`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        use DistributionSpec::*;
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Exponential { rate } => rate * t,
            Weibull { shape, scale } => (t / scale).powf(*shape),
            LogLogistic { shape, scale } => (t / scale).powf(*shape).ln_1p(),
            LogNormal { mu, sigma } => -normal::sf((t.ln() - mu) / sigma).ln(),
            Uniform { a, b } => {
                if t <= *a {
                    0.0
                } else if t >= *b {
                    f64::INFINITY
                } else {
                    -((b - t) / (b - a)).ln()
                }
            }
            Lomax { shape, scale } => shape * (t / scale).ln_1p(),
            PiecewiseExponential { breakpoints, rates } => {
                let mut h = 0.0;
                let mut prev = 0.0;
                for (j, &rate) in rates.iter().enumerate() {
                    let end = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    h += rate * (t.min(end) - prev);
                    if t <= end {
                        break;
                    }
                    prev = end;
                }
                h
            }
            Piecewise { breakpoints, pieces } => {
                let mut h = 0.0;
                let mut prev = 0.0;
                for (j, piece) in pieces.iter().enumerate() {
                    let end = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    h += piece.cumulative_hazard(t.min(end)) - piece.cumulative_hazard(prev);
                    if t <= end {
                        break;
                    }
                    prev = end;
                }
                h
            }
            MinOf(a, b) => a.cumulative_hazard(t) + b.cumulative_hazard(t),
            Never => 0.0,
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// `H⁻¹(h)`, the smallest `t` with `H(t) >= h`. Not defined for `MinOf`.
    fn inverse_cumulative_hazard(&self, h: f64) -> f64 {
        use DistributionSpec::*;
        match self {
            Exponential { rate } => h / rate,
            Weibull { shape, scale } => scale * h.powf(1.0 / shape),
            LogLogistic { shape, scale } => scale * h.exp_m1().powf(1.0 / shape),
            LogNormal { mu, sigma } => (mu - sigma * normal::quantile((-h).exp())).exp(),
            Uniform { a, b } => a + (b - a) * (-(-h).exp_m1()),
            Lomax { shape, scale } => scale * (h / shape).exp_m1(),
            PiecewiseExponential { breakpoints, rates } => {
                let mut remaining = h;
                let mut prev = 0.0;
                for (j, &rate) in rates.iter().enumerate() {
                    let end = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    let segment = rate * (end - prev);
                    if remaining <= segment {
                        return prev + remaining / rate;
                    }
                    remaining -= segment;
                    prev = end;
                }
                f64::INFINITY
            }
            Piecewise { breakpoints, pieces } => {
                let mut remaining = h;
                let mut prev = 0.0;
                for (j, piece) in pieces.iter().enumerate() {
                    let end = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    let start_h = piece.cumulative_hazard(prev);
                    let segment = piece.cumulative_hazard(end) - start_h;
                    if remaining <= segment {
                        return piece.inverse_cumulative_hazard(start_h + remaining).max(prev);
                    }
                    remaining -= segment;
                    prev = end;
                }
                f64::INFINITY
            }
            MinOf(..) => unreachable!("min_of is sampled component-wise"),
            Never => f64::INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionSpec::MinOf(a, b) => a.sample(rng).min(b.sample(rng)),
            DistributionSpec::Never => f64::INFINITY,
            other => {
                let e: f64 = rng.sample(Exp1);
                other.inverse_cumulative_hazard(e)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let spec = p.law()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_str("[")?;
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str("]")
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use DistributionSpec::*;
        match self {
            Exponential { rate } => write!(f, "exp({rate})"),
            Weibull { shape, scale } => write!(f, "weibull({shape}, {scale})"),
            LogLogistic { shape, scale } => write!(f, "loglogistic({shape}, {scale})"),
            LogNormal { mu, sigma } => write!(f, "lognormal({mu}, {sigma})"),
            Uniform { a, b } => write!(f, "uniform({a}, {b})"),
            Lomax { shape, scale } => write!(f, "lomax({shape}, {scale})"),
            PiecewiseExponential { breakpoints, rates } => {
                f.write_str("pwexp(")?;
                write_list(f, breakpoints)?;
                f.write_str(", ")?;
                write_list(f, rates)?;
                f.write_str(")")
            }
            Piecewise { breakpoints, pieces } => {
                f.write_str("piecewise(")?;
                write_list(f, breakpoints)?;
                f.write_str(", ")?;
                write_list(f, pieces)?;
                f.write_str(")")
            }
            MinOf(a, b) => write!(f, "min({a}, {b})"),
            Never => f.write_str("never"),
        }
    }
}

impl Serialize for DistributionSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistributionSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        DistributionSpec::parse(&text).map_err(serde::de::Error::custom)
    }
}

enum Arg {
    Number(f64),
    Law(DistributionSpec),
    Numbers(Vec<f64>),
    Laws(Vec<DistributionSpec>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Scenario(format!(
            "cannot parse distribution at column {}: {what} in `{}`",
            self.pos + 1,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_lowercase()
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                self.pos = start;
                self.error("expected a number")
            })
    }

    fn starts_number(&mut self) -> bool {
        matches!(self.peek(), Some(b'0'..=b'9' | b'.' | b'-' | b'+'))
    }

    fn arg(&mut self) -> Result<Arg> {
        if self.peek() == Some(b'[') {
            self.pos += 1;
            if self.peek() == Some(b']') {
                self.pos += 1;
                return Ok(Arg::Numbers(Vec::new()));
            }
            let numeric = self.starts_number();
            let (mut nums, mut laws) = (Vec::new(), Vec::new());
            loop {
                if numeric {
                    nums.push(self.number()?);
                } else {
                    laws.push(self.law()?);
                }
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b']') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `]`")),
                }
            }
            return Ok(if numeric { Arg::Numbers(nums) } else { Arg::Laws(laws) });
        }
        if self.starts_number() {
            return Ok(Arg::Number(self.number()?));
        }
        Ok(Arg::Law(self.law()?))
    }

    fn law(&mut self) -> Result<DistributionSpec> {
        use DistributionSpec::*;
        let name = self.ident();
        if name.is_empty() {
            return Err(self.error("expected a distribution name"));
        }
        if name == "never" && self.peek() != Some(b'(') {
            return Ok(Never);
        }
        self.expect(b'(')?;
        let mut args = Vec::new();
        if self.peek() != Some(b')') {
            loop {
                args.push(self.arg()?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => break,
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
        }
        self.expect(b')')?;

        let nums = |n: usize| -> Result<Vec<f64>> {
            if args.len() != n {
                return Err(Error::Scenario(format!("`{name}` takes {n} numbers, got {} arguments", args.len())));
            }
            args.iter()
                .map(|a| match a {
                    Arg::Number(x) => Ok(*x),
                    _ => Err(Error::Scenario(format!("`{name}` takes numeric arguments"))),
                })
                .collect()
        };
        Ok(match name.as_str() {
            "exp" | "exponential" => Exponential { rate: nums(1)?[0] },
            "weibull" => {
                let v = nums(2)?;
                Weibull { shape: v[0], scale: v[1] }
            }
            "loglogistic" | "ll" => {
                let v = nums(2)?;
                LogLogistic { shape: v[0], scale: v[1] }
            }
            "lognormal" | "ln" => {
                let v = nums(2)?;
                LogNormal { mu: v[0], sigma: v[1] }
            }
            "uniform" | "u" => {
                let v = nums(2)?;
                Uniform { a: v[0], b: v[1] }
            }
            "lomax" => {
                let v = nums(2)?;
                Lomax { shape: v[0], scale: v[1] }
            }
            "never" if args.is_empty() => Never,
            "min" => match <[Arg; 2]>::try_from(args) {
                Ok([Arg::Law(a), Arg::Law(b)]) => MinOf(Box::new(a), Box::new(b)),
                _ => return Err(Error::Scenario("`min` takes two distributions".into())),
            },
            "pwexp" => match <[Arg; 2]>::try_from(args) {
                Ok([Arg::Numbers(breakpoints), Arg::Numbers(rates)]) => PiecewiseExponential { breakpoints, rates },
                _ => return Err(Error::Scenario("`pwexp` takes [breakpoints], [rates]".into())),
            },
            "piecewise" => match <[Arg; 2]>::try_from(args) {
                Ok([Arg::Numbers(breakpoints), Arg::Laws(pieces)]) => Piecewise { breakpoints, pieces },
                _ => return Err(Error::Scenario("`piecewise` takes [breakpoints], [laws]".into())),
            },
            other => return Err(Error::Scenario(format!("unknown distribution `{other}`"))),
        })
    }
}
