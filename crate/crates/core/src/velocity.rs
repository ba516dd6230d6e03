//! Observation-window sequences `G_n`.
//!
//! A velocity resolves, for each `n`, to extents `(g_minus, g_plus)`. The
//! observed window around the central block `[-p, p]` is
//! `[-p - g_plus, p + g_minus]`: `g_plus` pairs with `I_n^+` (influence
//! arriving from the left) and `g_minus` with `I_n^-` (influence arriving
//! from the right), so `g^± >= I_n^{±,*}` makes the window contain every
//! coordinate the trace depends on.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sublinear {
    /// `ceil(c * n^gamma)` with `0 < gamma < 1`.
    Power { c: f64, gamma: f64 },
    /// `ceil(c * ln(n + 1))`.
    Log { c: f64 },
}

impl Sublinear {
    pub fn at(&self, n: usize) -> usize {
        let v = match self {
            Sublinear::Power { c, gamma } => c * (n as f64).powf(*gamma),
            Sublinear::Log { c } => c * ((n + 1) as f64).ln(),
        };
        // guard against 2*sqrt(4) = 4.000000000001 style noise
        (v - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VelocitySpec {
    Linear {
        v_minus: Ratio<i64>,
        v_plus: Ratio<i64>,
    },
    /// The same sublinear sequence on both sides.
    Sublinear(Sublinear),
    /// Per base point: `(I_n^{-,*}(x), I_n^{+,*}(x))`.
    Pointwise,
}

impl VelocitySpec {
    pub fn linear(v_minus: Ratio<i64>, v_plus: Ratio<i64>) -> Result<Self> {
        if v_minus.is_negative() || v_plus.is_negative() {
            return Err(Error::InvalidVelocity(format!(
                "velocities must be non-negative, got ({v_minus}, {v_plus})"
            )));
        }
        Ok(Self::Linear { v_minus, v_plus })
    }

    pub fn linear_int(v_minus: i64, v_plus: i64) -> Result<Self> {
        Self::linear(Ratio::from_integer(v_minus), Ratio::from_integer(v_plus))
    }

    pub fn sublinear(family: Sublinear) -> Result<Self> {
        let ok = match &family {
            Sublinear::Power { c, gamma } => *c > 0.0 && *gamma > 0.0 && *gamma < 1.0,
            Sublinear::Log { c } => *c > 0.0,
        };
        if !ok {
            return Err(Error::InvalidVelocity(format!("bad sublinear parameters {family:?}")));
        }
        Ok(Self::Sublinear(family))
    }

    /// `(g_n^-, g_n^+)`; `None` for pointwise velocities.
    pub fn resolve(&self, n: usize) -> Option<(usize, usize)> {
        match self {
            Self::Linear { v_minus, v_plus } => {
                let n = Ratio::from_integer(n as i64);
                let g = |v: &Ratio<i64>| (v * n).ceil().to_integer() as usize;
                Some((g(v_minus), g(v_plus)))
            }
            Self::Sublinear(f) => {
                let g = f.at(n);
                Some((g, g))
            }
            Self::Pointwise => None,
        }
    }

    /// `(v^-, v^+)` as reals; `(0, 0)` for sublinear and pointwise.
    pub fn speeds(&self) -> (f64, f64) {
        match self {
            Self::Linear { v_minus, v_plus } => (ratio_f64(v_minus), ratio_f64(v_plus)),
            _ => (0.0, 0.0),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    /// Parse `a,b` (linear, `v^-` first), `sqrt:c`, `pow:c:gamma`, `log:c` or
    /// `pointwise`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "pointwise" {
            return Ok(Self::Pointwise);
        }
        let bad = || Error::InvalidVelocity(format!("cannot parse velocity `{t}`"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        if let Some(rest) = t.strip_prefix("sqrt:") {
            return Self::sublinear(Sublinear::Power { c: num(rest)?, gamma: 0.5 });
        }
        if let Some(rest) = t.strip_prefix("pow:") {
            let (c, g) = rest.split_once(':').ok_or_else(bad)?;
            return Self::sublinear(Sublinear::Power { c: num(c)?, gamma: num(g)? });
        }
        if let Some(rest) = t.strip_prefix("log:") {
            return Self::sublinear(Sublinear::Log { c: num(rest)? });
        }
        let (a, b) = t.split_once(',').ok_or_else(bad)?;
        Self::linear(parse_rational(a)?, parse_rational(b)?)
    }
}

impl fmt::Display for VelocitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { v_minus, v_plus } => write!(f, "{v_minus},{v_plus}"),
            Self::Sublinear(Sublinear::Power { c, gamma }) if *gamma == 0.5 => write!(f, "sqrt:{c}"),
            Self::Sublinear(Sublinear::Power { c, gamma }) => write!(f, "pow:{c}:{gamma}"),
            Self::Sublinear(Sublinear::Log { c }) => write!(f, "log:{c}"),
            Self::Pointwise => write!(f, "pointwise"),
        }
    }
}

pub fn ratio_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact rational from `3`, `1/4` or `0.25`.
pub fn parse_rational(text: &str) -> Result<Ratio<i64>> {
    let t = text.trim();
    let bad = |e: String| Error::Parse(format!("bad rational `{t}`: {e}"));
    if t.contains('/') {
        let r: Ratio<i64> = t.parse().map_err(|e| bad(format!("{e}")))?;
        return Ok(r);
    }
    if let Some((int, frac)) = t.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let numer: i64 = digits.parse().map_err(|e| bad(format!("{e}")))?;
        let denom = 10i64
            .checked_pow(frac.len() as u32)
            .ok_or_else(|| bad("too many decimals".into()))?;
        let r = Ratio::new(numer, denom);
        return Ok(if neg { -r } else { r });
    }
    let v: i64 = t.parse().map_err(|e| bad(format!("{e}")))?;
    Ok(Ratio::from_integer(v))
}

/// Observed coordinates `[-p - g_plus, p + g_minus]`.
pub fn g_window(p: usize, g_minus: usize, g_plus: usize) -> (i64, i64) {
    (-(p as i64) - g_plus as i64, p as i64 + g_minus as i64)
}

/// Whether a resolved window observes nothing beyond the central block.
pub fn is_degenerate(g_minus: usize, g_plus: usize) -> bool {
    g_minus.is_zero() && g_plus.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ceilings_are_exact() {
        let v = VelocitySpec::parse("0.25,1/3").unwrap();
        assert_eq!(v.resolve(4), Some((1, 2)));
        assert_eq!(v.resolve(6), Some((2, 2)));
        assert_eq!(VelocitySpec::linear_int(2, 0).unwrap().resolve(5), Some((10, 0)));
        assert!(VelocitySpec::parse("-1,0").is_err());
    }

    #[test]
    fn sublinear_sequences() {
        let v = VelocitySpec::parse("sqrt:2").unwrap();
        assert_eq!(v.resolve(4), Some((4, 4)));
        assert_eq!(v.resolve(5), Some((5, 5)));
        assert_eq!(v.to_string(), "sqrt:2");
        let l = VelocitySpec::parse("log:1").unwrap();
        assert_eq!(l.resolve(1), Some((1, 1)));
        assert!(VelocitySpec::parse("pow:1:1.5").is_err());
        assert_eq!(VelocitySpec::parse("pointwise").unwrap().resolve(3), None);
    }

    #[test]
    fn window_orientation() {
        assert_eq!(g_window(1, 4, 0), (-1, 5));
        assert_eq!(g_window(0, 2, 3), (-3, 2));
        assert!(is_degenerate(0, 0));
    }
}
