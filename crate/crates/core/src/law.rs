//! Single-edge conductance laws.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{unit_f64, unit_f64_open0};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConductanceLaw {
    Constant { value: f64 },
    /// 1 with probability `q`, else 0.
    Bernoulli { q: f64 },
    /// `hi` with probability `q`, else `lo`.
    TwoPoint { q: f64, lo: f64, hi: f64 },
    /// 0 with probability `1 - q`, else uniform on `(0, 1]`.
    ZeroUniformMixture { q: f64 },
    /// `P(w <= a) = a^gamma` on `(0, 1]`.
    PolynomialTail { gamma: f64 },
}

fn check_prob(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("probability {q} outside [0,1]")))
    }
}

impl ConductanceLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConductanceLaw::Constant { value } => {
                if (0.0..=1.0).contains(&value) {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("constant conductance {value} outside [0,1]")))
                }
            }
            ConductanceLaw::Bernoulli { q } | ConductanceLaw::ZeroUniformMixture { q } => {
                check_prob(q)
            }
            ConductanceLaw::TwoPoint { q, lo, hi } => {
                check_prob(q)?;
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "two-point law needs 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}"
                    )));
                }
                Ok(())
            }
            ConductanceLaw::PolynomialTail { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("tail exponent must be positive, got {gamma}")))
                }
            }
        }
    }

    /// Draws one value from two independent uniform words. Every edge consumes
    /// exactly two words so the value is a pure function of its counter.
    #[inline]
    pub fn draw(&self, w1: u64, w2: u64) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => value,
            ConductanceLaw::Bernoulli { q } => {
                if unit_f64(w1) < q {
                    1.0
                } else {
                    0.0
                }
            }
            ConductanceLaw::TwoPoint { q, lo, hi } => {
                if unit_f64(w1) < q {
                    hi
                } else {
                    lo
                }
            }
            ConductanceLaw::ZeroUniformMixture { q } => {
                if unit_f64(w1) < q {
                    unit_f64_open0(w2)
                } else {
                    0.0
                }
            }
            ConductanceLaw::PolynomialTail { gamma } => unit_f64_open0(w2).powf(1.0 / gamma),
        }
    }

    /// `P(w >= xi)`, or `P(w > 0)` when `xi == 0`.
    pub fn prob_open(&self, xi: f64) -> f64 {
        let ge = |v: f64| if xi == 0.0 { v > 0.0 } else { v >= xi };
        match *self {
            ConductanceLaw::Constant { value } => f64::from(u8::from(ge(value))),
            ConductanceLaw::Bernoulli { q } => q * f64::from(u8::from(ge(1.0))),
            ConductanceLaw::TwoPoint { q, lo, hi } => {
                q * f64::from(u8::from(ge(hi))) + (1.0 - q) * f64::from(u8::from(ge(lo)))
            }
            ConductanceLaw::ZeroUniformMixture { q } => {
                if xi > 1.0 {
                    0.0
                } else {
                    q * (1.0 - xi)
                }
            }
            ConductanceLaw::PolynomialTail { gamma } => {
                if xi > 1.0 {
                    0.0
                } else {
                    1.0 - xi.powf(gamma)
                }
            }
        }
    }

    /// `P(w <= a)`.
    pub fn cdf(&self, a: f64) -> f64 {
        let step = |v: f64| f64::from(u8::from(v <= a));
        match *self {
            ConductanceLaw::Constant { value } => step(value),
            ConductanceLaw::Bernoulli { q } => q * step(1.0) + (1.0 - q) * step(0.0),
            ConductanceLaw::TwoPoint { q, lo, hi } => q * step(hi) + (1.0 - q) * step(lo),
            ConductanceLaw::ZeroUniformMixture { q } => {
                if a < 0.0 {
                    0.0
                } else {
                    (1.0 - q) + q * a.min(1.0)
                }
            }
            ConductanceLaw::PolynomialTail { gamma } => {
                if a <= 0.0 {
                    0.0
                } else {
                    a.min(1.0).powf(gamma)
                }
            }
        }
    }

    /// Infimum of the support restricted to positive values.
    pub fn positive_essential_inf(&self) -> Option<f64> {
        match *self {
            ConductanceLaw::Constant { value } => (value > 0.0).then_some(value),
            ConductanceLaw::Bernoulli { q } => (q > 0.0).then_some(1.0),
            ConductanceLaw::TwoPoint { q, lo, hi } => {
                if lo > 0.0 && q < 1.0 {
                    Some(lo)
                } else if q > 0.0 {
                    Some(hi)
                } else {
                    (lo > 0.0).then_some(lo)
                }
            }
            ConductanceLaw::ZeroUniformMixture { q } => (q > 0.0).then_some(0.0),
            ConductanceLaw::PolynomialTail { .. } => Some(0.0),
        }
    }
}

impl fmt::Display for ConductanceLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConductanceLaw::Constant { value } => write!(f, "constant:{value}"),
            ConductanceLaw::Bernoulli { q } => write!(f, "bernoulli:{q}"),
            ConductanceLaw::TwoPoint { q, lo, hi } => write!(f, "two-point:{q},{lo},{hi}"),
            ConductanceLaw::ZeroUniformMixture { q } => write!(f, "zero-uniform:{q}"),
            ConductanceLaw::PolynomialTail { gamma } => write!(f, "poly-tail:{gamma}"),
        }
    }
}

impl FromStr for ConductanceLaw {
    type Err = Error;

    /// Parses the textual tags produced by `Display`, e.g. `bernoulli:0.6`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("law '{s}' must look like name:params")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad number '{a}' in law '{s}'")))
            })
            .collect::<Result<_>>()?;
        let want = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Parameter(format!("law '{name}' takes {n} parameter(s)")))
            }
        };
        let law = match name {
            "constant" => {
                want(1)?;
                ConductanceLaw::Constant { value: nums[0] }
            }
            "bernoulli" => {
                want(1)?;
                ConductanceLaw::Bernoulli { q: nums[0] }
            }
            "two-point" => {
                want(3)?;
                ConductanceLaw::TwoPoint { q: nums[0], lo: nums[1], hi: nums[2] }
            }
            "zero-uniform" => {
                want(1)?;
                ConductanceLaw::ZeroUniformMixture { q: nums[0] }
            }
            "poly-tail" => {
                want(1)?;
                ConductanceLaw::PolynomialTail { gamma: nums[0] }
            }
            other => return Err(Error::Parameter(format!("unknown law '{other}'"))),
        };
        law.validate()?;
        Ok(law)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["constant:1", "bernoulli:0.6", "two-point:0.5,0.1,1", "zero-uniform:0.75", "poly-tail:0.1"] {
            let law: ConductanceLaw = s.parse().unwrap();
            assert_eq!(law.to_string().parse::<ConductanceLaw>().unwrap(), law);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!("bernoulli:1.5".parse::<ConductanceLaw>().is_err());
        assert!("two-point:0.5,0.7,0.2".parse::<ConductanceLaw>().is_err());
        assert!("poly-tail:0".parse::<ConductanceLaw>().is_err());
        assert!("constant:2".parse::<ConductanceLaw>().is_err());
        assert!("gauss:1".parse::<ConductanceLaw>().is_err());
    }

    #[test]
    fn draws_stay_in_unit_interval() {
        let laws = [
            ConductanceLaw::PolynomialTail { gamma: 0.1 },
            ConductanceLaw::ZeroUniformMixture { q: 0.5 },
            ConductanceLaw::TwoPoint { q: 0.3, lo: 0.0, hi: 1.0 },
        ];
        for law in laws {
            for w in [0u64, 1, u64::MAX, 1 << 63] {
                let v = law.draw(w, w.rotate_left(17));
                assert!((0.0..=1.0).contains(&v), "{law}: {v}");
            }
        }
    }
}
