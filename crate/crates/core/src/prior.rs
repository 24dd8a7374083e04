//! Prior distributions over the reported winner's vote share (or tally).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::special::{ln_beta, xlogy};

/// Prior for a Bayesian audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// Point masses `weight0` at `p0` (null) and `weight1` at `p1` (alternative).
    PointPair {
        p0: f64,
        p1: f64,
        weight0: f64,
        weight1: f64,
    },
    /// Beta(a, b) on the vote share.
    Beta { a: f64, b: f64 },
    /// Beta-binomial(N, a, b) on the winner's true tally.
    BetaBinomial { total_ballots: u64, a: f64, b: f64 },
    /// Mass 1/2 at a tie plus a Beta(a, b) truncated to `(1/2, 1]` carrying the other half.
    RiskMaximizing { a: f64, b: f64 },
    /// KMart weighting function `g(γ)`; equivalent to the risk-maximizing
    /// prior with density `2 g(2p - 1)` above one half.
    WeightedKmart { weight: WeightFn },
}

impl PriorSpec {
    pub fn uniform() -> Self {
        PriorSpec::Beta { a: 1.0, b: 1.0 }
    }

    pub fn symmetric_point_pair(p1: f64) -> Self {
        PriorSpec::PointPair {
            p0: 0.5,
            p1,
            weight0: 0.5,
            weight1: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shapes_ok = |a: f64, b: f64| a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
        match *self {
            PriorSpec::PointPair {
                p0,
                p1,
                weight0,
                weight1,
            } => {
                if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&p1) {
                    return invalid(format!(
                        "point-pair probabilities must lie in [0, 1] (p0={p0}, p1={p1})"
                    ));
                }
                if p0 >= p1 {
                    return invalid(format!(
                        "point-pair prior requires p0 < p1 (p0={p0}, p1={p1})"
                    ));
                }
                if !(weight0 >= 0.0 && weight1 >= 0.0) || ((weight0 + weight1) - 1.0).abs() > 1e-12
                {
                    return invalid(format!(
                        "point-pair weights must be nonnegative and sum to 1 (got {weight0}, {weight1})"
                    ));
                }
                Ok(())
            }
            PriorSpec::Beta { a, b } | PriorSpec::RiskMaximizing { a, b } => {
                if shapes_ok(a, b) {
                    Ok(())
                } else {
                    invalid(format!(
                        "prior shape parameters must be positive (a={a}, b={b})"
                    ))
                }
            }
            PriorSpec::BetaBinomial {
                total_ballots,
                a,
                b,
            } => {
                if total_ballots == 0 {
                    return invalid("beta-binomial prior needs at least one ballot");
                }
                if shapes_ok(a, b) {
                    Ok(())
                } else {
                    invalid(format!(
                        "prior shape parameters must be positive (a={a}, b={b})"
                    ))
                }
            }
            PriorSpec::WeightedKmart { ref weight } => weight.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PriorSpec::PointPair { p0, p1, .. } => format!("point pair p0 = {p0}, p1 = {p1}"),
            PriorSpec::Beta { a, b } | PriorSpec::BetaBinomial { a, b, .. } => shape_label(*a, *b),
            PriorSpec::RiskMaximizing { a, b } => format!("risk-max., {}", shape_label(*a, *b)),
            PriorSpec::WeightedKmart { weight } => format!("weighted KMart g = {weight}"),
        }
    }
}

fn shape_label(a: f64, b: f64) -> String {
    if a == b {
        format!("a = b = {a}")
    } else {
        format!("a = {a}, b = {b}")
    }
}

/// Weighting function for the generalized KMart statistic.
#[derive(Clone, Default)]
pub enum WeightFn {
    /// `g ≡ 1`, the original KMart.
    #[default]
    Uniform,
    /// Beta(a, b) density on `γ ∈ [0, 1]`.
    Beta { a: f64, b: f64 },
    /// Arbitrary nonnegative weight. Not serializable.
    Custom {
        name: String,
        func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl WeightFn {
    pub fn custom(
        name: impl Into<String>,
        func: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightFn::Custom {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn eval(&self, gamma: f64) -> f64 {
        match self {
            WeightFn::Uniform => 1.0,
            WeightFn::Beta { a, b } => {
                (xlogy(a - 1.0, gamma) + xlogy(b - 1.0, 1.0 - gamma) - ln_beta(*a, *b)).exp()
            }
            WeightFn::Custom { func, .. } => func(gamma),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, WeightFn::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFn::Uniform => Ok(()),
            WeightFn::Beta { a, b } => {
                if *a > 0.0 && *b > 0.0 {
                    Ok(())
                } else {
                    invalid(format!(
                        "beta weight shapes must be positive (a={a}, b={b})"
                    ))
                }
            }
            WeightFn::Custom { name, func } => {
                // spot-check nonnegativity on a grid
                for i in 1..64 {
                    let g = func(i as f64 / 64.0);
                    if !(g >= 0.0) || !g.is_finite() {
                        return invalid(format!(
                            "weight function {name} is negative or not finite at {}",
                            i as f64 / 64.0
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFn::Uniform => write!(f, "uniform"),
            WeightFn::Beta { a, b } => write!(f, "beta({a}, {b})"),
            WeightFn::Custom { name, .. } => write!(f, "custom({name})"),
        }
    }
}

impl PartialEq for WeightFn {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (WeightFn::Uniform, WeightFn::Uniform) => true,
            (WeightFn::Beta { a, b }, WeightFn::Beta { a: a2, b: b2 }) => a == a2 && b == b2,
            (WeightFn::Custom { func, .. }, WeightFn::Custom { func: f2, .. }) => {
                Arc::ptr_eq(func, f2)
            }
            _ => false,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum WeightRepr {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl Serialize for WeightFn {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WeightFn::Uniform => WeightRepr::Uniform.serialize(serializer),
            WeightFn::Beta { a, b } => WeightRepr::Beta { a: *a, b: *b }.serialize(serializer),
            WeightFn::Custom { name, .. } => Err(serde::ser::Error::custom(format!(
                "custom weight function {name} cannot be serialized"
            ))),
        }
    }
}

impl<'de> Deserialize<'de> for WeightFn {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(match WeightRepr::deserialize(deserializer)? {
            WeightRepr::Uniform => WeightFn::Uniform,
            WeightRepr::Beta { a, b } => WeightFn::Beta { a, b },
        })
    }
}
