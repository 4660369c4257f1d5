use std::fmt;
use std::sync::Arc;

use crate::error::{config, Result};

/// Weight functions for G-sampling. Every variant satisfies `G(0) = 0`.
#[derive(Clone)]
pub enum GFunction {
    /// `|z|^p`.
    Power {
        p: f64,
    },
    /// `sum_d alpha_d |z|^{p_d}` with exponents increasing and `alpha_d < bound`.
    Polynomial {
        terms: Vec<(f64, f64)>,
        bound: f64,
    },
    /// `ln(1 + |z|)`.
    Log,
    /// `min(T, |z|^p)`.
    Cap {
        threshold: f64,
        p: f64,
    },
    Custom(CustomG),
}

/// User-supplied weight with declared bounds `qlow <= G(z) <= upper` on nonzero `z`.
#[derive(Clone)]
pub struct CustomG {
    pub name: String,
    pub eval: Arc<dyn Fn(i64) -> f64 + Send + Sync>,
    pub upper: f64,
    pub qlow: f64,
}

impl GFunction {
    pub fn eval(&self, z: i64) -> f64 {
        if z == 0 {
            return 0.0;
        }
        let a = z.unsigned_abs() as f64;
        match self {
            GFunction::Power { p } => a.powf(*p),
            GFunction::Polynomial { terms, .. } => {
                terms.iter().map(|&(alpha, e)| alpha * a.powf(e)).sum()
            }
            GFunction::Log => a.ln_1p(),
            GFunction::Cap { threshold, p } => threshold.min(a.powf(*p)),
            GFunction::Custom(c) => (c.eval)(z),
        }
    }

    /// Validates the polynomial shape: positive coefficients below the bound,
    /// strictly increasing exponents, and a top exponent above 2.
    pub fn validate(&self) -> Result<()> {
        match self {
            GFunction::Power { p } if !(*p > 0.0) => Err(config("power exponent must be positive")),
            GFunction::Polynomial { terms, bound } => {
                if terms.is_empty() {
                    return Err(config("polynomial needs at least one term"));
                }
                if terms.iter().any(|&(a, _)| !(a > 0.0) || a >= *bound) {
                    return Err(config("polynomial coefficients must lie in (0, M)"));
                }
                if terms.windows(2).any(|w| w[0].1 >= w[1].1) {
                    return Err(config("polynomial exponents must increase"));
                }
                if terms.iter().any(|&(_, e)| e <= 0.0) {
                    return Err(config("polynomial exponents must be positive"));
                }
                Ok(())
            }
            GFunction::Cap { threshold, p } if !(*threshold > 0.0 && *p > 0.0) => {
                Err(config("cap needs positive threshold and exponent"))
            }
            GFunction::Custom(c) if !(c.qlow > 0.0 && c.upper >= c.qlow) => {
                Err(config("custom G needs 0 < qlow <= upper"))
            }
            _ => Ok(()),
        }
    }

    /// Top exponent of a polynomial (or the power itself).
    pub fn degree(&self) -> Option<f64> {
        match self {
            GFunction::Power { p } => Some(*p),
            GFunction::Polynomial { terms, .. } => terms.last().map(|t| t.1),
            _ => None,
        }
    }
}

impl fmt::Debug for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GFunction::Power { p } => write!(f, "|z|^{p}"),
            GFunction::Polynomial { terms, bound } => {
                let parts: Vec<String> = terms.iter().map(|(a, e)| format!("{a}|z|^{e}")).collect();
                write!(f, "{} (M={bound})", parts.join(" + "))
            }
            GFunction::Log => write!(f, "ln(1+|z|)"),
            GFunction::Cap { threshold, p } => write!(f, "min({threshold}, |z|^{p})"),
            GFunction::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero() {
        let gs = [
            GFunction::Power { p: 3.0 },
            GFunction::Polynomial { terms: vec![(1.0, 2.0), (3.0, 4.0)], bound: 4.0 },
            GFunction::Log,
            GFunction::Cap { threshold: 3.0, p: 2.0 },
        ];
        for g in &gs {
            assert_eq!(g.eval(0), 0.0);
        }
    }

    #[test]
    fn values() {
        let poly = GFunction::Polynomial { terms: vec![(1.0, 2.0), (3.0, 4.0)], bound: 4.0 };
        assert_eq!(poly.eval(2), 52.0);
        assert_eq!(poly.eval(-1), 4.0);
        assert_eq!(GFunction::Cap { threshold: 3.0, p: 2.0 }.eval(2), 3.0);
        assert!((GFunction::Log.eval(3) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_validation() {
        let bad = GFunction::Polynomial { terms: vec![(5.0, 2.0), (1.0, 3.0)], bound: 4.0 };
        assert!(bad.validate().is_err());
        let unordered = GFunction::Polynomial { terms: vec![(1.0, 4.0), (1.0, 3.0)], bound: 4.0 };
        assert!(unordered.validate().is_err());
    }
}
