//! Jacobi theta functions in the real-argument parametrization
//!
//! ```text
//! theta2(x) = 2 sum_{n>=1} exp(-(n - 1/2)^2 pi x)
//! theta3(x) = 1 + 2 sum_{n>=1} exp(-n^2 pi x)
//! theta4(x) = 1 + 2 sum_{n>=1} (-1)^n exp(-n^2 pi x)
//! ```
//!
//! evaluated by direct summation with a certified truncation bound.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 100_000;

/// Which of the three theta functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Theta {
    Two,
    Three,
    Four,
}

impl Theta {
    pub fn from_index(k: u8) -> Result<Theta> {
        match k {
            2 => Ok(Theta::Two),
            3 => Ok(Theta::Three),
            4 => Ok(Theta::Four),
            _ => Err(Error::InvalidArgument(format!("theta index {k} not in {{2,3,4}}"))),
        }
    }

    /// Exponent multiplier `k_n` and sign of term `n >= 1`.
    fn term(self, n: usize) -> (f64, f64) {
        let nf = n as f64;
        match self {
            Theta::Two => ((nf - 0.5) * (nf - 0.5), 1.0),
            Theta::Three => (nf * nf, 1.0),
            Theta::Four => (nf * nf, if n % 2 == 1 { -1.0 } else { 1.0 }),
        }
    }
}

/// A theta value (or derivative) with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEval {
    pub x: f64,
    pub value: f64,
    pub terms_used: usize,
    /// Bound on the truncated remainder of the series.
    pub tail_bound: f64,
    /// Bound on floating-point error of the partial sum.
    pub rounding_bound: f64,
}

/// Evaluate the `order`-th derivative (0, 1 or 2) of `kind` at `x`.
///
/// Terms are summed until one falls below `tol / 10` past the peak of the
/// term sequence; the remainder is bounded by a geometric series using the
/// ratio of the first two omitted terms, which decreases from there on.
pub fn theta_eval(kind: Theta, order: u32, x: f64, tol: f64) -> Result<ThetaEval> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("theta argument must be > 0, got {x}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    if order > 2 {
        return Err(Error::InvalidArgument(format!("derivative order {order} > 2")));
    }
    let mag = |n: usize| -> f64 {
        let (k, _) = kind.term(n);
        2.0 * (k * PI).powi(order as i32) * (-k * PI * x).exp()
    };
    let mut terms: Vec<f64> = Vec::new();
    let mut n = 1;
    let tail_bound;
    loop {
        let m = mag(n);
        let (_, sign) = kind.term(n);
        let dsign = if order % 2 == 1 { -1.0 } else { 1.0 };
        terms.push(sign * dsign * m);
        let next = mag(n + 1);
        let after = mag(n + 2);
        if next < tol / 10.0 && next <= m && after < next {
            let r = after / next;
            tail_bound = next / (1.0 - r);
            break;
        }
        if next == 0.0 {
            // every remaining term underflows
            tail_bound = 0.0;
            break;
        }
        if n >= MAX_TERMS {
            let r = if next > 0.0 { (after / next).min(1.0 - 1e-16) } else { 0.0 };
            let bound = next / (1.0 - r);
            return Err(Error::NumericFailure(format!(
                "theta series at x={x:e} not converged after {MAX_TERMS} terms (tail bound {bound:e} > tol {tol:e})"
            )));
        }
        n += 1;
    }
    // Smallest terms first, compensated.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &t in terms.iter().rev() {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    let mut value = sum + comp;
    if order == 0 && kind != Theta::Two {
        value += 1.0;
    }
    if order == 0 && kind == Theta::Four {
        // theta4 is a product of positive factors; cancellation can only
        // produce rounding-level negatives.
        value = value.max(0.0);
    }
    let rounding = 4.0 * f64::EPSILON * terms.iter().map(|t| t.abs()).sum::<f64>();
    Ok(ThetaEval { x, value, terms_used: terms.len(), tail_bound, rounding_bound: rounding })
}

/// `theta_k(x)` for `k` in {2, 3, 4}.
pub fn theta(k: u8, x: f64, tol: f64) -> Result<ThetaEval> {
    theta_eval(Theta::from_index(k)?, 0, x, tol)
}

/// First derivative in `x`.
pub fn theta_d1(k: u8, x: f64, tol: f64) -> Result<ThetaEval> {
    theta_eval(Theta::from_index(k)?, 1, x, tol)
}

/// Second derivative in `x`.
pub fn theta_d2(k: u8, x: f64, tol: f64) -> Result<ThetaEval> {
    theta_eval(Theta::from_index(k)?, 2, x, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta3_at_50_is_one() {
        let t = theta(3, 50.0, 1e-70).unwrap();
        assert!((t.value - 1.0).abs() < 1e-60);
        assert!(t.terms_used >= 1);
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(matches!(theta(2, 0.0, 1e-12), Err(Error::InvalidArgument(_))));
        assert!(matches!(theta(4, -1.0, 1e-12), Err(Error::InvalidArgument(_))));
        assert!(theta(5, 1.0, 1e-12).is_err());
    }

    #[test]
    fn underflowing_terms_stop_the_series() {
        for k in 2..=4u8 {
            for x in [300.0, 534.4, 1e4] {
                let t = theta(k, x, 1e-14).unwrap();
                if k == 2 {
                    assert!(t.value <= 2.0 * (-PI * x / 4.0).exp() * (1.0 + 1e-12));
                } else {
                    assert_eq!(t.value, 1.0);
                }
            }
        }
    }

    #[test]
    fn tail_bound_respects_tolerance() {
        for &x in &[1e-4, 1e-2, 0.3, 2.0, 20.0] {
            for k in 2..=4u8 {
                for order in 0..=2 {
                    let t = theta_eval(Theta::from_index(k).unwrap(), order, x, 1e-12).unwrap();
                    assert!(t.tail_bound <= 1e-12, "{k} {order} {x} {t:?}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &x in &[0.05, 0.4, 1.7] {
            for k in 2..=4u8 {
                let h = 1e-5 * x;
                let f = |x: f64| theta(k, x, 1e-15).unwrap().value;
                let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
                let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                let a1 = theta_d1(k, x, 1e-14).unwrap().value;
                let a2 = theta_d2(k, x, 1e-14).unwrap().value;
                assert!((d1 - a1).abs() < 1e-6 * (1.0 + a1.abs()), "k={k} x={x} {d1} {a1}");
                assert!((d2 - a2).abs() < 1e-3 * (1.0 + a2.abs()), "k={k} x={x} {d2} {a2}");
            }
        }
    }
}
