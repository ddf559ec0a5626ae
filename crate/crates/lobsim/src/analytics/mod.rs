//! Closed-form laws of the trading excursion measure.
//!
//! `R` is the length and `H` the height of an excursion of `alpha - W` from
//! zero, `n` the excursion (intensity) measure normalized so that
//! `n[H >= x] = 1/(2x)` for `0 < x <= mu`. All functions are pure and return
//! a value together with a bound on its numerical error.

pub mod quad;
pub mod theta;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
pub use theta::{theta, theta_d1, theta_d2, theta_eval, Theta, ThetaEval};

/// Truncation tolerance used for every theta evaluation in the tables.
pub const THETA_TOL: f64 = 1e-14;

/// A numerical value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Approx {
    pub value: f64,
    pub error_bound: f64,
}

impl Approx {
    fn exact(value: f64) -> Approx {
        Approx { value, error_bound: 8.0 * f64::EPSILON * value.abs() }
    }
}

/// Inputs of a table query. Unused fields are ignored by a given quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQuery {
    pub mu: f64,
    pub lambda: f64,
    pub x: f64,
    pub y: f64,
    pub eps: f64,
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite and > 0, got {v}"))
    }
}

fn check_height(y: f64, mu: f64) -> Result<()> {
    check_pos("mu", mu)?;
    if y > 0.0 && y <= mu {
        Ok(())
    } else {
        invalid(format!("height y must lie in (0, mu={mu}], got {y}"))
    }
}

/// `z coth z - 1`, accurate near zero.
fn zcothz_m1(z: f64) -> f64 {
    if z < 0.05 {
        let z2 = z * z;
        z2 / 3.0 - z2 * z2 / 45.0 + 2.0 * z2 * z2 * z2 / 945.0 - z2 * z2 * z2 * z2 / 4725.0
    } else {
        z / z.tanh() - 1.0
    }
}

/// `1 - w / sinh w`, accurate near zero.
fn one_m_wcschw(w: f64) -> f64 {
    if w < 0.05 {
        let w2 = w * w;
        w2 / 6.0 - 7.0 * w2 * w2 / 360.0 + 31.0 * w2 * w2 * w2 / 15120.0
    } else if w > 700.0 {
        1.0
    } else {
        1.0 - w / w.sinh()
    }
}

/// `n[1 - e^{-lambda R}; H < y] = -1/(2y) + (1/2) sqrt(2 lambda) coth(y sqrt(2 lambda))`.
pub fn laplace_r_below(lambda: f64, y: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_height(y, mu)?;
    let z = y * (2.0 * lambda).sqrt();
    Ok(Approx::exact(zcothz_m1(z) / (2.0 * y)))
}

/// `n[1 - e^{-lambda R_I}]`, the Type I part (`H < mu`).
pub fn laplace_r_i(lambda: f64, mu: f64) -> Result<Approx> {
    laplace_r_below(lambda, mu, mu)
}

/// `n[1 - e^{-lambda R_II}] = 1/(2mu) - sqrt(2 lambda) csch(2 mu sqrt(2 lambda))`.
pub fn laplace_r_ii(lambda: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("mu", mu)?;
    let w = 2.0 * mu * (2.0 * lambda).sqrt();
    Ok(Approx::exact(one_m_wcschw(w) / (2.0 * mu)))
}

/// `n[1 - e^{-lambda R}] = (1/2) sqrt(2 lambda) tanh(mu sqrt(2 lambda))`.
pub fn laplace_r(lambda: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("mu", mu)?;
    let s = (2.0 * lambda).sqrt();
    Ok(Approx::exact(0.5 * s * (mu * s).tanh()))
}

/// Alternative form of the Type I transform: `n[1 - e^{-lambda R} 1{H<mu}]`,
/// which also counts every Type II excursion with weight one.
pub fn laplace_r_i_alt(lambda: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("mu", mu)?;
    let s = (2.0 * lambda).sqrt();
    Ok(Approx::exact(0.5 * s / (mu * s).tanh()))
}

/// Alternative form of the Type II transform: `n[e^{-lambda R}; H = mu]`.
pub fn laplace_r_ii_alt(lambda: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("mu", mu)?;
    let s = (2.0 * lambda).sqrt();
    let w = 2.0 * mu * s;
    let v = if w > 700.0 { 0.0 } else { s / w.sinh() };
    Ok(Approx::exact(v))
}

fn theta_at(kind: Theta, order: u32, u: f64) -> Result<ThetaEval> {
    theta_eval(kind, order, u, THETA_TOL)
}

/// `n[R > x, H < y] = (1/(2y)) [theta3(pi x / (2 y^2)) - 1]`.
pub fn tail_r_below(x: f64, y: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_height(y, mu)?;
    let t = theta_at(Theta::Three, 0, PI * x / (2.0 * y * y))?;
    Ok(Approx { value: (t.value - 1.0) / (2.0 * y), error_bound: (t.tail_bound + t.rounding_bound) / (2.0 * y) })
}

/// `n[R > x, H = mu] = (1/(2mu)) [1 - theta4(pi x / (8 mu^2))]`.
///
/// At `x = 0` the series limit `1/(2mu)` is not evaluated; `x` must be > 0.
pub fn tail_r_type_ii(x: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_pos("mu", mu)?;
    let t = theta_at(Theta::Four, 0, PI * x / (8.0 * mu * mu))?;
    Ok(Approx { value: (1.0 - t.value) / (2.0 * mu), error_bound: (t.tail_bound + t.rounding_bound) / (2.0 * mu) })
}

/// `n[R > x] = (1/(2mu)) theta2(pi x / (2 mu^2))`.
pub fn tail_r(x: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_pos("mu", mu)?;
    let t = theta_at(Theta::Two, 0, PI * x / (2.0 * mu * mu))?;
    Ok(Approx { value: t.value / (2.0 * mu), error_bound: (t.tail_bound + t.rounding_bound) / (2.0 * mu) })
}

/// `P(R <= x | H = mu) = theta4(pi x / (8 mu^2))`, the conditional CDF of a
/// Type II excursion length.
pub fn cdf_r_given_type_ii(x: f64, mu: f64) -> Result<Approx> {
    let t = tail_r_type_ii(x, mu)?;
    Ok(Approx { value: 1.0 - 2.0 * mu * t.value, error_bound: 2.0 * mu * t.error_bound })
}

/// Density `h(x) = -(pi / (4 mu^3)) theta2'(pi x / (2 mu^2))` of `R` under `n`.
pub fn density_r(x: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_pos("mu", mu)?;
    let c = PI / (4.0 * mu * mu * mu);
    let t = theta_at(Theta::Two, 1, PI * x / (2.0 * mu * mu))?;
    Ok(Approx { value: -c * t.value, error_bound: c * (t.tail_bound + t.rounding_bound) })
}

/// Joint density of `(R, H)` on `{H < mu}`: the `y`-derivative of
/// [`tail_r_below`] with the `x`-derivative taken, i.e.
/// `n[R in dx, H in dy] / (dx dy)`.
pub fn joint_density_r_h(x: f64, y: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_height(y, mu)?;
    if y == mu {
        return invalid("the joint density is defined for y < mu; H = mu carries an atom");
    }
    let u = PI * x / (2.0 * y * y);
    let d1 = theta_at(Theta::Three, 1, u)?;
    let d2 = theta_at(Theta::Three, 2, u)?;
    let a = 3.0 * PI / (4.0 * y.powi(4));
    let b = PI * PI * x / (4.0 * y.powi(6));
    Ok(Approx {
        value: a * d1.value + b * d2.value,
        error_bound: a * (d1.tail_bound + d1.rounding_bound) + b * (d2.tail_bound + d2.rounding_bound),
    })
}

/// Density of `R` on the atom `{H = mu}`: `-(pi / (16 mu^3)) theta4'(pi x / (8 mu^2))`.
pub fn density_r_type_ii(x: f64, mu: f64) -> Result<Approx> {
    check_pos("x", x)?;
    check_pos("mu", mu)?;
    let c = PI / (16.0 * mu * mu * mu);
    let t = theta_at(Theta::Four, 1, PI * x / (8.0 * mu * mu))?;
    Ok(Approx { value: -c * t.value, error_bound: c * (t.tail_bound + t.rounding_bound) })
}

/// `n[H >= x] = 1/(2x)` for `0 < x <= mu`, zero above `mu`.
pub fn tail_h(x: f64, mu: f64) -> Result<f64> {
    check_pos("x", x)?;
    check_pos("mu", mu)?;
    Ok(if x <= mu { 1.0 / (2.0 * x) } else { 0.0 })
}

/// Generic avalanche transform `H / (H + int_0^eps (1 - e^{-lambda x}) h(x) dx)`
/// for a jump density `h` with tail `h_tail = int_eps^inf h`.
///
/// The integral is taken in `x = s^2` so that an `x^{-3/2}` singularity of
/// `h` at zero leaves a bounded integrand.
pub fn avalanche_laplace_from(h: impl Fn(f64) -> Result<f64>, h_tail: Approx, lambda: f64, eps: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("eps", eps)?;
    let mut failure: Option<Error> = None;
    let integrand = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let x = s * s;
        match h(x) {
            Ok(v) => -(-lambda * x).exp_m1() * v * 2.0 * s,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let q = quad::integrate(integrand, 0.0, eps.sqrt(), 1e-300, 1e-12).map_err(|e| match e {
        Error::NumericFailure(m) => {
            Error::NumericFailure(format!("avalanche integral (lambda={lambda}, eps={eps}): {m}"))
        }
        other => other,
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let q = q?;
    let big_h = h_tail.value;
    let v = big_h / (big_h + q.value);
    // First-order propagation of both error sources.
    let d_h = q.value / (big_h + q.value).powi(2);
    let d_i = big_h / (big_h + q.value).powi(2);
    Ok(Approx { value: v, error_bound: d_h * h_tail.error_bound + d_i * q.error })
}

/// `E[exp(-lambda A^eps)]` for the length of an epsilon-avalanche:
/// `H(eps) / (H(eps) + int_0^eps (1 - e^{-lambda x}) h(x) dx)` with
/// `H(eps) = n[R > eps]`.
pub fn avalanche_laplace(lambda: f64, eps: f64, mu: f64) -> Result<Approx> {
    check_pos("mu", mu)?;
    let tail = tail_r(eps, mu)?;
    avalanche_laplace_from(|x| density_r(x, mu).map(|a| a.value), tail, lambda, eps)
}

/// Rate `beta = n[R > eps]` of the exponential stopping in the avalanche
/// decomposition `A = J_S`, `S ~ Exp(beta)`.
pub fn avalanche_beta(eps: f64, mu: f64) -> Result<Approx> {
    tail_r(eps, mu)
}

/// Laplace exponent `kappa(lambda) = int_0^eps (1 - e^{-lambda x}) h(x) dx`
/// of the subordinator `J` in the avalanche decomposition.
pub fn avalanche_kappa(lambda: f64, eps: f64, mu: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("eps", eps)?;
    check_pos("mu", mu)?;
    let q = quad::integrate(
        |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let x = s * s;
            density_r(x, mu).map(|a| -(-lambda * x).exp_m1() * a.value * 2.0 * s).unwrap_or(f64::NAN)
        },
        0.0,
        eps.sqrt(),
        1e-300,
        1e-12,
    )?;
    Ok(Approx { value: q.value, error_bound: q.error })
}

/// Type-I-only avalanche transform `1 / (sqrt(lambda eps pi) erf(sqrt(lambda eps)) + e^{-lambda eps})`.
pub fn dassios_wu_laplace(lambda: f64, eps: f64) -> Result<Approx> {
    check_pos("lambda", lambda)?;
    check_pos("eps", eps)?;
    let r = (lambda * eps).sqrt();
    let d = (PI * lambda * eps).sqrt() * statrs::function::erf::erf(r) + (-lambda * eps).exp();
    Ok(Approx::exact(1.0 / d))
}

/// The same transform through the generic route with
/// `h(x) = x^{-3/2} / sqrt(2 pi)` and `H(eps) = sqrt(2 / (pi eps))`.
pub fn dassios_wu_laplace_quadrature(lambda: f64, eps: f64) -> Result<Approx> {
    check_pos("eps", eps)?;
    let tail = Approx::exact((2.0 / (PI * eps)).sqrt());
    avalanche_laplace_from(|x| Ok(x.powf(-1.5) / (2.0 * PI).sqrt()), tail, lambda, eps)
}

/// Quantities exposed through the table interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    LaplaceRBelow,
    LaplaceRI,
    LaplaceRII,
    LaplaceR,
    TailRBelow,
    TailRTypeII,
    TailR,
    DensityR,
    AvalancheLaplace,
    DassiosWuLaplace,
}

impl Quantity {
    pub const ALL: [Quantity; 10] = [
        Quantity::LaplaceRBelow,
        Quantity::LaplaceRI,
        Quantity::LaplaceRII,
        Quantity::LaplaceR,
        Quantity::TailRBelow,
        Quantity::TailRTypeII,
        Quantity::TailR,
        Quantity::DensityR,
        Quantity::AvalancheLaplace,
        Quantity::DassiosWuLaplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::LaplaceRBelow => "laplace_R_below",
            Quantity::LaplaceRI => "laplace_RI",
            Quantity::LaplaceRII => "laplace_RII",
            Quantity::LaplaceR => "laplace_R",
            Quantity::TailRBelow => "tail_R_below",
            Quantity::TailRTypeII => "tail_R_typeII",
            Quantity::TailR => "tail_R",
            Quantity::DensityR => "density_R",
            Quantity::AvalancheLaplace => "avalanche_laplace",
            Quantity::DassiosWuLaplace => "dassios_wu_laplace",
        }
    }

    pub fn parse(s: &str) -> Option<Quantity> {
        Quantity::ALL.into_iter().find(|q| q.name().eq_ignore_ascii_case(s))
    }

    /// Whether the first free column is a Laplace argument (else a duration).
    pub fn uses_lambda(self) -> bool {
        matches!(
            self,
            Quantity::LaplaceRBelow
                | Quantity::LaplaceRI
                | Quantity::LaplaceRII
                | Quantity::LaplaceR
                | Quantity::AvalancheLaplace
                | Quantity::DassiosWuLaplace
        )
    }

    /// Whether the second free column is an avalanche window (else a height).
    pub fn uses_eps(self) -> bool {
        matches!(self, Quantity::AvalancheLaplace | Quantity::DassiosWuLaplace)
    }

    pub fn evaluate(self, q: &AnalyticQuery) -> Result<Approx> {
        match self {
            Quantity::LaplaceRBelow => laplace_r_below(q.lambda, q.y, q.mu),
            Quantity::LaplaceRI => laplace_r_i(q.lambda, q.mu),
            Quantity::LaplaceRII => laplace_r_ii(q.lambda, q.mu),
            Quantity::LaplaceR => laplace_r(q.lambda, q.mu),
            Quantity::TailRBelow => tail_r_below(q.x, q.y, q.mu),
            Quantity::TailRTypeII => tail_r_type_ii(q.x, q.mu),
            Quantity::TailR => tail_r(q.x, q.mu),
            Quantity::DensityR => density_r(q.x, q.mu),
            Quantity::AvalancheLaplace => avalanche_laplace(q.lambda, q.eps, q.mu),
            Quantity::DassiosWuLaplace => dassios_wu_laplace(q.lambda, q.eps),
        }
    }
}
