//! Closed-form Black-Scholes prices.
//!
//! These serve as the degenerate-case reference for the PDE solvers: with a
//! convex payoff the worst-case price is the Black-Scholes price at the upper
//! volatility, with a concave one at the lower volatility.

use libm::erfc;

use crate::error::{Error, Result};
use crate::payoff::Leg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsQuote {
    pub spot: f64,
    pub strike: f64,
    /// Annualized volatility.
    pub vol: f64,
    /// Years.
    pub maturity: f64,
    pub rate: f64,
}

impl BsQuote {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("spot", self.spot),
            ("strike", self.strike),
            ("vol", self.vol),
            ("maturity", self.maturity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.rate.is_finite() {
            return Err(Error::InvalidInput("rate must be finite".into()));
        }
        Ok(())
    }
}

/// Standard normal CDF, `Phi(x) = erfc(-x / sqrt 2) / 2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn bs_call(q: &BsQuote) -> Result<f64> {
    q.validate()?;
    Ok(call_price(q.spot, q.strike, q.vol, q.maturity, q.rate))
}

pub fn bs_put(q: &BsQuote) -> Result<f64> {
    q.validate()?;
    Ok(put_price(q.spot, q.strike, q.vol, q.maturity, q.rate))
}

/// `C(k1) + w2 C(k2) + w3 C(k3)` with the weights of
/// [`PayoffSpec::Butterfly`](crate::payoff::PayoffSpec::Butterfly).
pub fn bs_butterfly(
    spot: f64,
    strikes: (f64, f64, f64),
    vol: f64,
    maturity: f64,
    rate: f64,
) -> Result<f64> {
    let (k1, k2, k3) = strikes;
    if !(k1 < k2 && k2 < k3) {
        return Err(Error::InvalidInput(format!(
            "butterfly strikes must be increasing: {k1}, {k2}, {k3}"
        )));
    }
    let quote = |strike| BsQuote {
        spot,
        strike,
        vol,
        maturity,
        rate,
    };
    let wing = k3 - k2;
    Ok(bs_call(&quote(k1))? - (k3 - k1) / wing * bs_call(&quote(k2))?
        + (k2 - k1) / wing * bs_call(&quote(k3))?)
}

/// Prices a static vanilla position. Unlike [`bs_call`] this accepts
/// `spot = 0` (options on an absorbed asset) and returns discounted
/// intrinsic values when `vol * sqrt(maturity)` vanishes.
pub fn price_legs(legs: &[Leg], spot: f64, vol: f64, maturity: f64, rate: f64) -> f64 {
    let df = (-rate * maturity).exp();
    legs.iter()
        .map(|leg| match *leg {
            Leg::Cash(c) => c * df,
            Leg::Call { strike, weight } => weight * call_price(spot, strike, vol, maturity, rate),
            Leg::Put { strike, weight } => weight * put_price(spot, strike, vol, maturity, rate),
        })
        .sum()
}

fn call_price(spot: f64, strike: f64, vol: f64, t: f64, r: f64) -> f64 {
    let df = (-r * t).exp();
    if spot <= 0.0 {
        return 0.0;
    }
    let sd = vol * t.sqrt();
    if sd <= 0.0 {
        return (spot - strike * df).max(0.0);
    }
    let d1 = ((spot / strike).ln() + r * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    spot * norm_cdf(d1) - strike * df * norm_cdf(d2)
}

fn put_price(spot: f64, strike: f64, vol: f64, t: f64, r: f64) -> f64 {
    let df = (-r * t).exp();
    if spot <= 0.0 {
        return strike * df;
    }
    let sd = vol * t.sqrt();
    if sd <= 0.0 {
        return (strike * df - spot).max(0.0);
    }
    let d1 = ((spot / strike).ln() + r * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    strike * df * norm_cdf(-d2) - spot * norm_cdf(-d1)
}
