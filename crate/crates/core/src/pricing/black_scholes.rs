use super::{check_inputs, OptionContract, OptionKind, PricingParams, SpotPrice};
use crate::error::{Error, Result};

/// Standard normal cumulative distribution function.
///
/// Evaluated through the complementary error function so that both tails
/// keep full relative precision.
pub fn norm_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("norm_cdf of non-finite value {x}")));
    }
    Ok(0.5 * libm::erfc(-x / std::f64::consts::SQRT_2))
}

/// Closed-form Black-Scholes price of a European call or put.
pub fn black_scholes_price(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
) -> Result<f64> {
    check_inputs(contract, params)?;
    let s = spot.value();
    let k = contract.strike;
    let t = contract.time_to_expiry;
    let sigma = params.volatility;
    let r = params.rate;

    let vol_sqrt_t = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * t) / vol_sqrt_t;
    let d2 = d1 - vol_sqrt_t;
    let discounted_strike = k * (-r * t).exp();

    let price = match contract.kind {
        OptionKind::Call => s * norm_cdf(d1)? - discounted_strike * norm_cdf(d2)?,
        OptionKind::Put => discounted_strike * norm_cdf(-d2)? - s * norm_cdf(-d1)?,
    };
    // Cancellation in the difference can leave a few ulps below zero.
    Ok(price.max(0.0))
}
