use serde::{Deserialize, Serialize};

use super::{check_inputs, OptionContract, PricingParams, SpotPrice};
use crate::error::{Error, Result};

/// Lattice levels between two cancellation checks.
pub const BT_CHECKPOINT_LEVELS: usize = 64;

/// Per-step factors of a Cox-Ross-Rubinstein lattice.
///
/// One backward step is `x[i] = disc_p_up * x[i] + disc_p_down * x[i + 1]`,
/// where `x[i]` is the node reached by more up-moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtCoefficients {
    pub up: f64,
    pub down: f64,
    /// Discounted risk-neutral up probability.
    pub disc_p_up: f64,
    /// Discounted risk-neutral down probability.
    pub disc_p_down: f64,
    /// Years per lattice level.
    pub dt: f64,
}

pub fn bt_coefficients(params: &PricingParams, expiry: f64, n_steps: usize) -> Result<BtCoefficients> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::argument("binomial tree needs at least one step"));
    }
    if !(expiry.is_finite() && expiry > 0.0) {
        return Err(Error::domain(format!("time to expiry must be positive, got {expiry}")));
    }
    let dt = expiry / n_steps as f64;
    let up = (params.volatility * dt.sqrt()).exp();
    let down = 1.0 / up;
    let growth = (params.rate * dt).exp();
    let p = (growth - down) / (up - down);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "risk-neutral probability {p} outside (0,1); use more steps"
        )));
    }
    let discount = (-params.rate * dt).exp();
    Ok(BtCoefficients {
        up,
        down,
        disc_p_up: discount * p,
        disc_p_down: discount * (1.0 - p),
        dt,
    })
}

/// Exercise values at expiry, ordered from the all-up node downwards.
pub(crate) fn terminal_payoffs(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    n_steps: usize,
) -> Result<Vec<f64>> {
    let dt = contract.time_to_expiry / n_steps as f64;
    let log_step = params.volatility * dt.sqrt();
    let s = spot.value();
    let top = s * (n_steps as f64 * log_step).exp();
    if !top.is_finite() {
        return Err(Error::Numeric(format!(
            "lattice value overflows at {n_steps} steps (u^n is not finite)"
        )));
    }
    Ok((0..=n_steps)
        .map(|j| {
            let moves = n_steps as f64 - 2.0 * j as f64;
            contract.kind.payoff(s * (moves * log_step).exp(), contract.strike)
        })
        .collect())
}

/// Binomial lattice price of a European contract with `n_steps` levels.
pub fn bt_price(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    n_steps: usize,
) -> Result<f64> {
    let price = bt_price_with(contract, spot, params, n_steps, &mut || false)?;
    Ok(price.expect("never cancelled"))
}

/// Cancellable lattice price; `cancel` is polled every
/// [`BT_CHECKPOINT_LEVELS`] levels of the backward sweep.
pub fn bt_price_with(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    n_steps: usize,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    check_inputs(contract, params)?;
    let coeff = bt_coefficients(params, contract.time_to_expiry, n_steps)?;
    let mut values = terminal_payoffs(contract, spot, params, n_steps)?;
    let (a, b) = (coeff.disc_p_up, coeff.disc_p_down);

    // A single vector is overwritten in place; after the sweep for `level`
    // only values[..=level] are live.
    for level in (0..n_steps).rev() {
        if (n_steps - 1 - level).is_multiple_of(BT_CHECKPOINT_LEVELS) && cancel() {
            return Ok(None);
        }
        for i in 0..=level {
            values[i] = a * values[i] + b * values[i + 1];
        }
    }
    Ok(Some(values[0].max(0.0)))
}
