//! Scalar reference pricing kernels for European vanilla options.
//!
//! Three models share one set of contract types: the closed-form
//! Black-Scholes price, a Monte Carlo estimator driven by MT19937 and
//! Box-Muller draws, and a recombining binomial lattice. The numerical
//! kernels are the workload; Black-Scholes is the accuracy reference they
//! converge to.

mod binomial;
mod black_scholes;
mod monte_carlo;
mod rng;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binomial::{bt_coefficients, bt_price, bt_price_with, BtCoefficients, BT_CHECKPOINT_LEVELS};
pub(crate) use binomial::terminal_payoffs;
pub use black_scholes::{black_scholes_price, norm_cdf};
pub use monte_carlo::{
    mc_price, mc_price_with, mc_threshold, McOptions, Screening, MC_CHECKPOINT_DRAWS,
};
pub use rng::{box_muller, draw_to_open_unit, draw_to_unit, Mt19937, NormalStream};

/// Call or put.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    /// Sign applied to the payoff: `+1` for calls, `-1` for puts.
    pub fn sign(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }

    /// Intrinsic value of the contract at terminal price `terminal`.
    pub fn payoff(self, terminal: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (terminal - strike).max(0.0),
            OptionKind::Put => (strike - terminal).max(0.0),
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(Error::validation(format!("unknown option kind {other:?}"))),
        }
    }
}

/// One exchange-listed European contract on the session's underlying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    pub id: String,
    pub kind: OptionKind,
    pub strike: f64,
    /// Years to expiry.
    pub time_to_expiry: f64,
}

impl OptionContract {
    pub fn new(id: impl Into<String>, kind: OptionKind, strike: f64, time_to_expiry: f64) -> Result<Self> {
        let contract = OptionContract {
            id: id.into(),
            kind,
            strike,
            time_to_expiry,
        };
        contract.validate()?;
        Ok(contract)
    }

    pub fn call(strike: f64, time_to_expiry: f64) -> Result<Self> {
        Self::new(format!("C{strike}-{time_to_expiry}"), OptionKind::Call, strike, time_to_expiry)
    }

    pub fn put(strike: f64, time_to_expiry: f64) -> Result<Self> {
        Self::new(format!("P{strike}-{time_to_expiry}"), OptionKind::Put, strike, time_to_expiry)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(Error::domain(format!("strike must be positive, got {}", self.strike)));
        }
        if !(self.time_to_expiry.is_finite() && self.time_to_expiry > 0.0) {
            return Err(Error::domain(format!(
                "time to expiry must be positive, got {}",
                self.time_to_expiry
            )));
        }
        Ok(())
    }
}

/// Market environment shared by every contract in a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingParams {
    /// Continuously compounded risk-free rate per year.
    pub rate: f64,
    /// Annualised volatility.
    pub volatility: f64,
}

impl PricingParams {
    pub fn new(rate: f64, volatility: f64) -> Result<Self> {
        let params = PricingParams { rate, volatility };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() {
            return Err(Error::domain("rate must be finite"));
        }
        if !(self.volatility.is_finite() && self.volatility > 0.0) {
            return Err(Error::domain(format!(
                "volatility must be positive, got {}",
                self.volatility
            )));
        }
        Ok(())
    }
}

/// Spot price of the underlying.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpotPrice(f64);

impl SpotPrice {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(SpotPrice(value))
        } else {
            Err(Error::domain(format!("spot price must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_inputs(contract: &OptionContract, params: &PricingParams) -> Result<()> {
    contract.validate()?;
    params.validate()
}
