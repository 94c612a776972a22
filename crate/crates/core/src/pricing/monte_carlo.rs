use serde::{Deserialize, Serialize};

use super::{check_inputs, NormalStream, OptionContract, OptionKind, PricingParams, SpotPrice};
use crate::error::{Error, Result};
use crate::vector::KahanSum;

/// Draws between two cancellation checks.
pub const MC_CHECKPOINT_DRAWS: usize = 1 << 16;

/// Whether draws are pre-screened against the zero-payoff threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screening {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub draws: usize,
    pub seed: u64,
    pub screening: Screening,
}

/// Normal draw at which the terminal price crosses the strike.
///
/// A call pays off exactly when its draw is above the threshold; a put pays
/// off exactly when its draw is below it.
pub fn mc_threshold(contract: &OptionContract, spot: SpotPrice, params: &PricingParams) -> Result<f64> {
    check_inputs(contract, params)?;
    let t = contract.time_to_expiry;
    let sigma = params.volatility;
    let drift = (params.rate - 0.5 * sigma * sigma) * t;
    let forward = spot.value() * drift.exp();
    Ok((contract.strike / forward).ln() / (sigma * t.sqrt()))
}

/// Monte Carlo price from `draws` standard normals seeded with `seed`.
pub fn mc_price(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    draws: usize,
    seed: u64,
    screening: Screening,
) -> Result<f64> {
    let opts = McOptions {
        draws,
        seed,
        screening,
    };
    let price = mc_price_with(contract, spot, params, &opts, &mut || false)?;
    Ok(price.expect("never cancelled"))
}

/// Cancellable Monte Carlo price. `cancel` is polled every
/// [`MC_CHECKPOINT_DRAWS`] draws; `Ok(None)` means the run was abandoned.
pub fn mc_price_with(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    opts: &McOptions,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    check_inputs(contract, params)?;
    if opts.draws == 0 {
        return Err(Error::argument("Monte Carlo draw count must be at least 1"));
    }
    let t = contract.time_to_expiry;
    let sigma = params.volatility;
    let vol = sigma * t.sqrt();
    let forward = spot.value() * ((params.rate - 0.5 * sigma * sigma) * t).exp();
    let strike = contract.strike;
    let mut normals = NormalStream::new(opts.seed);

    let mut sum = KahanSum::default();
    let mut passed = 0usize;
    let threshold = match opts.screening {
        Screening::On => mc_threshold(contract, spot, params)?,
        Screening::Off => 0.0,
    };

    let mut remaining = opts.draws;
    while remaining > 0 {
        if cancel() {
            return Ok(None);
        }
        let block = remaining.min(MC_CHECKPOINT_DRAWS);
        match opts.screening {
            Screening::On => {
                for _ in 0..block {
                    let x = normals.next_normal();
                    let pays = match contract.kind {
                        OptionKind::Call => x > threshold,
                        OptionKind::Put => x < threshold,
                    };
                    if pays {
                        sum.add((vol * x).exp());
                        passed += 1;
                    }
                }
            }
            Screening::Off => {
                for _ in 0..block {
                    let x = normals.next_normal();
                    sum.add(contract.kind.payoff(forward * (vol * x).exp(), strike));
                }
            }
        }
        remaining -= block;
    }

    let total = match opts.screening {
        Screening::On => {
            let exercised = strike * passed as f64;
            match contract.kind {
                OptionKind::Call => forward * sum.total() - exercised,
                OptionKind::Put => exercised - forward * sum.total(),
            }
        }
        Screening::Off => sum.total(),
    };
    let discount = (-params.rate * t).exp();
    Ok(Some((discount * total / opts.draws as f64).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::black_scholes_price;
    use proptest::prelude::*;

    fn params(r: f64, sigma: f64) -> PricingParams {
        PricingParams::new(r, sigma).unwrap()
    }

    fn spot(s: f64) -> SpotPrice {
        SpotPrice::new(s).unwrap()
    }

    /// Scans a grid of draws and returns the midpoint of the first interval
    /// where the undiscounted call payoff switches from zero to positive.
    fn payoff_sign_flip(s: f64, k: f64, r: f64, sigma: f64, t: f64) -> f64 {
        let payoff = |x: f64| s * ((r - 0.5 * sigma * sigma) * t + sigma * t.sqrt() * x).exp() - k;
        let step = 1e-6;
        let mut x = -10.0;
        while payoff(x + step) <= 0.0 {
            x += step;
        }
        x + 0.5 * step
    }

    #[test]
    fn threshold_zero_when_strike_is_forward() {
        let (r, sigma, t, s): (f64, f64, f64, f64) = (0.03, 0.25, 0.75, 100.0);
        let k = s * ((r - 0.5 * sigma * sigma) * t).exp();
        let c = OptionContract::call(k, t).unwrap();
        assert!(mc_threshold(&c, spot(s), &params(r, sigma)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn threshold_matches_payoff_sign_flip() {
        let p = params(0.01, 0.2);
        let otm = mc_threshold(&OptionContract::call(110.0, 1.0).unwrap(), spot(100.0), &p).unwrap();
        let oracle = payoff_sign_flip(100.0, 110.0, 0.01, 0.2, 1.0);
        assert!((otm - oracle).abs() < 1e-6, "{otm} vs {oracle}");
        assert!(otm > 0.0);

        let itm = mc_threshold(&OptionContract::call(90.0, 1.0).unwrap(), spot(100.0), &p).unwrap();
        let oracle = payoff_sign_flip(100.0, 90.0, 0.01, 0.2, 1.0);
        assert!((itm - oracle).abs() < 1e-6);
        assert!(itm < 0.0);
    }

    #[test]
    fn threshold_rejects_bad_volatility() {
        let bad = PricingParams { rate: 0.0, volatility: -0.1 };
        let c = OptionContract::call(100.0, 1.0).unwrap();
        assert!(matches!(mc_threshold(&c, spot(100.0), &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn atm_call_within_tenth_of_percent_at_one_million_draws() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let p = params(0.0, 0.2);
        let bs = black_scholes_price(&c, spot(100.0), &p).unwrap();
        let mc = mc_price(&c, spot(100.0), &p, 1_000_000, 5489, Screening::On).unwrap();
        let rel = (mc - bs).abs() / bs;
        assert!(rel < 1e-3, "mc {mc} bs {bs} rel {rel}");
    }

    #[test]
    fn deep_in_the_money_low_vol() {
        let c = OptionContract::call(50.0, 1.0).unwrap();
        let p = params(0.0, 0.01);
        let mc = mc_price(&c, spot(200.0), &p, 10_000, 7, Screening::Off).unwrap();
        let bs = black_scholes_price(&c, spot(200.0), &p).unwrap();
        assert!((mc - 150.0).abs() < 0.5);
        assert!((mc - bs).abs() < 0.5);
    }

    #[test]
    fn zero_draws_rejected() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let r = mc_price(&c, spot(100.0), &params(0.0, 0.2), 0, 1, Screening::On);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn bitwise_deterministic() {
        let c = OptionContract::put(95.0, 0.5).unwrap();
        let p = params(0.02, 0.3);
        let a = mc_price(&c, spot(100.0), &p, 50_000, 99, Screening::Off).unwrap();
        let b = mc_price(&c, spot(100.0), &p, 50_000, 99, Screening::Off).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn cancellation_is_observed_at_checkpoints() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let opts = McOptions {
            draws: 10 * MC_CHECKPOINT_DRAWS,
            seed: 1,
            screening: Screening::On,
        };
        let mut polls = 0;
        let out = mc_price_with(&c, spot(100.0), &params(0.0, 0.2), &opts, &mut || {
            polls += 1;
            polls > 3
        })
        .unwrap();
        assert_eq!(out, None);
        assert_eq!(polls, 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn screening_is_an_identity(
            call in any::<bool>(),
            s in 50.0f64..150.0,
            k in 50.0f64..150.0,
            r in 0.0f64..0.1,
            sigma in 0.05f64..0.8,
            t in 0.05f64..2.0,
            seed in any::<u64>(),
            draws in 1usize..20_000,
        ) {
            let c = if call { OptionContract::call(k, t) } else { OptionContract::put(k, t) }.unwrap();
            let p = params(r, sigma);
            let on = mc_price(&c, spot(s), &p, draws, seed, Screening::On).unwrap();
            let off = mc_price(&c, spot(s), &p, draws, seed, Screening::Off).unwrap();
            let scale = on.abs().max(off.abs());
            prop_assert!((on - off).abs() <= 1e-6 * scale + 1e-12, "{} vs {}", on, off);
        }
    }
}
