//! Vectorised Monte Carlo and binomial kernels built on the lane math.
//!
//! Both consume the same inputs in the same order as the scalar reference
//! kernels in `pricing`; only the exponential and the lattice step go
//! through the lane path, optionally in single precision.

use super::{bt_inner_step_in_place, vexp_into, KahanSum, LaneConfig, Precision, Real, VexpReal};
use crate::error::{Error, Result};
use crate::pricing::{
    bt_coefficients, mc_threshold, McOptions, NormalStream, OptionContract, OptionKind, PricingParams,
    Screening, SpotPrice, BT_CHECKPOINT_LEVELS, MC_CHECKPOINT_DRAWS,
};

/// Monte Carlo price with the exponential evaluated `cfg.lane_width` draws
/// at a time. `Ok(None)` means `cancel` fired at a block boundary.
pub fn mc_price_lanes(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    opts: &McOptions,
    cfg: LaneConfig,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    match cfg.precision {
        Precision::Single => mc_lanes::<f32>(contract, spot, params, opts, cfg, cancel),
        Precision::Double => mc_lanes::<f64>(contract, spot, params, opts, cfg, cancel),
    }
}

fn mc_lanes<T: VexpReal>(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    opts: &McOptions,
    cfg: LaneConfig,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    contract.validate()?;
    params.validate()?;
    if opts.draws == 0 {
        return Err(Error::argument("Monte Carlo draw count must be at least 1"));
    }
    let t = contract.time_to_expiry;
    let sigma = params.volatility;
    let vol = sigma * t.sqrt();
    let forward = spot.value() * ((params.rate - 0.5 * sigma * sigma) * t).exp();
    let strike = contract.strike;
    let threshold = match opts.screening {
        Screening::On => Some(mc_threshold(contract, spot, params)?),
        Screening::Off => None,
    };

    let block_len = opts.draws.min(MC_CHECKPOINT_DRAWS);
    let mut normals = NormalStream::new(opts.seed);
    let mut draws = vec![0.0f64; block_len];
    let mut args: Vec<T> = Vec::with_capacity(block_len);
    let mut exps: Vec<T> = vec![T::ZERO; block_len];
    let mut sum = KahanSum::default();
    let mut passed = 0usize;

    let mut remaining = opts.draws;
    while remaining > 0 {
        if cancel() {
            return Ok(None);
        }
        let block = remaining.min(block_len);
        normals.fill(&mut draws[..block]);
        args.clear();
        match threshold {
            Some(thres) => {
                let keep = |x: f64| match contract.kind {
                    OptionKind::Call => x > thres,
                    OptionKind::Put => x < thres,
                };
                args.extend(draws[..block].iter().filter(|&&x| keep(x)).map(|&x| T::from_f64(vol * x)));
                passed += args.len();
            }
            None => args.extend(draws[..block].iter().map(|&x| T::from_f64(vol * x))),
        }
        let exps = &mut exps[..args.len()];
        let status = vexp_into(&args, exps, cfg.lane_width);
        if !status.is_ok() {
            return Err(Error::Numeric(format!("exponential saturated (status {:#x})", status.bits())));
        }
        match threshold {
            Some(_) => sum.extend(exps.iter().map(|e| e.to_f64())),
            None => sum.extend(exps.iter().map(|e| contract.kind.payoff(forward * e.to_f64(), strike))),
        }
        remaining -= block;
    }

    let total = match threshold {
        Some(_) => {
            let exercised = strike * passed as f64;
            match contract.kind {
                OptionKind::Call => forward * sum.total() - exercised,
                OptionKind::Put => exercised - forward * sum.total(),
            }
        }
        None => sum.total(),
    };
    let discount = (-params.rate * t).exp();
    Ok(Some((discount * total / opts.draws as f64).max(0.0)))
}

/// Binomial lattice price with the backward sweep on the lane path.
pub fn bt_price_lanes(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    n_steps: usize,
    cfg: LaneConfig,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    match cfg.precision {
        Precision::Single => bt_lanes::<f32>(contract, spot, params, n_steps, cfg, cancel),
        Precision::Double => bt_lanes::<f64>(contract, spot, params, n_steps, cfg, cancel),
    }
}

fn bt_lanes<T: Real>(
    contract: &OptionContract,
    spot: SpotPrice,
    params: &PricingParams,
    n_steps: usize,
    cfg: LaneConfig,
    cancel: &mut dyn FnMut() -> bool,
) -> Result<Option<f64>> {
    contract.validate()?;
    let coeff = bt_coefficients(params, contract.time_to_expiry, n_steps)?;
    let leaves = crate::pricing::terminal_payoffs(contract, spot, params, n_steps)?;
    let mut values: Vec<T> = leaves.into_iter().map(T::from_f64).collect();
    let a = T::from_f64(coeff.disc_p_up);
    let b = T::from_f64(coeff.disc_p_down);

    for level in (0..n_steps).rev() {
        if (n_steps - 1 - level).is_multiple_of(BT_CHECKPOINT_LEVELS) && cancel() {
            return Ok(None);
        }
        bt_inner_step_in_place(&mut values[..level + 2], a, b, cfg.lane_width, cfg.fused)?;
    }
    Ok(Some(values[0].to_f64().max(0.0)))
}
