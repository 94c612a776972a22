use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::{bt_price_with, mc_price_with, McOptions, OptionContract, PricingParams, Screening, SpotPrice};
use crate::vector::{bt_price_lanes, mc_price_lanes, KernelVariant, Precision};

/// Prices one contract, polling `cancel` at the kernel's checkpoints.
/// `Ok(None)` means the kernel stopped early because `cancel` said so.
pub trait PricingKernel: Sync {
    fn price(&self, contract: &OptionContract, spot: SpotPrice, cancel: &mut dyn FnMut() -> bool)
        -> Result<Option<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "MC")]
    MonteCarlo,
    #[serde(rename = "BT")]
    BinomialTree,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MonteCarlo => "MC",
            ModelKind::BinomialTree => "BT",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MC" | "MONTECARLO" => Ok(ModelKind::MonteCarlo),
            "BT" | "BINOMIAL" => Ok(ModelKind::BinomialTree),
            other => Err(Error::argument(format!("model must be MC or BT, got {other:?}"))),
        }
    }
}

/// One of the numerical models with its iteration count: draws for Monte
/// Carlo, lattice steps for the binomial tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelKernel {
    pub model: ModelKind,
    pub n: usize,
    pub params: PricingParams,
    pub variant: KernelVariant,
    pub precision: Precision,
    pub seed: u64,
    pub screening: Screening,
}

impl ModelKernel {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::argument("iteration count must be at least 1"));
        }
        self.params.validate()
    }
}

impl PricingKernel for ModelKernel {
    fn price(
        &self,
        contract: &OptionContract,
        spot: SpotPrice,
        cancel: &mut dyn FnMut() -> bool,
    ) -> Result<Option<f64>> {
        // The scalar reference kernels are double precision only; a 32-bit
        // reference run goes through the one-lane path instead.
        let scalar = self.variant.is_reference() && self.precision == Precision::Double;
        let lanes = self.variant.lane_config(self.precision);
        match self.model {
            ModelKind::MonteCarlo => {
                let opts = McOptions {
                    draws: self.n,
                    seed: self.seed,
                    screening: self.screening,
                };
                if scalar {
                    mc_price_with(contract, spot, &self.params, &opts, cancel)
                } else {
                    mc_price_lanes(contract, spot, &self.params, &opts, lanes, cancel)
                }
            }
            ModelKind::BinomialTree => {
                if scalar {
                    bt_price_with(contract, spot, &self.params, self.n, cancel)
                } else {
                    bt_price_lanes(contract, spot, &self.params, self.n, lanes, cancel)
                }
            }
        }
    }
}

/// Stand-in kernel that spends a fixed wall-clock time per contract,
/// checking for cancellation every `checkpoint`. Its "price" is the spot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockKernel {
    pub cost: Duration,
    pub checkpoint: Duration,
}

impl PricingKernel for MockKernel {
    fn price(
        &self,
        _contract: &OptionContract,
        spot: SpotPrice,
        cancel: &mut dyn FnMut() -> bool,
    ) -> Result<Option<f64>> {
        let start = Instant::now();
        let slice = if self.checkpoint.is_zero() {
            self.cost
        } else {
            self.checkpoint
        };
        loop {
            if cancel() {
                return Ok(None);
            }
            let spent = start.elapsed();
            if spent >= self.cost {
                return Ok(Some(spot.value()));
            }
            std::thread::sleep(slice.min(self.cost - spent));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{bt_price, mc_price};
    use crate::vector::LaneWidth;

    fn kernel(model: ModelKind, n: usize, variant: KernelVariant) -> ModelKernel {
        ModelKernel {
            model,
            n,
            params: PricingParams::new(0.05, 0.2).unwrap(),
            variant,
            precision: Precision::Double,
            seed: 5489,
            screening: Screening::On,
        }
    }

    #[test]
    fn reference_variants_use_the_scalar_kernels() {
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let s = SpotPrice::new(100.0).unwrap();
        let p = PricingParams::new(0.05, 0.2).unwrap();
        let k = kernel(ModelKind::MonteCarlo, 50_000, KernelVariant::NoVect);
        assert_eq!(
            k.price(&c, s, &mut || false).unwrap(),
            Some(mc_price(&c, s, &p, 50_000, 5489, Screening::On).unwrap())
        );
        let k = kernel(ModelKind::BinomialTree, 500, KernelVariant::AutoVect);
        assert_eq!(k.price(&c, s, &mut || false).unwrap(), Some(bt_price(&c, s, &p, 500).unwrap()));
        let k = kernel(ModelKind::BinomialTree, 500, KernelVariant::Intr(LaneWidth::W8));
        let v = k.price(&c, s, &mut || false).unwrap().unwrap();
        assert!((v - bt_price(&c, s, &p, 500).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn mock_kernel_cancels_at_a_checkpoint() {
        let k = MockKernel {
            cost: Duration::from_millis(200),
            checkpoint: Duration::from_millis(2),
        };
        let c = OptionContract::call(100.0, 1.0).unwrap();
        let started = Instant::now();
        let mut polls = 0;
        let out = k
            .price(&c, SpotPrice::new(5.0).unwrap(), &mut || {
                polls += 1;
                polls > 3
            })
            .unwrap();
        assert_eq!(out, None);
        assert!(started.elapsed() < Duration::from_millis(100));
        let quick = MockKernel {
            cost: Duration::from_millis(1),
            checkpoint: Duration::ZERO,
        };
        assert_eq!(quick.price(&c, SpotPrice::new(5.0).unwrap(), &mut || false).unwrap(), Some(5.0));
    }

    #[test]
    fn model_labels() {
        assert_eq!("mc".parse::<ModelKind>().unwrap(), ModelKind::MonteCarlo);
        assert_eq!(ModelKind::BinomialTree.to_string(), "BT");
        assert!("LSM".parse::<ModelKind>().is_err());
    }
}
