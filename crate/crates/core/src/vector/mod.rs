//! Lane-parallel math for the pricing kernels.
//!
//! The exponential and the lattice recurrence are written once against
//! [`Lanes`], a fixed-width register stand-in, and instantiated at 1, 4, 8
//! and 16 lanes. Width 1 is the scalar fallback and also handles the tail
//! of every array that is not a multiple of the width.

mod bt_step;
mod kahan;
mod kernels;
mod lanes;
mod vexp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bt_step::{bt_inner_step, bt_inner_step_in_place};
pub use kahan::{kahan_sum, KahanSum};
pub use kernels::{bt_price_lanes, mc_price_lanes};
pub use lanes::{Lanes, Real};
pub use vexp::{vexp, vexp_into, ExpStatus, VexpReal};

/// Number of scalars processed per vector operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum LaneWidth {
    W1,
    W4,
    W8,
    W16,
}

impl LaneWidth {
    pub const ALL: [LaneWidth; 4] = [LaneWidth::W1, LaneWidth::W4, LaneWidth::W8, LaneWidth::W16];

    pub fn lanes(self) -> usize {
        match self {
            LaneWidth::W1 => 1,
            LaneWidth::W4 => 4,
            LaneWidth::W8 => 8,
            LaneWidth::W16 => 16,
        }
    }
}

impl TryFrom<usize> for LaneWidth {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(LaneWidth::W1),
            4 => Ok(LaneWidth::W4),
            8 => Ok(LaneWidth::W8),
            16 => Ok(LaneWidth::W16),
            other => Err(Error::argument(format!("lane width must be 1, 4, 8 or 16, got {other}"))),
        }
    }
}

impl From<LaneWidth> for usize {
    fn from(w: LaneWidth) -> usize {
        w.lanes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "32")]
    Single,
    #[serde(rename = "64")]
    Double,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "32" | "single" | "f32" => Ok(Precision::Single),
            "64" | "double" | "f64" => Ok(Precision::Double),
            other => Err(Error::argument(format!("precision must be 32 or 64, got {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// How a kernel runs on the vector unit. The unroll factor equals the lane
/// width; `fused` selects the single-rounding multiply-add for the lattice
/// recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneConfig {
    pub lane_width: LaneWidth,
    pub precision: Precision,
    pub fused: bool,
}

impl LaneConfig {
    pub fn new(lane_width: usize, precision: Precision) -> Result<Self> {
        Ok(LaneConfig {
            lane_width: LaneWidth::try_from(lane_width)?,
            precision,
            fused: false,
        })
    }

    pub fn scalar(precision: Precision) -> Self {
        LaneConfig {
            lane_width: LaneWidth::W1,
            precision,
            fused: false,
        }
    }

    pub fn with_fused(mut self, fused: bool) -> Self {
        self.fused = fused;
        self
    }
}

/// Build/run label carried verbatim into reports.
///
/// `NOVECT` and `AUTOVECT` run the scalar reference kernels, `VEC<w>` the
/// lane path at width `w`, and `INTR<w>` the lane path with fused
/// multiply-add in the lattice step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelVariant {
    NoVect,
    AutoVect,
    Vec(LaneWidth),
    Intr(LaneWidth),
}

impl KernelVariant {
    pub fn lane_config(self, precision: Precision) -> LaneConfig {
        match self {
            KernelVariant::NoVect | KernelVariant::AutoVect => LaneConfig::scalar(precision),
            KernelVariant::Vec(w) => LaneConfig {
                lane_width: w,
                precision,
                fused: false,
            },
            KernelVariant::Intr(w) => LaneConfig {
                lane_width: w,
                precision,
                fused: true,
            },
        }
    }

    /// True when the variant runs the scalar reference kernels.
    pub fn is_reference(self) -> bool {
        matches!(self, KernelVariant::NoVect | KernelVariant::AutoVect)
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelVariant::NoVect => f.write_str("NOVECT"),
            KernelVariant::AutoVect => f.write_str("AUTOVECT"),
            KernelVariant::Vec(w) => write!(f, "VEC{}", w.lanes()),
            KernelVariant::Intr(w) => write!(f, "INTR{}", w.lanes()),
        }
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let width = |digits: &str| -> Result<LaneWidth> {
            let n: usize = digits
                .parse()
                .map_err(|_| Error::argument(format!("bad lane width in variant {s:?}")))?;
            LaneWidth::try_from(n)
        };
        match upper.as_str() {
            "NOVECT" => Ok(KernelVariant::NoVect),
            "AUTOVECT" => Ok(KernelVariant::AutoVect),
            _ => {
                if let Some(rest) = upper.strip_prefix("VEC") {
                    Ok(KernelVariant::Vec(width(rest)?))
                } else if let Some(rest) = upper.strip_prefix("INTR") {
                    Ok(KernelVariant::Intr(width(rest)?))
                } else {
                    Err(Error::argument(format!(
                        "variant must be NOVECT, AUTOVECT, VEC<w> or INTR<w>, got {s:?}"
                    )))
                }
            }
        }
    }
}

impl Serialize for KernelVariant {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelVariant {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
