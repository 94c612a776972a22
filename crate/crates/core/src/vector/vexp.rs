//! Vectorised exponential after the Cephes `expf`/`exp` routines.
//!
//! exp(x) = 2^n * e^r with n = round(x / ln 2) and |r| <= ln(2)/2. The
//! reduction subtracts n*ln2 in two pieces (a short high part that is
//! exact in the working precision plus a correction) and e^r comes from a
//! polynomial: degree 6 for single precision, a Pade-style rational
//! 2r*P(r^2)/(Q(r^2) - r*P(r^2)) for double precision.

use super::lanes::{Lanes, Real};
use super::LaneWidth;

/// Saturation flags raised by [`vexp`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ExpStatus(u8);

impl ExpStatus {
    pub const OK: ExpStatus = ExpStatus(0);
    /// Some input was above the largest finite result; output is +inf.
    pub const OVERFLOW: ExpStatus = ExpStatus(1);
    /// Some input was below the smallest normal result; output is 0.
    pub const UNDERFLOW: ExpStatus = ExpStatus(2);
    /// Some input was NaN.
    pub const INVALID: ExpStatus = ExpStatus(4);

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, flag: ExpStatus) -> bool {
        self.0 & flag.0 == flag.0
    }

    pub fn is_ok(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for ExpStatus {
    type Output = ExpStatus;
    fn bitor(self, rhs: ExpStatus) -> ExpStatus {
        ExpStatus(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for ExpStatus {
    fn bitor_assign(&mut self, rhs: ExpStatus) {
        self.0 |= rhs.0;
    }
}

/// Element types with a lane-parallel exponential.
pub trait VexpReal: Real {
    /// ln of the largest finite value.
    const MAX_ARG: Self;
    /// ln of the smallest normal value.
    const MIN_ARG: Self;

    fn exp_core<const W: usize>(x: Lanes<Self, W>) -> Lanes<Self, W>;
}

const LOG2E: f64 = std::f64::consts::LOG2_E;

impl VexpReal for f32 {
    const MAX_ARG: f32 = 88.722_83;
    const MIN_ARG: f32 = -87.336_55;

    #[inline(always)]
    fn exp_core<const W: usize>(x: Lanes<f32, W>) -> Lanes<f32, W> {
        const C1: f32 = 0.693_359_375;
        const C2: f32 = -2.121_944_4e-4;
        const P: [f32; 6] = [
            1.987_569_150_0e-4,
            1.398_199_950_7e-3,
            8.333_451_907_3e-3,
            4.166_579_589_4e-2,
            1.666_666_545_9e-1,
            5.000_000_120_1e-1,
        ];
        let splat = Lanes::<f32, W>::splat;

        let n = (x * splat(LOG2E as f32) + splat(0.5)).map(f32::floor);
        let r = x - n * splat(C1);
        let r = r - n * splat(C2);
        let z = r * r;
        let mut poly = splat(P[0]);
        for &c in &P[1..] {
            poly = poly * r + splat(c);
        }
        let y = poly * z + r + splat(1.0);
        y.zip(n, |v, k| ldexp_f32(v, k as i32))
    }
}

impl VexpReal for f64 {
    const MAX_ARG: f64 = 709.782_712_893_384;
    const MIN_ARG: f64 = -708.396_418_532_264_1;

    #[inline(always)]
    fn exp_core<const W: usize>(x: Lanes<f64, W>) -> Lanes<f64, W> {
        const C1: f64 = 6.931_457_519_531_25e-1;
        const C2: f64 = 1.428_606_820_309_417_232_12e-6;
        const P: [f64; 3] = [
            1.261_771_930_748_105_908_78e-4,
            3.029_944_077_074_419_613_00e-2,
            9.999_999_999_999_999_999_10e-1,
        ];
        const Q: [f64; 4] = [
            3.001_985_051_386_644_550_42e-6,
            2.524_483_403_496_841_041_92e-3,
            2.272_655_482_081_550_287_66e-1,
            2.000_000_000_000_000_000_09e0,
        ];
        let splat = Lanes::<f64, W>::splat;

        let n = (x * splat(LOG2E) + splat(0.5)).map(f64::floor);
        let r = x - n * splat(C1);
        let r = r - n * splat(C2);
        let rr = r * r;
        let p = (splat(P[0]) * rr + splat(P[1])) * rr + splat(P[2]);
        let px = r * p;
        let q = ((splat(Q[0]) * rr + splat(Q[1])) * rr + splat(Q[2])) * rr + splat(Q[3]);
        let y = splat(1.0) + splat(2.0) * (px / (q - px));
        y.zip(n, |v, k| ldexp_f64(v, k as i32))
    }
}

/// `v * 2^k` for |k| within twice the exponent range, split in two steps
/// so neither power of two leaves the normal range.
fn ldexp_f32(v: f32, k: i32) -> f32 {
    let half = k / 2;
    v * pow2_f32(half) * pow2_f32(k - half)
}

fn pow2_f32(k: i32) -> f32 {
    f32::from_bits(((k + 127) as u32) << 23)
}

fn ldexp_f64(v: f64, k: i32) -> f64 {
    let half = k / 2;
    v * pow2_f64(half) * pow2_f64(k - half)
}

fn pow2_f64(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}

#[inline(always)]
fn exp_block<T: VexpReal, const W: usize>(input: &[T], out: &mut [T]) {
    let x = Lanes::<T, W>::load(input);
    let clamped = x.map(|v| {
        if v > T::MAX_ARG {
            T::MAX_ARG
        } else if v < T::MIN_ARG || v.is_nan() {
            T::ZERO
        } else {
            v
        }
    });
    let y = T::exp_core(clamped);
    // Out-of-range lanes saturate; NaN passes through.
    let y = y.zip(x, |e, v| {
        if v.is_nan() {
            v
        } else if v > T::MAX_ARG {
            T::ONE / T::ZERO
        } else if v < T::MIN_ARG {
            T::ZERO
        } else {
            e
        }
    });
    y.store(out);
}

fn run_width<T: VexpReal, const W: usize>(input: &[T], out: &mut [T]) {
    let whole = input.len() / W * W;
    for (xs, ys) in input[..whole].chunks_exact(W).zip(out[..whole].chunks_exact_mut(W)) {
        exp_block::<T, W>(xs, ys);
    }
    for (x, y) in input[whole..].iter().zip(&mut out[whole..]) {
        exp_block::<T, 1>(std::slice::from_ref(x), std::slice::from_mut(y));
    }
}

/// Elementwise exponential of `input` into `out` (equal lengths).
pub fn vexp_into<T: VexpReal>(input: &[T], out: &mut [T], width: LaneWidth) -> ExpStatus {
    assert_eq!(input.len(), out.len(), "vexp input and output lengths differ");
    match width {
        LaneWidth::W1 => run_width::<T, 1>(input, out),
        LaneWidth::W4 => run_width::<T, 4>(input, out),
        LaneWidth::W8 => run_width::<T, 8>(input, out),
        LaneWidth::W16 => run_width::<T, 16>(input, out),
    }
    status_of(input)
}

/// Elementwise exponential, returning the values and the saturation flags.
pub fn vexp<T: VexpReal>(input: &[T], width: LaneWidth) -> (Vec<T>, ExpStatus) {
    let mut out = vec![T::ZERO; input.len()];
    let status = vexp_into(input, &mut out, width);
    (out, status)
}

fn status_of<T: VexpReal>(input: &[T]) -> ExpStatus {
    let mut status = ExpStatus::OK;
    for &v in input {
        if v.is_nan() {
            status |= ExpStatus::INVALID;
        } else if v > T::MAX_ARG {
            status |= ExpStatus::OVERFLOW;
        } else if v < T::MIN_ARG {
            status |= ExpStatus::UNDERFLOW;
        }
    }
    status
}
