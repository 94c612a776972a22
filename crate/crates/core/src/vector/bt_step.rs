//! One backward level of the binomial lattice, `x[i] = a*x[i] + b*x[i+1]`.
//!
//! Iteration i reads x[i+1], which iteration i+1 overwrites: an
//! anti-dependency that blocks naive vectorisation. Each block therefore
//! loads both operands, x[i..i+W] and the one-down-shifted x[i+1..i+W+1],
//! before storing anything. The block after it only reads indices >= i+W,
//! which are still untouched. Hand-written SSE builds the shifted operand
//! from registers with psrldq/psllq; AVX needs a permute/blend sequence;
//! NEON (vext) and KNC (valignd) have a single align instruction. An
//! unaligned load of the shifted slice expresses the same thing portably.

use super::lanes::{Lanes, Real};
use super::LaneWidth;
use crate::error::{Error, Result};

#[inline(always)]
fn combine<T: Real, const W: usize>(x: Lanes<T, W>, shifted: Lanes<T, W>, a: Lanes<T, W>, b: Lanes<T, W>, fused: bool) -> Lanes<T, W> {
    if fused {
        x.fused_mul_add(a, shifted * b)
    } else {
        x * a + shifted * b
    }
}

fn step_width<T: Real, const W: usize>(values: &mut [T], a: T, b: T, fused: bool) {
    let outputs = values.len() - 1;
    let va = Lanes::<T, W>::splat(a);
    let vb = Lanes::<T, W>::splat(b);
    let mut i = 0;
    while i + W <= outputs {
        let x = Lanes::<T, W>::load(&values[i..]);
        let shifted = Lanes::<T, W>::load(&values[i + 1..]);
        combine(x, shifted, va, vb, fused).store(&mut values[i..]);
        i += W;
    }
    let (sa, sb) = (Lanes::<T, 1>::splat(a), Lanes::<T, 1>::splat(b));
    for j in i..outputs {
        let x = Lanes::<T, 1>([values[j]]);
        let shifted = Lanes::<T, 1>([values[j + 1]]);
        values[j] = combine(x, shifted, sa, sb, fused).0[0];
    }
}

/// In-place step over `values`: afterwards `values[..len-1]` hold the
/// previous level and the last slot is stale.
pub fn bt_inner_step_in_place<T: Real>(values: &mut [T], a: T, b: T, width: LaneWidth, fused: bool) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::argument(format!(
            "lattice step needs at least 2 values, got {}",
            values.len()
        )));
    }
    match width {
        LaneWidth::W1 => step_width::<T, 1>(values, a, b, fused),
        LaneWidth::W4 => step_width::<T, 4>(values, a, b, fused),
        LaneWidth::W8 => step_width::<T, 8>(values, a, b, fused),
        LaneWidth::W16 => step_width::<T, 16>(values, a, b, fused),
    }
    Ok(())
}

/// Returns the `m - 1` values of the previous lattice level.
pub fn bt_inner_step<T: Real>(values: &[T], a: T, b: T, width: LaneWidth, fused: bool) -> Result<Vec<T>> {
    let mut out = values.to_vec();
    bt_inner_step_in_place(&mut out, a, b, width, fused)?;
    out.pop();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::Mt19937;
    use proptest::prelude::*;

    fn scalar_reference(values: &[f64], a: f64, b: f64) -> Vec<f64> {
        values.windows(2).map(|w| a * w[0] + b * w[1]).collect()
    }

    fn random_values(seed: u32, len: usize) -> Vec<f64> {
        let mut rng = Mt19937::new(seed);
        (0..len).map(|_| 200.0 * f64::from(rng.next_u32()) / 4_294_967_296.0).collect()
    }

    #[test]
    fn constant_input_scales_by_weight_sum() {
        let values = vec![3.5f64; 37];
        for w in LaneWidth::ALL {
            let out = bt_inner_step(&values, 0.25, 0.5, w, false).unwrap();
            assert_eq!(out.len(), 36);
            assert!(out.iter().all(|&v| v == 0.75 * 3.5));
        }
    }

    #[test]
    fn identity_weight_truncates() {
        let values = random_values(1, 50);
        for w in LaneWidth::ALL {
            assert_eq!(bt_inner_step(&values, 1.0, 0.0, w, false).unwrap(), values[..49]);
        }
    }

    #[test]
    fn width_8_matches_scalar_loop() {
        let values = random_values(2, 1000);
        let reference = scalar_reference(&values, 0.49, 0.5);
        let got = bt_inner_step(&values, 0.49, 0.5, LaneWidth::W8, false).unwrap();
        for (g, r) in got.iter().zip(&reference) {
            assert!((g - r).abs() <= 1e-12 * r.abs());
        }
    }

    #[test]
    fn short_input_rejected() {
        assert!(matches!(bt_inner_step(&[1.0f64], 0.5, 0.5, LaneWidth::W4, false), Err(Error::Argument(_))));
        assert!(matches!(bt_inner_step::<f32>(&[], 0.5, 0.5, LaneWidth::W1, false), Err(Error::Argument(_))));
    }

    #[test]
    fn fused_within_two_ulp_of_unfused() {
        let values = random_values(9, 4099);
        let plain = bt_inner_step(&values, 0.4987, 0.5012, LaneWidth::W16, false).unwrap();
        let fused = bt_inner_step(&values, 0.4987, 0.5012, LaneWidth::W16, true).unwrap();
        for (p, f) in plain.iter().zip(&fused) {
            let ulp = f64::from_bits(p.to_bits() + 1) - p;
            assert!((p - f).abs() <= 2.0 * ulp, "{p} vs {f}");
        }
    }

    proptest! {
        #[test]
        fn tails_agree_with_scalar_oracle(len in 2usize..=130, seed in any::<u32>(), fused in any::<bool>()) {
            let values = random_values(seed, len);
            let reference = scalar_reference(&values, 0.47, 0.52);
            for w in LaneWidth::ALL {
                let got = bt_inner_step(&values, 0.47, 0.52, w, fused).unwrap();
                prop_assert_eq!(got.len(), len - 1);
                for (g, r) in got.iter().zip(&reference) {
                    prop_assert!((g - r).abs() <= 1e-12 * r.abs().max(1e-300));
                }
            }
        }

        #[test]
        fn single_precision_width_invariance(len in 2usize..=130, seed in any::<u32>()) {
            let values: Vec<f32> = random_values(seed, len).into_iter().map(|v| v as f32).collect();
            let reference = bt_inner_step(&values, 0.47f32, 0.52, LaneWidth::W1, false).unwrap();
            for w in [LaneWidth::W4, LaneWidth::W8, LaneWidth::W16] {
                prop_assert_eq!(&bt_inner_step(&values, 0.47f32, 0.52, w, false).unwrap(), &reference);
            }
        }
    }
}
