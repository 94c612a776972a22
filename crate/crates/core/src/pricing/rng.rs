use crate::error::{Error, Result};

const STATE_WORDS: usize = 624;
const SHIFT_SIZE: usize = 397;
const MATRIX_A: u32 = 0x9908_b0df;
const UPPER_MASK: u32 = 0x8000_0000;
const LOWER_MASK: u32 = 0x7fff_ffff;

/// 32-bit Mersenne Twister (MT19937).
#[derive(Clone)]
pub struct Mt19937 {
    words: [u32; STATE_WORDS],
    index: usize,
}

impl std::fmt::Debug for Mt19937 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mt19937").field("index", &self.index).finish_non_exhaustive()
    }
}

impl Mt19937 {
    /// Seeds with the reference `init_genrand` recurrence.
    pub fn new(seed: u32) -> Self {
        let mut words = [0u32; STATE_WORDS];
        words[0] = seed;
        for i in 1..STATE_WORDS {
            let prev = words[i - 1];
            words[i] = 1_812_433_253u32
                .wrapping_mul(prev ^ (prev >> 30))
                .wrapping_add(i as u32);
        }
        Mt19937 {
            words,
            index: STATE_WORDS,
        }
    }

    /// Seeds with the reference `init_by_array` routine.
    pub fn from_key(key: &[u32]) -> Self {
        let mut mt = Mt19937::new(19_650_218);
        let n = STATE_WORDS;
        let key_len = key.len().max(1);
        let mut i = 1usize;
        let mut j = 0usize;
        for _ in 0..n.max(key_len) {
            let prev = mt.words[i - 1];
            let k = key.get(j).copied().unwrap_or(0);
            mt.words[i] = (mt.words[i] ^ (prev ^ (prev >> 30)).wrapping_mul(1_664_525))
                .wrapping_add(k)
                .wrapping_add(j as u32);
            i += 1;
            j += 1;
            if i >= n {
                mt.words[0] = mt.words[n - 1];
                i = 1;
            }
            if j >= key_len {
                j = 0;
            }
        }
        for _ in 0..n - 1 {
            let prev = mt.words[i - 1];
            mt.words[i] = (mt.words[i] ^ (prev ^ (prev >> 30)).wrapping_mul(1_566_083_941))
                .wrapping_sub(i as u32);
            i += 1;
            if i >= n {
                mt.words[0] = mt.words[n - 1];
                i = 1;
            }
        }
        mt.words[0] = UPPER_MASK;
        mt.index = STATE_WORDS;
        mt
    }

    /// Seeds from a 64-bit value. Seeds that fit in 32 bits use the scalar
    /// recurrence so that the canonical seed 5489 reproduces the reference
    /// stream; wider seeds go through the key-array initialiser.
    pub fn from_seed(seed: u64) -> Self {
        match u32::try_from(seed) {
            Ok(narrow) => Mt19937::new(narrow),
            Err(_) => Mt19937::from_key(&[seed as u32, (seed >> 32) as u32]),
        }
    }

    /// Position within the current block of 624 words.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.index >= STATE_WORDS {
            self.twist();
        }
        let mut y = self.words[self.index];
        self.index += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^ (y >> 18)
    }

    fn twist(&mut self) {
        for i in 0..STATE_WORDS {
            let y = (self.words[i] & UPPER_MASK) | (self.words[(i + 1) % STATE_WORDS] & LOWER_MASK);
            let mut next = self.words[(i + SHIFT_SIZE) % STATE_WORDS] ^ (y >> 1);
            if y & 1 != 0 {
                next ^= MATRIX_A;
            }
            self.words[i] = next;
        }
        self.index = 0;
    }
}

const TWO_POW_32: f64 = 4_294_967_296.0;

/// Maps a draw onto (0, 1]; never zero, so it is safe under `ln`.
pub fn draw_to_open_unit(draw: u32) -> f64 {
    (f64::from(draw) + 1.0) / TWO_POW_32
}

/// Maps a draw onto [0, 1).
pub fn draw_to_unit(draw: u32) -> f64 {
    f64::from(draw) / TWO_POW_32
}

/// Box-Muller transform of two uniforms into two independent standard normals.
pub fn box_muller(u1: f64, u2: f64) -> Result<(f64, f64)> {
    if !(u1 > 0.0 && u1 <= 1.0) {
        return Err(Error::domain(format!("box_muller radius input must be in (0,1], got {u1}")));
    }
    if !(0.0..1.0).contains(&u2) {
        return Err(Error::domain(format!("box_muller angle input must be in [0,1), got {u2}")));
    }
    let radius = (-2.0 * u1.ln()).sqrt();
    let (sin, cos) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    Ok((radius * cos, radius * sin))
}

/// Stream of standard normals: MT19937 words mapped to uniforms, paired
/// through Box-Muller, emitted as z1, z2, z1, z2, ...
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: Mt19937,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: Mt19937::from_seed(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = draw_to_open_unit(self.rng.next_u32());
        let u2 = draw_to_unit(self.rng.next_u32());
        // Both inputs are in range by construction of the mappings.
        let (z1, z2) = box_muller(u1, u2).expect("uniform mappings stay in range");
        self.spare = Some(z2);
        z1
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_normal();
        }
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}
