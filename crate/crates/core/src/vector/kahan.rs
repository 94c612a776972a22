/// Running compensated sum (Kahan-Babuska/Neumaier form).
///
/// The compensation term collects the low-order bits lost by each
/// addition, whichever operand is larger, so the error of the total does
/// not grow with the number of terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for KahanSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    acc.extend(values.iter().copied());
    acc.total()
}
