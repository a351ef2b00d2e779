//! Small numerical helpers shared by the estimators.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

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

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

/// Arithmetic mean with compensated summation. Returns NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss = sum(xs.iter().map(|x| (x - m) * (x - m)));
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Deviations from the mean, re-centred once more so the result sums to
/// zero up to a few ulps of its absolute sum.
pub fn centered(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    let mut dev: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let residual = mean(&dev);
    for d in &mut dev {
        *d -= residual;
    }
    dev
}

/// Two-sided standard normal critical value for a confidence level in (0, 1).
pub fn normal_critical_value(level: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std_normal = Normal::standard();
    std_normal.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}
