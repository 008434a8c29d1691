//! Small numerical helpers shared by the engine and the estimators.

use alloc::vec::Vec;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sample mean and standard error of the mean, summed in index order.
/// The standard error is `NaN` for fewer than two samples.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sum = CompensatedSum::default();
    for &x in samples {
        sum.add(x);
    }
    let mean = sum.value() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let mut ss = CompensatedSum::default();
    for &x in samples {
        ss.add((x - mean) * (x - mean));
    }
    let var = ss.value() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// Weighted least squares fit of `y = a + b x` with weights `1 / se^2`.
/// Returns `(intercept, intercept_se, slope, slope_se)`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], se: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if x.len() != y.len() || x.len() != se.len() || x.len() < 2 {
        return None;
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    if w.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return None;
    }
    let (mut s0, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        s0 += w[i];
        sx += w[i] * x[i];
        sxx += w[i] * x[i] * x[i];
        sy += w[i] * y[i];
        sxy += w[i] * x[i] * y[i];
    }
    let det = s0 * sxx - sx * sx;
    if det.abs() <= f64::EPSILON * s0 * sxx {
        return None;
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (s0 * sxy - sx * sy) / det;
    Some((
        intercept,
        libm::sqrt(sxx / det),
        slope,
        libm::sqrt(s0 / det),
    ))
}

/// Standard error of a ratio of means `sum(a) / sum(b)` by the delta method.
pub fn ratio_and_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    let n = num.len();
    let (ma, _) = mean_and_se(num);
    let (mb, _) = mean_and_se(den);
    let r = ma / mb;
    if n < 2 {
        return (r, f64::NAN);
    }
    let mut ss = CompensatedSum::default();
    for i in 0..n {
        let d = num[i] - r * den[i];
        ss.add(d * d);
    }
    let var = ss.value() / (n - 1) as f64;
    (r, libm::sqrt(var / n as f64) / mb.abs())
}
