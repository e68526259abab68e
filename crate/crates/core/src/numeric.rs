//! Small numeric building blocks shared by the probability routines.

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

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

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `n * ln(y)` with the convention `0 * ln(0) = 0`.
pub fn xlny(n: f64, y: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * y.ln()
    }
}

/// Natural log of the binomial coefficient `C(n, k)`.
///
/// Evaluated as a sum of `ln(1 + (n - k') / j)` over `j = 1..=k'` with
/// `k' = min(k, n - k)`, so every term is positive and computed with
/// `ln_1p`; the relative error stays within a few ulps of the sum.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    let rest = (n - k) as f64;
    (1..=k)
        .map(|j| (rest / j as f64).ln_1p())
        .collect::<CompensatedSum>()
        .value()
}

/// Table of `ln(j!)` for `j = 0..=max`.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        let mut acc = CompensatedSum::new();
        table.push(0.0);
        for j in 1..=max {
            acc.add((j as f64).ln());
            table.push(acc.value());
        }
        LnFactorials(table)
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// `C(n, k)` as `f64`; saturates to infinity when the value exceeds the range.
pub fn binomial_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    ln_binomial(n, k).exp().round()
}

/// `C(n, k)` exactly, or `None` on overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=k as u128 {
        // acc * (n - k + j) is divisible by j at every step
        acc = acc.checked_mul(n as u128 - k as u128 + j)? / j;
    }
    Some(acc)
}
