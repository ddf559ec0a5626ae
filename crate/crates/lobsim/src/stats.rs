//! Small mergeable accumulators used by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

/// Running mean and variance (Welford), mergeable across paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn se(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: u64,
}

impl Estimate {
    pub fn z_against(&self, reference: f64) -> f64 {
        if self.se > 0.0 {
            (self.value - reference) / self.se
        } else if self.value == reference {
            0.0
        } else {
            f64::INFINITY.copysign(self.value - reference)
        }
    }
}

impl From<MeanVar> for Estimate {
    fn from(m: MeanVar) -> Self {
        Estimate { value: m.mean, se: m.se(), n: m.n }
    }
}

/// Binomial proportion `k / n` with its plug-in standard error.
pub fn proportion(k: u64, n: u64) -> Estimate {
    if n == 0 {
        return Estimate { value: f64::NAN, se: f64::NAN, n };
    }
    let p = k as f64 / n as f64;
    Estimate { value: p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
}

/// z-score of a binomial proportion against `p0`, using the standard error
/// under the null, `sqrt(p0 (1 - p0) / n)`. Unlike the plug-in error it does
/// not vanish when every trial succeeds. With `p0` at 0 or 1 only exact
/// agreement scores 0.
pub fn proportion_z(est: &Estimate, p0: f64) -> f64 {
    let se0 = (p0 * (1.0 - p0) / est.n as f64).sqrt();
    if se0 > 0.0 {
        (est.value - p0) / se0
    } else if est.value == p0 {
        0.0
    } else {
        f64::INFINITY.copysign(est.value - p0)
    }
}

/// Ratio `a / b` of two nested counts (`a` counts a subset of `b`).
pub fn nested_ratio(a: u64, b: u64) -> Estimate {
    proportion(a, b)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}
