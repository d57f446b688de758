//! Shared statistical utilities: point estimates with standard errors,
//! Kolmogorov-Smirnov tests, exact binomial intervals, chi-square
//! goodness of fit, autocorrelations and the Hill tail-index estimator.

use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// A point estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
        }
    }
}

/// Compensated (Kahan) summation; keeps parallel-merged reductions bit-stable
/// when folded in a fixed order.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Sample mean with standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mut s = KahanSum::default();
    for &x in xs {
        s.add(x);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return Estimate::new(mean, f64::INFINITY);
    }
    let mut ss = KahanSum::default();
    for &x in xs {
        ss.add((x - mean) * (x - mean));
    }
    let var = ss.value() / (n as f64 - 1.0);
    Estimate::new(mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean_and_se(xs).value;
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
}

/// Lag-k sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if n <= lag + 1 {
        return f64::NAN;
    }
    let m = mean_and_se(xs).value;
    let denom: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / denom
}

/// Kolmogorov's asymptotic tail function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test. Returns (D, approximate p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample in KS test".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = xs[i].min(ys[j]);
        while i < n1 && xs[i] <= x {
            i += 1;
        }
        while j < n2 && ys[j] <= x {
            j += 1;
        }
        let f1 = i as f64 / n1 as f64;
        let f2 = j as f64 / n2 as f64;
        d = d.max((f1 - f2).abs());
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 as f64 + n2 as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok((d, kolmogorov_q(lambda)))
}

/// One-sample KS test against the uniform law on [0,1].
pub fn ks_uniform01(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample in KS test".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        d = d.max(((k + 1) as f64 / n - cdf).abs());
        d = d.max((cdf - k as f64 / n).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok((d, kolmogorov_q(lambda)))
}

/// Chi-square goodness-of-fit p-value for observed counts against expected
/// probabilities. Degrees of freedom = #cells - 1.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected_probs.len() || observed.len() < 2 {
        return Err(Error::InvalidQuery(
            "chi-square needs matching cells, at least two".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e <= 0.0 {
            return Err(Error::InvalidQuery("expected probability must be > 0".into()));
        }
        stat += (o as f64 - e) * (o as f64 - e) / e;
    }
    let df = (observed.len() - 1) as f64;
    let chi = ChiSquared::new(df).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok((stat, 1.0 - chi.cdf(stat)))
}

/// Exact (Clopper-Pearson) two-sided binomial confidence interval.
pub fn clopper_pearson(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if successes > n {
        return Err(Error::InvalidQuery("successes > trials".into()));
    }
    let alpha = 1.0 - confidence;
    let k = successes as f64;
    let nf = n as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Welch two-sample t statistic.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean_and_se(a), mean_and_se(b));
    let se = (ma.stderr * ma.stderr + mb.stderr * mb.stderr).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (ma.value - mb.value) / se
}

/// Hill estimator of the tail index on the top `k` order statistics.
///
/// alpha_hat = k / sum_{i=1..k} ln(X_(i) / X_(k+1)) with X_(1) >= X_(2) >= ...
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k + 1 > samples.len() {
        return Err(Error::InsufficientData(format!(
            "hill estimator needs more than k={k} samples"
        )));
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
    if xs.len() <= k {
        return Err(Error::InsufficientData(
            "not enough positive samples for the Hill estimator".into(),
        ));
    }
    xs.sort_by(|u, v| v.partial_cmp(u).unwrap());
    let x_k1 = xs[k];
    let sum_log: f64 = xs[..k].iter().map(|x| (x / x_k1).ln()).sum();
    if sum_log <= 0.0 {
        return Err(Error::Numeric("degenerate order statistics".into()));
    }
    Ok(k as f64 / sum_log)
}
