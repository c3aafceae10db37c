//! Minimal statistics helpers shared by the validation suites and the
//! mean-field module: sample moments, fixed-width histograms, a two-sample
//! Kolmogorov-Smirnov test and the Wilson score interval.

/// Sample mean and unbiased variance. Returns `(0.0, 0.0)` for empty input
/// and variance `0.0` for a single observation.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n as f64 - 1.0))
}

/// Fixed-width histogram over `[0, max]`.
#[derive(Clone, Debug)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl Histogram {
    /// Bin count follows a square-root rule capped to 200; degenerate
    /// inputs (one value, or all values equal) collapse to a single bin.
    pub fn from_samples(xs: &[f64]) -> Histogram {
        let n = xs.len() as u64;
        let max = xs.iter().cloned().fold(0.0_f64, f64::max);
        if n == 0 || max <= 0.0 {
            return Histogram { bin_width: 1.0, counts: vec![0; 1], n };
        }
        let bins = ((n as f64).sqrt().ceil() as usize).clamp(1, 200);
        let width = max / bins as f64;
        let mut counts = vec![0_u64; bins];
        for &x in xs {
            let i = ((x / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { bin_width: width, counts, n }
    }

    /// Normalised density of bin `i`; densities integrate to one.
    pub fn density(&self, i: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.counts[i] as f64 / (self.n as f64 * self.bin_width)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
///
/// The p-value uses the Kolmogorov series with Stephens' small-sample
/// correction of the effective sample size; accurate enough for the
/// n >= 100 comparisons made here.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "ks on empty sample");
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0_usize, 0_usize);
    let mut d = 0.0_f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, ks_q(lambda))
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
///
/// Returns the statistic and its asymptotic p-value (same Kolmogorov
/// series as [`ks_two_sample`]).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    assert!(!samples.is_empty(), "ks on empty sample");
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let x = x.clamp(0.0, 1.0);
        d = d.max(((i + 1) as f64 / n - x).max(x - i as f64 / n));
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, ks_q(lambda))
}

/// Complementary Kolmogorov distribution Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
fn ks_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`
/// (use `z = 1.959963984540054` for 95%).
pub fn wilson_ci(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const Z_95: f64 = 1.959963984540054;
