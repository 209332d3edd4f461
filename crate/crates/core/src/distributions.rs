//! Bid priors.
//!
//! Every prior lives on a bounded support `[lower, upper]` (the upper bound is
//! the `b̄` of the payment integral) and exposes density, distribution,
//! quantile, inverse-CDF sampling, and the virtual welfare `δ(b) = b + F(b)/f(b)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// 1 / sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Standard normal 99th percentile, used for the default truncation point.
const Z_99: f64 = 2.326_347_874_040_841;
/// Density below this is treated as singular when forming F/f.
pub const MIN_DENSITY: f64 = 1e-12;

fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Mills ratio `(1 - Φ(t)) / φ(t)`.
///
/// Direct evaluation loses everything once `φ` underflows, so the upper tail
/// switches to the classical continued fraction.
fn mills_ratio(t: f64) -> f64 {
    if t < 8.0 {
        return std_normal_cdf(-t) / std_normal_pdf(t);
    }
    // t + 1/(t + 2/(t + 3/(t + ...))), evaluated from the tail.
    let mut tail = t;
    for j in (1..=60).rev() {
        tail = t + j as f64 / tail;
    }
    1.0 / tail
}

/// Serializable description of a bid prior, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    TruncatedLogNormal {
        mu: f64,
        sigma: f64,
        /// Truncation point `b̄`; defaults to the 99th percentile of the
        /// untruncated law.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
        #[serde(default)]
        lower: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Piecewise-linear CDF through `(b, F(b))` knots.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Default for DistributionSpec {
    fn default() -> Self {
        DistributionSpec::TruncatedLogNormal {
            mu: 0.0,
            sigma: 0.3,
            upper: Some(2.01),
            lower: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLogNormal {
    mu: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    /// Φ at the standardised lower bound (0 when `lower == 0`).
    cdf_lower: f64,
    /// Untruncated probability mass on the support.
    mass: f64,
}

impl TruncatedLogNormal {
    pub fn new(mu: f64, sigma: f64, upper: Option<f64>, lower: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!(
                "log-normal needs finite mu and sigma > 0, got mu={mu} sigma={sigma}"
            )));
        }
        let upper = upper.unwrap_or_else(|| (mu + sigma * Z_99).exp());
        if !(lower >= 0.0) || !(upper > lower) || !upper.is_finite() {
            return Err(Error::domain(format!(
                "support bounds must satisfy 0 <= lower < upper, got [{lower}, {upper}]"
            )));
        }
        let cdf_lower = if lower > 0.0 {
            std_normal_cdf((lower.ln() - mu) / sigma)
        } else {
            0.0
        };
        let mass = std_normal_cdf((upper.ln() - mu) / sigma) - cdf_lower;
        if !(mass > 0.0) {
            return Err(Error::domain("log-normal has no mass on the support"));
        }
        Ok(Self {
            mu,
            sigma,
            lower,
            upper,
            cdf_lower,
            mass,
        })
    }

    fn z(&self, b: f64) -> f64 {
        (b.ln() - self.mu) / self.sigma
    }

    fn pdf(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        std_normal_pdf(self.z(b)) / (b * self.sigma * self.mass)
    }

    fn cdf(&self, b: f64) -> f64 {
        if b <= self.lower {
            return 0.0;
        }
        if b >= self.upper {
            return 1.0;
        }
        ((std_normal_cdf(self.z(b)) - self.cdf_lower) / self.mass).clamp(0.0, 1.0)
    }

    fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.lower;
        }
        if q >= 1.0 {
            return self.upper;
        }
        let z = std_normal_quantile(self.cdf_lower + q * self.mass);
        (self.mu + self.sigma * z).exp().clamp(self.lower, self.upper)
    }

    /// `F(b)/f(b)`; the truncation mass cancels.
    fn cdf_over_pdf(&self, b: f64) -> f64 {
        let z = self.z(b);
        let scale = b * self.sigma;
        if self.lower == 0.0 {
            // Φ(z)/φ(z) = Mills ratio at -z, finite even where both underflow.
            scale * mills_ratio(-z)
        } else {
            let zl = self.z(self.lower);
            // (Φ(z) - Φ(zl)) / φ(z) = m(-z) - m(-zl) φ(zl)/φ(z)
            let ratio = mills_ratio(-z) - mills_ratio(-zl) * (0.5 * (z * z - zl * zl)).exp();
            scale * ratio.max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Uniform {
    lower: f64,
    upper: f64,
}

impl Uniform {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0) || !(upper > lower) || !upper.is_finite() {
            return Err(Error::domain(format!(
                "uniform support must satisfy 0 <= lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }
}

/// Piecewise-linear CDF. Density is the slope of the segment containing `b`
/// (the right-hand segment at interior knots).
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl Tabulated {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("tabulated distribution needs at least two knots"));
        }
        let (knots, cdf): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        if !(knots[0] >= 0.0) {
            return Err(Error::domain("tabulated support must start at b >= 0"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("tabulated knots must be strictly increasing"));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("tabulated CDF must be non-decreasing"));
        }
        if cdf[0] != 0.0 || (cdf[cdf.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::domain("tabulated CDF must run from 0 to 1"));
        }
        Ok(Self { knots, cdf })
    }

    fn segment(&self, b: f64) -> usize {
        let last = self.knots.len() - 2;
        match self.knots.partition_point(|&k| k <= b) {
            0 => 0,
            i => (i - 1).min(last),
        }
    }

    fn slope(&self, seg: usize) -> f64 {
        (self.cdf[seg + 1] - self.cdf[seg]) / (self.knots[seg + 1] - self.knots[seg])
    }

    fn pdf(&self, b: f64) -> f64 {
        self.slope(self.segment(b))
    }

    fn cdf(&self, b: f64) -> f64 {
        let seg = self.segment(b);
        let t = (b - self.knots[seg]) / (self.knots[seg + 1] - self.knots[seg]);
        (self.cdf[seg] + t.clamp(0.0, 1.0) * (self.cdf[seg + 1] - self.cdf[seg])).clamp(0.0, 1.0)
    }

    fn quantile(&self, q: f64) -> f64 {
        // First knot whose CDF reaches q; flat segments resolve to their left end.
        let i = self.cdf.partition_point(|&f| f < q);
        if i == 0 {
            return self.knots[0];
        }
        if i >= self.cdf.len() {
            return self.knots[self.knots.len() - 1];
        }
        let (f0, f1) = (self.cdf[i - 1], self.cdf[i]);
        let (b0, b1) = (self.knots[i - 1], self.knots[i]);
        b0 + (q - f0) / (f1 - f0) * (b1 - b0)
    }
}

/// A prior over unit bids.
#[derive(Debug, Clone, PartialEq)]
pub enum BidDistribution {
    TruncatedLogNormal(TruncatedLogNormal),
    Uniform(Uniform),
    Tabulated(Tabulated),
}

impl BidDistribution {
    pub fn truncated_log_normal(mu: f64, sigma: f64, upper: Option<f64>) -> Result<Self> {
        TruncatedLogNormal::new(mu, sigma, upper, 0.0).map(Self::TruncatedLogNormal)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Uniform::new(lower, upper).map(Self::Uniform)
    }

    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        Tabulated::new(points).map(Self::Tabulated)
    }

    pub fn from_spec(spec: &DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::TruncatedLogNormal {
                mu,
                sigma,
                upper,
                lower,
            } => TruncatedLogNormal::new(*mu, *sigma, *upper, *lower).map(Self::TruncatedLogNormal),
            DistributionSpec::Uniform { lower, upper } => Self::uniform(*lower, *upper),
            DistributionSpec::Tabulated { points } => Self::tabulated(points),
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Self::TruncatedLogNormal(d) => d.lower,
            Self::Uniform(d) => d.lower,
            Self::Tabulated(d) => d.knots[0],
        }
    }

    /// The maximum possible bid `b̄`.
    pub fn upper(&self) -> f64 {
        match self {
            Self::TruncatedLogNormal(d) => d.upper,
            Self::Uniform(d) => d.upper,
            Self::Tabulated(d) => d.knots[d.knots.len() - 1],
        }
    }

    fn check_support(&self, b: f64) -> Result<()> {
        if b.is_nan() || b < self.lower() || b > self.upper() {
            return Err(Error::domain(format!(
                "bid {b} outside support [{}, {}]",
                self.lower(),
                self.upper()
            )));
        }
        Ok(())
    }

    pub fn pdf(&self, b: f64) -> Result<f64> {
        self.check_support(b)?;
        Ok(match self {
            Self::TruncatedLogNormal(d) => d.pdf(b),
            Self::Uniform(d) => 1.0 / (d.upper - d.lower),
            Self::Tabulated(d) => d.pdf(b),
        })
    }

    /// Distribution function; saturates to 0 / 1 outside the support.
    pub fn cdf(&self, b: f64) -> f64 {
        match self {
            Self::TruncatedLogNormal(d) => d.cdf(b),
            Self::Uniform(d) => ((b - d.lower) / (d.upper - d.lower)).clamp(0.0, 1.0),
            Self::Tabulated(d) => {
                if b <= d.knots[0] {
                    0.0
                } else if b >= d.knots[d.knots.len() - 1] {
                    1.0
                } else {
                    d.cdf(b)
                }
            }
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!("probability {q} outside [0, 1]")));
        }
        Ok(match self {
            Self::TruncatedLogNormal(d) => d.quantile(q),
            Self::Uniform(d) => d.lower + q * (d.upper - d.lower),
            Self::Tabulated(d) => d.quantile(q),
        })
    }

    /// Virtual welfare `δ(b) = b + F(b)/f(b)`.
    ///
    /// At the lower edge the limit `δ → b` is returned directly. Log-normal
    /// priors form `F/f` through the Mills ratio and never go singular; other
    /// kinds fail when the density drops below [`MIN_DENSITY`].
    pub fn virtual_welfare(&self, b: f64) -> Result<f64> {
        self.check_support(b)?;
        if b <= self.lower() {
            return Ok(b);
        }
        match self {
            Self::TruncatedLogNormal(d) => Ok(b + d.cdf_over_pdf(b)),
            Self::Uniform(d) => Ok(b + (b - d.lower)),
            Self::Tabulated(d) => {
                let f = d.pdf(b);
                let big_f = d.cdf(b);
                if big_f == 0.0 {
                    return Ok(b);
                }
                if f < MIN_DENSITY {
                    return Err(Error::NumericalSingularity { at: b, density: f });
                }
                Ok(b + big_f / f)
            }
        }
    }

    /// True iff `δ` is strictly increasing on `grid_size` evenly spaced
    /// points spanning the support (end points included).
    pub fn check_regularity(&self, grid_size: usize) -> bool {
        if grid_size < 2 {
            return false;
        }
        let (lo, hi) = (self.lower(), self.upper());
        let step = (hi - lo) / (grid_size - 1) as f64;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..grid_size {
            let b = if i + 1 == grid_size { hi } else { lo + step * i as f64 };
            match self.virtual_welfare(b) {
                Ok(d) if d > prev => prev = d,
                _ => return false,
            }
        }
        true
    }

    /// Inverse-CDF draw from a caller-owned generator.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Open unit interval keeps draws off the support end points.
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        self.quantile(u).expect("u lies in (0, 1)")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// `n` draws from a generator seeded with `seed`.
    pub fn sample_seeded(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[]);
        self.sample(&mut rng, n)
    }
}

impl Default for BidDistribution {
    fn default() -> Self {
        Self::from_spec(&DistributionSpec::default()).expect("default spec is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lognormal() -> BidDistribution {
        BidDistribution::default()
    }

    /// Composite Simpson on a fine mesh; test-only oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + h * i as f64);
        }
        acc * h / 3.0
    }

    fn raw_lognormal_density(b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        let z = b.ln() / 0.3;
        (-0.5 * z * z).exp() / (b * 0.3 * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn uniform_basics() {
        let d = BidDistribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(d.pdf(0.5).unwrap(), 1.0);
        assert_eq!(d.quantile(0.25).unwrap(), 0.25);
        assert!((d.virtual_welfare(0.3).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(1.0), 1.0);
        assert!(d.check_regularity(100));
    }

    #[test]
    fn out_of_support_is_domain_error() {
        let d = lognormal();
        assert!(matches!(d.pdf(2.01 + 0.1), Err(Error::Domain(_))));
        assert!(matches!(d.quantile(1.5), Err(Error::Domain(_))));
        assert!(matches!(d.quantile(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn default_upper_is_99th_percentile() {
        let d = BidDistribution::truncated_log_normal(0.0, 0.3, None).unwrap();
        assert!((d.upper() - 2.01).abs() < 1e-3);
    }

    #[test]
    fn lognormal_density_matches_quadrature_normalisation() {
        // Oracle: normalise the raw density by its own quadrature mass.
        let mass = simpson(raw_lognormal_density, 1e-9, 2.01, 200_000);
        let d = lognormal();
        for b in [0.5, 1.0, 1.5, 2.0] {
            let expected = raw_lognormal_density(b) / mass;
            assert!((d.pdf(b).unwrap() - expected).abs() < 1e-8, "b={b}");
        }
        let total = simpson(|b| d.pdf(b).unwrap(), 0.0, 2.01, 200_000);
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lognormal_virtual_welfare_matches_quadrature_oracle() {
        let d = lognormal();
        let mass = simpson(raw_lognormal_density, 1e-9, 2.01, 200_000);
        for b in [0.3, 0.7, 1.0, 1.8] {
            let big_f = simpson(raw_lognormal_density, 1e-9, b, 200_000) / mass;
            let f = raw_lognormal_density(b) / mass;
            let expected = b + big_f / f;
            let got = d.virtual_welfare(b).unwrap();
            assert!((got - expected).abs() < 1e-7, "b={b}: {got} vs {expected}");
        }
    }

    #[test]
    fn virtual_welfare_tends_to_bid_at_lower_edge() {
        let d = lognormal();
        for eps in [1e-3, 1e-6, 1e-9] {
            let v = d.virtual_welfare(eps).unwrap();
            assert!(v >= eps && v - eps < 10.0 * eps, "eps={eps} v={v}");
        }
        assert_eq!(d.virtual_welfare(0.0).unwrap(), 0.0);
    }

    #[test]
    fn lower_truncated_lognormal_is_consistent() {
        let d = BidDistribution::from_spec(&DistributionSpec::TruncatedLogNormal {
            mu: 0.0,
            sigma: 0.3,
            upper: Some(2.0),
            lower: 0.5,
        })
        .unwrap();
        assert_eq!(d.cdf(0.5), 0.0);
        assert!((d.quantile(d.cdf(1.1)).unwrap() - 1.1).abs() < 1e-10);
        // F/f from the distribution functions directly.
        for b in [0.6, 1.0, 1.9] {
            let expected = b + d.cdf(b) / d.pdf(b).unwrap();
            assert!((d.virtual_welfare(b).unwrap() - expected).abs() < 1e-10);
        }
        assert!(d.check_regularity(500));
    }

    #[test]
    fn lognormal_is_regular() {
        assert!(lognormal().check_regularity(1000));
    }

    #[test]
    fn tabulated_with_non_monotone_virtual_welfare_is_irregular() {
        let d = BidDistribution::tabulated(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.6), (3.0, 1.0)])
            .unwrap();
        assert!(!d.check_regularity(100));
        let flat = BidDistribution::tabulated(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!(flat.check_regularity(100));
        assert!((flat.virtual_welfare(0.4).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tabulated_zero_density_segment_is_singular() {
        let d = BidDistribution::tabulated(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.5), (3.0, 1.0)])
            .unwrap();
        assert!(matches!(
            d.virtual_welfare(1.5),
            Err(Error::NumericalSingularity { .. })
        ));
        assert!(!d.check_regularity(10));
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(BidDistribution::tabulated(&[(0.0, 0.0)]).is_err());
        assert!(BidDistribution::tabulated(&[(0.0, 0.0), (1.0, 0.9)]).is_err());
        assert!(BidDistribution::tabulated(&[(1.0, 0.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = lognormal();
        assert_eq!(d.sample_seeded(7, 5), d.sample_seeded(7, 5));
        assert_ne!(d.sample_seeded(7, 5), d.sample_seeded(8, 5));
    }

    #[test]
    fn mills_ratio_is_continuous_at_switch() {
        let below = std_normal_cdf(-7.999_999_999_9) / std_normal_pdf(7.999_999_999_9);
        assert!((mills_ratio(8.0) / below - 1.0).abs() < 1e-8, "{} {below}", mills_ratio(8.0));
        // Asymptotically 1/t.
        assert!((mills_ratio(1e3) * 1e3 - 1.0).abs() < 1e-5);
    }
}
